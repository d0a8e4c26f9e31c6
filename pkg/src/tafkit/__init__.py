"""Tools for building multilingual silver data for task-oriented semantic parsers.

Translate-and-Fill instance construction and validation, a Translate-Align-
Project baseline on top of IBM Model 1 / HMM word alignment, and the usual
parsing metrics (exact match, intent accuracy, micro slot F1).
"""

from .parse_tree import (
    IntentNode,
    MalformedParse,
    ParseTree,
    Signature,
    SlotNode,
    Utterance,
    extract_signature,
    leaf_slots,
    normalize_text,
    parse,
    serialize,
    signatures_equal,
)
from .corpus_io import (
    BioSequence,
    Example,
    FormatError,
    JoinError,
    TsvColumns,
    bio_chunks,
    bio_to_tree,
    read_dataset,
    tokenization_match_stats,
    write_dataset,
)
from .alignment import (
    AlignmentModel,
    ParallelCorpus,
    needleman_wunsch,
    train_hmm,
    train_ibm1,
    viterbi_align,
)
from .tap import (
    FilterReport,
    LexiconPosTagger,
    PosTaggedUtterance,
    ProjectionOutcome,
    TapConfig,
    pos_trim,
    project_parse,
    run_tap,
    target_postprocess,
    whitespace_tokenization_filter,
)
from .taf import (
    EchoFiller,
    FillerInstance,
    FillerVerdict,
    ReferenceFiller,
    ReplayFiller,
    assemble_silver,
    build_filler_infer,
    build_filler_train,
    error_report,
    fill,
    validate_filler_output,
)
from .evaluation import (
    MetricsReport,
    aggregate,
    evaluate,
    exact_match,
    ground_tree_to_bio,
    intent_accuracy,
    slot_f1,
)

__version__ = "0.1.0"
