"""Translate-Align-Project: carry slot annotations across a word alignment.

The pipeline for one example is: source tokenization check, whitespace
tokenization check on the target, POS tokenization check, alignment,
projection (span-split and slot-set filters), POS boundary trimming and a
final slot-set check. Every input lands either in the silver output or in
exactly one rejection bucket of the :class:`FilterReport`.
"""

from __future__ import annotations

import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Protocol

from .alignment import AlignmentModel, viterbi_align
from .corpus_io import Example
from .parse_tree import (
    ParseTree,
    SlotNode,
    Utterance,
    leaf_slots,
    map_leaves,
    normalize_text,
    slot_label_counts,
)

SOURCE_TOKENIZATION = "source-tokenization-mismatch"
NON_WHITESPACE = "non-whitespace-target-tokenization"
POS_TOKENIZATION = "pos-tokenization-mismatch"
SPAN_SPLIT = "span-split"
SLOT_SET = "slot-set-mismatch"
UNANCHORED = "unanchored-source-slot"
MISSING_TRANSLATION = "missing-translation"

REASONS = (
    SOURCE_TOKENIZATION,
    NON_WHITESPACE,
    POS_TOKENIZATION,
    SPAN_SPLIT,
    SLOT_SET,
    UNANCHORED,
    MISSING_TRANSLATION,
)

TRIM_TAGS = frozenset({"ADP", "DET"})

_TURKISH = str.maketrans("ğĞıİöÖüÜşŞçÇ", "gGiIoOuUsScC")


class UnanchoredSlot(ValueError):
    pass


# ---------------------------------------------------------------- POS tagging


@dataclass
class PosTaggedUtterance:
    tokens: list[str]
    tags: list[str]

    def __post_init__(self):
        if len(self.tokens) != len(self.tags):
            raise ValueError("tokens and tags differ in length")


class PosTagger(Protocol):
    def tag(self, text: str, language: str) -> PosTaggedUtterance: ...


# Closed-class word lists; enough for fixtures and demos, not a real tagger.
DEFAULT_LEXICON = {
    "fr": {
        "ADP": "à a au aux de du des en pour par avec sans sur sous dans chez vers entre".split(),
        "DET": "le la les l' un une des ce cet cette ces mon ma mes ton ta tes son sa ses notre nos votre vos leur leurs".split(),
    },
    "es": {
        "ADP": "a al de del en para por con sin sobre entre hacia desde hasta".split(),
        "DET": "el la los las un una unos unas este esta estos estas mi mis tu tus su sus".split(),
    },
    "it": {
        "ADP": "a al alla di del della da dal in nel nella per con su tra fra".split(),
        "DET": "il lo la i gli le un uno una questo questa mio mia".split(),
    },
    "de": {
        "ADP": "an am auf aus bei für in im mit nach über um von vom zu zum zur".split(),
        "DET": "der die das den dem des ein eine einen einem einer mein meine".split(),
    },
    "en": {
        "ADP": "at by for from in of on to with about".split(),
        "DET": "a an the this that these those my your his her our their some".split(),
    },
}


def _is_punct(token: str) -> bool:
    return all(unicodedata.category(c).startswith("P") for c in token)


class LexiconPosTagger:
    """Whitespace tokenizer plus closed word lists per language.

    Tokens outside the lists are tagged ``OTHER`` (or ``PUNCT``).
    """

    def __init__(self, lexicon: Mapping[str, Mapping[str, Iterable[str]]] | None = None):
        lexicon = DEFAULT_LEXICON if lexicon is None else lexicon
        self.lexicon = {
            lang: {w.lower(): tag for tag, words in tags.items() for w in words}
            for lang, tags in lexicon.items()
        }

    def tag_tokens(self, tokens: list[str], language: str) -> PosTaggedUtterance:
        table = self.lexicon.get(language, {})
        tags = []
        for t in tokens:
            if _is_punct(t):
                tags.append("PUNCT")
            else:
                tags.append(table.get(t.lower(), "OTHER"))
        return PosTaggedUtterance(list(tokens), tags)

    def tag(self, text: str, language: str) -> PosTaggedUtterance:
        return self.tag_tokens(text.split(), language)


# ---------------------------------------------------------------- text handling


def whitespace_tokenization_filter(raw_target: str, target_tokens: list[str]) -> bool:
    """Keep iff splitting the raw text on whitespace gives the same tokens."""
    split = raw_target.split()
    return bool(split) and split == list(target_tokens)


def target_postprocess(text_or_tokens, language: str = "", lowercase: bool = False, turkish_ascii: bool = False):
    """Lowercase and/or map Turkish letters to ASCII; keeps str/list shape."""

    def one(s: str) -> str:
        if turkish_ascii:
            s = s.translate(_TURKISH)
        if lowercase:
            s = s.lower()
        return s

    if isinstance(text_or_tokens, str):
        return one(text_or_tokens)
    return [one(t) for t in text_or_tokens]


def postprocess_utterance(utt: Utterance, options: Mapping | None) -> Utterance:
    if not options:
        return utt
    kw = {k: bool(options.get(k, False)) for k in ("lowercase", "turkish_ascii")}
    return Utterance(
        target_postprocess(utt.raw, utt.language, **kw),
        None if utt.tokens is None else target_postprocess(utt.tokens, utt.language, **kw),
        utt.language,
        utt.retokenized,
    )


# ---------------------------------------------------------------- projection


def _find(tokens: list[str], value: list[str], start: int = 0) -> list[int]:
    n = len(value)
    return [k for k in range(start, len(tokens) - n + 1) if tokens[k : k + n] == value]


def anchor_slots(tree: ParseTree, tokens: list[str]) -> list[tuple[int, int] | None]:
    """Token ranges ``(start, end)`` (end exclusive) for each leaf slot.

    Slots are matched left to right to the leftmost unclaimed occurrence of
    their value (NFC, then case-insensitively). Empty slots map to ``None``.
    Raises :class:`UnanchoredSlot` if a value cannot be found.
    """
    variants = [
        [normalize_text(t) for t in tokens],
        [normalize_text(t, lowercase=True) for t in tokens],
    ]
    claimed = [False] * len(tokens)
    spans: list[tuple[int, int] | None] = []
    for slot in leaf_slots(tree):
        if slot.is_empty:
            spans.append(None)
            continue
        found = None
        for lower, toks in zip((False, True), variants):
            value = [normalize_text(t, lowercase=lower) for t in slot.tokens]
            for k in _find(toks, value):
                if not any(claimed[k : k + len(value)]):
                    found = (k, k + len(value))
                    break
            if found:
                break
        if found is None:
            raise UnanchoredSlot(f"slot {slot.label} value {slot.text!r} not in utterance")
        for k in range(*found):
            claimed[k] = True
        spans.append(found)
    return spans


def _rebuild(tree: ParseTree, tokens: list[str], spans: list[tuple[int, int] | None]) -> ParseTree:
    it = iter(spans)

    def fill(slot: SlotNode) -> SlotNode:
        span = next(it)
        if span is None:
            return SlotNode(slot.label)
        return SlotNode(slot.label, tuple(tokens[span[0] : span[1]]))

    return map_leaves(tree, fill)


@dataclass
class ProjectionOutcome:
    """Either a projected tree (with target spans per leaf) or a rejection.

    ``raw_tree`` keeps the projected tree even when rejected, for inspection
    and for the reference filler.
    """

    tree: ParseTree | None = None
    rejection_reason: str | None = None
    spans: list[tuple[int, int] | None] = field(default_factory=list)
    raw_tree: ParseTree | None = None
    details: str = ""

    @property
    def ok(self) -> bool:
        return self.tree is not None


def _overlapping(spans) -> bool:
    seen = sorted(s for s in spans if s is not None)
    return any(b[0] < a[1] for a, b in zip(seen, seen[1:]))


def project_parse(
    source_parse: ParseTree,
    source_tokens: list[str],
    target_tokens: list[str],
    links: Iterable[tuple[int, int]],
) -> ProjectionOutcome:
    """Project each leaf slot through ``links`` onto the target tokens.

    A slot covering source range [i, j] takes the closure [min, max] of the
    target indices linked to it. Rejections: ``span-split`` if a target index
    inside that closure links outside [i, j]; ``slot-set-mismatch`` if a slot
    ends up empty or two projected slots overlap.
    """
    source_spans = anchor_slots(source_parse, list(source_tokens))
    by_target: dict[int, set[int]] = {}
    for i, j in links:
        by_target.setdefault(j, set()).add(i)
    target_spans: list[tuple[int, int] | None] = []
    split_labels = []
    for slot, span in zip(leaf_slots(source_parse), source_spans):
        if span is None:
            target_spans.append(None)
            continue
        lo, hi = span
        hits = sorted(j for j, srcs in by_target.items() if any(lo <= i < hi for i in srcs))
        if not hits:
            target_spans.append(None)
            continue
        a, b = hits[0], hits[-1]
        for k in range(a + 1, b):
            if any(not (lo <= i < hi) for i in by_target.get(k, ())):
                split_labels.append(slot.label)
                break
        target_spans.append((a, b + 1))
    raw = _rebuild(source_parse, list(target_tokens), target_spans)
    if split_labels:
        return ProjectionOutcome(None, SPAN_SPLIT, target_spans, raw, ",".join(split_labels))
    if _overlapping(target_spans):
        return ProjectionOutcome(None, SLOT_SET, target_spans, raw, "overlapping spans")
    if slot_label_counts(raw, non_empty=True) != slot_label_counts(source_parse, non_empty=True):
        return ProjectionOutcome(None, SLOT_SET, target_spans, raw, "slot set changed")
    return ProjectionOutcome(raw, None, target_spans, raw)


def pos_trim(
    tree: ParseTree,
    target_pos: PosTaggedUtterance,
    exempt_labels: Iterable[str] = ("DATE_TIME",),
    spans: list[tuple[int, int] | None] | None = None,
    trim_tags: Iterable[str] = TRIM_TAGS,
) -> ParseTree:
    """Strip ADP/DET tokens from slot boundaries, except for exempt labels.

    ``spans`` are the target ranges of the leaf slots (as returned by
    :func:`project_parse`); when omitted they are recovered by matching.
    A slot trimmed down to nothing is left empty.
    """
    exempt = set(exempt_labels)
    trim = set(trim_tags)
    if spans is None:
        spans = anchor_slots(tree, target_pos.tokens)
    it = iter(spans)

    def trim_slot(slot: SlotNode) -> SlotNode:
        span = next(it)
        if span is None or slot.label in exempt:
            return slot
        a, b = span
        while a < b and target_pos.tags[a] in trim:
            a += 1
        while b > a and target_pos.tags[b - 1] in trim:
            b -= 1
        return SlotNode(slot.label, tuple(target_pos.tokens[a:b]))

    return map_leaves(tree, trim_slot)


# ---------------------------------------------------------------- pipeline


@dataclass
class FilterReport:
    total: int = 0
    kept: int = 0
    rejected: Counter = field(default_factory=Counter)

    def add(self, reason: str | None) -> None:
        self.total += 1
        if reason is None:
            self.kept += 1
        else:
            self.rejected[reason] += 1

    def __add__(self, other: "FilterReport") -> "FilterReport":
        return FilterReport(self.total + other.total, self.kept + other.kept, self.rejected + other.rejected)

    def fraction(self, reason: str) -> float:
        return self.rejected[reason] / self.total if self.total else 0.0

    @property
    def conserved(self) -> bool:
        return self.kept + sum(self.rejected.values()) == self.total

    def rows(self):
        for reason in REASONS:
            if self.rejected[reason]:
                yield reason, self.rejected[reason], 100.0 * self.fraction(reason)
        yield "kept", self.kept, 100.0 * self.kept / self.total if self.total else 0.0

    def to_table(self) -> str:
        lines = [f"{'reason':<36}{'count':>8}{'percent':>10}"]
        for reason, count, pct in self.rows():
            lines.append(f"{reason:<36}{count:>8}{pct:>9.2f}%")
        lines.append(f"{'total':<36}{self.total:>8}")
        return "\n".join(lines)

    def to_record(self) -> dict:
        return {
            "total": self.total,
            "kept": self.kept,
            "rejected": {r: self.rejected[r] for r in REASONS if self.rejected[r]},
            "percent": {r: 100.0 * self.fraction(r) for r in REASONS if self.rejected[r]},
        }


def whitespace_tokenize(text: str) -> list[str]:
    return text.split()


@dataclass
class TapConfig:
    mode: str = "hmm"
    check_source_tokenization: bool = True
    whitespace_only: bool = True
    check_pos_tokenization: bool = True
    pos_trim: bool = True
    exempt_labels: tuple[str, ...] = ("DATE_TIME",)
    source_tokenizer: Callable[[str], list[str]] = whitespace_tokenize

    @classmethod
    def from_dict(cls, d: Mapping) -> "TapConfig":
        d = dict(d)
        if "exempt_labels" in d:
            d["exempt_labels"] = tuple(d["exempt_labels"])
        return cls(**d)


def tap_example(
    example: Example,
    translation: Utterance | None,
    model: AlignmentModel,
    tagger,
    config: TapConfig,
) -> tuple[Example | None, str | None]:
    """Run one example through the pipeline: (silver example, None) or (None, reason)."""
    if translation is None:
        return None, MISSING_TRANSLATION
    src_tokens = example.utterance.tokens
    if src_tokens is None:
        src_tokens = example.utterance.raw.split()
    if config.check_source_tokenization and config.source_tokenizer(example.utterance.raw) != list(src_tokens):
        return None, SOURCE_TOKENIZATION
    tgt_tokens = translation.tokens if translation.tokens is not None else translation.raw.split()
    if config.whitespace_only and not whitespace_tokenization_filter(translation.raw, tgt_tokens):
        return None, NON_WHITESPACE
    pos = None
    if config.pos_trim:
        if isinstance(tagger, Mapping):
            pos = tagger.get(example.id)
        else:
            pos = tagger.tag(translation.raw, translation.language)
        if pos is None or (config.check_pos_tokenization and pos.tokens != list(tgt_tokens)):
            return None, POS_TOKENIZATION
    links = viterbi_align(model, list(src_tokens), list(tgt_tokens), config.mode)
    try:
        outcome = project_parse(example.parse, list(src_tokens), list(tgt_tokens), links)
    except UnanchoredSlot:
        return None, UNANCHORED
    if not outcome.ok:
        return None, outcome.rejection_reason
    tree = outcome.tree
    if config.pos_trim:
        tree = pos_trim(tree, pos, config.exempt_labels, outcome.spans)
        if slot_label_counts(tree, non_empty=True) != slot_label_counts(example.parse, non_empty=True):
            return None, SLOT_SET
    silver = Example(
        id=example.id,
        utterance=Utterance(translation.raw, list(tgt_tokens), translation.language, translation.retokenized),
        parse=tree,
        split=example.split,
        provenance="silver-tap",
    )
    return silver, None


def run_tap(
    examples: Iterable[Example],
    translations: Mapping[str, Utterance],
    model: AlignmentModel,
    tagger=None,
    config: TapConfig | None = None,
) -> tuple[list[Example], FilterReport]:
    """Project a batch; per-example failures are counted, never raised.

    ``tagger`` is either a :class:`PosTagger` or a mapping from example id to
    :class:`PosTaggedUtterance`.
    """
    config = config or TapConfig()
    tagger = tagger if tagger is not None else LexiconPosTagger()
    report = FilterReport()
    silver = []
    for ex in examples:
        out, reason = tap_example(ex, translations.get(ex.id), model, tagger, config)
        report.add(reason)
        if out is not None:
            silver.append(out)
    return silver, report
