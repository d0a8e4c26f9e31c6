"""Translate-and-Fill data machinery.

A filler maps ``utterance | signature`` to a full parse. Training instances
come from English gold data, inference instances swap in a translation, and
filler outputs are validated and assembled into silver examples.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Protocol, Sequence

from .alignment import AlignmentModel, viterbi_align
from .corpus_io import Example
from .parse_tree import (
    MalformedParse,
    ParseTree,
    Utterance,
    extract_signature,
    leaf_slots,
    normalize_text,
    parse,
    serialize,
    signatures_equal,
)
from .tap import UnanchoredSlot, project_parse

SEPARATOR = " | "

OK = "ok"
MALFORMED = "malformed"
SIGNATURE_MISMATCH = "signature_mismatch"
HALLUCINATION = "hallucination"
VERDICTS = (OK, MALFORMED, SIGNATURE_MISMATCH, HALLUCINATION)

KEEP_ALL_PARSEABLE = "keep-all-parseable"
STRICT = "strict"


class MissingTranslation(KeyError):
    pass


class FillerUnavailable(RuntimeError):
    pass


@dataclass(frozen=True)
class FillerTemplate:
    separator: str = SEPARATOR
    signature_first: bool = False

    def join(self, utterance: str, signature: str) -> str:
        if self.signature_first:
            return signature + self.separator + utterance
        return utterance + self.separator + signature

    def split(self, text: str) -> tuple[str, str]:
        # labels cannot contain the separator, so split on the signature side
        if self.signature_first:
            sig, sep, utt = text.partition(self.separator)
        else:
            utt, sep, sig = text.rpartition(self.separator)
        if not sep:
            raise ValueError(f"separator {self.separator!r} not found")
        return utt, sig


DEFAULT_TEMPLATE = FillerTemplate()


@dataclass
class FillerInstance:
    input: str
    target: str | None = None
    id: str = ""
    language: str = "en"
    template: FillerTemplate = DEFAULT_TEMPLATE

    @property
    def utterance(self) -> str:
        return self.template.split(self.input)[0]

    @property
    def signature(self) -> ParseTree:
        return parse(self.template.split(self.input)[1])

    def to_record(self) -> dict:
        rec = {"id": self.id, "language": self.language, "input": self.input}
        if self.target is not None:
            rec["target"] = self.target
        return rec

    @classmethod
    def from_record(cls, rec: Mapping, template: FillerTemplate = DEFAULT_TEMPLATE) -> "FillerInstance":
        return cls(rec["input"], rec.get("target"), str(rec.get("id", "")), rec.get("language", "en"), template)


def _utterance_text(utt: Utterance, tokenized: bool) -> str:
    return utt.text if tokenized else utt.raw


def build_filler_train(
    example: Example, template: FillerTemplate = DEFAULT_TEMPLATE, tokenized: bool = True
) -> FillerInstance:
    if example.parse is None:
        raise ValueError(f"example {example.id} has no parse")
    sig = serialize(extract_signature(example.parse))
    return FillerInstance(
        template.join(_utterance_text(example.utterance, tokenized), sig),
        serialize(example.parse),
        example.id,
        example.language,
        template,
    )


def build_filler_infer(
    translation: Utterance | None,
    source_example: Example,
    template: FillerTemplate = DEFAULT_TEMPLATE,
    tokenized: bool = True,
) -> FillerInstance:
    if translation is None:
        raise MissingTranslation(source_example.id)
    if source_example.parse is None:
        raise ValueError(f"example {source_example.id} has no parse")
    sig = serialize(extract_signature(source_example.parse))
    return FillerInstance(
        template.join(_utterance_text(translation, tokenized), sig),
        None,
        source_example.id,
        translation.language,
        template,
    )


def build_infer_batch(
    examples: Iterable[Example],
    translations: Mapping[str, Utterance],
    template: FillerTemplate = DEFAULT_TEMPLATE,
    tokenized: bool = True,
    strict: bool = True,
    missing: list | None = None,
) -> list[FillerInstance]:
    out = []
    for ex in examples:
        try:
            out.append(build_filler_infer(translations.get(ex.id), ex, template, tokenized))
        except MissingTranslation:
            if strict:
                raise
            if missing is not None:
                missing.append(ex.id)
    return out


# ---------------------------------------------------------------- fillers


class Filler(Protocol):
    def fill_batch(self, instances: Sequence[FillerInstance]) -> list[str]: ...


class EchoFiller:
    """Returns the input signature unchanged (a degenerate backend)."""

    def fill_batch(self, instances):
        return [inst.template.split(inst.input)[1] for inst in instances]


class ReplayFiller:
    """Serves precomputed outputs, keyed by the exact input string.

    The file is JSON lines with ``input`` and ``output`` keys, which is how
    outputs of an external neural filler enter the pipeline.
    """

    def __init__(self, outputs: Mapping[str, str]):
        self.outputs = dict(outputs)

    @classmethod
    def from_file(cls, path) -> "ReplayFiller":
        outputs = {}
        with open(path, encoding="utf-8") as f:
            for line in f:
                if line.strip():
                    rec = json.loads(line)
                    outputs[rec["input"]] = rec["output"]
        return cls(outputs)

    def fill_batch(self, instances):
        try:
            return [self.outputs[inst.input] for inst in instances]
        except KeyError as e:
            raise FillerUnavailable(f"no replayed output for {e.args[0]!r}") from None


class ReferenceFiller:
    """Test double that fills slots by alignment projection.

    It looks up the English source example by instance id, aligns it with the
    utterance in the instance and projects each slot, keeping the raw
    projection (no filtering, no trimming). This is not a model of the neural
    filler; it only exercises the interface.
    """

    def __init__(self, model: AlignmentModel, sources: Mapping[str, Example], mode: str = "hmm"):
        self.model = model
        self.sources = sources
        self.mode = mode if model.has_hmm else "model1"

    def _fill(self, inst: FillerInstance) -> str:
        src = self.sources.get(inst.id)
        if src is None:
            raise FillerUnavailable(f"no source example for id {inst.id!r}")
        utt, sig = inst.template.split(inst.input)
        tgt_tokens = utt.split()
        src_tokens = src.utterance.tokens or src.utterance.raw.split()
        if not tgt_tokens:
            return sig
        links = viterbi_align(self.model, src_tokens, tgt_tokens, self.mode)
        try:
            outcome = project_parse(src.parse, src_tokens, tgt_tokens, links)
        except UnanchoredSlot:
            return sig
        return serialize(outcome.raw_tree)

    def fill_batch(self, instances):
        return [self._fill(inst) for inst in instances]


def fill(instance: FillerInstance, filler: Filler) -> str:
    return fill_many([instance], filler)[0]


def fill_many(instances: Sequence[FillerInstance], filler: Filler, batch_size: int = 64) -> list[str]:
    """Run ``filler`` over ``instances`` in batches, preserving order."""
    out: list[str] = []
    for start in range(0, len(instances), batch_size):
        batch = list(instances[start : start + batch_size])
        try:
            result = filler.fill_batch(batch)
        except FillerUnavailable:
            raise
        except Exception as e:
            raise FillerUnavailable(str(e)) from e
        if len(result) != len(batch):
            raise FillerUnavailable(f"filler returned {len(result)} outputs for {len(batch)} inputs")
        out.extend(result)
    return out


# ---------------------------------------------------------------- validation


@dataclass
class FillerVerdict:
    kind: str
    details: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.kind == OK


def validate_filler_output(
    output: str,
    instance: FillerInstance,
    form: str = "NFC",
    lowercase: bool = False,
) -> FillerVerdict:
    """Classify a filler output: malformed, signature mismatch, hallucination, or ok.

    Hallucination means a slot value that is not a character substring of
    the (normalized) instance utterance.
    """
    try:
        tree = parse(output)
    except MalformedParse as e:
        return FillerVerdict(MALFORMED, [str(e)])
    expected = instance.signature
    got = extract_signature(tree)
    if not signatures_equal(got, expected, ignore_order=True):
        return FillerVerdict(SIGNATURE_MISMATCH, [serialize(got), serialize(expected)])
    utterance = normalize_text(instance.utterance, form, lowercase)
    bad = []
    for slot in leaf_slots(tree):
        if slot.tokens and normalize_text(slot.text, form, lowercase) not in utterance:
            bad.append(f"{slot.label}={slot.text}")
    if bad:
        return FillerVerdict(HALLUCINATION, bad)
    return FillerVerdict(OK)


def assemble_silver(
    translation: Utterance,
    output: str,
    verdict: FillerVerdict,
    policy: str = KEEP_ALL_PARSEABLE,
    example_id: str = "",
    split: str = "train",
) -> Example | None:
    """Turn a filler output into a silver example, or drop it.

    Malformed outputs are always dropped, and so are outputs with an empty
    leaf slot (they would change the slot set). ``strict`` additionally
    drops every verdict other than ok.
    """
    if policy not in (KEEP_ALL_PARSEABLE, STRICT):
        raise ValueError(f"unknown policy {policy!r}")
    if verdict.kind == MALFORMED or (policy == STRICT and not verdict.ok):
        return None
    tree = parse(output)
    if any(s.is_empty for s in leaf_slots(tree)):
        return None
    tokens = translation.tokens if translation.tokens is not None else translation.raw.split()
    return Example(
        id=example_id,
        utterance=Utterance(translation.raw, list(tokens), translation.language, translation.retokenized),
        parse=tree,
        split=split,
        provenance="silver-taf",
    )


# ---------------------------------------------------------------- reporting


@dataclass
class ErrorReport:
    totals: Counter = field(default_factory=Counter)
    errors: Counter = field(default_factory=Counter)
    by_class: Counter = field(default_factory=Counter)
    by_language_class: Counter = field(default_factory=Counter)

    @property
    def total(self) -> int:
        return sum(self.totals.values())

    @property
    def total_errors(self) -> int:
        return sum(self.errors.values())

    def percent(self, language: str | None = None) -> float:
        if language is None:
            return 100.0 * self.total_errors / self.total if self.total else 0.0
        n = self.totals[language]
        return 100.0 * self.errors[language] / n if n else 0.0

    def class_percent(self, kind: str) -> float:
        """Share of ``kind`` among all errors."""
        return 100.0 * self.by_class[kind] / self.total_errors if self.total_errors else 0.0

    def to_table(self) -> str:
        lines = [f"{'language':<10}{'errors':>20}"]
        for lang in sorted(self.totals):
            lines.append(f"{lang:<10}{f'{self.errors[lang]} ({self.percent(lang):.2f}%)':>20}")
        lines.append(f"{'total':<10}{f'{self.total_errors} ({self.percent():.2f}%)':>20}")
        lines.append("")
        for kind in VERDICTS[1:]:
            lines.append(f"{kind:<20}{self.by_class[kind]:>8}{self.class_percent(kind):>9.2f}%")
        return "\n".join(lines)

    def to_record(self) -> dict:
        return {
            "languages": {
                lang: {
                    "total": self.totals[lang],
                    "errors": self.errors[lang],
                    "percent": self.percent(lang),
                    "classes": {k: self.by_language_class[(lang, k)] for k in VERDICTS[1:]},
                }
                for lang in sorted(self.totals)
            },
            "total": self.total,
            "total_errors": self.total_errors,
            "percent": self.percent(),
            "classes": {k: self.by_class[k] for k in VERDICTS[1:]},
        }


def error_report(verdicts: Iterable[tuple[str, FillerVerdict]]) -> ErrorReport:
    report = ErrorReport()
    for lang, verdict in verdicts:
        report.totals[lang] += 1
        if not verdict.ok:
            report.errors[lang] += 1
            report.by_class[verdict.kind] += 1
            report.by_language_class[(lang, verdict.kind)] += 1
    return report
