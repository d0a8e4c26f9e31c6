"""Dataset readers/writers and BIO handling.

Three on-disk formats are supported:

``canonical``
    One JSON object per line with the fixed key order
    ``id, locale, split, utterance, tokens, parse, provenance`` followed by the
    optional ``retokenized`` and ``meta`` keys.
``conll-bio``
    Blank-line separated blocks. Header lines ``# intent = <label>`` (required)
    and optionally ``# id = ...``, ``# locale = ...``, ``# split = ...``; body
    lines ``token<TAB>tag``.
``mtop-tsv``
    Tab separated, the column layout is given by :class:`TsvColumns`.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .parse_tree import (
    IntentNode,
    ParseTree,
    SlotNode,
    Utterance,
    leaf_slots,
    parse,
    serialize,
)

SPLITS = ("train", "validation", "test")
PROVENANCES = ("gold", "silver-taf", "silver-tap")
FORMATS = ("canonical", "conll-bio", "mtop-tsv")

_TAG_RE = re.compile(r"O|[BI]-\S+")


class FormatError(ValueError):
    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = f"{path}:{line}: " if path is not None and line is not None else (
            f"line {line}: " if line is not None else ""
        )
        super().__init__(where + message)


class JoinError(KeyError):
    pass


@dataclass
class BioSequence:
    tokens: list[str]
    tags: list[str]
    intent: str

    def __post_init__(self):
        if len(self.tokens) != len(self.tags):
            raise ValueError(f"{len(self.tokens)} tokens but {len(self.tags)} tags")
        for tag in self.tags:
            if not _TAG_RE.fullmatch(tag):
                raise ValueError(f"bad BIO tag {tag!r}")


def bio_chunks(tags: Iterable[str]) -> list[tuple[str, int, int]]:
    """Maximal chunks as ``(label, start, end)`` with ``end`` exclusive.

    Lenient rule: ``I-X`` continues a chunk only when the open chunk is
    labelled ``X``; otherwise it opens a new chunk.
    """
    chunks = []
    label, start = None, 0
    i = -1
    for i, tag in enumerate(tags):
        if tag == "O":
            if label is not None:
                chunks.append((label, start, i))
            label = None
            continue
        prefix, lab = tag[0], tag[2:]
        if prefix == "B" or lab != label:
            if label is not None:
                chunks.append((label, start, i))
            label, start = lab, i
    if label is not None:
        chunks.append((label, start, i + 1))
    return chunks


def chunks_to_tags(n: int, chunks: Iterable[tuple[str, int, int]]) -> list[str]:
    tags = ["O"] * n
    for label, start, end in chunks:
        tags[start] = "B-" + label
        for k in range(start + 1, end):
            tags[k] = "I-" + label
    return tags


def bio_to_tree(seq: BioSequence) -> ParseTree:
    """Flat tree: one slot per maximal chunk, labels upper-cased."""
    slots = [
        SlotNode(label.upper(), tuple(seq.tokens[start:end]))
        for label, start, end in bio_chunks(seq.tags)
    ]
    return ParseTree(IntentNode(seq.intent.upper(), tuple(slots)))


def label_case_map(seq: BioSequence) -> dict[str, str]:
    """Upper-cased label -> original spelling, for the ``meta`` sidecar."""
    out = {seq.intent.upper(): seq.intent}
    for tag in seq.tags:
        if tag != "O":
            out[tag[2:].upper()] = tag[2:]
    return {k: v for k, v in out.items() if k != v}


@dataclass
class Example:
    id: str
    utterance: Utterance
    parse: ParseTree | None = None
    split: str = "train"
    provenance: str = "gold"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValueError(f"unknown split {self.split!r}")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")

    @property
    def language(self) -> str:
        return self.utterance.language

    @property
    def unanchored(self) -> bool:
        """True when some slot token is missing from the token list."""
        if self.parse is None or self.utterance.tokens is None:
            return False
        vocab = set(self.utterance.tokens)
        return any(t not in vocab for s in leaf_slots(self.parse) for t in s.tokens)


# ---------------------------------------------------------------- canonical


def example_to_record(ex: Example) -> dict:
    rec = {
        "id": ex.id,
        "locale": ex.utterance.language,
        "split": ex.split,
        "utterance": ex.utterance.raw,
        "tokens": ex.utterance.tokens,
        "parse": None if ex.parse is None else serialize(ex.parse),
        "provenance": ex.provenance,
    }
    if ex.utterance.retokenized:
        rec["retokenized"] = True
    if ex.meta:
        rec["meta"] = ex.meta
    return rec


def example_from_record(rec: dict) -> Example:
    try:
        utt = Utterance(
            raw=rec["utterance"],
            tokens=None if rec.get("tokens") is None else list(rec["tokens"]),
            language=rec["locale"],
            retokenized=bool(rec.get("retokenized", False)),
        )
        tree = None if rec.get("parse") is None else parse(rec["parse"])
        return Example(
            id=str(rec["id"]),
            utterance=utt,
            parse=tree,
            split=rec.get("split", "train"),
            provenance=rec.get("provenance", "gold"),
            meta=dict(rec.get("meta") or {}),
        )
    except KeyError as e:
        raise FormatError(f"missing field {e.args[0]!r}") from None


def dumps_record(ex: Example) -> str:
    return json.dumps(example_to_record(ex), ensure_ascii=False)


def write_dataset(examples: Iterable[Example], path, format: str = "canonical") -> int:
    """Write examples in canonical form; returns the number written."""
    if format != "canonical":
        raise ValueError("only the canonical format can be written")
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for ex in examples:
            f.write(dumps_record(ex) + "\n")
            n += 1
    return n


# ---------------------------------------------------------------- readers


@dataclass
class TsvColumns:
    """Column indices for tab-separated data; ``None`` disables a column."""

    id: int | None = None
    utterance: int = 3
    parse: int = 6
    locale: int | None = 5
    tokens: int | None = 7
    split: int | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "TsvColumns":
        return cls(**d)


def _tokens_from_cell(cell: str) -> list[str]:
    cell = cell.strip()
    if cell.startswith("{") or cell.startswith("["):
        try:
            obj = json.loads(cell)
        except json.JSONDecodeError:
            obj = None
        if isinstance(obj, dict) and "tokens" in obj:
            return [str(t) for t in obj["tokens"]]
        if isinstance(obj, list):
            return [str(t) for t in obj]
    return cell.split()


def _read_canonical(f, path) -> Iterator[Example | FormatError]:
    for lineno, line in enumerate(f, 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            if not isinstance(rec, dict):
                raise ValueError("record is not an object")
            yield example_from_record(rec)
        except (json.JSONDecodeError, ValueError) as e:
            yield FormatError(str(e), lineno, path)


def _conll_block(block: list[tuple[int, str]], index: int, path, locale, split) -> Example:
    start = block[0][0]
    header = {}
    tokens, tags = [], []
    for lineno, line in block:
        if line.startswith("#"):
            key, sep, value = line[1:].partition("=")
            if not sep:
                raise FormatError(f"bad header {line!r}", lineno, path)
            header[key.strip()] = value.strip()
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise FormatError(f"expected token<TAB>tag, got {line!r}", lineno, path)
        tokens.append(parts[0])
        tags.append(parts[1])
    if "intent" not in header:
        raise FormatError("block without '# intent =' header", start, path)
    try:
        seq = BioSequence(tokens, tags, header["intent"])
        case = label_case_map(seq)
        return Example(
            id=header.get("id", str(index)),
            utterance=Utterance(" ".join(tokens), list(tokens), header.get("locale", locale)),
            parse=bio_to_tree(seq),
            split=header.get("split", split),
            meta={"label_case": case} if case else {},
        )
    except ValueError as e:
        raise FormatError(str(e), start, path) from None


def _read_conll(f, path, locale, split) -> Iterator[Example | FormatError]:
    block: list[tuple[int, str]] = []
    index = 0
    for lineno, line in enumerate(f, 1):
        line = line.rstrip("\r\n")
        if line.strip():
            block.append((lineno, line))
            continue
        if block:
            try:
                yield _conll_block(block, index, path, locale, split)
            except FormatError as e:
                yield e
            index += 1
            block = []
    if block:
        try:
            yield _conll_block(block, index, path, locale, split)
        except FormatError as e:
            yield e


def _tsv_line(cells: list[str], lineno: int, path, columns: TsvColumns, locale, split) -> Example:
    def cell(idx):
        if idx is None:
            return None
        if idx >= len(cells):
            raise FormatError(f"missing column {idx} ({len(cells)} present)", lineno, path)
        return cells[idx]

    try:
        tok_cell = cell(columns.tokens)
        return Example(
            id=cell(columns.id) if columns.id is not None else str(lineno),
            utterance=Utterance(
                cell(columns.utterance),
                None if tok_cell is None else _tokens_from_cell(tok_cell),
                cell(columns.locale) or locale,
            ),
            parse=parse(cell(columns.parse)),
            split=cell(columns.split) or split,
        )
    except FormatError:
        raise
    except ValueError as e:
        raise FormatError(str(e), lineno, path) from None


def _read_tsv(f, path, columns: TsvColumns, locale, split) -> Iterator[Example | FormatError]:
    for lineno, line in enumerate(f, 1):
        line = line.rstrip("\r\n")
        if not line.strip():
            continue
        try:
            yield _tsv_line(line.split("\t"), lineno, path, columns, locale, split)
        except FormatError as e:
            yield e


def read_dataset(
    path,
    format: str = "canonical",
    *,
    strict: bool = True,
    errors: list | None = None,
    columns: TsvColumns | None = None,
    locale: str = "en",
    split: str = "train",
) -> Iterator[Example]:
    """Stream examples from ``path`` in file order.

    With ``strict=False`` bad records are skipped and their
    :class:`FormatError` appended to ``errors``; otherwise the first one is
    raised.
    """
    if format not in FORMATS:
        raise ValueError(f"unknown format {format!r}")
    path = str(path)
    with open(path, encoding="utf-8") as f:
        if format == "canonical":
            records = _read_canonical(f, path)
        elif format == "conll-bio":
            records = _read_conll(f, path, locale, split)
        else:
            records = _read_tsv(f, path, columns or TsvColumns(), locale, split)
        for item in records:
            if isinstance(item, FormatError):
                if strict:
                    raise item
                if errors is not None:
                    errors.append(item)
                continue
            yield item


# ---------------------------------------------------------------- statistics


@dataclass
class TokenizationStats:
    matched: Counter = field(default_factory=Counter)
    total: Counter = field(default_factory=Counter)
    unjoined: int = 0

    @property
    def percent(self) -> dict[str, float]:
        return {lang: 100.0 * self.matched[lang] / self.total[lang] for lang in sorted(self.total)}

    def to_table(self) -> str:
        lines = ["language\tmatched\ttotal\tpercent"]
        for lang, pct in self.percent.items():
            lines.append(f"{lang}\t{self.matched[lang]}\t{self.total[lang]}\t{pct:.2f}")
        if self.unjoined:
            lines.append(f"# unjoined ids: {self.unjoined}")
        return "\n".join(lines)

    def to_record(self) -> dict:
        return {
            "percent": self.percent,
            "matched": dict(sorted(self.matched.items())),
            "total": dict(sorted(self.total.items())),
            "unjoined": self.unjoined,
        }


def tokenization_match_stats(
    dataset_a: Iterable[Example], dataset_b: Iterable[Example], strict: bool = False
) -> TokenizationStats:
    """Percentage of id-joined examples whose token lists are identical.

    ``dataset_a`` is held in memory keyed by id; ``dataset_b`` is streamed.
    The language comes from ``dataset_a``.
    """
    left = {}
    for ex in dataset_a:
        left[ex.id] = (ex.language, ex.utterance.tokens)
    stats = TokenizationStats()
    seen = set()
    for ex in dataset_b:
        if ex.id not in left:
            if strict:
                raise JoinError(ex.id)
            stats.unjoined += 1
            continue
        seen.add(ex.id)
        lang, tokens = left[ex.id]
        stats.total[lang] += 1
        if tokens is not None and tokens == ex.utterance.tokens:
            stats.matched[lang] += 1
    missing = len(left) - len(seen)
    if missing:
        if strict:
            raise JoinError(next(k for k in left if k not in seen))
        stats.unjoined += missing
    return stats
