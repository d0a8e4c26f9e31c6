"""Exact match, intent accuracy and micro slot F1 with tree grounding."""

from __future__ import annotations

import math
import statistics
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .alignment import needleman_wunsch
from .corpus_io import BioSequence, Example, bio_chunks, chunks_to_tags
from .parse_tree import ParseTree, leaf_slots, normalize_text, normalize_tree, serialize

METRICS = ("exact_match", "intent_accuracy", "slot_precision", "slot_recall", "slot_f1")


class LengthMismatch(ValueError):
    pass


def exact_match(pred: ParseTree, gold: ParseTree, form: str = "NFC", lowercase: bool = False) -> int:
    return int(serialize(normalize_tree(pred, form, lowercase)) == serialize(normalize_tree(gold, form, lowercase)))


def intent_accuracy(pred: ParseTree, gold: ParseTree) -> int:
    return int(pred.root.label == gold.root.label)


# ---------------------------------------------------------------- grounding


@dataclass
class Grounding:
    bio: BioSequence
    ungrounded: list[str] = field(default_factory=list)


def _occurrences(haystack: Sequence, needle: Sequence) -> list[int]:
    n = len(needle)
    return [k for k in range(len(haystack) - n + 1) if list(haystack[k : k + n]) == list(needle)]


def _substring_occurrences(text: str, value: str) -> list[int]:
    out, k = [], text.find(value)
    while k >= 0:
        out.append(k)
        k = text.find(value, k + 1)
    return out


def ground(
    tree: ParseTree,
    tokens: Sequence[str],
    form: str = "NFC",
    lowercase: bool = False,
    match: float = 1,
    mismatch: float = -1,
    gap: float = -1,
    vote: float = 0.5,
) -> Grounding:
    """Map the leaf slots of ``tree`` onto ``tokens`` as BIO tags.

    Pass 1 tags slots whose value occurs exactly once, either as a token
    subsequence or as a substring of the space-joined tokens (then the
    covering tokens are used). Pass 2 aligns each remaining value against the
    untagged tokens at character level; a token joins the slot when more than
    ``vote`` of its characters align to slot characters. The chunk covers the
    joined tokens from first to last; if another slot's tokens sit in between,
    the covering span with the most aligned characters wins.
    """
    toks = [normalize_text(t, form, lowercase) for t in tokens]
    joined = " ".join(toks)
    # character offset -> token index in the joined string
    owner: list[int | None] = []
    for k, t in enumerate(toks):
        if k:
            owner.append(None)
        owner.extend([k] * len(t))
    claimed = [False] * len(toks)
    chunks: list[tuple[str, int, int]] = []
    pending = []

    def claim(label, a, b):
        if any(claimed[a:b]):
            return False
        for k in range(a, b):
            claimed[k] = True
        chunks.append((label, a, b))
        return True

    for slot in leaf_slots(tree):
        if not slot.tokens:
            continue
        value = [normalize_text(t, form, lowercase) for t in slot.tokens]
        full = _occurrences(toks, value)
        if len(full) == 1:
            if claim(slot.label, full[0], full[0] + len(value)):
                continue
        elif not full:
            text = " ".join(value)
            part = _substring_occurrences(joined, text)
            if len(part) == 1:
                covered = [owner[c] for c in range(part[0], part[0] + len(text)) if owner[c] is not None]
                if covered and claim(slot.label, min(covered), max(covered) + 1):
                    continue
        pending.append((slot.label, " ".join(value)))

    ungrounded = []
    for label, text in pending:
        free = [k for k in range(len(toks)) if not claimed[k]]
        if not free:
            ungrounded.append(label)
            continue
        # free tokens joined by single spaces, remembering who owns each char
        chars, char_owner = [], []
        for n, k in enumerate(free):
            if n:
                chars.append(" ")
                char_owner.append(None)
            chars.extend(toks[k])
            char_owner.extend([k] * len(toks[k]))
        pairs, _ = needleman_wunsch(list(text), chars, match, mismatch, gap)
        # only identical aligned characters vote
        hits = Counter(
            char_owner[j] for i, j in pairs if i is not None and j is not None and text[i] == chars[j]
        )
        joined_tokens = sorted(k for k in free if hits[k] > vote * len(toks[k]))
        # covering spans; a token claimed by another slot breaks the span
        runs: list[list[int]] = []
        for k in joined_tokens:
            if runs and not any(claimed[runs[-1][-1] : k]):
                runs[-1].append(k)
            else:
                runs.append([k])
        if not runs:
            ungrounded.append(label)
            continue
        best = max(runs, key=lambda r: (sum(hits[k] for k in r), -r[0]))
        claim(label, best[0], best[-1] + 1)

    chunks.sort(key=lambda c: c[1])
    tags = chunks_to_tags(len(toks), chunks)
    return Grounding(BioSequence(list(tokens), tags, tree.root.label), ungrounded)


def ground_tree_to_bio(tree: ParseTree, tokens: Sequence[str], **kw) -> BioSequence:
    return ground(tree, tokens, **kw).bio


# ---------------------------------------------------------------- slot F1


@dataclass
class SlotScores:
    precision: float
    recall: float
    f1: float
    correct: int = 0
    predicted: int = 0
    gold: int = 0
    no_chunks: bool = False
    skipped: int = 0


def slot_counts(gold_tags: Sequence[str], pred_tags: Sequence[str]) -> tuple[int, int, int]:
    """(correct, predicted, gold) chunk counts for one sentence."""
    g = Counter(bio_chunks(gold_tags))
    p = Counter(bio_chunks(pred_tags))
    return sum((g & p).values()), sum(p.values()), sum(g.values())


def _scores(correct, predicted, gold, skipped=0) -> SlotScores:
    if predicted == 0 and gold == 0:
        return SlotScores(0.0, 0.0, 0.0, 0, 0, 0, no_chunks=True, skipped=skipped)
    p = correct / predicted if predicted else 0.0
    r = correct / gold if gold else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return SlotScores(p, r, f, correct, predicted, gold, skipped=skipped)


def slot_f1(
    golds: Iterable[BioSequence | Sequence[str]],
    preds: Iterable[BioSequence | Sequence[str]],
    strict: bool = False,
) -> SlotScores:
    """Micro-averaged chunk precision/recall/F1.

    A pair whose lengths differ raises :class:`LengthMismatch` when
    ``strict``; otherwise it is skipped and counted.
    """
    correct = predicted = gold = skipped = 0
    for k, (g, p) in enumerate(zip(golds, preds)):
        gt = g.tags if isinstance(g, BioSequence) else list(g)
        pt = p.tags if isinstance(p, BioSequence) else list(p)
        if len(gt) != len(pt):
            if strict:
                raise LengthMismatch(f"pair {k}: {len(gt)} gold vs {len(pt)} predicted tags")
            skipped += 1
            continue
        c, np_, ng = slot_counts(gt, pt)
        correct += c
        predicted += np_
        gold += ng
    return _scores(correct, predicted, gold, skipped)


# ---------------------------------------------------------------- reports


@dataclass
class LanguageMetrics:
    exact_match: float = 0.0
    intent_accuracy: float = 0.0
    slot_precision: float = 0.0
    slot_recall: float = 0.0
    slot_f1: float = 0.0
    support: int = 0
    ungrounded: int = 0
    no_chunks: bool = False

    def get(self, metric: str) -> float:
        return getattr(self, metric)


@dataclass
class MetricsReport:
    per_language: dict[str, LanguageMetrics] = field(default_factory=dict)
    averages: dict[str, float] = field(default_factory=dict)
    average_languages: list[str] = field(default_factory=list)
    # metric -> language (or "avg") -> (mean, sample std), for multi-run reports
    spread: dict[str, dict[str, tuple[float, float]]] = field(default_factory=dict)
    runs: list["MetricsReport"] = field(default_factory=list)

    def to_record(self) -> dict:
        rec = {
            "per_language": {
                lang: {
                    **{m: round(getattr(lm, m), 10) for m in METRICS},
                    "support": lm.support,
                    "ungrounded": lm.ungrounded,
                    "no_chunks": lm.no_chunks,
                }
                for lang, lm in sorted(self.per_language.items())
            },
            "averages": {m: round(v, 10) for m, v in self.averages.items()},
            "average_languages": list(self.average_languages),
        }
        if self.spread:
            rec["spread"] = {
                m: {k: [round(a, 10), round(b, 10)] for k, (a, b) in sorted(d.items())}
                for m, d in self.spread.items()
            }
            rec["num_runs"] = len(self.runs)
        return rec

    def to_table(self, metrics: Sequence[str] = METRICS) -> str:
        cols = sorted(self.per_language)
        has_avg = bool(self.averages)
        header = f"{'metric':<18}" + "".join(f"{c:>16}" for c in cols) + (f"{'avg':>16}" if has_avg else "")
        lines = [header]
        for m in metrics:
            cells = []
            for c in cols + (["avg"] if has_avg else []):
                value = self.averages[m] if c == "avg" else self.per_language[c].get(m)
                if self.spread and c in self.spread.get(m, {}):
                    mean, std = self.spread[m][c]
                    cells.append(f"{100 * mean:.2f} ± {100 * std:.2f}")
                else:
                    cells.append(f"{100 * value:.2f}")
            lines.append(f"{m:<18}" + "".join(f"{c:>16}" for c in cells))
        lines.append(f"{'support':<18}" + "".join(f"{self.per_language[c].support:>16}" for c in cols))
        return "\n".join(lines)


def average_over(per_language: Mapping[str, LanguageMetrics], languages: Iterable[str]) -> dict[str, float]:
    """Unweighted mean of each metric over ``languages``."""
    langs = [lang for lang in languages if lang in per_language]
    if not langs:
        return {}
    return {m: sum(per_language[lang].get(m) for lang in langs) / len(langs) for m in METRICS}


def evaluate(
    golds: Iterable[Example],
    preds: Iterable[Example] | Mapping[str, Example],
    average_languages: Iterable[str] | None = None,
    with_slots: bool = True,
    form: str = "NFC",
    lowercase: bool = False,
) -> MetricsReport:
    """Score predictions against gold examples joined by id.

    Both trees are grounded onto the gold tokens before computing slot F1.
    Gold examples with no prediction count as wrong (EM and intent 0, no
    predicted chunks). ``average_languages`` defaults to every non-English
    language.
    """
    if not isinstance(preds, Mapping):
        preds = {p.id: p for p in preds}
    em: Counter = Counter()
    intent: Counter = Counter()
    support: Counter = Counter()
    ungrounded: Counter = Counter()
    slots: dict[str, list[int]] = {}
    for g in golds:
        lang = g.language
        support[lang] += 1
        p = preds.get(g.id)
        if p is not None and p.parse is not None:
            em[lang] += exact_match(p.parse, g.parse, form, lowercase)
            intent[lang] += intent_accuracy(p.parse, g.parse)
        if not with_slots:
            continue
        tokens = g.utterance.tokens or g.utterance.raw.split()
        gold_bio = ground(g.parse, tokens, form, lowercase)
        if p is not None and p.parse is not None:
            pred_bio = ground(p.parse, tokens, form, lowercase)
            pred_tags = pred_bio.bio.tags
            ungrounded[lang] += len(pred_bio.ungrounded)
        else:
            pred_tags = ["O"] * len(tokens)
        c, np_, ng = slot_counts(gold_bio.bio.tags, pred_tags)
        acc = slots.setdefault(lang, [0, 0, 0])
        acc[0] += c
        acc[1] += np_
        acc[2] += ng
    per_language = {}
    for lang in sorted(support):
        n = support[lang]
        s = _scores(*slots.get(lang, (0, 0, 0)))
        per_language[lang] = LanguageMetrics(
            em[lang] / n,
            intent[lang] / n,
            s.precision,
            s.recall,
            s.f1,
            n,
            ungrounded[lang],
            s.no_chunks if with_slots else False,
        )
    if average_languages is None:
        average_languages = [lang for lang in per_language if lang != "en"]
    average_languages = [lang for lang in average_languages if lang in per_language]
    return MetricsReport(per_language, average_over(per_language, average_languages), average_languages)


def _mean_std(values: list[float]) -> tuple[float, float]:
    mean = math.fsum(values) / len(values)
    std = statistics.stdev(values) if len(values) > 1 else 0.0
    return mean, std


def aggregate(reports: Sequence[MetricsReport], language_subset: Iterable[str] | None = None) -> MetricsReport:
    """Combine per-run reports: means per language plus mean/std spread.

    Language averages are unweighted means over ``language_subset``
    (default: the subset used by the first report); the spread uses the
    sample standard deviation across runs.
    """
    if not reports:
        raise ValueError("no reports to aggregate")
    langs = sorted(reports[0].per_language)
    for r in reports[1:]:
        if sorted(r.per_language) != langs:
            raise ValueError("reports do not share language keys")
    subset = list(language_subset) if language_subset is not None else list(reports[0].average_languages)
    subset = [lang for lang in subset if lang in langs]
    run_avgs = [average_over(r.per_language, subset) for r in reports]
    per_language = {}
    spread: dict[str, dict[str, tuple[float, float]]] = {m: {} for m in METRICS}
    for lang in langs:
        kw = {}
        for m in METRICS:
            mean, std = _mean_std([r.per_language[lang].get(m) for r in reports])
            kw[m] = mean
            spread[m][lang] = (mean, std)
        lm = reports[0].per_language[lang]
        per_language[lang] = LanguageMetrics(**kw, support=lm.support, ungrounded=lm.ungrounded, no_chunks=lm.no_chunks)
    averages = {}
    if subset:
        for m in METRICS:
            mean, std = _mean_std([a[m] for a in run_avgs])
            averages[m] = mean
            spread[m]["avg"] = (mean, std)
    return MetricsReport(per_language, averages, subset, spread, list(reports))
