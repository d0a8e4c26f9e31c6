"""Slow reference implementations used to check the fast code paths.

Nothing here imports the algorithm under test; each oracle works from the
textbook definition with plain Python.
"""

from __future__ import annotations

import itertools
import math
from collections import defaultdict

NULL = "<NULL>"


def ibm1_em(pairs, iterations):
    """Model 1 EM with dict counts: t[(f, e)], NULL prepended, uniform start."""
    f_vocab = {f for _, fs in pairs for f in fs}
    t = defaultdict(lambda: 1.0 / len(f_vocab))
    for _ in range(iterations):
        count = defaultdict(float)
        total = defaultdict(float)
        for es, fs in pairs:
            es = [NULL] + list(es)
            for f in fs:
                z = sum(t[(f, e)] for e in es)
                for e in es:
                    c = t[(f, e)] / z
                    count[(f, e)] += c
                    total[e] += c
        t = defaultdict(float, {(f, e): count[(f, e)] / total[e] for (f, e) in count})
    return t


def nw_brute_force(a, b, match, mismatch, gap):
    """Best global alignment score by enumerating every monotone alignment.

    An alignment is a choice of k matched index pairs, increasing in both
    sequences; everything else is gapped.
    """
    n, m = len(a), len(b)
    best = -math.inf
    for k in range(min(n, m) + 1):
        for ia in itertools.combinations(range(n), k):
            for ib in itertools.combinations(range(m), k):
                s = sum(match if a[i] == b[j] else mismatch for i, j in zip(ia, ib))
                s += gap * ((n - k) + (m - k))
                best = max(best, s)
    return best


def hmm_path_logscore(alignment, source, target, lexical, jump, window, p_null, smoothing):
    """Log probability of one alignment vector (None = NULL) under the HMM.

    Written directly from the model definition: NULL stays at the previous
    real position; before any real position, NULL and first real choices
    are uniform.
    """
    I = len(source)

    def t(f, e):
        return lexical.get(e, {}).get(f, 0.0) + smoothing

    def bucket(d):
        return min(max(d, -window), window) + window

    score = 0.0
    prev = None  # last real position
    for j, a in enumerate(alignment):
        f = target[j]
        if a is None:
            score += math.log(p_null) + math.log(t(f, NULL))
            continue
        if prev is None:
            trans = (1 - p_null) / I
        else:
            z = sum(jump[bucket(i - prev)] for i in range(I))
            trans = (1 - p_null) * jump[bucket(a - prev)] / z
        score += math.log(trans) + math.log(t(f, source[a]))
        prev = a
    return score


def hmm_brute_force(source, target, lexical, jump, window, p_null, smoothing, tol=1e-9):
    """Lexicographically smallest near-optimal alignment (NULL sorts first)."""
    values = [None] + list(range(len(source)))
    scored = []
    for alignment in itertools.product(values, repeat=len(target)):
        scored.append(
            (alignment, hmm_path_logscore(alignment, source, target, lexical, jump, window, p_null, smoothing))
        )
    best = max(s for _, s in scored)
    for alignment, s in scored:  # product() yields lexicographic order
        if s >= best - tol:
            return list(alignment), s


def chunk_set(tags):
    """Chunks by scanning for starts and ends, conlleval style."""
    out = []
    start = None
    label = None
    for i, tag in enumerate(list(tags) + ["O"]):
        kind = tag[0]
        lab = tag[2:] if kind != "O" else None
        starts = kind == "B" or (kind == "I" and lab != label)
        ends = label is not None and (kind == "O" or starts)
        if ends:
            out.append((label, start, i))
            label = None
        if starts:
            start, label = i, lab
    return out


def micro_prf(gold_seqs, pred_seqs):
    correct = predicted = gold = 0
    for g, p in zip(gold_seqs, pred_seqs):
        gs = chunk_set(g)
        ps = chunk_set(p)
        remaining = list(gs)
        for c in ps:
            if c in remaining:
                remaining.remove(c)
                correct += 1
        predicted += len(ps)
        gold += len(gs)
    p = correct / predicted if predicted else 0.0
    r = correct / gold if gold else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def hmm_brute_force_np(source, target, lexical, jump, window, p_null, smoothing, tol=1e-9):
    """Same enumeration as :func:`hmm_brute_force`, scored with numpy arrays.

    Every alignment vector is materialised (``-1`` stands for NULL) and
    scored step by step; there is no dynamic programming.
    """
    import numpy as np

    I, J = len(source), len(target)
    paths = np.array(list(itertools.product(range(-1, I), repeat=J)), dtype=int).reshape(-1, J)
    rows = [NULL] + list(source)
    emit = np.log(np.array([[lexical.get(e, {}).get(f, 0.0) + smoothing for f in target] for e in rows]))
    jump = np.asarray(jump, dtype=float)
    # z[p]: normaliser of jumps out of real position p
    z = np.array([sum(jump[min(max(i - p, -window), window) + window] for i in range(I)) for p in range(I)])
    score = np.zeros(len(paths))
    prev = np.full(len(paths), -1)
    for j in range(J):
        a = paths[:, j]
        score += emit[a + 1, j]
        is_null = a < 0
        first = ~is_null & (prev < 0)
        later = ~is_null & (prev >= 0)
        score[is_null] += math.log(p_null)
        score[first] += math.log((1 - p_null) / I)
        d = np.clip(a[later] - prev[later], -window, window) + window
        score[later] += np.log((1 - p_null) * jump[d] / z[prev[later]])
        prev = np.where(is_null, prev, a)
    best = score.max()
    k = int(np.argmax(score >= best - tol))
    return [None if x < 0 else int(x) for x in paths[k]], float(score[k])
