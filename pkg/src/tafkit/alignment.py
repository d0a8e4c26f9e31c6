"""Statistical word alignment: IBM Model 1, a Vogel-style HMM, and
Needleman-Wunsch global alignment.

Direction convention: the *source* is the annotated side (English) and every
*target* token is generated by one source position or by NULL, so the lexical
table holds ``t(target | source)``.

HMM state layout for a source sentence of length ``I``::

    0 .. I-1      real source positions
    I .. 2I-1     NULL shadow of position i (NULL after last aligning to i)
    2I            start NULL (NULL before any real alignment)

Every alignment vector therefore corresponds to exactly one state path.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.optimize import minimize

log = logging.getLogger(__name__)

NULL = "<NULL>"
FORMAT_HEADER = "# tafkit-alignment-model v1"

Links = frozenset  # frozenset[tuple[int, int]] of (source index, target index)


class EmptyCorpus(ValueError):
    pass


class DegenerateInit(ValueError):
    pass


@dataclass
class ParallelCorpus:
    pairs: list[tuple[list[str], list[str]]]

    def __post_init__(self):
        self.pairs = [(list(s), list(t)) for s, t in self.pairs]
        for k, (s, t) in enumerate(self.pairs):
            if not s or not t:
                raise ValueError(f"empty sentence in pair {k}")

    def __len__(self):
        return len(self.pairs)

    @property
    def source_vocab(self) -> list[str]:
        return list(dict.fromkeys(w for s, _ in self.pairs for w in s))

    @property
    def target_vocab(self) -> list[str]:
        return list(dict.fromkeys(w for _, t in self.pairs for w in t))

    @classmethod
    def from_file(cls, path) -> "ParallelCorpus":
        """Read ``source tokens<TAB>target tokens`` lines."""
        pairs = []
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, 1):
                line = line.rstrip("\r\n")
                if not line.strip():
                    continue
                src, sep, tgt = line.partition("\t")
                if not sep:
                    raise ValueError(f"{path}:{lineno}: expected a tab separator")
                pairs.append((src.split(), tgt.split()))
        return cls(pairs)

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            for s, t in self.pairs:
                f.write(" ".join(s) + "\t" + " ".join(t) + "\n")


@dataclass
class AlignmentModel:
    """Lexical table ``lexical[source][target]`` plus optional HMM jumps.

    ``jump[k]`` is the weight of a jump of width ``k - window``; the two end
    buckets absorb all wider jumps.
    """

    lexical: dict[str, dict[str, float]]
    jump: np.ndarray | None = None
    window: int = 5
    p_null: float = 0.2
    smoothing: float = 1e-12
    log_likelihoods: list[float] = field(default_factory=list)

    @property
    def has_hmm(self) -> bool:
        return self.jump is not None

    def prob(self, target: str, source: str) -> float:
        return self.lexical.get(source, {}).get(target, 0.0)

    def emission_matrix(self, source: Sequence[str], target: Sequence[str]) -> np.ndarray:
        """Smoothed ``t(target_j | source_i)`` with NULL as row 0; shape (I+1, J)."""
        rows = []
        for s in [NULL, *source]:
            table = self.lexical.get(s, {})
            rows.append([table.get(t, 0.0) for t in target])
        return np.asarray(rows, dtype=float) + self.smoothing

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(FORMAT_HEADER + "\n")
            f.write(f"window\t{self.window}\n")
            f.write(f"p_null\t{self.p_null!r}\n")
            f.write(f"smoothing\t{self.smoothing!r}\n")
            for ll in self.log_likelihoods:
                f.write(f"loglik\t{ll!r}\n")
            if self.jump is not None:
                for k, p in enumerate(self.jump):
                    f.write(f"jump\t{k - self.window}\t{float(p)!r}\n")
            for s, row in self.lexical.items():
                for t, p in row.items():
                    f.write(f"lex\t{s}\t{t}\t{p!r}\n")

    @classmethod
    def load(cls, path) -> "AlignmentModel":
        lexical: dict[str, dict[str, float]] = {}
        jumps: dict[int, float] = {}
        lls = []
        opts = {}
        with open(path, encoding="utf-8") as f:
            header = f.readline().rstrip("\n")
            if header != FORMAT_HEADER:
                raise ValueError(f"{path}: not an alignment model ({header!r})")
            for line in f:
                parts = line.rstrip("\n").split("\t")
                kind = parts[0]
                if kind == "lex":
                    lexical.setdefault(parts[1], {})[parts[2]] = float(parts[3])
                elif kind == "jump":
                    jumps[int(parts[1])] = float(parts[2])
                elif kind == "loglik":
                    lls.append(float(parts[1]))
                elif kind in ("window", "p_null", "smoothing"):
                    opts[kind] = float(parts[1])
                else:
                    raise ValueError(f"{path}: unknown record {kind!r}")
        window = int(opts.get("window", 5))
        jump = None
        if jumps:
            jump = np.array([jumps[d] for d in range(-window, window + 1)])
        return cls(
            lexical,
            jump,
            window=window,
            p_null=opts.get("p_null", 0.2),
            smoothing=opts.get("smoothing", 1e-12),
            log_likelihoods=lls,
        )


# ---------------------------------------------------------------- indexing


class _PairIndex:
    """Integer ids for every co-occurring (source, target) word pair."""

    def __init__(self, corpus: ParallelCorpus):
        self.src_ids = {NULL: 0}
        self.tgt_ids: dict[str, int] = {}
        pair_ids: dict[tuple[int, int], int] = {}
        self.sentences = []
        for src, tgt in corpus.pairs:
            s = [0] + [self.src_ids.setdefault(w, len(self.src_ids)) for w in src]
            t = [self.tgt_ids.setdefault(w, len(self.tgt_ids)) for w in tgt]
            idx = np.empty((len(s), len(t)), dtype=np.int64)
            for i, si in enumerate(s):
                for j, tj in enumerate(t):
                    idx[i, j] = pair_ids.setdefault((si, tj), len(pair_ids))
            self.sentences.append(idx)
        self.pairs = list(pair_ids)
        self.pair_src = np.array([p[0] for p in self.pairs], dtype=np.int64)
        self.src_words = list(self.src_ids)
        self.tgt_words = list(self.tgt_ids)

    def normalize(self, counts: np.ndarray) -> np.ndarray:
        totals = np.bincount(self.pair_src, weights=counts, minlength=len(self.src_words))
        return counts / totals[self.pair_src]

    def to_table(self, probs: np.ndarray) -> dict[str, dict[str, float]]:
        table: dict[str, dict[str, float]] = {}
        for (s, t), p in zip(self.pairs, probs):
            table.setdefault(self.src_words[s], {})[self.tgt_words[t]] = float(p)
        return table


def _model1_estep(index: _PairIndex, t: np.ndarray) -> tuple[np.ndarray, float]:
    counts = np.zeros_like(t)
    ll = 0.0
    for idx in index.sentences:
        p = t[idx]
        z = p.sum(axis=0)
        ll += float(np.log(z / idx.shape[0]).sum())
        np.add.at(counts, idx, p / z)
    return counts, ll


def train_ibm1(corpus: ParallelCorpus, iterations: int = 5) -> AlignmentModel:
    """EM for IBM Model 1 with a NULL source word and a uniform start.

    ``log_likelihoods`` holds the corpus log-likelihood before each iteration
    and after the last one (``iterations + 1`` values).
    """
    if len(corpus) == 0:
        raise EmptyCorpus("no sentence pairs")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    index = _PairIndex(corpus)
    t = np.full(len(index.pairs), 1.0 / len(index.tgt_words))
    lls = []
    for it in range(iterations):
        counts, ll = _model1_estep(index, t)
        lls.append(ll)
        log.debug("ibm1 iteration %d loglik %.6f", it, ll)
        t = index.normalize(counts)
    lls.append(_model1_estep(index, t)[1])
    return AlignmentModel(index.to_table(t), log_likelihoods=lls)


# ---------------------------------------------------------------- HMM


def _bucket(d: int, window: int) -> int:
    return min(max(d, -window), window) + window


def transition_matrix(I: int, jump: np.ndarray, p_null: float, window: int) -> tuple[np.ndarray, np.ndarray]:
    """Initial distribution and transition matrix over the 2I+1 states."""
    S = 2 * I + 1
    buckets = np.array([[_bucket(i - ip, window) for i in range(I)] for ip in range(I)])
    w = jump[buckets]
    w = w / w.sum(axis=1, keepdims=True)
    A = np.zeros((S, S))
    A[:I, :I] = (1 - p_null) * w
    A[I : 2 * I, :I] = (1 - p_null) * w
    A[np.arange(I), I + np.arange(I)] = p_null
    A[I + np.arange(I), I + np.arange(I)] = p_null
    A[2 * I, :I] = (1 - p_null) / I
    A[2 * I, 2 * I] = p_null
    pi = np.zeros(S)
    pi[:I] = (1 - p_null) / I
    pi[2 * I] = p_null
    return pi, A


def _state_emissions(em: np.ndarray) -> np.ndarray:
    """Expand (I+1, J) emissions with NULL row 0 to (J, 2I+1)."""
    I = em.shape[0] - 1
    null = em[0]
    return np.concatenate([em[1:].T, np.repeat(null[:, None], I + 1, axis=1)], axis=1)


def _forward_backward(pi, A, B):
    J, S = B.shape
    alpha = np.empty((J, S))
    beta = np.empty((J, S))
    scale = np.empty(J)
    a = pi * B[0]
    scale[0] = a.sum()
    alpha[0] = a / scale[0]
    for j in range(1, J):
        a = (alpha[j - 1] @ A) * B[j]
        scale[j] = a.sum()
        alpha[j] = a / scale[j]
    beta[J - 1] = 1.0
    for j in range(J - 2, -1, -1):
        beta[j] = (A @ (B[j + 1] * beta[j + 1])) / scale[j + 1]
    return alpha, beta, scale


def _jump_objective(theta, n_b, keys_N, keys_A):
    m = theta.max()
    e = np.exp(theta - m)
    z = keys_A @ e
    q = n_b @ theta - keys_N @ (np.log(z) + m)
    grad = n_b - e * (keys_A.T @ (keys_N / z))
    return -q, -grad


def _jump_mstep(jump, n_b, stats, window):
    """Maximize the expected complete log-likelihood over jump weights.

    The objective is concave in log-weights, so L-BFGS from the current point
    only ever improves it; the result is kept only if it does.
    """
    if not stats:
        return jump
    keys = sorted(stats)
    keys_N = np.array([stats[k] for k in keys])
    keys_A = np.zeros((len(keys), 2 * window + 1))
    for r, (I, ip) in enumerate(keys):
        for i in range(I):
            keys_A[r, _bucket(i - ip, window)] += 1
    theta0 = np.log(np.maximum(jump, 1e-300))
    theta0 = np.maximum(theta0, -50.0)
    f0, _ = _jump_objective(theta0, n_b, keys_N, keys_A)
    res = minimize(
        _jump_objective,
        theta0,
        args=(n_b, keys_N, keys_A),
        jac=True,
        method="L-BFGS-B",
        bounds=[(-50.0, 50.0)] * len(theta0),
        options={"maxiter": 200, "ftol": 1e-15, "gtol": 1e-12},
    )
    theta = res.x if res.fun <= f0 else theta0
    e = np.exp(theta - theta.max())
    return e / e.sum()


def train_hmm(
    corpus: ParallelCorpus,
    iterations: int = 5,
    init: AlignmentModel | None = None,
    window: int = 5,
    p_null: float = 0.2,
) -> AlignmentModel:
    """Baum-Welch training of the HMM alignment model.

    Lexical probabilities start from ``init`` (missing pairs get the model's
    smoothing floor) and the jump distribution starts uniform. NULL and start
    probabilities are fixed by ``p_null``.
    """
    if len(corpus) == 0:
        raise EmptyCorpus("no sentence pairs")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if init is None or not init.lexical:
        raise DegenerateInit("HMM training needs an initial lexical table")
    index = _PairIndex(corpus)
    floor = init.smoothing
    t = np.array(
        [
            max(init.prob(index.tgt_words[tj], index.src_words[si]), floor)
            for si, tj in index.pairs
        ]
    )
    jump = np.full(2 * window + 1, 1.0 / (2 * window + 1))
    lls = []

    def estep(t, jump, collect=True):
        counts = np.zeros_like(t)
        n_b = np.zeros_like(jump)
        stats: dict[tuple[int, int], float] = {}
        ll = 0.0
        cache = {}
        for idx in index.sentences:
            I = idx.shape[0] - 1
            if I not in cache:
                cache[I] = transition_matrix(I, jump, p_null, window)
            pi, A = cache[I]
            B = _state_emissions(t[idx])
            alpha, beta, scale = _forward_backward(pi, A, B)
            ll += float(np.log(scale).sum())
            if not collect:
                continue
            gamma = alpha * beta
            # lexical counts: real states use their own row, NULL states row 0
            np.add.at(counts, idx[1:].T, gamma[:, :I])
            np.add.at(counts, idx[0], gamma[:, I:].sum(axis=1))
            if len(B) > 1:
                # xi summed over time: alpha[j-1]' A (B[j]*beta[j]) / scale[j]
                xi = alpha[:-1].T @ ((B[1:] * beta[1:]) / scale[1:, None])
                xi *= A
                moved = xi[:I, :I] + xi[I : 2 * I, :I]
                for ip in range(I):
                    row = moved[ip]
                    stats[(I, ip)] = stats.get((I, ip), 0.0) + float(row.sum())
                    for i in range(I):
                        n_b[_bucket(i - ip, window)] += row[i]
        return counts, n_b, stats, ll

    for it in range(iterations):
        counts, n_b, stats, ll = estep(t, jump)
        lls.append(ll)
        log.debug("hmm iteration %d loglik %.6f", it, ll)
        t = index.normalize(counts)
        jump = _jump_mstep(jump, n_b, stats, window)
    lls.append(estep(t, jump, collect=False)[3])
    return AlignmentModel(
        index.to_table(t),
        jump=jump,
        window=window,
        p_null=p_null,
        smoothing=init.smoothing,
        log_likelihoods=lls,
    )


# ---------------------------------------------------------------- decoding


def alignment_posteriors(model: AlignmentModel, source, target, mode: str = "hmm") -> np.ndarray:
    """Posterior over (NULL, source positions) for each target token.

    Shape (I+1, J); row 0 is NULL and every column sums to one.
    """
    em = model.emission_matrix(source, target)
    if mode == "model1":
        return em / em.sum(axis=0, keepdims=True)
    I = len(source)
    pi, A = transition_matrix(I, model.jump, model.p_null, model.window)
    alpha, beta, _ = _forward_backward(pi, A, _state_emissions(em))
    gamma = alpha * beta
    gamma /= gamma.sum(axis=1, keepdims=True)
    post = np.empty((I + 1, len(target)))
    post[0] = gamma[:, I:].sum(axis=1)
    post[1:] = gamma[:, :I].T
    return post


def _with_logs(x):
    with np.errstate(divide="ignore"):
        return np.log(x)


def hmm_viterbi_path(model: AlignmentModel, source, target, tol: float = 1e-9) -> tuple[list[int | None], float]:
    """Best alignment vector and its log score.

    Among paths scoring within ``tol`` of the optimum the lexicographically
    smallest alignment vector wins, with NULL ranked before position 0.
    """
    I, J = len(source), len(target)
    pi, A = transition_matrix(I, model.jump, model.p_null, model.window)
    logpi, logA = _with_logs(pi), _with_logs(A)
    logB = np.log(_state_emissions(model.emission_matrix(source, target)))
    S = 2 * I + 1
    # suffix[j, s]: best score of tokens j+1.. given state s at j
    suffix = np.zeros((J, S))
    for j in range(J - 2, -1, -1):
        suffix[j] = (logA + (logB[j + 1] + suffix[j + 1])[None, :]).max(axis=1)
    order = list(range(I, S)) + list(range(I))  # NULL states first
    path: list[int] = []
    prefix = 0.0
    for j in range(J):
        step = logpi if j == 0 else logA[path[-1]]
        cand = prefix + step + logB[j] + suffix[j]
        best = cand.max()
        s = next(s for s in order if cand[s] >= best - tol)
        prefix += step[s] + logB[j, s]
        path.append(s)
    return [s if s < I else None for s in path], float(prefix)


def viterbi_align(model: AlignmentModel, source, target, mode: str = "hmm") -> frozenset:
    """Hard links ``{(source index, target index)}``; NULL gives no link."""
    if mode == "model1":
        em = model.emission_matrix(source, target)
        best = em.argmax(axis=0)  # first maximum, NULL is row 0
        return frozenset((int(i) - 1, j) for j, i in enumerate(best) if i > 0)
    if mode != "hmm":
        raise ValueError(f"unknown mode {mode!r}")
    if not model.has_hmm:
        raise ValueError("model has no HMM parameters")
    path, _ = hmm_viterbi_path(model, source, target)
    return frozenset((i, j) for j, i in enumerate(path) if i is not None)


def format_links(links: Iterable[tuple[int, int]]) -> str:
    """Pharaoh-style ``i-j`` pairs sorted by target then source."""
    return " ".join(f"{i}-{j}" for i, j in sorted(links, key=lambda p: (p[1], p[0])))


def parse_links(text: str) -> frozenset:
    out = set()
    for item in text.split():
        i, _, j = item.partition("-")
        out.add((int(i), int(j)))
    return frozenset(out)


# ---------------------------------------------------------------- Needleman-Wunsch


def needleman_wunsch(
    seq_a: Sequence,
    seq_b: Sequence,
    match: float = 1,
    mismatch: float = -1,
    gap: float = -1,
    equal: Callable = None,
) -> tuple[list[tuple[int | None, int | None]], float]:
    """Global alignment with a linear gap penalty.

    Returns the aligned index pairs (``None`` marks a gap) and the optimal
    score. Traceback prefers diagonal, then up (gap in ``seq_b``), then left.
    """
    eq = equal or (lambda x, y: x == y)
    n, m = len(seq_a), len(seq_b)
    H = [[0.0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        H[i][0] = gap * i
    for j in range(1, m + 1):
        H[0][j] = gap * j
    for i in range(1, n + 1):
        a = seq_a[i - 1]
        row, prev = H[i], H[i - 1]
        for j in range(1, m + 1):
            diag = prev[j - 1] + (match if eq(a, seq_b[j - 1]) else mismatch)
            up = prev[j] + gap
            left = row[j - 1] + gap
            row[j] = max(diag, up, left)
    pairs = []
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0:
            s = match if eq(seq_a[i - 1], seq_b[j - 1]) else mismatch
            if H[i][j] == H[i - 1][j - 1] + s:
                pairs.append((i - 1, j - 1))
                i, j = i - 1, j - 1
                continue
        if i > 0 and H[i][j] == H[i - 1][j] + gap:
            pairs.append((i - 1, None))
            i -= 1
        else:
            pairs.append((None, j - 1))
            j -= 1
    pairs.reverse()
    return pairs, H[n][m]
