"""Optimal dyadic partitions for max-J, partition entropy and coarse counts.

Two back ends share one vocabulary:

* explicit: greedy refinement and level scans over a :class:`DyadicMeasure`;
* :class:`CascadeCounter`: exact counting over type classes of words of a
  dyadic cascade, which reaches scales far below any stored tree.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import gammaln

from .dyadic import MAX_CODE_BITS, CubeIndex, DyadicMeasure, IfsCascade, decode
from .errors import DepthError, DomainError
from .spectra import fit_window, j_table

__all__ = [
    "Partition", "CoarseCounts", "OptimizedCoarse", "EntropyResult", "greedy_partition",
    "partition_entropy", "gamma_curve", "coarse_counts", "optimized_coarse_dimension",
    "exhaustive_gamma", "enumerate_partitions", "CascadeCounter", "log_log_slope",
    "threshold_slack",
]


def threshold_slack(log_threshold):
    """Tolerance for ``log2 J >= log2 t`` comparisons (equality counts as reached)."""
    return 1e-12 * max(1.0, abs(log_threshold))


@dataclass
class Partition:
    """Disjoint dyadic cubes covering (0, 1]^d.

    ``cardinality`` counts positive-mass cubes; zero-mass cubes are kept for
    covering with ``J = 0``.
    """

    dimension: int
    levels: np.ndarray
    codes: np.ndarray
    log2_j: np.ndarray
    r: float
    depth_limited: bool = False

    @property
    def j_values(self):
        return np.exp2(self.log2_j)

    @property
    def max_j(self):
        return float(np.exp2(self.log2_j.max()))

    @property
    def cardinality(self):
        return int(np.count_nonzero(np.isfinite(self.log2_j)))

    @property
    def cubes(self):
        return [CubeIndex(int(n), tuple(decode(np.array([c]), int(n), self.dimension)[0].tolist()))
                for n, c in zip(self.levels, self.codes)]

    def validate(self):
        """Check full cover and pairwise disjointness; returns True or raises."""
        d = self.dimension
        top = int(self.levels.max())
        if top * d > MAX_CODE_BITS:
            raise DomainError("partition too deep to validate with 62-bit codes")
        vol = math.fsum(2.0 ** (-int(n) * d) for n in self.levels)
        if abs(vol - 1.0) > 1e-12:
            raise AssertionError(f"volumes sum to {vol}")
        shift = (top - self.levels.astype(np.int64)) * d
        start = self.codes.astype(np.int64) << shift
        stop = (self.codes.astype(np.int64) + 1) << shift
        o = np.argsort(start)
        start, stop = start[o], stop[o]
        if start[0] != 0 or stop[-1] != (1 << (top * d)) or np.any(start[1:] != stop[:-1]):
            raise AssertionError("cubes overlap or leave a gap")
        return True

    def to_dict(self):
        cubes = self.cubes
        return {"r": self.r, "dimension": self.dimension, "cardinality": self.cardinality,
                "max_j": self.max_j, "depth_limited": self.depth_limited,
                "cubes": [[q.level, *q.coords] for q in cubes],
                "j_values": self.j_values.tolist()}

    def rows(self):
        for q, j in zip(self.cubes, self.j_values):
            yield (q.level, *q.coords, float(j))


class _Greedy:
    """Heap-driven refinement of the cube with the largest J.

    Ties go to the cube earliest in (level, lexicographic coordinates).
    """

    def __init__(self, m: DyadicMeasure, r):
        self.m, self.r = m, float(r)
        self.tables = j_table(m, r)
        self.d = m.dimension
        self.heap = []
        self.zero = []  # (level, code) of retained zero-mass cubes
        self.card = 1
        self._push(0, 0)

    def _coords(self, n, code):
        return tuple(decode(np.array([code]), n, self.d)[0].tolist())

    def _push(self, n, idx):
        lj = float(self.tables[n][idx])
        code = int(self.m.codes[n][idx])
        heapq.heappush(self.heap, (-lj, n, self._coords(n, code), idx, code))

    @property
    def top(self):
        return -self.heap[0][0]

    def can_split(self):
        return self.heap[0][1] < self.m.max_depth

    def n_children(self):
        _, n, _, idx, _ = self.heap[0]
        lo, hi = self.m.child_ranges(n)
        return int(hi[idx] - lo[idx])

    def split(self):
        _, n, _, idx, code = heapq.heappop(self.heap)
        lo, hi = self.m.child_ranges(n)
        kids = range(int(lo[idx]), int(hi[idx]))
        present = set()
        for k in kids:
            self._push(n + 1, k)
            present.add(int(self.m.codes[n + 1][k]))
        for b in range(1 << self.d):
            c = (code << self.d) | b
            if c not in present:
                self.zero.append((n + 1, c))
        self.card += len(kids) - 1

    def partition(self, depth_limited=False):
        lv = [e[1] for e in self.heap] + [z[0] for z in self.zero]
        cd = [e[4] for e in self.heap] + [z[1] for z in self.zero]
        lj = [-e[0] for e in self.heap] + [-np.inf] * len(self.zero)
        return Partition(self.d, np.array(lv, dtype=np.int64), np.array(cd, dtype=np.int64),
                         np.array(lj, dtype=float), self.r, depth_limited)


def _check_order(m, r):
    if r < 0 and m.max_depth >= 4:
        from .dyadic import dim_infty_estimate
        est = dim_infty_estimate(m).value
        if r <= -est:
            raise DomainError(f"order {r} must exceed -dim_infty (estimate {est:.4g})")


def greedy_partition(m: DyadicMeasure, r, budget) -> Partition:
    """Greedy solution of the dual problem with at most ``budget`` positive-mass cubes."""
    if budget < 1:
        raise DomainError("budget must be >= 1")
    _check_order(m, r)
    g = _Greedy(m, r)
    while True:
        if not g.can_split():
            return g.partition(depth_limited=True)
        if g.card - 1 + g.n_children() > budget:
            return g.partition()
        g.split()


def gamma_curve(m: DyadicMeasure, r, budgets):
    """Greedy ``gamma`` for several budgets from one refinement run.

    Returns ``(gamma, depth_limited)`` arrays.
    """
    budgets = np.asarray(budgets, dtype=np.int64)
    if budgets.min() < 1:
        raise DomainError("budgets must be >= 1")
    _check_order(m, r)
    g = _Greedy(m, r)
    cards, tops, limited = [g.card], [g.top], False
    big = int(budgets.max())
    while True:
        if not g.can_split():
            limited = True
            break
        if g.card - 1 + g.n_children() > big:
            break
        g.split()
        cards.append(g.card)
        tops.append(g.top)
    cards = np.array(cards)
    k = np.searchsorted(cards, budgets, side="right") - 1
    gam = np.exp2(np.array(tops)[k])
    lim = np.array([limited and kk == len(cards) - 1 for kk in k])
    return gam, lim


@dataclass
class EntropyResult:
    M: int
    partition: Partition
    x: float


def partition_entropy(m: DyadicMeasure, r, x) -> EntropyResult:
    """Least cardinality of a dyadic partition with every ``J < 1/x``."""
    if x <= 0:
        raise DomainError("x must be positive")
    _check_order(m, r)
    log_t = -math.log2(x)
    slack = threshold_slack(log_t)
    g = _Greedy(m, r)
    while g.top >= log_t - slack:
        if not g.can_split():
            raise DepthError(f"threshold 1/x = {1 / x:.6g} not reached within depth "
                             f"{m.max_depth}; best max J = {2.0 ** g.top:.6g}", best=2.0 ** g.top)
        g.split()
    part = g.partition()
    return EntropyResult(part.cardinality, part, float(x))


# ---------------------------------------------------------------- coarse counts

@dataclass
class CoarseCounts:
    r: float
    alpha: float
    levels: np.ndarray
    counts: list  # Python ints
    F_upper: float
    F_lower: float
    window: tuple = ()

    def rows(self):
        for n, c in zip(self.levels, self.counts):
            yield int(n), int(c), self.F_upper, self.F_lower


def _log2_plus(counts_log2):
    return np.maximum(counts_log2, 0.0)


def _window_stats(levels, log2_counts):
    """max and min of log2^+(count)/n over the deepest half of ``levels``."""
    levels = np.asarray(levels)
    win = fit_window(int(levels.max()))
    sel = np.isin(levels, win)
    if not sel.any():
        sel = np.ones(levels.size, dtype=bool)
    vals = _log2_plus(log2_counts[..., sel]) / levels[sel]
    return vals.max(axis=-1), vals.min(axis=-1)


def _explicit_log2_counts(m, r, alphas, levels):
    tables = j_table(m, r)
    out = np.empty((len(alphas), len(levels)))
    exact = np.empty((len(alphas), len(levels)), dtype=np.int64)
    for j, n in enumerate(levels):
        lj = np.sort(tables[n][np.isfinite(tables[n])])
        for i, a in enumerate(alphas):
            t = -a * n
            exact[i, j] = lj.size - np.searchsorted(lj, t - threshold_slack(t), side="left")
    with np.errstate(divide="ignore"):
        out[:] = np.log2(exact)
    return out, exact


def coarse_counts(m: DyadicMeasure, r, alpha, levels=None) -> CoarseCounts:
    """``#{Q in D_n : J(Q) >= 2^(-alpha n)}`` for each level."""
    if alpha <= 0:
        raise DomainError("alpha must be positive")
    levels = np.arange(1, m.max_depth + 1) if levels is None else np.asarray(levels, dtype=int)
    if levels.min() < 1 or levels.max() > m.max_depth:
        raise ValueError(f"levels must lie in 1..{m.max_depth}")
    logc, exact = _explicit_log2_counts(m, r, [alpha], levels)
    hi, lo = _window_stats(levels, logc[0])
    win = fit_window(int(levels.max()))
    return CoarseCounts(float(r), float(alpha), levels, [int(c) for c in exact[0]], float(hi),
                        float(lo), (int(win[0]), int(win[-1])))


@dataclass
class OptimizedCoarse:
    F_upper: float
    F_lower: float
    alpha_grid: np.ndarray
    upper_per_alpha: np.ndarray
    lower_per_alpha: np.ndarray
    argmax_upper: float
    argmax_lower: float
    levels: tuple

    def to_dict(self):
        return {"F_upper": self.F_upper, "F_lower": self.F_lower,
                "alpha_grid": self.alpha_grid.tolist(),
                "upper_per_alpha": self.upper_per_alpha.tolist(),
                "lower_per_alpha": self.lower_per_alpha.tolist(),
                "argmax_upper": self.argmax_upper, "argmax_lower": self.argmax_lower,
                "levels": list(self.levels)}


def _optimize(alphas, levels, log2_counts):
    hi, lo = _window_stats(levels, log2_counts)
    ru, rl = hi / alphas, lo / alphas
    iu, il = int(np.argmax(ru)), int(np.argmax(rl))
    return OptimizedCoarse(float(ru[iu]), float(rl[il]), alphas, hi, lo, float(alphas[iu]),
                           float(alphas[il]), (int(levels[0]), int(levels[-1])))


def optimized_coarse_dimension(m: DyadicMeasure, r, alpha_grid, levels=None) -> OptimizedCoarse:
    """Suprema of ``F(alpha)/alpha`` over a finite grid."""
    alphas = np.asarray(alpha_grid, dtype=float)
    if np.any(alphas <= 0):
        raise DomainError("alpha grid must be positive")
    levels = np.arange(1, m.max_depth + 1) if levels is None else np.asarray(levels, dtype=int)
    logc, _ = _explicit_log2_counts(m, r, alphas, levels)
    return _optimize(alphas, levels, logc)


# ---------------------------------------------------------------- oracles

def exhaustive_gamma(m: DyadicMeasure, r, budget):
    """Minimal max-J over all dyadic partitions with at most ``budget``
    positive-mass cubes, by dynamic programming over the stored tree."""
    tables = j_table(m, r)
    inf = math.inf

    def solve(n, idx):
        # best[k] = least achievable max log2 J using at most k cubes
        own = float(tables[n][idx])
        best = np.full(budget + 1, inf)
        best[1:] = own
        if n < m.max_depth:
            lo, hi = m.child_ranges(n)
            acc = None
            for c in range(int(lo[idx]), int(hi[idx])):
                child = solve(n + 1, c)
                if acc is None:
                    acc = child
                    continue
                merged = np.full(budget + 1, inf)
                for k in range(budget + 1):
                    # split k cubes between acc and child
                    merged[k] = min(max(acc[i], child[k - i]) for i in range(k + 1))
                acc = merged
            if acc is not None:
                best = np.minimum(best, acc)
        return best

    return float(np.exp2(solve(0, 0)[budget]))


def enumerate_partitions(m: DyadicMeasure, r):
    """All dyadic partitions of the stored tree as (cardinality, max log2 J)
    pairs.  Exponential; for tiny depths only."""
    tables = j_table(m, r)

    def rec(n, idx):
        own = [(1, float(tables[n][idx]))]
        if n == m.max_depth:
            return own
        lo, hi = m.child_ranges(n)
        combos = [(0, -math.inf)]
        for c in range(int(lo[idx]), int(hi[idx])):
            combos = [(k1 + k2, max(v1, v2)) for k1, v1 in combos for k2, v2 in rec(n + 1, c)]
        return own + combos

    return rec(0, 0)


# ---------------------------------------------------------------- cascades

class CascadeCounter:
    """Exact counts for a dyadic cascade, grouped by letter-count type classes.

    For a word ``w`` with letter counts ``k`` the cube has ``log2 J = sum_i
    k_i a_i`` with ``a_i = log2 p_i - r``.  All ``a_i < 0`` is required, so
    ``J`` decreases along every branch and the inner maximum sits at the cube
    itself.
    """

    def __init__(self, probabilities, r):
        if isinstance(probabilities, IfsCascade):
            probabilities = probabilities.probabilities
        p = np.asarray(probabilities, dtype=float)
        if np.any(p <= 0) or abs(p.sum() - 1.0) > 1e-12:
            raise DomainError("probabilities must be positive and sum to 1")
        self.r = float(r)
        a = np.log2(p) - self.r
        if np.any(a >= 0):
            raise DomainError(f"order {r} must exceed log2 max p = {math.log2(p.max()):.6g}")
        self.a = np.sort(a)[::-1]  # a[0] is the slowest-decaying letter
        self.cost = -self.a
        self.n_maps = p.size
        self._classes = {}

    # -- enumeration ------------------------------------------------------
    def _rest_vectors(self, budget):
        """Counts of letters 1.. with sum k_i cost_i <= budget."""
        cost = self.cost[1:]
        out = []

        def rec(i, used, ks):
            if i == cost.size:
                out.append((used, ks))
                return
            k = 0
            while used + k * cost[i] <= budget + threshold_slack(budget):
                rec(i + 1, used + k * cost[i], ks + (k,))
                k += 1

        rec(0, 0.0, ())
        return out

    def classes(self, L):
        """Type classes with ``log2 J >= -L`` over all word lengths.

        Returns ``(log2_j, counts, lengths)`` sorted by decreasing ``log2_j``;
        ``counts`` holds exact Python integers.
        """
        L = float(L)
        if L in self._classes:
            return self._classes[L]
        lj, cnt, ln = [], [], []
        c0 = self.cost[0]
        for used, ks in self._rest_vectors(L):
            K = sum(ks)
            base = math.factorial(K)
            for k in ks:
                base //= math.factorial(k)
            kmax = int(math.floor((L - used) / c0 + threshold_slack(L)))
            for k1 in range(kmax + 1):
                lj.append(-(used + k1 * c0))
                cnt.append(math.comb(k1 + K, k1) * base)
                ln.append(k1 + K)
        lj = np.array(lj)
        o = np.argsort(-lj, kind="stable")
        res = (lj[o], [cnt[i] for i in o], np.array(ln)[o])
        self._classes[L] = res
        return res

    def split_count(self, x):
        """Number of words with ``J >= 1/x``."""
        log_t = -math.log2(x)
        if log_t > 0:
            return 0
        lj, cnt, _ = self.classes(-log_t)
        keep = lj >= log_t - threshold_slack(log_t)
        return sum(c for c, k in zip(cnt, keep) if k)

    def partition_entropy(self, x):
        """Greedy partition size ``1 + (maps - 1) #{w : J(w) >= 1/x}``."""
        return 1 + (self.n_maps - 1) * self.split_count(x)

    def gamma(self, budget):
        """Greedy dual value for a budget of positive-mass cubes."""
        if budget < 1:
            raise DomainError("budget must be >= 1")
        k = (int(budget) - 1) // (self.n_maps - 1)
        L = 1.0
        while True:
            lj, cnt, _ = self.classes(L)
            total = 0
            for v, c in zip(lj, cnt):
                total += c
                if total >= k + 1:
                    # the next class might still be missing if it lies beyond L
                    if -v <= L:
                        return float(2.0 ** v)
            L *= 2.0

    def compositions(self, n, L=None):
        """Letter-count vectors of length-``n`` words with cost at most ``L``."""
        if L is None:
            L = n * float(self.cost.max())
        out = []
        for used, ks in self._rest_vectors(L):
            K = sum(ks)
            if K <= n:
                out.append((n - K,) + ks)
        return np.array(out, dtype=np.int64).reshape(-1, self.n_maps)

    def log2_coarse_counts(self, alphas, levels):
        """``log2 #{|w| = n : J(w) >= 2^(-alpha n)}`` for every alpha and level."""
        alphas = np.asarray(alphas, dtype=float)
        levels = np.asarray(levels, dtype=int)
        out = np.full((alphas.size, levels.size), -np.inf)
        for j, n in enumerate(levels):
            K = self.compositions(int(n), float(alphas.max()) * n)
            if K.size == 0:
                continue
            lj = K @ self.a
            lm = gammaln(n + 1) - gammaln(K + 1).sum(axis=1)
            o = np.argsort(-lj)
            lj, lm = lj[o], lm[o]
            cum = np.logaddexp.accumulate(lm) / math.log(2.0)
            t = alphas * n
            idx = np.searchsorted(-lj, t + np.array([threshold_slack(v) for v in t]), side="right")
            out[:, j] = np.where(idx > 0, cum[np.maximum(idx - 1, 0)], -np.inf)
        return out

    def coarse_counts(self, alpha, levels) -> CoarseCounts:
        """Exact integer counts (use moderate levels; integers grow like maps^n)."""
        levels = np.asarray(levels, dtype=int)
        counts = []
        for n in levels:
            K = self.compositions(int(n), alpha * n)
            lj = K @ self.a if K.size else np.zeros(0)
            t = -alpha * n
            total = 0
            for row, v in zip(K.tolist(), lj):
                if v >= t - threshold_slack(t):
                    c = math.factorial(int(n))
                    for k in row:
                        c //= math.factorial(k)
                    total += c
            counts.append(total)
        logc = np.array([math.log2(c) if c > 0 else -np.inf for c in counts])
        hi, lo = _window_stats(levels, logc)
        win = fit_window(int(levels.max()))
        return CoarseCounts(self.r, float(alpha), levels, counts, float(hi), float(lo),
                            (int(win[0]), int(win[-1])))

    def optimized_coarse_dimension(self, alpha_grid, levels) -> OptimizedCoarse:
        alphas = np.asarray(alpha_grid, dtype=float)
        if np.any(alphas <= 0):
            raise DomainError("alpha grid must be positive")
        levels = np.asarray(levels, dtype=int)
        return _optimize(alphas, levels, self.log2_coarse_counts(alphas, levels))


def log_log_slope(x, y):
    """Least-squares slope of ``log y`` against ``log x``."""
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])
