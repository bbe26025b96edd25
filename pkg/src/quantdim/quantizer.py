"""Distortion of codebooks, codebook search and error-curve fits.

Orientation: for ``r > 0`` and ``r = 0`` a better codebook has smaller
distortion; for ``r < 0`` it has larger distortion, since ``e = V**(1/r)``.

Two ways to integrate:

* cell-exact (1-d densities): Voronoi cells are split at each codebook
  point and ``int_0^l w(u) h(a +- u) du`` is evaluated in closed form for
  piecewise-polynomial densities, otherwise by quadrature graded toward the
  codebook point and the density's singular points;
* point mode: weighted points, either exact atoms or the centres of the
  deepest stored cubes of a :class:`DyadicMeasure`.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy import stats
from scipy.spatial import cKDTree

from ._quadrature import DEFAULT_SETTINGS, jacobi_rule, legendre_rule, log_rule
from .dyadic import DyadicMeasure, decode
from .errors import ConfigError, DivergenceError, DomainError
from .oracles import (PiecewisePolynomial, RegisteredDensity, example_density,
                      integrate_with_singularities, phi_zero_reference)

__all__ = [
    "DensityTarget", "PointTarget", "as_target", "Distortion", "Quantizer", "ErrorCurve",
    "distortion", "error_from_distortion", "optimize_codebook", "error_curve", "phi_r",
    "lebesgue_constant", "lebesgue_bound_check", "LebesgueCheck", "mixture_bounds_check",
    "MixtureReport", "dp1d_all", "STRATEGIES",
]

STRATEGIES = ("dp1d", "lloyd", "exhaustive")
NORMS = {"euclid": 2.0, "max": np.inf}
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _better(r, new, old):
    return new > old if r < 0 else new < old


def _orient(r):
    """Multiplier turning "better" into "smaller"."""
    return -1.0 if r < 0 else 1.0


# ---------------------------------------------------------------- targets

@dataclass(frozen=True, eq=False)
class DensityTarget:
    """A probability density on (0, 1] integrated cell by cell."""

    density: RegisteredDensity
    dimension: int = 1

    @property
    def name(self):
        return self.density.name

    @property
    def exact_pieces(self):
        return self.density.pieces is not None

    def moment(self, a, ell, r, direction, precise=False):
        """``int_0^ell w(u) h(a + direction u) du``; ``w = log`` when ``r == 0``."""
        log = r == 0
        if self.density.pieces is not None:
            return self.density.pieces.weighted_moment(a, ell, r, direction, log)
        if precise:
            return _precise_moment(self.density, a, ell, r, direction, log)
        return _panel_moment(self.density, a, ell, r, direction, log)

    def cell_costs(self, a, lo, hi, r, precise=False):
        """Integral over ``[lo, hi]`` (containing ``a``) of ``w(|x - a|) h(x)``."""
        return (self.moment(a, a - lo, r, -1, precise) + self.moment(a, hi - a, r, +1, precise))

    def mass(self, lo, hi):
        return np.asarray(self.density.integral(np.atleast_1d(lo), np.atleast_1d(hi)), dtype=float)

    def quantile(self, p):
        """Inverse CDF by bisection (vectorized)."""
        p = np.asarray(p, dtype=float)
        lo, hi = np.zeros_like(p), np.ones_like(p)
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            below = self.mass(np.zeros_like(mid), mid) < p
            lo, hi = np.where(below, mid, lo), np.where(below, hi, mid)
        return 0.5 * (lo + hi)


def _weight(u, r, log):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.log(u) if log else u ** r


def _panel_moment(h, a, ell, r, direction, log, panels=30, order=10):
    """Fixed geometric panels toward u = 0 (vectorized, moderate accuracy)."""
    a, ell = np.broadcast_arrays(np.asarray(a, float), np.asarray(ell, float))
    out = np.zeros(a.shape)
    x, w = legendre_rule(order)
    for k in range(panels):
        lo, hi = ell * 2.0 ** (-k - 1), ell * 2.0 ** (-k)
        half, mid = 0.5 * (hi - lo), 0.5 * (hi + lo)
        u = mid[..., None] + half[..., None] * x
        with np.errstate(all="ignore"):
            vals = _weight(u, r, log) * h(a[..., None] + direction * u)
        out += half * np.nan_to_num(vals @ w)
    c = ell * 2.0 ** -panels
    if log:
        tl, wl = log_rule(order)
        tg = 0.5 * (x + 1.0)
        g1 = h(a[..., None] + direction * c[..., None] * tg) @ (0.5 * w)
        g2 = h(a[..., None] + direction * c[..., None] * tl) @ wl
        with np.errstate(divide="ignore", invalid="ignore"):
            inner = c * np.where(c > 0, np.log(np.where(c > 0, c, 1.0)), 0.0) * g1 - c * g2
    else:
        tj, wj = jacobi_rule(order, float(r))
        inner = c ** (r + 1.0) * (h(a[..., None] + direction * c[..., None] * tj) @ wj)
    return out + np.nan_to_num(inner)


def _precise_moment(h: RegisteredDensity, a, ell, r, direction, log, settings=DEFAULT_SETTINGS):
    """Per-cell graded quadrature; divergent cells give ``+inf`` (or ``-inf``
    for the log weight)."""
    a, ell = np.broadcast_arrays(np.asarray(a, float), np.asarray(ell, float))
    out = np.zeros(a.shape)
    for idx in np.ndindex(a.shape):
        ai, li = float(a[idx]), float(ell[idx])
        if li <= 0:
            continue
        f = lambda u, ai=ai: _weight(u, r, log) * h(ai + direction * u)  # noqa: E731
        sing = [0.0] + [(s - ai) * direction for s in h.singular_points if 0 < (s - ai) * direction <= li]
        breaks = h._integration_breaks()
        inner = np.sort((breaks - ai) * direction)
        inner = inner[(inner > 0) & (inner < li)]
        edges = np.unique(np.concatenate([[0.0, li], inner, sing]))
        vals, div = integrate_with_singularities(f, edges[:-1], edges[1:], sing, settings)
        if div.any():
            out[idx] = -np.inf if log else np.inf
        else:
            out[idx] = vals.sum()
    return out


class PointTarget:
    """Weighted points: exact atoms, or cube centres of a stored measure level."""

    def __init__(self, points=None, weights=None, *, measure: Optional[DyadicMeasure] = None,
                 level=None, exact=None):
        if measure is not None:
            self.measure = measure
            self.level = measure.max_depth if level is None else int(level)
            if not 0 <= self.level <= measure.max_depth:
                raise ValueError("level outside the stored depth")
            self.dimension = measure.dimension
            self.half_side = 0.5 * 2.0 ** -self.level
            self.exact = False if exact is None else exact
            self._points = None
            self._weights = measure.masses[self.level] / measure.total
        else:
            pts = np.atleast_2d(np.asarray(points, dtype=float))
            if pts.shape[0] == 1 and np.ndim(points) == 1:
                pts = pts.T
            w = np.asarray(weights, dtype=float)
            if w.shape[0] != pts.shape[0] or np.any(w <= 0):
                raise ConfigError("one positive weight per point required")
            self.measure, self.level = None, None
            self.dimension = pts.shape[1]
            self.half_side = 0.0
            self.exact = True if exact is None else exact
            self._points, self._weights = pts, w / w.sum()
        self._half = None

    @classmethod
    def adaptive(cls, measure: DyadicMeasure, r, threshold):
        """Centres of the coarsest stored cubes with ``mass * side**r <= threshold``.

        Cubes still above the threshold at the deepest level are kept there.
        Needs ``r > 0``, so that the criterion shrinks down the tree.
        """
        if not r > 0:
            raise DomainError("adaptive cube selection needs a positive order")
        pts, ws, hs = [], [], []
        d = measure.dimension
        for n in range(measure.max_depth + 1):
            side = 2.0 ** -n
            big = measure.masses[n] * side ** r > threshold
            if n > 0:
                big_parent = keep_going[measure.parent_index(n)]
                stop = big_parent & (~big | (n == measure.max_depth))
            else:
                big_parent = np.ones(1, bool)
                stop = ~big | (measure.max_depth == 0)
            if stop.any():
                coords = decode(measure.codes[n][stop], n, d)
                pts.append((coords + 0.5) * side)
                ws.append(measure.masses[n][stop])
                hs.append(np.full(int(stop.sum()), 0.5 * side))
            keep_going = big_parent & big
        self = cls(np.concatenate(pts), np.concatenate(ws), exact=False)
        self.measure = measure
        self._half = np.concatenate(hs)
        self.half_side = float(self._half.max())
        return self

    def half_sides(self, start=0, stop=None):
        """Half side of the cube behind each point (scalar when uniform)."""
        if self._half is None:
            return self.half_side
        return self._half[start:stop]

    @property
    def n_points(self):
        return self._weights.size

    @property
    def weights(self):
        return self._weights

    def chunk_points(self, start, stop):
        if self._points is not None:
            return self._points[start:stop]
        coords = decode(self.measure.codes[self.level][start:stop], self.level, self.dimension)
        return (coords + 0.5) * 2.0 ** -self.level

    @property
    def points(self):
        if self._points is None:
            self._points = self.chunk_points(0, self.n_points)
        return self._points

    def chunks(self, size=1 << 20):
        for s in range(0, self.n_points, size):
            yield (self.chunk_points(s, s + size), self._weights[s:s + size],
                   self.half_sides(s, s + size))


def as_target(obj, level=None):
    """Coerce a density name, density, measure or target into a target."""
    if isinstance(obj, (DensityTarget, PointTarget)):
        return obj
    if isinstance(obj, str):
        return DensityTarget(example_density(obj))
    if isinstance(obj, RegisteredDensity):
        return DensityTarget(obj)
    if isinstance(obj, PiecewisePolynomial):
        return DensityTarget(RegisteredDensity("table", obj, s_h=math.inf, dim_infty=None, pieces=obj))
    if isinstance(obj, DyadicMeasure):
        if obj.atoms is not None:
            return PointTarget(obj.atoms[0], obj.atoms[1])
        return PointTarget(measure=obj, level=level)
    raise ConfigError(f"cannot integrate against {type(obj).__name__}")


# ---------------------------------------------------------------- distortion

@dataclass(frozen=True)
class Distortion:
    """``V`` and ``e`` of one codebook; ``bound`` is the point-mode error bound."""

    V: float
    e: float
    divergent: bool = False
    bound: float = 0.0
    mode: str = "cell-exact"


def error_from_distortion(V, r):
    if r == 0:
        return math.exp(V) if V != -math.inf else 0.0
    if math.isinf(r):
        return V
    if r < 0:
        if V == math.inf:
            return 0.0
        return V ** (1.0 / r) if V > 0 else math.inf
    return V ** (1.0 / r) if math.isfinite(V) else math.inf


def _codebook(A, d):
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A[:, None] if d == 1 else A[None, :]
    if A.ndim != 2 or A.shape[1] != d or A.shape[0] < 1:
        raise ConfigError(f"codebook must be a nonempty array of points in dimension {d}")
    return A


def _cell_edges(a):
    """Voronoi cell edges of sorted 1-d points, widened to cover (0, 1]."""
    lo = min(a[0], 0.0)
    hi = max(a[-1], 1.0)
    return np.concatenate([[lo], 0.5 * (a[:-1] + a[1:]), [hi]])


def _density_distortion(t: DensityTarget, A, r):
    a = np.sort(_codebook(A, 1)[:, 0])
    if r <= -1:
        return Distortion(math.inf, 0.0, True)
    if math.isinf(r):
        edges = np.clip(_cell_edges(a), 0.0, 1.0)
        V = float(np.max(np.maximum(a - edges[:-1], edges[1:] - a)))
        return Distortion(V, V)
    edges = _cell_edges(a)
    precise = not t.exact_pieces
    parts = t.cell_costs(a, edges[:-1], edges[1:], r, precise=precise)
    V = float(np.sum(parts))
    if r == 0 and V == -math.inf:
        return Distortion(V, 0.0, True)
    divergent = r < 0 and V == math.inf
    return Distortion(V, error_from_distortion(V, r), divergent)


def _point_distortion(t: PointTarget, A, r, norm):
    A = _codebook(A, t.dimension)
    tree = cKDTree(A)
    scale = math.sqrt(t.dimension) if norm == "euclid" else 1.0
    total, bound, top = 0.0, 0.0, 0.0
    for X, w, hs in t.chunks():
        rad = hs * scale
        d = tree.query(X, p=NORMS[norm])[0]
        if math.isinf(r):
            top = max(top, float((d + rad).max()))
            continue
        if r <= 0 and not t.exact:
            # a cube centre on a codebook point: integrate the singular
            # weight as if the code sat a quarter side away
            d = np.maximum(d, 0.5 * hs)
        with np.errstate(divide="ignore"):
            if r == 0:
                vals = np.log(d)
            else:
                vals = d ** r
        total += float(np.sum(w * vals)) if np.all(np.isfinite(vals)) else (
            math.inf if r < 0 else -math.inf)
        if np.any(rad > 0) and r > 0:
            bound += float(np.sum(w * ((d + rad) ** r - np.maximum(d - rad, 0.0) ** r)))
    if math.isinf(r):
        return Distortion(top, top, False, t.half_side * scale, "points")
    mode = "atoms" if t.exact else "cube-centres"
    divergent = (r < 0 and total == math.inf) or (r == 0 and total == -math.inf)
    return Distortion(total, error_from_distortion(total, r), divergent, bound, mode)


def distortion(target, A, r, norm="euclid") -> Distortion:
    """``int d(x, A)^r dnu`` (``int log d dnu`` for r = 0) and the error."""
    t = as_target(target)
    if norm not in NORMS:
        raise ConfigError(f"unknown norm {norm!r}")
    if isinstance(t, DensityTarget):
        return _density_distortion(t, A, r)
    return _point_distortion(t, A, r, norm)


# ---------------------------------------------------------------- results

@dataclass
class Quantizer:
    codebook: np.ndarray
    r: float
    V: float
    e: float
    method: str
    seed: Optional[int] = None
    n: int = 0
    divergent: bool = False
    budget_exceeded: bool = False
    norm: str = "euclid"
    notes: list = field(default_factory=list)

    def to_dict(self):
        return {"codebook": self.codebook.tolist(), "r": self.r, "V": _jsonable(self.V),
                "e": _jsonable(self.e), "method": self.method, "seed": self.seed, "n": self.n,
                "divergent": self.divergent, "budget_exceeded": self.budget_exceeded,
                "norm": self.norm, "notes": list(self.notes)}


def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return x


def _make_quantizer(t, A, r, method, seed, n, norm, notes=None, budget=False):
    A = _codebook(A, t.dimension)
    dv = distortion(t, A, r, norm)
    return Quantizer(A, float(r), dv.V, dv.e, method, seed, int(n), dv.divergent, budget, norm,
                     list(notes or []))


# ---------------------------------------------------------------- divergence

def _divergence_witness(t, r, norm):
    """A codebook making ``V = +inf`` for ``r < 0``, if the regime allows one."""
    if r >= 0:
        return None
    if isinstance(t, DensityTarget):
        if r <= -t.dimension:
            raise DivergenceError(f"order {r} <= -{t.dimension}: every codebook has infinite "
                                  "distortion for an absolutely continuous target")
        for s in t.density.singular_points:
            dv = distortion(t, [s], r)
            if dv.divergent:
                return np.array([[s]]), f"codebook point at the singular point {s} gives V = inf"
        return None
    if t.exact:
        return t.points[:1], "codebook point on an atom gives V = inf"
    return None


# ---------------------------------------------------------------- dp1d

def _dp_costs(t: DensityTarget, x, r):
    s = _orient(r)
    left = s * t.moment(x, x - 0.0, r, -1)
    right = s * t.moment(x, 1.0 - x, r, +1)

    def pair(i, j):
        ell = 0.5 * (x[j] - x[i])
        return s * (t.moment(x[i], ell, r, +1) + t.moment(x[j], ell, r, -1))

    return left, right, pair


def _dc_layer(F, pair, first):
    """``G[j] = min_{i<j} F[i] + pair(i, j)`` for ``j >= first`` by
    divide and conquer over a monotone argmin, all segments of one recursion
    depth evaluated together."""
    K = F.size
    G = np.full(K, np.inf)
    arg = np.full(K, -1, dtype=np.int64)
    lo = np.array([first]); hi = np.array([K - 1])
    olo = np.array([first - 1]); ohi = np.array([K - 2])
    while lo.size:
        mid = (lo + hi) // 2
        chi = np.minimum(ohi, mid - 1)
        cnt = np.maximum(chi - olo + 1, 0)
        seg = np.repeat(np.arange(lo.size), cnt)
        starts = np.concatenate([[0], np.cumsum(cnt)[:-1]])
        i = olo[seg] + (np.arange(seg.size) - starts[seg])
        j = mid[seg]
        vals = F[i] + pair(i, j)
        vals = np.where(np.isnan(vals), np.inf, vals)
        has = cnt > 0
        best = np.full(lo.size, np.inf)
        best[has] = np.minimum.reduceat(vals, starts[has])
        # earliest index attaining the minimum
        hit = vals <= best[seg]
        first_hit = np.full(lo.size, -1, dtype=np.int64)
        hs = seg[hit]
        hi_idx = i[hit]
        u, pos = np.unique(hs, return_index=True)
        first_hit[u] = hi_idx[pos]
        opt = np.where(first_hit >= 0, first_hit, olo)
        G[mid] = best
        arg[mid] = np.where(first_hit >= 0, first_hit, -1)
        left = lo <= mid - 1
        right = mid + 1 <= hi
        lo, hi, olo, ohi = (np.concatenate([lo[left], mid[right] + 1]),
                            np.concatenate([mid[left] - 1, hi[right]]),
                            np.concatenate([olo[left], opt[right]]),
                            np.concatenate([opt[left], ohi[right]]))
    return G, arg


def _full_layer(F, pair, first):
    """Reference O(K^2) layer for small grids."""
    K = F.size
    G = np.full(K, np.inf)
    arg = np.full(K, -1, dtype=np.int64)
    for j in range(first, K):
        i = np.arange(first - 1, j)
        vals = F[i] + pair(i, np.full(i.size, j))
        vals = np.where(np.isnan(vals), np.inf, vals)
        k = int(np.argmin(vals))
        G[j], arg[j] = vals[k], i[k]
    return G, arg


def dp1d_all(target, n_max, r, grid=12, exhaustive_layers=False):
    """Optimal grid codebooks for every size ``1..n_max`` on the grid
    ``k 2^-grid``.  Returns a list of sorted codebooks (index ``n - 1``)."""
    t = as_target(target)
    if not isinstance(t, DensityTarget):
        raise ConfigError("dp1d needs a 1-d density target")
    K = 2 ** grid + 1
    if n_max > K:
        raise ConfigError(f"n = {n_max} exceeds the {K} grid points")
    x = np.arange(K) / 2.0 ** grid
    left, right, pair = _dp_costs(t, x, r)
    layer = _full_layer if exhaustive_layers else _dc_layer
    F = left.copy()
    args = []
    books = []
    for k in range(1, n_max + 1):
        if k > 1:
            F, arg = layer(F, pair, k - 1)
            args.append(arg)
        total = F + right
        total = np.where(np.isnan(total), np.inf, total)
        j = int(np.argmin(total))
        idx = [j]
        for arg in reversed(args):
            j = int(arg[j])
            idx.append(j)
        books.append(x[np.array(idx[::-1])])
    return books


# ---------------------------------------------------------------- lloyd

def _golden_1d(f, lo, hi, iters=48):
    """Vectorized golden-section minimization of ``f`` on ``[lo, hi]``."""
    a, b = lo.copy(), hi.copy()
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        left = fc <= fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        d_new = np.where(left, c, a + GOLDEN * (b - a))
        c_new = np.where(left, b - GOLDEN * (b - a), d)
        fd_new = np.where(left, fc, np.nan)
        fc_new = np.where(left, np.nan, fd)
        c, d = c_new, d_new
        need_c = np.isnan(fc_new)
        need_d = np.isnan(fd_new)
        if need_c.any():
            fc_new[need_c] = f(c)[need_c]
        if need_d.any():
            fd_new[need_d] = f(d)[need_d]
        fc, fd = fc_new, fd_new
    return 0.5 * (a + b)


def _lloyd_density(t: DensityTarget, a0, r, max_iter=200, tol=1e-9):
    s = _orient(r)
    a = np.sort(np.asarray(a0, float).ravel())
    V = _density_distortion(t, a, r).V
    it = 0
    for it in range(1, max_iter + 1):
        edges = np.clip(_cell_edges(a), 0.0, 1.0)
        lo, hi = edges[:-1], edges[1:]
        if r == 2:
            m0 = t.mass(lo, hi)
            m1 = t.moment(lo, hi - lo, 1.0, +1)
            with np.errstate(invalid="ignore", divide="ignore"):
                new = np.where(m0 > 0, lo + m1 / m0, a)
        else:
            new = _golden_1d(lambda c: s * t.cell_costs(c, lo, hi, r), lo, hi)
        new = np.sort(new)
        Vn = _density_distortion(t, new, r).V
        if not (_better(r, Vn, V) or Vn == V):
            break
        change = abs(Vn - V) / max(abs(V), 1e-300)
        a, V = new, Vn
        if change < tol:
            break
    return a, it


def _assign(A, X, norm):
    """Nearest codebook index; exact ties go to the lower index."""
    k = min(2, A.shape[0])
    d, i = cKDTree(A).query(X, k=k, p=NORMS[norm])
    if k == 1:
        return i.reshape(-1), d.reshape(-1)
    tie = (d[:, 1] == d[:, 0]) & (i[:, 1] < i[:, 0])
    lab = np.where(tie, i[:, 1], i[:, 0])
    return lab, d[:, 0]


def _point_cost(X, w, C, lab, r, norm, floor):
    diff = X - C[lab]
    d = np.linalg.norm(diff, axis=1) if norm == "euclid" else np.abs(diff).max(axis=1)
    if np.any(floor > 0) and r <= 0:
        d = np.maximum(d, floor)
    with np.errstate(divide="ignore"):
        v = np.log(d) if r == 0 else d ** r
    return np.bincount(lab, w * v, minlength=C.shape[0])


def _cell_update(t: PointTarget, X, w, A, lab, r, norm, candidates):
    n = A.shape[0]
    s = _orient(r)
    floor = 0.5 * t.half_sides() if not t.exact else 0.0
    if candidates is not None:
        C = np.asarray(candidates, float)
        cost = np.zeros((n, C.shape[0]))
        for j in range(C.shape[0]):
            cost[:, j] = _point_cost(X, w, np.repeat(C[j:j + 1], n, axis=0), lab, r, norm, floor)
        return C[np.argmin(s * cost, axis=1)]
    mass = np.bincount(lab, w, minlength=n)
    empty = mass <= 0
    if r == 2 and norm == "euclid":
        new = np.stack([np.bincount(lab, w * X[:, k], minlength=n) for k in range(X.shape[1])], 1)
        with np.errstate(invalid="ignore", divide="ignore"):
            new = new / mass[:, None]
        return np.where(empty[:, None], A, new)
    if r == 1 and norm == "euclid":
        c = A.copy()
        for _ in range(20):
            dist = np.maximum(np.linalg.norm(X - c[lab], axis=1), 1e-15)
            ww = w / dist
            den = np.bincount(lab, ww, minlength=n)
            num = np.stack([np.bincount(lab, ww * X[:, k], minlength=n) for k in range(X.shape[1])], 1)
            with np.errstate(invalid="ignore", divide="ignore"):
                c = np.where(empty[:, None] | (den[:, None] <= 0), c, num / den[:, None])
        return c
    # coordinate-wise golden section inside each cell's bounding box
    c = A.copy()
    lo = np.full_like(A, np.inf)
    hi = np.full_like(A, -np.inf)
    np.minimum.at(lo, lab, X)
    np.maximum.at(hi, lab, X)
    lo = np.where(empty[:, None], A, lo)
    hi = np.where(empty[:, None], A, hi)
    for k in range(A.shape[1]):
        def f(v, k=k):
            cc = c.copy()
            cc[:, k] = v
            return s * _point_cost(X, w, cc, lab, r, norm, floor)
        c[:, k] = _golden_1d(f, lo[:, k], hi[:, k], iters=60)
    return c


def _point_V(t, X, w, A, r, norm):
    lab, _ = _assign(A, X, norm)
    floor = 0.5 * t.half_sides() if not t.exact else 0.0
    return float(np.sum(_point_cost(X, w, A, lab, r, norm, floor))), lab


def _lloyd_points(t: PointTarget, A0, r, norm, candidates=None, max_iter=200, tol=1e-9):
    X, w = t.points, t.weights
    A = np.array(A0, float)
    V, lab = _point_V(t, X, w, A, r, norm)
    it = 0
    for it in range(1, max_iter + 1):
        new = _cell_update(t, X, w, A, lab, r, norm, candidates)
        Vn, lab_n = _point_V(t, X, w, new, r, norm)
        if not (_better(r, Vn, V) or Vn == V):
            break
        change = abs(Vn - V) / max(abs(V), 1e-300) if np.isfinite(V) and np.isfinite(Vn) else 0.0
        A, V, lab = new, Vn, lab_n
        if change < tol:
            break
    if candidates is not None:
        A, V = _swap_polish(t, X, w, A, V, r, norm, np.asarray(candidates, float))
    return A, it


def _swap_polish(t, X, w, A, V, r, norm, C):
    """Single-point swaps with candidate points until no swap improves."""
    improved = True
    while improved:
        improved = False
        for i in range(A.shape[0]):
            for c in C:
                trial = A.copy()
                trial[i] = c
                Vt, _ = _point_V(t, X, w, trial, r, norm)
                if _better(r, Vt, V):
                    A, V, improved = trial, Vt, True
    return A, V


def _initial_points(t, n, rng, candidates, first):
    """Deterministic quantile/heaviest start for ``first``, random otherwise."""
    if isinstance(t, DensityTarget):
        if first:
            return t.quantile((np.arange(n) + 0.5) / n)
        return np.sort(t.quantile(np.sort(rng.random(n))))
    if candidates is not None:
        pool = np.asarray(candidates, float)
        k = min(n, pool.shape[0])
        return pool[np.sort(rng.choice(pool.shape[0], size=k, replace=False))]
    return _seeded_points(t.points, t.weights, n, rng, first)


def _seeded_points(X, w, n, rng, first, power=2.0):
    """k-means++ style seeding: each new point drawn with probability
    proportional to mass times squared distance to the points chosen so far."""
    k = min(n, int(np.count_nonzero(w)))
    idx = [int(np.argmax(w)) if first else int(rng.choice(w.size, p=w))]
    d = np.linalg.norm(X - X[idx[0]], axis=1)
    for _ in range(1, k):
        p = w * d ** power
        tot = p.sum()
        if tot <= 0:
            break
        j = int(rng.choice(w.size, p=p / tot))
        idx.append(j)
        d = np.minimum(d, np.linalg.norm(X - X[j], axis=1))
    return X[np.sort(idx)]


# ---------------------------------------------------------------- exhaustive

def _exhaustive(t, n, r, norm, candidates, limit=200_000):
    if candidates is None:
        if isinstance(t, DensityTarget):
            candidates = np.linspace(0.0, 1.0, 65)[:, None]
        elif t.exact:
            candidates = t.points
        else:
            raise ConfigError("exhaustive search needs a candidate set for measure targets")
    C = np.asarray(candidates, float)
    if C.ndim == 1:
        C = C[:, None]
    k = min(n, C.shape[0])
    if math.comb(C.shape[0], k) > limit:
        raise ConfigError(f"{math.comb(C.shape[0], k)} codebooks exceed the exhaustive limit {limit}")
    best, bestV = None, None
    for comb in itertools.combinations(range(C.shape[0]), k):
        A = C[list(comb)]
        V = distortion(t, A, r, norm).V
        if best is None or _better(r, V, bestV):
            best, bestV = A, V
    return best


# ---------------------------------------------------------------- driver

def optimize_codebook(target, n, r, strategy="lloyd", seed=0, grid=12, starts=4,
                      candidates=None, max_iter=200, tol=1e-9, norm="euclid", init=None,
                      level=None) -> Quantizer:
    """Best codebook of at most ``n`` points found by ``strategy``."""
    t = as_target(target, level)
    if n < 1:
        raise ConfigError("n must be >= 1")
    if strategy not in STRATEGIES:
        raise ConfigError(f"unknown strategy {strategy!r}; choose from {STRATEGIES}")
    if norm not in NORMS:
        raise ConfigError(f"unknown norm {norm!r}")
    if math.isinf(r) and strategy != "exhaustive":
        raise ConfigError("order inf is supported by distortion() and exhaustive search only")
    witness = _divergence_witness(t, r, norm)
    if witness is not None:
        A, why = witness
        return _make_quantizer(t, A, r, "divergence-witness", seed, n, norm, [why])
    if isinstance(t, PointTarget) and t.exact and n >= t.n_points and r >= 0:
        return _make_quantizer(t, t.points, r, strategy, seed, n, norm, ["codebook = support"])
    if strategy == "dp1d":
        A = dp1d_all(t, n, r, grid)[-1]
        return _make_quantizer(t, A, r, "dp1d", None, n, norm, [f"grid 2^-{grid}"])
    if strategy == "exhaustive":
        A = _exhaustive(t, n, r, norm, candidates)
        return _make_quantizer(t, A, r, "exhaustive", None, n, norm)
    rng_root = np.random.SeedSequence(seed)
    streams = [np.random.default_rng(s) for s in rng_root.spawn(max(starts, 1))]
    best = None
    inits = [] if init is None else [np.asarray(init, float)]
    for k, rng in enumerate(streams):
        inits.append(_initial_points(t, n, rng, candidates, first=(k == 0)))
    budget = False
    for A0 in inits:
        if isinstance(t, DensityTarget):
            A, it = _lloyd_density(t, A0, r, max_iter, tol)
        else:
            A, it = _lloyd_points(t, _codebook(A0, t.dimension), r, norm, candidates, max_iter, tol)
        budget |= it >= max_iter
        q = _make_quantizer(t, A, r, "lloyd", seed, n, norm)
        if best is None or _better(r, q.V, best.V):
            best = q
    best.budget_exceeded = budget
    return best


@dataclass
class ErrorCurve:
    n: np.ndarray
    e: np.ndarray
    r: float
    D_hat: float
    D_band: tuple
    c_hat: float
    kappa: float
    fit_n: tuple
    method: str
    divergent: bool = False
    quantizers: list = field(default_factory=list, repr=False)
    notes: list = field(default_factory=list)

    def rows(self):
        for n, e in zip(self.n, self.e):
            yield int(n), float(e), math.log(n), (-math.log(e) if e > 0 else math.inf)

    def to_dict(self):
        return {"r": self.r, "n": self.n.tolist(), "e": [_jsonable(float(v)) for v in self.e],
                "D_hat": _jsonable(self.D_hat), "D_band": [_jsonable(v) for v in self.D_band],
                "c_hat": _jsonable(self.c_hat), "kappa": _jsonable(float(self.kappa)), "fit_n": list(self.fit_n),
                "method": self.method, "divergent": self.divergent, "notes": list(self.notes)}


def _fit(n, e, kappa):
    n = np.asarray(n, float)
    e = np.asarray(e, float)
    k = math.ceil(n.size / 2)
    ns, es = n[-k:], e[-k:]
    if ns.size >= 2 and np.all(es > 0) and np.ptp(np.log(es)) > 0:
        fit = stats.linregress(-np.log(es), np.log(ns))
        D = float(fit.slope)
        half = 1.96 * float(fit.stderr) if ns.size > 2 else 0.0
        band = (D - half, D + half)
    else:
        D, band = math.nan, (math.nan, math.nan)
    kap = D if kappa is None else kappa
    c = float(np.exp(np.mean(np.log(ns ** (1.0 / kap) * es)))) if np.all(es > 0) and kap else math.nan
    return D, band, c, (int(ns[0]), int(ns[-1])), kap


def error_curve(target, r, n_list, strategy="lloyd", seed=0, kappa=None, grid=12, starts=4,
                norm="euclid", level=None, eval_level=None, **kw) -> ErrorCurve:
    """Errors for increasing codebook sizes with monotone nesting and fits.

    ``kappa`` defaults to the dimension of a density target, otherwise to the
    fitted dimension.  ``eval_level`` (measure targets) re-evaluates the final
    codebooks on a deeper stored level than the one used for optimization.
    """
    t = as_target(target, level)
    n_list = np.asarray(sorted(set(int(v) for v in n_list)))
    if n_list.size == 0 or n_list[0] < 1:
        raise ConfigError("n_list must contain positive sizes")
    if kappa is None and isinstance(t, DensityTarget):
        kappa = float(t.dimension)
    eval_t = None
    if eval_level is not None and isinstance(t, PointTarget) and t.measure is not None:
        eval_t = PointTarget(measure=t.measure, level=eval_level)
    try:
        witness = _divergence_witness(t, r, norm)
    except DivergenceError as exc:
        return ErrorCurve(n_list, np.zeros(n_list.size), float(r), math.nan, (math.nan, math.nan),
                          math.nan, kappa or math.nan, (), strategy, True, [], [str(exc)])
    if witness is not None:
        q = _make_quantizer(t, witness[0], r, "divergence-witness", seed, int(n_list[0]), norm,
                            [witness[1]])
        return ErrorCurve(n_list, np.zeros(n_list.size), float(r), math.nan, (math.nan, math.nan),
                          math.nan, kappa or math.nan, (), strategy, True, [q], [witness[1]])
    quantizers = []
    if strategy == "dp1d":
        books = dp1d_all(t, int(n_list[-1]), r, grid)
        for n in n_list:
            quantizers.append(_make_quantizer(t, books[n - 1], r, "dp1d", None, n, norm,
                                              [f"grid 2^-{grid}"]))
    else:
        prev = None
        for n in n_list:
            init = None
            if prev is not None and strategy == "lloyd":
                init = _grow(t, prev.codebook, n, r, norm)
            q = optimize_codebook(t, n, r, strategy, seed, grid, starts, init=init, norm=norm, **kw)
            quantizers.append(q)
            prev = q
    # nesting: a smaller codebook is admissible at every larger size
    notes = []
    for k in range(1, len(quantizers)):
        a, b = quantizers[k - 1], quantizers[k]
        if _better(r, a.V, b.V):
            quantizers[k] = Quantizer(a.codebook, a.r, a.V, a.e, a.method + "+nested", a.seed,
                                      b.n, a.divergent, a.budget_exceeded, norm,
                                      a.notes + [f"reused size-{a.codebook.shape[0]} codebook"])
            notes.append(f"n={b.n}: smaller codebook reused")
    if eval_t is not None:
        quantizers = [_make_quantizer(eval_t, q.codebook, r, q.method, q.seed, q.n, norm,
                                      q.notes + [f"evaluated at level {eval_level}"])
                      for q in quantizers]
    e = np.array([q.e for q in quantizers])
    divergent = any(q.divergent for q in quantizers)
    if divergent:
        cut = next(i for i, q in enumerate(quantizers) if q.divergent)
        notes.append(f"divergent from n={n_list[cut]}")
        e[cut:] = 0.0
        return ErrorCurve(n_list, e, float(r), math.nan, (math.nan, math.nan), math.nan,
                          kappa or math.nan, (), strategy, True, quantizers, notes)
    D, band, c, fit_n, kap = _fit(n_list, e, kappa)
    if np.any(e[-math.ceil(e.size / 2):] == 0):
        notes.append("zero error reached (finite support): no dimension fit")
    return ErrorCurve(n_list, e, float(r), D, band, c, kap, fit_n, strategy, False, quantizers, notes)


def _grow(t, A, n, r, norm):
    """Extend a codebook to ``n`` points by splitting its heaviest cells."""
    A = np.array(A, float)
    if isinstance(t, DensityTarget):
        a = np.sort(A[:, 0] if A.ndim == 2 else A)
        while a.size < n:
            edges = np.clip(_cell_edges(a), 0.0, 1.0)
            mass = t.mass(edges[:-1], edges[1:])
            k = int(np.argmax(mass))
            a = np.sort(np.concatenate([a, [0.5 * (edges[k] + edges[k + 1])]]))
            a = np.unique(a)
            if a.size < n and np.all(mass <= 0):
                break
        return a
    X, w = t.points, t.weights
    while A.shape[0] < n:
        lab, d = _assign(A, X, norm)
        cost = np.bincount(lab, w * d, minlength=A.shape[0])
        k = int(np.argmax(cost))
        members = lab == k
        far = np.flatnonzero(members)[np.argmax(d[members])] if members.any() else 0
        A = np.vstack([A, X[far]])
    return A


# ---------------------------------------------------------------- functionals and checks

def phi_r(h, r, d=1):
    """Density functional: ``||h||_{d/(d+r)}^(1/r)``, the entropy form at 0,
    and 0 for ``r <= -d`` or a non-integrable power when ``r < 0``."""
    dens = example_density(h) if isinstance(h, str) else h
    if r <= -d:
        return 0.0
    if r == 0:
        if isinstance(h, str):
            ref = phi_zero_reference(h)
            return 0.0 if ref.divergent else ref.value ** (1.0 / d)
        ent = dens.entropy_integral()
        return 0.0 if ent.divergent else math.exp(-ent.value / d)
    s = d / (d + r)
    iv = dens.power_integral(s)
    if iv.divergent:
        return 0.0 if r < 0 else math.inf
    return (iv.value ** (1.0 / s)) ** (1.0 / r)


def lebesgue_constant(r, d=1):
    return 2.0 ** (-r) + 18.0 ** d / (2.0 ** r - 2.0 ** (-d))


@dataclass(frozen=True)
class LebesgueCheck:
    lhs: float
    bound: float
    holds: bool


def lebesgue_bound_check(A, r, d=1) -> LebesgueCheck:
    """Compare ``int d(x, A)^r dx`` over the unit interval with ``C m^(-r/d)``."""
    if not -d < r < 0:
        raise DomainError("order must lie in (-d, 0)")
    if d != 1:
        raise DomainError("only the unit interval is supported")
    A = np.asarray(A, float).ravel()
    lhs = distortion(example_density("uniform"), A, r).V
    bound = lebesgue_constant(r, d) * A.size ** (-r / d)
    return LebesgueCheck(lhs, bound, bool(lhs <= bound))


@dataclass
class MixtureReport:
    v_mixture: float
    v_components: tuple
    v_components_parts: tuple
    upper_rhs: float
    lower_rhs: float
    upper_holds: bool
    lower_holds: bool
    slack: float


def mixture_bounds_check(components, weights, n, n_parts, r, strategy="dp1d", seed=0,
                         slack=0.02, grid=12) -> MixtureReport:
    """Both convexity inequalities for a mixture of 1-d densities (``r < 0``).

    Computed values for ``r < 0`` are lower bounds of the true suprema, so
    the upper inequality allows ``slack`` on its right side and the lower one
    on its left side.
    """
    if r >= 0:
        raise DomainError("the mixture inequalities are stated for negative orders")
    if sum(n_parts) > n:
        raise DomainError("sum of part sizes must not exceed n")
    w = np.asarray(weights, float)
    if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
        raise DomainError("weights must be positive and sum to 1")
    comps = [as_target(c) for c in components]
    if not all(isinstance(c, DensityTarget) and c.exact_pieces for c in comps):
        raise ConfigError("components must be piecewise-polynomial densities")
    mix = PiecewisePolynomial.mixture([c.density.pieces for c in comps], w)
    mix_t = as_target(mix)

    def best(t, k):
        return optimize_codebook(t, k, r, strategy, seed, grid).V

    v_mix = best(mix_t, n)
    v_n = tuple(best(c, n) for c in comps)
    v_parts = tuple(best(c, k) for c, k in zip(comps, n_parts))
    upper = float(np.dot(w, v_n))
    lower = float(np.dot(w, v_parts))
    return MixtureReport(v_mix, v_n, v_parts, upper, lower, bool(v_mix <= upper * (1 + slack)),
                         bool(v_mix >= lower * (1 - slack)), slack)
