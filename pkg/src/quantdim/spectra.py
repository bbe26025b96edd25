"""Partition functions of cube masses, critical exponents and dimension identities.

Values of the set function ``J(Q) = max_{Q' subset Q} mass(Q') vol(Q')^(r/d)``
are kept as base-2 logarithms; ``vol(Q)^(r/d) = 2^(-n r)`` at level ``n``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .dyadic import CubeIndex, DyadicMeasure, dim_infty_estimate
from .errors import BracketError, DomainError, NoCrossingError

__all__ = [
    "DepthProtocol", "SpectrumCurve", "CriticalExponent", "TauValue", "JDepthProfile",
    "j_value", "j_table", "j_depth_profile", "beta_n", "tau_n", "beta_curve", "tau_curve",
    "renyi_curve", "extrapolate", "beta_hat", "tau_hat", "critical_q", "qr_bounds", "renyi",
    "d_zero", "DZero", "boundary_limit", "BoundaryLimit", "pf_regularity_report",
    "RegularityReport", "entropy_levels", "fit_window",
]

BISECTION_TOL = 1e-6
TRUNCATION_TOL = 1e-6
DIM_MARGIN = 1e-3


class DepthProtocol(str, Enum):
    """Finite-depth stand-ins for limsup over levels.

    ``MAX_FIT_V1``: larger of the deepest-level value and the intercept of a
    least-squares fit of ``value_n = a + b/n`` over the deepest half of the
    levels (equivalently the slope of ``n * value_n`` against ``n``).
    """

    MAX_FIT_V1 = "max-fit/v1"
    FIT_V1 = "fit/v1"
    DEEPEST_V1 = "deepest/v1"

    def __str__(self):
        return self.value


DEFAULT_PROTOCOL = DepthProtocol.MAX_FIT_V1


def fit_window(depth):
    """The deepest ``ceil(depth / 2)`` levels."""
    half = math.ceil(depth / 2)
    return np.arange(depth - half + 1, depth + 1)


def extrapolate(levels, values, protocol: DepthProtocol = DEFAULT_PROTOCOL):
    """Point estimate from per-level values (last axis indexes ``levels``)."""
    levels = np.asarray(levels, dtype=float)
    values = np.asarray(values, dtype=float)
    deepest = values[..., -1]
    protocol = DepthProtocol(protocol)
    if protocol is DepthProtocol.DEEPEST_V1 or levels.size < 2:
        return deepest
    # n * v_n = a n + b  ->  a
    x = levels - levels.mean()
    y = levels * values
    slope = (y * x).sum(axis=-1) / (x * x).sum()
    if protocol is DepthProtocol.FIT_V1:
        return slope
    return np.maximum(deepest, slope)


# ---------------------------------------------------------------- tables

def _log2_mass(m: DyadicMeasure, n):
    key = ("log2mass", n)
    if key not in m._cache:
        with np.errstate(divide="ignore"):
            m._cache[key] = np.log2(m.masses[n])
    return m._cache[key]


def j_table(m: DyadicMeasure, r):
    """Per-level arrays of ``log2 J`` aligned with ``m.codes``.

    For ``r >= 0`` the inner maximum is attained at the cube itself; for
    ``r < 0`` one bottom-up sweep takes the maximum over stored children.
    """
    r = float(r)
    key = ("logJ", r)
    if key in m._cache:
        return m._cache[key]
    own = [_log2_mass(m, n) - n * r for n in range(m.max_depth + 1)]
    if r >= 0:
        table = tuple(own)
    else:
        table = [None] * (m.max_depth + 1)
        table[-1] = own[-1]
        for n in range(m.max_depth - 1, -1, -1):
            child = table[n + 1]
            pi = m.parent_index(n + 1)
            starts = np.flatnonzero(np.r_[True, pi[1:] != pi[:-1]])
            best = np.full(own[n].shape, -np.inf)
            best[pi[starts]] = np.maximum.reduceat(child, starts)
            table[n] = np.maximum(own[n], best)
        table = tuple(table)
    m._cache[key] = table
    return table


def j_value(m: DyadicMeasure, r, q: CubeIndex):
    """``J(q)`` with the descendant scan truncated at ``m.max_depth``."""
    if q.level > m.max_depth:
        raise ValueError(f"cube level {q.level} beyond depth {m.max_depth}")
    codes = m.codes[q.level]
    code = q.code()
    i = np.searchsorted(codes, code)
    if i >= codes.size or codes[i] != code:
        return 0.0
    return float(2.0 ** j_table(m, r)[q.level][i])


@dataclass(frozen=True)
class JDepthProfile:
    """``J(root)`` when the descendant scan stops at each depth."""

    depths: tuple
    values: tuple
    divergent: bool


def j_depth_profile(m: DyadicMeasure, r, window=3):
    """Growth diagnostic: strictly increasing ``J(root)`` over the last
    ``window`` truncation depths is flagged as divergent."""
    own_max = np.array([float((_log2_mass(m, n) - n * r).max()) for n in range(m.max_depth + 1)])
    running = np.maximum.accumulate(own_max)
    tail = running[-(window + 1):]
    divergent = bool(r < 0 and tail.size > window and np.all(np.diff(tail) > 1e-12))
    return JDepthProfile(tuple(range(m.max_depth + 1)), tuple(2.0 ** running), divergent)


def _log2_power_sum(logv, q):
    """``log2 sum 2^(q * logv)`` over finite entries."""
    logv = logv[np.isfinite(logv)]
    if logv.size == 0:
        return -np.inf
    if q == 0:
        return math.log2(logv.size)
    t = q * logv
    top = t.max()
    return float(top + np.log2(np.sum(np.exp2(t - top))))


def _check_level(m, n):
    if not 1 <= n <= m.max_depth:
        raise ValueError(f"level must lie in 1..{m.max_depth}")


def beta_n(m: DyadicMeasure, q, n):
    """``log2 sum_Q mass(Q)^q / n`` over positive-mass level-``n`` cubes."""
    if q < 0:
        raise DomainError("q must be nonnegative")
    _check_level(m, n)
    return _log2_power_sum(_log2_mass(m, n), q) / n


@dataclass(frozen=True)
class TauValue:
    value: float
    truncated_at_level: float
    truncation_sensitive: bool
    warning: Optional[str] = None

    def __float__(self):
        return self.value


def _dim_warning(m, r):
    if r < 0 and m.max_depth >= 4:
        est = dim_infty_estimate(m).value
        if r <= -est:
            return (f"order {r} is at or below -dim_infty (estimate {est:.4g}); "
                    "the limit may be +inf, finite-level value returned")
    return None


def tau_n(m: DyadicMeasure, r, q, n) -> TauValue:
    """Finite-level J-partition function with a truncation-sensitivity check."""
    if q < 0:
        raise DomainError("q must be nonnegative")
    _check_level(m, n)
    full = _log2_power_sum(j_table(m, r)[n], q) / n
    local = _log2_power_sum(_log2_mass(m, n) - n * r, q) / n
    sensitive = bool(abs(full - local) > TRUNCATION_TOL)
    return TauValue(full, local, sensitive, _dim_warning(m, r))


# ---------------------------------------------------------------- curves

@dataclass
class SpectrumCurve:
    """Sampled ``q -> value`` at several levels with an extrapolated column."""

    kind: str
    q: np.ndarray
    levels: np.ndarray
    values: np.ndarray  # shape (len(q), len(levels))
    extrapolated: np.ndarray
    protocol: DepthProtocol = DEFAULT_PROTOCOL
    r: Optional[float] = None
    window: tuple = ()
    notes: list = field(default_factory=list)

    def rows(self):
        """(q, n, value, extrapolated) tuples, one per sample."""
        for i, q in enumerate(self.q):
            for j, n in enumerate(self.levels):
                yield float(q), int(n), float(self.values[i, j]), float(self.extrapolated[i])

    def to_dict(self):
        return {"kind": self.kind, "r": self.r, "protocol": str(self.protocol),
                "q": self.q.tolist(), "levels": self.levels.tolist(),
                "values": self.values.tolist(), "extrapolated": self.extrapolated.tolist(),
                "window": list(self.window), "notes": list(self.notes)}


def _curve_values(tables, qs, levels):
    out = np.empty((len(qs), len(levels)))
    for j, n in enumerate(levels):
        for i, q in enumerate(qs):
            out[i, j] = _log2_power_sum(tables[n], q) / n
    return out


def _levels_and_window(m, levels):
    window = fit_window(m.max_depth)
    if levels is None:
        levels = np.arange(1, m.max_depth + 1)
    levels = np.unique(np.concatenate([np.asarray(levels, dtype=int), window]))
    if levels.min() < 1 or levels.max() > m.max_depth:
        raise ValueError(f"levels must lie in 1..{m.max_depth}")
    return levels, window


def _build_curve(kind, m, tables, qs, levels, protocol, r=None):
    qs = np.asarray(qs, dtype=float)
    if np.any(qs < 0):
        raise DomainError("q must be nonnegative")
    levels, window = _levels_and_window(m, levels)
    values = _curve_values(tables, qs, levels)
    sel = np.isin(levels, window)
    ext = extrapolate(levels[sel], values[:, sel], protocol)
    return SpectrumCurve(kind, qs, levels, values, ext, DepthProtocol(protocol), r,
                         (int(window[0]), int(window[-1])))


def beta_curve(m, qs, levels=None, protocol=DEFAULT_PROTOCOL) -> SpectrumCurve:
    tables = [_log2_mass(m, n) for n in range(m.max_depth + 1)]
    return _build_curve("beta", m, tables, qs, levels, protocol)


def tau_curve(m, r, qs, levels=None, protocol=DEFAULT_PROTOCOL) -> SpectrumCurve:
    curve = _build_curve("tau", m, j_table(m, r), qs, levels, protocol, float(r))
    w = _dim_warning(m, r)
    if w:
        curve.notes.append(w)
    return curve


def beta_hat(m, q, protocol=DEFAULT_PROTOCOL):
    """Extrapolated L^q-spectrum at one q."""
    window = fit_window(m.max_depth)
    vals = [beta_n(m, q, n) for n in window]
    return float(extrapolate(window, vals, protocol))


def tau_hat(m, r, q, protocol=DEFAULT_PROTOCOL):
    """Extrapolated J-partition function at one q."""
    window = fit_window(m.max_depth)
    tables = j_table(m, r)
    vals = [_log2_power_sum(tables[n], q) / n for n in window]
    return float(extrapolate(window, vals, protocol))


def entropy_levels(m, levels=None):
    """``-sum mass log2 mass / n`` per level (the q=1 Renyi branch)."""
    if levels is None:
        levels = np.arange(1, m.max_depth + 1)
    out = []
    for n in levels:
        p = m.masses[n] / m.total
        out.append(float(-np.sum(p * np.log2(p)) / n))
    return np.array(out)


# ---------------------------------------------------------------- critical exponent

def qr_bounds(dim_M, dim_inf, r):
    """Search bracket for the critical exponent from dimension estimates.

    For ``r < 0`` the upper end is ``1 + max(dim_M - dim_inf, -r)/(dim_inf + r)``:
    the partition function at 1 is at least ``-r``, and for Lebesgue measure it
    equals ``-r`` while ``dim_M - dim_inf`` vanishes.
    """
    if dim_inf <= 0 or dim_M < dim_inf - 1e-9:
        raise DomainError("need dim_M >= dim_inf > 0")
    if r <= -dim_inf:
        raise DomainError(f"order {r} must exceed -dim_inf = {-dim_inf}")
    if r == 0:
        return 1.0, 1.0
    if r > 0:
        return 0.0, dim_M / (dim_M + r)
    lo = dim_M / (dim_M + r)
    hi = 1.0 + max(dim_M - dim_inf, -r) / (dim_inf + r)
    return lo, hi


@dataclass
class CriticalExponent:
    r: float
    q_r: float
    bracket: tuple
    search_interval: tuple
    residual: float
    dimension: float
    protocol: DepthProtocol = DEFAULT_PROTOCOL
    inside_bracket: bool = True
    degenerate: bool = False
    truncation_sensitive: bool = False
    notes: list = field(default_factory=list)

    def to_dict(self):
        return {"r": self.r, "q_r": self.q_r, "bracket": list(self.bracket),
                "search_interval": list(self.search_interval), "residual": self.residual,
                "dimension": self.dimension, "protocol": str(self.protocol),
                "inside_bracket": self.inside_bracket, "degenerate": self.degenerate,
                "truncation_sensitive": self.truncation_sensitive, "notes": list(self.notes)}


def _bisect(f, lo, hi, tol):
    flo = f(lo)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm < 0:
            hi = mid
        else:
            lo, flo = mid, fm
    return 0.5 * (lo + hi)


def critical_q(m: DyadicMeasure, r, protocol=DEFAULT_PROTOCOL, dim_inf=None,
               tol=BISECTION_TOL) -> CriticalExponent:
    """``q_r = inf{q > 0 : tau_hat(q) < 0}`` by bisection.

    ``dim_inf`` defaults to :func:`dim_infty_estimate`; the upper Minkowski
    dimension is the extrapolated value of the spectrum at 0.
    """
    r = float(r)
    protocol = DepthProtocol(protocol)
    if m.max_depth < 8:
        raise DomainError("critical_q needs depth >= 8")
    if dim_inf is None:
        dim_inf = dim_infty_estimate(m).value
    dim_M = beta_hat(m, 0.0, protocol)
    notes = []
    tau = lambda q: tau_hat(m, r, q, protocol)  # noqa: E731

    if r == 0:
        return CriticalExponent(0.0, 1.0, (1.0, 1.0), (1.0, 1.0), tau(1.0), d_zero(m, protocol).value,
                                protocol, True, True, False,
                                ["order 0: q_r = 1, dimension from -beta'(1)"])
    if dim_M <= 1e-12 or dim_inf <= 1e-12:
        # single-cube support at every level: purely atomic behaviour
        if r < 0:
            raise DomainError(f"order {r} must exceed -dim_inf = {-dim_inf:.4g}")
        return CriticalExponent(r, 0.0, (0.0, 0.0), (0.0, 0.0), tau(0.0), 0.0, protocol,
                                True, True, False, ["purely atomic at this depth: q_r = 0"])
    if r <= -dim_inf + DIM_MARGIN:
        raise DomainError(f"order {r} must exceed -dim_inf + {DIM_MARGIN} "
                          f"(dim_inf estimate {dim_inf:.6g})")
    try:
        bracket = qr_bounds(dim_M, dim_inf, r)
    except DomainError as exc:
        raise BracketError(f"inconsistent dimension estimates: {exc}") from None
    if r > 0:
        lo, hi = 0.0, 1.0
    else:
        # the root may sit exactly on the bracket end (Lebesgue measure)
        lo, hi = 1.0, max(bracket[1], dim_M / (dim_inf + r)) * (1.0 + 1e-3) + 1e-3
    if tau(hi) >= 0:
        raise NoCrossingError(f"extrapolated partition function is nonnegative on "
                              f"[{lo}, {hi}]; q_r out of range")
    if tau(lo) < 0:
        notes.append("partition function already negative at the lower search end")
        q = lo
    else:
        q = _bisect(tau, lo, hi, tol)
    inside = bracket[0] - 10 * tol <= q <= bracket[1] + 10 * tol
    if not inside:
        notes.append("q_r falls outside the dimension bracket")
    window = fit_window(m.max_depth)
    sensitive = any(tau_n(m, r, q, int(n)).truncation_sensitive for n in window)
    return CriticalExponent(r, q, bracket, (lo, hi), tau(q), r * q / (1.0 - q), protocol,
                            inside, False, sensitive, notes)


def renyi(m, r, q, protocol=DEFAULT_PROTOCOL):
    """Generalized Renyi dimension ``(tau_hat(q) + q r)/(1-q)``; entropy quotient at q=1.

    The ``q r`` term makes the value at ``q_r`` equal ``r q_r/(1-q_r)``; it
    vanishes for ``r = 0``, where this is the classical quotient.
    """
    if q < 0:
        raise DomainError("q must be nonnegative")
    if q == 1:
        window = fit_window(m.max_depth)
        return float(extrapolate(window, entropy_levels(m, window), protocol))
    return (tau_hat(m, r, q, protocol) + q * r) / (1.0 - q)


def renyi_curve(m, r, qs, levels=None, protocol=DEFAULT_PROTOCOL) -> SpectrumCurve:
    curve = tau_curve(m, r, qs, levels, protocol)
    qs = curve.q
    one = qs == 1
    shift = qs * float(r)
    with np.errstate(divide="ignore", invalid="ignore"):
        values = (curve.values + shift[:, None]) / (1.0 - qs)[:, None]
        ext = (curve.extrapolated + shift) / (1.0 - qs)
    if one.any():
        values[one] = entropy_levels(m, curve.levels)
        ext[one] = renyi(m, r, 1.0, protocol)
    return SpectrumCurve("renyi", qs, curve.levels, values, ext, curve.protocol, curve.r,
                         curve.window, curve.notes)


@dataclass(frozen=True)
class DZero:
    value: float
    coarse: float
    fine: float
    differentiable: bool


def d_zero(m, protocol=DEFAULT_PROTOCOL, delta=1e-3) -> DZero:
    """``-beta'(1)`` by central differences at ``delta`` and ``delta/2``;
    ``value`` is their Richardson combination."""
    def central(h):
        return -(beta_hat(m, 1.0 + h, protocol) - beta_hat(m, 1.0 - h, protocol)) / (2.0 * h)
    coarse, fine = central(delta), central(delta / 2.0)
    return DZero((4.0 * fine - coarse) / 3.0, coarse, fine, abs(coarse - fine) <= 1e-3)


@dataclass
class BoundaryLimit:
    a_nu: float
    limit_dim: float
    dim_inf: float
    r_grid: tuple
    q_values: tuple
    capped: bool
    errors: dict = field(default_factory=dict)


def boundary_limit(m, r_grid=None, protocol=DEFAULT_PROTOCOL, dim_inf=None, margin=DIM_MARGIN,
                   n_points=8, cap=1e6) -> BoundaryLimit:
    """Supremum of ``q_r`` over negative orders and the limit ``a/(a-1) dim_inf``.

    ``dim_inf`` defaults to the declared value of a density-backed measure, else
    the estimate.  The default grid approaches ``-dim_inf + margin`` geometrically.
    """
    if dim_inf is None:
        declared = getattr(m.density, "dim_infty", None) if m.density is not None else None
        dim_inf = declared if declared is not None else dim_infty_estimate(m).value
    if r_grid is None:
        gaps = dim_inf * np.geomspace(0.9, 2.0 * margin / dim_inf, n_points)
        r_grid = -dim_inf + gaps
    r_grid = np.asarray(sorted(r_grid, reverse=True), dtype=float)
    if np.any(r_grid >= 0) or np.any(r_grid <= -dim_inf):
        raise DomainError("grid must lie inside (-dim_inf, 0)")
    qs, errors = [], {}
    for r in r_grid:
        try:
            qs.append(critical_q(m, r, protocol, dim_inf=dim_inf).q_r)
        except (NoCrossingError, BracketError, DomainError) as exc:
            errors[float(r)] = str(exc)
            qs.append(np.nan)
    qarr = np.array(qs)
    if np.all(np.isnan(qarr)):
        raise NoCrossingError("no critical exponent could be computed on the grid")
    a = float(np.nanmax(qarr))
    capped = a > cap
    limit = dim_inf if capped else a / (a - 1.0) * dim_inf
    return BoundaryLimit(a, float(limit), float(dim_inf), tuple(r_grid.tolist()),
                         tuple(qarr.tolist()), capped, errors)


@dataclass
class RegularityReport:
    r: float
    q_r: Optional[float]
    q_grid: tuple
    spread: tuple
    max_spread: float
    derivative_gap: Optional[float]
    consistent: bool
    notes: list = field(default_factory=list)


def pf_regularity_report(m, r, protocol=DEFAULT_PROTOCOL, half_width=0.1, n_grid=11,
                         threshold=1e-3) -> RegularityReport:
    """Finite-depth evidence on whether the partition function converges near ``q_r``.

    ``spread`` is max minus min of the per-level values over the deepest half
    at each grid point.  Reports evidence only.
    """
    notes = []
    try:
        cq = critical_q(m, r, protocol)
        q_r = cq.q_r
        notes.extend(cq.notes)
    except (NoCrossingError, BracketError, DomainError) as exc:
        notes.append(f"no critical exponent: {exc}")
        cq, q_r = None, None
    centre = q_r if q_r is not None else 1.0
    grid = np.linspace(max(0.0, centre - half_width), centre + half_width, n_grid)
    window = fit_window(m.max_depth)
    vals = _curve_values(j_table(m, r), grid, window)
    spread = vals.max(axis=1) - vals.min(axis=1)
    gap = None
    if q_r is not None:
        h = 1e-3
        t0 = tau_hat(m, r, q_r, protocol)
        right = (tau_hat(m, r, q_r + h, protocol) - t0) / h
        left = (t0 - tau_hat(m, r, max(q_r - h, 0.0), protocol)) / max(min(h, q_r), 1e-300) if q_r > 0 else right
        gap = float(right - left)
        if cq.degenerate:
            notes.append("degenerate case q_r = 0" if q_r == 0 else "degenerate bracket")
    max_spread = float(spread.max())
    return RegularityReport(float(r), q_r, tuple(grid.tolist()), tuple(spread.tolist()), max_spread,
                            gap, max_spread <= threshold, notes)
