"""Closed-form reference values and the registry of example densities.

Every registered density lives on (0, 1] and is stored normalized; the raw
integral of the defining formula is kept in ``raw_integral``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from scipy.special import comb

from ._quadrature import (DEFAULT_SETTINGS, QuadratureSettings, adaptive_panels,
                          graded_integral)

__all__ = [
    "PiecewisePolynomial", "RegisteredDensity", "IntegralValue", "cascade_beta",
    "uniform_midpoint_error", "example_density", "registered_names",
    "register_density", "phi_zero_reference", "integrate_with_singularities",
]


@dataclass(frozen=True)
class IntegralValue:
    """A quadrature result that may have been classified as divergent."""

    value: float
    divergent: bool = False
    status: str = "converged"

    def __float__(self):
        return float(self.value)


def integrate_with_singularities(f, lo, hi, singular_points=(),
                                 settings: QuadratureSettings = DEFAULT_SETTINGS):
    """Integrate ``f`` over every interval ``[lo[i], hi[i]]``.

    Intervals are split at interior singular points; pieces ending at a
    singular point are integrated on a geometric mesh toward it.

    Returns
    -------
    values : ndarray
    divergent : ndarray of bool
    """
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    owner = np.arange(lo.size)
    for s in singular_points:
        cut = (lo < s) & (s < hi)
        if cut.any():
            owner = np.concatenate([owner, owner[cut]])
            new_lo = np.concatenate([lo, np.full(cut.sum(), s)])
            hi = np.concatenate([np.where(cut, s, hi), hi[cut]])
            lo = new_lo
    values = np.zeros(owner.size)
    divergent = np.zeros(owner.size, dtype=bool)
    touches = np.zeros(owner.size, dtype=bool)
    sing = np.asarray(singular_points, dtype=float)
    if sing.size:
        touch_lo = np.isin(lo, sing)
        touch_hi = np.isin(hi, sing)
        touches = touch_lo | touch_hi
        for i in np.nonzero(touches)[0]:
            width = hi[i] - lo[i]
            if touch_lo[i] and touch_hi[i]:
                mid = lo[i] + 0.5 * width
                a = graded_integral(f, lo[i], 0.5 * width, +1, settings)
                b = graded_integral(f, hi[i], hi[i] - mid, -1, settings)
                parts = (a, b)
            elif touch_lo[i]:
                parts = (graded_integral(f, lo[i], width, +1, settings),)
            else:
                parts = (graded_integral(f, hi[i], width, -1, settings),)
            values[i] = sum(p.value for p in parts)
            divergent[i] = any(p.status == "divergent" for p in parts)
    regular = ~touches & (hi > lo)
    if regular.any():
        values[regular], _ = adaptive_panels(f, lo[regular], hi[regular], settings)
    out = np.zeros(np.max(owner) + 1 if owner.size else 0)
    div = np.zeros(out.shape, dtype=bool)
    np.add.at(out, owner, values)
    np.logical_or.at(div, owner, divergent)
    out[div] = np.inf
    return out, div


@dataclass(frozen=True, eq=False)
class PiecewisePolynomial:
    """Polynomial pieces on ``(b[i], b[i+1]]`` with ascending coefficients in x."""

    breakpoints: np.ndarray
    coefficients: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.breakpoints, dtype=float)
        c = np.atleast_2d(np.asarray(self.coefficients, dtype=float))
        if b.ndim != 1 or b.size != c.shape[0] + 1:
            raise ValueError("need len(breakpoints) == len(coefficients) + 1")
        if np.any(np.diff(b) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "coefficients", c)
        # cumulative integral at each breakpoint
        anti = np.zeros((c.shape[0], c.shape[1] + 1))
        anti[:, 1:] = c / np.arange(1, c.shape[1] + 1)
        seg = _polyval(anti, b[1:]) - _polyval(anti, b[:-1])
        object.__setattr__(self, "_anti", anti)
        object.__setattr__(self, "_cum", np.concatenate([[0.0], np.cumsum(seg)]))

    @property
    def n_pieces(self):
        return self.coefficients.shape[0]

    @property
    def degree(self):
        return self.coefficients.shape[1] - 1

    def _piece(self, x):
        i = np.searchsorted(self.breakpoints, x, side="left") - 1
        return np.clip(i, 0, self.n_pieces - 1)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        i = self._piece(x)
        val = _polyval(self.coefficients[i], x)
        inside = (x > self.breakpoints[0]) & (x <= self.breakpoints[-1])
        return np.where(inside, val, 0.0)

    def cdf(self, x):
        """Exact integral from the left end to ``x``."""
        x = np.clip(np.asarray(x, dtype=float), self.breakpoints[0], self.breakpoints[-1])
        i = self._piece(x)
        return self._cum[i] + _polyval(self._anti[i], x) - _polyval(self._anti[i], self.breakpoints[i])

    def total(self):
        return float(self._cum[-1])

    def scaled(self, factor):
        return PiecewisePolynomial(self.breakpoints, self.coefficients * factor)

    @staticmethod
    def mixture(parts, weights):
        """Weighted sum of piecewise polynomials on a merged breakpoint set."""
        b = np.unique(np.concatenate([p.breakpoints for p in parts]))
        deg = max(p.degree for p in parts)
        coef = np.zeros((b.size - 1, deg + 1))
        mids = 0.5 * (b[1:] + b[:-1])
        for p, w in zip(parts, weights):
            inside = (mids > p.breakpoints[0]) & (mids <= p.breakpoints[-1])
            c = p.coefficients[p._piece(mids)]
            coef[inside, : c.shape[1]] += w * c[inside]
        return PiecewisePolynomial(b, coef)

    def weighted_moment(self, a, ell, r, direction=1, log=False):
        """``int_0^ell w(u) h(a + direction*u) du`` with ``w(u) = u**r``, or
        ``w(u) = log(u)`` when ``log`` is set; vectorized over ``a`` and ``ell``."""
        a, ell = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(ell, dtype=float))
        out = np.zeros(a.shape)
        deg = self.degree
        k = np.arange(deg + 1)
        for lo_b, hi_b, c in zip(self.breakpoints[:-1], self.breakpoints[1:], self.coefficients):
            if not np.any(c):
                continue
            if direction > 0:
                u0, u1 = lo_b - a, hi_b - a
            else:
                u0, u1 = a - hi_b, a - lo_b
            u0 = np.clip(u0, 0.0, ell)
            u1 = np.clip(u1, 0.0, ell)
            live = u1 > u0
            if not live.any():
                continue
            al, v0, v1 = a[live], u0[live], u1[live]
            # expand c(a + s u) = sum_k g_k(a) u^k
            g = np.zeros((al.size, deg + 1))
            for j, cj in enumerate(c):
                if cj == 0.0:
                    continue
                for kk in range(j + 1):
                    g[:, kk] += cj * comb(j, kk) * al ** (j - kk) * float(direction) ** kk
            out[live] += np.sum(g * (_moment(v1[:, None], k, r, log) - _moment(v0[:, None], k, r, log)), axis=1)
        return out


def _polyval(coef, x):
    """Evaluate rows of ascending coefficients at matching x (broadcast)."""
    coef = np.asarray(coef)
    out = np.zeros(np.broadcast(coef[..., 0], x).shape)
    for j in range(coef.shape[-1] - 1, -1, -1):
        out = out * x + coef[..., j]
    return out


def _moment(u, k, r, log=False):
    """Antiderivative of u^(r+k) (or u^k log u when ``log``), zero at u = 0."""
    with np.errstate(divide="ignore", invalid="ignore"):
        if log:
            p = k + 1.0
            val = u ** p * (np.log(u) / p - 1.0 / p ** 2)
        else:
            p = r + k + 1.0
            val = u ** p / p
    return np.where(u > 0, val, 0.0)


@dataclass(frozen=True, eq=False)
class RegisteredDensity:
    """A named probability density on (0, 1] with declared metadata.

    ``evaluator`` is already normalized.  ``pieces`` gives an exact
    piecewise-polynomial form when one exists; ``series`` yields the
    per-generation contributions of ``int h^s`` for densities defined by an
    infinite family of intervals.
    """

    name: str
    evaluator: Callable[[np.ndarray], np.ndarray]
    s_h: float
    dim_infty: Optional[float]
    raw_integral: float = 1.0
    singular_points: tuple = ()
    pieces: Optional[PiecewisePolynomial] = None
    cdf: Optional[Callable[[np.ndarray], np.ndarray]] = None
    breaks: Optional[np.ndarray] = None
    series: Optional[Callable[[np.ndarray, float], np.ndarray]] = None
    metadata: dict = field(default_factory=dict)

    def __call__(self, x):
        return self.evaluator(np.asarray(x, dtype=float))

    def integral(self, lo, hi, settings: QuadratureSettings = DEFAULT_SETTINGS):
        """Mass of the intervals ``(lo, hi]``."""
        if self.pieces is not None:
            return self.pieces.cdf(hi) - self.pieces.cdf(lo)
        if self.cdf is not None:
            return self.cdf(hi) - self.cdf(lo)
        values, _ = integrate_with_singularities(self.evaluator, lo, hi,
                                                 self.singular_points, settings)
        return values

    def power_integral(self, s, settings: QuadratureSettings = DEFAULT_SETTINGS,
                       max_terms=4000, rtol=1e-13) -> IntegralValue:
        """``int h^s dLambda`` with divergence classification."""
        if self.series is not None:
            return _sum_series(lambda n: self.series(n, s), max_terms, rtol, settings.monotone_rounds)
        f = lambda x: np.abs(self.evaluator(x)) ** s  # noqa: E731
        points = self._integration_breaks()
        values, div = integrate_with_singularities(f, points[:-1], points[1:],
                                                   self.singular_points, settings)
        if div.any():
            return IntegralValue(math.inf, True, "divergent")
        return IntegralValue(float(values.sum()))

    def s_norm(self, s, settings: QuadratureSettings = DEFAULT_SETTINGS) -> IntegralValue:
        """``||h||_s``; flagged divergent when ``int h^s`` diverges."""
        iv = self.power_integral(s, settings)
        if iv.divergent:
            return iv
        return IntegralValue(iv.value ** (1.0 / s), False, iv.status)

    def entropy_integral(self, settings: QuadratureSettings = DEFAULT_SETTINGS) -> IntegralValue:
        """``int h log h dLambda``."""
        def f(x):
            h = self.evaluator(x)
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.where(h > 0, h * np.log(np.where(h > 0, h, 1.0)), 0.0)
        points = self._integration_breaks()
        values, div = integrate_with_singularities(f, points[:-1], points[1:],
                                                   self.singular_points, settings)
        if div.any():
            return IntegralValue(math.inf, True, "divergent")
        return IntegralValue(float(values.sum()))

    def _integration_breaks(self):
        if self.breaks is not None:
            return self.breaks
        if self.pieces is not None:
            return self.pieces.breakpoints
        return np.array([0.0, 1.0])


def _sum_series(term, max_terms, rtol, monotone_rounds):
    n = np.arange(1, max_terms + 1, dtype=float)
    with np.errstate(over="ignore"):
        t = term(n)
    t = np.where(np.isfinite(t), t, np.inf)
    total = np.cumsum(t)
    if np.isfinite(total[-1]):
        tail = total[-1] - total
        done = np.nonzero(tail <= rtol * abs(total[-1]))[0]
        if done.size and done[0] < max_terms - 1:
            return IntegralValue(float(total[-1]))
    last = t[np.isfinite(t)][-monotone_rounds:]
    if np.all(np.diff(last) >= 0) or not np.isfinite(total[-1]):
        return IntegralValue(math.inf, True, "divergent")
    return IntegralValue(float(total[-1]), False, "budget")


# ---------------------------------------------------------------- closed forms

def cascade_beta(probabilities, q):
    """L^q-spectrum ``log2 sum p_i^q`` of a dyadic multiplicative cascade."""
    p = np.asarray(probabilities, dtype=float)
    if np.any(p <= 0) or abs(p.sum() - 1.0) > 1e-12:
        raise ValueError("probabilities must be positive and sum to 1")
    q = np.asarray(q, dtype=float)
    return np.log2(np.sum(p ** q[..., None], axis=-1)) if q.ndim else float(np.log2(np.sum(p ** q)))


def uniform_midpoint_error(n, r):
    """Error of order ``r`` of the equal-cell midpoint codebook for the
    uniform law on [0, 1] (not assumed optimal)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if r <= -1:
        raise ValueError("order must exceed -1 for the uniform law on [0, 1]")
    if r == 0:
        return math.exp(-1.0) / (2.0 * n)
    if math.isinf(r):
        return 1.0 / (2.0 * n)
    return (2.0 ** (-r) / (1.0 + r)) ** (1.0 / r) / n


# ---------------------------------------------------------------- registry

_REGISTRY: dict[str, Callable[[], RegisteredDensity]] = {}


def register_density(name):
    def deco(factory):
        _REGISTRY[name] = lru_cache(maxsize=None)(factory)
        return factory
    return deco


def registered_names():
    return sorted(_REGISTRY)


def example_density(name) -> RegisteredDensity:
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise LookupError(f"unknown density {name!r}; registered: {registered_names()}") from None
    return factory()


def _check_registration(dens: RegisteredDensity):
    if dens.pieces is not None:
        mass = dens.pieces.total()
    elif dens.cdf is not None:
        mass = float(dens.cdf(np.array(1.0)) - dens.cdf(np.array(0.0)))
    else:
        vals, div = integrate_with_singularities(dens.evaluator, [0.0], [1.0], dens.singular_points)
        mass = float(vals[0])
    if not math.isfinite(mass) or abs(mass - 1.0) > 1e-8:
        raise ValueError(f"density {dens.name!r} does not integrate to 1 (got {mass!r})")
    return dens


@register_density("uniform")
def _uniform():
    pp = PiecewisePolynomial(np.array([0.0, 1.0]), np.array([[1.0]]))
    return _check_registration(RegisteredDensity("uniform", pp, s_h=math.inf, dim_infty=1.0,
                                                 pieces=pp, metadata={"phi_zero": 1.0}))


@register_density("linear2x")
def _linear2x():
    pp = PiecewisePolynomial(np.array([0.0, 1.0]), np.array([[0.0, 2.0]]))
    # int 2x log(2x) dx = log 2 - 1/2
    return _check_registration(RegisteredDensity(
        "linear2x", pp, s_h=math.inf, dim_infty=1.0, pieces=pp,
        metadata={"phi_zero": math.exp(0.5) / 2.0}))


def _ex29_raw(x):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(x > 0, x ** -0.5 / np.log(x / 10.0) ** 2, 0.0)


@register_density("ex29")
def _ex29():
    z = graded_integral(_ex29_raw, 0.0, 1.0, +1).value
    return _check_registration(RegisteredDensity(
        "ex29", lambda x: _ex29_raw(x) / z, s_h=2.0, dim_infty=0.5, raw_integral=z,
        singular_points=(0.0,),
        metadata={"formula": "x^(-1/2) (log(x/10))^(-2)", "a_nu": 2.0}))


EX28_TRUNCATION = 8


def _ex28_generation_power(n, s):
    """int h^s over generation n of the infinite interval family."""
    log2_z = -math.log2(1.0 - 2.0 ** -0.5)
    # 2^n intervals * length 2^(1-3n) * height^s, in log2 to avoid overflow
    return np.exp2(n + (1.0 - 3.0 * n) + s * ((3.0 * n - 1.0) / 2.0 - log2_z))


def ex28_layout(truncation=EX28_TRUNCATION):
    """Piecewise-constant table of the first ``truncation`` generations.

    Generation n (2^n intervals of length 2^(1-3n), density |I|^(-1/2)) sits
    in (2^-n, 2^(1-n)], one interval at the left end of each of 2^n equal
    slots.  The table is zero on (0, 2^-truncation]; see :func:`_ex28` for the
    tail carried there.
    """
    z = 1.0 / (1.0 - 2.0 ** -0.5)
    edges = [0.0, 2.0 ** -truncation]
    heights = [0.0]
    for n in range(truncation, 0, -1):
        slot = 2.0 ** (-2 * n)
        length = 2.0 ** (-3 * n + 1)
        height = 2.0 ** ((3 * n - 1) / 2.0) / z
        start = 2.0 ** -n
        for k in range(2 ** n):
            a = start + k * slot
            heights.append(height)
            edges.append(a + length)
            if length < slot:
                heights.append(0.0)
                edges.append(a + slot)
    return PiecewisePolynomial(np.array(edges), np.array(heights)[:, None])


@register_density("ex28")
def _ex28():
    # Generations beyond the truncation occupy (0, 2^-T] and hold mass
    # 2^(-T/2); the whole family puts mass exactly x^(1/2) on (0, x] for
    # x = 2^-n.  The tail density x^(-1/2)/2 keeps that cumulative profile.
    pp = ex28_layout()
    cut = 2.0 ** -EX28_TRUNCATION

    def evaluate(x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            tail = np.where((x > 0) & (x <= cut), 0.5 / np.sqrt(np.where(x > 0, x, 1.0)), 0.0)
        return pp(x) + tail

    def cdf(x):
        x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        return np.sqrt(np.minimum(x, cut)) + pp.cdf(x)

    return _check_registration(RegisteredDensity(
        "ex28", evaluate, s_h=4.0 / 3.0, dim_infty=0.5, raw_integral=1.0 / (1.0 - 2.0 ** -0.5),
        singular_points=(0.0,), cdf=cdf, breaks=pp.breakpoints, series=_ex28_generation_power,
        metadata={"truncation": EX28_TRUNCATION, "tail_mass": math.sqrt(cut),
                  "tail": "x^(-1/2)/2 on (0, 2^-truncation]",
                  "layout": "generation n in (2^-n, 2^(1-n)], one interval per slot of length 4^-n"}))


@lru_cache(maxsize=None)
def phi_zero_reference(name, settings: QuadratureSettings = DEFAULT_SETTINGS) -> IntegralValue:
    """``exp(-int h log h)`` for a registered 1-d density (cached per budget)."""
    ent = example_density(name).entropy_integral(settings)
    if ent.divergent:
        return ent
    return IntegralValue(math.exp(-ent.value), False, ent.status)
