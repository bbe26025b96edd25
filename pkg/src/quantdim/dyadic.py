"""Dyadic cubes and truncated trees of cube masses.

Cubes are half-open, ``prod (k_i 2^-n, (k_i + 1) 2^-n]``.  Inside a
:class:`DyadicMeasure` the cubes of one level are stored as sorted
bit-interleaved codes: the code of a child is ``parent << d | b`` where ``b``
packs the child's offset bits with the first coordinate most significant, so
the children of a cube are contiguous and appear in lexicographic order.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from ._quadrature import DEFAULT_SETTINGS, QuadratureSettings
from .errors import CapacityError, ConfigError, ConstructionError, SpecError
from .oracles import PiecewisePolynomial, RegisteredDensity, example_density

__all__ = [
    "CubeIndex", "children", "DyadicMeasure", "IfsCascade", "Density", "Atomic",
    "MeasureSpec", "parse_spec", "preset", "build_measure", "dim_infty_estimate",
    "DimInftyEstimate", "PRUNE_THRESHOLD", "MAX_CODE_BITS",
]

MAX_CODE_BITS = 62
PRUNE_THRESHOLD = 1e-300


def _check_capacity(level, d):
    if level * d > MAX_CODE_BITS:
        raise CapacityError(f"level {level} in dimension {d} exceeds {MAX_CODE_BITS}-bit cube codes")


@dataclass(frozen=True, order=True)
class CubeIndex:
    """Dyadic cube of side ``2**-level`` with integer corner ``coords``."""

    level: int
    coords: tuple

    def __post_init__(self):
        coords = tuple(int(k) for k in self.coords)
        object.__setattr__(self, "coords", coords)
        if self.level < 0:
            raise ValueError("level must be nonnegative")
        if not coords:
            raise ValueError("coords must be nonempty")
        hi = 1 << self.level
        if any(k < 0 or k >= hi for k in coords):
            raise ValueError(f"coords {coords} out of range for level {self.level}")

    @property
    def dimension(self):
        return len(self.coords)

    @property
    def side(self):
        return 2.0 ** -self.level

    @property
    def volume(self):
        return 2.0 ** (-self.level * self.dimension)

    @property
    def lower(self):
        return np.array(self.coords, dtype=float) * self.side

    @property
    def center(self):
        return (np.array(self.coords, dtype=float) + 0.5) * self.side

    def children(self):
        return children(self)

    def parent(self):
        if self.level == 0:
            raise ValueError("the root has no parent")
        return CubeIndex(self.level - 1, tuple(k >> 1 for k in self.coords))

    def contains(self, other: "CubeIndex"):
        if other.level < self.level:
            return False
        shift = other.level - self.level
        return all((k >> shift) == j for k, j in zip(other.coords, self.coords))

    def code(self):
        return int(encode(np.array([self.coords]), self.level)[0])

    @classmethod
    def root(cls, d):
        return cls(0, (0,) * d)


def children(q: CubeIndex):
    """The ``2**d`` children of ``q`` in lexicographic coordinate order."""
    _check_capacity(q.level + 1, q.dimension)
    base = [2 * k for k in q.coords]
    return [CubeIndex(q.level + 1, tuple(b + o for b, o in zip(base, bits)))
            for bits in itertools.product((0, 1), repeat=q.dimension)]


def encode(coords, level):
    """Interleave integer coordinates ``(m, d)`` into codes at ``level``."""
    coords = np.asarray(coords, dtype=np.int64)
    d = coords.shape[1]
    _check_capacity(level, d)
    code = np.zeros(coords.shape[0], dtype=np.int64)
    for j in range(level - 1, -1, -1):
        for i in range(d):
            code = (code << 1) | ((coords[:, i] >> j) & 1)
    return code


def decode(codes, level, d):
    """Inverse of :func:`encode`; returns ``(m, d)`` int64 coordinates."""
    codes = np.asarray(codes, dtype=np.int64)
    coords = np.zeros((codes.size, d), dtype=np.int64)
    for j in range(level):
        for i in range(d):
            bit = (codes >> (j * d + (d - 1 - i))) & 1
            coords[:, i] |= bit << j
    return coords


@dataclass(frozen=True, eq=False)
class DyadicMeasure:
    """Cube masses of a finite measure on ``(0, 1]^d`` down to ``max_depth``.

    Only positive masses are stored.  ``codes[n]`` and ``masses[n]`` hold the
    level-``n`` cubes sorted by code.
    """

    dimension: int
    max_depth: int
    codes: tuple
    masses: tuple
    total: float
    pruned: int = 0
    kind: str = "generic"
    density: Optional[RegisteredDensity] = None
    atoms: Optional[tuple] = None
    spec: Optional["MeasureSpec"] = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if len(self.codes) != self.max_depth + 1 or len(self.masses) != self.max_depth + 1:
            raise ValueError("need one level table per level 0..max_depth")

    @property
    def is_normalized(self):
        return abs(self.total - 1.0) <= 1e-12

    def level(self, n):
        """Codes and masses of the positive-mass cubes at level ``n``."""
        if not 0 <= n <= self.max_depth:
            raise ValueError(f"level {n} outside 0..{self.max_depth}")
        return self.codes[n], self.masses[n]

    def n_cubes(self, n):
        return self.codes[n].size

    def coords(self, n):
        return decode(self.codes[n], n, self.dimension)

    def cubes(self, n):
        return [CubeIndex(n, tuple(c)) for c in self.coords(n).tolist()]

    def mass(self, q: CubeIndex):
        if q.dimension != self.dimension:
            raise ValueError("dimension mismatch")
        if q.level > self.max_depth:
            raise ValueError(f"cube level {q.level} beyond depth {self.max_depth}")
        code = q.code()
        codes = self.codes[q.level]
        i = np.searchsorted(codes, code)
        if i < codes.size and codes[i] == code:
            return float(self.masses[q.level][i])
        return 0.0

    def parent_index(self, n):
        """Index into level ``n - 1`` of the parent of every level-``n`` cube."""
        key = ("parent", n)
        if key not in self._cache:
            self._cache[key] = np.searchsorted(self.codes[n - 1], self.codes[n] >> self.dimension)
        return self._cache[key]

    def child_ranges(self, n):
        """For each level-``n`` cube, the slice ``[start, stop)`` of its stored children."""
        key = ("children", n)
        if key not in self._cache:
            pi = self.parent_index(n + 1)
            idx = np.arange(self.codes[n].size)
            self._cache[key] = (np.searchsorted(pi, idx, "left"), np.searchsorted(pi, idx, "right"))
        return self._cache[key]

    def additivity_error(self):
        """Largest relative mismatch between a cube and the sum of its children."""
        worst = 0.0
        for n in range(self.max_depth):
            sums = np.zeros(self.codes[n].size)
            np.add.at(sums, self.parent_index(n + 1), self.masses[n + 1])
            rel = np.abs(sums - self.masses[n]) / self.masses[n]
            # children below the prune threshold are missing on purpose
            worst = max(worst, float(rel.max(initial=0.0)))
        return worst

    def summary(self):
        return {"dimension": self.dimension, "max_depth": self.max_depth, "kind": self.kind,
                "total": self.total, "pruned": self.pruned,
                "cubes_per_level": [int(c.size) for c in self.codes]}


# ------------------------------------------------------------------ specs

@dataclass(frozen=True)
class IfsCascade:
    """Dyadic self-similar measure; offsets are elements of ``{0, 1/2}^d``."""

    offsets: tuple
    probabilities: tuple

    def __post_init__(self):
        offsets = tuple(tuple(float(v) for v in o) for o in self.offsets)
        probs = tuple(float(p) for p in self.probabilities)
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "probabilities", probs)
        if not offsets:
            raise SpecError("a cascade needs at least one map")
        if len(offsets) != len(probs):
            raise SpecError("offsets and probabilities differ in length")
        d = len(offsets[0])
        if any(len(o) != d for o in offsets):
            raise SpecError("offsets must share one dimension")
        if any(v not in (0.0, 0.5) for o in offsets for v in o):
            raise SpecError("offsets must lie in {0, 1/2}^d")
        if len(set(offsets)) != len(offsets):
            raise SpecError("offsets must be distinct")
        if any(p <= 0 for p in probs):
            raise SpecError("probabilities must be positive")
        if abs(math.fsum(probs) - 1.0) > 1e-12:
            raise SpecError(f"probabilities sum to {math.fsum(probs)!r}, not 1")

    @property
    def dimension(self):
        return len(self.offsets[0])

    def child_bits(self):
        """Interleaved offset bits of each map (first coordinate most significant)."""
        d = self.dimension
        return np.array([sum(int(v * 2) << (d - 1 - i) for i, v in enumerate(o))
                         for o in self.offsets], dtype=np.int64)


@dataclass(frozen=True, eq=False)
class Density:
    """Density on (0, 1], by registered name or a piecewise-polynomial table."""

    name: Optional[str] = None
    breakpoints: Optional[tuple] = None
    coefficients: Optional[tuple] = None
    s_h: float = math.inf
    dim_infty: Optional[float] = None

    def __post_init__(self):
        if (self.name is None) == (self.breakpoints is None):
            raise SpecError("give either a registered name or a piecewise table")

    @property
    def dimension(self):
        return 1

    def resolve(self) -> RegisteredDensity:
        if self.name is not None:
            try:
                return example_density(self.name)
            except LookupError as exc:
                raise SpecError(str(exc)) from None
        pp = PiecewisePolynomial(np.array(self.breakpoints, dtype=float),
                                 np.array(self.coefficients, dtype=float))
        if pp.breakpoints[0] < 0 or pp.breakpoints[-1] > 1:
            raise SpecError("piecewise table must live inside [0, 1]")
        probe = np.linspace(pp.breakpoints[0], pp.breakpoints[-1], 4097)[1:]
        if np.any(pp(probe) < -1e-12):
            raise SpecError("density must be nonnegative")
        total = pp.total()
        if not total > 0:
            raise SpecError("density must have positive integral")
        pp = pp.scaled(1.0 / total)
        return RegisteredDensity("table", pp, s_h=self.s_h, dim_infty=self.dim_infty,
                                 raw_integral=total, pieces=pp)


@dataclass(frozen=True)
class Atomic:
    points: tuple
    weights: tuple

    def __post_init__(self):
        pts = tuple(tuple(float(v) for v in np.atleast_1d(p)) for p in self.points)
        w = tuple(float(x) for x in self.weights)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)
        if not pts or len(pts) != len(w):
            raise SpecError("need one positive weight per point")
        if any(x <= 0 for x in w):
            raise SpecError("weights must be positive")
        d = len(pts[0])
        if any(len(p) != d for p in pts):
            raise SpecError("points must share one dimension")
        if any(not 0.0 < v <= 1.0 for p in pts for v in p):
            raise SpecError("points must lie in (0, 1]^d")

    @property
    def dimension(self):
        return len(self.points[0])


Variant = Union[IfsCascade, Density, Atomic]


@dataclass(frozen=True, eq=False)
class MeasureSpec:
    """Declarative measure description; ``normalize`` rescales to total mass 1."""

    variant: Variant
    normalize: bool = True
    label: str = ""

    @property
    def dimension(self):
        return self.variant.dimension

    def to_dict(self):
        v = self.variant
        out = {"d": self.dimension}
        if isinstance(v, IfsCascade):
            out.update(variant="ifs", offsets=[list(o) for o in v.offsets],
                       probabilities=list(v.probabilities))
        elif isinstance(v, Density):
            out["variant"] = "density"
            if v.name is not None:
                out["name"] = v.name
            else:
                out.update(breakpoints=list(v.breakpoints),
                           coefficients=[list(c) for c in v.coefficients], s_h=v.s_h)
                if v.dim_infty is not None:
                    out["dim_infty"] = v.dim_infty
        else:
            out.update(variant="atomic", points=[list(p) for p in v.points], weights=list(v.weights))
        if not self.normalize:
            out["normalize"] = False
        if self.label:
            out["label"] = self.label
        return out

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


_PRESETS = {
    "menger": {"d": 3, "variant": "ifs", "label": "menger",
               "offsets": [[0, 0, 0], [0.5, 0, 0], [0, 0.5, 0], [0, 0, 0.5]],
               "probabilities": [0.66, 0.2, 0.08, 0.06]},
    "uniform": {"d": 1, "variant": "density", "name": "uniform", "label": "uniform"},
    "linear2x": {"d": 1, "variant": "density", "name": "linear2x", "label": "linear2x"},
    "ex28": {"d": 1, "variant": "density", "name": "ex28", "label": "ex28"},
    "ex29": {"d": 1, "variant": "density", "name": "ex29", "label": "ex29"},
    "uniform-cascade": {"d": 1, "variant": "ifs", "label": "uniform-cascade",
                        "offsets": [[0], [0.5]], "probabilities": [0.5, 0.5]},
    "atom": {"d": 1, "variant": "atomic", "label": "atom", "points": [[1 / 3]], "weights": [1.0]},
}


def preset(name) -> MeasureSpec:
    try:
        return parse_spec(_PRESETS[name])
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; available: {sorted(_PRESETS)}") from None


def preset_names():
    return sorted(_PRESETS)


def parse_spec(obj) -> MeasureSpec:
    """Build a :class:`MeasureSpec` from a JSON string or a decoded mapping.

    A bare string naming a preset (e.g. ``"menger"``) is also accepted.
    """
    if isinstance(obj, str):
        text = obj.strip()
        if text in _PRESETS:
            return preset(text)
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"measure spec is not valid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise ConfigError("measure spec must be a JSON object")
    if "preset" in obj:
        return preset(obj["preset"])
    kind = obj.get("variant")
    d = obj.get("d")
    try:
        if kind == "ifs":
            variant = IfsCascade(tuple(map(tuple, obj["offsets"])), tuple(obj["probabilities"]))
        elif kind == "density":
            variant = Density(obj.get("name"),
                              tuple(obj["breakpoints"]) if "breakpoints" in obj else None,
                              tuple(map(tuple, obj["coefficients"])) if "coefficients" in obj else None,
                              float(obj.get("s_h", math.inf)),
                              obj.get("dim_infty"))
        elif kind == "atomic":
            variant = Atomic(tuple(map(lambda p: tuple(np.atleast_1d(p)), obj["points"])),
                             tuple(obj["weights"]))
        else:
            raise ConfigError(f"unknown variant {kind!r} (expected ifs, density or atomic)")
    except KeyError as exc:
        raise ConfigError(f"measure spec missing field {exc}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"malformed measure spec: {exc}") from None
    if d is not None and int(d) != variant.dimension:
        raise SpecError(f"declared d={d} but the variant has dimension {variant.dimension}")
    return MeasureSpec(variant, bool(obj.get("normalize", True)), str(obj.get("label", "")))


# ------------------------------------------------------------------ builders

def _levels_from_leaves(codes, masses, depth, d):
    """Aggregate sorted leaf codes/masses upward into per-level tables."""
    all_codes = [None] * (depth + 1)
    all_masses = [None] * (depth + 1)
    all_codes[depth], all_masses[depth] = codes, masses
    for n in range(depth, 0, -1):
        parents = all_codes[n] >> d
        starts = np.flatnonzero(np.r_[True, parents[1:] != parents[:-1]]) if parents.size else np.array([], int)
        all_codes[n - 1] = parents[starts]
        all_masses[n - 1] = np.add.reduceat(all_masses[n], starts) if starts.size else np.zeros(0)
    return tuple(all_codes), tuple(all_masses)


def _build_cascade(v: IfsCascade, depth):
    d = v.dimension
    bits = v.child_bits()
    order = np.argsort(bits)
    bits, probs = bits[order], np.array(v.probabilities)[order]
    codes = [np.zeros(1, dtype=np.int64)]
    masses = [np.ones(1)]
    pruned = 0
    for _ in range(depth):
        c = (codes[-1][:, None] << d | bits[None, :]).ravel()
        m = (masses[-1][:, None] * probs[None, :]).ravel()
        keep = m >= PRUNE_THRESHOLD
        pruned += int(np.count_nonzero(~keep))
        codes.append(c[keep])
        masses.append(m[keep])
    return tuple(codes), tuple(masses), pruned


def _build_density(dens: RegisteredDensity, depth, settings):
    edges = np.arange(2 ** depth + 1, dtype=float) * 2.0 ** -depth
    masses = np.asarray(dens.integral(edges[:-1], edges[1:], settings), dtype=float)
    bad = ~np.isfinite(masses)
    if bad.any():
        k = int(np.flatnonzero(bad)[0])
        raise ConstructionError(f"density integral is not finite on cube {CubeIndex(depth, (k,))}")
    if np.any(masses < -1e-15):
        raise ConstructionError("density integrates to a negative value on some cube")
    keep = masses >= PRUNE_THRESHOLD
    pruned = int(np.count_nonzero((masses > 0) & ~keep))
    codes = np.arange(2 ** depth, dtype=np.int64)[keep]
    return codes, masses[keep], pruned


def _build_atomic(v: Atomic, depth):
    pts = np.array(v.points, dtype=float)
    k = np.clip(np.ceil(pts * 2.0 ** depth).astype(np.int64) - 1, 0, 2 ** depth - 1)
    codes = encode(k, depth)
    uniq, inv = np.unique(codes, return_inverse=True)
    masses = np.zeros(uniq.size)
    np.add.at(masses, inv, np.array(v.weights))
    return uniq, masses


def build_measure(spec: MeasureSpec, depth: int,
                  quadrature: QuadratureSettings = DEFAULT_SETTINGS) -> DyadicMeasure:
    """Truncated mass tree of ``spec`` down to level ``depth``."""
    if isinstance(spec, (IfsCascade, Density, Atomic)):
        spec = MeasureSpec(spec)
    if not isinstance(depth, (int, np.integer)) or depth < 1:
        raise ConfigError("depth must be an integer >= 1")
    depth = int(depth)
    v = spec.variant
    d = v.dimension
    _check_capacity(depth, d)
    density = atoms = None
    if isinstance(v, IfsCascade):
        codes, masses, pruned = _build_cascade(v, depth)
        total = 1.0
        kind = "cascade"
    elif isinstance(v, Density):
        density = v.resolve()
        leaf_c, leaf_m, pruned = _build_density(density, depth, quadrature)
        total = float(math.fsum(leaf_m))
        if spec.normalize:
            leaf_m = leaf_m / total
            total = 1.0
        codes, masses = _levels_from_leaves(leaf_c, leaf_m, depth, d)
        kind = "density"
    else:
        leaf_c, leaf_m = _build_atomic(v, depth)
        total = float(math.fsum(leaf_m))
        if spec.normalize:
            leaf_m = leaf_m / total
            total = 1.0
        codes, masses = _levels_from_leaves(leaf_c, leaf_m, depth, d)
        pruned = 0
        kind = "atomic"
        w = np.array(v.weights)
        atoms = (np.array(v.points), w / w.sum() if spec.normalize else w)
    return DyadicMeasure(d, depth, codes, masses, total, pruned, kind, density, atoms, spec)


# ------------------------------------------------------------------ dim_infty

@dataclass(frozen=True)
class DimInftyEstimate:
    """Finite-depth estimate of the infinity-dimension.

    ``value`` is the coefficient of ``n`` in a least-squares fit of
    ``-log2 max_Q mass(Q)`` against ``[n, log2 n, 1]`` over the deepest half
    of the levels (plain slope when fewer than four levels are available);
    ``slope`` is the plain linear fit and ``last`` the deepest-level ratio.
    """

    value: float
    per_level: tuple
    slope: float
    last: float
    residual: float
    levels: tuple
    method: str

    @property
    def fit_diagnostics(self):
        return {"slope": self.slope, "last_level": self.last, "residual": self.residual,
                "levels": list(self.levels), "method": self.method}


def dim_infty_estimate(m: DyadicMeasure) -> DimInftyEstimate:
    if "dim_infty" in m._cache:
        return m._cache["dim_infty"]
    if m.max_depth < 4:
        raise ConfigError("dim_infty estimation needs depth >= 4")
    n = np.arange(1, m.max_depth + 1)
    y = np.array([-math.log2(float(m.masses[k].max()) / m.total) for k in n])
    per_level = tuple((int(k), float(v / k)) for k, v in zip(n, y))
    lo = m.max_depth - math.ceil(m.max_depth / 2) + 1
    sel = n >= lo
    ns, ys = n[sel].astype(float), y[sel]
    slope_fit = np.polyfit(ns, ys, 1)
    slope = float(slope_fit[0])
    if ns.size >= 4:
        A = np.column_stack([ns, np.log2(ns), np.ones_like(ns)])
        coef, *_ = np.linalg.lstsq(A, ys, rcond=None)
        value, method = float(coef[0]), "log-corrected"
        resid = ys - A @ coef
    else:
        value, method = slope, "slope"
        resid = ys - np.polyval(slope_fit, ns)
    est = DimInftyEstimate(value, per_level, slope, per_level[-1][1],
                           float(np.sqrt(np.mean(resid ** 2))), tuple(int(k) for k in ns), method)
    m._cache["dim_infty"] = est
    return est
