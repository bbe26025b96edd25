"""scikit-learn style wrappers around the functional core.

``SpectrumEstimator`` fits a measure description and predicts spectrum
values; ``OptimalQuantizer`` fits a codebook and assigns points to it.
"""
from __future__ import annotations

import numbers

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .dyadic import DyadicMeasure, MeasureSpec, build_measure, dim_infty_estimate, parse_spec, preset
from .errors import ConfigError
from .quantizer import NORMS, STRATEGIES, _assign, as_target, optimize_codebook
from .spectra import DEFAULT_PROTOCOL, DepthProtocol, critical_q, tau_hat

__all__ = ["SpectrumEstimator", "OptimalQuantizer", "check_order", "check_depth", "resolve_measure"]


def check_order(r, allow_inf=False):
    """Validate a quantization order."""
    if isinstance(r, bool) or not isinstance(r, numbers.Real):
        raise ConfigError(f"order must be a real number, got {r!r}")
    r = float(r)
    if np.isnan(r) or (np.isinf(r) and not (allow_inf and r > 0)):
        raise ConfigError(f"order {r} is not allowed here")
    return r


def check_depth(depth, minimum=1):
    if isinstance(depth, bool) or not isinstance(depth, numbers.Integral) or depth < minimum:
        raise ConfigError(f"depth must be an integer >= {minimum}, got {depth!r}")
    return int(depth)


def resolve_measure(X, depth):
    """Accept a built measure or anything ``parse_spec`` understands (preset name, JSON, dict)."""
    if isinstance(X, DyadicMeasure):
        return X
    if isinstance(X, MeasureSpec):
        spec = X
    elif isinstance(X, str) and not X.lstrip().startswith("{"):
        spec = preset(X)
    else:
        spec = parse_spec(X)
    return build_measure(spec, check_depth(depth))


class SpectrumEstimator(BaseEstimator):
    """Critical exponent and dimension of a measure at a fixed order.

    Parameters
    ----------
    order : float
        Quantization order (nonzero values and 0 are accepted).
    depth : int
        Construction depth when ``fit`` receives a description.
    protocol : str
        Depth-extrapolation protocol identifier.

    Attributes
    ----------
    measure_ : DyadicMeasure
    critical_ : CriticalExponent
    q_ : float
    dimension_ : float
    dim_infty_ : float
    """

    def __init__(self, order=-0.5, depth=10, protocol=DEFAULT_PROTOCOL.value):
        self.order = order
        self.depth = depth
        self.protocol = protocol

    def fit(self, X, y=None):
        r = check_order(self.order)
        proto = DepthProtocol(self.protocol)
        self.measure_ = resolve_measure(X, self.depth)
        self.dim_infty_ = dim_infty_estimate(self.measure_).value
        self.critical_ = critical_q(self.measure_, r, proto)
        self.q_ = self.critical_.q_r
        self.dimension_ = self.critical_.dimension
        return self

    def predict(self, q):
        """Extrapolated spectrum values at the given exponents."""
        check_is_fitted(self, "critical_")
        q = check_array(np.atleast_1d(np.asarray(q, dtype=float)).reshape(-1, 1), ensure_all_finite=True)
        proto = DepthProtocol(self.protocol)
        return np.array([tau_hat(self.measure_, float(self.order), float(v), proto) for v in q[:, 0]])


class OptimalQuantizer(BaseEstimator):
    """Codebook of ``n_codes`` points minimizing the order-``order`` distortion.

    ``fit`` accepts weighted samples (an ``(m, d)`` array plus
    ``sample_weight``), a density name, or a measure.
    """

    def __init__(self, n_codes=8, order=2.0, strategy="lloyd", seed=0, grid=12, starts=4,
                 norm="euclid"):
        self.n_codes = n_codes
        self.order = order
        self.strategy = strategy
        self.seed = seed
        self.grid = grid
        self.starts = starts
        self.norm = norm

    def _validate(self):
        if not isinstance(self.n_codes, numbers.Integral) or self.n_codes < 1:
            raise ConfigError("n_codes must be a positive integer")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {STRATEGIES}")
        if self.norm not in NORMS:
            raise ConfigError(f"norm must be one of {tuple(NORMS)}")
        return check_order(self.order, allow_inf=True)

    def fit(self, X, y=None, sample_weight=None):
        r = self._validate()
        if isinstance(X, np.ndarray) or isinstance(X, (list, tuple)):
            pts = check_array(X, ensure_2d=False, ensure_all_finite=True)
            if pts.ndim == 1:
                pts = pts[:, None]
            w = np.ones(pts.shape[0]) if sample_weight is None else np.asarray(sample_weight, float)
            from .quantizer import PointTarget
            target = PointTarget(pts, w)
        else:
            target = as_target(X)
        self.result_ = optimize_codebook(target, self.n_codes, r, self.strategy, self.seed,
                                         self.grid, self.starts, norm=self.norm)
        self.cluster_centers_ = self.result_.codebook
        self.distortion_ = self.result_.V
        self.error_ = self.result_.e
        self.n_features_in_ = self.cluster_centers_.shape[1]
        return self

    def predict(self, X):
        """Index of the nearest codebook point (ties to the lower index)."""
        check_is_fitted(self, "cluster_centers_")
        X = check_array(X, ensure_2d=False)
        if X.ndim == 1:
            X = X[:, None]
        return _assign(self.cluster_centers_, X, self.norm)[0]

    def transform(self, X):
        """Distances to every codebook point."""
        check_is_fitted(self, "cluster_centers_")
        X = check_array(X, ensure_2d=False)
        if X.ndim == 1:
            X = X[:, None]
        diff = X[:, None, :] - self.cluster_centers_[None, :, :]
        if self.norm == "euclid":
            return np.linalg.norm(diff, axis=2)
        return np.abs(diff).max(axis=2)
