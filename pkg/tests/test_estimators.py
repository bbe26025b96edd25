import numpy as np
import pytest
from sklearn.base import clone

from quantdim.errors import ConfigError
from quantdim.estimators import OptimalQuantizer, SpectrumEstimator, check_depth, check_order
from quantdim.oracles import cascade_beta
from quantdim.spectra import critical_q


def test_spectrum_estimator_matches_functional(menger10):
    est = SpectrumEstimator(order=-0.5, depth=10).fit("menger")
    ref = critical_q(menger10, -0.5)
    assert est.q_ == pytest.approx(ref.q_r, rel=1e-12)
    assert est.dimension_ == pytest.approx(ref.dimension, rel=1e-12)
    assert est.dim_infty_ > 0


def test_spectrum_predict_close_to_cascade_formula():
    est = SpectrumEstimator(order=1.0, depth=12).fit("uniform-cascade")
    q = np.array([0.0, 0.5, 1.0])
    tau = est.predict(q)
    beta = np.array([cascade_beta([0.5, 0.5], v) for v in q])
    np.testing.assert_allclose(tau, beta - q * 1.0, atol=1e-6)


def test_spectrum_estimator_inline_json():
    est = SpectrumEstimator(order=0.5, depth=8).fit('{"d": 1, "variant": "ifs", "offsets": [[0], [0.5]], "probabilities": [0.5, 0.5]}')
    assert est.dimension_ == pytest.approx(1.0, abs=1e-6)


def test_quantizer_on_samples():
    X = np.array([[0.1], [0.12], [0.9], [0.88]])
    qz = OptimalQuantizer(n_codes=2, order=2.0).fit(X)
    centres = np.sort(qz.cluster_centers_.ravel())
    np.testing.assert_allclose(centres, [0.11, 0.89], atol=1e-8)
    lab = qz.predict(X)
    assert lab[0] == lab[1] != lab[2] == lab[3]
    D = qz.transform(X)
    assert D.shape == (4, 2) and np.all(D.min(axis=1) <= 0.01 + 1e-12)


def test_quantizer_sample_weight_shifts_centre():
    X = np.array([0.0, 1.0])
    a = OptimalQuantizer(n_codes=1, order=2.0).fit(X, sample_weight=[3.0, 1.0])
    assert a.cluster_centers_[0, 0] == pytest.approx(0.25, abs=1e-8)


def test_quantizer_density_name():
    qz = OptimalQuantizer(n_codes=4, order=2.0, strategy="dp1d").fit("uniform")
    assert qz.error_ == pytest.approx(np.sqrt(1 / 192), rel=5e-3)


def test_clone_and_params():
    qz = OptimalQuantizer(n_codes=3, norm="max")
    c = clone(qz)
    assert c.get_params()["n_codes"] == 3 and c.get_params()["norm"] == "max"


def test_validation():
    with pytest.raises(ConfigError):
        OptimalQuantizer(n_codes=0).fit(np.array([[0.5]]))
    with pytest.raises(ConfigError):
        OptimalQuantizer(strategy="nope").fit(np.array([[0.5]]))
    with pytest.raises(ConfigError):
        check_order(float("nan"))
    with pytest.raises(ConfigError):
        check_order(float("inf"))
    assert check_order(float("inf"), allow_inf=True) == float("inf")
    with pytest.raises(ConfigError):
        check_depth(0)
    with pytest.raises(Exception):
        OptimalQuantizer().predict([[0.5]])
