import math

import mpmath as mp
import numpy as np
import pytest

from quantdim.oracles import (PiecewisePolynomial, cascade_beta, example_density, ex28_layout,
                              phi_zero_reference, registered_names, uniform_midpoint_error)
from quantdim.quantizer import distortion, phi_r

MENGER_P = (0.66, 0.2, 0.08, 0.06)


def test_cascade_beta_values():
    assert cascade_beta(MENGER_P, 0) == pytest.approx(2.0, abs=1e-15)
    assert cascade_beta(MENGER_P, 2) == pytest.approx(math.log2(0.4856), rel=1e-12)
    assert cascade_beta(MENGER_P, 2) == pytest.approx(-1.0423, abs=5e-4)  # printed figure
    for p in [(0.5, 0.5), (0.3, 0.7), MENGER_P]:
        assert cascade_beta(p, 1) == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("n,r,expected", [
    (1, 1.0, 0.25),
    (4, -0.5, 0.03125),
    (2, 0.0, math.exp(-1) / 4),
    (3, math.inf, 1 / 6),
])
def test_uniform_midpoint_error(n, r, expected):
    assert uniform_midpoint_error(n, r) == pytest.approx(expected, rel=1e-12)


def test_uniform_midpoint_error_domain():
    with pytest.raises(ValueError):
        uniform_midpoint_error(4, -1.0)


@pytest.mark.parametrize("r", [-0.9, -0.5, 0.0, 0.5, 1.0, 2.0])
@pytest.mark.parametrize("n", [1, 3, 8])
def test_midpoint_error_matches_distortion(n, r):
    A = (np.arange(n) + 0.5) / n
    assert distortion("uniform", A, r).e == pytest.approx(uniform_midpoint_error(n, r), rel=1e-8)


def test_registry_contents():
    names = registered_names()
    for name in ("uniform", "linear2x", "ex28", "ex29"):
        assert name in names
    with pytest.raises(LookupError):
        example_density("nope")


@pytest.mark.parametrize("name", ["uniform", "linear2x", "ex28", "ex29"])
def test_registered_densities_have_unit_mass(name):
    h = example_density(name)
    assert float(h.integral(np.array([0.0]), np.array([1.0]))[0]) == pytest.approx(1.0, abs=1e-8)


def test_ex29_normalizer_against_mpmath():
    h = example_density("ex29")
    mp.mp.dps = 30
    z = mp.quad(lambda x: x ** -0.5 / mp.log(x / 10) ** 2, [0, 1e-12, 1e-6, 1e-2, 1])
    assert h.raw_integral == pytest.approx(float(z), rel=1e-10)
    assert h.s_h == 2 and h.dim_infty == 0.5


def test_ex29_pointwise_values():
    h = example_density("ex29")
    x = np.array([0.01, 0.3, 1.0])
    raw = x ** -0.5 / np.log(x / 10) ** 2
    np.testing.assert_allclose(h(x), raw / h.raw_integral, rtol=1e-12)


def test_ex29_square_integral_closed_form():
    # t = log(x/10) turns the integral of x^-1 log^-4(x/10) into 1/(3 ln^3 10)
    h = example_density("ex29")
    ref = 1.0 / (3.0 * math.log(10.0) ** 3 * h.raw_integral ** 2)
    iv = h.power_integral(2.0)
    assert not iv.divergent
    assert iv.value == pytest.approx(ref, rel=1e-6)
    assert h.power_integral(2.1).divergent


def test_ex28_norms_and_chain():
    h = example_density("ex28")
    assert h.s_h == pytest.approx(4 / 3)
    n13 = h.s_norm(1.3)
    assert not n13.divergent and math.isfinite(n13.value)
    assert h.s_norm(1.4).divergent
    assert h.s_norm(4 / 3).divergent
    # chain -d < -dim_inf < d/s_h - d with d = 1
    assert -1 < -h.dim_infty < 1 / h.s_h - 1
    assert 1 / h.s_h - 1 == pytest.approx(-0.25)


def test_ex28_generation_sum_matches_closed_form():
    # per generation n: 2^n intervals of length 2^(1-3n), height 2^((3n-1)/2)/Z
    h = example_density("ex28")
    s = 1.3
    Z = 1 / (1 - 2 ** -0.5)
    # geometric series in closed form: term_n = 2^(1 - s/2) Z^-s (2^(3s/2 - 2))^n
    ratio = 2.0 ** (1.5 * s - 2)
    ref = 2.0 ** (1 - s / 2) * Z ** -s * ratio / (1 - ratio)
    assert h.power_integral(s).value == pytest.approx(ref, rel=1e-9)


def test_ex28_layout_mass_and_tail():
    pp = ex28_layout(8)
    h = example_density("ex28")
    assert h.metadata["tail_mass"] == pytest.approx(2.0 ** -4)
    assert pp.total() + h.metadata["tail_mass"] == pytest.approx(1.0, abs=1e-12)
    # mass of (0, 2^-n] is 2^(-n/2) for the full family
    for n in (1, 3, 8, 10):
        x = 2.0 ** -n
        assert float(h.integral(np.array([0.0]), np.array([x]))[0]) == pytest.approx(2.0 ** (-n / 2), rel=1e-9)


def test_piecewise_moments_against_mpmath():
    pp = PiecewisePolynomial([0.0, 0.3, 1.0], [[1.0, 2.0], [0.5, -0.25]])
    mp.mp.dps = 25
    f = lambda x: (1 + 2 * x) if x <= 0.3 else (0.5 - 0.25 * x)  # noqa: E731
    for a, ell, r, sgn in [(0.2, 0.5, -0.5, 1), (0.9, 0.8, -0.3, -1), (0.4, 0.3, 1.5, 1)]:
        ref = mp.quad(lambda u: u ** r * f(a + sgn * u), [0, abs(0.3 - a), ell] if 0 < (0.3 - a) * sgn < ell else [0, ell])
        got = pp.weighted_moment(np.array([a]), np.array([ell]), r, sgn)[0]
        assert got == pytest.approx(float(ref), rel=1e-10)
    ref = mp.quad(lambda u: mp.log(u) * f(0.2 + u), [0, 0.1, 0.5])
    assert pp.weighted_moment(np.array([0.2]), np.array([0.5]), 0.0, 1, log=True)[0] == pytest.approx(float(ref), rel=1e-10)


def test_phi_values():
    for r in (-0.5, 0.0, 0.5, 2.0):
        assert phi_r("uniform", r) == pytest.approx(1.0, rel=1e-10)
    assert phi_r("linear2x", -0.5) == pytest.approx(0.75, rel=1e-10)
    assert phi_r("linear2x", 0.0) == pytest.approx(math.exp(0.5) / 2, rel=1e-10)
    assert phi_r("linear2x", -1e-3) == pytest.approx(phi_r("linear2x", 0.0), abs=1e-3)
    assert phi_r("linear2x", -1.0) == 0.0
    assert phi_r("ex29", -0.6) >= 0.0


def test_phi_zero_reference():
    assert phi_zero_reference("uniform").value == pytest.approx(1.0)
    assert phi_zero_reference("linear2x").value == pytest.approx(0.82436, abs=1e-5)
    v = phi_zero_reference("ex29")
    assert not v.divergent and 0 < v.value < 1
