import math

import mpmath as mp
import numpy as np
import pytest

from quantdim.dyadic import Atomic, MeasureSpec, build_measure, preset
from quantdim.errors import ConfigError, DivergenceError, DomainError
from quantdim.oracles import PiecewisePolynomial, example_density, uniform_midpoint_error
from quantdim.quantizer import (DensityTarget, PointTarget, _panel_moment, _precise_moment, as_target,
                                dp1d_all, distortion, error_curve, lebesgue_bound_check,
                                lebesgue_constant, mixture_bounds_check, optimize_codebook)


# ---------------------------------------------------------------- distortion

def test_midpoint_codebook_negative_order():
    for k in (1, 4, 9):
        A = (np.arange(k) + 0.5) / k
        d = distortion("uniform", A, -0.5)
        assert d.V == pytest.approx(math.sqrt(8 * k), rel=1e-12)
        assert d.e == pytest.approx(1 / (8 * k), rel=1e-12)


def test_single_point_first_order():
    d = distortion("uniform", [0.5], 1.0)
    assert d.V == pytest.approx(0.25) and d.e == pytest.approx(0.25)


def test_infinite_order():
    assert distortion("uniform", [0.25, 0.75], math.inf).e == pytest.approx(0.25)
    assert distortion("uniform", [0.1], math.inf).e == pytest.approx(0.9)


def test_atom_on_codebook_point_diverges():
    t = PointTarget([[0.5]], [1.0])
    d = distortion(t, [0.5], -0.5)
    assert d.V == math.inf and d.e == 0.0 and d.divergent
    assert distortion(t, [0.25], -0.5).e == pytest.approx(0.25)


def test_density_order_at_minus_one_diverges():
    d = distortion("uniform", [0.5], -1.0)
    assert d.divergent and d.e == 0.0


def test_codebook_outside_unit_interval():
    # a point below 0 leaves its right cell covering part of (0, 1]
    d = distortion("uniform", [-0.5, 0.5], 1.0)
    assert d.V == pytest.approx(0.25)


def test_linear2x_cell_integral_against_mpmath():
    mp.mp.dps = 30
    a, b, mid = mp.mpf(3) / 10, mp.mpf(8) / 10, mp.mpf(55) / 100
    for r in (-0.7, 0.0, 1.5):
        def w(u):
            return mp.log(u) if r == 0 else u ** r
        ref = (mp.quad(lambda x: w(abs(x - a)) * 2 * x, [0, a, mid])
               + mp.quad(lambda x: w(abs(x - b)) * 2 * x, [mid, b, 1]))
        assert distortion("linear2x", [0.3, 0.8], r).V == pytest.approx(float(ref), rel=1e-9)


def test_ex29_precise_distortion_against_mpmath():
    h = example_density("ex29")
    mp.mp.dps = 25
    z = h.raw_integral
    f = lambda x: x ** -0.5 / mp.log(x / 10) ** 2 / z  # noqa: E731
    A = [0.1, 0.6]
    ref = (mp.quad(lambda x: abs(x - 0.1) ** -0.4 * f(x), [0, 1e-12, 1e-6, 0.01, 0.1, 0.35])
           + mp.quad(lambda x: abs(x - 0.6) ** -0.4 * f(x), [0.35, 0.6, 1]))
    assert distortion("ex29", A, -0.4).V == pytest.approx(float(ref), rel=1e-7)


def test_panel_rule_close_to_precise():
    h = example_density("ex29")
    a, ell = np.array([0.3, 0.05]), np.array([0.2, 0.04])
    for r, log in ((-0.5, False), (0.0, True), (1.0, False)):
        p = _panel_moment(h, a, ell, r, -1, log)
        q = _precise_moment(h, a, ell, r, -1, log)
        np.testing.assert_allclose(p, q, rtol=1e-6)


def test_measure_mode_matches_cell_exact():
    m = build_measure(preset("uniform-cascade"), 14)
    A = [0.2, 0.55, 0.9]
    exact = distortion("uniform", A, 2.0).V
    d = distortion(m, A, 2.0)
    assert d.mode == "cube-centres"
    assert abs(d.V - exact) <= d.bound + 1e-15
    assert d.V == pytest.approx(exact, rel=1e-6)
    # negative order: the clipped centre sum still approximates the integral
    assert distortion(m, A, -0.5).V == pytest.approx(distortion("uniform", A, -0.5).V, rel=5e-3)


def test_max_norm_points():
    t = PointTarget([[0.1, 0.1], [0.9, 0.5]], [0.5, 0.5])
    assert distortion(t, [[0.0, 0.0]], 1.0, norm="max").V == pytest.approx(0.5 * 0.1 + 0.5 * 0.9)
    assert distortion(t, [[0.0, 0.0]], 1.0, norm="euclid").V == pytest.approx(
        0.5 * math.hypot(0.1, 0.1) + 0.5 * math.hypot(0.9, 0.5))
    with pytest.raises(ConfigError):
        distortion(t, [[0.0, 0.0]], 1.0, norm="taxi")


# ---------------------------------------------------------------- dp1d

def test_dp1d_uniform_example():
    A = dp1d_all("uniform", 4, -0.5, grid=14)[-1]
    np.testing.assert_allclose(A, [1 / 8, 3 / 8, 5 / 8, 7 / 8], atol=0.01)
    assert distortion("uniform", A, -0.5).e == pytest.approx(0.03125, rel=5e-3)
    q = optimize_codebook("uniform", 4, 0.0, "dp1d")
    assert q.e == pytest.approx(math.exp(-1) / 8, rel=5e-3)


@pytest.mark.parametrize("name", ["uniform", "linear2x"])
@pytest.mark.parametrize("r", [-0.6, 0.0, 1.0, 2.0])
def test_dp1d_divide_and_conquer_matches_full_table(name, r):
    fast = dp1d_all(name, 7, r, grid=6)
    slow = dp1d_all(name, 7, r, grid=6, exhaustive_layers=True)
    for a, b in zip(fast, slow):
        np.testing.assert_array_equal(a, b)


def test_dp1d_table_density():
    pp = PiecewisePolynomial([0.0, 0.25, 1.0], [[3.0], [1.0 / 3.0]])
    fast = dp1d_all(pp, 5, -0.3, grid=6)
    slow = dp1d_all(pp, 5, -0.3, grid=6, exhaustive_layers=True)
    for a, b in zip(fast, slow):
        np.testing.assert_array_equal(a, b)


def test_dp1d_grid_refinement_consistency():
    for r in (-0.5, 0.0, 1.0):
        for n in (3, 5, 8):
            e1 = optimize_codebook("uniform", n, r, "dp1d", grid=8).e
            e2 = optimize_codebook("uniform", n, r, "dp1d", grid=10).e
            assert abs(e1 / e2 - 1) <= 2 ** -4


def test_dp1d_rejects_points():
    with pytest.raises(ConfigError):
        dp1d_all(PointTarget([[0.5]], [1.0]), 2, 1.0)


# ---------------------------------------------------------------- lloyd / exhaustive

def test_lloyd_uniform_second_order():
    q = optimize_codebook("uniform", 4, 2.0, "lloyd")
    np.testing.assert_allclose(q.codebook.ravel(), [0.125, 0.375, 0.625, 0.875], atol=1e-6)
    assert q.e == pytest.approx(uniform_midpoint_error(4, 2.0), rel=1e-8)


def test_lloyd_matches_dp1d_on_linear_density():
    for r in (-0.5, 1.5):
        a = optimize_codebook("linear2x", 6, r, "lloyd", starts=2).e
        b = optimize_codebook("linear2x", 6, r, "dp1d", grid=12).e
        assert a == pytest.approx(b, rel=1e-4)


def test_lloyd_deterministic_given_seed():
    t = build_measure(preset("menger"), 5)
    a = optimize_codebook(t, 6, 1.0, "lloyd", seed=3, starts=2)
    b = optimize_codebook(t, 6, 1.0, "lloyd", seed=3, starts=2)
    np.testing.assert_array_equal(a.codebook, b.codebook)


@pytest.mark.parametrize("r", [-0.5, 1.0, 2.0])
def test_lloyd_matches_exhaustive_on_atoms(r, rng):
    for trial in range(4):
        m = int(rng.integers(3, 9))
        pts = rng.uniform(0, 1, size=(m, 2))
        w = rng.uniform(0.1, 1.0, m)
        t = PointTarget(pts, w)
        for n in (1, 2, 3):
            ex = optimize_codebook(t, n, r, "exhaustive", candidates=pts)
            ll = optimize_codebook(t, n, r, "lloyd", seed=trial, starts=6, candidates=pts)
            assert ll.V == ex.V


def test_atoms_support_codebook():
    t = PointTarget([[0.1], [0.4], [0.7]], [1, 2, 3])
    q = optimize_codebook(t, 5, 2.0, "lloyd")
    assert q.e == 0.0 and q.codebook.shape[0] == 3


def test_exhaustive_limit():
    t = PointTarget(np.linspace(0.01, 1, 60)[:, None], np.ones(60))
    with pytest.raises(ConfigError):
        optimize_codebook(t, 10, 1.0, "exhaustive")


def test_invalid_arguments():
    with pytest.raises(ConfigError):
        optimize_codebook("uniform", 0, 1.0)
    with pytest.raises(ConfigError):
        optimize_codebook("uniform", 2, 1.0, "annealing")
    with pytest.raises(DivergenceError):
        optimize_codebook("uniform", 2, -1.2)


# ---------------------------------------------------------------- divergence

def test_divergence_trichotomy():
    with pytest.raises(DivergenceError):
        optimize_codebook("linear2x", 3, -1.0)
    curve = error_curve("linear2x", -1.0, [2, 4])
    assert curve.divergent and np.all(curve.e == 0)
    atom = as_target(build_measure(preset("atom"), 3))
    for r in (-0.9, -0.2):
        q = optimize_codebook(atom, 2, r)
        assert q.divergent and q.e == 0.0
    q = optimize_codebook("linear2x", 3, -0.5, "dp1d")
    assert 0 < q.e < math.inf and not q.divergent


def test_ex29_divergence_witness():
    q = optimize_codebook("ex29", 3, -0.6)
    assert q.divergent and q.e == 0.0 and q.method == "divergence-witness"
    q = optimize_codebook("ex29", 3, -0.4, "dp1d", grid=9)
    assert 0 < q.e < math.inf


# ---------------------------------------------------------------- curves

def test_error_curve_uniform_fit():
    c = error_curve("uniform", -0.5, np.arange(2, 65), "dp1d")
    assert c.D_hat == pytest.approx(1.0, abs=0.03)
    assert c.c_hat == pytest.approx(0.125, rel=0.02)
    assert c.D_band[0] <= c.D_hat <= c.D_band[1]
    assert np.all(np.diff(c.e) <= 0)


def test_error_curve_nesting_keeps_monotone():
    t = build_measure(preset("menger"), 5)
    c = error_curve(t, 1.0, [2, 3, 4, 6, 8], "lloyd", starts=1)
    assert np.all(np.diff(c.e) <= 1e-15)


def test_error_curve_rows_and_dict():
    c = error_curve("uniform", 1.0, [1, 2, 4], "dp1d", grid=8)
    rows = list(c.rows())
    assert rows[0][0] == 1 and rows[0][2] == 0.0
    assert c.to_dict()["method"] == "dp1d"


def test_adaptive_point_target():
    m = build_measure(preset("menger"), 8)
    t = PointTarget.adaptive(m, 1.0, 1e-4)
    assert t.weights.sum() == pytest.approx(1.0)
    # every point's cube satisfies the threshold unless it is at the deepest level
    hs = t.half_sides()
    side = 2 * hs
    ok = (t.weights * side <= 1e-4 * (1 + 1e-12)) | (side == 2.0 ** -8)
    assert ok.all()
    with pytest.raises(DomainError):
        PointTarget.adaptive(m, -0.5, 1e-4)


# ---------------------------------------------------------------- bounds

def test_lebesgue_examples():
    c = lebesgue_constant(-0.5)
    assert c == pytest.approx(2 ** 0.5 + 18 / (2 ** -0.5 - 0.5), rel=1e-12)
    assert c == pytest.approx(88.33, abs=0.01)
    one = lebesgue_bound_check([0.5], -0.5)
    assert one.lhs == pytest.approx(2 * 2 * 0.5 ** 0.5) and one.holds
    sixteen = lebesgue_bound_check((np.arange(16) + 0.5) / 16, -0.5)
    assert sixteen.lhs == pytest.approx(math.sqrt(128)) and sixteen.bound == pytest.approx(4 * c)
    with pytest.raises(DomainError):
        lebesgue_bound_check([0.5], 0.5)


def test_mixture_examples():
    halves = [PiecewisePolynomial([0.0, 0.5, 1.0], [[2.0], [0.0]]),
              PiecewisePolynomial([0.0, 0.5, 1.0], [[0.0], [2.0]])]
    rep = mixture_bounds_check(halves, [0.5, 0.5], 8, (4, 4), -0.5)
    assert rep.upper_holds and rep.lower_holds
    single = mixture_bounds_check([example_density("linear2x").pieces], [1.0], 6, (6,), -0.5)
    assert single.v_mixture == pytest.approx(single.upper_rhs, rel=1e-12)
    assert single.v_mixture == pytest.approx(single.lower_rhs, rel=1e-12)


def test_lebesgue_self_similarity():
    v4 = optimize_codebook("uniform", 4, -0.5, "dp1d").V
    v8 = optimize_codebook("uniform", 8, -0.5, "dp1d").V
    assert v8 >= 2 ** 0.5 * v4 * (1 - 1e-9)


def test_order_monotonicity():
    for name in ("uniform", "linear2x"):
        for n in (4, 16):
            e = [optimize_codebook(name, n, r, "dp1d").e for r in (-0.8, -0.3, 0.0)]
            assert e[0] <= e[1] * 1.01 and e[1] <= e[2] * 1.01
