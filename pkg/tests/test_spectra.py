import math

import numpy as np
import pytest
from scipy.optimize import brentq

from quantdim.dyadic import build_measure, preset
from quantdim.errors import DomainError
from quantdim.oracles import cascade_beta
from quantdim.spectra import (DepthProtocol, beta_curve, beta_hat, beta_n, boundary_limit, critical_q,
                              d_zero, extrapolate, fit_window, j_depth_profile, j_table, j_value,
                              pf_regularity_report, qr_bounds, renyi, renyi_curve, tau_curve, tau_n)

MENGER_P = (0.66, 0.2, 0.08, 0.06)


def cascade_root(r, lo, hi):
    """Independent root of log2 sum p^q = q r."""
    return brentq(lambda q: cascade_beta(MENGER_P, q) - q * r, lo, hi, xtol=1e-14)


def test_fit_window():
    np.testing.assert_array_equal(fit_window(10), np.arange(6, 11))
    np.testing.assert_array_equal(fit_window(7), np.arange(4, 8))


def test_extrapolate_protocols():
    levels = np.arange(1, 6)
    vals = 2.0 + 1.0 / levels  # a + b/n with a = 2
    assert extrapolate(levels, vals, DepthProtocol.FIT_V1) == pytest.approx(2.0)
    assert extrapolate(levels, vals, DepthProtocol.DEEPEST_V1) == pytest.approx(2.2)
    assert extrapolate(levels, vals, DepthProtocol.MAX_FIT_V1) == pytest.approx(2.2)


def test_beta_menger_examples(menger10):
    for n in (1, 5, 10):
        assert beta_n(menger10, 0.0, n) == pytest.approx(2.0, abs=1e-12)
        assert beta_n(menger10, 1.0, n) == pytest.approx(0.0, abs=1e-12)
        assert beta_n(menger10, 2.0, n) == pytest.approx(math.log2(0.4856), rel=1e-9)


def test_tau_equals_beta_at_order_zero(menger10):
    for q in (0.0, 0.5, 2.0):
        for n in (3, 10):
            assert tau_n(menger10, 0.0, q, n).value == pytest.approx(beta_n(menger10, q, n), abs=1e-12)


def test_tau_near_root(menger10):
    assert abs(tau_n(menger10, -0.5, 1.87, 10).value) <= 2e-3


def test_tau_at_zero_counts_cubes(menger10):
    assert tau_n(menger10, -0.5, 0.0, 7).value == pytest.approx(beta_n(menger10, 0.0, 7), abs=1e-12)


def test_j_nonnegative_order_is_local(menger10):
    tab = j_table(menger10, 1.0)
    for n in (2, 6):
        np.testing.assert_allclose(tab[n], np.log2(menger10.masses[n]) - n * 1.0, rtol=0, atol=1e-12)


def test_j_menger_negative_order_is_local(menger10):
    # p_max 2^0.5 < 1, so the maximum over descendants is the cube itself
    tab = j_table(menger10, -0.5)
    for n in (1, 4, 9):
        np.testing.assert_allclose(tab[n], np.log2(menger10.masses[n]) + 0.5 * n, atol=1e-12)


def test_j_value_zero_mass_cube(menger10):
    from quantdim.dyadic import CubeIndex
    assert j_value(menger10, -0.5, CubeIndex(1, (1, 1, 1))) == 0.0
    assert j_value(menger10, -0.5, CubeIndex(1, (0, 0, 0))) == pytest.approx(0.66 * 2 ** 0.5)


def test_j_atom_divergence_flag():
    vals = []
    for depth in (4, 8, 12):
        m = build_measure(preset("atom"), depth)
        prof = j_depth_profile(m, -0.5)
        assert prof.divergent
        vals.append(prof.values[-1])
    # J(root) grows like 2^(N/2)
    assert vals[1] / vals[0] == pytest.approx(4.0, rel=1e-9)
    assert vals[2] / vals[1] == pytest.approx(4.0, rel=1e-9)
    assert not j_depth_profile(build_measure(preset("menger"), 8), -0.5).divergent


def test_qr_bounds_examples():
    lo, hi = qr_bounds(2.0, -math.log2(0.66), -0.5)
    assert lo == pytest.approx(4 / 3) and hi == pytest.approx(15.08, abs=5e-3)
    assert qr_bounds(1.0, 1.0, -0.5) == pytest.approx((2.0, 2.0))
    assert qr_bounds(1.0, 1.0, 1.0) == pytest.approx((0.0, 0.5))
    with pytest.raises(DomainError):
        qr_bounds(1.0, 0.5, -0.6)


def test_critical_menger_negative(menger10):
    ce = critical_q(menger10, -0.5)
    ref = cascade_root(-0.5, 1.0, 5.0)
    assert ce.q_r == pytest.approx(ref, abs=2e-6)
    assert ce.q_r == pytest.approx(1.870, abs=0.005)
    assert ce.dimension == pytest.approx(1.075, abs=0.01)
    assert ce.inside_bracket and ce.bracket[0] < ce.q_r < ce.bracket[1]


def test_critical_menger_positive(menger10):
    ce = critical_q(menger10, 1.0)
    ref = cascade_root(1.0, 1e-6, 1.0 - 1e-9)
    assert ce.q_r == pytest.approx(ref, abs=2e-6)
    assert 0 < ce.q_r < 1
    assert ce.dimension == pytest.approx(ref / (1 - ref), abs=1e-4)


def test_critical_uniform(uniform10):
    assert critical_q(uniform10, 1.0).q_r == pytest.approx(0.5, abs=2e-6)
    assert critical_q(uniform10, 1.0).dimension == pytest.approx(1.0, abs=1e-5)
    assert critical_q(uniform10, -0.5).q_r == pytest.approx(2.0, abs=2e-6)


def test_critical_order_zero(menger10):
    ce = critical_q(menger10, 0.0)
    assert ce.q_r == 1.0
    assert ce.dimension == pytest.approx(1.3951, abs=2e-3)


def test_critical_rejects_order_below_dim_infty(menger10):
    with pytest.raises(DomainError):
        critical_q(menger10, -0.7)


def test_critical_atom_degenerate():
    m = build_measure(preset("atom"), 10)
    ce = critical_q(m, 0.5)
    assert ce.q_r == 0.0 and ce.degenerate


def test_d_zero(menger10, uniform10, ucascade10):
    ent = -sum(p * math.log2(p) for p in MENGER_P)
    dz = d_zero(menger10)
    assert dz.value == pytest.approx(ent, abs=1e-6)
    assert dz.value == pytest.approx(1.3951, abs=2e-3)
    assert dz.differentiable
    assert d_zero(uniform10).value == pytest.approx(1.0, abs=1e-9)
    assert d_zero(ucascade10).value == pytest.approx(1.0, abs=1e-9)


def test_renyi_examples(menger10, uniform10):
    ent = -sum(p * math.log2(p) for p in MENGER_P)
    assert renyi(menger10, -0.5, 1.0) == pytest.approx(ent, abs=1e-9)
    ce = critical_q(menger10, -0.5)
    assert renyi(menger10, -0.5, ce.q_r) == pytest.approx(ce.dimension, abs=1e-4)
    assert renyi(uniform10, 0.0, 2.0) == pytest.approx(1.0, abs=1e-12)
    curve = renyi_curve(menger10, 0.0, [0.5, 1.0, 2.0])
    assert curve.extrapolated[1] == pytest.approx(ent, abs=1e-9)


def test_curves_shape_and_rows(menger10):
    qs = [0.0, 0.5, 1.0, 1.87, 2.5]
    c = beta_curve(menger10, qs)
    assert c.values.shape == (5, 10)
    np.testing.assert_allclose(c.extrapolated, [cascade_beta(MENGER_P, q) for q in qs], rtol=1e-9, atol=1e-12)
    rows = list(c.rows())
    assert len(rows) == 50 and rows[0][:2] == (0.0, 1)
    t = tau_curve(menger10, -0.5, qs)
    np.testing.assert_allclose(t.extrapolated, c.extrapolated + 0.5 * np.array(qs), atol=1e-12)


def test_tau_curve_warning_below_dim_infty():
    m = build_measure(preset("ex29"), 10)
    assert tau_curve(m, -0.6, [1.0]).notes


def test_boundary_limit_uniform_and_ex29(uniform10):
    b = boundary_limit(uniform10)
    assert b.limit_dim == pytest.approx(1.0, abs=5e-3)
    m29 = build_measure(preset("ex29"), 14)
    b29 = boundary_limit(m29)
    assert b29.a_nu == pytest.approx(2.0, abs=0.1)
    assert b29.limit_dim == pytest.approx(1.0, abs=0.05)


def test_boundary_limit_menger(menger10):
    b = boundary_limit(menger10, r_grid=np.linspace(-0.59, -0.05, 6))
    assert math.isfinite(b.a_nu) and b.a_nu >= cascade_root(-0.5, 1.0, 5.0) - 1e-6


def test_regularity_reports(menger10, uniform10):
    assert pf_regularity_report(menger10, -0.5).max_spread <= 1e-9
    for r in (-0.5, 0.5):
        assert pf_regularity_report(uniform10, r).max_spread <= 1e-9
    rep = pf_regularity_report(build_measure(preset("atom"), 10), 0.5)
    assert rep.q_r == 0.0 and any("degenerate" in n or "atomic" in n for n in rep.notes)


def test_beta_hat_rejects_negative_q(menger10):
    with pytest.raises(DomainError):
        beta_n(menger10, -1.0, 3)
    assert beta_hat(menger10, 0.0) == pytest.approx(2.0)
