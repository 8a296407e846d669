from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose

import mp_oracle
from quest_shrinkage.mp import (
    compute_support,
    mp_residual,
    solve_mbar_at_zero,
    solve_mp_fixed_point,
    stieltjes_on_real_line,
)
from quest_shrinkage.spectral import ConcentrationContext, ValidationError


def test_zero_spectrum_gives_minus_inverse_z():
    ctx = ConcentrationContext(20, 10)
    z = 0.7 + 0.3j
    assert solve_mp_fixed_point(np.zeros(10), ctx, z) == pytest.approx(-1 / z, abs=1e-14)


def test_point_mass_matches_quadratic_root():
    ctx = ConcentrationContext(100, 50)
    z = 1 + 1j
    m = solve_mp_fixed_point(np.ones(50), ctx, z)
    assert_allclose(m, mp_oracle.stieltjes_upper(z, 0.5), rtol=1e-10)


def test_fixed_point_homogeneity():
    rng = np.random.default_rng(3)
    t = rng.uniform(0.5, 5, 40)
    ctx = ConcentrationContext(60, 40)
    z = 2.0 + 0.5j
    assert_allclose(solve_mp_fixed_point(2 * t, ctx, 2 * z), solve_mp_fixed_point(t, ctx, z) / 2, rtol=1e-9)


@given(
    st.floats(0.05, 3.0),
    st.floats(0.1, 20.0),
    st.floats(1e-3, 5.0),
    st.integers(0, 2**32 - 1),
)
def test_fixed_point_stays_in_upper_half_plane(c, re, im, seed):
    p = 40
    n = max(1, round(p / c))
    t = np.random.default_rng(seed).uniform(0.1, 10, p)
    ctx = ConcentrationContext(n, p)
    z = complex(re, im)
    m = solve_mp_fixed_point(t, ctx, z)
    assert m.imag > 0
    assert mp_residual(m, t, ctx, z) < 1e-8 * max(1.0, abs(m))


def test_real_line_zero_spectrum():
    ctx = ConcentrationContext(20, 10)
    assert_allclose(stieltjes_on_real_line(np.zeros(10), ctx, 2.0), -0.5)


def test_real_line_density_matches_closed_form():
    ctx = ConcentrationContext(100, 50)
    m = stieltjes_on_real_line(np.ones(50), ctx, 1.0)
    assert_allclose(m.imag / np.pi, mp_oracle.density(1.0, 0.5), rtol=1e-8)
    assert_allclose(m.imag / np.pi, 0.42109, atol=1e-5)


def test_real_line_outside_support_is_real():
    ctx = ConcentrationContext(100, 50)
    m = stieltjes_on_real_line(np.ones(50), ctx, 10.0)
    assert abs(m.imag) < 1e-8
    assert_allclose(m.real, mp_oracle.stieltjes_outside(10.0, 0.5), rtol=1e-10)


def test_real_line_limits_agree_with_upper_half_plane():
    rng = np.random.default_rng(5)
    t = np.sort(rng.uniform(1, 4, 30))
    ctx = ConcentrationContext(45, 30)
    for x in (0.5, 2.0, 3.7, 9.0):
        m_line = stieltjes_on_real_line(t, ctx, x)
        m_near = solve_mp_fixed_point(t, ctx, complex(x, 1e-7))
        assert_allclose(m_line, m_near, atol=1e-4)


def test_real_line_rejects_origin():
    with pytest.raises(ValidationError):
        stieltjes_on_real_line(np.ones(5), ConcentrationContext(10, 5), 0.0)


def test_support_of_point_mass():
    sup = compute_support(np.ones(50), ConcentrationContext(100, 50))
    a, b = mp_oracle.edges(0.5)
    assert sup.intervals.shape == (1, 2)
    assert_allclose(sup.intervals[0], [a, b], rtol=1e-10)
    assert_allclose(sup.intervals[0], [0.08579, 2.91421], atol=1e-5)
    assert sup.mass_at_zero == 0


def test_mass_at_zero_when_p_exceeds_n():
    sup = compute_support(np.ones(200), ConcentrationContext(100, 200))
    assert_allclose(sup.mass_at_zero, 0.5)


def _brute_force_intervals(t, c, n_grid=200_000):
    """Support as the complement of the set where x(mbar) is increasing on the real axis."""
    w = np.full(t.size, 1.0 / t.size)
    edges = []
    segments = np.concatenate([[-1e6], np.sort(-1.0 / t), [-1e-9]])
    for lo, hi in zip(segments[:-1], segments[1:]):
        m = np.linspace(lo, hi, n_grid)[1:-1]
        x = -1.0 / m + c * np.sum(w * t / (1.0 + np.outer(m, t)), axis=1)
        inc = np.diff(x) > 0
        if inc.any():
            idx = np.flatnonzero(inc)
            edges.append((x[idx].min(), x[idx + 1].max()))
    return edges


def test_two_cluster_support_separates():
    t = np.repeat([1.0, 10.0], 20)
    ctx = ConcentrationContext(800, 40)
    sup = compute_support(t, ctx)
    assert sup.intervals.shape[0] == 2
    assert sup.intervals[0, 0] < 1 < sup.intervals[0, 1] < sup.intervals[1, 0] < 10 < sup.intervals[1, 1]
    # the increasing stretches of x(mbar) lie outside the support; gaps sit between them
    brute = sorted(_brute_force_intervals(np.array([1.0, 10.0]), 0.05))
    gap = [e for e in brute if 1 < e[0] < 9]
    assert gap, brute
    assert_allclose(gap[0], [sup.intervals[0, 1], sup.intervals[1, 0]], rtol=1e-3)


def test_mbar_at_zero_examples():
    assert_allclose(solve_mbar_at_zero(np.ones(200), ConcentrationContext(100, 200)), 1.0, rtol=1e-12)
    assert_allclose(solve_mbar_at_zero(np.full(200, 4.0), ConcentrationContext(100, 200)), 0.25, rtol=1e-12)
    with pytest.raises(ValidationError):
        solve_mbar_at_zero(np.ones(100), ConcentrationContext(100, 100))


@given(st.integers(0, 2**32 - 1), st.integers(2, 4))
def test_mbar_at_zero_solves_its_equation(seed, ratio):
    n = 20
    tau = np.random.default_rng(seed).uniform(0.1, 10, ratio * n)
    m = solve_mbar_at_zero(tau, ConcentrationContext(n, tau.size))
    assert m > 0
    assert_allclose(m, 1.0 / (np.sum(tau / (1 + tau * m)) / n), rtol=1e-10)
