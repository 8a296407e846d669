from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose

import mp_oracle
from quest_shrinkage.quest import (
    build_sample_spectral_model,
    inverse_cdf,
    quest_jacobian,
    quest_quantiles,
)
from quest_shrinkage.spectral import ConcentrationContext, ValidationError


@st.composite
def spectra(draw, max_p=60):
    p = draw(st.integers(2, max_p))
    ratio = draw(st.sampled_from([0.25, 0.5, 0.8, 1.5, 2.0, 3.0]))
    n = max(1, round(p / ratio))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    t = rng.uniform(0.2, 10.0, p)
    if draw(st.booleans()):
        t = np.maximum(np.round(t), 1.0)  # ties
    return np.sort(t), ConcentrationContext(n, p)


def test_point_mass_density_matches_closed_form():
    model = build_sample_spectral_model(np.ones(50), ConcentrationContext(100, 50))
    x, f = model.grid[0], model.density[0]
    assert_allclose(f, mp_oracle.density(x, 0.5), atol=1e-6)


def test_cdf_at_zero_is_atom_when_p_exceeds_n():
    t = np.random.default_rng(0).uniform(1, 3, 200)
    model = build_sample_spectral_model(t, ConcentrationContext(100, 200))
    assert_allclose(model.cdf[0][0], 0.5)
    assert_allclose(model.mass_at_zero, 0.5)


@given(spectra())
def test_cdf_is_monotone_and_ends_at_one(case):
    t, ctx = case
    model = build_sample_spectral_model(t, ctx)
    levels, xs = model.knots()
    assert np.all(np.diff(levels) >= 0)
    assert np.all(np.diff(xs) >= 0)
    assert levels[-1] == 1.0


def test_inverse_cdf_examples():
    model = build_sample_spectral_model(np.ones(200), ConcentrationContext(100, 200))
    assert inverse_cdf(model, 0.3) == 0.0
    mp = build_sample_spectral_model(np.ones(50), ConcentrationContext(100, 50))
    assert_allclose(inverse_cdf(mp, 0.5), mp_oracle.quantile(0.5, 0.5), atol=1e-4)
    assert_allclose(inverse_cdf(mp, 1.0), mp_oracle.edges(0.5)[1], atol=1e-6)
    with pytest.raises(ValidationError):
        inverse_cdf(mp, 1.5)


def test_zero_spectrum_quantiles():
    assert_allclose(quest_quantiles(np.zeros(7), ConcentrationContext(10, 7)), np.zeros(7))


def test_point_mass_quantiles_match_bin_averages():
    q = quest_quantiles(np.ones(50), ConcentrationContext(100, 50))
    assert_allclose(q, mp_oracle.bin_averages(50, 0.5), atol=1e-3)


def test_half_of_the_bins_sit_in_the_atom():
    q = quest_quantiles(np.ones(200), ConcentrationContext(100, 200))
    assert np.all(q[:100] == 0)
    assert np.all(q[100:] > 0)


@given(spectra(), st.floats(0.01, 100.0))
def test_homogeneity(case, alpha):
    t, ctx = case
    assert_allclose(quest_quantiles(alpha * t, ctx), alpha * quest_quantiles(t, ctx), rtol=1e-6, atol=1e-12 * alpha)


@given(spectra())
def test_first_moment_is_preserved(case):
    t, ctx = case
    assert_allclose(quest_quantiles(t, ctx).mean(), t.mean(), rtol=1e-3)


@given(spectra())
def test_zero_quantile_count(case):
    t, ctx = case
    model = build_sample_spectral_model(t, ctx)
    q = quest_quantiles(t, ctx)
    assert np.all(np.diff(q) >= 0)
    expected = int(np.floor(ctx.p * model.mass_at_zero + 1e-9))
    assert np.count_nonzero(q == 0) in (expected, expected + 1)


def test_plain_quantiles_track_smoothed_ones():
    t = np.linspace(1, 5, 40)
    ctx = ConcentrationContext(80, 40)
    assert_allclose(quest_quantiles(t, ctx, smoothed=False), quest_quantiles(t, ctx), atol=0.05)


EULER_T = np.arange(1, 11) / 10
EULER_CTX = ConcentrationContext(20, 10)


@pytest.mark.parametrize("method", ["fd", "analytic"])
def test_euler_identity(method):
    J = quest_jacobian(EULER_T, EULER_CTX, method=method)
    assert_allclose(J @ EULER_T, quest_quantiles(EULER_T, EULER_CTX), rtol=1e-3, atol=1e-4)


def test_jacobian_scale_invariance():
    J1 = quest_jacobian(EULER_T, EULER_CTX)
    J3 = quest_jacobian(3 * EULER_T, EULER_CTX)
    assert_allclose(J3, J1, atol=1e-3)


def test_directional_derivative():
    J = quest_jacobian(EULER_T, EULER_CTX)
    q0 = quest_quantiles(EULER_T, EULER_CTX)
    for j in (0, 4, 9):
        h = 1e-4
        e = np.zeros(10)
        e[j] = h
        assert_allclose((quest_quantiles(EULER_T + e, EULER_CTX) - q0) / h, J[:, j], atol=5e-3)


@given(spectra(max_p=30))
def test_analytic_jacobian_matches_central_differences(case):
    t, ctx = case
    t = t + np.linspace(0, 1e-2, t.size)  # keep coordinates distinct
    Ja = quest_jacobian(t, ctx, method="analytic")
    Jc = quest_jacobian(t, ctx, central=True)
    assert_allclose(Ja, Jc, atol=2e-3 * max(1.0, np.abs(Jc).max()))


def test_jacobian_rejects_zero_spectrum():
    with pytest.raises(ValidationError):
        quest_jacobian(np.zeros(4), ConcentrationContext(8, 4))
