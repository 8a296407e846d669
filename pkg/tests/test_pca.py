from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from numpy.testing import assert_allclose
from scipy.stats import ortho_group

from quest_shrinkage.pca import (
    ExplainedVariationCurve,
    components_to_retain,
    explained_fraction_curve,
    variation_attributable,
)
from quest_shrinkage.spectral import ValidationError

positive = arrays(np.float64, st.integers(1, 40), elements=st.floats(1e-3, 1e3))


def test_equal_shares():
    curve = explained_fraction_curve(np.full(8, 2.0))
    assert_allclose(curve.f, np.arange(1, 9) / 8)
    assert curve.f[-1] == 1.0


def test_hand_example():
    curve = explained_fraction_curve([1.0, 3.0, 6.0])
    assert_allclose(curve.f[:2], [0.6, 0.9])


def test_retention_examples():
    curve = ExplainedVariationCurve(np.array([0.5, 0.8, 1.0]))
    assert components_to_retain(curve, 0.7) == 2
    assert components_to_retain(curve, 0.8) == 2
    assert components_to_retain(explained_fraction_curve(np.ones(10)), 0.85) == 9
    with pytest.raises(ValidationError):
        components_to_retain(curve, 1.0)


def test_curve_validation():
    with pytest.raises(ValidationError):
        ExplainedVariationCurve(np.array([0.5, 0.4, 1.0]))
    with pytest.raises(ValidationError):
        ExplainedVariationCurve(np.array([0.5, 0.9]))
    with pytest.raises(ValidationError):
        explained_fraction_curve([1.0, 0.0])
    assert explained_fraction_curve([1.0, 0.0], "sample", strict=False).f[-1] == 1.0


@given(positive, st.floats(0.01, 0.99), st.floats(0.01, 0.99))
def test_retention_is_monotone_in_q(d, q1, q2):
    curve = explained_fraction_curve(d)
    lo, hi = sorted((q1, q2))
    assert components_to_retain(curve, lo) <= components_to_retain(curve, hi)
    assert 1 <= components_to_retain(curve, hi) <= d.size


@given(positive)
def test_curve_properties(d):
    curve = explained_fraction_curve(d)
    assert np.all(np.diff(curve.f) >= 0)
    assert curve.f[-1] == 1.0
    assert_allclose(curve.f[0], d.max() / d.sum())
    asc = curve.ascending()
    assert_allclose(asc[-1], 1.0)
    assert np.all(asc <= curve.f + 1e-12)


def test_higher_curve_needs_fewer_components():
    steep = explained_fraction_curve([10.0, 1.0, 1.0, 1.0])
    flat = explained_fraction_curve([1.0, 1.0, 1.0, 1.0])
    for q in (0.3, 0.5, 0.7, 0.9):
        assert components_to_retain(steep, q) <= components_to_retain(flat, q)


def test_variation_attributable_examples():
    Sigma = np.diag([4.0, 3.0, 2.0, 1.0])
    assert_allclose(variation_attributable(np.eye(4)[:, :2], Sigma), 7.0)
    assert_allclose(variation_attributable(np.eye(4), Sigma), np.trace(Sigma))
    with pytest.raises(ValidationError):
        variation_attributable(np.ones((4, 2)), Sigma)


@given(st.integers(2, 12), st.integers(0, 2**32 - 1))
def test_rotation_invariance(p, seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, p + 1))
    A = rng.standard_normal((p, p))
    Sigma = A @ A.T + np.eye(p)
    W = ortho_group.rvs(p, random_state=rng)[:, :k]
    R = ortho_group.rvs(k, random_state=rng) if k > 1 else np.ones((1, 1))
    a = variation_attributable(W, Sigma)
    b = variation_attributable(W @ R, Sigma)
    assert abs(a - b) <= 1e-12 * max(1.0, abs(a))
