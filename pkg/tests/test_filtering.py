import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from leray_alpha.filtering import FilterParams, apply_filter, filter_bounds_report
from leray_alpha.spectral import (
    SpectralField,
    apply_semigroup,
    apply_stokes_power,
    build_basis,
    random_field,
    single_mode,
    sobolev_norm,
)


def test_alpha_zero_is_identity(basis8, rng):
    y = random_field(basis8, rng)
    assert apply_filter(y, 0.0) is y


@pytest.mark.parametrize("alpha, k, factor", [(1.0, (1, 0), 0.5), (0.5, (2, 0), 0.5), (0.0, (2, 1), 1.0)])
def test_single_mode_factors(alpha, k, factor):
    b = build_basis(8, 2)
    y = single_mode(b, k)
    np.testing.assert_allclose(apply_filter(y, FilterParams(alpha)).coef, factor * y.coef, rtol=1e-15)


@pytest.mark.parametrize("alpha", [-0.1, float("nan"), float("inf")])
def test_invalid_alpha(alpha):
    with pytest.raises(ValueError):
        FilterParams(alpha)


def test_report_zero_field(basis8):
    rep = filter_bounds_report(SpectralField.zeros(basis8), 0.3)
    assert rep["norm_l2"] == (0.0, 0.0)
    assert rep["weighted"] == (0.0, 0.0)
    assert rep["slack_weighted"] == 0.0


def test_report_single_mode_weighted_value(basis8):
    rep = filter_bounds_report(single_mode(basis8, (1, 0)), 1.0)
    assert rep["weighted"][0] == pytest.approx(0.75, rel=1e-15)
    assert rep["weighted"][1] == pytest.approx(1.0, rel=1e-15)


def test_weighted_factor_brute_force(basis32):
    # (1 + a^2 lam)^-2 (1 + 2 a^2 lam) <= 1 mode by mode
    for alpha in (0.01, 0.1, 1.0, 3.0):
        s = alpha**2 * basis32.eigenvalues
        assert np.all((1 + 2 * s) / (1 + s) ** 2 <= 1.0)


@pytest.mark.parametrize("alpha", [0.1, 1.0])
def test_report_random_fields(basis32, rng, alpha):
    for _ in range(20):
        rep = filter_bounds_report(random_field(basis32, rng), alpha)
        assert rep["modewise_contraction"]
        assert min(rep["slack_l2"], rep["slack_v"], rep["slack_weighted"]) >= -1e-12


def test_filter_commutes_with_diagonal_operators(basis16, rng):
    y = random_field(basis16, rng)
    for op in (lambda u: apply_semigroup(u, 0.2), lambda u: apply_stokes_power(u, 0.7)):
        a = apply_filter(op(y), 0.3).coef
        b = op(apply_filter(y, 0.3)).coef
        assert np.max(np.abs(a - b)) <= 1e-14 * np.max(np.abs(a))


@pytest.mark.parametrize("alpha", [0.01, 0.05, 0.2])
def test_alpha_consistency(basis16, rng, alpha):
    y = random_field(basis16, rng)
    gap = (apply_filter(y, alpha) - y).norm()
    assert gap <= alpha**2 * sobolev_norm(y, 1.0) * basis16.max_sqrt_eigenvalue


@settings(max_examples=40, deadline=None)
@given(alpha=st.floats(0.0, 50.0), seed=st.integers(0, 2**31 - 1))
def test_modewise_contraction_property(alpha, seed):
    b = build_basis(16, 5)
    y = random_field(b, np.random.default_rng(seed))
    z = apply_filter(y, alpha)
    assert np.all(np.abs(z.coef) <= np.abs(y.coef))
    assert z.norm() <= y.norm()
