import math

import numpy as np
import pytest

from leray_alpha.control import (
    WEIGHT_CAP,
    HUMConfig,
    WeightSpec,
    assemble_gramian,
    carleman_weight,
    control_bound_report,
    gramian_control,
    hum_solve,
    make_weights,
)
from leray_alpha.dynamics import (
    ControlMask,
    ControlSignal,
    OseenDrift,
    PropertyFailure,
    TimeGrid,
    simulate_leray,
    simulate_oseen,
)
from leray_alpha.oracles import scalar_penalized_control
from leray_alpha.spectral import (
    ConfigurationError,
    SpectralField,
    build_basis,
    random_field,
    single_mode,
    synthesize,
    two_mode,
)


def _drift(basis, g, seed=7, amp=0.5):
    y = random_field(basis, np.random.default_rng(seed), amp)
    return OseenDrift.from_trajectory(simulate_leray(y, None, 0.1, g), 0.1)


def test_uniform_weights(grid100):
    w = make_weights("uniform", grid100)
    assert np.all(w.w_v == 1.0) and np.all(w.w_y == 1.0)


@pytest.mark.parametrize("T, s, expected", [(1.0, 1.0, math.exp(4.0)), (2.0, 1.0, math.e), (2.0, 3.0, math.exp(3.0))])
def test_carleman_midpoint(T, s, expected):
    # exp(s / (T/2)^2) at t = T/2
    assert carleman_weight(T / 2, T, s, 1) == pytest.approx(expected, rel=1e-14)


def test_carleman_endpoints_capped(grid100):
    w = make_weights(WeightSpec("carleman_time", 1.0, 1), grid100)
    assert w.w_v[0] == w.w_v[-1] == WEIGHT_CAP
    assert np.all(w.w_v >= math.exp(4.0) * (1 - 1e-14))


@pytest.mark.parametrize("kind, s, m", [("gaussian", 1.0, 1), ("carleman_time", 0.0, 1), ("carleman_time", 1.0, 3)])
def test_weight_spec_validation(kind, s, m):
    with pytest.raises(ValueError):
        WeightSpec(kind, s, m)


@pytest.mark.parametrize("kw", [{"epsilon": 0.0}, {"epsilon": 2.0}, {"cg_tol": 1.0}, {"cg_max": 0}, {"method": "lu"}])
def test_hum_config_validation(kw):
    with pytest.raises(ValueError):
        HUMConfig(**kw)


def test_zero_initial_state(basis8, half_mask8, grid100):
    res = hum_solve(SpectralField.zeros(basis8), None, HUMConfig(), half_mask8, grid100)
    assert res.cg_iters == 0
    assert res.control.is_zero()
    assert res.terminal_norm == 0.0


@pytest.mark.parametrize("eps", [1e-2, 1e-4])
def test_scalar_mode_matches_closed_form(eps):
    b = build_basis(8, 1, modes=[(1, 0), (-1, 0)])
    g = TimeGrid(1.0, 400)
    y0 = single_mode(b, (1, 0), 0.8)
    res = hum_solve(y0, None, HUMConfig(epsilon=eps), ControlMask.full(8), g)
    c, yT = scalar_penalized_control(y0.coef[0].real, 1.0, 1.0, eps)
    assert res.trajectory.terminal.coef[0].real == pytest.approx(yT, rel=1e-4, abs=1e-9)
    f = res.control.forcing(b)[:, 0].real
    np.testing.assert_allclose(f, c * np.exp(-(1.0 - g.times)), rtol=1e-4)


def test_diagonal_gramian_closed_form(basis8, grid100):
    gram, _ = assemble_gramian(basis8, None, ControlMask.full(8), grid100)
    lam = np.repeat(basis8.eigenvalues[basis8.positive], 2)
    expected = (1 - np.exp(-2 * lam)) / (2 * lam)
    np.testing.assert_allclose(np.sort(np.diag(gram)), np.sort(expected), rtol=1e-3)
    assert np.max(np.abs(gram - np.diag(np.diag(gram)))) <= 1e-15


def test_gramian_symmetric_psd(basis8, half_mask8, grid100):
    gram, _ = assemble_gramian(basis8, _drift(basis8, grid100), half_mask8, grid100)
    np.testing.assert_array_equal(gram, gram.T)
    assert np.linalg.eigvalsh(gram).min() >= -1e-12


def test_gramian_size_limit(basis16, grid100):
    with pytest.raises(ConfigurationError):
        assemble_gramian(basis16, None, ControlMask.full(16), grid100)


@pytest.mark.parametrize("basis_args", [(8, 1, 4), (8, 1, None)])
@pytest.mark.parametrize("with_drift", [False, True])
def test_hum_matches_dense_gramian(basis_args, with_drift, half_mask8, grid100):
    n, k, m = basis_args
    b = build_basis(n, k, n_modes=m)
    h = _drift(b, grid100) if with_drift else None
    y0 = random_field(b, np.random.default_rng(3), 0.3)
    eps = 1e-4
    res = hum_solve(y0, h, HUMConfig(epsilon=eps, cg_tol=1e-12), half_mask8, grid100)
    ref = gramian_control(y0, h, eps, half_mask8, grid100)
    assert res.converged
    gap = np.max(np.abs(res.control.values - ref.values))
    assert gap <= 1e-8 * max(ref.linf_l2(), 1e-300)


def test_carleman_weights_match_gramian(basis8, half_mask8, grid100):
    spec = WeightSpec("carleman_time", 0.05, 1)
    y0 = two_mode(basis8, 0.2)
    res = hum_solve(y0, None, HUMConfig(epsilon=1e-3, weights=spec, cg_tol=1e-12), half_mask8, grid100)
    ref = gramian_control(y0, None, 1e-3, half_mask8, grid100, weights=spec)
    assert np.max(np.abs(res.control.values - ref.values)) <= 1e-8 * ref.linf_l2()
    # the weight vanishes the control at the endpoints
    assert res.control.l2_norms()[0] <= 1e-20 and res.control.l2_norms()[-1] <= 1e-20


def test_optimality_relation(basis8, half_mask8, grid100):
    spec = WeightSpec("carleman_time", 0.05, 1)
    res = hum_solve(two_mode(basis8, 0.2), _drift(basis8, grid100), HUMConfig(weights=spec),
                    half_mask8, grid100)
    w = make_weights(spec, grid100)
    phi = np.moveaxis(synthesize(basis8, res.adjoint.coef), -3, -1)
    resid = res.control.values + (w.control_factor[:, None, None, None]
                                  * half_mask8.values[None, :, :, None] * phi)
    assert np.max(np.abs(resid)) <= 1e-14 * max(np.abs(res.control.values).max(), 1.0)


def test_control_supported_in_mask(basis8, half_mask8, grid100):
    res = hum_solve(two_mode(basis8, 0.2), None, HUMConfig(), half_mask8, grid100)
    assert not np.any(res.control.values[:, half_mask8.values == 0])


@pytest.mark.parametrize("seed", range(4))
def test_cost_monotone_along_cg(basis16, seed):
    g = TimeGrid(1.0, 50)
    mask = ControlMask.rectangle(16, (0.0, math.pi), (0.0, 2 * math.pi))
    y0 = random_field(basis16, np.random.default_rng(seed), 0.5)
    res = hum_solve(y0, None, HUMConfig(epsilon=1e-5, cg_max=40), mask, g)
    costs = np.array([h["cost"] for h in res.history])
    assert np.all(np.diff(costs) <= 1e-9 * costs[0])
    # iterate 0 is the uncontrolled evolution
    free = simulate_oseen(y0, None, None, g).terminal.norm()
    assert res.history[0]["terminal_norm"] == pytest.approx(free, rel=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_larger_region_gives_smaller_cost(basis8, grid100, seed):
    small = ControlMask.rectangle(8, (0.0, math.pi / 2), (0.0, 2 * math.pi))
    big = ControlMask.rectangle(8, (0.0, math.pi), (0.0, 2 * math.pi))
    y0 = random_field(basis8, np.random.default_rng(seed), 0.3)
    h = _drift(basis8, grid100, seed)
    cfg = HUMConfig(epsilon=1e-4, cg_tol=1e-12)
    a = hum_solve(y0, h, cfg, small, grid100)
    b = hum_solve(y0, h, cfg, big, grid100)
    assert b.cost <= a.cost * (1 + 1e-9)


def test_penalization_drives_terminal_down(basis8, half_mask8, grid100):
    y0 = two_mode(basis8, 0.3)
    norms = [hum_solve(y0, None, HUMConfig(epsilon=e), half_mask8, grid100).terminal_norm
             for e in (1e-2, 1e-4, 1e-6)]
    assert norms[0] > norms[1] > norms[2]
    assert norms[2] <= 1e-4 * y0.norm()


def test_source_term_is_cancelled(basis8, half_mask8, grid100):
    y0 = two_mode(basis8, 0.2)
    src = np.zeros((grid100.M + 1, basis8.size), dtype=complex)
    src[:] = single_mode(basis8, (1, 1), 0.1).coef
    res = hum_solve(y0, None, HUMConfig(epsilon=1e-6), half_mask8, grid100, source=src)
    ref = gramian_control(y0, None, 1e-6, half_mask8, grid100, source=src)
    assert np.max(np.abs(res.control.values - ref.values)) <= 1e-7 * ref.linf_l2()
    assert res.terminal_norm <= 1e-3 * y0.norm()


def test_cost_increase_is_flagged(monkeypatch, basis8, half_mask8, grid100):
    import leray_alpha.control as control

    real = control._rdot
    calls = {"n": 0}

    def corrupted(a, b):
        calls["n"] += 1
        # inflate the penalty once CG is running
        return real(a, b) * (1e6 if calls["n"] > 8 else 1.0)

    monkeypatch.setattr(control, "_rdot", corrupted)
    with pytest.raises(PropertyFailure):
        hum_solve(two_mode(basis8, 0.2), None, HUMConfig(epsilon=1e-6), half_mask8, grid100)


def test_bound_report_zero_control(basis8, half_mask8, grid100):
    rep = control_bound_report(ControlSignal.zeros(grid100, half_mask8), None, two_mode(basis8))
    assert rep["fitted_K"] == -math.inf
    assert rep["fitted_K_label"] == "unbounded-below"


def test_bound_report_formula(basis8, half_mask8, grid100):
    y0 = two_mode(basis8, 0.2)
    h = _drift(basis8, grid100)
    v = hum_solve(y0, h, HUMConfig(), half_mask8, grid100).control
    rep = control_bound_report(v, h, y0)
    expected = math.log(v.linf_l2() / 0.2) / (1 + h.sup_norm() ** 2)
    assert rep["fitted_K"] == pytest.approx(expected, rel=1e-14)
    with pytest.raises(ValueError):
        control_bound_report(v, h, SpectralField.zeros(basis8))


def test_mismatched_grids_rejected(basis8, half_mask8, grid100):
    h = OseenDrift.zeros(TimeGrid(1.0, 50), basis8)
    with pytest.raises(ValueError):
        hum_solve(two_mode(basis8), h, HUMConfig(), half_mask8, grid100)
    with pytest.raises(ValueError):
        hum_solve(two_mode(basis8), None, HUMConfig(), ControlMask.full(16), grid100)
