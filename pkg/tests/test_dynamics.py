import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from leray_alpha.dynamics import (
    ControlMask,
    ControlSignal,
    OseenDrift,
    Propagator,
    PropertyFailure,
    SimulationError,
    TimeGrid,
    Trajectory,
    advect,
    duhamel_reconstruct,
    energy_report,
    regularization_times,
    simulate_adjoint,
    simulate_leray,
    simulate_oseen,
    trapezoid_weights,
)
from leray_alpha.oracles import rk4_galerkin
from leray_alpha.spectral import (
    SpectralField,
    apply_semigroup,
    build_basis,
    random_field,
    single_mode,
    to_grid,
    two_mode,
)


def _sym_field(basis, coef, x1, x2):
    """Symbolic velocity sum_k c_k e_k e^{i k.x} over the nonzero coefficients."""
    u = sp.zeros(2, 1)
    for c, (k1, k2) in zip(coef, basis.modes):
        if c == 0:
            continue
        k1, k2 = int(k1), int(k2)
        s = 1 if (k1 > 0 or (k1 == 0 and k2 > 0)) else -1
        e = sp.Matrix([-k2, k1]) * s / sp.sqrt(k1 * k1 + k2 * k2)
        u += sp.nsimplify(complex(c).real) * e * sp.exp(sp.I * (k1 * x1 + k2 * x2))
    return u


def test_advect_matches_symbolic_two_mode(basis8):
    z = single_mode(basis8, (1, 0), 1.0)
    y = single_mode(basis8, (0, 1), 1.0)
    x1, x2 = sp.symbols("x1 x2", real=True)
    zs, ys = _sym_field(basis8, z.coef, x1, x2), _sym_field(basis8, y.coef, x1, x2)
    F = zs[0] * sp.diff(ys, x1) + zs[1] * sp.diff(ys, x2)
    out = advect(z, y)
    for p, (k1, k2) in enumerate(basis8.modes):
        k1, k2 = int(k1), int(k2)
        s = 1 if (k1 > 0 or (k1 == 0 and k2 > 0)) else -1
        e = sp.Matrix([-k2, k1]) * s / sp.sqrt(k1 * k1 + k2 * k2)
        integrand = sp.expand((e.T * F)[0] * sp.exp(-sp.I * (k1 * x1 + k2 * x2)))
        val = sp.integrate(integrand, (x1, 0, 2 * sp.pi), (x2, 0, 2 * sp.pi)) / (4 * sp.pi**2)
        assert abs(complex(val) - out.coef[p]) <= 1e-14
    # only the sum and difference modes are hit
    hit = {tuple(basis8.modes[i]) for i in np.flatnonzero(np.abs(out.coef) > 1e-14)}
    assert hit <= {(1, 1), (-1, -1), (-1, 1), (1, -1)}
    assert hit


def test_advect_zero_inputs(basis8):
    y = two_mode(basis8)
    zero = SpectralField.zeros(basis8)
    assert not np.any(advect(zero, y).coef)
    assert not np.any(advect(y, zero).coef)


def test_advect_self_single_mode_vanishes(basis16):
    # a single Fourier pair is a steady Euler flow
    y = single_mode(basis16, (2, 1), 0.8)
    assert np.max(np.abs(advect(y, y).coef)) <= 1e-14


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_advect_skew_symmetric(seed):
    b = build_basis(16, 5)
    rng = np.random.default_rng(seed)
    z, y = random_field(b, rng), random_field(b, rng)
    assert abs(advect(z, y).inner(y)) <= 1e-12 * z.norm() * y.norm() ** 2 * b.max_sqrt_eigenvalue


def test_leray_zero_state(basis8, grid100):
    tr = simulate_leray(SpectralField.zeros(basis8), None, 0.1, grid100)
    assert not np.any(tr.coef)


@pytest.mark.parametrize("alpha", [0.0, 0.5])
def test_leray_single_mode_pure_decay(basis16, alpha):
    y0 = single_mode(basis16, (1, 2), 0.4)
    tr = simulate_leray(y0, None, alpha, TimeGrid(1.0, 400))
    exact = apply_semigroup(y0, 1.0)
    assert np.linalg.norm(tr.terminal.coef - exact.coef) <= 1e-6 * y0.norm()


@pytest.mark.parametrize("alpha", [0.0, 0.3])
def test_leray_against_rk4_oracle(alpha):
    b = build_basis(8, 2)
    y0 = single_mode(b, (1, 0), 0.6) + single_mode(b, (1, 1), 0.5) + single_mode(b, (0, 2), 0.3)
    g = TimeGrid(0.5, 500)
    tr = simulate_leray(y0, None, alpha, g)
    _, ref = rk4_galerkin(b.modes, b.eigenvalues, y0.coef, 0.5, 1e-4, alpha=alpha)
    assert np.linalg.norm(tr.terminal.coef - ref[-1]) <= 1e-5 * y0.norm()


def test_leray_energy_decreases(basis16, rng, grid100):
    tr = simulate_leray(random_field(basis16, rng), None, 0.2, grid100)
    assert np.all(np.diff(tr.norms()) <= 1e-14)


def test_oseen_zero_drift_is_heat_semigroup(basis16, rng, grid100):
    y0 = random_field(basis16, rng)
    tr = simulate_oseen(y0, None, None, grid100)
    # Crank-Nicolson against the exact semigroup
    assert np.linalg.norm(tr.terminal.coef - apply_semigroup(y0, 1.0).coef) <= 1e-3 * y0.norm()


def test_oseen_superposition(basis16, rng, grid100):
    h = OseenDrift.from_trajectory(simulate_leray(random_field(basis16, rng), None, 0.1, grid100), 0.1)
    a, b = random_field(basis16, rng), random_field(basis16, rng)
    ya = simulate_oseen(a, h, None, grid100).coef
    yb = simulate_oseen(b, h, None, grid100).coef
    yab = simulate_oseen(2.0 * a + b * -3.0, h, None, grid100).coef
    assert np.max(np.abs(yab - (2 * ya - 3 * yb))) <= 1e-13 * np.max(np.abs(yab))


@pytest.mark.parametrize("alpha", [0.0, 0.2])
def test_oseen_with_frozen_leray_drift_reproduces_leray(basis16, rng, grid100, alpha):
    y0 = random_field(basis16, rng, 0.5)
    tr = simulate_leray(y0, None, alpha, grid100)
    os_tr = simulate_oseen(y0, OseenDrift.from_trajectory(tr, alpha), None, grid100)
    assert np.max(np.abs(os_tr.coef - tr.coef)) <= 1e-8 * y0.norm()


def test_oseen_drift_time_grid_mismatch(basis8, grid100):
    h = OseenDrift.zeros(TimeGrid(1.0, 50), basis8)
    with pytest.raises(ValueError):
        simulate_oseen(two_mode(basis8), h, None, grid100)


def test_adjoint_zero_drift(basis16, rng, grid100):
    phi = random_field(basis16, rng)
    tr = simulate_adjoint(phi, None, grid100)
    np.testing.assert_array_equal(tr.terminal.coef, phi.coef)
    assert np.linalg.norm(tr.initial.coef - apply_semigroup(phi, 1.0).coef) <= 1e-3 * phi.norm()


def test_adjoint_duality(basis16, rng, grid100):
    # (y(T), phi(T)) - (y0, phi(0)) = dt sum_n c_n (F_n, phi_n) with v on the full mask
    g = grid100
    h = OseenDrift.from_trajectory(simulate_leray(random_field(basis16, rng), None, 0.0, g))
    y0, phiT = random_field(basis16, rng), random_field(basis16, rng)
    mask = ControlMask.full(16)
    vals = np.stack([to_grid(random_field(basis16, rng)).values for _ in range(g.M + 1)])
    v = ControlSignal(g, vals, mask)
    y = simulate_oseen(y0, h, v, g)
    phi = simulate_adjoint(phiT, h, g)
    f = v.forcing(basis16)
    lhs = y.terminal.inner(phiT) - y0.inner(phi.initial)
    rhs = g.dt * np.sum(trapezoid_weights(g) * np.real(np.sum(np.conj(f) * phi.coef, axis=1)))
    assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), 1.0)


def test_step_matrix_transpose_is_adjoint_step(basis8, rng):
    prop = Propagator(basis8, 0.01)
    h = random_field(basis8, rng).coef
    S = prop.step_matrix(h)
    b = basis8
    cols = b.from_real(np.eye(b.size))
    St = b.to_real(prop.flow_adjoint(cols, h)).T
    np.testing.assert_allclose(St, S.T, atol=1e-14)


def test_duhamel_semigroup_case(basis16, rng, grid100):
    y0 = random_field(basis16, rng)
    tr = duhamel_reconstruct(y0, None, None, grid100)
    for n in (0, 37, 100):
        exact = apply_semigroup(y0, grid100.times[n])
        assert np.linalg.norm(tr[n].coef - exact.coef) <= 1e-14 * y0.norm()


def test_duhamel_constant_control_closed_form(basis8, grid100):
    u = single_mode(basis8, (1, 1), 0.3)
    lam = 2.0
    mask = ControlMask.full(8)
    vals = np.broadcast_to(to_grid(u).values, (grid100.M + 1, 8, 8, 2))
    v = ControlSignal(grid100, vals, mask)
    y0 = single_mode(basis8, (1, 1), 0.2)
    tr = duhamel_reconstruct(y0, None, v, grid100)
    exact = math.exp(-lam) * y0.coef + u.coef * (1 - math.exp(-lam)) / lam
    # trapezoid quadrature error ~ (lam dt)^2 / 12
    assert np.linalg.norm(tr.terminal.coef - exact) <= (lam * grid100.dt) ** 2 * np.linalg.norm(exact)


def test_duhamel_matches_oseen_with_random_drift(basis16, rng):
    # lam_max dt must stay well below 1 for Crank-Nicolson to track the exponential
    g = TimeGrid(1.0, 400)
    h = OseenDrift.from_trajectory(simulate_leray(random_field(basis16, rng), None, 0.1, g), 0.1)
    y0 = random_field(basis16, rng)
    a = simulate_oseen(y0, h, None, g)
    b = duhamel_reconstruct(y0, h, None, g)
    assert np.max(np.linalg.norm(a.coef - b.coef, axis=1)) <= 1e-3 * y0.norm()


def test_energy_report_zero(basis8, grid100):
    rep = energy_report(simulate_leray(SpectralField.zeros(basis8), None, 0.0, grid100))
    assert not np.any(rep.residuals)
    assert rep.a_priori_ratio == 0.0


@pytest.mark.parametrize("alpha", [0.0, 0.1])
def test_energy_residual_small(basis16, rng, grid100, alpha):
    y0 = random_field(basis16, rng)
    rep = energy_report(simulate_leray(y0, None, alpha, grid100), p=alpha)
    assert np.max(np.abs(rep.residuals)) <= 1e-8 * y0.norm() ** 2
    assert rep.sup_filtered_l2 <= rep.sup_l2
    assert rep.dissipation[-1] <= y0.norm() ** 2


def test_regularization_single_mode_closed_form():
    b = build_basis(8, 2)
    y0 = single_mode(b, (2, 0), 0.5)
    g = TimeGrid(1.0, 1000)
    rep = regularization_times(simulate_leray(y0, None, 0.0, g), 1.6, 0.5)
    # 4 e^{-8 t} <= 3.2 from t = ln(1.25) / 8 on
    assert rep["measure"] == pytest.approx(0.5 - math.log(1.25) / 8, abs=2 * g.dt)
    assert rep["measure"] >= rep["bound"]


def test_regularization_large_k_saturates(basis16, rng, grid100):
    rep = regularization_times(simulate_leray(random_field(basis16, rng), None, 0.0, grid100), 1e6, 0.5)
    assert rep["measure"] == pytest.approx(0.5, abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_regularization_bound_random(basis16, grid100, seed):
    tr = simulate_leray(random_field(basis16, np.random.default_rng(seed), 2.0), None, 0.05, grid100)
    for k in (1.6, 3.0, 10.0):
        rep = regularization_times(tr, k, 0.5)
        assert rep["measure"] >= rep["bound"] - grid100.dt


def test_regularization_failure_is_reported(basis8):
    g = TimeGrid(1.0, 10)
    # a growing path violates the bound; build it by hand
    y0 = single_mode(basis8, (1, 1), 1e-3)
    coef = np.outer(np.linspace(1, 100, g.M + 1), y0.coef)
    with pytest.raises(PropertyFailure):
        regularization_times(Trajectory(g, basis8, coef), 1.6, 0.5)


def test_regularization_argument_checks(basis8, grid100):
    tr = simulate_leray(two_mode(basis8), None, 0.0, grid100)
    with pytest.raises(ValueError):
        regularization_times(tr, 1.4, 0.5)
    with pytest.raises(ValueError):
        regularization_times(tr, 2.0, 0.8)


def test_step_size_limit_raises(basis16):
    y0 = single_mode(basis16, (1, 0), 400.0)
    with pytest.raises(SimulationError) as info:
        simulate_leray(y0, None, 0.0, TimeGrid(1.0, 10))
    assert info.value.step == 0


@pytest.mark.parametrize("T, M", [(0.0, 10), (-1.0, 10), (float("inf"), 10), (1.0, 1), (1.0, 2.5)])
def test_time_grid_validation(T, M):
    with pytest.raises(ValueError):
        TimeGrid(T, M)


def test_time_grid_spacing():
    g = TimeGrid(1.0, 200)
    assert g.times[-1] == 1.0
    assert g.dt * g.M == pytest.approx(1.0, rel=1e-15)
    assert trapezoid_weights(g).sum() == g.M


def test_mask_rectangle_half_open():
    m = ControlMask.rectangle(8, (0.0, math.pi), (0.0, 2 * math.pi))
    assert m.area_fraction() == 0.5
    with pytest.raises(ValueError):
        ControlMask(np.zeros((8, 8)))
    with pytest.raises(ValueError):
        ControlMask(np.full((8, 8), 1.5))


def test_control_signal_support_enforced(half_mask8, grid100):
    vals = np.ones((grid100.M + 1, 8, 8, 2))
    with pytest.raises(ValueError):
        ControlSignal(grid100, vals, half_mask8)
    ok = vals * (half_mask8.values > 0)[None, :, :, None]
    assert ControlSignal(grid100, ok, half_mask8).linf_l2() == pytest.approx(1.0)
