import numpy as np
import pytest

from mckvlab.parabolic import (
    NumericalBlowUp,
    StepperConfig,
    Trajectory,
    heat_trajectory_exact,
    integrate,
    l2l2_inner,
    rel_l2l2_error,
    self_convergence_error,
    solve_heat,
    solve_linear_lw,
)
from mckvlab.forward import McKVProblem, decay_density, solve_mckv
from mckvlab.spectral import PotentialVec, SpectralField, random_potential

N_GRID = 32
T = 0.25


def _phi():
    return decay_density(N_GRID, 1, zeta=3.0, amplitude=0.3)


def test_zero_forcing_reproduces_heat_semigroup():
    phi = _phi()
    for scheme in ("if-heun", "if-euler"):
        traj = solve_heat(phi, T, StepperConfig(M=64, scheme=scheme))
        exact = heat_trajectory_exact(phi, T, 64)
        assert rel_l2l2_error(traj, exact) < 1e-10


def test_constant_forcing_linear_growth_exact():
    # u0 = 0, F = c constant in space: u(t) = c t exactly on the zero mode
    n = N_GRID
    c_field = np.zeros(n, dtype=complex)
    c_field[0] = 0.7
    u0 = SpectralField.zeros(n, 1)
    for scheme in ("if-heun", "if-euler"):
        traj = integrate(u0, lambda m, s, u: c_field, T,
                         StepperConfig(M=32, scheme=scheme))
        ts = np.linspace(0, T, 33)
        np.testing.assert_allclose(traj.zero_mode(), 0.7 * ts, atol=1e-14)


def test_zero_mode_conservation_divergence_forcing():
    rng = np.random.default_rng(0)
    phi = _phi()
    W = random_potential(3, 1, rng, amplitude=0.5)
    traj = solve_mckv(McKVProblem(W=W, phi=phi, T=T, stepper=StepperConfig(M=64)))
    np.testing.assert_allclose(traj.zero_mode(), 1.0, atol=1e-12)


def test_determinism_bit_identical():
    rng = np.random.default_rng(1)
    phi = _phi()
    W = random_potential(3, 1, rng, amplitude=0.5)
    prob = McKVProblem(W=W, phi=phi, T=T, stepper=StepperConfig(M=32))
    a = solve_mckv(prob)
    b = solve_mckv(prob)
    assert np.array_equal(a.coeffs, b.coeffs)


@pytest.mark.parametrize("scheme,expected_ratio,window", [
    ("if-euler", 2.0, (1.5, 2.9)),
    ("if-heun", 4.0, (3.0, 5.2)),
])
def test_self_convergence_order(scheme, expected_ratio, window):
    rng = np.random.default_rng(2)
    phi = _phi()
    W = random_potential(3, 1, rng, amplitude=0.6)

    def solve(config):
        return solve_mckv(McKVProblem(W=W, phi=phi, T=T, stepper=config))

    e1 = self_convergence_error(solve, StepperConfig(M=32, scheme=scheme))
    e2 = self_convergence_error(solve, StepperConfig(M=64, scheme=scheme))
    ratio = e1 / e2
    assert window[0] < ratio < window[1], (ratio, expected_ratio)


def test_blowup_detection_reports_step():
    phi = _phi()
    big = random_potential(3, 1, np.random.default_rng(3), amplitude=500.0)
    with pytest.raises(NumericalBlowUp) as excinfo:
        solve_mckv(McKVProblem(W=big, phi=phi, T=T, stepper=StepperConfig(M=8)))
    assert 1 <= excinfo.value.step <= 8


def test_linear_lw_heat_limit():
    # W = 0, f = 0, u0 = phi: the linear solve reduces to the heat flow
    phi = _phi()
    cfg = StepperConfig(M=64)
    rho = solve_heat(phi, T, cfg)
    W0 = PotentialVec.zeros(2, 1)
    traj = solve_linear_lw(W0, rho, None, phi, cfg)
    exact = heat_trajectory_exact(phi, T, 64)
    assert rel_l2l2_error(traj, exact) < 1e-10


def test_linear_lw_zero_data_is_zero():
    phi = _phi()
    cfg = StepperConfig(M=32)
    rng = np.random.default_rng(4)
    W = random_potential(2, 1, rng, amplitude=0.5)
    rho = solve_mckv(McKVProblem(W=W, phi=phi, T=T, stepper=cfg))
    zero = SpectralField.zeros(N_GRID, 1)
    forcing = Trajectory(T=T, d=1, n=N_GRID,
                         coeffs=np.zeros((33, N_GRID), dtype=complex))
    traj = solve_linear_lw(W, rho, forcing, zero, cfg)
    assert np.max(np.abs(traj.coeffs)) == 0.0


def test_linear_lw_superposition():
    phi = _phi()
    cfg = StepperConfig(M=32)
    rng = np.random.default_rng(5)
    W = random_potential(2, 1, rng, amplitude=0.5)
    rho = solve_mckv(McKVProblem(W=W, phi=phi, T=T, stepper=cfg))
    zero = SpectralField.zeros(N_GRID, 1)

    def random_forcing():
        c = np.zeros((33, N_GRID), dtype=complex)
        for m in range(33):
            f = random_potential(4, 1, rng, amplitude=1.0).to_field(N_GRID)
            c[m] = f.coeffs
        return Trajectory(T=T, d=1, n=N_GRID, coeffs=c)

    f1, f2 = random_forcing(), random_forcing()
    both = Trajectory(T=T, d=1, n=N_GRID, coeffs=f1.coeffs + f2.coeffs)
    u1 = solve_linear_lw(W, rho, f1, zero, cfg)
    u2 = solve_linear_lw(W, rho, f2, zero, cfg)
    u12 = solve_linear_lw(W, rho, both, zero, cfg)
    err = np.max(np.abs(u12.coeffs - u1.coeffs - u2.coeffs))
    assert err < 1e-10 * max(1.0, np.max(np.abs(u12.coeffs)))


def test_time_grid_mismatch_rejected():
    phi = _phi()
    cfg = StepperConfig(M=32)
    rho = solve_heat(phi, T, cfg)
    forcing = Trajectory(T=T, d=1, n=N_GRID,
                         coeffs=np.zeros((17, N_GRID), dtype=complex))
    with pytest.raises(ValueError):
        solve_linear_lw(PotentialVec.zeros(2, 1), rho, forcing, phi, cfg)


def test_trajectory_eval_at_node_matches_heat_kernel():
    phi = _phi()
    M = 64
    traj = solve_heat(phi, T, StepperConfig(M=M))
    g = phi.grid
    t = 17 * T / M
    x = 0.3
    exact_coeffs = phi.coeffs * np.exp(g.lap_mult * t)
    exact = SpectralField(1, N_GRID, exact_coeffs).eval(x)
    assert traj.eval(t, x) == pytest.approx(exact, abs=1e-10)


def test_trajectory_eval_batch_matches_scalar():
    phi = _phi()
    traj = solve_heat(phi, T, StepperConfig(M=32))
    rng = np.random.default_rng(6)
    ts = rng.uniform(0, T, 11)
    xs = rng.uniform(0, 1, (11, 1))
    batch = traj.eval_batch(ts, xs)
    scalar = np.array([traj.eval(t, x) for t, x in zip(ts, xs)])
    np.testing.assert_allclose(batch, scalar, atol=1e-12)


def test_trajectory_eval_rejects_out_of_range():
    phi = _phi()
    traj = solve_heat(phi, T, StepperConfig(M=8))
    with pytest.raises(ValueError):
        traj.eval(T + 0.1, 0.0)


def test_trajectory_inner_product_is_trapezoid():
    phi = _phi()
    traj = solve_heat(phi, T, StepperConfig(M=16))
    norms_sq = np.sum(np.abs(traj.coeffs) ** 2, axis=-1)
    dt = traj.dt
    expected = dt * (np.sum(norms_sq) - 0.5 * (norms_sq[0] + norms_sq[-1]))
    assert l2l2_inner(traj, traj) == pytest.approx(expected, rel=1e-14)
    assert traj.l2l2_norm() == pytest.approx(np.sqrt(expected), rel=1e-14)


def test_trajectory_serialization_round_trip(tmp_path):
    phi = _phi()
    traj = solve_heat(phi, T, StepperConfig(M=8))
    traj.save(tmp_path / "traj")
    back = Trajectory.load(tmp_path / "traj")
    assert back.M == traj.M and back.T == traj.T
    np.testing.assert_allclose(back.coeffs, traj.coeffs, atol=0)
