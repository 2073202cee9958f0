import numpy as np
import pytest

from mckvlab.forward import McKVProblem, decay_density, solve_mckv, uniform_density
from mckvlab.parabolic import StepperConfig
from mckvlab.spectral import PotentialVec, modes_in_ball, random_potential, w2inf_norm
from mckvlab.stability import (
    StabilityReport,
    deconvolution_margin,
    deconvolution_window,
    forward_lipschitz_probe,
    gradient_stability_sigma_min,
    pseudo_linearised_difference,
    stability_report,
)

N_GRID = 32
T = 0.25
CFG = StepperConfig(M=64)


def _phi(zeta=3.0, amplitude=0.3):
    return decay_density(N_GRID, 1, zeta=zeta, amplitude=amplitude)


def _problem(W, phi=None, cfg=CFG):
    return McKVProblem(W=W, phi=phi if phi is not None else _phi(), T=T, stepper=cfg)


# ---------------------------------------------------------------------------
# pseudo-linearisation


def test_pseudo_linearisation_identical_potentials():
    rng = np.random.default_rng(0)
    phi = _phi()
    W = random_potential(2, 1, rng, amplitude=0.4)
    v, residual = pseudo_linearised_difference(_problem(W, phi), _problem(W, phi))
    assert residual == 0.0
    assert np.max(np.abs(v.coeffs)) < 1e-14


def test_pseudo_linearisation_uniform_state():
    rng = np.random.default_rng(1)
    phi = uniform_density(N_GRID, 1)
    W1 = random_potential(2, 1, rng, amplitude=0.4)
    W2 = random_potential(2, 1, rng, amplitude=0.4)
    v, residual = pseudo_linearised_difference(_problem(W1, phi), _problem(W2, phi))
    assert np.max(np.abs(v.coeffs)) < 1e-14
    assert residual == 0.0


def test_pseudo_linearisation_residual_small_generic():
    # stage-carrying trajectories make the discrete identity exact
    rng = np.random.default_rng(2)
    phi = _phi()
    for _ in range(3):
        W1 = random_potential(2, 1, rng, amplitude=1.0)
        W1 = (0.8 / w2inf_norm(W1, N_GRID)) * W1
        W2 = random_potential(2, 1, rng, amplitude=1.0)
        W2 = (0.8 / w2inf_norm(W2, N_GRID)) * W2
        _, residual = pseudo_linearised_difference(_problem(W1, phi),
                                                   _problem(W2, phi))
        assert residual < 1e-12


def test_pseudo_linearisation_refines_at_scheme_order():
    # trajectories stripped of stage data exercise the generic O(dt^2) path
    rng = np.random.default_rng(3)
    phi = _phi()
    W1 = random_potential(2, 1, rng, amplitude=0.5)
    W2 = random_potential(2, 1, rng, amplitude=0.5)
    residuals = []
    for M in (32, 64, 128):
        cfg = StepperConfig(M=M)
        p1, p2 = _problem(W1, phi, cfg), _problem(W2, phi, cfg)
        r1 = solve_mckv(p1).without_stages()
        r2 = solve_mckv(p2).without_stages()
        _, res = pseudo_linearised_difference(p1, p2, r1, r2)
        residuals.append(res)
    r1, r2 = residuals[0] / residuals[1], residuals[1] / residuals[2]
    assert 2.8 < r1 < 5.5
    assert 2.8 < r2 < 5.5


# ---------------------------------------------------------------------------
# deconvolution margin


def test_margin_zero_for_uniform_state():
    phi = uniform_density(N_GRID, 1)
    rho = solve_mckv(_problem(PotentialVec.zeros(2, 1), phi))
    assert deconvolution_margin(rho, 2, 3.0) == 0.0


def test_margin_at_time_zero_reads_off_cstar():
    # phi_hat_k = c |k|^-zeta exactly: the t = 0 term of the margin is c
    zeta, c = 3.0, 0.3
    phi = _phi(zeta=zeta, amplitude=c)
    rho = solve_mckv(_problem(PotentialVec.zeros(3, 1), phi))
    t0 = deconvolution_window(rho, 3, zeta)
    margin = deconvolution_margin(rho, 3, zeta)
    assert margin <= c + 1e-12
    if t0 < rho.dt:
        assert margin == pytest.approx(c, abs=1e-12)


def test_margin_heat_case_matches_closed_form():
    zeta, c, K = 2.5, 0.3, 3
    phi = _phi(zeta=zeta, amplitude=c)
    rho = solve_mckv(_problem(PotentialVec.zeros(K, 1), phi))
    t0 = deconvolution_window(rho, K, zeta)
    margin = deconvolution_margin(rho, K, zeta)
    # heat evolution: rho_hat(t,k) = phi_hat_k e^{-4 pi^2 k^2 t}
    best = np.inf
    m_max = int(np.floor(t0 / rho.dt + 1e-12))
    for m in range(m_max + 1):
        t = m * rho.dt
        for k in modes_in_ball(K, 1):
            kk = abs(k[0])
            best = min(best, c * kk ** (-zeta) * np.exp(-4 * np.pi**2 * kk**2 * t)
                       * kk**zeta)
    assert margin == pytest.approx(best, rel=1e-10)


def test_margin_zero_iff_vanishing_mode():
    # a density missing mode 3 has zero margin at K = 3, positive at K = 2
    phi = _phi(zeta=2.0, amplitude=0.25)
    phi.coeffs[3] = 0.0
    phi.coeffs[-3] = 0.0
    rho = solve_mckv(McKVProblem(W=PotentialVec.zeros(2, 1), phi=phi, T=T,
                                 stepper=CFG))
    assert deconvolution_margin(rho, 3, 2.0) == 0.0
    assert deconvolution_margin(rho, 2, 2.0) > 0.0


# ---------------------------------------------------------------------------
# gradient stability


def test_sigma_min_zero_at_uniform_state():
    rng = np.random.default_rng(4)
    phi = uniform_density(N_GRID, 1)
    W = random_potential(2, 1, rng, amplitude=0.5)
    assert gradient_stability_sigma_min(_problem(W, phi)) < 1e-12


def test_sigma_min_positive_for_designed_density():
    rng = np.random.default_rng(5)
    W = random_potential(2, 1, rng, amplitude=0.3)
    sigma = gradient_stability_sigma_min(_problem(W))
    assert sigma > 0.0


def test_sigma_min_squared_is_min_gram_eigenvalue():
    from mckvlab.forward import gram_matrix, jacobian_columns

    rng = np.random.default_rng(6)
    W = random_potential(2, 1, rng, amplitude=0.3)
    prob = _problem(W)
    rho = solve_mckv(prob)
    sigma = gradient_stability_sigma_min(prob, rho_traj=rho)
    G = gram_matrix(jacobian_columns(prob, rho), T)
    assert sigma**2 == pytest.approx(np.linalg.eigvalsh(G)[0], abs=1e-10)


def test_sigma_min_monotone_in_truncation():
    # restricting to the nested smaller basis cannot lower the minimum
    rng = np.random.default_rng(7)
    W = random_potential(2, 1, rng, amplitude=0.3)
    prob = _problem(W)
    rho = solve_mckv(prob)
    s_small = gradient_stability_sigma_min(prob, K=2, rho_traj=rho)
    s_large = gradient_stability_sigma_min(prob, K=4, rho_traj=rho)
    assert s_large <= s_small + 1e-12


# ---------------------------------------------------------------------------
# forward Lipschitz probe


def test_lipschitz_probe_identical_rejected():
    rng = np.random.default_rng(8)
    W = random_potential(2, 1, rng, amplitude=0.4)
    with pytest.raises(ValueError):
        forward_lipschitz_probe(_problem(W), _problem(W), beta=4.0)


def test_lipschitz_probe_zero_at_uniform_state():
    rng = np.random.default_rng(9)
    phi = uniform_density(N_GRID, 1)
    W1 = random_potential(2, 1, rng, amplitude=0.4)
    W2 = random_potential(2, 1, rng, amplitude=0.4)
    assert forward_lipschitz_probe(_problem(W1, phi), _problem(W2, phi),
                                   beta=4.0) < 1e-12


def test_lipschitz_probe_converges_to_derivative_quotient():
    from mckvlab.forward import mckv_first_derivative

    rng = np.random.default_rng(10)
    beta = 4.0
    W = random_potential(2, 1, rng, amplitude=0.4)
    H = random_potential(2, 1, rng, amplitude=1.0)
    prob = _problem(W)
    rho = solve_mckv(prob)
    v = mckv_first_derivative(prob, H, rho)
    expected = v.l2l2_norm() / H.sobolev_norm(-(beta + 1.0))
    ratios = []
    for eps in (1e-2, 1e-3):
        p2 = _problem(W + eps * H)
        ratios.append(forward_lipschitz_probe(prob, p2, beta, rho1=rho))
    assert ratios[1] == pytest.approx(expected, rel=1e-3)
    assert abs(ratios[0] - ratios[1]) / ratios[1] < 0.2


# ---------------------------------------------------------------------------
# report container


def test_stability_report_fields_and_validation():
    rng = np.random.default_rng(11)
    W1 = random_potential(2, 1, rng, amplitude=0.3)
    W2 = W1 + random_potential(2, 1, rng, amplitude=0.2)
    rep = stability_report(_problem(W1), _problem(W2), K=2, zeta=3.0, beta=4.0)
    data = rep.to_json()
    for key in ("sigma_min", "decon_margin", "lipschitz_ratio",
                "pseudo_lin_residual"):
        assert key in data
    with pytest.raises(ValueError):
        StabilityReport(sigma_min=-1.0, decon_margin=0.0, lipschitz_ratio=0.0,
                        pseudo_lin_residual=0.0)
