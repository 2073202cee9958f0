"""Verification suites behind the CLI: each check returns a record
{name, passed, measured, tolerance} so reports are machine readable.

The suites exercise the finite-difference oracles for every derivative,
the stability diagnostics, the surrogate identities and the sampler's
closed-form Gaussian target, at the scale given by the experiment
config.
"""

from __future__ import annotations

import itertools

import numpy as np

from .config import ExperimentConfig
from .forward import McKVProblem, ReactionSpec, solve_mckv, solve_rd, rd_linearisation
from .forward import mckv_first_derivative
from .inference import (
    ForwardModel,
    LikelihoodEvaluator,
    PriorSpec,
    SurrogateSpec,
    cutoff_alpha,
    gamma_smooth,
    gamma_tilde,
    generate_data,
    surrogate_loglik,
)
from .parabolic import self_convergence_error
from .sampler import run_ula, w2sq_assignment, w2sq_quantile_1d
from .spectral import random_potential
from .stability import (
    deconvolution_margin,
    forward_lipschitz_probe,
    gradient_stability_sigma_min,
    pseudo_linearised_difference,
)


def _record(name, passed, measured, tolerance, **extra):
    rec = {"name": name, "passed": bool(passed), "measured": float(measured),
           "tolerance": float(tolerance)}
    rec.update(extra)
    return rec


def _fd_error(problem_of, base_problem, H, eps):
    rho = solve_mckv(base_problem)
    v = mckv_first_derivative(base_problem, H, rho)
    rp = solve_mckv(problem_of(eps))
    rm = solve_mckv(problem_of(-eps))
    fd = (rp.coeffs - rm.coeffs) / (2 * eps)
    num = np.sqrt(np.sum(np.abs(fd - v.coeffs) ** 2))
    den = np.sqrt(np.sum(np.abs(v.coeffs) ** 2))
    return num / den


def suite_gradients(config: ExperimentConfig, n_pairs: int = 3) -> list[dict]:
    rng = np.random.default_rng(config.seed + 101)
    phi = config.phi()
    stepper = config.stepper()
    p = config["problem"]
    K, d, T = int(p["K"]), int(p["d"]), float(p["T"])
    records = []

    def make(W):
        return McKVProblem(W=W, phi=phi, T=T, stepper=stepper)

    floor = self_convergence_error(
        lambda c: solve_mckv(McKVProblem(
            W=random_potential(K, d, np.random.default_rng(config.seed), 0.5),
            phi=phi, T=T, stepper=c)),
        stepper)

    for i in range(n_pairs):
        W = random_potential(K, d, rng, amplitude=0.5)
        H = random_potential(K, d, rng, amplitude=0.5)
        errs = [_fd_error(lambda e: make(W + e * H), make(W), H, eps)
                for eps in (1e-2, 1e-3)]
        tol = 1e-4 + 10.0 * floor
        records.append(_record(f"mckv_first_fd_{i}", errs[1] <= tol, errs[1], tol))
        slope = np.log10(errs[0] / errs[1])
        records.append(_record(f"mckv_fd_slope_{i}", abs(slope - 2.0) <= 0.3,
                               slope, 0.3))

    # reaction-diffusion linearisation
    R = ReactionSpec(R=np.sin, Rprime=np.cos)
    H = ReactionSpec(R=np.cos, Rprime=lambda u: -np.sin(u))
    u = solve_rd(R, phi, T, stepper)
    iH = rd_linearisation(R, H, u, stepper)
    eps = 1e-3
    up = solve_rd(ReactionSpec(R=lambda v: np.sin(v) + eps * np.cos(v),
                               Rprime=lambda v: np.cos(v) - eps * np.sin(v)),
                  phi, T, stepper)
    um = solve_rd(ReactionSpec(R=lambda v: np.sin(v) - eps * np.cos(v),
                               Rprime=lambda v: np.cos(v) + eps * np.sin(v)),
                  phi, T, stepper)
    fd = (up.coeffs - um.coeffs) / (2 * eps)
    err = float(np.sqrt(np.sum(np.abs(fd - iH.coeffs) ** 2)
                        / np.sum(np.abs(iH.coeffs) ** 2)))
    records.append(_record("rd_linearisation_fd", err <= 1e-4 + 10 * floor,
                           err, 1e-4 + 10 * floor))

    # likelihood gradient, small data
    model = ForwardModel(phi=phi, T=T, K=K, stepper=stepper)
    W0 = config.w0()
    data = generate_data(W0, model, n_obs=30,
                         noise_std=float(config["inference"]["noise_std"]),
                         rng=rng)
    like = LikelihoodEvaluator(model, data)
    Wt = W0 + random_potential(K, d, rng, amplitude=0.1)
    _, grad = like.loglik_and_grad(Wt)
    eps = 1e-3
    worst = 0.0
    scale = max(1.0, float(np.max(np.abs(grad))))
    for j in range(grad.size):
        e = np.zeros_like(grad)
        e[j] = eps
        fd_j = (like.loglik(model.vec(Wt.values + e))
                - like.loglik(model.vec(Wt.values - e))) / (2 * eps)
        worst = max(worst, abs(fd_j - grad[j]) / scale)
    records.append(_record("loglik_grad_fd", worst <= 1e-3, worst, 1e-3))
    return records


def suite_stability(config: ExperimentConfig) -> list[dict]:
    rng = np.random.default_rng(config.seed + 202)
    phi = config.phi()
    stepper = config.stepper()
    p = config["problem"]
    K, d, T = int(p["K"]), int(p["d"]), float(p["T"])
    zeta = float(config["constants"]["zeta"])
    beta = float(config["constants"]["beta"])
    records = []

    W1 = random_potential(K, d, rng, amplitude=0.4)
    W2 = W1 + random_potential(K, d, rng, amplitude=0.3)
    p1 = McKVProblem(W=W1, phi=phi, T=T, stepper=stepper)
    p2 = McKVProblem(W=W2, phi=phi, T=T, stepper=stepper)
    rho1 = solve_mckv(p1)

    floor = self_convergence_error(
        lambda c: solve_mckv(McKVProblem(W=W1, phi=phi, T=T, stepper=c)), stepper)
    _, residual = pseudo_linearised_difference(p1, p2)
    tol = max(5.0 * floor, 1e-12)
    records.append(_record("pseudo_linearisation", residual <= tol, residual, tol))

    sigma = gradient_stability_sigma_min(p1, K=K, rho_traj=rho1)
    is_uniform = float(np.sum(np.abs(phi.coeffs)) - abs(phi.mean())) < 1e-13
    if is_uniform:
        records.append(_record("sigma_min_uniform_zero", sigma <= 1e-12, sigma, 1e-12))
    else:
        records.append(_record("sigma_min_positive", sigma > 0, sigma, 0.0))

    margin = deconvolution_margin(rho1, K, zeta)
    expected_zero = is_uniform
    records.append(_record("decon_margin_zero" if expected_zero else "decon_margin",
                           (margin <= 1e-14) if expected_zero else margin >= 0.0,
                           margin, 0.0))

    if not is_uniform:
        ratios = []
        base = random_potential(K, d, rng, amplitude=1.0)
        for eps in (1e-2, 1e-3):
            pe = McKVProblem(W=W1 + eps * base, phi=phi, T=T, stepper=stepper)
            ratios.append(forward_lipschitz_probe(p1, pe, beta, rho1=rho1))
        rel = abs(ratios[0] - ratios[1]) / ratios[1]
        records.append(_record("lipschitz_ratio_stable", rel <= 0.2, rel, 0.2))
    return records


def suite_surrogate(config: ExperimentConfig) -> list[dict]:
    rng = np.random.default_rng(config.seed + 303)
    phi = config.phi()
    stepper = config.stepper()
    p = config["problem"]
    K, d, T = int(p["K"]), int(p["d"]), float(p["T"])
    records = []

    model = ForwardModel(phi=phi, T=T, K=K, stepper=stepper)
    W0 = config.w0()
    data = generate_data(W0, model, n_obs=20,
                         noise_std=float(config["inference"]["noise_std"]), rng=rng)
    like = LikelihoodEvaluator(model, data)
    r = config.surrogate_radius(model.dim)
    spec = SurrogateSpec.build(r=r, W_init=W0, n_obs=data.n_obs,
                               c_hat=float(config["surrogate"]["c_hat"]),
                               c1_hat=float(config["surrogate"]["c1_hat"] or 1.0),
                               lam=config["surrogate"]["lam"])

    knot = gamma_tilde(5 * r / 8, r)
    far = gamma_tilde(9 * r / 8, r)
    records.append(_record("gamma_tilde_knot", knot == 0.0, knot, 0.0))
    records.append(_record("gamma_tilde_far", far == r * r / 4, far - r * r / 4, 0.0))

    worst = 0.0
    for _ in range(20):
        u = rng.standard_normal(model.dim)
        u *= rng.uniform(0, 0.5) * r / np.linalg.norm(u)
        Wp = model.vec(W0.values + u)
        sv, sg = surrogate_loglik(Wp, spec, like)
        lv, lg = like.loglik_and_grad(Wp)
        worst = max(worst, abs(sv - lv), float(np.max(np.abs(sg - lg))))
    records.append(_record("ball_exactness", worst == 0.0, worst, 0.0))

    ts = np.linspace(5 * r / 8, 3 * r, 200)
    vals = spec.lam * gamma_smooth(ts, r)
    d2 = vals[:-2] - 2 * vals[1:-1] + vals[2:]
    records.append(_record("tail_convexity", d2.min() >= -1e-10, d2.min(), -1e-10))

    # gradient continuity across the annulus r/2 < |.| < 7r/8
    u = rng.standard_normal(model.dim)
    u /= np.linalg.norm(u)
    worst = 0.0
    for frac in (0.6, 0.75, 0.85):
        Wp = model.vec(W0.values + frac * r * u)
        _, sg = surrogate_loglik(Wp, spec, like)
        eps = 1e-4
        scale = max(1.0, float(np.max(np.abs(sg))))
        for j in range(model.dim):
            e = np.zeros(model.dim)
            e[j] = eps
            fp, _ = surrogate_loglik(model.vec(Wp.values + e), spec, like)
            fm, _ = surrogate_loglik(model.vec(Wp.values - e), spec, like)
            worst = max(worst, abs((fp - fm) / (2 * eps) - sg[j]) / scale)
    records.append(_record("annulus_gradient_fd", worst <= 1e-3, worst, 1e-3))
    return records


def suite_sampler(config: ExperimentConfig, n_steps: int = 100_000) -> list[dict]:
    records = []
    prior = PriorSpec(alpha=1.0, K=2, d=1, n_obs=1024)
    sig2 = prior.covariance_diag()
    gamma = 0.3 * float(sig2.min())
    drift = lambda th: -th / sig2  # noqa: E731

    run = run_ula(drift, np.zeros(prior.dim), gamma, n_steps=n_steps,
                  burn_in=n_steps // 6, seed=config.seed + 404)
    emp = run.samples.var(axis=0)
    target = sig2 / (1.0 - gamma / (2.0 * sig2))
    a = 1.0 - gamma / sig2
    se = target * np.sqrt(2.0 * (1.0 + a**2) / (run.n_kept * (1.0 - a**2)))
    dev = float(np.max(np.abs(emp - target) / se))
    records.append(_record("gaussian_stationary_variance", dev <= 5.0, dev, 5.0))

    r1 = run_ula(drift, np.zeros(prior.dim), gamma, 500, burn_in=50, seed=7)
    r2 = run_ula(drift, np.zeros(prior.dim), gamma, 500, burn_in=50, seed=7)
    records.append(_record("chain_reproducibility",
                           np.array_equal(r1.samples, r2.samples), 0.0, 0.0))

    rng = np.random.default_rng(config.seed + 505)
    A = rng.standard_normal((6, 3))
    B = rng.standard_normal((6, 3))
    brute = min(float(np.mean(np.sum((A - B[list(perm)]) ** 2, axis=1)))
                for perm in itertools.permutations(range(6)))
    assign = w2sq_assignment(A, B)
    records.append(_record("w2_assignment_exact", assign == brute,
                           abs(assign - brute), 0.0))
    a1 = rng.standard_normal(40)
    b1 = rng.standard_normal(40)
    diff = abs(w2sq_quantile_1d(a1, b1) - w2sq_assignment(a1, b1))
    records.append(_record("w2_quantile_vs_assignment", diff <= 1e-12, diff, 1e-12))
    return records


SUITES = {
    "gradients": suite_gradients,
    "stability": suite_stability,
    "surrogate": suite_surrogate,
    "sampler": suite_sampler,
}


def run_suites(config: ExperimentConfig, names) -> dict:
    """Run the named suites; returns {suite: records} plus a summary."""
    out = {}
    for name in names:
        if name not in SUITES:
            raise ValueError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
        out[name] = SUITES[name](config)
    out["all_passed"] = all(rec["passed"] for recs in out.values()
                            if isinstance(recs, list) for rec in recs)
    return out
