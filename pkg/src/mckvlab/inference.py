"""Statistical layer: regression data, truncated Gaussian prior, constants
validation, likelihood derivatives, expected curvature and the log-concave
surrogate.

The observation model is Y_i = rho_W(t_i, X_i) + noise_std * eps_i with
t_i uniform on [0,T] and X_i uniform on the torus; the log-likelihood is
ell_N(W) = -1/2 sum_i |Y_i - rho_W(t_i, X_i)|^2.  Its gradient is
assembled from one nonlinear solve plus all D linearised solves advanced
in lockstep.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .forward import (
    LWOperator,
    McKVProblem,
    gram_matrix,
    jacobian_columns,
    jacobian_stack,
    mckv_second_derivative,
    solve_mckv,
    stack_to_trajectories,
    tau_gradient_stack,
)
from .parabolic import StepperConfig, Trajectory, l2l2_inner
from .spectral import PotentialVec, SpectralField, count_dim, modes_in_ball


# ---------------------------------------------------------------------------
# rates and the constants system


def delta_n(alpha: float, d: int, n_obs: int, beta: float | None = None,
            zeta: float | None = None):
    """Nonparametric rate N^(-(alpha+1)/(2(alpha+1)+d)).

    With ``beta`` and ``zeta`` supplied, also returns the inverse-problem
    exponent eta = (beta-2)/beta - 3 zeta / (2(alpha+1)).
    """
    if n_obs < 1:
        raise ValueError("sample size must be >= 1")
    delta = float(n_obs) ** (-(alpha + 1.0) / (2.0 * (alpha + 1.0) + d))
    if beta is None or zeta is None:
        return delta
    return delta, eta_exponent(alpha, beta, zeta)


def eta_exponent(alpha: float, beta: float, zeta: float) -> float:
    return (beta - 2.0) / beta - 3.0 * zeta / (2.0 * (alpha + 1.0))


@dataclass
class ConstantsConfig:
    """Exponent system (d, alpha, beta, zeta, w) with a strictness flag."""

    d: int
    alpha: float
    beta: float
    zeta: float
    w: float
    mode: str = "experimental"

    def __post_init__(self):
        if self.mode not in ("strict", "experimental"):
            raise ValueError("mode must be 'strict' or 'experimental'")


@dataclass
class ConstantsReport:
    checks: dict
    values: dict
    mode: str

    @property
    def core_ok(self) -> bool:
        keys = ("beta_even_ge", "alpha_window", "zeta_window", "w_window")
        return all(self.checks[k] for k in keys)

    @property
    def ok(self) -> bool:
        evaluated = [v for v in self.checks.values() if v is not None]
        return all(evaluated)

    def to_json(self) -> str:
        return json.dumps({"mode": self.mode, "checks": self.checks,
                           "values": self.values}, indent=2)


def validate_constants(cfg: ConstantsConfig, n_obs: int | None = None,
                       K: int | None = None, c_pr: float = 1.0,
                       c_err: float = 1.0,
                       bias_forward: float | None = None,
                       bias_inverse: float | None = None) -> ConstantsReport:
    """Per-inequality report on the exponent system and its side conditions.

    The four core inequalities: beta even and >= 4+d; alpha > 12 beta +
    6d - 1; beta + d/2 < zeta < (alpha+1)/12; 6 zeta/d < w < min of the
    two upper limits.  When (n_obs, K) are given, the dimension bound
    D <= c_pr N delta_N^2 and the implied cutoff constant c with
    K = c (N delta_N^2)^(1/d) are evaluated too; numerically supplied
    projection biases are tested against their thresholds.  Report-only:
    nothing raises.
    """
    d, alpha, beta, zeta, w = cfg.d, cfg.alpha, cfg.beta, cfg.zeta, cfg.w
    checks: dict = {}
    values: dict = {}

    checks["beta_even_ge"] = (beta >= 4 + d) and float(beta).is_integer() \
        and int(beta) % 2 == 0
    checks["alpha_window"] = alpha > 12.0 * beta + 6.0 * d - 1.0
    checks["zeta_window"] = (beta + d / 2.0) < zeta < (alpha + 1.0) / 12.0
    w_hi = min((alpha + 1.0) * (beta - 2.0) / beta - 1.5 * zeta,
               alpha + 1.0 - 6.0 * zeta) / d
    w_lo = 6.0 * zeta / d
    checks["w_window"] = w_lo < w < w_hi
    values["w_window"] = (w_lo, w_hi)

    delta, eta = delta_n(alpha, d, n_obs, beta, zeta) if n_obs else (None, None)
    if n_obs is not None:
        values["delta_N"] = delta
        values["eta"] = eta
        values["N_delta2"] = n_obs * delta**2
        checks["eta_positive"] = eta > 0
    else:
        checks["eta_positive"] = None

    if n_obs is not None and K is not None:
        D = count_dim(K, d)
        values["D"] = D
        checks["dim_bound"] = D <= c_pr * n_obs * delta**2
        values["cutoff_c"] = K / (n_obs * delta**2) ** (1.0 / d)
    else:
        checks["dim_bound"] = None

    if bias_forward is not None and delta is not None:
        checks["bias_forward"] = bias_forward <= delta / 2.0
        values["bias_forward"] = (bias_forward, delta / 2.0)
    else:
        checks["bias_forward"] = None
    if bias_inverse is not None and delta is not None:
        checks["bias_inverse"] = bias_inverse <= c_err * delta**eta
        values["bias_inverse"] = (bias_inverse, c_err * delta**eta)
    else:
        checks["bias_inverse"] = None

    return ConstantsReport(checks=checks, values=values, mode=cfg.mode)


# ---------------------------------------------------------------------------
# prior


@dataclass
class PriorSpec:
    """Truncated Gaussian prior on E_K, diagonal in the tau_k basis.

    Mode k has standard deviation
    (sqrt(N) delta_N)^-1 (1+|k|^2)^(-(alpha+1)/2); the rate delta_N and
    the per-mode scale are derived on construction.
    """

    alpha: float
    K: int
    d: int
    n_obs: int
    delta: float = field(init=False)
    diag: np.ndarray = field(init=False)

    def __post_init__(self):
        self.delta = delta_n(self.alpha, self.d, self.n_obs)
        ksq = np.array([sum(m * m for m in k)
                        for k in modes_in_ball(self.K, self.d)], dtype=float)
        scale = 1.0 / (np.sqrt(self.n_obs) * self.delta)
        self.diag = scale * (1.0 + ksq) ** (-(self.alpha + 1.0) / 2.0)
        if np.any(self.diag <= 0):
            raise ValueError("prior scales must be strictly positive")

    @property
    def dim(self) -> int:
        return self.diag.size

    def covariance_diag(self) -> np.ndarray:
        return self.diag**2

    def precision_diag(self) -> np.ndarray:
        return self.diag**-2


def sample_prior(spec: PriorSpec, rng: np.random.Generator) -> PotentialVec:
    g = rng.standard_normal(spec.dim)
    return PotentialVec(spec.K, spec.d, spec.diag * g)


# ---------------------------------------------------------------------------
# data


@dataclass
class Dataset:
    """N observation triples (Y_i, t_i, X_i) plus generation metadata."""

    y: np.ndarray
    t: np.ndarray
    x: np.ndarray
    noise_std: float
    seed: int | None = None
    truth: dict = field(default_factory=dict)

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        self.t = np.asarray(self.t, dtype=float)
        self.x = np.asarray(self.x, dtype=float)
        if self.x.ndim == 1:
            self.x = self.x[:, None]
        n = self.y.size
        if n < 1 or self.t.shape != (n,) or self.x.shape[0] != n:
            raise ValueError("inconsistent dataset arrays")

    @property
    def n_obs(self) -> int:
        return self.y.size

    @property
    def d(self) -> int:
        return self.x.shape[1]

    def save(self, csv_path, meta_path=None):
        csv_path = Path(csv_path)
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["Y", "t"] + [f"X_{j + 1}" for j in range(self.d)])
            for i in range(self.n_obs):
                writer.writerow([repr(float(self.y[i])), repr(float(self.t[i]))]
                                + [repr(float(v)) for v in self.x[i]])
        meta = {"seed": self.seed, "noise_std": self.noise_std,
                "truth": self.truth, "N": int(self.n_obs), "d": int(self.d)}
        meta_path = Path(meta_path) if meta_path else csv_path.with_suffix(".json")
        meta_path.write_text(json.dumps(meta, indent=2))

    @classmethod
    def load(cls, csv_path, meta_path=None) -> "Dataset":
        csv_path = Path(csv_path)
        meta_path = Path(meta_path) if meta_path else csv_path.with_suffix(".json")
        meta = json.loads(meta_path.read_text())
        rows = []
        with open(csv_path, newline="") as fh:
            reader = csv.reader(fh)
            next(reader)
            for row in reader:
                rows.append([float(v) for v in row])
        arr = np.asarray(rows)
        return cls(y=arr[:, 0], t=arr[:, 1], x=arr[:, 2:],
                   noise_std=float(meta["noise_std"]), seed=meta.get("seed"),
                   truth=meta.get("truth", {}))


@dataclass
class ForwardModel:
    """Fixed problem context: initial density, horizon, truncation, stepper."""

    phi: SpectralField
    T: float
    K: int
    stepper: StepperConfig

    @property
    def d(self) -> int:
        return self.phi.d

    @property
    def n(self) -> int:
        return self.phi.n

    @property
    def dim(self) -> int:
        return count_dim(self.K, self.d)

    def vec(self, values) -> PotentialVec:
        return PotentialVec(self.K, self.d, np.asarray(values, dtype=float))

    def problem(self, W: PotentialVec) -> McKVProblem:
        return McKVProblem(W=W, phi=self.phi, T=self.T, stepper=self.stepper)

    def solve(self, W: PotentialVec) -> Trajectory:
        return solve_mckv(self.problem(W))


def generate_data(W0: PotentialVec, model: ForwardModel, n_obs: int,
                  noise_std: float, rng: np.random.Generator,
                  seed: int | None = None,
                  rho0: Trajectory | None = None) -> Dataset:
    """Random-design regression sample from the forward map at W0."""
    if noise_std < 0:
        raise ValueError("noise_std must be >= 0")
    if rho0 is None:
        rho0 = model.solve(W0)
    t = rng.uniform(0.0, model.T, size=n_obs)
    x = rng.uniform(0.0, 1.0, size=(n_obs, model.d))
    clean = rho0.eval_batch(t, x)
    y = clean + noise_std * rng.standard_normal(n_obs)
    truth = {"W0": W0.values.tolist(), "K": W0.K, "noise_std": noise_std}
    return Dataset(y=y, t=t, x=x, noise_std=noise_std, seed=seed, truth=truth)


# ---------------------------------------------------------------------------
# likelihood and its gradient


class LikelihoodEvaluator:
    """ell_N and grad ell_N for a fixed dataset and forward model.

    Point-evaluation phases and time brackets are precomputed once; each
    call costs one nonlinear solve (value) plus the batched linearised
    solves (gradient).
    """

    def __init__(self, model: ForwardModel, dataset: Dataset):
        if dataset.d != model.d:
            raise ValueError("dataset dimension does not match the model")
        self.model = model
        self.dataset = dataset
        grid = model.phi.grid
        M = model.stepper.M
        dt = model.T / M
        s = np.clip(dataset.t / dt, 0.0, M)
        self._m = np.minimum(s.astype(int), M - 1)
        self._w = (s - self._m)[:, None]
        phase = np.ones((dataset.n_obs, grid.size), dtype=complex)
        for j in range(model.d):
            kflat = grid.kvec[j].ravel()
            phase *= np.exp(2j * np.pi * np.outer(dataset.x[:, j], kflat))
        self._phase = phase
        self.n_solves = 0

    def _eval_stack(self, stacked: np.ndarray) -> np.ndarray:
        """Evaluate (B, M+1, grid) trajectories at the data points."""
        flat = stacked.reshape(stacked.shape[:2] + (self._phase.shape[1],))
        c = flat[:, self._m, :] * (1.0 - self._w) + flat[:, self._m + 1, :] * self._w
        return np.einsum("bnk,nk->bn", c, self._phase).real

    def residuals(self, W: PotentialVec, rho: Trajectory | None = None):
        if rho is None:
            rho = self.model.solve(W)
            self.n_solves += 1
        fitted = self._eval_stack(rho.coeffs[None])[0]
        return self.dataset.y - fitted, rho

    def loglik(self, W: PotentialVec, rho: Trajectory | None = None) -> float:
        res, _ = self.residuals(W, rho)
        return -0.5 * float(np.dot(res, res))

    def loglik_and_grad(self, W: PotentialVec,
                        rho: Trajectory | None = None):
        """Returns (ell_N, grad) with grad_k = sum_i res_i * D rho[tau_k](t_i, X_i)."""
        res, rho = self.residuals(W, rho)
        nodes, _ = jacobian_stack(self.model.problem(W), rho, K=self.model.K,
                                  keep_stages=False)
        col_vals = self._eval_stack(nodes)  # (D, N)
        grad = col_vals @ res
        return -0.5 * float(np.dot(res, res)), grad


def log_likelihood(W: PotentialVec, dataset: Dataset, model: ForwardModel) -> float:
    return LikelihoodEvaluator(model, dataset).loglik(W)


def grad_log_likelihood(W: PotentialVec, dataset: Dataset,
                        model: ForwardModel) -> np.ndarray:
    return LikelihoodEvaluator(model, dataset).loglik_and_grad(W)[1]


# ---------------------------------------------------------------------------
# expected curvature


def expected_neg_hessian(W: PotentialVec, W0: PotentialVec, model: ForwardModel,
                         rho: Trajectory | None = None,
                         rho0: Trajectory | None = None) -> np.ndarray:
    """Average single-datum curvature E_{W0}[-Hess ell(W)], a D x D matrix.

    Equals (1/T) <D rho_W[tau_j], D rho_W[tau_k]> plus the correction
    (1/T) <rho_W - rho_{W0}, D^2 rho_W[tau_j, tau_k]>; the correction
    vanishes at W = W0, leaving the Gram matrix.  Symmetric by
    construction.
    """
    problem = model.problem(W)
    if rho is None:
        rho = solve_mckv(problem)
    cols = jacobian_columns(problem, rho, K=model.K)
    out = gram_matrix(cols, model.T)

    if rho0 is None:
        rho0 = model.solve(W0)
    diff = Trajectory(T=rho.T, d=rho.d, n=rho.n,
                      coeffs=rho.coeffs - rho0.coeffs, scheme=rho.scheme)
    if np.max(np.abs(diff.coeffs)) > 0:
        modes = modes_in_ball(model.K, model.d)
        basis = [PotentialVec.from_mode_dict(model.K, model.d, {k: 1.0})
                 for k in modes]
        D = len(modes)
        for j in range(D):
            for k in range(j, D):
                d2 = mckv_second_derivative(problem, basis[j], basis[k], rho,
                                            cols[j], cols[k])
                corr = l2l2_inner(diff, d2) / model.T
                out[j, k] += corr
                if k != j:
                    out[k, j] += corr
    return out


# ---------------------------------------------------------------------------
# mollifier, cutoff and the surrogate likelihood

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(64)


def _bump_raw(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = np.abs(x) < 1.0
    xi = x[inside]
    out[inside] = np.exp(-1.0 / (1.0 - xi * xi))
    return out


_BUMP_NORM = float(np.sum(_GL_WEIGHTS * _bump_raw(_GL_NODES)))


def mollifier(x) -> np.ndarray:
    """Smooth symmetric bump on (-1,1), normalized to unit integral."""
    return _bump_raw(x) / _BUMP_NORM


def gamma_tilde(t, r: float):
    """Quadratic hinge: 0 below 5r/8, (t - 5r/8)^2 above."""
    t = np.asarray(t, dtype=float)
    knot = 5.0 * r / 8.0
    return np.where(t < knot, 0.0, (t - knot) ** 2)


def _gamma_quadrature(t: float, r: float, order: int) -> float:
    # integral of mollifier(s) * d^order/dt^order gamma_tilde(t - (r/8) s)
    # over the active part of [-1, 1]; the subinterval split keeps the
    # integrand smooth so 64-point Gauss-Legendre is exact to rounding
    knot = 5.0 * r / 8.0
    h = r / 8.0
    s_star = (t - knot) / h
    if s_star <= -1.0:
        return 0.0
    hi = min(1.0, s_star)
    mid = 0.5 * (hi + (-1.0))
    half = 0.5 * (hi - (-1.0))
    s = mid + half * _GL_NODES
    u = t - h * s - knot
    if order == 0:
        integrand = mollifier(s) * u * u
    else:
        integrand = mollifier(s) * 2.0 * u
    return float(half * np.sum(_GL_WEIGHTS * integrand))


def gamma_smooth(t, r: float):
    """Mollified tail penalty gamma_r = bump_{r/8} * gamma_tilde.

    Vanishes identically for t <= r/2, is smooth, convex and
    nondecreasing, and equals (t - 5r/8)^2 + (r/8)^2 m2 for t >= 3r/4
    with m2 the second moment of the bump.
    """
    if np.isscalar(t):
        return _gamma_quadrature(float(t), r, 0)
    return np.array([_gamma_quadrature(float(ti), r, 0) for ti in np.atleast_1d(t)])


def gamma_smooth_deriv(t, r: float):
    if np.isscalar(t):
        return _gamma_quadrature(float(t), r, 1)
    return np.array([_gamma_quadrature(float(ti), r, 1) for ti in np.atleast_1d(t)])


def _smoothstep(x):
    # C^inf transition: 0 for x <= 0, 1 for x >= 1
    x = np.asarray(x, dtype=float)
    a = np.where(x > 0, np.exp(-1.0 / np.maximum(x, 1e-300)), 0.0)
    b = np.where(x < 1, np.exp(-1.0 / np.maximum(1.0 - x, 1e-300)), 0.0)
    return a / (a + b)


def _smoothstep_deriv(x):
    x = np.asarray(x, dtype=float)
    inside = (x > 0) & (x < 1)
    out = np.zeros_like(x)
    xi = x[inside]
    a = np.exp(-1.0 / xi)
    b = np.exp(-1.0 / (1.0 - xi))
    da = a / xi**2
    db = -b / (1.0 - xi) ** 2
    out[inside] = (da * b - a * db) / (a + b) ** 2
    return out


def cutoff_alpha(t):
    """Smooth cutoff: 1 on [0, 3/4], 0 on [7/8, infinity)."""
    return _smoothstep((7.0 / 8.0 - np.asarray(t, dtype=float)) * 8.0)


def cutoff_alpha_deriv(t):
    return -8.0 * _smoothstep_deriv((7.0 / 8.0 - np.asarray(t, dtype=float)) * 8.0)


def lambda_min_bound(n_obs: int, r: float, c_hat: float, c1_hat: float) -> float:
    """Lower admissible convexifier weight.

    max(N log N / r^2, c_hat N (c1_hat + 1)(1 + r^-2)); c_hat stands in
    for a non-constructive constant and c1_hat for the local regularity
    bound, both supplied through configuration.
    """
    a = n_obs * np.log(max(n_obs, 2)) / r**2
    b = c_hat * n_obs * (c1_hat + 1.0) * (1.0 + r**-2)
    return float(max(a, b))


@dataclass
class SurrogateSpec:
    """Convexified-likelihood parameters: ball radius, centre, weight.

    The mollifier width is fixed at r/8.  ``lam`` must dominate the
    configured lower bound; in test mode the centre is the projected
    truth, for which the warm-start condition holds trivially.
    """

    r: float
    W_init: PotentialVec
    lam: float
    lam_floor: float = 0.0

    def __post_init__(self):
        if self.r <= 0:
            raise ValueError("ball radius must be positive")
        if self.lam <= 0:
            raise ValueError("convexifier weight must be positive")
        if self.lam_floor > 0 and self.lam < self.lam_floor * (1 - 1e-12):
            raise ValueError(
                f"lam {self.lam:.3e} below the admissible floor {self.lam_floor:.3e}")

    @property
    def mollifier_width(self) -> float:
        return self.r / 8.0

    @classmethod
    def build(cls, r: float, W_init: PotentialVec, n_obs: int,
              c_hat: float = 1.0, c1_hat: float = 1.0,
              lam: float | None = None) -> "SurrogateSpec":
        floor = lambda_min_bound(n_obs, r, c_hat, c1_hat)
        return cls(r=r, W_init=W_init, lam=lam if lam is not None else floor,
                   lam_floor=floor)

    def check_warm_start(self, W0K: PotentialVec) -> bool:
        return (self.W_init - W0K).l2_norm() <= self.r / 8.0


def surrogate_loglik(W: PotentialVec, spec: SurrogateSpec,
                     like: LikelihoodEvaluator):
    """Surrogate value and gradient: alpha_r(W) ell_N(W) - lam gamma_r(|W - W_init|).

    Outside the cutoff support (|W - W_init| >= 7r/8) the data term and
    its gradient vanish and no PDE solve is performed.
    """
    dv = W.values - spec.W_init.values
    s = float(np.linalg.norm(dv))
    direction = dv / s if s > 0 else np.zeros_like(dv)
    u = s / spec.r

    g_val = gamma_smooth(s, spec.r)
    g_der = gamma_smooth_deriv(s, spec.r)
    a_val = float(cutoff_alpha(u))
    a_der = float(cutoff_alpha_deriv(u))

    if u >= 7.0 / 8.0:
        value = -spec.lam * g_val
        grad = -spec.lam * g_der * direction
        return value, grad

    ln, gn = like.loglik_and_grad(W)
    value = a_val * ln - spec.lam * g_val
    grad = a_val * gn + (ln * a_der / spec.r - spec.lam * g_der) * direction
    return value, grad


# ---------------------------------------------------------------------------
# posterior energy and drift


def posterior_energy(W: PotentialVec, dataset: Dataset, prior: PriorSpec,
                     model: ForwardModel,
                     like: LikelihoodEvaluator | None = None) -> float:
    """H(W) = 1/2 (sum residuals^2 + W^T Sigma^-1 W) = -ell_N + quadratic."""
    like = like or LikelihoodEvaluator(model, dataset)
    quad = 0.5 * float(np.sum(prior.precision_diag() * W.values**2))
    return -like.loglik(W) + quad


def posterior_energy_grad(W: PotentialVec, dataset: Dataset, prior: PriorSpec,
                          model: ForwardModel,
                          like: LikelihoodEvaluator | None = None) -> np.ndarray:
    like = like or LikelihoodEvaluator(model, dataset)
    _, grad = like.loglik_and_grad(W)
    return -grad + prior.precision_diag() * W.values


def make_drift(spec: SurrogateSpec, prior: PriorSpec,
               like: LikelihoodEvaluator):
    """ULA drift theta -> grad surrogate-loglik(theta) - Sigma^-1 theta."""
    prec = prior.precision_diag()
    model = like.model

    def drift(theta: np.ndarray) -> np.ndarray:
        W = model.vec(theta)
        _, grad = surrogate_loglik(W, spec, like)
        return grad - prec * theta

    return drift


def estimate_c1(model: ForwardModel, W: PotentialVec,
                include_hessian: bool = True) -> float:
    """Probe-set estimate of the local regularity bound.

    Maximum over the stored trajectory nodes and grid points of |G|,
    of the Euclidean norm of the gradient vector, and (optionally) of
    the Hessian operator norm, all read off forward-map outputs.
    """
    problem = model.problem(W)
    rho = solve_mckv(problem)
    grid = model.phi.grid
    best = float(np.max(np.abs(grid.to_values(rho.coeffs))))

    cols = jacobian_columns(problem, rho, K=model.K)
    col_vals = np.stack([grid.to_values(c.coeffs) for c in cols])  # (D, M+1, grid)
    grad_norm = np.sqrt(np.sum(col_vals**2, axis=0))
    best = max(best, float(np.max(grad_norm)))

    if include_hessian:
        modes = modes_in_ball(model.K, model.d)
        basis = [PotentialVec.from_mode_dict(model.K, model.d, {k: 1.0})
                 for k in modes]
        D = len(modes)
        hess_vals = np.zeros((D, D) + col_vals.shape[1:])
        for j in range(D):
            for k in range(j, D):
                d2 = mckv_second_derivative(problem, basis[j], basis[k], rho,
                                            cols[j], cols[k])
                vals = grid.to_values(d2.coeffs)
                hess_vals[j, k] = vals
                hess_vals[k, j] = vals
        # Frobenius bound on the pointwise Hessian operator norm
        frob = np.sqrt(np.sum(hess_vals**2, axis=(0, 1)))
        best = max(best, float(np.max(frob)))
    return best
