"""Parameter-to-solution maps and their exact linearisations.

Two nonlinear parabolic problems on the torus:

* mean-field transport:  d/dt rho = Lap(rho) + div(rho gradW * rho),
  rho(0) = phi, with a mean-zero interaction potential W; solved by
  :func:`solve_mckv`.  Its first and second derivatives in W solve
  linear PDEs driven by the same operator L_W and are produced by
  :func:`mckv_first_derivative` / :func:`mckv_second_derivative`.
* reaction-diffusion:  d/dt u = Lap(u) + R(u), u(0) = phi, with the
  derivative in R solving d/dt i = Lap(i) + R'(u) i + H(u), i(0) = 0.

The linear solves read the nonlinear trajectory at the stored node and
predictor states, so each derivative is the exact derivative of the
discrete time-stepping map; finite-difference checks of the solver
therefore see pure O(eps^2) behaviour.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import spectral
from .parabolic import (
    StepperConfig,
    Trajectory,
    TrajectoryCoeffs,
    _as_grad_coeffs,
    _integrate_arrays,
    integrate,
    l2l2_inner,
    make_lw_rhs,
    solve_linear_lw,
)
from .spectral import (
    PotentialVec,
    SpectralField,
    get_grid,
    modes_in_ball,
    tau_expansion,
)


# ---------------------------------------------------------------------------
# problem containers


@dataclass
class ReactionSpec:
    """Reaction term R and its derivative R', applied pointwise.

    A load-time spot check compares R' with finite differences of R on a
    small probe set; an inconsistent pair is rejected immediately rather
    than surfacing as a failed linearisation later.  ``domain`` may
    restrict the admissible range of u.
    """

    R: callable
    Rprime: callable
    domain: tuple[float, float] | None = None
    probe: np.ndarray = field(default_factory=lambda: np.linspace(-2.0, 2.0, 9))

    def __post_init__(self):
        xs = np.asarray(self.probe, dtype=float)
        if self.domain is not None:
            lo, hi = self.domain
            xs = np.clip(xs, lo + 1e-3, hi - 1e-3)
        h = 1e-5
        fd = (np.asarray(self.R(xs + h)) - np.asarray(self.R(xs - h))) / (2 * h)
        given = np.asarray(self.Rprime(xs), dtype=float) * np.ones_like(xs)
        scale = 1.0 + np.abs(given)
        if np.max(np.abs(fd - given) / scale) > 1e-4:
            raise ValueError("Rprime disagrees with finite differences of R")


@dataclass
class McKVProblem:
    """Mean-field problem data: potential, initial density, horizon, stepper."""

    W: PotentialVec
    phi: SpectralField
    T: float
    stepper: StepperConfig

    def __post_init__(self):
        if self.W.d != self.phi.d:
            raise ValueError("potential and initial density dimension mismatch")
        if abs(self.phi.mean() - 1.0) > 1e-12:
            raise ValueError("initial density must have unit mass")
        if self.phi.conj_symmetry_defect() > 1e-10:
            raise ValueError("initial density must be a real field")
        if self.W.K > self.phi.n // 2 - 1:
            raise ValueError("potential truncation exceeds grid resolution")


# ---------------------------------------------------------------------------
# initial densities


def uniform_density(n: int, d: int) -> SpectralField:
    return SpectralField.constant(1.0, n, d)


def decay_density(n: int, d: int, zeta: float, amplitude: float = 0.25,
                  kmax: int | None = None) -> SpectralField:
    """Probability density with coefficients amplitude * |k|^(-zeta).

    All nonzero resolved modes (or modes up to ``kmax``) get the real
    positive coefficient amplitude * |k|^(-zeta); the mean is 1.  The
    construction is rejected if the resulting field is not strictly
    positive on the grid.
    """
    f = SpectralField.constant(1.0, n, d)
    g = f.grid
    with np.errstate(divide="ignore"):
        mag = amplitude * np.where(g.ksq > 0, g.ksq ** (-zeta / 2.0), 0.0)
    mag = mag * g.resolved
    if kmax is not None:
        mag = mag * (g.ksq <= kmax * kmax)
    mag[(0,) * d] = 0.0
    f.coeffs += mag
    min_val = float(np.min(f.values()))
    if min_val <= 0:
        raise ValueError(
            f"density not strictly positive (min {min_val:.3e}); "
            "reduce the amplitude or increase zeta")
    return f


# ---------------------------------------------------------------------------
# the trilinear transport operator


def trilinear_t(r: SpectralField, V, s: SpectralField) -> SpectralField:
    """div(r gradV * s): trilinear in (r, V, s).

    V may be a PotentialVec or a SpectralField; only its gradient
    enters, so constant shifts of V are annihilated exactly.
    """
    spectral._check_same_grid(r, s)
    grid = r.grid
    grad_v = _as_grad_coeffs(V, grid)
    return SpectralField(r.d, r.n, grid.transport_div(r.coeffs, grad_v, s.coeffs))


# ---------------------------------------------------------------------------
# mean-field forward map


def _mckv_rhs(grid, grad_w):
    def rhs(m, stage, u):
        return grid.transport_div(u, grad_w, u)

    return rhs


def solve_mckv(problem: McKVProblem) -> Trajectory:
    """Solve the nonlinear mean-field PDE; mass is conserved exactly.

    The forcing is in divergence form, so the zero mode is untouched by
    every stage and |rho_hat(t, 0) - 1| stays at machine zero.
    """
    grid = problem.phi.grid
    grad_w = _as_grad_coeffs(problem.W, grid)
    return integrate(problem.phi, _mckv_rhs(grid, grad_w), problem.T, problem.stepper)


def solve_mckv_field(W_field: SpectralField, phi: SpectralField, T: float,
                     stepper: StepperConfig) -> Trajectory:
    """Forward solve for a raw potential field (zero mode permitted).

    Only gradW enters the dynamics, so injecting a constant into W
    leaves the trajectory unchanged; used to test shift invariance.
    """
    grid = phi.grid
    grad_w = _as_grad_coeffs(W_field, grid)
    return integrate(phi, _mckv_rhs(grid, grad_w), T, stepper)


def _forcing_trajectory(grid, rho: Trajectory, grad_h) -> Trajectory:
    """Trajectory of div(rho gradH * rho) at nodes and predictor stages."""
    nodes = np.array([grid.transport_div(c, grad_h, c) for c in rho.coeffs])
    stages = None
    if rho.stages is not None:
        stages = np.array([grid.transport_div(c, grad_h, c) for c in rho.stages])
    return Trajectory(T=rho.T, d=rho.d, n=rho.n, coeffs=nodes,
                      scheme=rho.scheme, stages=stages)


def mckv_first_derivative(problem: McKVProblem, H: PotentialVec,
                          rho_traj: Trajectory) -> Trajectory:
    """Derivative of W -> rho_W in direction H, as a linear PDE solve.

    Solves (d/dt - L_W)v = div(rho gradH * rho), v(0) = 0, where rho is
    the supplied solution trajectory for ``problem``.  Linear in H.
    """
    grid = problem.phi.grid
    grad_h = _as_grad_coeffs(H, grid)
    forcing = _forcing_trajectory(grid, rho_traj, grad_h)
    v0 = SpectralField.zeros(problem.phi.n, problem.phi.d)
    return solve_linear_lw(problem.W, rho_traj, forcing, v0, problem.stepper)


def _second_forcing(grid, grad_w, grad_h1, grad_h2, rho_c, v1_c, v2_c):
    out = grid.transport_div(v2_c, grad_h1, rho_c)
    out += grid.transport_div(rho_c, grad_h1, v2_c)
    out += grid.transport_div(v1_c, grad_h2, rho_c)
    out += grid.transport_div(rho_c, grad_h2, v1_c)
    out += grid.transport_div(v1_c, grad_w, v2_c)
    out += grid.transport_div(v2_c, grad_w, v1_c)
    return out


def mckv_second_derivative(problem: McKVProblem, H1: PotentialVec,
                           H2: PotentialVec, rho_traj: Trajectory,
                           dH1: Trajectory, dH2: Trajectory) -> Trajectory:
    """Second derivative of W -> rho_W; bilinear and symmetric in (H1, H2).

    Solves (d/dt - L_W)v = six-term forcing built from the cached first
    derivatives dH1, dH2 and the base trajectory, with v(0) = 0.
    """
    grid = problem.phi.grid
    grad_w = _as_grad_coeffs(problem.W, grid)
    grad_h1 = _as_grad_coeffs(H1, grid)
    grad_h2 = _as_grad_coeffs(H2, grid)

    rho = TrajectoryCoeffs(rho_traj)
    v1 = TrajectoryCoeffs(dH1)
    v2 = TrajectoryCoeffs(dH2)

    def forcing_at(m, stage):
        return _second_forcing(grid, grad_w, grad_h1, grad_h2,
                               rho.at(m, stage), v1.at(m, stage), v2.at(m, stage))

    class _F:
        def at(self, m, stage):
            return forcing_at(m, stage)

    rhs = make_lw_rhs(grid, grad_w, rho, _F())
    v0 = SpectralField.zeros(problem.phi.n, problem.phi.d)
    return integrate(v0, rhs, problem.T, problem.stepper)


# ---------------------------------------------------------------------------
# whole-basis linearisation


def jacobian_columns(problem: McKVProblem, rho_traj: Trajectory | None = None,
                     K: int | None = None) -> list[Trajectory]:
    """All derivative trajectories D rho_W[tau_k], one per basis mode.

    Column k is by definition ``mckv_first_derivative`` applied to the
    k-th basis vector; all columns share one rho trajectory and one
    operator assembly.
    """
    if rho_traj is None:
        rho_traj = solve_mckv(problem)
    K = problem.W.K if K is None else K
    cols = []
    for k in modes_in_ball(K, problem.W.d):
        H = PotentialVec.from_mode_dict(K, problem.W.d, {k: 1.0})
        cols.append(mckv_first_derivative(problem, H, rho_traj))
    return cols


def tau_gradient_stack(K: int, grid) -> np.ndarray:
    """Stacked gradient coefficient arrays of all tau_k, shape (D, d, grid)."""
    modes = modes_in_ball(K, grid.d)
    out = np.zeros((len(modes), grid.d) + grid.shape, dtype=complex)
    for i, k in enumerate(modes):
        c = np.zeros(grid.shape, dtype=complex)
        for mode, w in tau_expansion(k):
            c[tuple(m % grid.n for m in mode)] += w
        for j in range(grid.d):
            out[i, j] = grid.deriv(c, j)
    return out


class LWOperator:
    """Batched fast path for (d/dt - L_W)v = g along a fixed rho trajectory.

    Precomputes the physical-space padded values of rho and of the
    convolutions gradW_j * rho at every node and predictor stage, so
    that each stage of a batched linear solve costs a handful of
    vectorized transforms.  Used by the likelihood gradient, which
    advances all D basis directions in lockstep.
    """

    def __init__(self, problem: McKVProblem, rho_traj: Trajectory):
        if problem.stepper.M != rho_traj.M:
            raise ValueError("stepper M must match the density trajectory")
        self.grid = problem.phi.grid
        self.config = problem.stepper
        self.T = rho_traj.T
        self.M = rho_traj.M
        self.dt = rho_traj.dt
        self.has_stages = rho_traj.stages is not None
        grid = self.grid

        states = rho_traj.coeffs
        if self.has_stages:
            states = np.concatenate([rho_traj.coeffs, rho_traj.stages], axis=0)
        self.rho_states = states  # (S, grid)

        pg = grid.padded
        self._pg = pg
        self.rho_phys = pg.to_values(grid.pad(states))  # (S, pad grid)
        self.grad_w = _as_grad_coeffs(problem.W, grid)
        conv1 = np.stack([gw * states for gw in self.grad_w], axis=1)
        self.conv1_phys = pg.to_values(grid.pad(conv1))  # (S, d, pad grid)

    def state_index(self, m: int, stage: int) -> int:
        if stage == 1 and self.has_stages:
            return (self.M + 1) + m
        return m + stage

    def forcing_from_grad_stack(self, grad_stack: np.ndarray) -> np.ndarray:
        """div(rho gradH_b * rho) for a stack (B, d, grid) of gradients.

        Returns an (S, B, grid) array indexed by solver state.
        """
        grid, pg = self.grid, self._pg
        conv = grad_stack[None] * self.rho_states[:, None, None]
        conv_phys = pg.to_values(grid.pad(conv))  # (S, B, d, pad)
        prod = conv_phys * self.rho_phys[:, None, None]
        qc = grid.crop(pg.from_values(prod))  # (S, B, d, grid)
        out = None
        for j in range(grid.d):
            term = grid.ik[j] * qc[:, :, j]
            out = term if out is None else out + term
        return out

    def _apply(self, m: int, stage: int, v: np.ndarray) -> np.ndarray:
        """L_W v - Lap v for a stacked v of shape (B, grid)."""
        grid, pg = self.grid, self._pg
        s = self.state_index(m, stage)
        # one padded transform for v and all gradW_j * v convolutions
        comb = np.concatenate([v[None]] + [(gw * v)[None] for gw in self.grad_w], axis=0)
        phys = pg.to_values(grid.pad(comb))  # (1+d, B, pad)
        v_phys, c2_phys = phys[0], phys[1:]
        q = v_phys[None] * self.conv1_phys[s][:, None] + self.rho_phys[s] * c2_phys
        qc = grid.crop(pg.from_values(q))  # (d, B, grid)
        out = grid.ik[0] * qc[0]
        for j in range(1, grid.d):
            out += grid.ik[j] * qc[j]
        return out

    def solve(self, forcing_states: np.ndarray, keep_stages: bool = True):
        """Advance all columns; forcing_states has shape (S, B, grid).

        Returns (nodes, stages) with shapes (B, M+1, grid), (B, M, grid).
        """
        grid = self.grid
        B = forcing_states.shape[1]
        dt = self.dt
        E = grid.heat_multiplier(dt)
        heun = self.config.scheme == "if-heun"
        shape = (B,) + grid.shape
        nodes = np.zeros((self.M + 1,) + shape, dtype=complex)
        stages = np.zeros((self.M,) + shape, dtype=complex) if (heun and keep_stages) else None

        v = np.zeros(shape, dtype=complex)
        for m in range(self.M):
            k1 = self._apply(m, 0, v) + forcing_states[self.state_index(m, 0)]
            if heun:
                vstar = E * (v + dt * k1)
                if stages is not None:
                    stages[m] = vstar
                k2 = self._apply(m, 1, vstar) + forcing_states[self.state_index(m, 1)]
                v = E * v + (0.5 * dt) * (E * k1 + k2)
            else:
                v = E * (v + dt * k1)
            mx = np.max(np.abs(v))
            if not np.isfinite(mx) or mx > self.config.blowup_limit:
                raise NumericalBlowUp(m + 1)
            nodes[m + 1] = v

        nodes = np.moveaxis(nodes, 0, 1)
        if stages is not None:
            stages = np.moveaxis(stages, 0, 1)
        return nodes, stages


def jacobian_stack(problem: McKVProblem, rho_traj: Trajectory,
                   K: int | None = None, keep_stages: bool = True):
    """Batched computation of all D derivative trajectories.

    Returns (nodes, stages) arrays of shape (D, M+1, grid) and
    (D, M, grid).  This is the hot path behind likelihood gradients;
    it agrees with the per-column public solves to rounding.
    """
    grid = problem.phi.grid
    K = problem.W.K if K is None else K
    op = LWOperator(problem, rho_traj)
    gtau = tau_gradient_stack(K, grid)
    forcing = op.forcing_from_grad_stack(gtau)
    return op.solve(forcing, keep_stages=keep_stages)


def stack_to_trajectories(nodes, stages, T, d, n, scheme="if-heun"):
    out = []
    for b in range(nodes.shape[0]):
        st = stages[b] if stages is not None else None
        out.append(Trajectory(T=T, d=d, n=n, coeffs=nodes[b], scheme=scheme, stages=st))
    return out


def gram_matrix(columns: list[Trajectory], T: float | None = None) -> np.ndarray:
    """Gram matrix (1/T) <col_j, col_k> in L2([0,T];L2); symmetric PSD."""
    D = len(columns)
    if T is None:
        T = columns[0].T
    G = np.zeros((D, D))
    for j in range(D):
        for k in range(j, D):
            G[j, k] = G[k, j] = l2l2_inner(columns[j], columns[k]) / T
    return G


# ---------------------------------------------------------------------------
# reaction-diffusion forward map


def _pointwise_rhs(grid, func_of_values):
    """RHS applying a pointwise map on the 3/2-padded grid."""

    def rhs(m, stage, u):
        pg = grid.padded
        vals = pg.to_values(grid.pad(u))
        return grid.crop(pg.from_values(func_of_values(m, stage, vals)))

    return rhs


def solve_rd(R: ReactionSpec, phi: SpectralField, T: float,
             stepper: StepperConfig) -> Trajectory:
    """Solve d/dt u = Lap(u) + R(u), u(0) = phi (d <= 3)."""
    grid = phi.grid
    lo, hi = R.domain if R.domain is not None else (-np.inf, np.inf)

    def apply_r(m, stage, vals):
        if R.domain is not None and (vals.min() < lo or vals.max() > hi):
            raise ValueError(
                f"solution left the declared reaction domain at step {m}")
        return R.R(vals)

    return integrate(phi, _pointwise_rhs(grid, apply_r), T, stepper)


def rd_linearisation(R: ReactionSpec, H, u_traj: Trajectory,
                     stepper: StepperConfig) -> Trajectory:
    """Derivative of R -> u_R in direction H.

    Solves d/dt i = Lap(i) + R'(u) i + H(u), i(0) = 0, with u read from
    the supplied solution trajectory at matching nodes/stages.  ``H`` is
    a scalar callable applied pointwise, or a ReactionSpec whose R is
    used.
    """
    h_func = H.R if isinstance(H, ReactionSpec) else H
    grid = get_grid(u_traj.n, u_traj.d)
    u = TrajectoryCoeffs(u_traj)
    pg = grid.padded

    def rhs(m, stage, i_c):
        u_vals = pg.to_values(grid.pad(u.at(m, stage)))
        i_vals = pg.to_values(grid.pad(i_c))
        return grid.crop(pg.from_values(R.Rprime(u_vals) * i_vals + h_func(u_vals)))

    i0 = SpectralField.zeros(u_traj.n, u_traj.d)
    return integrate(i0, rhs, u_traj.T, stepper)
