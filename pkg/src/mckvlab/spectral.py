"""Fourier core for real scalar fields on the unit torus [0,1)^d.

Conventions used throughout the package:

* A field f is stored through its complex Fourier coefficients
  c[k] = <f, e_k> with e_k(x) = exp(2*pi*i*k.x), so that
  f(x) = sum_k c[k] e_k(x).  For real f this forces the conjugate
  symmetry c[-k] = conj(c[k]), and c[0] is the mean of the field.
* Coefficient arrays use the numpy FFT layout along each axis
  (k = 0, 1, ..., n/2-1, -n/2, ..., -1).  Only modes with
  |k_j| <= n/2 - 1 on every axis are resolved; the Nyquist plane is
  kept identically zero so that differentiation and conjugate
  symmetry are exact.
* Mode ordering.  The mean-zero real basis functions tau_k with
  0 < |k| <= K (Euclidean ball) are ordered lexicographically in the
  integer vector k.  This single ordering is used for PotentialVec
  coordinates, Gram matrices, prior covariances and all serialized
  artifacts.
* Products of two fields are formed pseudospectrally on a grid padded
  by the 3/2 rule, which is alias-free for quadratic nonlinearities.
"""

from __future__ import annotations

import csv
import itertools
import json
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

TWO_PI = 2.0 * np.pi
SQRT2 = float(np.sqrt(2.0))


# ---------------------------------------------------------------------------
# grid machinery


class Grid:
    """Precomputed mode arrays and spectral multipliers for an n^d grid.

    Holds the integer mode vectors, the resolved-mode mask (Nyquist
    excluded), derivative multipliers 2*pi*i*k_j with the Nyquist plane
    zeroed, and the block-copy slices implementing 3/2-rule padding.
    All array methods accept stacked inputs of shape (..., n, ..., n)
    and act on the trailing d axes.
    """

    def __init__(self, n: int, d: int):
        if d not in (1, 2, 3):
            raise ValueError(f"spatial dimension must be 1, 2 or 3, got {d}")
        if n < 4 or n % 2 != 0:
            raise ValueError(f"grid size must be even and >= 4, got {n}")
        self.n = n
        self.d = d
        self.shape = (n,) * d
        self.size = n**d
        self.axes = tuple(range(-d, 0))

        axis_modes = np.fft.fftfreq(n, 1.0 / n).astype(int)
        self.axis_modes = axis_modes
        kvec = np.meshgrid(*([axis_modes] * d), indexing="ij")
        self.kvec = [m.astype(int) for m in kvec]
        self.ksq = sum(m.astype(float) ** 2 for m in kvec)

        nyq = n // 2
        resolved = np.ones(self.shape, dtype=bool)
        for m in kvec:
            resolved &= np.abs(m) != nyq
        self.resolved = resolved
        self.max_mode = nyq - 1

        # derivative multipliers; Nyquist zeroed to keep real fields real
        self.ik = [
            TWO_PI * 1j * np.where(np.abs(m) == nyq, 0, m).astype(float)
            for m in kvec
        ]
        self.lap_mult = -(TWO_PI**2) * self.ksq

        # 3/2-rule padding: per-axis block copies skipping the Nyquist index
        self.pad_n = 3 * n // 2
        h = n // 2
        self._blk_src = (slice(0, h), slice(h + 1, n))
        self._blk_dst = (slice(0, h), slice(self.pad_n - (h - 1), self.pad_n))

    # -- transforms --------------------------------------------------------

    def to_values(self, coeffs: np.ndarray) -> np.ndarray:
        """Real grid values of a (possibly stacked) coefficient array."""
        if self.d == 1:
            return np.fft.ifft(coeffs, axis=-1).real * self.size
        return np.fft.ifftn(coeffs, axes=self.axes).real * self.size

    def from_values(self, values: np.ndarray) -> np.ndarray:
        """Coefficients of real grid values, Nyquist plane zeroed."""
        if self.d == 1:
            c = np.fft.fft(values, axis=-1) / self.size
        else:
            c = np.fft.fftn(values, axes=self.axes) / self.size
        return c * self.resolved

    # -- padding ------------------------------------------------------------

    @property
    def padded(self) -> "Grid":
        return get_grid(self.pad_n, self.d)

    def pad(self, coeffs: np.ndarray) -> np.ndarray:
        out_shape = coeffs.shape[: -self.d] + (self.pad_n,) * self.d
        out = np.zeros(out_shape, dtype=complex)
        for combo in itertools.product(range(2), repeat=self.d):
            src = tuple(self._blk_src[c] for c in combo)
            dst = tuple(self._blk_dst[c] for c in combo)
            out[(Ellipsis,) + dst] = coeffs[(Ellipsis,) + src]
        return out

    def crop(self, coeffs_padded: np.ndarray) -> np.ndarray:
        out_shape = coeffs_padded.shape[: -self.d] + self.shape
        out = np.zeros(out_shape, dtype=complex)
        for combo in itertools.product(range(2), repeat=self.d):
            src = tuple(self._blk_src[c] for c in combo)
            dst = tuple(self._blk_dst[c] for c in combo)
            out[(Ellipsis,) + src] = coeffs_padded[(Ellipsis,) + dst]
        return out

    # -- pointwise algebra --------------------------------------------------

    def dealiased_product(self, cf: np.ndarray, cg: np.ndarray) -> np.ndarray:
        """Coefficients of the pointwise product f*g via 3/2-padded grids.

        Exact (up to rounding) for resolved output modes when both inputs
        are resolved, since pad_n >= max source mode + max kept mode + 1.
        """
        pg = self.padded
        vf = pg.to_values(self.pad(cf))
        vg = pg.to_values(self.pad(cg))
        return self.crop(pg.from_values(vf * vg))

    def heat_multiplier(self, dt: float) -> np.ndarray:
        """Exact semigroup factor exp(-4 pi^2 |k|^2 dt)."""
        return np.exp(self.lap_mult * dt)

    # -- calculus kernels (array level) --------------------------------------

    def deriv(self, coeffs: np.ndarray, axis: int) -> np.ndarray:
        return coeffs * self.ik[axis]

    def lap(self, coeffs: np.ndarray) -> np.ndarray:
        return coeffs * self.lap_mult

    def transport_div(self, r_c, grad_v_c, s_c) -> np.ndarray:
        """Array kernel for div(r * (grad V convolved with s)).

        ``grad_v_c`` is the list of d coefficient arrays of grad V.  The
        convolution is a coefficientwise product, the product with r is
        dealiased, and the divergence is spectral.  Inputs may carry
        broadcast-compatible leading (stack) axes.
        """
        out = None
        for j in range(self.d):
            conv_j = grad_v_c[j] * s_c
            q_j = self.dealiased_product(r_c, conv_j)
            term = self.ik[j] * q_j
            out = term if out is None else out + term
        return out


@lru_cache(maxsize=None)
def get_grid(n: int, d: int) -> Grid:
    return Grid(int(n), int(d))


# ---------------------------------------------------------------------------
# mode bookkeeping


def modes_in_ball(K: int, d: int) -> list[tuple[int, ...]]:
    """Nonzero integer vectors with Euclidean length <= K, lexicographic.

    This is the canonical ordering of the tau_k basis of the mean-zero
    trigonometric space of degree K.
    """
    if K < 1:
        raise ValueError("truncation radius K must be >= 1")
    ksq = K * K
    out = []
    for k in itertools.product(range(-K, K + 1), repeat=d):
        s = sum(c * c for c in k)
        if 0 < s <= ksq:
            out.append(k)
    return out


def count_dim(K: int, d: int) -> int:
    """Dimension of the mean-zero trigonometric space of degree K."""
    return len(modes_in_ball(K, d))


def _axis_expansion(m: int) -> list[tuple[int, complex]]:
    # T_m as a combination of complex exponentials e_j
    if m == 0:
        return [(0, 1.0 + 0j)]
    if m > 0:
        w = 1.0 / SQRT2
        return [(m, w + 0j), (-m, w + 0j)]
    a = abs(m)
    w = 1j / SQRT2
    return [(-a, -w), (a, w)]


def tau_expansion(k: tuple[int, ...]) -> list[tuple[tuple[int, ...], complex]]:
    """Expansion of tau_k as sum of weights times complex exponentials."""
    per_axis = [_axis_expansion(m) for m in k]
    out = []
    for combo in itertools.product(*per_axis):
        mode = tuple(c[0] for c in combo)
        w = 1.0 + 0j
        for c in combo:
            w *= c[1]
        out.append((mode, w))
    return out


def basis_tau(k, x) -> float:
    """Value of the real trigonometric basis function tau_k at x.

    Per axis: sqrt(2) cos(2 pi m y) for m > 0, the constant 1 for m = 0,
    and sqrt(2) sin(2 pi m y) for m < 0.
    """
    k = (k,) if np.isscalar(k) else tuple(int(m) for m in k)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if len(k) != x.shape[-1]:
        raise ValueError("mode and point dimension mismatch")
    val = 1.0
    for m, y in zip(k, x):
        if m > 0:
            val *= SQRT2 * np.cos(TWO_PI * m * y)
        elif m < 0:
            val *= SQRT2 * np.sin(TWO_PI * m * y)
    return float(val)


# ---------------------------------------------------------------------------
# fields


@dataclass
class SpectralField:
    """Real scalar field on the torus stored as complex Fourier coefficients.

    Invariants: coeffs[-k] = conj(coeffs[k]); coeffs[0] is real and equals
    the mean of the field; the Nyquist plane is identically zero.
    """

    d: int
    n: int
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        if self.coeffs.shape != (self.n,) * self.d:
            raise ValueError("coefficient array shape does not match grid")

    # -- constructors -------------------------------------------------------

    @classmethod
    def zeros(cls, n: int, d: int) -> "SpectralField":
        return cls(d, n, np.zeros((n,) * d, dtype=complex))

    @classmethod
    def constant(cls, value: float, n: int, d: int) -> "SpectralField":
        f = cls.zeros(n, d)
        f.coeffs[(0,) * d] = value
        return f

    @classmethod
    def from_values(cls, values: np.ndarray) -> "SpectralField":
        values = np.asarray(values, dtype=float)
        d = values.ndim
        n = values.shape[0]
        if values.shape != (n,) * d:
            raise ValueError("value grid must be a d-cube")
        g = get_grid(n, d)
        return cls(d, n, g.from_values(values))

    # -- basics --------------------------------------------------------------

    @property
    def grid(self) -> Grid:
        return get_grid(self.n, self.d)

    def copy(self) -> "SpectralField":
        return SpectralField(self.d, self.n, self.coeffs.copy())

    def values(self) -> np.ndarray:
        return self.grid.to_values(self.coeffs)

    def mean(self) -> float:
        return float(self.coeffs[(0,) * self.d].real)

    def eval(self, x) -> float:
        """Exact trigonometric synthesis at a point of [0,1)^d."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.shape != (self.d,):
            raise ValueError("point dimension mismatch")
        g = self.grid
        phases = [np.exp(TWO_PI * 1j * g.axis_modes * xi) for xi in x]
        c = self.coeffs
        for ph in reversed(phases):
            c = c @ ph
        return float(np.real(c))

    def conj_symmetry_defect(self) -> float:
        """Max deviation from the real-field invariants (for checks)."""
        c = self.coeffs
        flipped = c.copy()
        for ax in range(self.d):
            flipped = np.roll(np.flip(flipped, axis=ax), 1, axis=ax)
        defect = float(np.max(np.abs(flipped - np.conj(c))))
        defect = max(defect, float(abs(c[(0,) * self.d].imag)))
        leak = np.abs(c[~self.grid.resolved])
        if leak.size:
            defect = max(defect, float(leak.max()))
        return defect

    # -- arithmetic -----------------------------------------------------------

    def _like(self, coeffs: np.ndarray) -> "SpectralField":
        return SpectralField(self.d, self.n, coeffs)

    def __add__(self, other: "SpectralField") -> "SpectralField":
        _check_same_grid(self, other)
        return self._like(self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        _check_same_grid(self, other)
        return self._like(self.coeffs - other.coeffs)

    def __mul__(self, scalar: float) -> "SpectralField":
        return self._like(self.coeffs * float(scalar))

    __rmul__ = __mul__


def _check_same_grid(f: SpectralField, g: SpectralField):
    if f.n != g.n or f.d != g.d:
        raise ValueError(f"grid mismatch: ({f.n},{f.d}) vs ({g.n},{g.d})")


# ---------------------------------------------------------------------------
# calculus operators


def convolve(f: SpectralField, g: SpectralField) -> SpectralField:
    """Torus convolution; coefficients multiply, (f*g)^_k = f_k g_k."""
    _check_same_grid(f, g)
    return SpectralField(f.d, f.n, f.coeffs * g.coeffs)


def multiply(f: SpectralField, g: SpectralField) -> SpectralField:
    """Pointwise product, dealiased by the 3/2 rule."""
    _check_same_grid(f, g)
    return SpectralField(f.d, f.n, f.grid.dealiased_product(f.coeffs, g.coeffs))


def grad(f: SpectralField) -> list[SpectralField]:
    g = f.grid
    return [SpectralField(f.d, f.n, g.deriv(f.coeffs, j)) for j in range(f.d)]


def divergence(fields: list[SpectralField]) -> SpectralField:
    if not fields:
        raise ValueError("empty vector field")
    d = fields[0].d
    if len(fields) != d:
        raise ValueError("vector field must have d components")
    g = fields[0].grid
    out = np.zeros_like(fields[0].coeffs)
    for j, comp in enumerate(fields):
        _check_same_grid(fields[0], comp)
        out = out + g.deriv(comp.coeffs, j)
    return SpectralField(d, fields[0].n, out)


def laplacian(f: SpectralField) -> SpectralField:
    return SpectralField(f.d, f.n, f.grid.lap(f.coeffs))


def sobolev_norm(f: SpectralField, s: float) -> float:
    """Norm with Fourier weight (1+|k|^2)^s; s=0 is the L2 norm."""
    w = (1.0 + f.grid.ksq) ** s
    return float(np.sqrt(np.sum(w * np.abs(f.coeffs) ** 2)))


def l2_inner(f: SpectralField, g: SpectralField) -> float:
    _check_same_grid(f, g)
    return float(np.real(np.sum(f.coeffs * np.conj(g.coeffs))))


def l2_norm(f: SpectralField) -> float:
    return float(np.linalg.norm(f.coeffs.ravel()))


# ---------------------------------------------------------------------------
# the mean-zero trigonometric space E_K


@dataclass
class PotentialVec:
    """Coordinates of a mean-zero potential in the tau_k basis of degree K.

    The basis is orthonormal in L2, so the Euclidean norm of ``values``
    equals the L2 norm of the represented function.  Coordinates follow
    the lexicographic mode ordering of :func:`modes_in_ball`.
    """

    K: int
    d: int
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        D = count_dim(self.K, self.d)
        if self.values.shape != (D,):
            raise ValueError(f"expected {D} coordinates, got {self.values.shape}")

    @property
    def dim(self) -> int:
        return self.values.size

    @property
    def modes(self) -> list[tuple[int, ...]]:
        return modes_in_ball(self.K, self.d)

    @classmethod
    def zeros(cls, K: int, d: int) -> "PotentialVec":
        return cls(K, d, np.zeros(count_dim(K, d)))

    @classmethod
    def from_mode_dict(cls, K: int, d: int, entries: dict) -> "PotentialVec":
        v = cls.zeros(K, d)
        index = {k: i for i, k in enumerate(v.modes)}
        for k, val in entries.items():
            kk = (k,) if np.isscalar(k) else tuple(int(m) for m in k)
            v.values[index[kk]] = val
        return v

    # -- norms ---------------------------------------------------------------

    def _mode_ksq(self) -> np.ndarray:
        return np.array([sum(m * m for m in k) for k in self.modes], dtype=float)

    def l2_norm(self) -> float:
        return float(np.linalg.norm(self.values))

    def sobolev_norm(self, s: float) -> float:
        w = (1.0 + self._mode_ksq()) ** s
        return float(np.sqrt(np.sum(w * self.values**2)))

    def eval(self, x) -> float:
        return float(sum(v * basis_tau(k, x) for k, v in zip(self.modes, self.values)))

    # -- change of representation ---------------------------------------------

    def coeff_grid(self, n: int) -> np.ndarray:
        """Complex coefficient array of the represented function."""
        if self.K > n // 2 - 1:
            raise ValueError(f"K={self.K} not representable on grid n={n}")
        c = np.zeros((n,) * self.d, dtype=complex)
        for k, val in zip(self.modes, self.values):
            for mode, w in tau_expansion(k):
                idx = tuple(m % n for m in mode)
                c[idx] += val * w
        return c

    def to_field(self, n: int) -> SpectralField:
        return SpectralField(self.d, n, self.coeff_grid(n))

    def __add__(self, other: "PotentialVec") -> "PotentialVec":
        self._check_compatible(other)
        return PotentialVec(self.K, self.d, self.values + other.values)

    def __sub__(self, other: "PotentialVec") -> "PotentialVec":
        self._check_compatible(other)
        return PotentialVec(self.K, self.d, self.values - other.values)

    def __mul__(self, scalar: float) -> "PotentialVec":
        return PotentialVec(self.K, self.d, self.values * float(scalar))

    __rmul__ = __mul__

    def _check_compatible(self, other: "PotentialVec"):
        if self.K != other.K or self.d != other.d:
            raise ValueError("potential truncation/dimension mismatch")


def project_to_ek(f: SpectralField, K: int) -> PotentialVec:
    """Coordinates <f, tau_k> for 0 < |k| <= K; the mean is discarded."""
    if K > f.n // 2 - 1:
        raise ValueError(f"K={K} exceeds resolved modes of grid n={f.n}")
    modes = modes_in_ball(K, f.d)
    vals = np.empty(len(modes))
    c = f.coeffs
    for i, k in enumerate(modes):
        acc = 0.0 + 0j
        for mode, w in tau_expansion(k):
            idx = tuple((-m) % f.n for m in mode)
            acc += w * c[idx]
        vals[i] = acc.real
    return PotentialVec(K, f.d, vals)


def embed_potential(v: PotentialVec, K_new: int) -> PotentialVec:
    """Embed into the nested basis of a larger ball K_new >= K."""
    if K_new < v.K:
        raise ValueError("target truncation must be >= source truncation")
    out = PotentialVec.zeros(K_new, v.d)
    index = {k: i for i, k in enumerate(out.modes)}
    for k, val in zip(v.modes, v.values):
        out.values[index[k]] = val
    return out


def random_potential(K: int, d: int, rng: np.random.Generator,
                     amplitude: float = 1.0, decay: float = 0.0) -> PotentialVec:
    """Random element of E_K with coordinates ~ amplitude * (1+|k|^2)^(-decay/2)."""
    v = PotentialVec.zeros(K, d)
    ksq = v._mode_ksq()
    v.values[:] = amplitude * (1.0 + ksq) ** (-decay / 2.0) * rng.standard_normal(v.dim)
    return v


def w2inf_norm(v: PotentialVec, n: int = 64) -> float:
    """Grid surrogate for the W^{2,inf} norm: sup|W| + sup|dW| + sup|d^2W|."""
    f = v.to_field(n)
    g = f.grid
    total = float(np.max(np.abs(f.values())))
    gr = [g.deriv(f.coeffs, j) for j in range(v.d)]
    total += max(float(np.max(np.abs(g.to_values(c)))) for c in gr)
    second = []
    for j in range(v.d):
        for l in range(v.d):
            second.append(float(np.max(np.abs(g.to_values(g.deriv(gr[j], l))))))
    return total + max(second)


# ---------------------------------------------------------------------------
# serialization


def save_field(f: SpectralField, csv_path, sidecar_path=None):
    """CSV with columns (k_1..k_d, re, im) plus a JSON sidecar {d, n, K}.

    Rows cover the resolved modes in lexicographic order.
    """
    csv_path = Path(csv_path)
    modes = sorted(itertools.product(
        *([range(-(f.n // 2 - 1), f.n // 2)] * f.d)))
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"k_{j + 1}" for j in range(f.d)] + ["re", "im"])
        for k in modes:
            c = f.coeffs[tuple(m % f.n for m in k)]
            writer.writerow(list(k) + [repr(float(c.real)), repr(float(c.imag))])
    sidecar = Path(sidecar_path) if sidecar_path else csv_path.with_suffix(".json")
    sidecar.write_text(json.dumps({"d": f.d, "n": f.n, "K": f.n // 2 - 1}))


def load_field(csv_path, sidecar_path=None) -> SpectralField:
    csv_path = Path(csv_path)
    sidecar = Path(sidecar_path) if sidecar_path else csv_path.with_suffix(".json")
    meta = json.loads(sidecar.read_text())
    d, n = int(meta["d"]), int(meta["n"])
    f = SpectralField.zeros(n, d)
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            k = tuple(int(x) for x in row[:d])
            f.coeffs[tuple(m % n for m in k)] = float(row[d]) + 1j * float(row[d + 1])
    return f
