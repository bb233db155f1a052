"""Fourier representation of periodic vector fields and constant-coefficient operators.

Fields live on the torus ``[0, L)^3`` sampled on ``n^3`` points.  Coefficients are
normalized so that ``u(x) = sum_k u_hat(k) exp(i k.x)``; with the normalized measure
``L^-3 dx`` Parseval reads ``mean |u|^2 = sum |u_hat|^2``.  Internally every field is
stored in the real-FFT half layout ``(3, n, n, n//2 + 1)``; the full ``(3, n, n, n)``
array is produced on demand by :attr:`SpectralVectorField.coeffs`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional, Union

import numpy as np

from ._fft import irfft3, rfft3

#: Transition interval of the Littlewood-Paley cutoff, in units of |xi|.
LP_TRANSITION = (1.0, 4.0 / 3.0)

DIV_TOL = 1e-10


@dataclass(frozen=True)
class Grid3:
    """Periodic grid with ``n`` points per axis and period ``L``."""

    n: int
    L: float = 2 * math.pi

    def __post_init__(self):
        n = int(self.n)
        if n != self.n or n < 8 or n & (n - 1):
            raise ValueError(f"grid size must be a power of two >= 8, got {self.n!r}")
        if not self.L > 0:
            raise ValueError(f"period must be positive, got {self.L!r}")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "L", float(self.L))

    @property
    def h(self) -> int:
        """Length of the last axis in the half layout."""
        return self.n // 2 + 1

    @property
    def k0(self) -> float:
        """Fundamental wavenumber ``2 pi / L``."""
        return 2 * math.pi / self.L

    @property
    def half_shape(self):
        return (self.n, self.n, self.h)

    @cached_property
    def modes(self):
        """Integer mode numbers ``(m1, m2, m3)`` broadcastable over the half layout."""
        n = self.n
        m = np.fft.fftfreq(n, 1.0 / n).astype(np.int64)
        m3 = np.arange(self.h, dtype=np.int64)
        return m[:, None, None], m[None, :, None], m3[None, None, :]

    @cached_property
    def kvec(self) -> np.ndarray:
        """Wavevector components with the Nyquist entries zeroed (odd symbols)."""
        n = self.n
        out = np.empty((3,) + self.half_shape)
        for i, m in enumerate(self.modes):
            k = self.k0 * np.where(np.abs(m) == n // 2, 0, m)
            out[i] = np.broadcast_to(k, self.half_shape)
        return out

    @cached_property
    def k2(self) -> np.ndarray:
        """True squared wavenumber ``|k|^2`` (even symbols)."""
        m1, m2, m3 = self.modes
        return (self.k0**2) * (m1**2 + m2**2 + m3**2).astype(float)

    @cached_property
    def kt2(self) -> np.ndarray:
        """Squared norm of :attr:`kvec`."""
        return np.sum(self.kvec**2, axis=0)

    @cached_property
    def radius(self) -> np.ndarray:
        """``|k| L / 2 pi``, the wavenumber in units of the fundamental."""
        return np.sqrt(self.k2) / self.k0

    @property
    def kcut(self) -> int:
        """Largest retained mode number under the 2/3 rule."""
        return math.ceil(self.n / 3) - 1

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        kc = self.kcut
        m1, m2, m3 = self.modes
        return (np.abs(m1) <= kc) & (np.abs(m2) <= kc) & (m3 <= kc)

    @cached_property
    def weights(self) -> np.ndarray:
        """Multiplicity of each half-layout coefficient in full-spectrum sums."""
        w = np.full(self.h, 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        return np.broadcast_to(w[None, None, :], self.half_shape)

    @property
    def j_range(self) -> range:
        """Resolvable dyadic indices ``0 .. floor(log2(n/3)) - 1``."""
        return range(0, int(math.floor(math.log2(self.n / 3))))

    def dyadic_scale(self, j: float) -> float:
        """Physical wavenumber ``2 pi 2^j / L`` of dyadic block ``j``."""
        return self.k0 * 2.0**j

    @cached_property
    def _neg_index(self):
        return (-np.arange(self.n)) % self.n

    def points(self):
        """Physical grid coordinates as three broadcastable arrays."""
        x = np.arange(self.n) * (self.L / self.n)
        return x[:, None, None], x[None, :, None], x[None, None, :]

    def half_to_full(self, half: np.ndarray) -> np.ndarray:
        n, h = self.n, self.h
        full = np.empty(half.shape[:-3] + (n, n, n), dtype=complex)
        full[..., :h] = half
        idx = self._neg_index
        mirrored = half[..., idx, :, :][..., :, idx, :]
        full[..., h:] = np.conj(mirrored[..., n - np.arange(h, n)])
        return full

    def full_to_half(self, full: np.ndarray) -> np.ndarray:
        return np.ascontiguousarray(full[..., : self.h])

    def hermitian_defect(self, full: np.ndarray) -> float:
        idx = self._neg_index
        flipped = full[..., idx, :, :][..., :, idx, :][..., idx]
        scale = max(np.abs(full).max(), np.finfo(float).tiny)
        return float(np.abs(full - np.conj(flipped)).max() / scale)

    def to_physical(self, half: np.ndarray) -> np.ndarray:
        return irfft3(half, self.n)

    def to_spectral(self, phys: np.ndarray) -> np.ndarray:
        return rfft3(phys)

    def wsum(self, values: np.ndarray) -> float:
        """Sum of a half-layout array over the full spectrum."""
        return float(np.sum(self.weights * values))


class SpectralVectorField:
    """Immutable real, zero-mean vector field given by its Fourier coefficients."""

    __slots__ = ("grid", "half", "time_tag")

    def __init__(self, grid: Grid3, half: np.ndarray, time_tag: Optional[float] = None):
        half = np.asarray(half, dtype=complex)
        if half.shape != (3,) + grid.half_shape:
            raise ValueError(f"expected coefficients of shape {(3,) + grid.half_shape}, got {half.shape}")
        if np.any(half[:, 0, 0, 0] != 0):
            raise ValueError("zero mode must vanish (homogeneous, zero-mean field)")
        if half.flags.writeable:
            half = half.copy()
            half.flags.writeable = False
        self.grid = grid
        self.half = half
        self.time_tag = time_tag

    @classmethod
    def zeros(cls, grid: Grid3, time_tag=None) -> "SpectralVectorField":
        return cls(grid, np.zeros((3,) + grid.half_shape, dtype=complex), time_tag)

    @classmethod
    def from_coeffs(cls, grid: Grid3, coeffs: np.ndarray, time_tag=None, tol=1e-12):
        """Build from full ``(3, n, n, n)`` coefficients, checking Hermitian symmetry."""
        coeffs = np.asarray(coeffs, dtype=complex)
        if coeffs.shape != (3, grid.n, grid.n, grid.n):
            raise ValueError(f"expected shape {(3, grid.n, grid.n, grid.n)}, got {coeffs.shape}")
        if np.any(coeffs) and grid.hermitian_defect(coeffs) > tol:
            raise ValueError("coefficients are not Hermitian symmetric (field is not real)")
        return cls(grid, grid.full_to_half(coeffs), time_tag)

    @classmethod
    def from_physical(cls, grid: Grid3, values: np.ndarray, time_tag=None):
        """Transform physical values of shape ``(3, n, n, n)``; the mean is removed."""
        half = grid.to_spectral(np.asarray(values, dtype=float))
        half[:, 0, 0, 0] = 0
        return cls(grid, half, time_tag)

    @property
    def coeffs(self) -> np.ndarray:
        return self.grid.half_to_full(self.half)

    def physical(self) -> np.ndarray:
        return self.grid.to_physical(self.half)

    def with_time(self, time_tag) -> "SpectralVectorField":
        return SpectralVectorField(self.grid, self.half, time_tag)

    def _check(self, other):
        if not isinstance(other, SpectralVectorField):
            return NotImplemented
        if other.grid != self.grid:
            raise ValueError("fields live on different grids")
        return other

    def __add__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return SpectralVectorField(self.grid, self.half + other.half, self.time_tag)

    def __sub__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return SpectralVectorField(self.grid, self.half - other.half, self.time_tag)

    def __mul__(self, scalar):
        if not np.isscalar(scalar):
            return NotImplemented
        return SpectralVectorField(self.grid, self.half * scalar, self.time_tag)

    __rmul__ = __mul__

    def __neg__(self):
        return SpectralVectorField(self.grid, -self.half, self.time_tag)

    def __repr__(self):
        return f"SpectralVectorField(n={self.grid.n}, L={self.grid.L:g}, t={self.time_tag}, l2={l2_norm(self):.4g})"

    def divergence_defect(self) -> float:
        """``max_k |k.u(k)| / (|k| max_k |u(k)|)``; zero for a solenoidal field."""
        scale = np.abs(self.half).max()
        if scale == 0:
            return 0.0
        div = np.abs(np.einsum("i...,i...->...", self.grid.kvec, self.half))
        kt = np.sqrt(self.grid.kt2)
        ratio = np.divide(div, kt, out=np.zeros_like(div), where=kt > 0)
        return float(ratio.max() / scale)

    def is_divergence_free(self, tol: float = DIV_TOL) -> bool:
        return self.divergence_defect() <= tol

    def spectral_tail(self) -> float:
        """Largest coefficient near or beyond the 2/3 cutoff, relative to the largest overall."""
        g = self.grid
        scale = np.abs(self.half).max()
        if scale == 0:
            return 0.0
        edge = g.kcut - g.n // 16
        m1, m2, m3 = g.modes
        shell = (np.abs(m1) > edge) | (np.abs(m2) > edge) | (m3 > edge)
        return float(np.abs(self.half[:, shell]).max() / scale) if shell.any() else 0.0


def l2_norm(f: SpectralVectorField) -> float:
    return math.sqrt(f.grid.wsum(np.sum(np.abs(f.half) ** 2, axis=0)))


def inner(f: SpectralVectorField, g: SpectralVectorField) -> float:
    """Real L^2 inner product under the normalized measure."""
    return f.grid.wsum(np.real(np.sum(np.conj(f.half) * g.half, axis=0)))


def gradient_l2_sq(f: SpectralVectorField) -> float:
    """``||grad f||_2^2`` under the normalized measure."""
    return f.grid.wsum(f.grid.k2 * np.sum(np.abs(f.half) ** 2, axis=0))


@dataclass(frozen=True)
class ScalarSymbol:
    """Fourier multiplier ``k -> m(k)`` evaluated on the half layout of a grid.

    ``hermitian`` records whether ``m(-k) = conj(m(k))`` so that real fields stay real.
    """

    func: Callable[[Grid3], np.ndarray]
    name: str = "symbol"
    hermitian: bool = True

    def __call__(self, grid: Grid3) -> np.ndarray:
        values = np.array(np.broadcast_to(self.func(grid), grid.half_shape), dtype=complex)
        values[0, 0, 0] = 0
        return values


def identity_symbol() -> ScalarSymbol:
    return ScalarSymbol(lambda g: np.ones(g.half_shape), "identity")


def heat_symbol(t: float) -> ScalarSymbol:
    return ScalarSymbol(lambda g: np.exp(-g.k2 * t), f"heat({t:g})")


def q_symbol(sigma: float) -> ScalarSymbol:
    return ScalarSymbol(lambda g: -sigma * g.k2 * np.exp(-sigma * g.k2), f"Q({sigma:g})")


def riesz_symbol(axis: int) -> ScalarSymbol:
    def func(g):
        kt = np.sqrt(g.kt2)
        return -1j * np.divide(g.kvec[axis], kt, out=np.zeros(g.half_shape), where=kt > 0)

    return ScalarSymbol(func, f"R{axis + 1}")


def abs_grad_symbol() -> ScalarSymbol:
    return ScalarSymbol(lambda g: np.sqrt(g.k2), "|grad|")


def apply_multiplier(f: SpectralVectorField, m: Union[ScalarSymbol, np.ndarray]) -> SpectralVectorField:
    values = m(f.grid) if isinstance(m, ScalarSymbol) else np.broadcast_to(m, f.grid.half_shape)
    half = f.half * values
    half[:, 0, 0, 0] = 0
    return SpectralVectorField(f.grid, half, f.time_tag)


def _project(grid: Grid3, half: np.ndarray) -> np.ndarray:
    k = grid.kvec
    kt2 = grid.kt2
    kdotu = np.einsum("i...,i...->...", k, half)
    coef = np.divide(kdotu, kt2, out=np.zeros_like(kdotu), where=kt2 > 0)
    out = half - k * coef
    out[:, 0, 0, 0] = 0
    return out


def leray_project(f: SpectralVectorField) -> SpectralVectorField:
    """Orthogonal projection onto divergence-free fields, symbol ``Id - k k^T / |k|^2``."""
    return SpectralVectorField(f.grid, _project(f.grid, f.half), f.time_tag)


def heat_semigroup(f: SpectralVectorField, t: float) -> SpectralVectorField:
    if t < 0:
        raise ValueError(f"heat semigroup needs t >= 0, got {t}")
    out = apply_multiplier(f, np.exp(-f.grid.k2 * t))
    return out if f.time_tag is None else out.with_time(f.time_tag + t)


def q_operator(f: SpectralVectorField, sigma: float) -> SpectralVectorField:
    """``Q(sigma) = sigma d/dsigma S(sigma)``, symbol ``-sigma |k|^2 exp(-sigma |k|^2)``."""
    if not sigma > 0:
        raise ValueError(f"Q(sigma) needs sigma > 0, got {sigma}")
    return apply_multiplier(f, q_symbol(sigma))


def differential(f: SpectralVectorField, kind: str):
    """Exact spectral differentiation.

    ``"curl"`` returns a :class:`SpectralVectorField`, ``"divergence"`` the half-layout
    coefficients of a scalar, and ``"gradient"`` the ``(3, 3, ...)`` coefficients of the
    tensor ``d_j f_i`` (row ``i``, column ``j``).
    """
    k = f.grid.kvec
    u = f.half
    if kind == "curl":
        out = 1j * np.stack(
            [k[1] * u[2] - k[2] * u[1], k[2] * u[0] - k[0] * u[2], k[0] * u[1] - k[1] * u[0]]
        )
        return SpectralVectorField(f.grid, out, f.time_tag)
    if kind == "divergence":
        return 1j * np.einsum("i...,i...->...", k, u)
    if kind == "gradient":
        return 1j * u[:, None] * k[None, :]
    raise ValueError(f"unknown differential kind {kind!r}")


def scalar_gradient(grid: Grid3, phi_half: np.ndarray, time_tag=None) -> SpectralVectorField:
    """Gradient of a scalar given by half-layout coefficients."""
    out = 1j * grid.kvec * phi_half[None]
    out[:, 0, 0, 0] = 0
    return SpectralVectorField(grid, out, time_tag)


def biot_savart(omega: SpectralVectorField, tol: float = 1e-8) -> SpectralVectorField:
    """Zero-mean divergence-free ``u`` with ``curl u = omega``."""
    defect = omega.divergence_defect()
    if defect > tol:
        raise ValueError(f"vorticity is not divergence free (defect {defect:.3e})")
    g = omega.grid
    k = g.kvec
    w = omega.half
    cross = np.stack([k[1] * w[2] - k[2] * w[1], k[2] * w[0] - k[0] * w[2], k[0] * w[1] - k[1] * w[0]])
    out = 1j * np.divide(cross, g.kt2, out=np.zeros_like(cross), where=g.kt2 > 0)
    return SpectralVectorField(g, out, omega.time_tag)


_PAIRS = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))


def symmetric_product(grid: Grid3, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Half-layout coefficients of ``(a_i b_j + b_i a_j) / 2`` from physical ``a, b``.

    Returned with shape ``(6, ...)`` in the component order ``xx, yy, zz, xy, xz, yz``.
    """
    if a is b:
        prods = np.stack([a[i] * a[j] for i, j in _PAIRS])
    else:
        prods = np.stack([0.5 * (a[i] * b[j] + b[i] * a[j]) for i, j in _PAIRS])
    return grid.to_spectral(prods)


def projected_divergence(grid: Grid3, tensor_hat: np.ndarray, dealias: bool = True) -> np.ndarray:
    """``P div T`` for a symmetric tensor in the component order of :func:`symmetric_product`."""
    k = grid.kvec
    t = tensor_hat
    full = ((t[0], t[3], t[4]), (t[3], t[1], t[5]), (t[4], t[5], t[2]))
    div = 1j * np.stack([k[0] * full[i][0] + k[1] * full[i][1] + k[2] * full[i][2] for i in range(3)])
    if dealias:
        div *= grid.dealias_mask
    return _project(grid, div)


def bilinear_term(grid: Grid3, a: np.ndarray, b: np.ndarray, dealias: bool = True) -> np.ndarray:
    """``P div (a (x) b)_sym`` from physical fields ``a, b``; the Navier-Stokes convective term."""
    return projected_divergence(grid, symmetric_product(grid, a, b), dealias)


def dealias(f: SpectralVectorField) -> SpectralVectorField:
    return SpectralVectorField(f.grid, f.half * f.grid.dealias_mask, f.time_tag)


def nonlinear_term(u: SpectralVectorField, tol: float = DIV_TOL) -> SpectralVectorField:
    """``P div (u (x) u)`` computed pseudo-spectrally with 2/3-rule dealiasing."""
    defect = u.divergence_defect()
    if defect > tol:
        raise ValueError(f"input is not divergence free (defect {defect:.3e})")
    g = u.grid
    phys = g.to_physical(u.half * g.dealias_mask)
    return SpectralVectorField(g, bilinear_term(g, phys, phys), u.time_tag)


def _smooth_step(x: np.ndarray) -> np.ndarray:
    """C-infinity step: 0 for x <= 0, 1 for x >= 1, built from exp(-1/x)."""
    x = np.clip(x, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        a = np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)
        b = np.where(x < 1, np.exp(-1.0 / np.where(x < 1, 1.0 - x, 1.0)), 0.0)
    return a / (a + b)


def lp_cutoff(r: np.ndarray) -> np.ndarray:
    """Radial low-pass profile: 1 on ``r <= 1``, 0 on ``r >= 4/3`` (so 0 on ``r >= 2``)."""
    lo, hi = LP_TRANSITION
    return 1.0 - _smooth_step((np.asarray(r, dtype=float) - lo) / (hi - lo))


def lp_symbol(grid: Grid3, j: int) -> np.ndarray:
    """Real multiplier of the dyadic block ``j`` on the half layout.

    Block ``j`` is ``S_{j+1} - S_j``; the lowest resolvable block absorbs every nonzero
    mode below it, so the blocks telescope to the identity on the resolvable band.
    """
    if j not in grid.j_range:
        raise ValueError(f"dyadic index {j} outside resolvable range {list(grid.j_range)}")
    r = grid.radius
    values = lp_cutoff(r / 2.0 ** (j + 1))
    if j > grid.j_range.start:
        values = values - lp_cutoff(r / 2.0**j)
    values = np.array(values)
    values[0, 0, 0] = 0.0
    return values


def lp_block(f: SpectralVectorField, j: int) -> SpectralVectorField:
    return apply_multiplier(f, lp_symbol(f.grid, j))


def resolvable_band(grid: Grid3) -> float:
    """Radius (in fundamental units) below which the blocks sum exactly to the identity."""
    return 2.0 ** grid.j_range.stop * LP_TRANSITION[0]
