"""Initial-data generators.

Random coefficients are derived from a hash of ``(seed, wavevector)``, so a given seed
describes the same field on every grid: refining ``n`` only adds modes that the
coarser grid cannot represent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Dict

import numpy as np

from .norms import BesovSpec, QuadratureCfg, besov_norm_heat, lebesgue_norm
from .spectral import Grid3, SpectralVectorField, _project, biot_savart, differential

KINDS = ("random_besov", "taylor_green", "vorticity_l32", "oscillatory")

_DEFAULTS: Dict[str, Dict[str, Any]] = {
    "random_besov": {"slope": -0.5, "kmax": None, "s": -0.25, "p": 4.0, "q": 4.0},
    "taylor_green": {"k": 1},
    "vorticity_l32": {"width": 0.6, "blobs": 2},
    "oscillatory": {"carrier": None, "width": 1.0},
}


@dataclass(frozen=True)
class DataSpec:
    """Recipe for an initial field.

    ``amplitude`` means: the sup of the velocity for ``taylor_green`` and
    ``oscillatory``, the ``L^{3/2}`` norm of the vorticity for ``vorticity_l32``, and the
    target Besov norm ``B(s, p, q)`` for ``random_besov``.

    ``random_besov`` params: ``slope`` is the growth exponent ``beta`` in
    ``||Delta_j u0||_2 ~ 2^{j beta}``; ``kmax`` the radial band limit in fundamental
    units (default ``n / 6``); ``s, p, q`` the normalizing norm.
    """

    kind: str
    amplitude: float = 1.0
    seed: int = 0
    params: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown data kind {self.kind!r}; expected one of {KINDS}")
        unknown = set(self.params) - set(_DEFAULTS[self.kind])
        if unknown:
            raise ValueError(f"unknown parameters for {self.kind}: {sorted(unknown)}")
        if not math.isfinite(self.amplitude) or self.amplitude < 0:
            raise ValueError("amplitude must be finite and nonnegative")

    def param(self, key):
        return self.params.get(key, _DEFAULTS[self.kind][key])

    def __hash__(self):
        return hash((self.kind, self.amplitude, self.seed, tuple(sorted(self.params.items()))))


def _splitmix(x: np.ndarray) -> np.ndarray:
    x = x + np.uint64(0x9E3779B97F4A7C15)
    x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


def _uniform(seed: int, m1, m2, m3, stream: int) -> np.ndarray:
    with np.errstate(over="ignore"):
        h = _splitmix(np.uint64(seed & 0xFFFFFFFFFFFFFFFF) + np.uint64(stream) * np.uint64(0xD1B54A32D192ED03))
        for m in (m1, m2, m3):
            h = _splitmix(h ^ (np.asarray(m).astype(np.int64).astype(np.uint64) + np.uint64(0x632BE59BD9B4E019)))
    return ((h >> np.uint64(11)).astype(np.float64) + 0.5) / float(1 << 53)


def hashed_gaussian(grid: Grid3, seed: int) -> np.ndarray:
    """Complex Gaussian coefficients (half layout) that are Hermitian and grid independent."""
    m1, m2, m3 = grid.modes
    out = np.empty((3,) + grid.half_shape, dtype=complex)
    for c in range(3):
        parts = []
        for sign in (1, -1):
            u1 = _uniform(seed, sign * m1, sign * m2, sign * m3, 2 * c)
            u2 = _uniform(seed, sign * m1, sign * m2, sign * m3, 2 * c + 1)
            r = np.sqrt(-2.0 * np.log(u1))
            parts.append(r * np.exp(2j * np.pi * u2))
        out[c] = 0.5 * (parts[0] + np.conj(parts[1]))
    out[:, 0, 0, 0] = 0
    return out


def _taylor_green(spec: DataSpec, grid: Grid3) -> SpectralVectorField:
    k = int(spec.param("k"))
    x, y, z = (k * grid.k0 * c for c in grid.points())
    u = np.stack(np.broadcast_arrays(
        np.sin(x) * np.cos(y) * np.cos(z),
        -np.cos(x) * np.sin(y) * np.cos(z),
        np.zeros_like(x),
    ))
    return SpectralVectorField.from_physical(grid, spec.amplitude * u)


def _random_besov(spec: DataSpec, grid: Grid3) -> SpectralVectorField:
    beta = float(spec.param("slope"))
    kmax = spec.param("kmax")
    kmax = grid.n / 6 if kmax is None else float(kmax)
    edge = grid.kcut - grid.n // 16
    if not 1 <= kmax <= edge:
        raise ValueError(f"band limit kmax={kmax:g} outside the resolvable range [1, {edge}] at n={grid.n}")
    if not -3.0 < beta < 3.0:
        raise ValueError(f"spectral slope {beta:g} outside the supported range (-3, 3)")
    target = BesovSpec(float(spec.param("s")), float(spec.param("p")), float(spec.param("q")))
    r = grid.radius
    # ||Delta_j u||_2^2 ~ 2^{3j} |u(k)|^2 at |k| ~ 2^j
    weight = np.where((r > 0) & (r <= kmax), np.power(np.where(r > 0, r, 1.0), beta - 1.5), 0.0)
    half = _project(grid, hashed_gaussian(grid, spec.seed) * weight)
    f = SpectralVectorField(grid, half)
    norm = besov_norm_heat(f, target, QuadratureCfg.for_grid(grid, field=f))
    if norm == 0:
        raise ValueError("random field vanished; band limit too small")
    return f * (spec.amplitude / norm)


def _gaussian_hat(grid: Grid3, width: float, center) -> np.ndarray:
    k = grid.kvec
    phase = np.exp(-1j * sum(k[i] * center[i] for i in range(3)))
    return np.exp(-0.5 * grid.k2 * width**2) * phase


def _vorticity_l32(spec: DataSpec, grid: Grid3) -> SpectralVectorField:
    width = float(spec.param("width"))
    blobs = int(spec.param("blobs"))
    if width <= 0 or blobs < 1:
        raise ValueError("vorticity_l32 needs width > 0 and at least one blob")
    rng = np.random.default_rng(spec.seed)
    potential = np.zeros((3,) + grid.half_shape, dtype=complex)
    for _ in range(blobs):
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        center = rng.uniform(0, grid.L, size=3)
        g = _gaussian_hat(grid, width, center)
        potential += direction[:, None, None, None] * g
    potential[:, 0, 0, 0] = 0
    omega = differential(SpectralVectorField(grid, potential), "curl")
    u = biot_savart(omega)
    size = lebesgue_norm(omega, 1.5)
    return u * (spec.amplitude / size)


def _oscillatory(spec: DataSpec, grid: Grid3) -> SpectralVectorField:
    carrier = spec.param("carrier")
    carrier = max(1, grid.n // 16) if carrier is None else int(carrier)
    width = float(spec.param("width"))
    if not 1 <= carrier < grid.kcut:
        raise ValueError(f"carrier {carrier} outside the resolvable band at n={grid.n}")
    center = np.full(3, grid.L / 2)
    # Gaussian envelope shifted to +-carrier along z, in the x component
    m1, m2, m3 = grid.modes
    k0 = grid.k0
    half = np.zeros((3,) + grid.half_shape, dtype=complex)
    for sign in (1, -1):
        shifted = (m1 * k0) ** 2 + (m2 * k0) ** 2 + ((m3 - sign * carrier) * k0) ** 2
        phase = np.exp(-1j * k0 * ((m1 + m2 + m3) * center[0] - sign * carrier * center[2]))
        half[0] += 0.5 * np.exp(-0.5 * shifted * width**2) * phase
    half = _project(grid, half)
    half[:, 0, 0, 0] = 0
    f = SpectralVectorField(grid, half)
    peak = np.abs(f.physical()).max()
    return f * (spec.amplitude / peak)


_GENERATORS = {
    "random_besov": _random_besov,
    "taylor_green": _taylor_green,
    "vorticity_l32": _vorticity_l32,
    "oscillatory": _oscillatory,
}


def generate_data(spec: DataSpec, grid: Grid3) -> SpectralVectorField:
    """Divergence-free, zero-mean, real initial data; deterministic in ``spec``."""
    if spec.amplitude == 0:
        return SpectralVectorField.zeros(grid, 0.0)
    return _GENERATORS[spec.kind](spec, grid).with_time(0.0)
