"""Homogeneous Besov, Chemin-Lerner, Lebesgue and Serrin norms.

Besov norms are available through both characterizations: the heat-flow integral
``int sigma^{-sq/2} ||Q(sigma) f||_p^q dsigma/sigma`` and the dyadic sequence
``(2 pi 2^j / L)^s ||Delta_j f||_p`` summed in ``l^q`` over the resolvable blocks.
All Lebesgue norms use the normalized measure ``L^-3 dx``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import UnderResolvedQuadrature
from .spectral import Grid3, SpectralVectorField, lp_symbol

INF = math.inf


def _fmt(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if float(x).is_integer():
        return str(int(x))
    return repr(float(x))


def _inv(x: float) -> float:
    return 0.0 if math.isinf(x) else 1.0 / x


@dataclass(frozen=True)
class BesovSpec:
    """Index triple ``(s, p, q)`` of the homogeneous Besov space."""

    s: float
    p: float
    q: float

    def __post_init__(self):
        if not self.p >= 1:
            raise ValueError(f"p must be >= 1, got {self.p}")
        if not self.q >= 1:
            raise ValueError(f"q must be >= 1, got {self.q}")

    @classmethod
    def critical(cls, p: float, q: float = INF) -> "BesovSpec":
        """The scale-(-1) space with ``s - 3/p = -1`` (``B_p`` when ``q`` is infinite)."""
        return cls(3.0 * _inv(p) - 1.0, p, q)

    @property
    def norm_id(self) -> str:
        return f"B({_fmt(self.s)},{_fmt(self.p)},{_fmt(self.q)})"


@dataclass(frozen=True)
class ChLSpec:
    """Chemin-Lerner index ``(rho, s, p, q)`` over the time interval ``[a, b]``."""

    rho: float
    s: float
    p: float
    q: float
    interval: Tuple[float, float]

    def __post_init__(self):
        a, b = self.interval
        if not self.rho >= 1:
            raise ValueError(f"rho must be >= 1, got {self.rho}")
        if not (b > a >= 0):
            raise ValueError(f"need b > a >= 0, got interval {self.interval}")
        BesovSpec(self.s, self.p, self.q)

    @classmethod
    def critical(cls, rho: float, p: float, interval, q: float = INF) -> "ChLSpec":
        """Shorthand space with ``s = -1 + 3/p + 2/rho``."""
        return cls(rho, -1.0 + 3.0 * _inv(p) + 2.0 * _inv(rho), p, q, tuple(interval))

    @property
    def spatial(self) -> BesovSpec:
        return BesovSpec(self.s, self.p, self.q)

    @property
    def norm_id(self) -> str:
        return f"ChL({_fmt(self.rho)},{_fmt(self.s)},{_fmt(self.p)},{_fmt(self.q)})"


def lp_norm_id(p: float) -> str:
    return f"Lp({_fmt(p)})"


def serrin_norm_id(p_t: float, q_x: float) -> str:
    return f"Serrin({_fmt(p_t)},{_fmt(q_x)})"


@dataclass(frozen=True)
class QuadratureCfg:
    """Log-spaced sigma nodes for the heat-flow characterization."""

    sigma_min: float
    sigma_max: float
    nodes: int

    def __post_init__(self):
        if not 0 < self.sigma_min < self.sigma_max:
            raise ValueError("need 0 < sigma_min < sigma_max")
        if self.nodes < 16:
            raise ValueError(f"need at least 16 quadrature nodes, got {self.nodes}")

    @classmethod
    def for_grid(cls, grid: Grid3, per_decade: int = 16, field: Optional[SpectralVectorField] = None):
        """Nodes bracketing every resolved scale of ``grid`` (and of ``field`` if given).

        The bracket always contains ``[(L / 2 pi n)^2, L^2]``; with a field it is widened
        until the symbol of ``Q`` is negligible at both ends of its spectral support.
        """
        lo = (grid.L / (2 * math.pi * grid.n)) ** 2
        hi = grid.L**2
        if field is not None:
            support = np.any(field.half != 0, axis=0)
            if support.any():
                k2 = grid.k2[support]
                lo = min(lo, 1e-3 / k2.max())
                hi = max(hi, 40.0 / k2.min())
        decades = math.log10(hi / lo)
        return cls(lo, hi, max(16, int(math.ceil(decades * per_decade)) + 1))

    @property
    def sigmas(self) -> np.ndarray:
        return np.logspace(math.log10(self.sigma_min), math.log10(self.sigma_max), self.nodes)

    def refined(self, factor: int = 4) -> "QuadratureCfg":
        return QuadratureCfg(self.sigma_min, self.sigma_max, (self.nodes - 1) * factor + 1)


def _magnitude(phys: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(phys * phys, axis=0))


def _lp_of_magnitude(mag: np.ndarray, p: float) -> float:
    if math.isinf(p):
        return float(mag.max())
    return float(np.mean(mag**p) ** (1.0 / p))


def lebesgue_norm(f: SpectralVectorField, p: float) -> float:
    """``||f||_p`` of the pointwise Euclidean magnitude, normalized measure."""
    if not p >= 1:
        raise ValueError(f"p must be >= 1, got {p}")
    return _lp_of_magnitude(_magnitude(f.physical()), p)


def heat_profile(f: SpectralVectorField, sigmas: np.ndarray, ps: Sequence[float]) -> np.ndarray:
    """``||Q(sigma) f||_p`` for every ``p`` in ``ps`` and sigma node; shape ``(len(ps), nodes)``."""
    g = f.grid
    out = np.zeros((len(ps), len(sigmas)))
    if not np.any(f.half):
        return out
    spectral_only = all(p == 2 for p in ps)
    power = np.sum(np.abs(f.half) ** 2, axis=0) if spectral_only else None
    for i, sigma in enumerate(sigmas):
        sym = -sigma * g.k2 * np.exp(-sigma * g.k2)
        if spectral_only:
            out[:, i] = math.sqrt(g.wsum(sym * sym * power))
            continue
        mag = _magnitude(g.to_physical(f.half * sym))
        for a, p in enumerate(ps):
            out[a, i] = _lp_of_magnitude(mag, p)
    return out


def _refined_max(x: np.ndarray, g: np.ndarray) -> float:
    """Maximum of samples refined by a parabola through the top node and its neighbours in log g."""
    i = int(np.argmax(g))
    if i == 0 or i == len(g) - 1 or np.any(g[i - 1 : i + 2] <= 0):
        return float(g[i])
    y0, y1, y2 = np.log(g[i - 1 : i + 2])
    h = x[i + 1] - x[i]
    curv = y0 - 2 * y1 + y2
    if curv >= 0 or abs(x[i] - x[i - 1] - h) > 1e-9 * abs(h):
        return float(g[i])
    shift = 0.5 * (y0 - y2) / curv
    return float(np.exp(y1 - 0.25 * (y0 - y2) * shift))


def _sigma_integral(sigmas: np.ndarray, norms: np.ndarray, s: float, q: float, label: str) -> float:
    g = sigmas ** (-s / 2.0) * norms
    peak = g.max()
    if peak == 0:
        return 0.0
    if math.isinf(q):
        integrand, value = g, _refined_max(np.log(sigmas), g)
    else:
        integrand = (g / peak) ** q
        value = peak * np.trapezoid(integrand, np.log(sigmas)) ** (1.0 / q)
    if math.isinf(q):
        unresolved = int(np.argmax(g)) in (0, len(g) - 1)
    else:
        unresolved = max(integrand[0], integrand[-1]) > 0.01 * integrand.max()
    if unresolved:
        warnings.warn(f"sigma quadrature under-resolved for {label}", UnderResolvedQuadrature, stacklevel=3)
    return float(value)


def besov_norms_heat(
    f: SpectralVectorField, specs: Sequence[BesovSpec], cfg: Optional[QuadratureCfg] = None
) -> list:
    """Heat-flow Besov norms of one field for several specs, sharing the transforms."""
    cfg = cfg or QuadratureCfg.for_grid(f.grid, field=f)
    sigmas = cfg.sigmas
    ps = sorted({spec.p for spec in specs})
    prof = heat_profile(f, sigmas, ps)
    return [_sigma_integral(sigmas, prof[ps.index(spec.p)], spec.s, spec.q, spec.norm_id) for spec in specs]


def besov_norm_heat(f: SpectralVectorField, spec: BesovSpec, cfg: Optional[QuadratureCfg] = None) -> float:
    return besov_norms_heat(f, [spec], cfg)[0]


def lp_profile(f: SpectralVectorField, ps: Sequence[float]) -> np.ndarray:
    """``||Delta_j f||_p`` for every ``p`` and resolvable ``j``; shape ``(len(ps), J)``."""
    g = f.grid
    js = g.j_range
    out = np.zeros((len(ps), len(js)))
    if not np.any(f.half):
        return out
    for i, j in enumerate(js):
        mag = _magnitude(g.to_physical(f.half * lp_symbol(g, j)))
        for a, p in enumerate(ps):
            out[a, i] = _lp_of_magnitude(mag, p)
    return out


def _sequence_norm(grid: Grid3, blocks: np.ndarray, s: float, q: float) -> float:
    scales = np.array([grid.dyadic_scale(j) for j in grid.j_range])
    seq = scales**s * blocks
    if math.isinf(q):
        return float(seq.max(initial=0.0))
    return float(np.sum(seq**q) ** (1.0 / q))


def besov_norms_lp(f: SpectralVectorField, specs: Sequence[BesovSpec]) -> list:
    ps = sorted({spec.p for spec in specs})
    prof = lp_profile(f, ps)
    return [_sequence_norm(f.grid, prof[ps.index(spec.p)], spec.s, spec.q) for spec in specs]


def besov_norm_lp(f: SpectralVectorField, spec: BesovSpec) -> float:
    """Dyadic Besov norm, truncated to the resolvable blocks ``grid.j_range``."""
    return besov_norms_lp(f, [spec])[0]


def _time_norm(times: np.ndarray, values: np.ndarray, rho: float) -> np.ndarray:
    """L^rho in time along axis 0 by trapezoid (max for rho infinite)."""
    if math.isinf(rho):
        return values.max(axis=0)
    return np.trapezoid(values**rho, times, axis=0) ** (1.0 / rho)


def _window(traj, interval):
    a, b = interval
    times = np.asarray(traj.times)
    keep = (times >= a - 1e-12) & (times <= b + 1e-12)
    return times[keep], [traj.field(i) for i in np.flatnonzero(keep)]


def chemin_lerner_norm(traj, spec: ChLSpec, cfg: Optional[QuadratureCfg] = None) -> float:
    """``|| sigma^{-s/2} ||Q(sigma) u||_{L^rho([a,b]; L^p)} ||_{L^q(dsigma/sigma)}``."""
    times, fields = _window(traj, spec.interval)
    if len(times) < 2:
        raise ValueError("Chemin-Lerner norm needs at least two snapshots in the interval")
    if len(times) < 8:
        warnings.warn(f"only {len(times)} snapshots in {spec.interval}", UnderResolvedQuadrature, stacklevel=2)
    if cfg is None:
        nonzero = [f for f in fields if np.any(f.half)]
        if not nonzero:
            return 0.0
        cfg = QuadratureCfg.for_grid(fields[0].grid, field=_support_union(nonzero))
    sigmas = cfg.sigmas
    prof = np.stack([heat_profile(f, sigmas, [spec.p])[0] for f in fields])
    return _sigma_integral(sigmas, _time_norm(times, prof, spec.rho), spec.s, spec.q, spec.norm_id)


def _support_union(fields):
    half = np.zeros_like(fields[0].half)
    for f in fields:
        half = half + (f.half != 0)
    return SpectralVectorField(fields[0].grid, half)


def serrin_norm(traj, p_t: float, q_x: float) -> float:
    """``||u||_{L^{p_t}(0,T; L^{q_x})}`` on the Serrin line ``2/p_t + 3/q_x = 1``, ``q_x > 3``."""
    if not q_x > 3 or abs(2.0 * _inv(p_t) + 3.0 * _inv(q_x) - 1.0) > 1e-12:
        raise ValueError(f"({p_t}, {q_x}) is not on the Serrin line 2/p + 3/q = 1 with q > 3")
    times = np.asarray(traj.times)
    values = np.array([lebesgue_norm(traj.field(i), q_x) for i in range(len(times))])
    return float(_time_norm(times, values, p_t))


def interpolation_check(
    f: SpectralVectorField, outer: Tuple[BesovSpec, BesovSpec], inner: BesovSpec, theta: float
) -> float:
    """``||f||_inner / (||f||_A^theta ||f||_B^(1 - theta))`` with dyadic norms."""
    a, b = outer
    if not 0 <= theta <= 1:
        raise ValueError("theta must lie in [0, 1]")
    checks = (
        (inner.s, theta * a.s + (1 - theta) * b.s),
        (_inv(inner.p), theta * _inv(a.p) + (1 - theta) * _inv(b.p)),
        (_inv(inner.q), theta * _inv(a.q) + (1 - theta) * _inv(b.q)),
    )
    if any(abs(x - y) > 1e-9 for x, y in checks):
        raise ValueError("inner space is not the convex combination of the outer pair")
    na, nb, ni = besov_norms_lp(f, [a, b, inner])
    denom = na**theta * nb ** (1 - theta)
    if denom == 0:
        return 0.0 if ni == 0 else math.inf
    return ni / denom
