"""Mild-formulation Navier-Stokes integration and the Duhamel bilinear operator.

Every trajectory produced here remembers how it was generated (its *source node*):
the Navier-Stokes solution from ``u0``, a heat flow, a constant field, a Duhamel term
``B(f, g)`` or a linear combination of those.  Evaluating ``B(f, g)`` replays the sources
of ``f`` and ``g`` through the same exponential integrator that produced them, with
``B`` advanced as the auxiliary equation ``b' = Delta b - P div (f g)_sym``.  Since every
stage of the integrator is linear in (state, forcing), identities such as
``u = S(t) u0 + B(u, u)`` then hold to roundoff instead of quadrature accuracy.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import MeshMismatch, ResolutionExceeded, StepUnstable
from .spectral import (
    Grid3,
    SpectralVectorField,
    bilinear_term,
    dealias,
    gradient_l2_sq,
    l2_norm,
)

INTEGRATORS = ("ETDRK4", "IFRK3")
TAIL_TOL = 1e-6
CFL_MAX = 2.5
GROWTH_MAX = 10.0
_TAYLOR_RADIUS = 1.0
_TAYLOR_TERMS = 20


def phi_functions(z: np.ndarray):
    """``phi_1, phi_2, phi_3`` of the exponential integrators, stable near ``z = 0``.

    Inside ``|z| < 1`` the Taylor series is summed (20 terms); outside, the
    recurrence ``phi_{k+1} = (phi_k - 1/k!) / z`` starting from ``expm1(z) / z``.
    """
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < _TAYLOR_RADIUS
    zs = np.where(small, z, 0.0)
    zb = np.where(small, 1.0, z)
    out = []
    for k in (1, 2, 3):
        acc = np.zeros_like(z)
        for m in range(_TAYLOR_TERMS, -1, -1):
            acc = acc * zs + 1.0 / math.factorial(m + k)
        out.append(acc)
    big1 = np.expm1(zb) / zb
    big2 = (big1 - 1.0) / zb
    big3 = (big2 - 0.5) / zb
    return tuple(np.where(small, s, b) for s, b in zip(out, (big1, big2, big3)))


@dataclass(frozen=True)
class SolverConfig:
    """Time stepping parameters.

    Snapshots are stored at ``snapshot_times`` when given, else every
    ``snapshot_every`` steps of size ``dt`` when given, else on the quadratic cadence
    ``t_k = t_end (k / n_snapshots)^2`` which refines towards ``t = 0``.  Steps are
    shortened so that every snapshot time is hit exactly.
    """

    grid: Grid3
    dt: float
    t_end: float
    snapshot_every: Optional[int] = None
    integrator: str = "ETDRK4"
    dealias: bool = True
    n_snapshots: int = 64
    snapshot_times: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.t_end > 0:
            raise ValueError(f"t_end must be positive, got {self.t_end}")
        if self.integrator not in INTEGRATORS:
            raise ValueError(f"integrator must be one of {INTEGRATORS}, got {self.integrator!r}")
        if self.dt > self.dt_max * (1 + 1e-12):
            raise ValueError(f"dt={self.dt:g} exceeds the stability bound {self.dt_max:g}")
        if self.snapshot_every is not None and self.snapshot_every < 1:
            raise ValueError("snapshot_every must be >= 1")
        if self.snapshot_times is not None:
            times = tuple(float(t) for t in self.snapshot_times)
            if any(b <= a for a, b in zip(times, times[1:])) or times[0] < 0:
                raise ValueError("snapshot_times must be increasing and nonnegative")
            if times[0] > 0:
                times = (0.0,) + times
            object.__setattr__(self, "snapshot_times", times)
            object.__setattr__(self, "t_end", times[-1])

    @property
    def dt_max(self) -> float:
        """``2 / max resolved |k|^2``."""
        g = self.grid
        k2 = g.k2[g.dealias_mask] if self.dealias else g.k2
        return 2.0 / float(k2.max())

    def targets(self) -> np.ndarray:
        if self.snapshot_times is not None:
            return np.array(self.snapshot_times)
        if self.snapshot_every is not None:
            steps = math.ceil(self.t_end / self.dt - 1e-9)
            idx = list(range(0, steps, self.snapshot_every)) + [steps]
            return np.array(idx) * (self.t_end / steps)
        k = np.arange(self.n_snapshots + 1)
        return self.t_end * (k / self.n_snapshots) ** 2

    def mesh(self) -> Tuple[np.ndarray, np.ndarray]:
        """Step times (starting at 0) and the indices of the stored snapshots among them."""
        targets = self.targets()
        times = [0.0]
        snaps = [0]
        for a, b in zip(targets[:-1], targets[1:]):
            m = max(1, math.ceil((b - a) / self.dt - 1e-9))
            times.extend(a + (b - a) * np.arange(1, m + 1) / m)
            times[-1] = float(b)
            snaps.append(len(times) - 1)
        return np.array(times), np.array(snaps)


# ---------------------------------------------------------------------------
# source nodes


class Node:
    """A replayable recipe for a trajectory; compared by identity."""

    evolved = False
    children: Tuple["Node", ...] = ()

    def __hash__(self):
        return id(self)

    def __eq__(self, other):
        return self is other


class SolutionNode(Node):
    """Navier-Stokes solution with initial data ``u0``."""

    evolved = True

    def __init__(self, u0: SpectralVectorField):
        self.u0 = u0


class HeatNode(Node):
    """``S(t) f0``."""

    evolved = True

    def __init__(self, f0: SpectralVectorField):
        self.f0 = f0


class ConstantNode(Node):
    def __init__(self, f0: SpectralVectorField):
        self.f0 = f0


class DuhamelNode(Node):
    """``B(a, b)`` advanced with the integrator (exact consistency with the solver)."""

    evolved = True

    def __init__(self, a: Node, b: Node):
        self.children = (a, b)


class QuadratureNode(Node):
    """``B(a, b)`` by exponential quadrature of the forcing sampled at step points.

    Third-order accurate (quadratic interpolation through the last three samples); an
    independent cross-check of :class:`DuhamelNode`.
    """

    def __init__(self, a: Node, b: Node):
        self.children = (a, b)


class ComboNode(Node):
    def __init__(self, terms: Sequence[Tuple[float, Node]]):
        self.terms = tuple((float(c), n) for c, n in terms)
        self.children = tuple(n for _, n in self.terms)


def _toposort(roots: Sequence[Node]) -> List[Node]:
    order, seen = [], set()

    def visit(node):
        if node in seen:
            return
        seen.add(node)
        for child in node.children:
            visit(child)
        order.append(node)

    for r in roots:
        visit(r)
    return order


# ---------------------------------------------------------------------------
# trajectories


class _FieldView(Sequence):
    def __init__(self, traj):
        self._traj = traj

    def __len__(self):
        return len(self._traj.times)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self._traj.field(k) for k in range(len(self))[i]]
        return self._traj.field(i)


class Trajectory:
    """Time-stamped snapshots of fields on one grid.

    Snapshots confined to the 2/3-rule band are stored compactly.  ``fields`` is a
    lazy sequence of :class:`SpectralVectorField`; ``field(i)`` builds one snapshot.
    """

    def __init__(self, times, data, grid: Grid3, config: Optional[SolverConfig] = None,
                 component_tag: str = "custom", source: Optional[Node] = None, compact: Optional[bool] = None):
        times = np.asarray(times, dtype=float)
        if times.ndim != 1 or len(times) == 0:
            raise ValueError("need a nonempty 1-D time array")
        if np.any(np.diff(times) <= 0):
            raise ValueError("times must be strictly increasing")
        if compact is None:
            data, compact = _compress(grid, np.asarray(data))
        times.flags.writeable = False
        self.times = times
        self.grid = grid
        self.config = config
        self.component_tag = component_tag
        self.source = source
        self.diagnostics: Dict[str, float] = {}
        self._data = data
        self._compact = compact

    @classmethod
    def from_fields(cls, fields: Sequence[SpectralVectorField], times=None, **kw) -> "Trajectory":
        fields = list(fields)
        grid = fields[0].grid
        if times is None:
            times = [f.time_tag for f in fields]
        data = np.stack([f.half for f in fields])
        return cls(times, data, grid, **kw)

    def __len__(self):
        return len(self.times)

    def half(self, i: int) -> np.ndarray:
        if self._compact:
            return _expand(self.grid, self._data[i])
        return self._data[i]

    def field(self, i: int) -> SpectralVectorField:
        return SpectralVectorField(self.grid, self.half(i), float(self.times[i]))

    @property
    def fields(self) -> Sequence[SpectralVectorField]:
        return _FieldView(self)

    def index(self, t: float) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-12 * max(1.0, abs(t)):
            raise KeyError(f"time {t} is not a stored snapshot")
        return i

    def at(self, t: float) -> SpectralVectorField:
        return self.field(self.index(t))

    @property
    def u0(self) -> SpectralVectorField:
        return self.field(0)

    def series(self, func) -> np.ndarray:
        return np.array([func(self.field(i)) for i in range(len(self))])

    def divergence_defect(self) -> float:
        return max(self.field(i).divergence_defect() for i in range(len(self)))

    def _same_mesh(self, other: "Trajectory"):
        if self.grid != other.grid or len(self.times) != len(other.times) or np.any(self.times != other.times):
            raise MeshMismatch("trajectories do not share a time mesh")

    def _combine(self, other, a, b, tag="custom"):
        self._same_mesh(other)
        if self._compact == other._compact:
            data, compact = a * self._data + b * other._data, self._compact
        else:
            data = np.stack([a * self.half(i) + b * other.half(i) for i in range(len(self))])
            compact = None
        source = None
        if self.source is not None and other.source is not None:
            source = ComboNode([(a, self.source), (b, other.source)])
        config = self.config if self.config == other.config else None
        return Trajectory(self.times, data, self.grid, config, tag, source, compact)

    def __add__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return self._combine(other, 1.0, 1.0)

    def __sub__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return self._combine(other, 1.0, -1.0)

    def __mul__(self, c):
        if not np.isscalar(c):
            return NotImplemented
        source = None if self.source is None else ComboNode([(c, self.source)])
        return Trajectory(self.times, c * self._data, self.grid, self.config, "custom", source, self._compact)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def tagged(self, tag: str) -> "Trajectory":
        out = Trajectory(self.times, self._data, self.grid, self.config, tag, self.source, self._compact)
        out.diagnostics = dict(self.diagnostics)
        return out

    def __repr__(self):
        return (f"Trajectory({self.component_tag}, n={self.grid.n}, snapshots={len(self)}, "
                f"t=[{self.times[0]:g}, {self.times[-1]:g}])")


def _band_index(grid: Grid3):
    n, kc = grid.n, grid.kcut
    ax = np.r_[0 : kc + 1, n - kc : n]
    return np.ix_(ax, ax, np.arange(kc + 1))


def _compress(grid: Grid3, data: np.ndarray):
    idx = _band_index(grid)
    inside = np.zeros(grid.half_shape, dtype=bool)
    inside[idx] = True
    if np.any(data[..., ~inside]):
        return np.array(data, dtype=complex), False
    return np.ascontiguousarray(data[(Ellipsis,) + idx]), True


def _expand(grid: Grid3, compact: np.ndarray) -> np.ndarray:
    out = np.zeros(compact.shape[:-3] + grid.half_shape, dtype=complex)
    out[(Ellipsis,) + _band_index(grid)] = compact
    return out


# ---------------------------------------------------------------------------
# the integration engine


class _Coefficients:
    def __init__(self, grid: Grid3, h: float, integrator: str):
        z = -grid.k2 * h
        self.h = h
        self.E = np.exp(z)
        self.E2 = np.exp(z / 2)
        if integrator == "ETDRK4":
            p1, p2, p3 = phi_functions(z)
            self.Q = 0.5 * h * phi_functions(z / 2)[0]
            self.f1 = h * (p1 - 3 * p2 + 4 * p3)
            self.f2 = h * (p2 - 2 * p3)
            self.f3 = h * (4 * p3 - p2)
        else:
            self.E2inv = np.exp(-z / 2)


class _Quadrature:
    """Exponential quadrature state for one :class:`QuadratureNode`."""

    def __init__(self, shape):
        self.value = np.zeros(shape, dtype=complex)
        self.samples: List[Tuple[float, np.ndarray]] = []

    def push(self, grid, t, forcing):
        self.samples.append((t, forcing))
        if len(self.samples) >= 2:
            (t0, f0), (t1, f1) = self.samples[-2:]
            h = t1 - t0
            z = -grid.k2 * h
            p1, p2, p3 = phi_functions(z)
            if len(self.samples) == 2:
                inc = h * p1 * f0 + h * p2 * (f1 - f0)
            else:
                tm, fm = self.samples[-3]
                # quadratic through (-hm, fm), (0, f0), (h, f1) in tau = t - t0
                hm = t0 - tm
                c1 = (f1 - f0) / h
                cm = (f0 - fm) / hm
                c2 = (c1 - cm) / (h + hm)
                slope = c1 - c2 * h
                inc = h * p1 * f0 + h * h * p2 * slope + 2 * h**3 * p3 * c2
            self.value = np.exp(z) * self.value + inc
            self.samples = self.samples[-2:]


class _Engine:
    def __init__(self, roots: Sequence[Node], cfg: SolverConfig):
        self.cfg = cfg
        self.grid = cfg.grid
        self.order = _toposort(roots)
        self.roots = list(roots)
        self.evolved = [n for n in self.order if n.evolved]
        self.quads = {n: _Quadrature((3,) + self.grid.half_shape) for n in self.order if isinstance(n, QuadratureNode)}
        self.solutions = [n for n in self.order if isinstance(n, SolutionNode)]
        self.mask = self.grid.dealias_mask if cfg.dealias else None

    def _initial(self, node):
        if isinstance(node, SolutionNode):
            u0 = node.u0
            return np.array(u0.half * self.mask if self.mask is not None else u0.half)
        if isinstance(node, HeatNode):
            return np.array(node.f0.half)
        return np.zeros((3,) + self.grid.half_shape, dtype=complex)

    def _values(self, states):
        vals = {}
        for node in self.order:
            if node.evolved:
                vals[node] = states[node]
            elif isinstance(node, ConstantNode):
                vals[node] = node.f0.half
            elif isinstance(node, ComboNode):
                acc = 0
                for c, child in node.terms:
                    acc = acc + c * vals[child]
                vals[node] = acc
            elif isinstance(node, QuadratureNode):
                vals[node] = self.quads[node].value
        return vals

    def _forcing(self, vals, nodes):
        phys = {}

        def physical(node):
            if node not in phys:
                phys[node] = self.grid.to_physical(vals[node])
            return phys[node]

        out = {}
        for node in nodes:
            if isinstance(node, SolutionNode):
                a = b = physical(node)
            elif isinstance(node, (DuhamelNode, QuadratureNode)):
                a, b = (physical(c) for c in node.children)
            else:
                continue
            out[node] = -bilinear_term(self.grid, a, b, self.cfg.dealias)
        return out, phys

    def run(self, stop: Optional[int] = None):
        cfg, grid = self.cfg, self.grid
        times, snaps = cfg.mesh()
        if stop is not None:
            snaps = snaps[: stop + 1]
            times = times[: snaps[-1] + 1]
        states = {n: self._initial(n) for n in self.evolved}
        records = {r: [] for r in self.roots}
        snapset = {int(i): k for k, i in enumerate(snaps)}
        coeffs = None
        energy = {n: {"dissipation": 0.0, "prev": None} for n in self.solutions}
        kmax = grid.k0 * (grid.kcut if cfg.dealias else grid.n // 2)
        max_cfl = 0.0
        forcing_nodes = [n for n in self.order if isinstance(n, (SolutionNode, DuhamelNode, QuadratureNode))]
        for i, t in enumerate(times):
            vals = self._values(states)
            need_all = i < len(times) - 1
            F0, phys = self._forcing(vals, forcing_nodes if need_all else
                                     [n for n in forcing_nodes if not isinstance(n, DuhamelNode)])
            for node, quad in self.quads.items():
                quad.push(grid, t, F0[node])
            for node in self.solutions:
                self._energy(energy[node], t, states[node], F0[node])
            if i in snapset:
                vals = self._values(states)
                for r in self.roots:
                    records[r].append(_compress(grid, vals[r]))
            if not need_all:
                break
            h = times[i + 1] - t
            if coeffs is None or abs(coeffs.h - h) > 1e-14 * h:
                coeffs = _Coefficients(grid, h, cfg.integrator)
            for node in self.solutions:
                u = phys[node]
                cfl = h * kmax * float(sum(np.abs(u[c]).max() for c in range(3)))
                max_cfl = max(max_cfl, cfl)
                if cfl > CFL_MAX:
                    raise StepUnstable(f"convective CFL {cfl:.2f} exceeds {CFL_MAX} at t={t:g}")
            old = {n: states[n] for n in self.solutions}
            if cfg.integrator == "ETDRK4":
                states = self._etdrk4(states, F0, coeffs, forcing_nodes)
            else:
                states = self._ifrk3(states, F0, coeffs, forcing_nodes)
            for node in self.solutions:
                before, after = np.abs(old[node]).max(), np.abs(states[node]).max()
                if not np.isfinite(after) or after > GROWTH_MAX * max(before, np.finfo(float).tiny):
                    raise StepUnstable(f"solution grew from {before:.3e} to {after:.3e} in one step at t={t:g}")
        snap_times = times[snaps]
        out = {}
        for r in self.roots:
            if all(c for _, c in records[r]):
                out[r] = (snap_times, np.stack([d for d, _ in records[r]]), True)
            else:
                out[r] = (snap_times, np.stack([d if not c else _expand(grid, d) for d, c in records[r]]), False)
        diag = {"steps": len(times) - 1, "max_cfl": max_cfl}
        for node, e in energy.items():
            diag["dissipation"] = e["dissipation"]
        return out, diag

    def _energy(self, acc, t, u, F):
        g = self.grid
        D = g.wsum(g.k2 * np.sum(np.abs(u) ** 2, axis=0))
        ut = -g.k2 * u + F
        dD = 2 * g.wsum(g.k2 * np.real(np.sum(np.conj(u) * ut, axis=0)))
        if acc["prev"] is not None:
            t0, D0, dD0 = acc["prev"]
            h = t - t0
            acc["dissipation"] += 0.5 * h * (D0 + D) + h * h / 12.0 * (dD0 - dD)
        acc["prev"] = (t, D, dD)

    def _stage(self, states, forcing_nodes):
        vals = self._values(states)
        F, _ = self._forcing(vals, [n for n in forcing_nodes if n.evolved])
        return F

    def _etdrk4(self, s0, F0, c, forcing_nodes):
        zero = 0
        a = {n: c.E2 * s0[n] + c.Q * F0.get(n, zero) for n in self.evolved}
        Fa = self._stage(a, forcing_nodes)
        b = {n: c.E2 * s0[n] + c.Q * Fa.get(n, zero) for n in self.evolved}
        Fb = self._stage(b, forcing_nodes)
        cc = {n: c.E2 * a[n] + c.Q * (2 * Fb.get(n, zero) - F0.get(n, zero)) for n in self.evolved}
        Fc = self._stage(cc, forcing_nodes)
        out = {}
        for n in self.evolved:
            if n in F0:
                out[n] = c.E * s0[n] + c.f1 * F0[n] + 2 * c.f2 * (Fa[n] + Fb[n]) + c.f3 * Fc[n]
            else:
                out[n] = c.E * s0[n]
        return out

    def _ifrk3(self, s0, F0, c, forcing_nodes):
        h, zero = c.h, 0
        u1 = {n: c.E * (s0[n] + h * F0.get(n, zero)) for n in self.evolved}
        F1 = self._stage(u1, forcing_nodes)
        u2 = {n: 0.75 * c.E2 * s0[n] + 0.25 * c.E2inv * (u1[n] + h * F1.get(n, zero)) for n in self.evolved}
        F2 = self._stage(u2, forcing_nodes)
        return {n: (c.E * s0[n]) / 3.0 + (2.0 / 3.0) * c.E2 * (u2[n] + h * F2.get(n, zero)) for n in self.evolved}


def integrate(roots: Sequence[Node], cfg: SolverConfig, tags: Optional[Sequence[str]] = None,
              stop: Optional[int] = None) -> List[Trajectory]:
    """Advance every node reachable from ``roots`` together and return their trajectories."""
    engine = _Engine(roots, cfg)
    results, diag = engine.run(stop)
    tags = tags or ["custom"] * len(roots)
    out = []
    for r, tag in zip(roots, tags):
        times, data, compact = results[r]
        traj = Trajectory(times, data, cfg.grid, cfg, tag, r, compact)
        traj.diagnostics.update(diag)
        out.append(traj)
    return out


# ---------------------------------------------------------------------------
# public operations


def check_resolution(u0: SpectralVectorField, tol: float = TAIL_TOL):
    tail = u0.spectral_tail()
    if tail > tol:
        raise ResolutionExceeded(
            f"spectral tail {tail:.3e} at the dealiasing boundary exceeds {tol:g}; refine the grid"
        )
    return tail


def default_dt(grid: Grid3) -> float:
    """Largest admissible step, rounded down to two significant digits."""
    bound = SolverConfig(grid, 1e-300, 1.0).dt_max
    scale = 10 ** math.floor(math.log10(bound))
    return math.floor(bound / scale * 10) / 10 * scale


def _require_solenoidal(u0: SpectralVectorField, tol=1e-10):
    defect = u0.divergence_defect()
    if defect > tol:
        raise ValueError(f"initial data is not divergence free (defect {defect:.3e})")


def linear_flow(u0: SpectralVectorField, times: Sequence[float], dt: Optional[float] = None) -> Trajectory:
    """``S(t) u0`` evaluated exactly per mode at ``times`` (which must start at 0)."""
    _require_solenoidal(u0)
    times = np.asarray(times, dtype=float)
    if times[0] != 0:
        raise ValueError("linear flow trajectories start at t = 0")
    g = u0.grid
    data = np.stack([u0.half * np.exp(-g.k2 * t) for t in times])
    cfg = None
    if len(times) > 1:
        cfg = SolverConfig(g, dt or default_dt(g), float(times[-1]), snapshot_times=tuple(times))
    return Trajectory(times, data, g, cfg, "u_L", HeatNode(u0))


def constant_trajectory(f: SpectralVectorField, cfg: SolverConfig) -> Trajectory:
    times = cfg.targets()
    data = np.broadcast_to(f.half, (len(times),) + f.half.shape)
    return Trajectory(times, data, f.grid, cfg, "custom", ConstantNode(f))


def heat_trajectory(f: SpectralVectorField, cfg: SolverConfig) -> Trajectory:
    traj = linear_flow(f, cfg.targets())
    return Trajectory(traj.times, traj._data, f.grid, cfg, "u_L", traj.source, traj._compact)


def simulate(u0: SpectralVectorField, cfg: SolverConfig) -> Trajectory:
    """Dealiased pseudo-spectral solution of Navier-Stokes (viscosity 1) from ``u0``.

    ``diagnostics`` of the returned trajectory holds the energy-balance residual
    ``(||u(T)||^2 - ||u0||^2 + 2 int ||grad u||^2) / ||u0||^2`` among others.
    """
    if u0.grid != cfg.grid:
        raise ValueError("initial data and configuration use different grids")
    _require_solenoidal(u0)
    check_resolution(u0)
    if cfg.dealias:
        u0 = dealias(u0)
    (traj,) = integrate([SolutionNode(u0)], cfg, ["u"])
    e0 = l2_norm(u0) ** 2
    eT = l2_norm(traj.field(len(traj) - 1)) ** 2
    dissipation = traj.diagnostics.get("dissipation", 0.0)
    traj.diagnostics["energy_residual"] = (eT - e0 + 2 * dissipation) / e0 if e0 > 0 else 0.0
    return traj


def _replay_config(f: Trajectory, g: Trajectory) -> SolverConfig:
    f._same_mesh(g)
    if f.config is None or g.config is None or f.config != g.config:
        raise MeshMismatch("trajectories were produced with different solver configurations")
    return f.config


def duhamel_trajectory(f: Trajectory, g: Trajectory, tag: str = "custom") -> Trajectory:
    """``B(f, g)`` at every stored time of the common mesh of ``f`` and ``g``."""
    if f.source is None or g.source is None:
        return duhamel_quadrature(f, g, tag)
    cfg = _replay_config(f, g)
    return integrate([DuhamelNode(f.source, g.source)], cfg, [tag])[0]


def duhamel_B(f: Trajectory, g: Trajectory, t: float) -> SpectralVectorField:
    """``B(f, g)(t) = -int_0^t S(t - s) P div (f g)_sym(s) ds``.

    ``t`` must be a stored time of the common mesh; only the steps up to ``t`` are run.
    """
    if f.source is None or g.source is None:
        return duhamel_quadrature(f, g).at(t)
    cfg = _replay_config(f, g)
    k = f.index(t)
    (traj,) = integrate([DuhamelNode(f.source, g.source)], cfg, stop=k)
    return traj.field(k)


def duhamel_quadrature(f: Trajectory, g: Trajectory, tag: str = "custom") -> Trajectory:
    """Cross-check of ``B(f, g)`` by exponential quadrature of the sampled forcing.

    Replayable trajectories are sampled at every integrator step; otherwise only the
    stored snapshots are available and the quadrature runs on that mesh.
    """
    if f.source is not None and g.source is not None:
        cfg = _replay_config(f, g)
        return integrate([QuadratureNode(f.source, g.source)], cfg, [tag])[0]
    f._same_mesh(g)
    grid = f.grid
    quad = _Quadrature((3,) + grid.half_shape)
    data = []
    for i, t in enumerate(f.times):
        a = grid.to_physical(f.half(i))
        b = grid.to_physical(g.half(i))
        quad.push(grid, t, -bilinear_term(grid, a, b))
        data.append(np.array(quad.value))
    return Trajectory(f.times, np.stack(data), grid, f.config, tag, None)


def energy_balance(traj: Trajectory) -> float:
    """Relative residual of ``||u(t)||^2 - ||u0||^2 + 2 int_0^t ||grad u||^2``, trapezoid over snapshots.

    A coarse check on stored snapshots; :func:`simulate` records the step-level value.
    """
    e = traj.series(lambda f: l2_norm(f) ** 2)
    d = traj.series(gradient_l2_sq)
    integral = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(traj.times) * (d[1:] + d[:-1]))])
    if e[0] == 0:
        return 0.0
    return float(np.max(np.abs(e - e[0] + 2 * integral)) / e[0])
