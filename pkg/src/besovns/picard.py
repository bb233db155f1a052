"""Fluctuation hierarchy of a Navier-Stokes trajectory.

``u = u_L + w2`` with ``u_L = S(t) u0`` and ``w2 = B(u, u)``; then
``w2 = B(u_L, u_L) + w3``.  The Duhamel terms needed to check the expanded identities
are computed lazily, all in one pass of the integrator over a shared node graph.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np

from .errors import MeshMismatch
from .solver import ComboNode, DuhamelNode, HeatNode, SolutionNode, Trajectory, integrate
from .spectral import l2_norm

# Duhamel terms by name: (left, right) operands
TERMS = {
    "B_uLuL": ("u_L", "u_L"),
    "trilinear": ("u_L", "B_uLuL"),
    "quadrilinear": ("B_uLuL", "B_uLuL"),
    "B_uL_w2": ("u_L", "w2"),
    "B_w2_w2": ("w2", "w2"),
    "B_uL_w3": ("u_L", "w3"),
    "B_B1_w3": ("B_uLuL", "w3"),
    "B_w3_w3": ("w3", "w3"),
}

W2_TERMS = ("B_uLuL", "B_uL_w2", "B_w2_w2")
W3_TERMS = ("trilinear", "quadrilinear", "B_uL_w3", "B_B1_w3", "B_w3_w3")


@dataclass
class IdentityReport:
    identity_id: str
    sup_residual: float
    time_of_sup: float
    residuals: np.ndarray
    mesh: Dict[str, float]

    def to_dict(self) -> dict:
        return {"id": self.identity_id, "sup_residual": self.sup_residual,
                "time_of_sup": self.time_of_sup, "mesh": self.mesh}


class DecompositionSet:
    """Components ``u, u_L, B_uLuL, w2, w3`` on the mesh of ``u``.

    ``trilinear`` and ``quadrilinear`` (and the other expansion terms) are available
    after :meth:`ensure`; ``term(name)`` computes on demand.
    """

    def __init__(self, u: Trajectory):
        if not isinstance(u.source, SolutionNode):
            raise MeshMismatch("decomposition needs a trajectory produced by simulate")
        self.u = u
        self.config = u.config
        sol = u.source
        self._nodes = {"u": sol, "u_L": HeatNode(sol.u0)}
        self._nodes["w2"] = ComboNode([(1.0, sol), (-1.0, self._nodes["u_L"])])
        self._nodes["B_uLuL"] = DuhamelNode(self._nodes["u_L"], self._nodes["u_L"])
        self._nodes["w3"] = ComboNode([(1.0, self._nodes["w2"]), (-1.0, self._nodes["B_uLuL"])])
        for name, (a, b) in TERMS.items():
            if name not in self._nodes:
                self._nodes[name] = DuhamelNode(self._nodes[a], self._nodes[b])
        self._terms: Dict[str, Trajectory] = {"u": u}

    def ensure(self, names: Iterable[str]):
        """Compute every missing named component in a single integrator pass."""
        missing = [n for n in dict.fromkeys(names) if n not in self._terms]
        if not missing:
            return
        roots = [self._nodes[n] for n in missing]
        tags = [n if n in ("u_L", "B_uLuL", "w2", "w3") else "custom" for n in missing]
        for name, traj in zip(missing, integrate(roots, self.config, tags)):
            self._terms[name] = traj

    def term(self, name: str) -> Trajectory:
        self.ensure([name])
        return self._terms[name]

    @property
    def u_L(self) -> Trajectory:
        return self.term("u_L")

    @property
    def B_uLuL(self) -> Trajectory:
        return self.term("B_uLuL")

    @property
    def w2(self) -> Trajectory:
        return self.term("w2")

    @property
    def w3(self) -> Trajectory:
        return self.term("w3")

    @property
    def trilinear(self) -> Optional[Trajectory]:
        return self._terms.get("trilinear")

    @property
    def quadrilinear(self) -> Optional[Trajectory]:
        return self._terms.get("quadrilinear")

    @property
    def times(self) -> np.ndarray:
        return self.u.times

    @property
    def grid(self):
        return self.u.grid


def decompose(u_traj: Trajectory, identity_terms: bool = False) -> DecompositionSet:
    """Build the hierarchy; with ``identity_terms`` also every expansion term up front."""
    d = DecompositionSet(u_traj)
    names = ["u_L", "B_uLuL", "w2", "w3"]
    if identity_terms:
        names += list(W2_TERMS) + list(W3_TERMS)
    d.ensure(names)
    return d


def relative_residuals(lhs: Trajectory, parts: List[Tuple[float, Trajectory]]) -> np.ndarray:
    """``||lhs - sum c_i part_i|| / ||lhs||`` per stored time, 0 when both sides vanish."""
    out = np.zeros(len(lhs))
    for i in range(len(lhs)):
        a = lhs.field(i)
        rhs = parts[0][0] * parts[0][1].field(i)
        for c, p in parts[1:]:
            rhs = rhs + c * p.field(i)
        diff = l2_norm(a - rhs)
        scale = max(l2_norm(a), l2_norm(rhs))
        out[i] = diff / scale if scale > 0 else 0.0
    return out


def _report(identity_id, d: DecompositionSet, res: np.ndarray) -> IdentityReport:
    k = int(np.argmax(res))
    cfg = d.config
    mesh = {"n": d.grid.n, "L": d.grid.L, "dt": cfg.dt, "t_end": cfg.t_end, "snapshots": len(d.times)}
    return IdentityReport(identity_id, float(res[k]), float(d.times[k]), res, mesh)


def verify_w2_identity(d: DecompositionSet) -> IdentityReport:
    """Residual of ``w2 = B(u_L, u_L) + 2 B(u_L, w2) + B(w2, w2)``."""
    d.ensure(("w2",) + W2_TERMS)
    res = relative_residuals(d.w2, [(1.0, d.term("B_uLuL")), (2.0, d.term("B_uL_w2")), (1.0, d.term("B_w2_w2"))])
    return _report("w2_expansion", d, res)


def verify_w3_identity(d: DecompositionSet) -> IdentityReport:
    """Residual of the five-term expansion of ``w3``."""
    d.ensure(("w3",) + W3_TERMS)
    parts = [(2.0, d.term("trilinear")), (1.0, d.term("quadrilinear")), (2.0, d.term("B_uL_w3")),
             (2.0, d.term("B_B1_w3")), (1.0, d.term("B_w3_w3"))]
    return _report("w3_expansion", d, relative_residuals(d.w3, parts))


def verify_decomposition(d: DecompositionSet) -> List[IdentityReport]:
    """Both defining relations ``u = u_L + w2`` and ``w2 = B(u_L, u_L) + w3``."""
    r1 = _report("u_equals_uL_plus_w2", d, relative_residuals(d.u, [(1.0, d.u_L), (1.0, d.w2)]))
    r2 = _report("w2_equals_B1_plus_w3", d, relative_residuals(d.w2, [(1.0, d.B_uLuL), (1.0, d.w3)]))
    return [r1, r2]


def build_split(d: DecompositionSet) -> Tuple[Trajectory, Trajectory]:
    """``v = u_L + B(u_L, u_L) + 2 B(u_L, w2)`` and ``w = B(w2, w2)``; ``v + w = u``."""
    d.ensure(("u_L", "B_uLuL", "B_uL_w2", "B_w2_w2"))
    v = d.u_L + d.term("B_uLuL") + 2.0 * d.term("B_uL_w2")
    w = d.term("B_w2_w2")
    return v.tagged("custom"), w.tagged("custom")


def split_residual(d: DecompositionSet) -> IdentityReport:
    v, w = build_split(d)
    return _report("v_plus_w_equals_u", d, relative_residuals(d.u, [(1.0, v), (1.0, w)]))


def decomposition_report(reports: List[IdentityReport]) -> str:
    return json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=True)
