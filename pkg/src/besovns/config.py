"""Flat ``key = value`` experiment configuration with dotted keys.

Values are JSON scalars or lists (``64``, ``0.5``, ``true``, ``[1, 2]``, ``"text"``);
anything that is not valid JSON is read as a bare string.  ``#`` starts a comment.

Recognized keys::

    grid.n, grid.L
    solver.dt, solver.t_end, solver.integrator, solver.dealias,
    solver.n_snapshots, solver.snapshot_every
    seed
    data.kind, data.amplitude, data.seed, data.<param>
    verify                      list of verification ids
    verify.<id>.<param>         parameters of one verification
    bilinear.lemma, bilinear.samples, bilinear.seed, bilinear.n
    outputs.dir, outputs.snapshots, outputs.norms, outputs.cadence
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Tuple

from .data import KINDS, DataSpec
from .errors import ConfigError
from .solver import SolverConfig, default_dt
from .spectral import Grid3

VERIFICATIONS = (
    "energy_inequality",
    "scaled_energy",
    "w3_bound",
    "holder",
    "keyprop_split",
    "freq_split",
    "w2_identity",
    "w3_identity",
    "split_identity",
    "mild_identity",
)

GRID_KEYS = {"n", "L"}
SOLVER_KEYS = {"dt", "t_end", "integrator", "dealias", "n_snapshots", "snapshot_every"}
OUTPUT_KEYS = {"dir", "snapshots", "norms", "cadence"}
BILINEAR_KEYS = {"lemma", "samples", "seed", "n"}


def _parse_value(text: str) -> Any:
    text = text.strip()
    try:
        return json.loads(text)
    except ValueError:
        return text


def _format_value(value: Any) -> str:
    if isinstance(value, str):
        try:
            parsed = json.loads(value)
        except ValueError:
            parsed = None
        if parsed is None and value == value.strip() and value and "#" not in value:
            return value
        return json.dumps(value)
    return json.dumps(value)


def parse_text(text: str) -> Dict[str, Any]:
    out: Dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip() if not _quoted_hash(raw) else raw.strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key or any(c.isspace() for c in key):
            raise ConfigError(f"line {lineno}: invalid key {key!r}")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = _parse_value(value)
    return out


def _quoted_hash(line: str) -> bool:
    """True when the only ``#`` characters sit inside a double-quoted value."""
    if "#" not in line or '"' not in line:
        return False
    inside = False
    for c in line:
        if c == '"':
            inside = not inside
        elif c == "#" and not inside:
            return False
    return True


def format_text(mapping: Mapping[str, Any]) -> str:
    return "".join(f"{k} = {_format_value(mapping[k])}\n" for k in sorted(mapping))


def apply_overrides(mapping: Dict[str, Any], overrides: List[str]) -> Dict[str, Any]:
    """Apply ``key=value`` strings from the command line."""
    out = dict(mapping)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, value = item.split("=", 1)
        out[key.strip()] = _parse_value(value)
    return out


@dataclass
class ExperimentConfig:
    grid: Grid3
    solver: SolverConfig
    data: DataSpec
    seed: int = 0
    verifications: List[Tuple[str, Dict[str, Any]]] = field(default_factory=list)
    bilinear: Dict[str, Any] = field(default_factory=dict)
    outputs: Dict[str, Any] = field(default_factory=dict)
    source: Dict[str, Any] = field(default_factory=dict)

    @property
    def output_dir(self) -> str:
        return str(self.outputs.get("dir", "besovns_out"))

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Any]) -> "ExperimentConfig":
        m = dict(mapping)
        unknown = [k for k in m if "." not in k and k not in ("seed", "verify")]
        unknown += [k for k in m if k.startswith("grid.") and k[5:] not in GRID_KEYS]
        unknown += [k for k in m if k.startswith("solver.") and k[7:] not in SOLVER_KEYS]
        if unknown:
            raise ConfigError(f"unknown keys: {sorted(unknown)}")
        try:
            grid = Grid3(int(m.get("grid.n", 32)), float(m.get("grid.L", 2 * math.pi)))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid grid: {exc}") from exc
        try:
            every = m.get("solver.snapshot_every")
            solver = SolverConfig(
                grid,
                float(m.get("solver.dt", default_dt(grid))),
                float(m.get("solver.t_end", 0.1)),
                snapshot_every=None if every is None else int(every),
                integrator=str(m.get("solver.integrator", "ETDRK4")),
                dealias=bool(m.get("solver.dealias", True)),
                n_snapshots=int(m.get("solver.n_snapshots", 64)),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid solver settings: {exc}") from exc
        seed = int(m.get("seed", 0))
        data_keys = {k[5:]: v for k, v in m.items() if k.startswith("data.")}
        kind = data_keys.pop("kind", "taylor_green")
        if kind not in KINDS:
            raise ConfigError(f"unknown data.kind {kind!r}")
        amplitude = float(data_keys.pop("amplitude", 1.0))
        data_seed = int(data_keys.pop("seed", seed))
        try:
            data = DataSpec(kind, amplitude, data_seed, data_keys)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        requested = m.get("verify", [])
        if isinstance(requested, str):
            requested = [s.strip() for s in requested.split(",") if s.strip()]
        verifications = []
        for vid in requested:
            if vid not in VERIFICATIONS and not str(vid).startswith("bilinear:"):
                raise ConfigError(f"unknown verification {vid!r}")
            prefix = f"verify.{vid}."
            params = {k[len(prefix):]: v for k, v in m.items() if k.startswith(prefix)}
            verifications.append((vid, params))
        for k in m:
            if k.startswith("verify.") and not any(k.startswith(f"verify.{v}.") for v, _ in verifications):
                raise ConfigError(f"parameters given for a verification that is not requested: {k}")
        outputs = {k[8:]: v for k, v in m.items() if k.startswith("outputs.")}
        bad = set(outputs) - OUTPUT_KEYS
        if bad:
            raise ConfigError(f"unknown output keys: {sorted(bad)}")
        bilinear = {k[9:]: v for k, v in m.items() if k.startswith("bilinear.")}
        bad = set(bilinear) - BILINEAR_KEYS
        if bad:
            raise ConfigError(f"unknown bilinear keys: {sorted(bad)}")
        prefixes = ("grid.", "solver.", "data.", "verify.", "outputs.", "bilinear.")
        stray = [k for k in m if "." in k and not k.startswith(prefixes)]
        if stray:
            raise ConfigError(f"unknown keys: {sorted(stray)}")
        return cls(grid, solver, data, seed, verifications, bilinear, outputs, dict(m))

    def to_mapping(self) -> Dict[str, Any]:
        return dict(self.source)


def load_config(path: str, overrides: Optional[List[str]] = None) -> ExperimentConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    mapping = apply_overrides(parse_text(text), overrides or [])
    return ExperimentConfig.from_mapping(mapping)
