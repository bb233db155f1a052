"""Calibration of the frozen constants.

Each estimate is run on a fixed corpus (three data families at two amplitudes), the
largest fitted constant is multiplied by :data:`SAFETY` and written to
``frozen_constants.json``.  Later runs on fresh data are checked against these values.
"""

from __future__ import annotations

import json
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence

from .data import DataSpec, generate_data
from .errors import DiagnosticWarning
from .picard import decompose
from .solver import SolverConfig, simulate
from .spectral import Grid3
from .verify import (
    LEMMAS,
    SAFETY,
    energy_series,
    fit_scaled_energy,
    sample_bilinear_estimate,
    scaled_energy_lhs,
    scaled_energy_rhs_norms,
    verify_energy_inequality,
    verify_frequency_split,
    verify_holder,
    verify_keyprop_split,
    verify_w3_bound,
)


@dataclass(frozen=True)
class CorpusMember:
    spec: DataSpec
    n: int = 32
    dt: float = 5e-3
    t_end: float = 0.5
    n_snapshots: int = 64

    @property
    def label(self) -> str:
        return f"{self.spec.kind}(a={self.spec.amplitude:g},seed={self.spec.seed})@n={self.n}"


CORPUS = (
    CorpusMember(DataSpec("taylor_green", 1.0, 0)),
    CorpusMember(DataSpec("taylor_green", 2.0, 0)),
    CorpusMember(DataSpec("random_besov", 1.0, 11)),
    CorpusMember(DataSpec("random_besov", 2.0, 11)),
    CorpusMember(DataSpec("vorticity_l32", 1.0, 3)),
    CorpusMember(DataSpec("vorticity_l32", 2.0, 3)),
)

# same families, unseen seeds and amplitudes, for checking frozen constants
FRESH_CORPUS = (
    CorpusMember(DataSpec("taylor_green", 1.5, 0)),
    CorpusMember(DataSpec("random_besov", 1.5, 101)),
    CorpusMember(DataSpec("vorticity_l32", 1.5, 103)),
)

KEYS = ("energy_inequality", "w3_bound(p=4,q=5)", "holder", "keyprop_v(p=4,q=2)", "keyprop_w(eps=0.05)",
        "freq_split")


def run_member(member: CorpusMember) -> Dict[str, float]:
    """Fitted constants (no frozen reference) for one corpus run."""
    grid = Grid3(member.n)
    u0 = generate_data(member.spec, grid)
    u = simulate(u0, SolverConfig(grid, member.dt, member.t_end, n_snapshots=member.n_snapshots))
    d = decompose(u)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DiagnosticWarning)
        series = energy_series(d)
        out = {"energy_inequality": verify_energy_inequality(d, {}, series).fitted_constant}
        lhs = float(scaled_energy_lhs(series["t"], series["w2"], series["gradw2"])["lhs"].max())
        a, b = scaled_energy_rhs_norms(u0)
        out["scaled_energy_sample"] = [lhs, a, b]
        out["w3_bound(p=4,q=5)"] = verify_w3_bound(d, frozen={}).fitted_constant
        out["holder"] = verify_holder(u, frozen={}).fitted_constant
        split = verify_keyprop_split(d, frozen={})
        out["keyprop_v(p=4,q=2)"] = split.metadata["v_constant"]
        out["keyprop_w(eps=0.05)"] = split.metadata["w_constant"]
        out["freq_split"] = verify_frequency_split(d, frozen={}).fitted_constant
    return out


def _bilinear(lemma_id: str, n_samples: int) -> float:
    return sample_bilinear_estimate(lemma_id, n_samples, seed=0, frozen={}).fitted_constant


def calibrate(corpus: Sequence[CorpusMember] = CORPUS, bilinear_samples: int = 100, jobs: int = 1,
              progress: Optional[Callable[[str], None]] = None) -> Dict[str, object]:
    """Run the corpus and return the frozen-constant table."""
    say = progress or (lambda msg: None)
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            fitted = list(pool.map(run_member, corpus))
            lemma_ids = sorted(LEMMAS)
            bil = dict(zip(lemma_ids, pool.map(_bilinear, lemma_ids, [bilinear_samples] * len(lemma_ids))))
    else:
        fitted = []
        for m in corpus:
            say(f"corpus {m.label}")
            fitted.append(run_member(m))
        bil = {}
        for lemma_id in sorted(LEMMAS):
            say(f"bilinear {lemma_id}")
            bil[lemma_id] = _bilinear(lemma_id, bilinear_samples)
    table: Dict[str, object] = {}
    for key in KEYS:
        table[key] = SAFETY * max(f[key] for f in fitted)
    prefactor, exponent = fit_scaled_energy([tuple(f["scaled_energy_sample"]) for f in fitted])
    table["scaled_energy"] = {"prefactor": SAFETY * prefactor, "exponent": exponent}
    for lemma_id, c in bil.items():
        table[f"bilinear:{lemma_id}"] = SAFETY * c
    table["_corpus"] = [m.label for m in corpus]
    table["_safety"] = SAFETY
    table["_fitted"] = {m.label: {k: v for k, v in f.items()} for m, f in zip(corpus, fitted)}
    for key, value in table.items():
        if isinstance(value, float) and not math.isfinite(value):
            raise RuntimeError(f"calibration produced a non-finite constant for {key}")
    return table


def default_path() -> str:
    return os.path.join(os.path.dirname(__file__), "frozen_constants.json")


def write_table(table: Dict[str, object], path: Optional[str] = None) -> str:
    from .io import write_json

    path = path or default_path()
    write_json(path, table)
    return path
