"""Command-line entry point.

    besovns <command> CONFIG [CONFIG ...] [--set key=value ...] [--jobs N]

Commands: simulate, norm, decompose, verify, sample-bilinear, calibrate.
Exit status: 0 pass, 2 configuration error, 3 resolution guard, 4 verification
failure, 5 I/O error.  On failure a JSON error record is printed to stderr and written
to ``<outputs.dir>/error.json``.
"""

from __future__ import annotations

import argparse
import json
import os
import re
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from typing import Dict, List, Optional, Sequence

from . import io
from .config import ExperimentConfig, load_config
from .data import generate_data
from .errors import (
    BesovNSError,
    ConfigError,
    OutputError,
    ResolutionExceeded,
    StepUnstable,
    StructuralViolation,
    VerificationFailed,
)
from .norms import BesovSpec, besov_norm_heat, lebesgue_norm
from .picard import decompose, split_residual, verify_decomposition, verify_w2_identity, verify_w3_identity
from .solver import simulate

EXIT_OK, EXIT_CONFIG, EXIT_RESOLUTION, EXIT_VERIFY, EXIT_IO = 0, 2, 3, 4, 5
COMMANDS = ("simulate", "norm", "decompose", "verify", "sample-bilinear", "calibrate")
IDENTITY_TOL = 1e-5
DEFAULT_NORMS = ["L2", "L3", "B(-0.25,4,4)"]

_BESOV = re.compile(r"^B\(([^,]+),([^,]+),([^,]+)\)$")


def parse_norm_id(norm_id: str):
    """``L<p>`` or ``B(s,p,q)`` (``q`` may be ``inf``) to a callable on fields."""
    text = norm_id.replace(" ", "")
    if text.startswith("L"):
        try:
            p = float(text[1:])
        except ValueError:
            raise ConfigError(f"bad norm id {norm_id!r}") from None
        return lambda f: lebesgue_norm(f, p)
    m = _BESOV.match(text)
    if m:
        try:
            spec = BesovSpec(*(float(x) for x in m.groups()))
        except ValueError as exc:
            raise ConfigError(f"bad norm id {norm_id!r}: {exc}") from None
        return lambda f: besov_norm_heat(f, spec)
    raise ConfigError(f"bad norm id {norm_id!r}; expected L<p> or B(s,p,q)")


def _norm_rows(traj, norm_ids: Sequence[str], cadence: int) -> list:
    funcs = [(nid, parse_norm_id(nid)) for nid in norm_ids]
    rows = []
    for i in range(0, len(traj), max(1, cadence)):
        f = traj.field(i)
        rows.extend((float(traj.times[i]), nid, fn(f)) for nid, fn in funcs)
    return rows


def _outputs(cfg: ExperimentConfig):
    norms = cfg.outputs.get("norms", DEFAULT_NORMS)
    if isinstance(norms, str):
        norms = [s.strip() for s in norms.split(";") if s.strip()]
    for nid in norms:
        parse_norm_id(nid)
    return norms, int(cfg.outputs.get("cadence", 1)), bool(cfg.outputs.get("snapshots", False))


def _simulate(cfg: ExperimentConfig):
    u0 = generate_data(cfg.data, cfg.grid)
    return simulate(u0, cfg.solver)


def _write_trajectory_outputs(cfg: ExperimentConfig, traj, out: str):
    norms, cadence, snapshots = _outputs(cfg)
    if snapshots:
        io.write_trajectory(os.path.join(out, "snapshots"), traj, cadence)
    io.write_norms_csv(os.path.join(out, "norms.csv"), _norm_rows(traj, norms, cadence))
    diag = {k: v for k, v in traj.diagnostics.items() if isinstance(v, (int, float))}
    io.write_json(os.path.join(out, "diagnostics.json"), diag)


def cmd_simulate(cfg: ExperimentConfig) -> Dict:
    _outputs(cfg)
    traj = _simulate(cfg)
    _write_trajectory_outputs(cfg, traj, cfg.output_dir)
    return {"pass": True}


def cmd_norm(cfg: ExperimentConfig) -> Dict:
    norms, _, _ = _outputs(cfg)
    f = generate_data(cfg.data, cfg.grid)
    rows = [(0.0, nid, parse_norm_id(nid)(f)) for nid in norms]
    io.write_norms_csv(os.path.join(cfg.output_dir, "norms.csv"), rows)
    return {"pass": True}


def cmd_decompose(cfg: ExperimentConfig) -> Dict:
    traj = _simulate(cfg)
    d = decompose(traj, identity_terms=True)
    reports = verify_decomposition(d) + [verify_w2_identity(d), verify_w3_identity(d), split_residual(d)]
    io.write_json(os.path.join(cfg.output_dir, "identities.json"), [r.to_dict() for r in reports])
    failed = [r.identity_id for r in reports if not r.sup_residual <= IDENTITY_TOL]
    return {"pass": not failed, "failed": failed}


def _run_verification(vid: str, params: Dict, cfg: ExperimentConfig, state: Dict):
    from . import verify as V

    if vid.startswith("bilinear:"):
        return V.sample_bilinear_estimate(vid.split(":", 1)[1], seed=cfg.seed, **params)
    if "d" not in state:
        state["d"] = decompose(_simulate(cfg))
    d = state["d"]
    if vid == "energy_inequality":
        return V.verify_energy_inequality(d)
    if vid == "scaled_energy":
        return V.verify_scaled_energy(d)
    if vid == "w3_bound":
        return V.verify_w3_bound(d, **params)
    if vid == "holder":
        window = params.pop("window", None)
        return V.verify_holder(d.u, window=None if window is None else tuple(window), **params)
    if vid == "keyprop_split":
        return V.verify_keyprop_split(d, **params)
    if vid == "freq_split":
        cfg_split = V.FreqSplitCfg(params.get("Lambda"), None if params.get("j_range") is None
                                   else tuple(params["j_range"]))
        return V.verify_frequency_split(d, cfg_split)
    identity = {"w2_identity": verify_w2_identity, "w3_identity": verify_w3_identity,
                "split_identity": split_residual}
    if vid in identity:
        return identity[vid](d)
    if vid == "mild_identity":
        return verify_decomposition(d)[0]
    raise ConfigError(f"unknown verification {vid!r}")


def _summary_row(vid: str, report) -> Dict:
    if hasattr(report, "inequality_id"):
        return report.to_dict()
    d = report.to_dict()
    d["pass"] = bool(report.sup_residual <= IDENTITY_TOL)
    return d


def cmd_verify(cfg: ExperimentConfig) -> Dict:
    if not cfg.verifications:
        raise ConfigError("no verifications requested (set 'verify')")
    state: Dict = {}
    results = {}
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        for vid, params in cfg.verifications:
            results[vid] = _summary_row(vid, _run_verification(vid, dict(params), cfg, state))
    notes = sorted({f"{w.category.__name__}: {w.message}" for w in caught})
    out = cfg.output_dir
    for vid, row in results.items():
        io.write_json(os.path.join(out, "reports", f"{vid.replace(':', '_')}.json"), row)
    lines = ["verification,pass,fitted_constant,frozen_constant,margin"]
    for vid, row in results.items():
        lines.append(",".join(str(x) for x in (vid, row["pass"], row.get("fitted_constant", row.get("sup_residual")),
                                                 row.get("frozen_constant", IDENTITY_TOL), row.get("margin", ""))))
    io.atomic_write(os.path.join(out, "summary.csv"), ("\n".join(lines) + "\n").encode())
    if notes:
        io.write_json(os.path.join(out, "warnings.json"), notes)
    if "d" in state:
        _write_trajectory_outputs(cfg, state["d"].u, out)
    failed = [vid for vid, row in results.items() if not row["pass"]]
    return {"pass": not failed, "failed": failed}


def cmd_sample_bilinear(cfg: ExperimentConfig) -> Dict:
    from .verify import sample_bilinear_estimate

    b = cfg.bilinear
    lemma = b.get("lemma")
    if lemma is None:
        raise ConfigError("bilinear.lemma is required")
    report = sample_bilinear_estimate(str(lemma), int(b.get("samples", 100)), int(b.get("seed", cfg.seed)),
                                      int(b.get("n", 16)))
    io.write_json(os.path.join(cfg.output_dir, f"bilinear_{lemma}.json"), report.to_dict())
    return {"pass": report.passed, "failed": [] if report.passed else [report.inequality_id]}


def cmd_calibrate(cfg: ExperimentConfig) -> Dict:
    from .calibration import calibrate, write_table

    samples = int(cfg.bilinear.get("samples", 100))
    table = calibrate(bilinear_samples=samples, progress=lambda m: print(m, file=sys.stderr, flush=True))
    write_table(table, os.path.join(cfg.output_dir, "frozen_constants.json"))
    return {"pass": True}


HANDLERS = {
    "simulate": cmd_simulate,
    "norm": cmd_norm,
    "decompose": cmd_decompose,
    "verify": cmd_verify,
    "sample-bilinear": cmd_sample_bilinear,
    "calibrate": cmd_calibrate,
}


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, ResolutionExceeded):
        return EXIT_RESOLUTION
    if isinstance(exc, (VerificationFailed, StructuralViolation, StepUnstable)):
        return EXIT_VERIFY
    if isinstance(exc, (OutputError, OSError)):
        return EXIT_IO
    if isinstance(exc, (ConfigError, ValueError, TypeError, KeyError)):
        return EXIT_CONFIG
    return EXIT_VERIFY


def _error_record(exc: BaseException, code: int, source: str) -> Dict:
    return {"error": type(exc).__name__, "message": str(exc), "exit_code": code, "config": source}


def run_experiment(cfg: ExperimentConfig, command: str = "verify", source: str = "<config>") -> int:
    """Run one command for one configuration; returns the exit status."""
    try:
        result = HANDLERS[command](cfg)
    except (BesovNSError, ValueError, TypeError, KeyError, OSError) as exc:
        code = _exit_code(exc)
        _report_error(_error_record(exc, code, source), cfg.output_dir)
        return code
    if result["pass"]:
        return EXIT_OK
    failed = VerificationFailed("failed: " + ", ".join(result.get("failed", [])))
    _report_error(_error_record(failed, EXIT_VERIFY, source), cfg.output_dir)
    return EXIT_VERIFY


def _report_error(record: Dict, out: Optional[str]):
    print(json.dumps(record, sort_keys=True), file=sys.stderr)
    if out:
        try:
            io.write_json(os.path.join(out, "error.json"), record)
        except OutputError:
            pass


def _run_one(command: str, path: str, overrides: List[str]) -> int:
    try:
        cfg = load_config(path, overrides)
    except (ConfigError, ValueError) as exc:
        _report_error(_error_record(exc, EXIT_CONFIG, path), None)
        return EXIT_CONFIG
    return run_experiment(cfg, command, path)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="besovns", description="Besov-space diagnostics for 3D Navier-Stokes")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("configs", nargs="+", help="experiment config files (key = value)")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key (repeatable)")
        p.add_argument("--jobs", type=int, default=1, help="run independent configs in parallel")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.jobs > 1 and len(args.configs) > 1:
        with ProcessPoolExecutor(min(args.jobs, len(args.configs))) as pool:
            codes = list(pool.map(_run_one, [args.command] * len(args.configs), args.configs,
                                  [args.overrides] * len(args.configs)))
    else:
        codes = [_run_one(args.command, path, args.overrides) for path in args.configs]
    return max(codes) if codes else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
