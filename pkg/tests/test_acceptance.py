"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``criterion NN ...: PASS|FAIL`` line (also collected into the
terminal summary by ``conftest.py``).  Runtime is dominated by criteria 3, 7, 9 and 10.
"""

import filecmp
import math
import os
import warnings

import numpy as np
import pytest
from scipy.special import gamma

from besovns.calibration import FRESH_CORPUS
from besovns.cli import run_experiment
from besovns.config import ExperimentConfig
from besovns.data import DataSpec, generate_data
from besovns.norms import BesovSpec, QuadratureCfg, besov_norms_heat, besov_norms_lp
from besovns.picard import DecompositionSet, decompose, verify_decomposition, verify_w2_identity, verify_w3_identity
from besovns.solver import SolverConfig, default_dt, duhamel_quadrature, duhamel_trajectory, linear_flow, simulate
from besovns.spectral import Grid3, SpectralVectorField, _project, l2_norm
from besovns.verify import (
    LEMMAS,
    lambda_monotonicity,
    sample_bilinear_estimate,
    sup_norms,
    verify_energy_inequality,
    verify_frequency_split,
    verify_holder,
    verify_scaled_energy,
)

from conftest import ACCEPTANCE_LINES

pytestmark = pytest.mark.slow

SPECS = [BesovSpec(-0.25, 4, 4), BesovSpec(-0.4, 5, 5), BesovSpec(0.5, 2, math.inf), BesovSpec(-0.75, 4, 4)]
EQUIVALENCE_C = 5.0
SINGLE_MODES = [(1, 0, 0), (2, 1, 0), (4, 0, 0), (3, 3, 2), (0, 5, 1), (4, 3, 0), (1, 1, 1), (6, 2, 0), (2, 2, 2),
                (7, 1, 1)]
FAMILIES = [DataSpec("taylor_green", 1.0, 0), DataSpec("random_besov", 1.0, 11), DataSpec("vorticity_l32", 1.0, 3)]


def record(number: int, title: str, passed: bool, detail: str):
    line = f"criterion {number:2d} {title}: {'PASS' if passed else 'FAIL'} | {detail}"
    print(line)
    ACCEPTANCE_LINES[number] = line
    assert passed, line


def cos_lp(p):
    if math.isinf(p):
        return 1.0
    return (gamma((p + 1) / 2) / (math.sqrt(math.pi) * gamma(p / 2 + 1))) ** (1 / p)


def gamma_oracle(kabs, spec):
    s, p, q = spec.s, spec.p, spec.q
    if math.isinf(q):
        a = 1 - s / 2
        return kabs**s * a**a * math.exp(-a) * cos_lp(p)
    return kabs**s * (q ** (s * q / 2 - q) * gamma(q * (1 - s / 2))) ** (1 / q) * cos_lp(p)


def cos_e1(grid, m):
    x = grid.points()
    phase = sum(grid.k0 * mi * xi for mi, xi in zip(m, x))
    values = np.zeros((3, grid.n, grid.n, grid.n))
    values[0] = np.broadcast_to(np.cos(phase), values.shape[1:])
    return SpectralVectorField.from_physical(grid, values)


def worst_single_mode_error(grid):
    worst = 0.0
    for m in SINGLE_MODES:
        f = cos_e1(grid, m)
        kabs = grid.k0 * math.sqrt(sum(x * x for x in m))
        got = besov_norms_heat(f, SPECS, QuadratureCfg.for_grid(grid, field=f))
        worst = max(worst, max(abs(v / gamma_oracle(kabs, s) - 1) for v, s in zip(got, SPECS)))
    return worst


def sloped_field(grid, rng, slope, kmax):
    """Gaussian field with ``|u(k)| ~ |k|^{slope - 3/2}`` below ``kmax`` (numpy RNG)."""
    half = grid.to_spectral(rng.normal(size=(3, grid.n, grid.n, grid.n)))
    r = grid.radius
    half *= np.where((r > 0) & (r <= kmax), np.power(np.where(r > 0, r, 1.0), slope - 1.5), 0.0)
    half[:, 0, 0, 0] = 0
    return SpectralVectorField(grid, _project(grid, half))


def rel_change(a, b):
    if a == b:
        return 0.0
    return abs(b - a) / max(abs(a), abs(b))


# ---------------------------------------------------------------------------
# shared runs


@pytest.fixture(scope="module")
def corpus64():
    """The three data families at n = 64 on the base step and on the halved step."""
    g = Grid3(64)
    # snapshot increments are odd multiples of t_end / n_snapshots**2; a step dividing
    # that unit makes dt -> dt/2 halve every step instead of re-rounding the mesh
    unit = 0.1 / 8**2
    dt = unit / math.ceil(unit / default_dt(g))
    out = []
    for spec in FAMILIES:
        u0 = generate_data(spec, g)
        runs = {}
        for label, h in (("dt", dt), ("dt/2", dt / 2)):
            runs[label] = simulate(u0, SolverConfig(g, h, 0.1, n_snapshots=8))
        out.append((spec, u0, runs))
    return out


@pytest.fixture(scope="module")
def fresh_runs():
    """Fresh corpus members on the calibration mesh and with the step halved."""
    out = []
    for member in FRESH_CORPUS:
        g = Grid3(member.n)
        u0 = generate_data(member.spec, g)
        runs = {}
        for label, h in (("dt", member.dt), ("dt/2", member.dt / 2)):
            u = simulate(u0, SolverConfig(g, h, member.t_end, n_snapshots=member.n_snapshots))
            d = DecompositionSet(u)
            d.ensure(["u_L", "w2"])
            runs[label] = d
        out.append((member, runs))
    return out


# ---------------------------------------------------------------------------


def test_criterion_01_norm_equivalence():
    g = Grid3(64)
    rng = np.random.default_rng(20240)
    ratios = []
    for _ in range(200):
        f = sloped_field(g, rng, rng.uniform(-1.5, 0.5), rng.uniform(2.0, 10.0))
        heat = besov_norms_heat(f, SPECS, QuadratureCfg.for_grid(g, field=f))
        ratios.extend(h / b for h, b in zip(heat, besov_norms_lp(f, SPECS)))
    c = max(max(ratios), 1 / min(ratios))
    single = worst_single_mode_error(g)
    record(1, "heat/LP norm equivalence", c <= EQUIVALENCE_C and single <= 0.01,
           f"800 ratios in [{min(ratios):.3f}, {max(ratios):.3f}], c={c:.3f} <= {EQUIVALENCE_C}; "
           f"single-mode error {single:.2e} <= 1e-2")


def test_criterion_02_single_mode_oracle():
    worst = worst_single_mode_error(Grid3(32))
    record(2, "single-mode Gamma oracle", worst <= 5e-3, f"10 modes x 4 norms, worst relative error {worst:.2e}")


def test_criterion_03_mild_solution_identity(corpus64):
    details, ok = [], True
    for spec, u0, runs in corpus64:
        scale = l2_norm(u0)
        res = {}
        for label, u in runs.items():
            lin = linear_flow(u0, u.times)
            direct = duhamel_trajectory(u, u)
            quad = duhamel_quadrature(u, u)
            res[label] = [max(l2_norm(u.field(i) - lin.field(i) - b.field(i)) for i in range(len(u))) / scale
                          for b in (direct, quad)]
        shrink = res["dt"][1] / res["dt/2"][1]
        worst = max(res["dt"])
        ok &= worst <= 1e-5 and shrink >= 4
        details.append(f"{spec.kind}: residual {res['dt'][0]:.1e} (co-integrated), {res['dt'][1]:.1e} "
                       f"(quadrature), shrink x{shrink:.1f}")
    record(3, "mild-solution identity", ok, "; ".join(details))


def test_criterion_04_picard_identities(corpus64):
    worst = 0.0
    for _, _, runs in corpus64:
        d = decompose(runs["dt"], identity_terms=True)
        reports = verify_decomposition(d) + [verify_w2_identity(d), verify_w3_identity(d)]
        worst = max(worst, max(r.sup_residual for r in reports))
    g = Grid3(32)
    base = generate_data(DataSpec("random_besov", 1.0, 11), g)
    amps = np.array([0.05, 0.1, 0.2])
    sups = []
    for a in amps:
        d = decompose(simulate(base * a, SolverConfig(g, 5e-3, 0.5, n_snapshots=16)))
        sups.append([max(l2_norm(t.field(i)) for i in range(len(t))) for t in (d.u_L, d.w2, d.w3)])
    slopes = [np.polyfit(np.log(amps), np.log(np.array(sups)[:, k]), 1)[0] for k in range(3)]
    ok = worst <= 1e-5 and all(abs(s - e) <= 0.1 for s, e in zip(slopes, (1, 2, 3)))
    record(4, "Picard identities and amplitude scaling", ok,
           f"worst identity residual {worst:.1e}; slopes u_L {slopes[0]:.3f}, w2 {slopes[1]:.3f}, "
           f"w3 {slopes[2]:.3f}")


def test_criterion_05_scaled_energy(fresh_runs):
    details, ok = [], True
    for member, runs in fresh_runs:
        r = verify_scaled_energy(runs["dt"])
        m = r.metadata
        finite = math.isfinite(m["psi_limit"]) and m["psi_bounded"]
        ok &= finite and r.margin >= 0 and r.passed
        details.append(f"{member.label}: psi(0+)={m['psi_limit']:.2e}, LHS {m['lhs_sup']:.3e}, "
                       f"A_fit {r.fitted_constant:.3f} vs frozen {r.frozen_constant:.3f}, margin {r.margin:.3f}")
    record(5, "scaled energy bound on fresh data", ok, "; ".join(details))


def test_criterion_06_energy_inequality(fresh_runs):
    details, ok = [], True
    for member, runs in fresh_runs:
        reports = {label: verify_energy_inequality(d) for label, d in runs.items()}
        c_change = rel_change(reports["dt"].fitted_constant, reports["dt/2"].fitted_constant)
        slack = [reports[k].metadata["min_relative_slack"] for k in ("dt", "dt/2")]
        ok &= all(r.passed and r.margin >= 0 for r in reports.values()) and c_change <= 0.2
        ok &= rel_change(*slack) <= 0.2
        details.append(f"{member.label}: C {reports['dt'].fitted_constant:.3g}->{reports['dt/2'].fitted_constant:.3g}"
                       f" (frozen {reports['dt'].frozen_constant:.3g}), min slack {slack[0]:.3f}->{slack[1]:.3f}")
    record(6, "differential energy inequality", ok, "; ".join(details))


def test_criterion_07_w3_self_improvement():
    dt = default_dt(Grid3(128))
    rough, sup_w3 = [], []
    for n in (32, 64, 128):
        g = Grid3(n)
        u0 = generate_data(DataSpec("random_besov", 1.0, 7, {"slope": 0.25}), g)
        rough.append(math.sqrt(g.wsum(np.sqrt(g.k2) * np.sum(np.abs(u0.half) ** 2, axis=0))))
        d = decompose(simulate(u0, SolverConfig(g, dt, 0.05, n_snapshots=8)))
        sup_w3.append(sup_norms(d.w3, [BesovSpec(0.5, 2, math.inf)])[0])
        del d
    growth = rough[-1] / rough[0]
    change = abs(sup_w3[-1] / sup_w3[0] - 1)
    record(7, "w3 bounded in B^{1/2}_{2,inf} for rough data", growth >= 2 and change < 0.25,
           f"||u0||_H^1/2 {rough[0]:.2f} -> {rough[1]:.2f} -> {rough[2]:.2f} (x{growth:.2f}); "
           f"sup ||w3|| {sup_w3[0]:.4f} -> {sup_w3[1]:.4f} -> {sup_w3[2]:.4f} (change {change:.1%})")


def test_criterion_08_holder_in_time():
    g = Grid3(64)
    u0 = generate_data(DataSpec("random_besov", 1.0, 21, {"slope": 0.25, "kmax": 17}), g)
    u = simulate(u0, SolverConfig(g, default_dt(g), 0.5, n_snapshots=128))
    ns = verify_holder(u, stride=8)
    heat_data = generate_data(DataSpec("random_besov", 1.0, 22, {"slope": 0.25, "kmax": 21 - 4}), g)
    times = np.concatenate([[0.0], np.geomspace(1e-5, 0.5, 160)])
    control = verify_holder(linear_flow(heat_data, times), frozen={}, stride=16)
    s_ns, s_heat = ns.metadata["slope"], control.metadata["slope"]
    ok = s_ns >= 0.24 and 0.24 <= s_heat <= 0.30 and ns.passed
    record(8, "Hoelder-1/4 continuity in time", ok,
           f"NS slope {s_ns:.3f} over {ns.metadata['n_bins']} bins (prefactor {ns.fitted_constant:.3f} vs frozen "
           f"{ns.frozen_constant:.3f}); heat-flow control slope {s_heat:.3f}")


def test_criterion_09_frequency_split():
    g = Grid3(64)
    u0 = generate_data(DataSpec("random_besov", 1.0, 5, {"slope": 0.25, "kmax": 16}), g)
    d = decompose(simulate(u0, SolverConfig(g, 1.5e-3, 0.5, n_snapshots=32)))
    r = verify_frequency_split(d)
    m = r.metadata
    rows = lambda_monotonicity(d, [0.25, 0.5, 1.0, 2.0, 4.0])
    monotone = bool(np.all(np.diff(rows, axis=0) <= 1e-12 * np.abs(rows).max()))
    ok = m["K_spread_top"] <= 2 and m["J_spread_top"] <= 2 and monotone and r.passed
    record(9, "frequency-split bookkeeping", ok,
           f"top-3 spread K {m['K_spread_top']:.2f}, J {m['J_spread_top']:.2f}; I_j1 nonincreasing in Lambda: "
           f"{monotone}; I_j1 vs envelope margin {r.margin:.3f}")


def test_criterion_10_bilinear_sampling():
    details, ok = [], True
    prefix = 25
    for lemma in LEMMAS:
        a = sample_bilinear_estimate(lemma, 100, seed=0, n=16)
        b = sample_bilinear_estimate(lemma, 100, seed=1, n=16)
        fine = sample_bilinear_estimate(lemma, prefix, seed=0, n=32)
        coarse_prefix = float(np.max(a.metadata["ratios"][:prefix]))
        seed_change = rel_change(a.fitted_constant, b.fitted_constant)
        refine_change = rel_change(coarse_prefix, fine.fitted_constant)
        finite = all(math.isfinite(x) and x > 0 for x in (a.fitted_constant, b.fitted_constant, fine.fitted_constant))
        ok &= finite and seed_change <= 0.3 and refine_change <= 0.3
        details.append(f"{lemma}: C {a.fitted_constant:.3f}/{b.fitted_constant:.3f} (seeds, {seed_change:.0%}), "
                       f"{coarse_prefix:.3f}/{fine.fitted_constant:.3f} (n=16/32, {refine_change:.0%})")
    record(10, "bilinear estimate sampling", ok, "; ".join(details))


def test_criterion_11_determinism(tmp_path):
    mapping = {
        "grid.n": 16, "solver.dt": 0.005, "solver.t_end": 0.2, "solver.n_snapshots": 16,
        "data.kind": "random_besov", "data.amplitude": 1.5, "data.kmax": 2.5, "seed": 4,
        "verify": "energy_inequality, scaled_energy, w3_bound, keyprop_split, freq_split, w2_identity, "
                  "bilinear:heat_cross_l32",
        "verify.bilinear:heat_cross_l32.n_samples": 3,
        "outputs.snapshots": True,
    }
    codes, dirs = [], []
    for k in range(2):
        out = tmp_path / f"run{k}"
        cfg = ExperimentConfig.from_mapping(dict(mapping, **{"outputs.dir": str(out)}))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            codes.append(run_experiment(cfg, "verify"))
        dirs.append(out)
    files = sorted(os.path.relpath(os.path.join(root, f), dirs[0]) for root, _, fs in os.walk(dirs[0]) for f in fs)
    other = sorted(os.path.relpath(os.path.join(root, f), dirs[1]) for root, _, fs in os.walk(dirs[1]) for f in fs)
    same = files == other and all(filecmp.cmp(dirs[0] / f, dirs[1] / f, shallow=False) for f in files)
    record(11, "bit-identical reproduction", same and codes[0] == codes[1] and len(files) > 5,
           f"{len(files)} output files compared byte for byte, exit codes {codes}")
