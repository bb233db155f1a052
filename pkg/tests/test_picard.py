import numpy as np
import pytest

from besovns.data import DataSpec, generate_data
from besovns.errors import MeshMismatch
from besovns.picard import (
    build_split,
    decompose,
    decomposition_report,
    split_residual,
    verify_decomposition,
    verify_w2_identity,
    verify_w3_identity,
)
from besovns.solver import SolverConfig, linear_flow, simulate
from besovns.spectral import Grid3, SpectralVectorField, heat_semigroup, l2_norm


def run(amplitude, grid=None, t_end=0.3, dt=0.005, snapshots=8, seed=2):
    grid = grid or Grid3(16)
    u0 = generate_data(DataSpec("random_besov", amplitude, seed, {"kmax": 2.5}), grid)
    return simulate(u0, SolverConfig(grid, dt, t_end, n_snapshots=snapshots))


@pytest.fixture(scope="module")
def hierarchy():
    return decompose(run(2.0), identity_terms=True)


def test_defining_relations_hold_to_roundoff(hierarchy):
    for report in verify_decomposition(hierarchy):
        assert report.sup_residual < 1e-12
    u0 = hierarchy.u.u0
    for i, t in enumerate(hierarchy.times):
        assert l2_norm(hierarchy.u_L.field(i) - heat_semigroup(u0, t)) <= 1e-13 * l2_norm(u0)


def test_expansion_identities(hierarchy):
    assert verify_w2_identity(hierarchy).sup_residual < 1e-8
    w3 = verify_w3_identity(hierarchy)
    assert w3.sup_residual < 1e-8
    assert hierarchy.trilinear is not None and hierarchy.quadrilinear is not None
    assert set(w3.to_dict()) == {"id", "sup_residual", "time_of_sup", "mesh"}


def test_split_sums_to_solution(hierarchy):
    v, w = build_split(hierarchy)
    assert split_residual(hierarchy).sup_residual < 1e-12
    assert v.divergence_defect() < 1e-10 and w.divergence_defect() < 1e-10
    assert '"v_plus_w_equals_u"' in decomposition_report([split_residual(hierarchy)])


def test_zero_data_gives_zero_hierarchy():
    d = decompose(run(0.0), identity_terms=True)
    for name in ("u_L", "B_uLuL", "w2", "w3"):
        assert max(l2_norm(d.term(name).field(i)) for i in range(len(d.times))) == 0
    assert verify_w3_identity(d).sup_residual == 0


def test_amplitude_scaling_of_fluctuations():
    amps = np.array([0.05, 0.1, 0.2])
    w2, w3 = [], []
    for a in amps:
        d = decompose(run(a))
        w2.append(max(l2_norm(d.w2.field(i)) for i in range(len(d.times))))
        w3.append(max(l2_norm(d.w3.field(i)) for i in range(len(d.times))))
    s2 = np.polyfit(np.log(amps), np.log(w2), 1)[0]
    s3 = np.polyfit(np.log(amps), np.log(w3), 1)[0]
    assert s2 == pytest.approx(2.0, abs=0.1)
    assert s3 == pytest.approx(3.0, abs=0.15)


def test_lazy_terms_match_eager(hierarchy):
    lazy = decompose(hierarchy.u)
    assert lazy.trilinear is None
    t = lazy.term("trilinear")
    assert l2_norm(t.field(4) - hierarchy.trilinear.field(4)) <= 1e-14 * l2_norm(t.field(4))


def test_rejects_non_solver_trajectory(grid16):
    f = SpectralVectorField.zeros(grid16)
    with pytest.raises(MeshMismatch):
        decompose(linear_flow(f, np.linspace(0, 0.1, 3)))
