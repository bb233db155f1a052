import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate
from scipy.special import gamma

from besovns.errors import UnderResolvedQuadrature
from besovns.norms import (
    BesovSpec,
    ChLSpec,
    QuadratureCfg,
    besov_norm_heat,
    besov_norm_lp,
    besov_norms_heat,
    chemin_lerner_norm,
    interpolation_check,
    lebesgue_norm,
    serrin_norm,
)
from besovns.solver import linear_flow
from besovns.spectral import Grid3, SpectralVectorField, heat_semigroup

from conftest import mode_field, random_field

WORKING_SPECS = [BesovSpec(-0.25, 4, 4), BesovSpec(-0.4, 5, 5), BesovSpec(0.5, 2, math.inf), BesovSpec(-0.75, 4, 4)]


def cos_lp(p):
    """Normalized L^p norm of cos over a period."""
    if math.isinf(p):
        return 1.0
    return (gamma((p + 1) / 2) / (math.sqrt(math.pi) * gamma(p / 2 + 1))) ** (1 / p)


def single_mode_oracle(kabs, spec):
    s, p, q = spec.s, spec.p, spec.q
    if math.isinf(q):
        a = 1 - s / 2
        return kabs**s * a**a * math.exp(-a) * cos_lp(p)
    return kabs**s * (q ** (s * q / 2 - q) * gamma(q * (1 - s / 2))) ** (1 / q) * cos_lp(p)


def test_spec_validation():
    with pytest.raises(ValueError):
        BesovSpec(0, 0.5, 2)
    with pytest.raises(ValueError):
        BesovSpec(0, 2, 0.5)
    assert BesovSpec.critical(4) == BesovSpec(-0.25, 4, math.inf)
    assert BesovSpec(-0.25, 4, 4).norm_id == "B(-0.25,4,4)"
    with pytest.raises(ValueError):
        ChLSpec(0.5, 0, 2, 2, (0, 1))
    with pytest.raises(ValueError):
        ChLSpec(1, 0, 2, 2, (1, 1))
    assert ChLSpec.critical(2, 4, (0, 1)).s == pytest.approx(0.75)
    with pytest.raises(ValueError):
        QuadratureCfg(1e-3, 1.0, 8)


def test_lebesgue_examples(grid16):
    f = mode_field(grid16, (1, 2, 0), component=0)
    assert lebesgue_norm(SpectralVectorField.zeros(grid16), 3) == 0
    assert lebesgue_norm(f, 2) == pytest.approx(2**-0.5, rel=1e-13)
    assert lebesgue_norm(f, math.inf) == pytest.approx(1.0, rel=1e-13)
    with pytest.raises(ValueError):
        lebesgue_norm(f, 0.5)


@pytest.mark.parametrize("spec", WORKING_SPECS, ids=lambda s: s.norm_id)
@pytest.mark.parametrize("m", [(1, 0, 0), (2, 1, 0), (3, 2, 1)])
def test_heat_norm_single_mode_oracle(spec, m):
    g = Grid3(32)
    f = mode_field(g, m, component=2 if m[2] == 0 else 0)
    if m[2] != 0:
        f = mode_field(g, m, component=1) if m[1] == 0 else mode_field(g, (m[0], 0, m[2]), component=1)
        m = (m[0], 0, m[2])
    kabs = g.k0 * math.sqrt(sum(x * x for x in m))
    assert besov_norm_heat(f, spec) == pytest.approx(single_mode_oracle(kabs, spec), rel=5e-3)


def test_zero_and_homogeneity(grid16):
    zero = SpectralVectorField.zeros(grid16)
    assert besov_norm_heat(zero, WORKING_SPECS[0]) == 0
    assert besov_norm_lp(zero, WORKING_SPECS[0]) == 0


@given(st.integers(0, 10_000), st.sampled_from(WORKING_SPECS))
def test_homogeneity_exact(seed, spec):
    g = Grid3(16)
    f = random_field(g, seed, kmax=2.5)
    assert besov_norm_lp(f * 7.0, spec) == pytest.approx(7 * besov_norm_lp(f, spec), rel=1e-12)
    assert besov_norm_heat(f * 7.0, spec) == pytest.approx(7 * besov_norm_heat(f, spec), rel=1e-12)


@given(st.integers(0, 10_000))
def test_lq_monotone(seed):
    g = Grid3(32)
    f = random_field(g, seed, kmax=5)
    values = [besov_norm_lp(f, BesovSpec(-0.25, 4, q)) for q in (1, 2, 4, math.inf)]
    assert all(a >= b * (1 - 1e-12) for a, b in zip(values, values[1:]))


def test_lp_norm_single_mode_inside_plateau(grid32):
    f = mode_field(grid32, (3, 0, 0), component=1)
    spec = BesovSpec(-0.25, 4, 4)
    expected = grid32.dyadic_scale(1) ** spec.s * cos_lp(4)
    assert besov_norm_lp(f, spec) == pytest.approx(expected, rel=1e-6)
    ratio = besov_norm_heat(f, spec) / besov_norm_lp(f, spec)
    assert 0.3 < ratio < 1.0


def test_heat_lp_equivalence_on_random_fields():
    g = Grid3(32)
    ratios = []
    for seed in range(8):
        f = random_field(g, seed, kmax=5)
        for spec in WORKING_SPECS:
            ratios.append(besov_norm_heat(f, spec) / besov_norm_lp(f, spec))
    assert 0.2 < min(ratios) and max(ratios) < 5


def test_qinf_max_close_to_refined():
    g = Grid3(32)
    f = random_field(g, 3, kmax=5)
    cfg = QuadratureCfg.for_grid(g, field=f)
    spec = BesovSpec(0.5, 2, math.inf)
    coarse = besov_norm_heat(f, spec, cfg)
    fine = besov_norm_heat(f, spec, cfg.refined(4))
    assert abs(coarse - fine) <= 5e-3 * fine


def test_under_resolved_quadrature_flagged(grid16):
    f = mode_field(grid16, (1, 0, 0), component=1)
    narrow = QuadratureCfg(0.5, 2.0, 16)
    with pytest.warns(UnderResolvedQuadrature):
        besov_norm_heat(f, BesovSpec(-0.25, 4, 4), narrow)


def test_shared_transforms_match_single_calls(grid16):
    f = random_field(grid16, 9, kmax=3)
    many = besov_norms_heat(f, WORKING_SPECS)
    assert many == pytest.approx([besov_norm_heat(f, s) for s in WORKING_SPECS], rel=1e-13)


def test_chemin_lerner_constant_and_zero(grid16):
    f = random_field(grid16, 2, kmax=3)
    times = np.linspace(0, 0.1, 9)
    const = linear_flow(f, times)
    const = type(const)(times, np.broadcast_to(f.half, (9,) + f.half.shape), grid16)
    spec = ChLSpec(math.inf, -0.25, 4, 4, (0.0, 0.1))
    assert chemin_lerner_norm(const, spec) == pytest.approx(besov_norm_heat(f, spec.spatial), rel=1e-6)
    zero = linear_flow(SpectralVectorField.zeros(grid16), times)
    assert chemin_lerner_norm(zero, spec) == 0
    with pytest.warns(UnderResolvedQuadrature):
        chemin_lerner_norm(linear_flow(f, times[:4]), ChLSpec(1, 0, 2, 2, (0.0, 0.1)))


def test_chemin_lerner_heat_flow_dense_oracle(grid16):
    m = (1, 1, 0)
    f = mode_field(grid16, m, component=2)
    k2 = 2.0
    b = 0.2
    times = np.linspace(0, b, 401)
    spec = ChLSpec.critical(2, 4, (0.0, b), q=2)
    got = chemin_lerner_norm(linear_flow(f, times), spec)
    s, q = spec.s, spec.q
    time_factor = math.sqrt((1 - math.exp(-2 * k2 * b)) / (2 * k2))

    def integrand(log_sigma):
        sigma = math.exp(log_sigma)
        inner = sigma * k2 * math.exp(-sigma * k2) * time_factor * cos_lp(4)
        return sigma ** (-s * q / 2) * inner**q

    value, _ = integrate.quad(integrand, -20, 8, limit=200)
    assert got == pytest.approx(value ** (1 / q), rel=1e-2)


def test_serrin_examples(grid16):
    f = random_field(grid16, 4, kmax=3)
    times = np.linspace(0, 0.5, 11)
    with pytest.raises(ValueError):
        serrin_norm(linear_flow(f, times), 4, 4)
    zero = linear_flow(SpectralVectorField.zeros(grid16), times)
    assert serrin_norm(zero, 8, 4) == 0
    const = type(zero)(times, np.broadcast_to(f.half, (11,) + f.half.shape), grid16)
    assert serrin_norm(const, 8, 4) == pytest.approx(lebesgue_norm(f, 4) * 0.5 ** (1 / 8), rel=1e-12)


def test_serrin_heat_flow_against_fine_quadrature(grid16):
    f = random_field(grid16, 6, kmax=3)
    coarse = serrin_norm(linear_flow(f, np.linspace(0, 0.5, 41)), 8, 4)
    fine_t = np.linspace(0, 0.5, 2001)
    vals = np.array([lebesgue_norm(heat_semigroup(f, t), 4) for t in fine_t[::10]])
    oracle = integrate.simpson(vals**8, x=fine_t[::10]) ** (1 / 8)
    assert coarse == pytest.approx(oracle, rel=1e-2)


def test_interpolation_check(grid32):
    a, b = BesovSpec(-0.5, 2, 2), BesovSpec(0.5, 4, 4)
    theta = 0.5
    inner = BesovSpec(0.0, 1 / (0.5 / 2 + 0.5 / 4), 1 / (0.5 / 2 + 0.5 / 4))
    single = mode_field(grid32, (3, 0, 0), component=1)
    # one block and one Lebesgue exponent: the ratio factors to 1
    same_p = (BesovSpec(-0.5, 4, 2), BesovSpec(0.5, 4, 4))
    assert interpolation_check(single, same_p, BesovSpec(0.0, 4, 8 / 3), theta) == pytest.approx(1.0, rel=1e-12)
    pair = mode_field(grid32, (1, 0, 0), component=1) + mode_field(grid32, (0, 0, 6), component=1)
    assert interpolation_check(pair, (a, b), inner, theta) <= 2
    worst = max(interpolation_check(random_field(grid32, s, kmax=5), (a, b), inner, theta) for s in range(100))
    assert worst < 10
    with pytest.raises(ValueError):
        interpolation_check(single, (a, b), BesovSpec(0.3, 2, 2), theta)


def test_sobolev_embedding_and_heat_decay_constants():
    g = Grid3(32)
    emb, decay4, decay_inf = [], [], []
    for seed in range(6):
        f = random_field(g, seed, kmax=5)
        emb.append(lebesgue_norm(f, 6) / besov_norm_lp(f, BesovSpec(0.5, 3, 6)))
        b4 = besov_norm_heat(f, BesovSpec(-0.25, 4, math.inf))
        binf = besov_norm_heat(f, BesovSpec(-1.0, math.inf, math.inf))
        ts = np.geomspace(1e-4, 1.0, 12)
        decay4.append(max(t**0.125 * lebesgue_norm(heat_semigroup(f, t), 4) for t in ts) / b4)
        decay_inf.append(max(t**0.5 * lebesgue_norm(heat_semigroup(f, t), math.inf) for t in ts) / binf)
    for values in (emb, decay4, decay_inf):
        assert max(values) / min(values) < 3
        assert max(values) < 10
