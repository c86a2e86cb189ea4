import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from inference_scaling.coverage import (
    BetaFailureModel,
    DifficultyDensity,
    SigmaGrid,
    asymptotic_validity_threshold,
    difficulty_density,
    inference_loss,
    invert_difficulty,
    log_moment,
    pass_at_k_asymptotic,
    pass_at_k_exact,
)
from inference_scaling.curve import CoverageCurve
from inference_scaling.errors import DomainError

TYPICAL = BetaFailureModel(0.9, 5.0, 0.35)

# mpmath, 30 digits: 0.9 * (1 - G(105) G(5.35) / (G(5) G(105.35)))
TYPICAL_PASS_AT_100 = 0.596629791455134683609093405781
# smallest k beyond which |asymptotic/exact - 1| of the loss stays <= 1%, mpmath scan
TYPICAL_K_STAR = 163


models = st.builds(
    BetaFailureModel,
    st.floats(0.05, 1.0),
    st.floats(0.05, 50.0),
    st.floats(0.05, 5.0),
)


def test_model_validation():
    for bad in [(0.0, 1, 1), (1.1, 1, 1), (1, 0, 1), (1, 1, -1), (1, math.nan, 1)]:
        with pytest.raises(DomainError):
            BetaFailureModel(*bad)
    m = BetaFailureModel(1, 3, 1)
    assert m.mean_failure() == pytest.approx(0.75)
    assert m.concentration() == pytest.approx(4.0)
    assert m.to_dict() == {"kind": "beta", "ceiling": 1.0, "alpha": 3.0, "beta": 1.0}


def test_uniform_beta_is_k_over_k_plus_1():
    m = BetaFailureModel(1, 1, 1)
    ks = np.arange(0, 10001)
    np.testing.assert_allclose(pass_at_k_exact(m, ks), ks / (ks + 1.0), rtol=0, atol=1e-12)
    assert pass_at_k_exact(m, 3) == pytest.approx(0.75, abs=1e-15)


def test_k_zero_is_exactly_zero():
    assert pass_at_k_exact(TYPICAL, 0) == 0.0
    assert math.copysign(1.0, pass_at_k_exact(TYPICAL, 0)) == 1.0
    assert inference_loss(TYPICAL, 0) == pytest.approx(0.9, abs=1e-15)


def test_k_one_gives_mean():
    for a, b in [(1, 1), (5, 0.35), (0.3, 7), (20, 2)]:
        m = BetaFailureModel(1.0, a, b)
        assert 1.0 - pass_at_k_exact(m, 1) == pytest.approx(a / (a + b), abs=1e-12)
        m = BetaFailureModel(0.7, a, b)
        assert pass_at_k_exact(m, 1) == pytest.approx(0.7 * b / (a + b), abs=1e-12)


def test_typical_matches_mpmath():
    assert pass_at_k_exact(TYPICAL, 100) == pytest.approx(TYPICAL_PASS_AT_100, rel=1e-13)


@pytest.mark.parametrize("a,b", [(0.5, 2.0), (3.0, 0.2), (12.0, 1.5)])
@pytest.mark.parametrize("k", [1, 7, 1000, 10**6, 10**9])
def test_log_moment_matches_mpmath(a, b, k):
    am, bm = mp.mpf(a), mp.mpf(b)
    want = float(mp.log(mp.beta(k + am, bm) / mp.beta(am, bm)))
    assert log_moment(BetaFailureModel(1, a, b), k) == pytest.approx(want, rel=1e-12)


def test_negative_or_fractional_k_rejected():
    with pytest.raises(DomainError):
        pass_at_k_exact(TYPICAL, -1)
    with pytest.raises(DomainError):
        pass_at_k_exact(TYPICAL, 2.5)
    with pytest.raises(DomainError):
        inference_loss(TYPICAL, 0, asymptotic=True)
    with pytest.raises(DomainError):
        pass_at_k_asymptotic(TYPICAL, 0)


@given(models)
@settings(max_examples=150, deadline=None)
def test_complement_identity(model):
    ks = np.array([0, 1, 2, 5, 17, 100, 12345, 10**7])
    total = pass_at_k_exact(model, ks) + inference_loss(model, ks)
    np.testing.assert_allclose(total, model.ceiling, rtol=0, atol=1e-10)


@given(models)
@settings(max_examples=150, deadline=None)
def test_monotone_and_bounded(model):
    ks = np.unique(np.round(np.geomspace(1, 1e8, 300)).astype(np.int64))
    c = pass_at_k_exact(model, ks)
    assert np.all(np.diff(c) >= 0)
    assert np.all(c <= model.ceiling) and np.all(c >= 0)
    below = c[:-1] < model.ceiling - 1e-12
    assert np.all(np.diff(c)[below] > 0)


def test_asymptotic_uniform_case():
    m = BetaFailureModel(1, 1, 1)
    assert pass_at_k_asymptotic(m, 100) == pytest.approx(0.99, abs=1e-15)
    assert pass_at_k_exact(m, 100) == pytest.approx(100 / 101, abs=1e-15)


def test_asymptotic_close_at_large_k():
    k = 10**4
    assert abs(pass_at_k_exact(TYPICAL, k) - pass_at_k_asymptotic(TYPICAL, k)) <= 1e-3


def test_asymptotic_deviation_decays():
    devs = []
    for k in (10**2, 10**3, 10**4):
        exact = 1 - pass_at_k_exact(TYPICAL, k) / TYPICAL.ceiling
        approx = 1 - pass_at_k_asymptotic(TYPICAL, k) / TYPICAL.ceiling
        devs.append(abs(approx / exact - 1))
    assert devs[0] > devs[1] > devs[2]


def test_asymptotic_approaches_ceiling_monotonically():
    ks = np.geomspace(1, 1e12, 50).round().astype(np.int64)
    c = pass_at_k_asymptotic(TYPICAL, np.unique(ks))
    assert np.all(np.diff(c) > 0)
    assert TYPICAL.ceiling - c[-1] < 1e-3


def test_validity_threshold_matches_oracle():
    k_star = asymptotic_validity_threshold(TYPICAL)
    assert k_star == TYPICAL_K_STAR
    ks = np.arange(k_star, k_star + 5000)
    exact = inference_loss(TYPICAL, ks)
    approx = inference_loss(TYPICAL, ks, asymptotic=True)
    assert np.all(np.abs(approx / exact - 1) <= 0.01)
    assert abs(inference_loss(TYPICAL, k_star - 1, True) / inference_loss(TYPICAL, k_star - 1) - 1) > 0.01


def test_asymptotic_loss_slope_is_minus_beta():
    rng = np.random.default_rng(3)
    for beta in rng.uniform(0.1, 2.0, 10):
        m = BetaFailureModel(1.0, 2.0, beta)
        slope = math.log(inference_loss(m, 10**5, True) / inference_loss(m, 10**3, True)) / math.log(100)
        assert slope == pytest.approx(-beta, abs=1e-6)


def test_difficulty_density_uniform_is_exponential():
    m = BetaFailureModel(1, 1, 1)
    sig = np.array([0.01, 0.5, 3.0, 20.0])
    np.testing.assert_allclose(difficulty_density(m, sig), np.exp(-sig), rtol=1e-13)


@pytest.mark.parametrize("a,b", [(1, 1), (5, 0.35), (2, 3), (0.7, 1.4)])
def test_difficulty_density_mean_by_quadrature(a, b):
    m = BetaFailureModel(1, a, b)
    # substitute sigma = t^(1/b) to tame the sigma^(b-1) endpoint
    f = lambda t: math.exp(-(t ** (1 / b))) * difficulty_density(m, t ** (1 / b)) * t ** (1 / b - 1) / b
    val, _ = integrate.quad(f, 0, math.inf, limit=200)
    assert val == pytest.approx(a / (a + b), rel=1e-7)


def test_difficulty_density_singular_endpoint():
    sig = np.array([1e-4, 1e-6, 1e-8])
    f = difficulty_density(TYPICAL, sig)
    # f ~ C sigma^(beta - 1) as sigma -> 0
    ratios = f / sig ** (TYPICAL.beta - 1)
    assert ratios[2] == pytest.approx(ratios[1], rel=1e-4)
    assert f[2] > f[1] > f[0]
    with pytest.raises(DomainError):
        difficulty_density(TYPICAL, 0.0)


def test_sigma_grid_defaults():
    g = SigmaGrid()
    nodes = g.nodes()
    assert nodes.size == 64
    assert nodes[0] == pytest.approx(1e-4) and nodes[-1] == pytest.approx(10.0)
    assert g.ridge == 1e-6
    with pytest.raises(DomainError):
        SigmaGrid(lo=1.0, hi=0.5)


def test_density_type_invariants():
    with pytest.raises(DomainError):
        DifficultyDensity(np.array([1.0, 0.5]), np.array([0.5, 0.5]))
    with pytest.raises(DomainError):
        DifficultyDensity(np.array([0.5, 1.0]), np.array([1.5, -0.5]))


def _point_mass_curve(sigma0, ks):
    return CoverageCurve(ks, 1.0 - np.exp(-sigma0 * ks))


@pytest.mark.parametrize("cell", [5, 10, 25, 40, 55])
def test_invert_point_mass(cell):
    grid = SigmaGrid()
    nodes = grid.nodes()
    sigma0 = nodes[cell]
    # a cell is only resolvable if some k has sigma0 * k of order one
    ks = np.unique(np.round(np.geomspace(1, 1e5, 128)).astype(np.int64))
    dens = invert_difficulty(_point_mass_curve(sigma0, ks), 1.0, grid)
    assert dens.weights.sum() == pytest.approx(1.0, abs=1e-8)
    near = dens.weights[cell - 1 : cell + 2].sum()
    assert near >= 0.9


def test_invert_beta22_mean():
    ks = np.arange(1, 65)
    model = BetaFailureModel(1, 2, 2)
    dens = invert_difficulty(CoverageCurve(ks, pass_at_k_exact(model, ks)), 1.0)
    assert abs(dens.mean_failure() - 0.5) <= 0.05
    # forward transform of the recovered density reproduces the curve
    np.testing.assert_allclose(dens.laplace(ks), inference_loss(model, ks), atol=5e-3)


def test_invert_zero_curve_puts_mass_at_first_cell():
    ks = np.arange(1, 65)
    dens = invert_difficulty(CoverageCurve(ks, np.zeros(64)), 1.0)
    assert dens.weights[0] == pytest.approx(1.0, abs=1e-6)


def test_invert_errors():
    ks = np.arange(1, 65)
    curve = CoverageCurve(ks, pass_at_k_exact(TYPICAL, ks))
    with pytest.raises(DomainError):
        invert_difficulty(curve, 0.5)
    with pytest.raises(DomainError):
        invert_difficulty(CoverageCurve(ks[:10], curve.coverage[:10]), 1.0)
