import math
import warnings

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from inference_scaling.correlated import (
    CorrelatedTrialModel,
    KappaEstimate,
    Spectrum,
    TrialMatrix,
    default_rank_range,
    effective_k,
    eigen_spectrum,
    error_correlation_matrix,
    estimate_kappa,
    pass_at_k_correlated,
    plateau_coverage,
    read_trial_matrix_csv,
    write_trial_matrix_csv,
)
from inference_scaling.errors import DomainError, EstimationError, ParseError
from inference_scaling.simulator import SimConfig, simulate_correlated

# 1 - 2^(-pi^2/6), mpmath
PLATEAU_P05_K2 = 0.680238991495765


def test_model_validation():
    for bad in [(0, 0.5, 1), (1, 1.5, 1), (1, 0.5, -1), (1, math.nan, 0)]:
        with pytest.raises(DomainError):
            CorrelatedTrialModel(*bad)
    m = CorrelatedTrialModel(0.9, 0.4, 1.2)
    assert m.to_dict() == {"kind": "correlated", "ceiling": 0.9, "failure": 0.4, "kappa": 1.2}


def test_effective_k_limits():
    ks = np.arange(1, 100)
    np.testing.assert_array_equal(effective_k(ks, 0.0), ks)
    for kappa in (0.3, 1.0, 2.5):
        assert effective_k(1, kappa) == 1.0


def test_effective_k_direct_sum():
    want = float(mp.fsum(mp.mpf(i) ** mp.mpf(-1.5) for i in range(1, 1001)))
    assert effective_k(1000, 1.5) == pytest.approx(want, rel=1e-14)


def test_kappa_zero_reduces_to_independent():
    ks = np.arange(1, 10001)
    for a, p in [(1.0, 0.5), (0.8, 0.97), (0.3, 0.999)]:
        m = CorrelatedTrialModel(a, p, 0.0)
        np.testing.assert_allclose(pass_at_k_correlated(m, ks), a * (1 - p**ks), rtol=0, atol=1e-12)


def test_plateau_value():
    assert 1 - 2 ** (-math.pi**2 / 6) == pytest.approx(PLATEAU_P05_K2, abs=1e-15)
    m = CorrelatedTrialModel(1.0, 0.5, 2.0)
    assert plateau_coverage(m) == pytest.approx(PLATEAU_P05_K2, abs=1e-14)
    assert pass_at_k_correlated(m, 10**6) == pytest.approx(PLATEAU_P05_K2, abs=1e-6)


@given(st.floats(0.05, 1.0), st.floats(0.01, 0.99), st.floats(2.0, 5.0))
@settings(max_examples=60, deadline=None)
def test_plateau_reached(a, p, kappa):
    m = CorrelatedTrialModel(a, p, kappa)
    assert abs(pass_at_k_correlated(m, 10**6) - plateau_coverage(m)) <= 1e-6


@given(st.floats(0.05, 1.0), st.floats(0.01, 0.99), st.floats(1.05, 2.0))
@settings(max_examples=60, deadline=None)
def test_plateau_gap_within_tail_bound(a, p, kappa):
    # zeta - H_k <= k^(1-kappa)/(kappa-1), so the gap closes slowly for kappa near 1
    k = 10**6
    m = CorrelatedTrialModel(a, p, kappa)
    gap = plateau_coverage(m) - pass_at_k_correlated(m, k)
    bound = a * math.log(1 / p) * k ** (1 - kappa) / (kappa - 1)
    assert -1e-12 <= gap <= bound + 1e-12


def test_plateau_below_one_is_ceiling():
    assert plateau_coverage(CorrelatedTrialModel(0.7, 0.5, 0.9)) == 0.7


def test_certain_failure_and_success():
    ks = np.array([1, 10, 10**7])
    assert np.all(pass_at_k_correlated(CorrelatedTrialModel(0.95, 1.0, 1.3), ks) == 0.0)
    np.testing.assert_array_equal(pass_at_k_correlated(CorrelatedTrialModel(0.95, 0.0, 1.3), ks), 0.95)


@given(st.floats(0.05, 1.0), st.floats(0.0, 1.0), st.floats(0.0, 4.0))
@settings(max_examples=100, deadline=None)
def test_non_decreasing(a, p, kappa):
    ks = np.unique(np.round(np.geomspace(1, 1e9, 200)).astype(np.int64))
    c = pass_at_k_correlated(CorrelatedTrialModel(a, p, kappa), ks)
    assert np.all(np.diff(c) >= -1e-15)
    assert np.all(c <= a + 1e-15)


def test_trial_matrix_validation():
    with pytest.raises(DomainError):
        TrialMatrix(np.ones((1, 3)))
    with pytest.raises(DomainError):
        TrialMatrix(np.ones((3, 1)))
    with pytest.raises(DomainError):
        TrialMatrix(np.array([[1.0, np.inf], [0, 0]]))
    t = TrialMatrix(np.array([[1.0, -2.0], [0.5, 0.0]]))
    assert not t.is_nonnegative
    assert t.n == 2 and t.k == 2


def test_identical_columns_rank_one():
    rng = np.random.default_rng(0)
    col = rng.random(100)
    t = TrialMatrix(np.repeat(col[:, None], 6, axis=1))
    eps = error_correlation_matrix(t)
    w = eigen_spectrum(eps).eigenvalues
    assert w[0] == pytest.approx(np.trace(eps), rel=1e-12)
    assert np.all(w[1:] <= 1e-12 * w[0])


def test_iid_noise_near_identity():
    n, k = 40000, 8
    cfg = SimConfig(n, k, seed=12)
    # kappa = 0: flat spectrum, so the latent columns are i.i.d. standard normal
    latent = simulate_correlated(cfg, 0.5, 0.0).latent
    eps = error_correlation_matrix(latent)
    off = eps - np.diag(np.diag(eps))
    assert np.max(np.abs(off)) <= 4 / math.sqrt(n)
    np.testing.assert_allclose(np.diag(eps), 1.0, atol=4 * math.sqrt(2 / n))


def test_correlation_matrix_uncentered_vs_centered():
    x = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 9.0]])
    t = TrialMatrix(x)
    np.testing.assert_allclose(error_correlation_matrix(t), x.T @ x / 3)
    xc = x - x.mean(axis=0)
    np.testing.assert_allclose(error_correlation_matrix(t, center=True), xc.T @ xc / 3)
    assert np.array_equal(error_correlation_matrix(t), error_correlation_matrix(t).T)


def test_correlation_matrix_is_psd():
    rng = np.random.default_rng(7)
    for _ in range(100):
        n, k = rng.integers(2, 40), rng.integers(2, 25)
        t = TrialMatrix(rng.random((n, k)) * rng.integers(0, 2, (n, k)))
        w = np.linalg.eigvalsh(error_correlation_matrix(t))
        assert w.min() >= -1e-10 * max(w.max(), 0)
        Spectrum(eigen_spectrum(error_correlation_matrix(t)).eigenvalues)


def test_spectrum_rejects_indefinite():
    with pytest.raises(DomainError):
        Spectrum(np.array([1.0, -0.5]))
    s = Spectrum(np.array([1e-20 * -1, 2.0, 1.0]))
    np.testing.assert_array_equal(s.eigenvalues, [2.0, 1.0, 0.0])


@pytest.mark.parametrize("kappa", [0.5, 1.0, 2.0, 3.3])
def test_estimate_kappa_exact_power_law(kappa):
    lam = np.arange(1, 301, dtype=float) ** -kappa
    est = estimate_kappa(Spectrum(lam))
    assert est.kappa == pytest.approx(kappa, abs=1e-10)
    assert est.r2 == pytest.approx(1.0, abs=1e-12)
    assert est.fit_r2 == est.r2
    assert est.rank_range == (2, 270)


def test_estimate_kappa_flat():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        est = estimate_kappa(Spectrum(np.full(50, 3.0)))
    assert est.kappa == pytest.approx(0.0, abs=1e-12)


def test_default_rank_range():
    assert default_rank_range(200) == (2, 180)
    assert default_rank_range(10) == (2, 9)


def test_estimate_kappa_errors():
    with pytest.raises(EstimationError):
        estimate_kappa(Spectrum(np.array([5.0, 0.0, 0.0, 0.0, 0.0])))
    with pytest.raises(EstimationError):
        estimate_kappa(Spectrum(np.arange(1, 11, dtype=float)[::-1]), (2, 3))
    with pytest.raises(EstimationError):
        estimate_kappa(Spectrum(np.ones(10)), (0, 5))


def test_estimate_kappa_truncates_at_zero_eigenvalues():
    lam = np.concatenate([np.arange(1, 21, dtype=float) ** -1.5, np.zeros(10)])
    with pytest.warns(RuntimeWarning, match="truncated"):
        est = estimate_kappa(Spectrum(lam))
    assert est.rank_range == (2, 20)
    assert est.kappa == pytest.approx(1.5, abs=1e-10)
    assert any("truncated" in w for w in est.warnings)


def test_low_r2_warning():
    rng = np.random.default_rng(1)
    lam = np.sort(rng.random(60) + 1.0)[::-1]
    with pytest.warns(RuntimeWarning, match="r\\^2"):
        est = estimate_kappa(Spectrum(lam))
    assert est.r2 < 0.9


@pytest.mark.parametrize("target", [0.8, 1.2, 2.0])
def test_simulated_kappa_roundtrip(target):
    res = simulate_correlated(SimConfig(4000, 200, seed=2024), 0.5, target)
    est = estimate_kappa(eigen_spectrum(error_correlation_matrix(res.latent)))
    assert abs(est.kappa / target - 1) <= 0.10


def test_trial_matrix_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(3)
    x = rng.standard_normal((5, 4))
    path = tmp_path / "m.csv"
    write_trial_matrix_csv(x, path)
    assert path.read_text().splitlines()[0] == "trial_1,trial_2,trial_3,trial_4"
    np.testing.assert_array_equal(read_trial_matrix_csv(path).values, x)
    write_trial_matrix_csv(x > 0, path, header=False, integer=True)
    np.testing.assert_array_equal(read_trial_matrix_csv(path).values, (x > 0).astype(float))


def test_trial_matrix_csv_errors(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("trial_1,trial_2\n1,2\n3,4\n5\n6,7\n")
    with pytest.raises(ParseError, match="line 4"):
        read_trial_matrix_csv(path)
    path.write_text("1,2\n3,x\n")
    with pytest.raises(ParseError, match="line 2"):
        read_trial_matrix_csv(path)
    with pytest.raises(ParseError):
        read_trial_matrix_csv(tmp_path / "missing.csv")


def test_kappa_estimate_fields():
    est = KappaEstimate(1.0, 0.99, (2, 9))
    assert est.warnings == ()
