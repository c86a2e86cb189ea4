"""Monte Carlo oracles for the coverage laws.

Random streams
--------------
All randomness comes from numpy's Philox-4x64 counter-based generator.
Rows are processed in fixed blocks of ``BLOCK_ROWS`` samples and block ``b``
of stream ``s`` is keyed by ``SeedSequence(seed, spawn_key=(s, b))``. Block
boundaries never depend on the worker count, so a run is bit-identical for
any ``ISL_THREADS`` setting.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import betainc, ndtri

from .correlated import TrialMatrix
from .curve import CoverageCurve
from .errors import DomainError, ResourceGuardError
from .specfun import generalized_harmonic, ln_beta, ln_gamma, riemann_zeta

__all__ = [
    "BetaSpec",
    "PointSpec",
    "HutterSpec",
    "SimConfig",
    "SimResult",
    "SuccessMatrix",
    "parse_model_spec",
    "sample_failure_probs",
    "simulate_independent",
    "simulate_correlated",
    "hutter_error",
    "hutter_truncation",
    "empirical_pass_at_k",
    "curve_grid",
]

BLOCK_ROWS = 1 << 16
MAX_CORRELATED_TRIALS = 5000
# ~2 GiB of float64 for latent Gaussian matrices
MAX_LATENT_ENTRIES = 1 << 28
# ~2 GiB of packed success bits
MAX_PACKED_BYTES = 1 << 31
DENSE_CURVE_LIMIT = 10_000

_STREAM_PROBS = 0
_STREAM_TRIALS = 1
_STREAM_LATENT = 2
_STREAM_BASIS = 3


@dataclass(frozen=True)
class BetaSpec:
    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise DomainError("beta spec needs alpha > 0 and beta > 0")


@dataclass(frozen=True)
class PointSpec:
    p: float

    def __post_init__(self):
        if not (0.0 <= self.p <= 1.0):
            raise DomainError("point spec needs 0 <= p <= 1")


@dataclass(frozen=True)
class HutterSpec:
    alpha: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise DomainError("zipf-hutter spec needs alpha > 0")


def parse_model_spec(text: str):
    """``beta:A,B`` | ``point:P`` | ``zipf-hutter:ALPHA``."""
    name, _, args = text.partition(":")
    try:
        vals = [float(v) for v in args.split(",")] if args else []
    except ValueError:
        raise DomainError(f"cannot parse model spec {text!r}") from None
    name = name.strip().lower()
    if name == "beta" and len(vals) == 2:
        return BetaSpec(*vals)
    if name == "point" and len(vals) == 1:
        return PointSpec(vals[0])
    if name in ("zipf-hutter", "hutter") and len(vals) == 1:
        return HutterSpec(vals[0])
    raise DomainError(f"cannot parse model spec {text!r}; expected beta:a,b | point:p | zipf-hutter:alpha")


@dataclass(frozen=True)
class SimConfig:
    sample_count: int
    max_trials: int
    seed: int
    model_spec: BetaSpec | PointSpec | HutterSpec = field(default_factory=lambda: BetaSpec(1.0, 1.0))

    def __post_init__(self):
        if int(self.sample_count) < 1 or int(self.max_trials) < 1:
            raise DomainError("sample_count and max_trials must be >= 1")
        if not (0 <= int(self.seed) < 2**64):
            raise DomainError("seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "sample_count", int(self.sample_count))
        object.__setattr__(self, "max_trials", int(self.max_trials))
        object.__setattr__(self, "seed", int(self.seed))


class SuccessMatrix:
    """Binary n x k success matrix stored as packed bit rows."""

    def __init__(self, bits: np.ndarray, n: int, k: int):
        bits = np.asarray(bits, dtype=np.uint8)
        if bits.shape != (n, (k + 7) // 8):
            raise DomainError(f"packed shape {bits.shape} does not match {n} x {k}")
        self.bits = bits
        self.n = n
        self.k = k

    @classmethod
    def from_dense(cls, dense) -> "SuccessMatrix":
        d = np.asarray(dense)
        if d.ndim != 2:
            raise DomainError("success matrix must be two-dimensional")
        if not np.all((d == 0) | (d == 1)):
            raise DomainError("success matrix entries must be 0 or 1")
        return cls(np.packbits(d.astype(bool), axis=1), d.shape[0], d.shape[1])

    @property
    def nbytes(self) -> int:
        return int(self.bits.nbytes)

    def to_dense(self, rows: slice | None = None) -> np.ndarray:
        b = self.bits if rows is None else self.bits[rows]
        return np.unpackbits(b, axis=1, count=self.k).astype(bool)

    def _row_blocks(self):
        for start in range(0, self.n, BLOCK_ROWS):
            yield self.to_dense(slice(start, min(start + BLOCK_ROWS, self.n)))

    def row_counts(self) -> np.ndarray:
        return np.concatenate([blk.sum(axis=1) for blk in self._row_blocks()])

    def first_success(self) -> np.ndarray:
        """1-based index of the first success per row; ``k + 1`` when there is none."""
        out = []
        for blk in self._row_blocks():
            has = blk.any(axis=1)
            idx = np.argmax(blk, axis=1) + 1
            out.append(np.where(has, idx, self.k + 1))
        return np.concatenate(out)

    def __eq__(self, other):
        return (
            isinstance(other, SuccessMatrix)
            and self.n == other.n
            and self.k == other.k
            and np.array_equal(self.bits, other.bits)
        )


@dataclass(frozen=True)
class SimResult:
    empirical_curve: CoverageCurve
    draw_count: int
    success_matrix: SuccessMatrix | None = None
    latent: TrialMatrix | None = None
    failure_probs: np.ndarray | None = None


def _threads() -> int:
    env = os.environ.get("ISL_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def _block_rng(seed: int, stream: int, block: int) -> np.random.Generator:
    ss = np.random.SeedSequence(seed, spawn_key=(stream, block))
    return np.random.Generator(np.random.Philox(ss))


def _blocks(n: int) -> list[tuple[int, int, int]]:
    return [(b, s, min(s + BLOCK_ROWS, n)) for b, s in enumerate(range(0, n, BLOCK_ROWS))]


def _map_blocks(fn, n: int, threads: int | None = None) -> list:
    blocks = _blocks(n)
    workers = min(threads or _threads(), len(blocks))
    if workers <= 1:
        return [fn(*blk) for blk in blocks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda blk: fn(*blk), blocks))


def curve_grid(k_max: int) -> np.ndarray:
    """Every k up to ``DENSE_CURVE_LIMIT``; otherwise ~400 log-spaced values ending at ``k_max``."""
    if k_max <= DENSE_CURVE_LIMIT:
        return np.arange(1, k_max + 1)
    return np.unique(np.round(np.geomspace(1, k_max, 400)).astype(np.int64))


def sample_failure_probs(config: SimConfig, threads: int | None = None) -> np.ndarray:
    """``n`` i.i.d. per-task failure probabilities.

    Beta draws are ``X / (X + Y)`` with ``X ~ Gamma(alpha)``, ``Y ~ Gamma(beta)``.
    """
    spec = config.model_spec
    n = config.sample_count
    if isinstance(spec, PointSpec):
        return np.full(n, spec.p)
    if isinstance(spec, HutterSpec):
        raise DomainError("zipf-hutter specs have no failure distribution; use hutter_error")
    if not isinstance(spec, BetaSpec):
        raise DomainError(f"unsupported model spec {spec!r}")

    def draw(b, lo, hi):
        rng = _block_rng(config.seed, _STREAM_PROBS, b)
        x = rng.standard_gamma(spec.alpha, size=hi - lo)
        y = rng.standard_gamma(spec.beta, size=hi - lo)
        s = x + y
        # both gammas can underflow to 0 for tiny shapes; fall back to the mean
        with np.errstate(invalid="ignore", divide="ignore"):
            p = np.where(s > 0, x / s, spec.alpha / (spec.alpha + spec.beta))
        return p

    return np.concatenate(_map_blocks(draw, n, threads))


def _curve_from_first_success(first: np.ndarray, ks: np.ndarray, n: int, label: str) -> CoverageCurve:
    k_max = int(ks[-1])
    capped = np.minimum(first, k_max + 1)
    counts = np.bincount(capped, minlength=k_max + 2)
    solved = np.cumsum(counts[1 : k_max + 1])
    cov = solved[ks - 1] / n
    return CoverageCurve(ks, cov, label)


def simulate_independent(
    config: SimConfig,
    probs: np.ndarray,
    keep_matrix: bool = False,
    threads: int | None = None,
) -> SimResult:
    """Independent Bernoulli attempts; empirical first-k pass@k.

    With ``keep_matrix`` every (sample, trial) outcome is realized and packed,
    and the curve is read off that matrix. Otherwise only each row's first
    success time is drawn (geometric by inversion), which is the sufficient
    statistic for first-k coverage and costs one draw per row.
    """
    probs = np.asarray(probs, dtype=float)
    n, k_max = config.sample_count, config.max_trials
    if probs.shape != (n,):
        raise DomainError(f"expected {n} failure probabilities, got shape {probs.shape}")
    if np.any(probs < 0) or np.any(probs > 1) or not np.all(np.isfinite(probs)):
        raise DomainError("failure probabilities must lie in [0, 1]")
    ks = curve_grid(k_max)

    if keep_matrix:
        nbytes = n * ((k_max + 7) // 8)
        if nbytes > MAX_PACKED_BYTES:
            raise ResourceGuardError(
                f"packed success matrix would need {nbytes / 2**30:.2f} GiB (limit {MAX_PACKED_BYTES / 2**30:.0f} GiB)"
            )

        def realize(b, lo, hi):
            rng = _block_rng(config.seed, _STREAM_TRIALS, b)
            u = rng.random((hi - lo, k_max))
            success = u >= probs[lo:hi, None]
            return np.packbits(success, axis=1)

        bits = np.concatenate(_map_blocks(realize, n, threads))
        matrix = SuccessMatrix(bits, n, k_max)
        curve = _curve_from_first_success(matrix.first_success(), ks, n, "simulated")
        return SimResult(curve, n * k_max, matrix, None, probs)

    def first_times(b, lo, hi):
        rng = _block_rng(config.seed, _STREAM_TRIALS, b)
        u = 1.0 - rng.random(hi - lo)  # (0, 1]
        p = probs[lo:hi]
        out = np.full(hi - lo, k_max + 1, dtype=np.int64)
        certain = p == 0.0
        out[certain] = 1
        live = (p > 0.0) & (p < 1.0)
        # P(T > t) = p^t  =>  T = floor(ln u / ln p) + 1
        t = np.floor(np.log(u[live]) / np.log(p[live])) + 1.0
        out[live] = np.minimum(t, k_max + 1).astype(np.int64)
        return out

    first = np.concatenate(_map_blocks(first_times, n, threads))
    curve = _curve_from_first_success(first, ks, n, "simulated")
    return SimResult(curve, n, None, None, probs)


def random_orthogonal(k: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed orthogonal matrix (QR of a Gaussian with sign correction)."""
    g = rng.standard_normal((k, k))
    q, r = np.linalg.qr(g)
    return q * np.sign(np.diag(r))


def simulate_correlated(
    config: SimConfig,
    p: float,
    kappa: float,
    keep_latent: bool = True,
    threads: int | None = None,
) -> SimResult:
    """Correlated failures from a Gaussian copula with power-law spectrum.

    Latent trial vectors are ``z = Q diag(sqrt(lam)) g`` with ``lam_j = j^-kappa``
    (normalized to mean 1), ``Q`` a seeded random orthogonal basis and ``g``
    standard normal. Trial ``t`` fails when ``z_t`` is below the ``p``-quantile
    of its marginal, so every trial fails with probability exactly ``p``.
    """
    n, k = config.sample_count, config.max_trials
    if k > MAX_CORRELATED_TRIALS:
        raise ResourceGuardError(
            f"k_max = {k} exceeds {MAX_CORRELATED_TRIALS}: the dense {k} x {k} covariance is too large"
        )
    if not (0.0 <= p <= 1.0):
        raise DomainError("p must lie in [0, 1]")
    if not (kappa >= 0 and math.isfinite(kappa)):
        raise DomainError("kappa must be finite and non-negative")
    if keep_latent and n * k > MAX_LATENT_ENTRIES:
        raise ResourceGuardError(f"latent matrix of {n} x {k} floats exceeds the {MAX_LATENT_ENTRIES} entry guard")

    lam = np.arange(1, k + 1, dtype=float) ** (-kappa)
    lam *= k / lam.sum()
    basis = random_orthogonal(k, _block_rng(config.seed, _STREAM_BASIS, 0))
    # rows of z are g @ mix, mix = diag(sqrt(lam)) Q^T
    mix = np.sqrt(lam)[:, None] * basis.T
    sd = np.sqrt(np.einsum("ij,ij->j", mix, mix))
    with np.errstate(over="ignore"):
        thresh = sd * ndtri(p) if 0.0 < p < 1.0 else np.full(k, -np.inf if p == 0.0 else np.inf)

    def realize(b, lo, hi):
        rng = _block_rng(config.seed, _STREAM_LATENT, b)
        z = rng.standard_normal((hi - lo, k)) @ mix
        success = z >= thresh
        return z if keep_latent else None, np.packbits(success, axis=1)

    parts = _map_blocks(realize, n, threads)
    bits = np.concatenate([pb for _, pb in parts])
    matrix = SuccessMatrix(bits, n, k)
    ks = curve_grid(k)
    curve = _curve_from_first_success(matrix.first_success(), ks, n, "simulated-correlated")
    latent = TrialMatrix(np.concatenate([z for z, _ in parts])) if keep_latent else None
    return SimResult(curve, n * k, matrix, latent, None)


def _zipf_tail_bound(t: float, alpha: float) -> float:
    # sum_{i > T} i^-(1+alpha) <= T^-alpha / alpha
    return t ** (-alpha) / alpha


def hutter_truncation(alpha: float, tail_tol: float = 1e-8) -> int:
    """Smallest truncation ``T`` with ``sum_{i>T} theta_i < tail_tol``."""
    if not (alpha > 0 and math.isfinite(alpha)):
        raise DomainError("Zipf exponent alpha must be positive; the weights are not normalizable otherwise")
    z = riemann_zeta(1.0 + alpha)
    log_t = -math.log(tail_tol * alpha * z) / alpha
    if log_t > math.log(2.0**62):
        raise DomainError(f"alpha = {alpha} needs a truncation beyond 2^62 for tail {tail_tol}")
    t = max(1, math.ceil(math.exp(log_t)))
    while _zipf_tail_bound(t, alpha) / generalized_harmonic(t, 1.0 + alpha) >= tail_tol:
        t = math.ceil(t * 1.01)
    return t


def hutter_error(n: int, alpha: float, truncation: int | None = None, tail_tol: float = 1e-8) -> float:
    """Expected single-feature error ``sum_i theta_i (1 - theta_i)^n`` of a perfect memorizer.

    ``theta_i = i^-(1+alpha) / Z`` for ``i <= T``. The first million terms are
    summed directly; beyond that the sum is an incomplete beta integral plus
    Euler-Maclaurin end corrections, which is what makes truncations like
    1e15 (needed for alpha = 0.5) tractable.
    """
    if n < 0 or int(n) != n:
        raise DomainError("n must be a non-negative integer")
    n = int(n)
    t_min = hutter_truncation(alpha, tail_tol)
    if truncation is None:
        truncation = t_min
    elif truncation < t_min:
        raise DomainError(f"truncation {truncation} leaves tail mass >= {tail_tol}; need at least {t_min}")
    s = 1.0 + alpha
    z = generalized_harmonic(truncation, s)
    head_n = min(truncation, 10**6)
    i = np.arange(1, head_n + 1, dtype=float)
    theta = i ** (-s) / z
    head = float(np.sum(theta * np.exp(n * np.log1p(-theta))))
    if truncation == head_n:
        return head

    m, t = float(head_n), float(truncation)

    def f(x):
        th = x ** (-s) / z
        return th * math.exp(n * math.log1p(-th))

    def fprime(x):
        th = x ** (-s) / z
        dth = -s * th / x
        return dth * math.exp((n - 1) * math.log1p(-th)) * (1.0 - th - n * th)

    a = alpha / s
    th_m, th_t = m ** (-s) / z, t ** (-s) / z
    scale = z ** (-1.0 / s) / s
    integral = scale * math.exp(ln_beta(a, n + 1.0)) * (betainc(a, n + 1.0, th_m) - betainc(a, n + 1.0, th_t))
    tail = integral + 0.5 * (f(t) - f(m)) + (fprime(t) - fprime(m)) / 12.0
    return head + tail


def empirical_pass_at_k(matrix, k: int, estimator: str = "first-k") -> float:
    """Coverage of a realized success matrix.

    ``first-k``: fraction of rows with a success among the first ``k`` columns.
    ``unbiased``: mean over rows of ``1 - C(T - c, k) / C(T, k)`` with ``T``
    columns and ``c`` successes in the row, evaluated with log-gammas.
    """
    if not isinstance(matrix, SuccessMatrix):
        matrix = SuccessMatrix.from_dense(matrix)
    big_t = matrix.k
    if int(k) != k or k < 1:
        raise DomainError("k must be a positive integer")
    k = int(k)
    if k > big_t:
        raise DomainError(f"k = {k} exceeds the {big_t} available trials")
    if estimator == "first-k":
        first = matrix.first_success()
        return float(np.count_nonzero(first <= k)) / matrix.n
    if estimator == "unbiased":
        c = matrix.row_counts().astype(float)
        fails = big_t - c
        out = np.ones(matrix.n)
        live = fails >= k
        if np.any(live):
            fl = fails[live]
            log_ratio = (
                ln_gamma(fl + 1.0)
                - ln_gamma(fl - k + 1.0)
                - ln_gamma(float(big_t) + 1.0)
                + ln_gamma(float(big_t - k) + 1.0)
            )
            out[live] = -np.expm1(log_ratio)
        return float(out.mean())
    raise DomainError(f"unknown estimator {estimator!r}; expected 'first-k' or 'unbiased'")
