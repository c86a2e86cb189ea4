"""Beta-failure coverage model.

Each task fails a single attempt with probability ``p ~ Beta(alpha, beta)``;
with independent attempts and a ceiling ``A`` the expected coverage is

    pass@k = A * (1 - <p^k>),   <p^k> = G(k+alpha) G(alpha+beta) / (G(alpha) G(k+alpha+beta))

and the inference loss is ``A * <p^k>``. Large ``k`` gives
``<p^k> ~ G(alpha+beta)/G(alpha) * k^-beta``. Everything is evaluated as
log-gamma differences, so k in the billions is fine.

The moment ``<p^k>`` is also the Laplace transform, at ``k``, of the density of
``sigma = log(1/p)``; :func:`invert_difficulty` runs that transform backwards
on an observed curve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import nnls

from .curve import CoverageCurve
from .errors import DomainError
from .specfun import ln_beta, ln_gamma_ratio

__all__ = [
    "BetaFailureModel",
    "DifficultyDensity",
    "SigmaGrid",
    "log_moment",
    "pass_at_k_exact",
    "pass_at_k_asymptotic",
    "asymptotic_validity_threshold",
    "inference_loss",
    "difficulty_density",
    "invert_difficulty",
]


def _check_k(k, minimum: int):
    arr = np.asarray(k)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    if arr.size and not np.all(np.equal(np.mod(arr, 1), 0)):
        raise DomainError("k must be integer valued")
    if np.any(arr < minimum):
        raise DomainError(f"k must be >= {minimum}")
    return arr.astype(float), scalar


@dataclass(frozen=True)
class BetaFailureModel:
    """Ceiling ``A`` in (0, 1] and Beta shape parameters of the failure probability."""

    ceiling: float
    alpha: float
    beta: float

    def __post_init__(self):
        for name in ("ceiling", "alpha", "beta"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise DomainError(f"{name} must be finite")
            object.__setattr__(self, name, v)
        if not (0.0 < self.ceiling <= 1.0):
            raise DomainError(f"ceiling must lie in (0, 1], got {self.ceiling}")
        if self.alpha <= 0 or self.beta <= 0:
            raise DomainError("alpha and beta must be positive")

    kind = "beta"

    def mean_failure(self) -> float:
        return self.alpha / (self.alpha + self.beta)

    def concentration(self) -> float:
        return self.alpha + self.beta

    def coverage(self, k):
        return pass_at_k_exact(self, k)

    def loss(self, k):
        return inference_loss(self, k)

    def to_dict(self) -> dict:
        return {"kind": "beta", "ceiling": self.ceiling, "alpha": self.alpha, "beta": self.beta}


def log_moment(model: BetaFailureModel, k):
    """ln <p^k> for integer ``k >= 0``; exactly 0 at ``k = 0``."""
    kf, scalar = _check_k(k, 0)
    a, b = model.alpha, model.beta
    res = ln_gamma_ratio(a, b) - ln_gamma_ratio(kf + a, b)
    return float(res[0]) if scalar else res


def pass_at_k_exact(model: BetaFailureModel, k):
    """Closed-form expected pass@k. Returns exactly 0 at ``k = 0``."""
    lm = log_moment(model, k)
    # "+ 0.0" turns the -0.0 at k = 0 into +0.0
    if np.ndim(lm):
        return model.ceiling * -np.expm1(lm) + 0.0
    return model.ceiling * -math.expm1(lm) + 0.0


def _log_asymptotic_moment(model: BetaFailureModel, kf: np.ndarray) -> np.ndarray:
    # G(beta)/B(alpha, beta) = G(alpha+beta)/G(alpha)
    return ln_gamma_ratio(model.alpha, model.beta) - model.beta * np.log(kf)


def pass_at_k_asymptotic(model: BetaFailureModel, k):
    """Large-k approximation ``A (1 - G(beta) k^-beta / B(alpha, beta))``.

    This is an approximation: at small ``k`` it can even go negative. Use
    :func:`asymptotic_validity_threshold` for the ``k`` beyond which it tracks
    the exact form to a given relative tolerance on the loss.
    """
    kf, scalar = _check_k(k, 1)
    res = model.ceiling * -np.expm1(_log_asymptotic_moment(model, kf))
    return float(res[0]) if scalar else res


def inference_loss(model: BetaFailureModel, k, asymptotic: bool = False):
    """Expected residual failure ``A <p^k>`` (or its ``k^-beta`` asymptote)."""
    if asymptotic:
        kf, scalar = _check_k(k, 1)
        res = model.ceiling * np.exp(_log_asymptotic_moment(model, kf))
        return float(res[0]) if scalar else res
    lm = log_moment(model, k)
    return model.ceiling * np.exp(lm) if np.ndim(lm) else model.ceiling * math.exp(lm)


def _asymptotic_deviation(model: BetaFailureModel, k: int) -> float:
    kf = np.array([float(k)])
    exact = log_moment(model, kf)[0]
    approx = _log_asymptotic_moment(model, kf)[0]
    return abs(math.expm1(approx - exact))


def asymptotic_validity_threshold(model: BetaFailureModel, rtol: float = 0.01, k_max: int = 10**15) -> int:
    """Smallest ``k*`` with ``|L_asym/L_exact - 1| <= rtol`` for all ``k >= k*``.

    The relative gap decays like ``beta (2 alpha + beta - 1) / (2k)``, so it
    is monotone once small; the search doubles ``k`` until the gap holds at
    ``k`` and ``2k``, then bisects down.
    """
    if rtol <= 0:
        raise DomainError("rtol must be positive")
    hi = 1
    while not (_asymptotic_deviation(model, hi) <= rtol and _asymptotic_deviation(model, 2 * hi) <= rtol):
        hi *= 2
        if hi > k_max:
            raise DomainError(f"asymptote does not reach rtol={rtol} below k={k_max}")
    lo = hi // 2
    while lo >= 1 and _asymptotic_deviation(model, lo) <= rtol:
        hi, lo = lo, lo // 2
    if lo == 0:
        return 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if _asymptotic_deviation(model, mid) <= rtol:
            hi = mid
        else:
            lo = mid
    return hi


def difficulty_density(model: BetaFailureModel, sigma):
    """Density of ``sigma = log(1/p)``: ``e^{-alpha s} (1 - e^{-s})^{beta-1} / B(alpha, beta)``."""
    s = np.asarray(sigma, dtype=float)
    scalar = s.ndim == 0
    if not np.all(np.isfinite(s)) or np.any(s <= 0):
        raise DomainError("sigma must be a finite positive real")
    log_f = -model.alpha * s + (model.beta - 1.0) * np.log(-np.expm1(-s)) - ln_beta(model.alpha, model.beta)
    f = np.exp(log_f)
    return float(f) if scalar else f


@dataclass(frozen=True)
class SigmaGrid:
    """Log-spaced sigma grid used by the inverse transform."""

    lo: float = 1e-4
    hi: float = 10.0
    size: int = 64
    ridge: float = 1e-6

    def __post_init__(self):
        if not (0 < self.lo < self.hi) or self.size < 2:
            raise DomainError("sigma grid needs 0 < lo < hi and size >= 2")
        if self.ridge < 0:
            raise DomainError("ridge must be non-negative")

    def nodes(self) -> np.ndarray:
        return np.geomspace(self.lo, self.hi, self.size)


@dataclass(frozen=True)
class DifficultyDensity:
    """Normalized non-negative weights on a sigma grid."""

    sigma_grid: np.ndarray
    weights: np.ndarray
    residual_norm: float = field(default=0.0, compare=False)

    def __post_init__(self):
        grid = np.asarray(self.sigma_grid, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if grid.shape != w.shape or grid.ndim != 1:
            raise DomainError("sigma_grid and weights must be equal-length 1-D arrays")
        if np.any(np.diff(grid) <= 0) or np.any(grid <= 0):
            raise DomainError("sigma_grid must be positive and strictly increasing")
        if np.any(w < 0):
            raise DomainError("weights must be non-negative")
        object.__setattr__(self, "sigma_grid", grid)
        object.__setattr__(self, "weights", w)

    @property
    def failure_grid(self) -> np.ndarray:
        return np.exp(-self.sigma_grid)

    def mean_failure(self) -> float:
        return float(np.dot(self.weights, self.failure_grid))

    def laplace(self, k) -> np.ndarray:
        """sum_j w_j e^{-sigma_j k}, the implied <p^k>."""
        kf = np.atleast_1d(np.asarray(k, dtype=float))
        return np.exp(-np.outer(kf, self.sigma_grid)) @ self.weights


def invert_difficulty(curve: CoverageCurve, ceiling: float, grid: SigmaGrid | None = None) -> DifficultyDensity:
    """Recover a difficulty density from a pass@k curve by non-negative least squares.

    Fits ``(A - pass@k)/A ~ sum_j w_j exp(-sigma_j k)`` with ``w >= 0`` and a
    ridge penalty, plus the exact row ``k = 0`` (``<p^0> = 1``) that pins the
    total mass. Weights are normalized afterwards; ``residual_norm`` is the
    data-row residual of the un-normalized solution.
    """
    grid = grid or SigmaGrid()
    if len(curve) < grid.size:
        raise DomainError(f"curve has {len(curve)} observations; the grid needs at least {grid.size}")
    cov = curve.coverage
    if not (0 < ceiling <= 1):
        raise DomainError("ceiling must lie in (0, 1]")
    if ceiling < cov.max():
        raise DomainError(f"ceiling {ceiling} is below the maximum observed coverage {cov.max()}")

    sig = grid.nodes()
    ks = curve.ks.astype(float)
    target = (ceiling - cov) / ceiling
    design = np.exp(-np.outer(ks, sig))

    rows = [np.ones((1, sig.size)), design]
    rhs = [np.ones(1), target]
    if grid.ridge > 0:
        rows.append(math.sqrt(grid.ridge) * np.eye(sig.size))
        rhs.append(np.zeros(sig.size))
    w, _ = nnls(np.vstack(rows), np.concatenate(rhs), maxiter=50 * sig.size)

    residual = float(np.linalg.norm(design @ w - target))
    total = w.sum()
    if total <= 0:
        raise DomainError("inverse transform returned no mass")
    return DifficultyDensity(sig, w / total, residual)
