"""Real-argument special functions: log-gamma, log-beta, zeta, harmonic sums.

Every gamma-family evaluation in the package goes through this module. The
functions accept Python scalars or numpy arrays; scalar input gives a float
back.

ln_gamma switches between four regimes:

* ``x < 0.5``: shift up with ``lnG(x) = lnG(x + 1) - ln(x)``.
* ``0.5 <= x < 2.5``: Taylor series of ``lnG(1 + z)`` about the zeros at 1 and 2,
  so relative accuracy survives where ``lnG`` itself vanishes.
* ``2.5 <= x < 10``: Lanczos (g = 7, 9 terms).
* ``x >= 10``: Stirling series with Bernoulli corrections.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

__all__ = [
    "LogDomainValue",
    "ln_gamma",
    "ln_beta",
    "ln_gamma_ratio",
    "riemann_zeta",
    "generalized_harmonic",
    "HARMONIC_DIRECT_LIMIT",
]

LN_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
EULER_GAMMA = 0.57721566490153286060651209008240243

# B_2, B_4, ..., B_24
_BERNOULLI_EVEN = (
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
    43867.0 / 798.0,
    -174611.0 / 330.0,
    854513.0 / 138.0,
    -236364091.0 / 2730.0,
)

_LANCZOS_G = 7.0
_LANCZOS_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)

_STIRLING_MIN = 10.0
# B_2j / (2j (2j-1)) for j = 9 down to 1
_STIRLING_COEF = tuple(_BERNOULLI_EVEN[j - 1] / (2 * j * (2 * j - 1)) for j in range(9, 0, -1))
_RATIO_ASYMPTOTIC_MIN = 10.0

# largest argument accepted by math.exp
_LOG_MAX_FLOAT = math.log(np.finfo(float).max)

HARMONIC_DIRECT_LIMIT = 10**6


@dataclass(frozen=True)
class LogDomainValue:
    """A positive quantity stored as its natural log."""

    log_magnitude: float

    def to_linear(self) -> float:
        if self.log_magnitude > _LOG_MAX_FLOAT:
            raise OverflowError(
                f"exp({self.log_magnitude:.6g}) exceeds the float range "
                f"(max log {_LOG_MAX_FLOAT:.6g})"
            )
        return math.exp(self.log_magnitude)

    def __mul__(self, other: "LogDomainValue") -> "LogDomainValue":
        return LogDomainValue(self.log_magnitude + other.log_magnitude)

    def __truediv__(self, other: "LogDomainValue") -> "LogDomainValue":
        return LogDomainValue(self.log_magnitude - other.log_magnitude)


def _as_float_array(x, name: str) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite")
    return arr, arr.ndim == 0


def _ret(arr: np.ndarray, scalar: bool):
    return float(arr) if scalar else arr


def _stirling_correction(x: np.ndarray) -> np.ndarray:
    """Sum of B_2k / (2k (2k-1) x^(2k-1)); ~1e-17 truncation for x >= 10."""
    inv = 1.0 / x
    inv2 = inv * inv
    # Horner from the highest retained term down
    acc = _STIRLING_COEF[0]
    for c in _STIRLING_COEF[1:]:
        acc = acc * inv2 + c
    return acc * inv


def _ln_gamma_stirling(x: np.ndarray) -> np.ndarray:
    return (x - 0.5) * np.log(x) - x + LN_SQRT_2PI + _stirling_correction(x)


def _ln_gamma_lanczos(x: np.ndarray) -> np.ndarray:
    xm = x - 1.0
    a = np.full_like(xm, _LANCZOS_COEF[0])
    for i in range(1, len(_LANCZOS_COEF)):
        a = a + _LANCZOS_COEF[i] / (xm + i)
    t = xm + _LANCZOS_G + 0.5
    return LN_SQRT_2PI + (xm + 0.5) * np.log(t) - t + np.log(a)


_TAYLOR_COEF: np.ndarray | None = None
_TAYLOR_POW = np.arange(1.0, 60.0)


def _taylor_coefficients() -> np.ndarray:
    # lnG(1+z) = -gamma z + sum_{k>=2} (-1)^k zeta(k)/k z^k, |z| <= 0.5 needs ~56 terms
    global _TAYLOR_COEF
    if _TAYLOR_COEF is None:
        coef = [0.0, -EULER_GAMMA]
        for k in range(2, 60):
            coef.append((-1) ** k * riemann_zeta(float(k)) / k)
        _TAYLOR_COEF = np.array(coef)
    return _TAYLOR_COEF


def _ln_gamma_1pz(z: np.ndarray) -> np.ndarray:
    coef = _taylor_coefficients()
    # one power table instead of a 59-step Horner loop; |z| <= 0.5 keeps it stable
    return (z[..., None] ** _TAYLOR_POW) @ coef[1:]


def _ln_gamma_positive(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    small = x < 0.5
    near1 = (x >= 0.5) & (x < 1.5)
    near2 = (x >= 1.5) & (x < 2.5)
    mid = (x >= 2.5) & (x < _STIRLING_MIN)
    big = x >= _STIRLING_MIN
    if small.any():
        xs = x[small]
        out[small] = _ln_gamma_1pz(xs) - np.log(xs)
    if near1.any():
        out[near1] = _ln_gamma_1pz(x[near1] - 1.0)
    if near2.any():
        z = x[near2] - 2.0
        out[near2] = _ln_gamma_1pz(z) + np.log1p(z)
    if mid.any():
        out[mid] = _ln_gamma_lanczos(x[mid])
    if big.any():
        out[big] = _ln_gamma_stirling(x[big])
    return out


def _ln_gamma_scalar(x: float) -> float:
    # same regimes as _ln_gamma_positive, on plain floats
    if x >= _STIRLING_MIN:
        inv = 1.0 / x
        inv2 = inv * inv
        acc = _STIRLING_COEF[0]
        for c in _STIRLING_COEF[1:]:
            acc = acc * inv2 + c
        return (x - 0.5) * math.log(x) - x + LN_SQRT_2PI + acc * inv
    if x >= 2.5:
        xm = x - 1.0
        a = _LANCZOS_COEF[0]
        for i in range(1, len(_LANCZOS_COEF)):
            a += _LANCZOS_COEF[i] / (xm + i)
        t = xm + _LANCZOS_G + 0.5
        return LN_SQRT_2PI + (xm + 0.5) * math.log(t) - t + math.log(a)
    return float(_ln_gamma_positive(np.array([x]))[0])


def ln_gamma(x):
    """Natural log of the gamma function for positive real ``x``.

    Raises DomainError for ``x <= 0`` or non-finite input.
    """
    arr, scalar = _as_float_array(x, "x")
    if np.any(arr <= 0):
        raise DomainError("ln_gamma requires x > 0")
    res = _ln_gamma_positive(np.atleast_1d(arr)).reshape(arr.shape)
    return _ret(res, scalar)


def ln_beta(a, b):
    """ln B(a, b) = lnG(a) + lnG(b) - lnG(a + b)."""
    a_arr, sa = _as_float_array(a, "a")
    b_arr, sb = _as_float_array(b, "b")
    if np.any(a_arr <= 0) or np.any(b_arr <= 0):
        raise DomainError("ln_beta requires a > 0 and b > 0")
    a_arr, b_arr = np.broadcast_arrays(a_arr, b_arr)
    a1 = np.atleast_1d(a_arr)
    b1 = np.atleast_1d(b_arr)
    # lnG(lo) - [lnG(hi + lo) - lnG(hi)] avoids cancelling two large log-gammas
    lo = np.minimum(a1, b1)
    hi = np.maximum(a1, b1)
    res = _ln_gamma_positive(lo) - np.atleast_1d(ln_gamma_ratio(hi, lo))
    return _ret(res.reshape(a_arr.shape), sa and sb)


def ln_gamma_ratio(x, d):
    """lnG(x + d) - lnG(x) without cancellation at large ``x``.

    For ``x >= 10`` the Stirling expansions of both terms are subtracted
    analytically, so the result keeps full relative accuracy even when both
    log-gammas are huge (e.g. x = 1e9, d = 0.35).
    """
    if isinstance(x, float) and isinstance(d, float) and math.isfinite(x) and math.isfinite(d):
        if x > 0 and x + d > 0 and (x < _RATIO_ASYMPTOTIC_MIN or x + d < _RATIO_ASYMPTOTIC_MIN):
            return _ln_gamma_scalar(x + d) - _ln_gamma_scalar(x)
    x_arr, sx = _as_float_array(x, "x")
    d_arr, sd = _as_float_array(d, "d")
    x_arr, d_arr = np.broadcast_arrays(x_arr, d_arr)
    xs = np.atleast_1d(x_arr).astype(float)
    ds = np.atleast_1d(d_arr).astype(float)
    if np.any(xs <= 0) or np.any(xs + ds <= 0):
        raise DomainError("ln_gamma_ratio requires x > 0 and x + d > 0")
    out = np.empty_like(xs)
    asym = (xs >= _RATIO_ASYMPTOTIC_MIN) & (xs + ds >= _RATIO_ASYMPTOTIC_MIN)
    if asym.any():
        xa, da = xs[asym], ds[asym]
        out[asym] = (
            da * np.log(xa)
            + (xa + da - 0.5) * np.log1p(da / xa)
            - da
            + (_stirling_correction(xa + da) - _stirling_correction(xa))
        )
    rest = ~asym
    if rest.any():
        xr, dr = xs[rest], ds[rest]
        out[rest] = _ln_gamma_positive(xr + dr) - _ln_gamma_positive(xr)
    return _ret(out.reshape(x_arr.shape), sx and sd)


def riemann_zeta(kappa: float, depth: int = 16) -> float:
    """Riemann zeta for real ``kappa > 1`` by Euler-Maclaurin summation.

    ``depth`` is the number of leading terms summed explicitly; the remainder
    is the integral tail plus twelve Bernoulli corrections. With the default
    depth the truncation error is far below double precision on (1, 50].
    """
    s = float(kappa)
    if not math.isfinite(s) or s <= 1.0:
        raise DomainError(f"riemann_zeta requires kappa > 1, got {kappa!r}")
    if depth < 2:
        raise DomainError("depth must be >= 2")
    n = depth
    terms = [k ** (-s) for k in range(n - 1, 0, -1)]
    head = math.fsum(terms)
    tail = n ** (1.0 - s) / (s - 1.0) + 0.5 * n ** (-s)
    # rising factorial s (s+1) ... (s+2j-2) and (2j)!
    rising = s
    fact = 2.0
    power = n ** (-s - 1.0)
    corr = 0.0
    for j, b in enumerate(_BERNOULLI_EVEN, start=1):
        corr += b / fact * rising * power
        rising *= (s + 2 * j - 1) * (s + 2 * j)
        fact *= (2 * j + 1) * (2 * j + 2)
        power /= n * n
    return head + tail + corr


def _harmonic_prefix(kappa: float, upto: int) -> np.ndarray:
    """Cumulative sums H_1..H_upto accumulated in extended precision."""
    i = np.arange(1, upto + 1, dtype=float)
    return np.cumsum((i ** (-kappa)).astype(np.longdouble)).astype(float)


def _harmonic_tail_em(m: int, k: np.ndarray, kappa: float) -> np.ndarray:
    """sum_{i=m+1}^{k} i^-kappa by Euler-Maclaurin; m >= 1e6 so two corrections suffice."""
    kf = k.astype(float)
    mf = float(m)
    if kappa == 1.0:
        integral = np.log(kf / mf)
    else:
        integral = (kf ** (1.0 - kappa) - mf ** (1.0 - kappa)) / (1.0 - kappa)
    ends = 0.5 * (kf ** (-kappa) - mf ** (-kappa))
    deriv = (-kappa * kf ** (-kappa - 1.0) + kappa * mf ** (-kappa - 1.0)) / 12.0
    return integral + ends + deriv


def generalized_harmonic(k, kappa: float):
    """H_k(kappa) = sum_{i=1}^{k} i^-kappa.

    Direct summation for ``k <= HARMONIC_DIRECT_LIMIT``. Beyond it, ``kappa > 1``
    switches to ``zeta(kappa) + (1/2 - k/(kappa-1)) k^-kappa`` and
    ``kappa <= 1`` adds an Euler-Maclaurin tail to the direct prefix.
    ``k`` may be an integer array.
    """
    kap = float(kappa)
    if not math.isfinite(kap) or kap < 0:
        raise DomainError(f"kappa must be a finite non-negative real, got {kappa!r}")
    k_arr = np.asarray(k)
    scalar = k_arr.ndim == 0
    k_arr = np.atleast_1d(k_arr)
    if k_arr.size and not np.all(np.equal(np.mod(k_arr, 1), 0)):
        raise DomainError("k must be integer valued")
    k_int = k_arr.astype(np.int64)
    if np.any(k_int < 1):
        raise DomainError("generalized_harmonic requires k >= 1")

    out = np.empty(k_int.shape, dtype=float)
    if kap == 0.0:
        out[:] = k_int.astype(float)
        return float(out[0]) if scalar else out

    direct = k_int <= HARMONIC_DIRECT_LIMIT
    if direct.any():
        upto = int(k_int[direct].max())
        prefix = _harmonic_prefix(kap, upto)
        out[direct] = prefix[k_int[direct] - 1]
    far = ~direct
    if far.any():
        kf = k_int[far].astype(float)
        if kap > 1.0:
            out[far] = riemann_zeta(kap) + (0.5 - kf / (kap - 1.0)) * kf ** (-kap)
        else:
            m = HARMONIC_DIRECT_LIMIT
            head = _harmonic_prefix(kap, m)[m - 1]
            out[far] = head + _harmonic_tail_em(m, k_int[far], kap)
    return float(out[0]) if scalar else out
