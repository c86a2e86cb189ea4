"""Correlated-trial coverage and the trial-correlation spectral pipeline.

When repeated attempts are correlated, ``k`` attempts behave like
``k_eff = H_k(kappa) = sum_{i<=k} i^-kappa`` independent ones and a task
with failure probability ``p`` is solved with probability
``1 - p^{k_eff}``. For ``kappa > 1`` coverage saturates at
``A (1 - p^{zeta(kappa)})``.

The exponent can be read off data: build the uncentered second-moment
matrix of per-trial errors across samples, take its eigenvalues, and fit a
line to log-eigenvalue against log-rank.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .eigen import symmetric_eigh
from .errors import DomainError, EstimationError, ParseError
from .specfun import generalized_harmonic, riemann_zeta

__all__ = [
    "CorrelatedTrialModel",
    "TrialMatrix",
    "Spectrum",
    "KappaEstimate",
    "effective_k",
    "pass_at_k_correlated",
    "plateau_coverage",
    "error_correlation_matrix",
    "eigen_spectrum",
    "default_rank_range",
    "estimate_kappa",
    "read_trial_matrix_csv",
    "write_trial_matrix_csv",
]

PSD_RTOL = 1e-10
# eigenvalues at or below this fraction of the largest count as zero
ZERO_EIGEN_RTOL = 1e-12
LOW_R2_WARNING = 0.9


@dataclass(frozen=True)
class CorrelatedTrialModel:
    """Ceiling ``A``, shared per-task failure probability ``p`` and decay exponent ``kappa``."""

    ceiling: float
    failure: float
    kappa: float

    kind = "correlated"

    def __post_init__(self):
        for name in ("ceiling", "failure", "kappa"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise DomainError(f"{name} must be finite")
            object.__setattr__(self, name, v)
        if not (0.0 < self.ceiling <= 1.0):
            raise DomainError(f"ceiling must lie in (0, 1], got {self.ceiling}")
        if not (0.0 <= self.failure <= 1.0):
            raise DomainError(f"failure must lie in [0, 1], got {self.failure}")
        if self.kappa < 0:
            raise DomainError("kappa must be non-negative")

    def coverage(self, k):
        return pass_at_k_correlated(self, k)

    def loss(self, k):
        return self.ceiling - pass_at_k_correlated(self, k)

    def to_dict(self) -> dict:
        return {"kind": "correlated", "ceiling": self.ceiling, "failure": self.failure, "kappa": self.kappa}


def effective_k(k, kappa: float):
    """Number of independent-equivalent trials among ``k`` correlated ones."""
    return generalized_harmonic(k, kappa)


def pass_at_k_correlated(model: CorrelatedTrialModel, k):
    """``A (1 - p^{H_k(kappa)})`` for integer ``k >= 1`` (scalar or array)."""
    keff = np.asarray(effective_k(k, model.kappa), dtype=float)
    p = model.failure
    if p == 0.0:
        res = np.full(keff.shape, model.ceiling)
    elif p == 1.0:
        res = np.zeros(keff.shape)
    else:
        res = model.ceiling * -np.expm1(keff * math.log(p))
    return float(res) if res.ndim == 0 else res


def plateau_coverage(model: CorrelatedTrialModel) -> float:
    """Limit of coverage as k grows: ``A (1 - p^zeta(kappa))`` for kappa > 1, else ``A``."""
    if model.kappa <= 1.0 or model.failure == 0.0:
        return model.ceiling
    if model.failure == 1.0:
        return 0.0
    return model.ceiling * -math.expm1(riemann_zeta(model.kappa) * math.log(model.failure))


@dataclass(frozen=True)
class TrialMatrix:
    """n samples x k trials of per-trial errors (or 0/1 failure indicators).

    Entries must be finite. Errors are usually non-negative, but latent
    (pre-threshold) generator output is signed, so sign is not enforced;
    see :attr:`is_nonnegative`.
    """

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True)
        if v.ndim != 2:
            raise DomainError("trial matrix must be two-dimensional")
        n, k = v.shape
        if n < 2 or k < 2:
            raise DomainError(f"trial matrix needs n >= 2 and k >= 2, got {n} x {k}")
        if not np.all(np.isfinite(v)):
            raise DomainError("trial matrix entries must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def k(self) -> int:
        return self.values.shape[1]

    @property
    def is_nonnegative(self) -> bool:
        return bool(np.all(self.values >= 0))


def error_correlation_matrix(trials: TrialMatrix, center: bool = False) -> np.ndarray:
    """``eps[k, k'] = (1/n) sum_i err[i, k] err[i, k']``.

    Uncentered by default. With ``center=True`` the column means are
    removed first (a covariance). The result is exactly symmetric.
    """
    x = trials.values
    if trials.n < 2:
        raise DomainError("need at least two samples")
    if center:
        x = x - x.mean(axis=0)
    m = (x.T @ x) / trials.n
    return 0.5 * (m + m.T)


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues sorted non-increasing; tiny negative round-off clamped to 0."""

    eigenvalues: np.ndarray

    def __post_init__(self):
        w = np.array(self.eigenvalues, dtype=float, copy=True)
        if w.ndim != 1 or w.size == 0:
            raise DomainError("spectrum must be a non-empty 1-D array")
        w = -np.sort(-w)
        top = max(w[0], 0.0)
        if w[-1] < -PSD_RTOL * top:
            raise DomainError(f"matrix is not positive semidefinite (min eigenvalue {w[-1]:.3g})")
        w[w < 0] = 0.0
        w.setflags(write=False)
        object.__setattr__(self, "eigenvalues", w)

    def __len__(self) -> int:
        return int(self.eigenvalues.size)

    @property
    def ranks(self) -> np.ndarray:
        return np.arange(1, self.eigenvalues.size + 1)


def eigen_spectrum(matrix, method: str = "auto") -> Spectrum:
    """Full eigenvalue set of a symmetric PSD matrix, sorted descending."""
    w, _ = symmetric_eigh(matrix, vectors=False, method=method)
    return Spectrum(w)


@dataclass(frozen=True)
class KappaEstimate:
    kappa: float
    r2: float
    rank_range: tuple[int, int]
    warnings: tuple[str, ...] = field(default=())

    @property
    def fit_r2(self) -> float:
        return self.r2


def default_rank_range(k: int) -> tuple[int, int]:
    """Ranks 2 .. floor(0.9 k): drop the leading eigenvalue and the bottom 10%."""
    return 2, max(2, int(math.floor(0.9 * k)))


def estimate_kappa(spectrum: Spectrum, rank_range: tuple[int, int] | None = None) -> KappaEstimate:
    """Power-law exponent of the eigenvalue decay by log-log least squares.

    ``rank_range`` is a 1-based inclusive ``(first, last)`` pair. If zero
    eigenvalues fall inside it, the range is cut at the last positive one and
    a warning is attached.
    """
    lam = spectrum.eigenvalues
    k = lam.size
    lo, hi = rank_range if rank_range is not None else default_rank_range(k)
    lo, hi = int(lo), int(hi)
    if not (1 <= lo <= hi <= k):
        raise EstimationError(f"rank range ({lo}, {hi}) is not inside [1, {k}]")
    notes: list[str] = []
    zero_tol = ZERO_EIGEN_RTOL * lam[0] if lam[0] > 0 else 0.0
    positive = lam > zero_tol
    seg = positive[lo - 1 : hi]
    if not np.all(seg):
        first_zero = lo + int(np.argmin(seg))
        if first_zero - 1 < lo:
            raise EstimationError(f"no positive eigenvalues in rank range ({lo}, {hi})")
        notes.append(
            f"zero eigenvalues inside ranks ({lo}, {hi}); fit range truncated at rank {first_zero - 1}"
        )
        hi = first_zero - 1
    if hi - lo + 1 < 3:
        raise EstimationError(
            f"need at least 3 positive eigenvalues to fit, have {max(hi - lo + 1, 0)} in ranks ({lo}, {hi})"
        )
    x = np.log(np.arange(lo, hi + 1, dtype=float))
    y = np.log(lam[lo - 1 : hi])
    xm, ym = x.mean(), y.mean()
    sxx = np.sum((x - xm) ** 2)
    slope = np.sum((x - xm) * (y - ym)) / sxx
    resid = y - (ym + slope * (x - xm))
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((y - ym) ** 2))
    if ss_tot > 0:
        r2 = 1.0 - ss_res / ss_tot
    else:
        r2 = 1.0 if ss_res == 0 else 0.0
    if r2 < LOW_R2_WARNING:
        notes.append(f"low r^2 = {r2:.3f}: spectrum is not well described by a power law")
    for msg in notes:
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return KappaEstimate(float(-slope), float(r2), (lo, hi), tuple(notes))


def read_trial_matrix_csv(path: str | Path) -> TrialMatrix:
    """Read a rectangular CSV of real values; an optional header row is skipped.

    The header is recognized when its first cell does not parse as a number.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read matrix file: {exc}", path=str(path)) from exc
    rows = list(csv.reader(io.StringIO(text)))
    start = 0
    if rows:
        try:
            float(rows[0][0])
        except (ValueError, IndexError):
            start = 1
    data: list[list[float]] = []
    width = None
    for lineno, row in enumerate(rows[start:], start=start + 1):
        if not row or all(not c.strip() for c in row):
            continue
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise ParseError(f"row has {len(row)} fields, expected {width}", line=lineno, path=str(path))
        try:
            data.append([float(c) for c in row])
        except ValueError:
            raise ParseError("non-numeric value", line=lineno, path=str(path)) from None
    if not data:
        raise ParseError("no data rows", line=start + 1, path=str(path))
    try:
        return TrialMatrix(np.array(data))
    except DomainError as exc:
        raise ParseError(str(exc), path=str(path)) from exc


def write_trial_matrix_csv(values, path: str | Path, header: bool = True, integer: bool = False) -> None:
    arr = np.asarray(values)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if header:
            fh.write(",".join(f"trial_{j + 1}" for j in range(arr.shape[1])) + "\n")
        if integer:
            for row in arr.astype(np.int64):
                fh.write(",".join(str(int(v)) for v in row) + "\n")
        else:
            for row in arr:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
