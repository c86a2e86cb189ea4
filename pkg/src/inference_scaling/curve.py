"""Empirical coverage curves and their CSV form (header ``k,coverage``)."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError, ParseError


@dataclass(frozen=True)
class CoverageCurve:
    """Ordered pass@k observations.

    ``ks`` must be strictly increasing positive integers and ``coverage`` must
    lie in [0, 1]. Arrays are copied and made read-only.
    """

    ks: np.ndarray
    coverage: np.ndarray
    label: str = field(default="", compare=False)

    def __post_init__(self):
        ks = np.asarray(self.ks)
        cov = np.asarray(self.coverage, dtype=float)
        if ks.ndim != 1 or cov.ndim != 1 or ks.shape != cov.shape:
            raise DomainError("ks and coverage must be 1-D arrays of equal length")
        if ks.size == 0:
            raise DomainError("a coverage curve needs at least one point")
        if not np.all(np.equal(np.mod(ks, 1), 0)):
            raise DomainError("k values must be integers")
        ks = ks.astype(np.int64)
        if np.any(ks < 0):
            raise DomainError("k values must be non-negative")
        if np.any(np.diff(ks) <= 0):
            raise DomainError("k values must be strictly increasing")
        if not np.all(np.isfinite(cov)) or np.any(cov < 0) or np.any(cov > 1):
            raise DomainError("coverage values must lie in [0, 1]")
        ks.setflags(write=False)
        cov = cov.copy()
        cov.setflags(write=False)
        object.__setattr__(self, "ks", ks)
        object.__setattr__(self, "coverage", cov)

    def __len__(self) -> int:
        return int(self.ks.size)

    @property
    def points(self) -> list[tuple[int, float]]:
        return [(int(k), float(c)) for k, c in zip(self.ks, self.coverage)]

    @classmethod
    def from_points(cls, points, label: str = "") -> "CoverageCurve":
        pts = list(points)
        return cls(np.array([p[0] for p in pts]), np.array([p[1] for p in pts], dtype=float), label)


def format_float(x: float) -> str:
    """Shortest repr that round-trips through float()."""
    return repr(float(x))


def read_curve_csv(path: str | Path, label: str | None = None) -> CoverageCurve:
    """Parse a ``k,coverage`` CSV. Errors carry the offending line number."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read curve file: {exc}", path=str(path)) from exc
    return parse_curve_text(text, label=label if label is not None else path.stem, path=str(path))


def parse_curve_text(text: str, label: str = "", path: str | None = None) -> CoverageCurve:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise ParseError("empty file", line=1, path=path)
    header = [h.strip() for h in rows[0]]
    if header != ["k", "coverage"]:
        raise ParseError(f"expected header 'k,coverage', got {','.join(rows[0])!r}", line=1, path=path)
    ks: list[int] = []
    cov: list[float] = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != 2:
            raise ParseError(f"expected 2 fields, got {len(row)}", line=lineno, path=path)
        k_txt, c_txt = row[0].strip(), row[1].strip()
        try:
            k = int(k_txt)
        except ValueError:
            raise ParseError(f"k is not an integer: {k_txt!r}", line=lineno, path=path) from None
        try:
            c = float(c_txt)
        except ValueError:
            raise ParseError(f"coverage is not a number: {c_txt!r}", line=lineno, path=path) from None
        if k < 1:
            raise ParseError(f"k must be a positive integer, got {k}", line=lineno, path=path)
        if not (0.0 <= c <= 1.0):
            raise ParseError(f"coverage must lie in [0, 1], got {c_txt}", line=lineno, path=path)
        if ks and k <= ks[-1]:
            raise ParseError(f"k values must be strictly increasing ({k} after {ks[-1]})", line=lineno, path=path)
        ks.append(k)
        cov.append(c)
    if not ks:
        raise ParseError("no observations", line=len(rows) + 1, path=path)
    return CoverageCurve(np.array(ks, dtype=np.int64), np.array(cov), label)


def write_curve_csv(curve: CoverageCurve, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("k,coverage\n")
        for k, c in zip(curve.ks, curve.coverage):
            fh.write(f"{int(k)},{format_float(c)}\n")
