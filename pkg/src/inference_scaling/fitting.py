"""Fit coverage laws to observed pass@k curves.

Both model families are fitted by Nelder-Mead over a bounded box. Each
parameter's box fraction is ``sin(u)^2`` of an unconstrained coordinate
(on a log scale for the Beta shapes), so the simplex never leaves the box
and an optimum on an edge is reached at finite ``u``. Starts come from a fixed 3x3x3 grid of box fractions; the eight
with the lowest objective are refined and the best refined start is
polished once more.

Objectives
----------
``log-complement`` (default)
    residual ``log(A <p^k>) - log(A - observed)``, i.e. misfit of the log
    loss. The tail carries the exponent, so this is what recovers ``beta``.
``linear``
    residual ``predicted - observed``.
``log-coverage``
    residual ``log(predicted) - log(observed)``. Matches multiplicative
    measurement noise on coverage; needs every observation positive.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy.optimize import minimize

from .correlated import CorrelatedTrialModel, pass_at_k_correlated
from .coverage import BetaFailureModel, log_moment, pass_at_k_exact
from .curve import CoverageCurve, parse_curve_text, read_curve_csv, write_curve_csv
from .errors import DomainError, NonConvergenceError
from .specfun import generalized_harmonic

__all__ = [
    "CoverageCurve",
    "ParamRange",
    "FitResult",
    "GoodnessOfFit",
    "beta_bounds",
    "correlated_bounds",
    "OBJECTIVES",
    "objective_residuals",
    "objective_value",
    "fit_beta_model",
    "fit_correlated_model",
    "goodness_of_fit",
    "parameter_band",
    "read_curve_csv",
    "parse_curve_text",
    "write_curve_csv",
]

Objective = Literal["log-complement", "linear", "log-coverage"]
OBJECTIVES = ("log-complement", "linear", "log-coverage")
MIN_POINTS = 4
CEILING_MARGIN = 1e-6
START_FRACTIONS = (0.2, 0.5, 0.8)
N_STARTS = 8
STALL_ITERS = 200
STALL_ABS = 1e-16
STALL_REL = 1e-9


@dataclass(frozen=True)
class ParamRange:
    """Closed interval for one parameter.

    With ``log_scale`` the search moves uniformly in ``log(value - anchor)``;
    an anchor lets the ceiling be searched on its gap above the largest
    observation, where all the interesting structure is.
    """

    lo: float
    hi: float
    log_scale: bool = False
    anchor: float = 0.0

    def __post_init__(self):
        if not (self.lo <= self.hi):
            raise DomainError(f"empty parameter range [{self.lo}, {self.hi}]")
        if self.log_scale and self.lo <= self.anchor:
            raise DomainError("log-scaled range needs its lower bound above the anchor")

    def from_unit(self, frac: float) -> float:
        if self.lo == self.hi:
            return self.lo
        if self.log_scale:
            a = math.log(self.lo - self.anchor)
            b = math.log(self.hi - self.anchor)
            v = self.anchor + math.exp(a + (b - a) * frac)
        else:
            v = self.lo + (self.hi - self.lo) * frac
        return min(max(v, self.lo), self.hi)

    def to_unit(self, value: float) -> float:
        if self.lo == self.hi:
            return 0.5
        if self.log_scale:
            a = math.log(self.lo - self.anchor)
            b = math.log(self.hi - self.anchor)
            return (math.log(value - self.anchor) - a) / (b - a)
        return (value - self.lo) / (self.hi - self.lo)

    def contains(self, value: float) -> bool:
        return self.lo <= value <= self.hi


def _squash(u: float) -> float:
    # periodic and bounded, so both box edges sit at finite u (0 and pi/2)
    return math.sin(u) ** 2


def _unsquash(frac: float) -> float:
    return math.asin(math.sqrt(min(max(frac, 0.0), 1.0)))


def _ceiling_range(curve: CoverageCurve, upper: float = 1.0) -> ParamRange:
    top = float(curve.coverage.max())
    lo = min(top + CEILING_MARGIN, upper)
    if lo >= upper:
        return ParamRange(upper, upper)
    return ParamRange(lo, upper, log_scale=True, anchor=top)


def beta_bounds(curve: CoverageCurve) -> dict[str, ParamRange]:
    """Default box: A in (max coverage, 1], alpha in [0.05, 50], beta in [0.05, 5]."""
    return {
        "ceiling": _ceiling_range(curve),
        "alpha": ParamRange(0.05, 50.0, log_scale=True),
        "beta": ParamRange(0.05, 5.0, log_scale=True),
    }


def correlated_bounds(curve: CoverageCurve) -> dict[str, ParamRange]:
    """Default box: A in (max coverage, 1], p in (0, 1), kappa in [0, 5]."""
    return {
        "ceiling": _ceiling_range(curve),
        "failure": ParamRange(1e-9, 1.0 - 1e-12),
        "kappa": ParamRange(0.0, 5.0),
    }


@dataclass(frozen=True)
class FitResult:
    model: BetaFailureModel | CorrelatedTrialModel
    objective_value: float
    converged: bool
    iterations: int
    residuals: np.ndarray
    objective: str = "log-complement"
    degenerate: bool = False
    notes: tuple[str, ...] = field(default=())

    def to_dict(self) -> dict:
        return {
            "model": self.model.to_dict(),
            "objective": self.objective,
            "objective_value": self.objective_value,
            "converged": self.converged,
            "iterations": self.iterations,
            "degenerate": self.degenerate,
            "notes": list(self.notes),
            "residuals": [float(r) for r in self.residuals],
        }


def _log_loss(model, ks: np.ndarray) -> np.ndarray:
    """log(A - pass@k) computed without forming the difference."""
    if isinstance(model, BetaFailureModel):
        return math.log(model.ceiling) + log_moment(model, ks)
    keff = generalized_harmonic(ks, model.kappa)
    if model.failure == 0.0:
        return np.full(ks.shape, -np.inf)
    return math.log(model.ceiling) + keff * math.log(model.failure)


def _coverage(model, ks: np.ndarray) -> np.ndarray:
    if isinstance(model, BetaFailureModel):
        return pass_at_k_exact(model, ks)
    return pass_at_k_correlated(model, ks)


def objective_residuals(curve: CoverageCurve, model, objective: Objective = "log-complement") -> np.ndarray:
    """Per-point residuals of ``model`` against ``curve`` in the objective's space."""
    ks = curve.ks
    if objective == "linear":
        return _coverage(model, ks) - curve.coverage
    if objective == "log-coverage":
        if np.any(curve.coverage <= 0):
            raise DomainError("log-coverage objective needs every observation above zero")
        with np.errstate(divide="ignore"):
            return np.log(_coverage(model, ks)) - np.log(curve.coverage)
    if objective == "log-complement":
        gap = model.ceiling - curve.coverage
        if np.any(gap <= 0):
            raise DomainError("log-complement objective needs every observation below the ceiling")
        return _log_loss(model, ks) - np.log(gap)
    raise DomainError(f"unknown objective {objective!r}")


def objective_value(curve: CoverageCurve, model, objective: Objective = "log-complement") -> float:
    r = objective_residuals(curve, model, objective)
    return float(np.dot(r, r))


def _check_curve(curve: CoverageCurve, objective: str):
    if objective not in OBJECTIVES:
        raise DomainError(f"unknown objective {objective!r}")
    if len(curve) < MIN_POINTS:
        raise DomainError(f"a fit needs at least {MIN_POINTS} points, got {len(curve)}")
    if np.any(curve.ks < 1):
        raise DomainError("fit curves need k >= 1")
    if objective == "log-complement" and curve.coverage.max() >= 1.0 - CEILING_MARGIN:
        raise DomainError("coverage reaches 1; the log-complement objective is undefined, use objective='linear'")
    if objective == "log-coverage" and curve.coverage.min() <= 0.0:
        raise DomainError("coverage has zeros; the log-coverage objective is undefined")


def _run_fit(curve, bounds, names, make_model, objective, max_iter):
    ranges = [bounds[n] for n in names]

    def to_params(u):
        return [r.from_unit(_squash(x)) for r, x in zip(ranges, u)]

    def f(u):
        try:
            model = make_model(*to_params(u))
            val = objective_value(curve, model, objective)
        except DomainError:
            return math.inf
        return val if math.isfinite(val) else math.inf

    grid = []
    for i, fa in enumerate(START_FRACTIONS):
        for j, fb in enumerate(START_FRACTIONS):
            for l, fc in enumerate(START_FRACTIONS):
                u0 = np.array([_unsquash(fa), _unsquash(fb), _unsquash(fc)])
                grid.append((f(u0), len(grid), u0))
    grid.sort(key=lambda t: (t[0], t[1]))
    starts = [u0 for val, _, u0 in grid[:N_STARTS]]

    options = {"maxiter": max_iter, "maxfev": 2 * max_iter, "xatol": 1e-6, "fatol": 1e-15}
    def run(u0):
        # a simplex drifting along a flat direction never meets xatol, so stop
        # once the best value has stalled for STALL_ITERS iterations
        state = {"best": math.inf, "stall": 0, "stalled": False}

        def watch(intermediate_result):
            fun = intermediate_result.fun
            if fun < state["best"] - max(STALL_ABS, STALL_REL * abs(fun)):
                state["best"], state["stall"] = fun, 0
                return
            state["stall"] += 1
            if state["stall"] >= STALL_ITERS:
                state["stalled"] = True
                raise StopIteration

        res = minimize(f, u0, method="Nelder-Mead", options=options, callback=watch)
        return res, bool(res.success) or state["stalled"]

    best = None
    best_ok = False
    any_converged = False
    for u0 in starts:
        res, ok = run(u0)
        any_converged |= ok
        if best is None or res.fun < best.fun:
            best, best_ok = res, ok
    polish, polish_ok = run(best.x)
    iterations = int(best.nit)
    if polish.fun <= best.fun:
        iterations += int(polish.nit)
        best_x, converged = polish.x, polish_ok or best_ok
    else:
        best_x, converged = best.x, best_ok
    model = make_model(*to_params(best_x))
    residuals = objective_residuals(curve, model, objective)
    result = FitResult(
        model=model,
        objective_value=float(np.dot(residuals, residuals)),
        converged=converged,
        iterations=iterations,
        residuals=residuals,
        objective=objective,
    )
    if not (converged or any_converged):
        raise NonConvergenceError("no start converged within the iteration cap", result)
    return result


def fit_beta_model(
    curve: CoverageCurve,
    bounds: dict[str, ParamRange] | None = None,
    objective: Objective = "log-complement",
    max_iter: int = 3000,
) -> FitResult:
    """Fit ``(A, alpha, beta)`` of the Beta-failure law. Deterministic."""
    _check_curve(curve, objective)
    box = beta_bounds(curve)
    if bounds:
        box.update(bounds)
    result = _run_fit(curve, box, ("ceiling", "alpha", "beta"), BetaFailureModel, objective, max_iter)
    if curve.coverage.max() == 0.0:
        return _flag_degenerate(result, "all observed coverage is zero")
    return result


def _flag_degenerate(result: FitResult, note: str) -> FitResult:
    return FitResult(
        result.model,
        result.objective_value,
        result.converged,
        result.iterations,
        result.residuals,
        result.objective,
        True,
        result.notes + (note,),
    )


def fit_correlated_model(
    curve: CoverageCurve,
    bounds: dict[str, ParamRange] | None = None,
    objective: Objective = "log-complement",
    max_iter: int = 3000,
) -> FitResult:
    """Fit ``(A, p, kappa)`` of the correlated-trials law. Deterministic.

    An all-zero curve is total failure: it returns ``p = 1`` directly and
    flags the result as degenerate.
    """
    _check_curve(curve, objective)
    box = correlated_bounds(curve)
    if bounds:
        box.update(bounds)
    if curve.coverage.max() == 0.0:
        model = CorrelatedTrialModel(box["ceiling"].hi, 1.0, box["kappa"].lo)
        residuals = objective_residuals(curve, model, objective)
        return FitResult(
            model,
            float(np.dot(residuals, residuals)),
            True,
            0,
            residuals,
            objective,
            True,
            ("all observed coverage is zero: p = 1, kappa unidentified",),
        )
    return _run_fit(curve, box, ("ceiling", "failure", "kappa"), CorrelatedTrialModel, objective, max_iter)


@dataclass(frozen=True)
class GoodnessOfFit:
    rmse: float
    max_abs_err: float
    r2_logspace: float | None
    warnings: tuple[str, ...] = field(default=())


def goodness_of_fit(curve: CoverageCurve, model) -> GoodnessOfFit:
    """Linear-space rmse and max error plus r^2 of log(A - coverage).

    The log-space r^2 is omitted (None, with a warning) when some observation
    reaches the model ceiling.
    """
    ks = curve.ks
    pred = _coverage(model, ks)
    err = pred - curve.coverage
    rmse = float(np.sqrt(np.mean(err**2)))
    max_abs = float(np.max(np.abs(err)))
    gap = model.ceiling - curve.coverage
    notes: list[str] = []
    r2 = None
    if np.any(gap <= 0):
        msg = "coverage reaches the model ceiling; log-space r^2 omitted"
        notes.append(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    else:
        y = np.log(gap)
        yhat = _log_loss(model, ks)
        ss_res = float(np.sum((y - yhat) ** 2))
        ss_tot = float(np.sum((y - y.mean()) ** 2))
        if ss_tot > 0:
            r2 = 1.0 - ss_res / ss_tot
        else:
            r2 = 1.0 if ss_res == 0 else -math.inf
    return GoodnessOfFit(rmse, max_abs, r2, tuple(notes))


def parameter_band(curve: CoverageCurve, result: FitResult, name: str = "beta", z: float = 1.96) -> tuple[float, float]:
    """Approximate ``z``-sigma band for one fitted parameter.

    Linearizes the objective residuals around the optimum (central finite
    differences) and scales ``(J^T J)^-1`` by the residual variance. This is a
    local, asymptotic band, not a bootstrap; with fewer than four degrees of
    freedom or a singular Jacobian the band is infinite.
    """
    model = result.model
    params = model.to_dict()
    kind = params.pop("kind")
    names = list(params)
    if name not in names:
        raise DomainError(f"{kind} model has no parameter {name!r}")
    cls = type(model)
    x0 = np.array([params[n] for n in names])
    m = len(curve)
    dof = m - len(names)
    if dof < 1:
        return (-math.inf, math.inf)
    jac = np.empty((m, len(names)))
    for j in range(len(names)):
        h = 1e-6 * max(abs(x0[j]), 1e-3)
        cols = []
        for sgn in (1.0, -1.0):
            x = x0.copy()
            x[j] += sgn * h
            try:
                cols.append(objective_residuals(curve, cls(*x), result.objective))
            except DomainError:
                cols.append(None)
        if cols[0] is not None and cols[1] is not None:
            jac[:, j] = (cols[0] - cols[1]) / (2 * h)
        elif cols[0] is not None:
            jac[:, j] = (cols[0] - result.residuals) / h
        elif cols[1] is not None:
            jac[:, j] = (result.residuals - cols[1]) / h
        else:
            return (-math.inf, math.inf)
    s2 = result.objective_value / dof
    try:
        cov = s2 * np.linalg.inv(jac.T @ jac)
    except np.linalg.LinAlgError:
        return (-math.inf, math.inf)
    var = cov[names.index(name), names.index(name)]
    if not (var >= 0 and math.isfinite(var)):
        return (-math.inf, math.inf)
    centre = x0[names.index(name)]
    half = z * math.sqrt(var)
    return (float(centre - half), float(centre + half))
