"""Inference FLOPS accounting and the coverage/cost trade-off.

Total cost of ``k`` completions is ``C = N_p F + N_d F k``. Substituting
``k = (C/F - N_p) / N_d`` into the large-k coverage law gives coverage and
loss as power laws in budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .coverage import BetaFailureModel, inference_loss, pass_at_k_exact
from .errors import DomainError, InfeasibleError
from .specfun import ln_gamma_ratio

__all__ = [
    "CostParams",
    "total_cost",
    "completions_for_budget",
    "coverage_of_cost",
    "loss_of_cost",
    "k_for_target_coverage",
    "cost_for_target_coverage",
]

# relative slack when flooring budget/cost ratios, so a budget computed as
# total_cost(k) is not rounded down to k - 1
_FLOOR_SLACK = 1e-12


@dataclass(frozen=True)
class CostParams:
    prompt_tokens: int
    decode_tokens: int
    flops_per_token: float

    def __post_init__(self):
        if self.prompt_tokens <= 0 or self.decode_tokens <= 0:
            raise DomainError("prompt and decode token counts must be positive")
        if not (self.flops_per_token > 0 and math.isfinite(self.flops_per_token)):
            raise DomainError("flops_per_token must be a positive finite number")

    def min_budget(self) -> float:
        """Cost of a single completion."""
        return total_cost(self, 1)


def total_cost(params: CostParams, k):
    """``N_p F + N_d F k``. Accepts an integer or an array of integers."""
    k_arr = np.asarray(k)
    if np.any(k_arr < 1):
        raise DomainError("k must be >= 1")
    f = params.flops_per_token
    res = params.prompt_tokens * f + params.decode_tokens * f * k_arr
    return float(res) if np.ndim(res) == 0 else res.astype(float)


def _normalized_k(params: CostParams, budget: float) -> float:
    if not (budget > 0 and math.isfinite(budget)):
        raise DomainError("budget must be a positive finite number")
    k_cont = (budget / params.flops_per_token - params.prompt_tokens) / params.decode_tokens
    if k_cont < 1.0 - _FLOOR_SLACK:
        raise InfeasibleError(
            f"budget {budget:.6g} does not fund one completion; minimum feasible budget is {params.min_budget():.6g}"
        )
    return k_cont


def completions_for_budget(params: CostParams, budget: float) -> int:
    """Whole completions a budget pays for (a partial attempt yields nothing)."""
    k_cont = _normalized_k(params, budget)
    return max(1, int(math.floor(k_cont * (1.0 + _FLOOR_SLACK))))


def _asymptotic_log_loss(model: BetaFailureModel, k_cont: float) -> float:
    return math.log(model.ceiling) + ln_gamma_ratio(model.alpha, model.beta) - model.beta * math.log(k_cont)


def coverage_of_cost(model: BetaFailureModel, params: CostParams, budget: float, exact: bool = False) -> float:
    """Coverage bought by ``budget`` FLOPS.

    Default is the large-k power law evaluated at the continuous
    ``k = (C/F - N_p)/N_d``; it underestimates coverage at small k.
    ``exact=True`` floors to whole completions and uses the exact law.
    """
    if exact:
        return float(pass_at_k_exact(model, completions_for_budget(params, budget)))
    k_cont = _normalized_k(params, budget)
    return model.ceiling - math.exp(_asymptotic_log_loss(model, k_cont))


def loss_of_cost(model: BetaFailureModel, params: CostParams, budget: float, exact: bool = False) -> float:
    """Inference loss bought by ``budget`` FLOPS; decays as budget^-beta."""
    if exact:
        return float(inference_loss(model, completions_for_budget(params, budget)))
    k_cont = _normalized_k(params, budget)
    return math.exp(_asymptotic_log_loss(model, k_cont))


def _asymptotic_k(model: BetaFailureModel, target: float) -> float:
    # k = ((A - target) B(alpha, beta) / (A G(beta)))^(-1/beta)
    log_rel_loss = math.log((model.ceiling - target) / model.ceiling)
    return math.exp((ln_gamma_ratio(model.alpha, model.beta) - log_rel_loss) / model.beta)


def k_for_target_coverage(model: BetaFailureModel, target: float, k_limit: int = 2**53) -> int:
    """Smallest integer ``k`` with exact pass@k >= ``target``.

    The closed-form large-k inverse seeds the search; exact evaluation then
    brackets and bisects on integers.
    """
    if not (0.0 < target < model.ceiling):
        raise InfeasibleError(f"target {target} must lie strictly between 0 and the ceiling {model.ceiling}")

    def ok(k: int) -> bool:
        return pass_at_k_exact(model, k) >= target

    seed = _asymptotic_k(model, target)
    if not math.isfinite(seed) or seed > k_limit:
        raise InfeasibleError(f"target {target} needs more than {k_limit} attempts")
    guess = min(max(1, int(round(seed))), k_limit)

    if ok(guess):
        hi = guess
        step = 1
        lo = guess - step
        while lo >= 1 and ok(lo):
            hi = lo
            step *= 2
            lo = hi - step
        lo = max(lo, 0)  # ok(0) is False: pass@0 = 0 < target
    else:
        lo = guess
        step = 1
        hi = guess + step
        while not ok(hi):
            lo = hi
            step *= 2
            hi = lo + step
            if hi > k_limit:
                raise InfeasibleError(f"target {target} needs more than {k_limit} attempts")
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def cost_for_target_coverage(model: BetaFailureModel, params: CostParams, target: float) -> float:
    """FLOPS needed to reach ``target`` coverage with whole completions."""
    return total_cost(params, k_for_target_coverage(model, target))
