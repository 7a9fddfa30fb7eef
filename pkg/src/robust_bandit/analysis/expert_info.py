"""
Robust bandit with a free, unambiguous expert signal dx = theta dt + gamma dW.

The expert keeps the belief diffusing even while the safe arm is pulled, so
the value is no longer flat below the cutoff:

    v~(p) = r + c1 p^lam1 (1-p)^(1-lam1)                  on [0, p~)
    v~(p) = m(p) - cost + c2 p^(1-lam2) (1-p)^lam2         on [p~, 1]

Because diffusion is active on both sides of p~ the solution is C^2 there:
value matching, smooth pasting and super contact pin (c1, c2, p~) jointly.
The surplus v~ - v is what the decision maker would pay for the signal.
"""
import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from robust_bandit.analysis.model_core import (
    BeliefLike,
    as_belief,
    conditional_mean,
    cutoff,
    derive_closed_form,
    eta_of,
    exponent,
    power_kernel,
    value_function,
)
from robust_bandit.models.params import ModelParams, check_belief, require_expert

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExpertClosedForm:
    """Derived constants of the model with the expert signal."""
    lambda1: float            # exponent on the safe region
    lambda2: float            # exponent on the exploration region
    big_lambda: float         # 1 + lam1 s + (lam2 - 1)(1 + s), s = sigma^2 / gamma^2
    p_tilde: float            # exploration cutoff with the expert signal
    c1: float                 # safe-region multiple; inf when it overflows binary64
    c2: Optional[float]       # exploration-region multiple; None when p_tilde is 1
    phi_gamma: float          # (theta_high - theta_low) / (gamma sqrt 2)
    phi_sigma: float          # (theta_high - theta_low) / (sigma sqrt 2)
    eta: float
    ambiguity_cost: float
    pasting_gap: float        # r - m(p_tilde) + cost
    variance_ratio: float     # sigma^2 / gamma^2
    outside_derivation: bool  # pasting_gap < 0: constants computed outside their derivation

    @property
    def explores(self) -> bool:
        return self.p_tilde < 1.0


def _safe_exp(x: float) -> float:
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


def derive_expert_closed_form(params: ModelParams) -> ExpertClosedForm:
    """
    Compute lam1, lam2, Lambda, p~ and the constants c1, c2.

    Raises:
        MissingExpertSignalError: if params carry no gamma.
    """
    gamma = require_expert(params)
    sqrt2 = math.sqrt(2.0)
    phi_gamma = params.theta_range / (gamma * sqrt2)
    phi_sigma = params.theta_range / (params.sigma * sqrt2)
    ratio = params.sigma ** 2 / gamma ** 2

    lambda1 = exponent(params.delta, phi_gamma)
    lambda2 = exponent(params.delta, math.sqrt(phi_sigma ** 2 + phi_gamma ** 2))
    big_lambda = 1.0 + lambda1 * ratio + (lambda2 - 1.0) * (1.0 + ratio)

    eta = eta_of(params)
    p_tilde = cutoff(big_lambda, eta)
    cost = params.ambiguity_cost
    gap = params.r - conditional_mean(params, p_tilde) + cost

    c1 = 0.0
    c2: Optional[float] = None
    if 0.0 < p_tilde < 1.0:
        # log-space: p~^lam1 underflows once gamma is large
        log_k1 = lambda1 * math.log(p_tilde) + (1.0 - lambda1) * math.log1p(-p_tilde)
        log_k2 = (1.0 - lambda2) * math.log(p_tilde) + lambda2 * math.log1p(-p_tilde)
        if gap:
            c1 = ratio * gap * _safe_exp(-log_k1)
            c2 = (1.0 + ratio) * gap * _safe_exp(-log_k2)
        else:
            c2 = 0.0

    outside = gap < 0.0
    if outside:
        logger.warning(
            "r - m(p~) + cost = %.6g < 0: expert constants lie outside their derivation", gap
        )

    return ExpertClosedForm(
        lambda1=lambda1,
        lambda2=lambda2,
        big_lambda=big_lambda,
        p_tilde=p_tilde,
        c1=c1,
        c2=c2,
        phi_gamma=phi_gamma,
        phi_sigma=phi_sigma,
        eta=eta,
        ambiguity_cost=cost,
        pasting_gap=gap,
        variance_ratio=ratio,
        outside_derivation=outside,
    )


# ─── Value function ───────────────────────────────────────────────────────────

def _safe_branch(params: ModelParams, ecf: ExpertClosedForm, p: BeliefLike) -> BeliefLike:
    # r + c1 p^lam1 (1-p)^(1-lam1), written relative to p~ so it never overflows
    k = power_kernel(p, ecf.lambda1, 1.0 - ecf.lambda1, anchor=ecf.p_tilde)
    return params.r + ecf.variance_ratio * ecf.pasting_gap * k


def _explore_branch(params: ModelParams, ecf: ExpertClosedForm, p: BeliefLike) -> BeliefLike:
    k = power_kernel(p, 1.0 - ecf.lambda2, ecf.lambda2, anchor=ecf.p_tilde)
    base = conditional_mean(params, p) - ecf.ambiguity_cost
    return base + (1.0 + ecf.variance_ratio) * ecf.pasting_gap * k


def expert_value_function(
    params: ModelParams,
    ecf: ExpertClosedForm,
    p: BeliefLike,
) -> BeliefLike:
    """
    Discounted value v~(p) with the expert signal: the safe-region branch on
    [0, p~) and the exploration branch on [p~, 1].
    """
    p = as_belief(p)
    if not ecf.explores:
        return np.full_like(p, params.r) if np.ndim(p) else params.r
    with np.errstate(invalid="ignore"):
        lower = _safe_branch(params, ecf, p)
        upper = _explore_branch(params, ecf, p)
    if np.ndim(p) == 0:
        return lower if p < ecf.p_tilde else upper
    return np.where(p < ecf.p_tilde, lower, upper)


def branch_derivatives(
    params: ModelParams,
    ecf: ExpertClosedForm,
    p: float,
    branch: str,
) -> Tuple[float, float, float]:
    """
    Value, first and second derivative of one branch of v~ at an interior p.

    Args:
        branch: "safe" for r + c1 p^lam1 (1-p)^(1-lam1), "explore" for the
                m(p) - cost + c2 p^(1-lam2) (1-p)^lam2 branch.

    Returns:
        (value, first derivative, second derivative)
    """
    p = check_belief(p)
    if not 0.0 < p < 1.0:
        raise ValueError("branch derivatives are defined for interior beliefs only")
    if not 0.0 < ecf.p_tilde < 1.0:
        raise ValueError("branch derivatives need an interior cutoff")
    if branch == "safe":
        a, b = ecf.lambda1, 1.0 - ecf.lambda1
        scale = ecf.variance_ratio * ecf.pasting_gap
        base, slope = params.r, 0.0
    elif branch == "explore":
        a, b = 1.0 - ecf.lambda2, ecf.lambda2
        scale = (1.0 + ecf.variance_ratio) * ecf.pasting_gap
        base, slope = conditional_mean(params, p) - ecf.ambiguity_cost, params.theta_range
    else:
        raise ValueError(f"branch must be 'safe' or 'explore', got {branch!r}")

    k = scale * power_kernel(p, a, b, anchor=ecf.p_tilde)
    score = a / p - b / (1.0 - p)
    d1 = slope + k * score
    d2 = k * (score ** 2 - a / p ** 2 - b / (1.0 - p) ** 2)
    return base + k, d1, d2


# ─── Surplus ──────────────────────────────────────────────────────────────────

def surplus(params: ModelParams, p: BeliefLike) -> BeliefLike:
    """Value created by the expert signal, v~(p) - v(p)."""
    p = as_belief(p)
    ecf = derive_expert_closed_form(params)
    cf = derive_closed_form(params)
    return expert_value_function(params, ecf, p) - value_function(params, cf, p)


@dataclass
class SurplusProfile:
    """Both value functions and their difference on a uniform belief grid."""
    beliefs: np.ndarray
    value: np.ndarray
    expert_value: np.ndarray
    surplus: np.ndarray
    p_bar: float
    p_tilde: float


def surplus_profile(params: ModelParams, grid_size: int) -> SurplusProfile:
    """Evaluate v, v~ and v~ - v on grid_size points spanning [0, 1]."""
    if grid_size < 3:
        raise ValueError(f"grid_size must be at least 3, got {grid_size}")
    ecf = derive_expert_closed_form(params)
    cf = derive_closed_form(params)
    beliefs = np.linspace(0.0, 1.0, grid_size)
    v = value_function(params, cf, beliefs)
    v_tilde = expert_value_function(params, ecf, beliefs)
    return SurplusProfile(
        beliefs=beliefs,
        value=v,
        expert_value=v_tilde,
        surplus=v_tilde - v,
        p_bar=cf.p_bar,
        p_tilde=ecf.p_tilde,
    )


def surplus_argmax(params: ModelParams, grid_size: int) -> float:
    """
    Grid point at which the expert surplus peaks.

    A dense scan is used instead of root finding on the derivative because
    v has a kink at p_bar and v~ switches branch at p~.
    """
    profile = surplus_profile(params, grid_size)
    best = float(profile.beliefs[int(np.argmax(profile.surplus))])
    if profile.p_bar < 1.0 and best <= profile.p_bar:
        logger.warning(
            "surplus peaks at p=%.6g, not above the baseline cutoff %.6g", best, profile.p_bar
        )
    return best
