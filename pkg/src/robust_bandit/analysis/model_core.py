"""
Baseline robust bandit: closed-form value function, exploration cutoff and
the equilibrium strategies of the decision maker and of nature.

The decision maker splits a unit resource between a safe arm paying r and
an ambiguous arm whose drift is theta_high or theta_low. Nature distorts the
ambiguous arm's Brownian shock and pays alpha times discounted relative
entropy for doing so. On the equilibrium path the ambiguous arm's expected
return is lowered by the constant ambiguity cost sigma^2 delta / (2 alpha),
and the belief p = P(theta = theta_high) diffuses with variance rate Phi(p).

On the exploration region (p_bar, 1] the value solves
    v = m(p) - cost + Phi(p) v'' / (2 delta),
whose solutions vanishing at p = 1 are multiples of p^(1-lam) (1-p)^lam.
Value matching v(p_bar) = r fixes the multiple and smooth pasting fixes
p_bar. Everything here is a pure function of immutable inputs.
"""
import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from robust_bandit.models.params import InvalidBeliefError, ModelParams, check_belief

BeliefLike = Union[float, np.ndarray]


# ─── Belief helpers ───────────────────────────────────────────────────────────

def as_belief(p: BeliefLike) -> BeliefLike:
    """Validate a scalar belief or an array of beliefs."""
    if np.ndim(p) == 0:
        return check_belief(float(p))
    arr = np.asarray(p, dtype=float)
    if not np.all(np.isfinite(arr)) or arr.min(initial=0.0) < 0.0 or arr.max(initial=0.0) > 1.0:
        raise InvalidBeliefError("beliefs must lie in [0, 1]")
    return arr


def power_kernel(
    p: BeliefLike,
    a: float,
    b: float,
    anchor: Optional[float] = None,
) -> BeliefLike:
    """
    Evaluate p^a (1-p)^b in log space, or the anchored ratio
    (p/anchor)^a ((1-p)/(1-anchor))^b when an anchor in (0, 1) is given.

    Endpoint limits are taken explicitly: a zero factor raised to a positive
    power is 0 and to a negative power is +inf, never NaN or an overflow.
    """
    arr = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        log_p = np.log(arr)
        log_q = np.log1p(-arr)
        if anchor is not None:
            log_p = log_p - math.log(anchor)
            log_q = log_q - math.log1p(-anchor)
        expo = np.zeros_like(arr)
        if a != 0.0:
            expo = expo + a * log_p
        if b != 0.0:
            expo = expo + b * log_q
        out = np.exp(expo)
    return out if out.ndim else float(out)


# ─── Closed form ──────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class ClosedForm:
    """Derived constants of the baseline model."""
    eta: float                # interior cutoff exists iff eta < 1
    phi: float                # (theta_high - theta_low) / (sigma sqrt 2)
    lam: float                # exponent of the exploration-region solution, > 1
    p_bar: float              # exploration cutoff
    coeff: Optional[float]    # multiple of p^(1-lam)(1-p)^lam; None unless 0 < p_bar < 1
    ambiguity_cost: float     # sigma^2 delta / (2 alpha)

    @property
    def explores(self) -> bool:
        """False when the decision maker never pulls the ambiguous arm."""
        return self.p_bar < 1.0


def conditional_mean(params: ModelParams, p: BeliefLike) -> BeliefLike:
    """Expected ambiguous return m(p) = p theta_high + (1 - p) theta_low."""
    p = as_belief(p)
    return params.theta_low + p * params.theta_range


def diffusion_coefficient(
    params: ModelParams,
    p: BeliefLike,
    volatility: Optional[float] = None,
) -> BeliefLike:
    """
    Variance rate Phi(p; s) = (theta_high - theta_low)^2 p^2 (1-p)^2 / s^2
    of the belief when the signal has volatility s (sigma by default).
    """
    p = as_belief(p)
    s = params.sigma if volatility is None else volatility
    return (params.theta_range / s) ** 2 * (p * (1.0 - p)) ** 2


def exponent(delta: float, phi: float) -> float:
    """Root above one of lam (lam - 1) = delta / phi^2."""
    return 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * delta / phi ** 2))


def eta_of(params: ModelParams) -> float:
    """Normalised safe return plus normalised ambiguity cost."""
    return (params.r - params.theta_low + params.ambiguity_cost) / params.theta_range


def cutoff(lam: float, eta: float) -> float:
    """
    Cutoff (lam - 1) eta / (lam - eta), clamped to the boundary cases:
    eta >= 1 never explores (1.0) and lam <= eta always explores (0.0).
    """
    if eta >= 1.0:
        return 1.0
    if lam <= eta:
        return 0.0
    return (lam - 1.0) * eta / (lam - eta)


def derive_closed_form(params: ModelParams) -> ClosedForm:
    """
    Compute eta, lam, p_bar and the value-function coefficient.

    gamma is ignored: this is the model without the expert signal.
    """
    cost = params.ambiguity_cost
    eta = eta_of(params)
    phi = params.theta_range / (params.sigma * math.sqrt(2.0))
    lam = exponent(params.delta, phi)
    p_bar = cutoff(lam, eta)

    coeff: Optional[float] = None
    if 0.0 < p_bar < 1.0:
        gap = params.r - conditional_mean(params, p_bar) + cost
        coeff = gap / power_kernel(p_bar, 1.0 - lam, lam)

    return ClosedForm(
        eta=eta,
        phi=phi,
        lam=lam,
        p_bar=p_bar,
        coeff=coeff,
        ambiguity_cost=cost,
    )


# ─── Value function ───────────────────────────────────────────────────────────

def value_function(params: ModelParams, cf: ClosedForm, p: BeliefLike) -> BeliefLike:
    """
    Discounted value v(p): r on [0, p_bar], and on (p_bar, 1]
        m(p) - cost + coeff p^(1-lam) (1-p)^lam.
    """
    p = as_belief(p)
    if not cf.explores:
        return np.full_like(p, params.r) if np.ndim(p) else params.r
    explore = conditional_mean(params, p) - cf.ambiguity_cost
    if cf.coeff is not None:
        with np.errstate(invalid="ignore"):
            explore = explore + cf.coeff * power_kernel(p, 1.0 - cf.lam, cf.lam)
    if np.ndim(p) == 0:
        return explore if p > cf.p_bar else params.r
    return np.where(p > cf.p_bar, explore, params.r)


def value_derivative(
    params: ModelParams,
    cf: ClosedForm,
    p: float,
    side: str = "right",
) -> float:
    """
    One-sided derivative of v at p. At p = p_bar the "left" derivative is
    that of the safe region (0) and the "right" one that of the exploration
    region; smooth pasting makes them agree.
    """
    p = check_belief(p)
    if side not in ("left", "right"):
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    in_safe = p < cf.p_bar or (p == cf.p_bar and side == "left")
    if not cf.explores or in_safe:
        return 0.0
    slope = params.theta_range
    if cf.coeff is None or p >= 1.0:
        return slope
    k = power_kernel(p, 1.0 - cf.lam, cf.lam)
    return slope + cf.coeff * k * ((1.0 - cf.lam) / p - cf.lam / (1.0 - p))


def lower_bound(params: ModelParams, p: BeliefLike) -> BeliefLike:
    """max{r, m(p) - cost}: value of committing to one arm forever."""
    return np.maximum(params.r, conditional_mean(params, p) - params.ambiguity_cost)


# ─── Equilibrium strategies ───────────────────────────────────────────────────

def optimal_allocation(cf: ClosedForm, p: float) -> int:
    """Bang-bang allocation to the ambiguous arm; ties at p_bar go to the safe arm."""
    p = check_belief(p)
    return 1 if p > cf.p_bar else 0


def worst_case_drift(params: ModelParams, mu: float) -> float:
    """Nature's equilibrium density generator h* = -sigma delta sqrt(mu) / alpha."""
    if not 0.0 <= mu <= 1.0:
        raise ValueError(f"allocation must lie in [0, 1], got {mu!r}")
    return -params.sigma * params.delta * math.sqrt(mu) / params.alpha


def implied_alpha(params: ModelParams, p_bar: float) -> float:
    """
    Back out the robustness multiplier from an observed interior cutoff,
    holding r, theta, sigma and delta fixed. The alpha in params is ignored.

    Raises:
        ValueError: if p_bar is not interior or no positive alpha produces it.
    """
    if not 0.0 < p_bar < 1.0:
        raise ValueError(f"observed cutoff must lie in (0, 1), got {p_bar!r}")
    phi = params.theta_range / (params.sigma * math.sqrt(2.0))
    lam = exponent(params.delta, phi)
    eta = p_bar * lam / (lam - 1.0 + p_bar)
    excess = params.theta_range * eta - (params.r - params.theta_low)
    if excess <= 0.0:
        raise ValueError("cutoff is below the ambiguity-neutral cutoff; no alpha matches it")
    return params.sigma ** 2 * params.delta / (2.0 * excess)
