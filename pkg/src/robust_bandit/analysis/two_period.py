"""
Two-period example with a two-point set of mean shifts.

One unit of resource per period is split between a safe arm paying 1 and an
ambiguous arm with return mu theta + sqrt(mu) eps, theta in {0, 2}. Nature
picks the mean of eps from {-0.5, +0.5}; its variance is 1. After the first
period the belief is updated by Bayes' rule, and the second period is valued
at v2(p2) = max{1, 2 p2 - 0.5}, nature's second-period move already
substituted.

    v1(p1) = max_mu min_h { (1 - mu) + 2 mu p1 + sqrt(mu) h + discount E^h[v2(p2^h)] }

The outer maximisation is a brute-force scan over a uniform mu grid because
the objective is not concave in mu. The expectation is either evaluated
exactly by splitting the outcome line at the v2 kink, or by Gauss-Hermite
quadrature over each component of the outcome mixture.
"""
import logging
import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy.special import expit
from scipy.stats import norm

from robust_bandit.analysis.model_core import BeliefLike
from robust_bandit.models.params import check_belief

logger = logging.getLogger(__name__)

SAFE_RETURN = 1.0
THETA_LOW = 0.0
THETA_HIGH = 2.0
MEAN_SHIFTS: Tuple[float, float] = (-0.5, 0.5)
SWITCH_BELIEF = 0.75          # v2 switches to the ambiguous arm above this belief
METHODS = ("exact", "hermite")


@dataclass(frozen=True)
class TwoPeriodConfig:
    p1: float
    discount: float = 1.0
    mu_grid: int = 1001
    quad_nodes: int = 64
    method: str = "exact"

    def __post_init__(self) -> None:
        check_belief(self.p1)
        if not 0.0 < self.discount <= 1.0:
            raise ValueError(f"discount must lie in (0, 1], got {self.discount}")
        if self.mu_grid < 2:
            raise ValueError(f"mu_grid must be at least 2, got {self.mu_grid}")
        if self.quad_nodes < 8:
            raise ValueError(f"quad_nodes must be at least 8, got {self.quad_nodes}")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")


@dataclass
class TwoPeriodResult:
    v1: float               # max-min value
    mu1_star: float         # maximising first-period allocation
    h_star: float           # nature's reply to mu1_star
    minmax_v1: float        # value with the order of play swapped
    duality_gap: float      # minmax_v1 - v1, never negative


@dataclass
class ValueProfile:
    """v1 over a grid of initial beliefs and its second differences."""
    beliefs: np.ndarray
    values: np.ndarray
    second_differences: np.ndarray   # length len(beliefs) - 2


# ─── Posterior and second period ─────────────────────────────────────────────

def posterior_update(p1: float, mu1: float, h: float, y: BeliefLike) -> BeliefLike:
    """
    Posterior P(theta = 2) after observing the first-period ambiguous return y.

    Args:
        p1: prior belief.
        mu1: first-period allocation to the ambiguous arm, in [0, 1].
        h: mean shift under which the observation is interpreted.
        y: observed return, scalar or array.

    Returns:
        1 / (1 + (1-p1)/p1 exp{2(sqrt(mu1) h + mu1 - y)}), or p1 when mu1 = 0
        or the prior is degenerate.
    """
    p1 = check_belief(p1)
    if not 0.0 <= mu1 <= 1.0:
        raise ValueError(f"allocation must lie in [0, 1], got {mu1!r}")
    y_arr = np.asarray(y, dtype=float)
    if mu1 == 0.0 or p1 in (0.0, 1.0):
        out = np.full_like(y_arr, p1)
    else:
        log_odds = math.log(p1) - math.log1p(-p1)
        out = expit(log_odds + 2.0 * (y_arr - math.sqrt(mu1) * h - mu1))
    return out if out.ndim else float(out)


def second_period_value(p2: BeliefLike) -> BeliefLike:
    """v2(p2) = max{1, 2 p2 - 0.5}."""
    if np.ndim(p2) == 0:
        return max(SAFE_RETURN, 2.0 * check_belief(p2) - 0.5)
    return np.maximum(SAFE_RETURN, 2.0 * np.asarray(p2, dtype=float) - 0.5)


# ─── Continuation value ──────────────────────────────────────────────────────

def _kink(p1: float, mu1: float, h: float) -> float:
    # outcome at which the posterior crosses SWITCH_BELIEF
    odds = SWITCH_BELIEF / (1.0 - SWITCH_BELIEF)
    return math.sqrt(mu1) * h + mu1 + 0.5 * (math.log(odds) + math.log1p(-p1) - math.log(p1))


def _exact_expectation(p1: float, mu1: float, h: float) -> float:
    # E[max(0, 2 p2 - 1.5)] = 2 p1 P_high(y > y*) - 1.5 P_mix(y > y*), since p2 f_mix = p1 f_high
    y_star = _kink(p1, mu1, h)
    scale = math.sqrt(mu1)
    shift = scale * h
    tail_high = norm.sf((y_star - mu1 * THETA_HIGH - shift) / scale)
    tail_low = norm.sf((y_star - mu1 * THETA_LOW - shift) / scale)
    tail_mix = p1 * tail_high + (1.0 - p1) * tail_low
    return SAFE_RETURN + 2.0 * p1 * tail_high - 1.5 * tail_mix


def _hermite_expectation(p1: float, mu1: float, h: float, quad_nodes: int) -> float:
    nodes, weights = hermgauss(quad_nodes)
    weights = weights / math.sqrt(math.pi)
    noise = math.sqrt(2.0 * mu1) * nodes + math.sqrt(mu1) * h
    total = 0.0
    for theta, prob in ((THETA_HIGH, p1), (THETA_LOW, 1.0 - p1)):
        y = mu1 * theta + noise
        v2 = second_period_value(posterior_update(p1, mu1, h, y))
        total += prob * float(weights @ v2)
    return total


def continuation_value(
    p1: float,
    mu1: float,
    h: float,
    discount: float = 1.0,
    method: str = "exact",
    quad_nodes: int = 64,
) -> float:
    """
    Discounted expected second-period value discount * E^h[v2(p2^h)].

    The observation y is drawn from the prior mixture of N(mu1 theta + sqrt(mu1) h, mu1)
    over theta in {0, 2} and the posterior is formed under the same h.
    """
    p1 = check_belief(p1)
    if not 0.0 <= mu1 <= 1.0:
        raise ValueError(f"allocation must lie in [0, 1], got {mu1!r}")
    if mu1 == 0.0 or p1 in (0.0, 1.0):
        expected = second_period_value(p1)
    elif method == "exact":
        expected = _exact_expectation(p1, mu1, h)
    elif method == "hermite":
        expected = _hermite_expectation(p1, mu1, h, quad_nodes)
    else:
        raise ValueError(f"method must be one of {METHODS}, got {method!r}")
    return discount * expected


# ─── First period ────────────────────────────────────────────────────────────

def _objective(cfg: TwoPeriodConfig) -> Tuple[np.ndarray, np.ndarray]:
    """Payoff table of shape (len(MEAN_SHIFTS), mu_grid) and the mu grid."""
    mus = np.linspace(0.0, 1.0, cfg.mu_grid)
    table = np.empty((len(MEAN_SHIFTS), mus.size))
    for i, h in enumerate(MEAN_SHIFTS):
        for j, mu in enumerate(mus):
            flow = (1.0 - mu) * SAFE_RETURN + mu * THETA_HIGH * cfg.p1 + math.sqrt(mu) * h
            cont = continuation_value(
                cfg.p1, float(mu), h, cfg.discount, cfg.method, cfg.quad_nodes
            )
            table[i, j] = flow + cont
    return table, mus


def solve_two_period(cfg: TwoPeriodConfig) -> TwoPeriodResult:
    """
    Brute-force max-min and min-max first-period values.

    Returns:
        TwoPeriodResult; ties in mu are broken towards the smallest allocation.
    """
    table, mus = _objective(cfg)
    worst = table.min(axis=0)
    j = int(np.argmax(worst))
    i = int(np.argmin(table[:, j]))
    v1 = float(worst[j])
    minmax = float(table.max(axis=1).min())
    result = TwoPeriodResult(
        v1=v1,
        mu1_star=float(mus[j]),
        h_star=MEAN_SHIFTS[i],
        minmax_v1=minmax,
        duality_gap=minmax - v1,
    )
    logger.debug("two-period p1=%.4g: v1=%.10g at mu1=%.4g, min-max %.10g",
                 cfg.p1, v1, result.mu1_star, minmax)
    return result


def value_profile(
    discount: float,
    beliefs: Sequence[float],
    mu_grid: int = 1001,
    quad_nodes: int = 64,
    method: str = "exact",
) -> ValueProfile:
    """v1 on the given beliefs. Second differences are reported, not checked for sign."""
    grid = np.asarray(beliefs, dtype=float)
    if grid.ndim != 1 or grid.size < 3:
        raise ValueError("value_profile needs at least 3 beliefs")
    values = np.array([
        solve_two_period(TwoPeriodConfig(
            p1=float(p), discount=discount, mu_grid=mu_grid,
            quad_nodes=quad_nodes, method=method,
        )).v1
        for p in grid
    ])
    return ValueProfile(beliefs=grid, values=values, second_differences=np.diff(values, n=2))
