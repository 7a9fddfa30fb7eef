"""
Finite-difference verifier for the variational HJB equations.

Solves, on a uniform interior belief grid and without any closed form,

    v = max_mu { (1-mu) r + mu (m(p) - cost) + (mu Phi(p; sigma) + Phi(p; gamma)) v'' / (2 delta) }

with the gamma term absent in the baseline model. Endpoints are Dirichlet
data: the diffusion vanishes at p in {0, 1}, so the belief never leaves them.

Scheme: central second differences give, for a fixed policy, a tridiagonal
M-matrix system solved with scipy's banded solver. Policy iteration (Howard)
alternates that solve with a pointwise choice of mu in {0, 1}. The choice is
made on the normalised fixed-point form

    v_i = (f_i + A_i (v_{i-1} + v_{i+1})) / (1 + 2 A_i),   A_i = Phi_i / (2 delta h^2),

which has the same fixed point. A fixed policy is accepted once its residual
is below tol plus the binary64 floor eps (1 + 2 max A_i) max(1, |v|), the
level a banded solve can reach when A_i grows like 1/h^2. A revisited policy
triggers damped value iteration on the same map.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy.linalg import solve_banded

from robust_bandit.analysis.expert_info import derive_expert_closed_form, expert_value_function
from robust_bandit.analysis.model_core import (
    conditional_mean,
    derive_closed_form,
    diffusion_coefficient,
    value_function,
)
from robust_bandit.models.params import ModelParams, require_expert

logger = logging.getLogger(__name__)

# Policy switches only when the other action is better by more than this.
_SWITCH_MARGIN = 1e-13
_VI_DAMPING = 0.9


class ConvergenceError(RuntimeError):
    """Raised when the solver exhausts max_iter without meeting tol."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(f"{message} (residual={residual:.3e}, iterations={iterations})")
        self.residual = residual
        self.iterations = iterations


# ─── Grid ─────────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class Grid:
    """Uniform interior belief grid p_i = i / (n + 1), i = 1..n."""
    n: int
    points: np.ndarray = field(repr=False)
    step: float


def make_grid(n: int) -> Grid:
    if n < 3:
        raise ValueError(f"grid needs at least 3 interior points, got {n}")
    step = 1.0 / (n + 1)
    points = np.arange(1, n + 1, dtype=float) * step
    return Grid(n=n, points=points, step=step)


@dataclass
class GridSolution:
    """Discrete value function and policy on the interior grid."""
    grid: Grid
    values: np.ndarray
    policy: np.ndarray          # allocation to the ambiguous arm, 0 or 1
    free_boundary: float        # midpoint between last mu=0 node and first mu=1 node
    residual: float             # sup-norm violation of the discrete fixed-point equation
    iterations: int
    boundary_values: tuple      # (v(0), v(1))
    method: str = "policy-iteration"

    @property
    def is_threshold(self) -> bool:
        """True when mu = 1 at p_i implies mu = 1 at every p_j > p_i."""
        return bool(np.all(np.diff(self.policy) >= 0))

    def full_points(self) -> np.ndarray:
        return np.concatenate(([0.0], self.grid.points, [1.0]))

    def full_values(self) -> np.ndarray:
        left, right = self.boundary_values
        return np.concatenate(([left], self.values, [right]))


# ─── Core two-action solver ───────────────────────────────────────────────────

@dataclass
class _Problem:
    grid: Grid
    flow: np.ndarray        # shape (2, n): per-action flow payoff
    coef: np.ndarray        # shape (2, n): per-action A_i
    left: float
    right: float


def _evaluate(prob: _Problem, policy: np.ndarray) -> np.ndarray:
    idx = np.arange(prob.grid.n)
    a = prob.coef[policy, idx]
    rhs = prob.flow[policy, idx].copy()
    rhs[0] += a[0] * prob.left
    rhs[-1] += a[-1] * prob.right
    banded = np.zeros((3, prob.grid.n))
    banded[0, 1:] = -a[:-1]
    banded[1, :] = 1.0 + 2.0 * a
    banded[2, :-1] = -a[1:]
    return solve_banded((1, 1), banded, rhs)


def _action_values(prob: _Problem, v: np.ndarray) -> np.ndarray:
    """T_mu v for both actions, shape (2, n)."""
    neighbours = np.empty_like(v)
    neighbours[1:-1] = v[:-2] + v[2:]
    neighbours[0] = prob.left + v[1]
    neighbours[-1] = v[-2] + prob.right
    return (prob.flow + prob.coef * neighbours) / (1.0 + 2.0 * prob.coef)


def residual(prob: _Problem, v: np.ndarray) -> float:
    """Sup-norm of v - max_mu T_mu v."""
    return float(np.max(np.abs(v - _action_values(prob, v).max(axis=0))))


def roundoff_floor(prob: _Problem, v: np.ndarray) -> float:
    """Smallest residual binary64 can certify for this system and solution."""
    eps = float(np.finfo(float).eps)
    return eps * (1.0 + 2.0 * float(prob.coef.max())) * max(1.0, float(np.max(np.abs(v))))


def _improve(prob: _Problem, v: np.ndarray, current: np.ndarray) -> np.ndarray:
    q = _action_values(prob, v)
    better_risky = q[1] > q[0] + _SWITCH_MARGIN
    better_safe = q[0] > q[1] + _SWITCH_MARGIN
    return np.where(better_risky, 1, np.where(better_safe, 0, current)).astype(np.int8)


def _value_iteration(
    prob: _Problem,
    v: np.ndarray,
    tol: float,
    max_iter: int,
    start_iter: int,
) -> tuple:
    it = start_iter
    change = np.inf
    while it < max_iter:
        it += 1
        target = _action_values(prob, v).max(axis=0)
        v_next = (1.0 - _VI_DAMPING) * v + _VI_DAMPING * target
        change = float(np.max(np.abs(v_next - v)))
        v = v_next
        if change < 0.5 * _VI_DAMPING * tol:
            return v, it
    raise ConvergenceError("damped value iteration did not converge", change, it)


def _free_boundary(grid: Grid, policy: np.ndarray) -> float:
    risky = np.flatnonzero(policy == 1)
    if risky.size == 0:
        return 1.0
    return float(grid.points[risky[0]] - 0.5 * grid.step)


def _solve(prob: _Problem, tol: float, max_iter: int) -> GridSolution:
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    policy = np.ones(prob.grid.n, dtype=np.int8)
    seen = set()
    v = _evaluate(prob, policy)
    method = "policy-iteration"
    it = 1
    while True:
        seen.add(policy.tobytes())
        new_policy = _improve(prob, v, policy)
        if np.array_equal(new_policy, policy):
            break
        if new_policy.tobytes() in seen:
            logger.warning("policy cycle after %d iterations; switching to value iteration", it)
            v, it = _value_iteration(prob, v, tol, max_iter, it)
            policy = _improve(prob, v, policy)
            method = "value-iteration"
            break
        if it >= max_iter:
            raise ConvergenceError("policy iteration did not converge", residual(prob, v), it)
        v_next = _evaluate(prob, new_policy)
        change = float(np.max(np.abs(v_next - v)))
        logger.debug("policy iteration %d: %d risky nodes, change %.3e",
                     it, int(new_policy.sum()), change)
        policy, v = new_policy, v_next
        it += 1

    res = residual(prob, v)
    if res > tol + roundoff_floor(prob, v):
        raise ConvergenceError("solution does not satisfy the discrete HJB", res, it)
    solution = GridSolution(
        grid=prob.grid,
        values=v,
        policy=policy,
        free_boundary=_free_boundary(prob.grid, policy),
        residual=res,
        iterations=it,
        boundary_values=(prob.left, prob.right),
        method=method,
    )
    if not solution.is_threshold:
        logger.warning("converged policy is not a threshold rule")
    return solution


# ─── Model variants ───────────────────────────────────────────────────────────

def _boundary_values(params: ModelParams) -> tuple:
    cost = params.ambiguity_cost
    return max(params.r, params.theta_low - cost), max(params.r, params.theta_high - cost)


def _baseline_problem(params: ModelParams, grid: Grid) -> _Problem:
    p = grid.points
    scale = 1.0 / (2.0 * params.delta * grid.step ** 2)
    flow = np.vstack([
        np.full(grid.n, params.r),
        conditional_mean(params, p) - params.ambiguity_cost,
    ])
    coef = np.vstack([np.zeros(grid.n), diffusion_coefficient(params, p) * scale])
    left, right = _boundary_values(params)
    return _Problem(grid=grid, flow=flow, coef=coef, left=left, right=right)


def _expert_problem(params: ModelParams, grid: Grid) -> _Problem:
    gamma = require_expert(params)
    prob = _baseline_problem(params, grid)
    scale = 1.0 / (2.0 * params.delta * grid.step ** 2)
    expert = diffusion_coefficient(params, grid.points, volatility=gamma) * scale
    prob.coef = prob.coef + expert[np.newaxis, :]
    return prob


def solve_baseline(
    params: ModelParams,
    grid: Grid,
    tol: float = 1e-10,
    max_iter: int = 10_000,
) -> GridSolution:
    """
    Solve v = max{r, m(p) - cost + Phi(p) v'' / (2 delta)} on the grid.

    Raises:
        ConvergenceError: if no solution within tol after max_iter iterations.
    """
    return _solve(_baseline_problem(params, grid), tol, max_iter)


def solve_expert(
    params: ModelParams,
    grid: Grid,
    tol: float = 1e-10,
    max_iter: int = 10_000,
) -> GridSolution:
    """
    Solve the two-region HJB with the expert signal active for both actions.

    Raises:
        MissingExpertSignalError: if params carry no gamma.
        ConvergenceError: if no solution within tol after max_iter iterations.
    """
    return _solve(_expert_problem(params, grid), tol, max_iter)


# ─── Comparison with the closed forms ────────────────────────────────────────

@dataclass
class GridCheck:
    """Discrete solution measured against the closed-form oracle."""
    n: int
    step: float
    max_error: float
    boundary_gap: float
    closed_form_cutoff: float
    free_boundary: float
    iterations: int
    residual: float


@dataclass
class ConvergenceStudy:
    expert: bool
    checks: List[GridCheck]
    orders: List[Optional[float]]   # log2 error ratio between consecutive grids


def check_against_closed_form(
    params: ModelParams,
    n: int,
    expert: bool = False,
    tol: float = 1e-10,
    max_iter: int = 10_000,
) -> GridCheck:
    grid = make_grid(n)
    if expert:
        solution = solve_expert(params, grid, tol, max_iter)
        ecf = derive_expert_closed_form(params)
        exact = expert_value_function(params, ecf, grid.points)
        cut = ecf.p_tilde
    else:
        solution = solve_baseline(params, grid, tol, max_iter)
        cf = derive_closed_form(params)
        exact = value_function(params, cf, grid.points)
        cut = cf.p_bar
    return GridCheck(
        n=n,
        step=grid.step,
        max_error=float(np.max(np.abs(solution.values - exact))),
        boundary_gap=abs(solution.free_boundary - cut),
        closed_form_cutoff=cut,
        free_boundary=solution.free_boundary,
        iterations=solution.iterations,
        residual=solution.residual,
    )


def convergence_study(
    params: ModelParams,
    sizes: Sequence[int],
    expert: bool = False,
    tol: float = 1e-10,
    max_iter: int = 10_000,
) -> ConvergenceStudy:
    """Max error against the closed form on successively finer grids."""
    checks = [check_against_closed_form(params, n, expert, tol, max_iter) for n in sizes]
    orders: List[Optional[float]] = [None]
    for coarse, fine in zip(checks, checks[1:]):
        if fine.max_error > 0.0 and coarse.max_error > 0.0:
            orders.append(float(np.log(coarse.max_error / fine.max_error)
                                / np.log(coarse.step / fine.step)))
        else:
            orders.append(None)
    return ConvergenceStudy(expert=expert, checks=checks, orders=orders)
