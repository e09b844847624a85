"""
Revenue maximization over product prices with per-product margin boxes and an
overall margin floor, solved by multi-start projected gradient ascent.
"""
import itertools
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from demandbench.models import (
    DemandTheta,
    OptimizerConfig,
    PricingProblem,
    PricingSolution,
    ProductPricing,
)
from demandbench.services.errors import InputError


logger = logging.getLogger(__name__)

FEASIBILITY_TOLERANCE = 1e-9
ARMIJO = 1e-4
REPAIR_STEPS = 60
MAX_ORACLE_PRODUCTS = 4


@dataclass(frozen=True)
class _Arrays:
    alpha: np.ndarray
    beta: np.ndarray
    cost: np.ndarray
    margin_lb: np.ndarray
    margin_ub: np.ndarray
    target: float | None


def _arrays(problem: PricingProblem) -> _Arrays:
    products = problem.products
    return _Arrays(
        alpha=np.array([p.alpha for p in products], dtype=float),
        beta=np.array([p.beta for p in products], dtype=float),
        cost=np.array([p.cost for p in products], dtype=float),
        margin_lb=np.array([p.margin_lb for p in products], dtype=float),
        margin_ub=np.array([p.margin_ub for p in products], dtype=float),
        target=problem.margin_target,
    )


def price_box(problem: PricingProblem) -> tuple[np.ndarray, np.ndarray, str | None]:
    """
    Per-product price interval implied by the margin bounds, the cap and the demand-zero point.

    Returns:
        (low, high, binding) where binding names the first empty box, or None
    """
    low, high = [], []
    binding = None
    for product in problem.products:
        lo = max(problem.price_floor, product.cost / (1.0 - product.margin_lb))
        hi = product.cost / (1.0 - product.margin_ub)
        hi_name = "margin_ub"
        if product.price_cap is not None and product.price_cap < hi:
            hi, hi_name = product.price_cap, "price_cap"
        if binding is None and lo > hi:
            binding = f"{hi_name}:{product.product_id}"
        if product.beta < 0:
            # revenue is identically zero above the demand-zero price
            hi = min(hi, max(-product.alpha / product.beta, lo))
        if not np.isfinite(hi):
            raise InputError(f"product {product.product_id} has an unbounded price box")
        low.append(lo)
        high.append(hi)
    return np.array(low), np.array(high), binding


def revenue(prices: np.ndarray, thetas: Sequence[DemandTheta] | np.ndarray) -> float:
    """Sum of p * max(0, alpha + beta * p)."""
    alpha, beta = _theta_arrays(thetas)
    prices = np.asarray(prices, dtype=float)
    demand = np.maximum(alpha + beta * prices, 0.0)
    return float(np.sum(prices * demand))


def _theta_arrays(thetas: Sequence[DemandTheta] | np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(thetas, np.ndarray):
        thetas = np.atleast_2d(thetas)
        return thetas[:, 0].astype(float), thetas[:, 1].astype(float)
    return (
        np.array([t.alpha for t in thetas], dtype=float),
        np.array([t.beta for t in thetas], dtype=float),
    )


def margin_constraints(prices: np.ndarray, problem: PricingProblem) -> tuple[float | None, list[float], bool]:
    """
    Overall demand-weighted margin, per-product margins and feasibility.

    Returns:
        (overall margin or None when revenue is zero, per-product margins, feasible within 1e-9)
    """
    a = _arrays(problem)
    prices = np.asarray(prices, dtype=float)
    demand = np.maximum(a.alpha + a.beta * prices, 0.0)
    total = float(np.sum(prices * demand))
    overall = float(np.sum((prices - a.cost) * demand) / total) if total > 0 else None
    with np.errstate(divide="ignore", invalid="ignore"):
        margins = np.where(prices > 0, (prices - a.cost) / prices, -np.inf)

    feasible = bool(
        np.all(margins >= a.margin_lb - FEASIBILITY_TOLERANCE)
        and np.all(margins <= a.margin_ub + FEASIBILITY_TOLERANCE)
    )
    if problem.price_floor is not None:
        feasible = feasible and bool(np.all(prices >= problem.price_floor - FEASIBILITY_TOLERANCE))
    caps = np.array([p.price_cap if p.price_cap is not None else np.inf for p in problem.products])
    feasible = feasible and bool(np.all(prices <= caps + FEASIBILITY_TOLERANCE))
    if a.target is not None:
        feasible = feasible and overall is not None and overall >= a.target - FEASIBILITY_TOLERANCE
    return overall, margins.tolist(), feasible


def _revenue_and_grad(a: _Arrays, p: np.ndarray) -> tuple[float, np.ndarray]:
    demand = a.alpha + a.beta * p
    active = demand > 0
    value = float(np.sum(np.where(active, p * demand, 0.0)))
    grad = np.where(active, a.alpha + 2.0 * a.beta * p, 0.0)
    return value, grad


def _slack_and_grad(a: _Arrays, p: np.ndarray) -> tuple[float, np.ndarray]:
    """g(p) = sum(((1 - target) * p - c) * D(p)); g >= 0 is the overall margin floor."""
    demand = a.alpha + a.beta * p
    active = demand > 0
    kept = 1.0 - a.target
    value = float(np.sum(np.where(active, (kept * p - a.cost) * demand, 0.0)))
    grad = np.where(active, kept * demand + a.beta * (kept * p - a.cost), 0.0)
    return value, grad


def _ascend(a: _Arrays, p: np.ndarray, low: np.ndarray, high: np.ndarray, lam: float, mu: float, config: OptimizerConfig) -> np.ndarray:
    """Projected gradient ascent with backtracking on the augmented Lagrangian."""

    def lagrangian(x: np.ndarray) -> tuple[float, np.ndarray]:
        value, grad = _revenue_and_grad(a, x)
        if a.target is None:
            return value, grad
        slack, slack_grad = _slack_and_grad(a, x)
        shifted = max(0.0, lam - mu * slack)
        return value - (shifted ** 2 - lam ** 2) / (2.0 * mu), grad + shifted * slack_grad

    value, grad = lagrangian(p)
    step = 1.0
    for _ in range(config.max_iter):
        while True:
            candidate = np.clip(p + step * grad, low, high)
            moved = candidate - p
            new_value, new_grad = lagrangian(candidate)
            if new_value >= value + ARMIJO * float(grad @ moved) or step < 1e-16:
                break
            step *= 0.5
        converged = np.linalg.norm(moved) <= config.tolerance * (1.0 + np.linalg.norm(p))
        p, value, grad = candidate, new_value, new_grad
        if converged:
            break
        step = min(step * 2.0, 1e6)
    return p


def _repair(problem: PricingProblem, a: _Arrays, p: np.ndarray, low: np.ndarray, high: np.ndarray) -> np.ndarray | None:
    """Bisect toward the price vector that earns exactly the target margin on every product."""
    anchor = np.clip(a.cost / (1.0 - a.target), low, high)
    if not margin_constraints(anchor, problem)[2]:
        return None
    bad, good = 0.0, 1.0
    for _ in range(REPAIR_STEPS):
        mid = 0.5 * (bad + good)
        if margin_constraints((1 - mid) * p + mid * anchor, problem)[2]:
            good = mid
        else:
            bad = mid
    return (1 - good) * p + good * anchor


def _solve_from(problem: PricingProblem, a: _Arrays, p0: np.ndarray, low: np.ndarray, high: np.ndarray, config: OptimizerConfig) -> np.ndarray | None:
    p = p0
    if a.target is None:
        return _ascend(a, p, low, high, 0.0, 1.0, config)

    r0, _ = _revenue_and_grad(a, p0)
    lam, mu = 0.0, 1.0 / max(abs(r0), 1.0)
    for _ in range(config.penalty_rounds):
        p = _ascend(a, p, low, high, lam, mu, config)
        slack, _ = _slack_and_grad(a, p)
        if margin_constraints(p, problem)[2]:
            return p
        lam = max(0.0, lam - mu * slack)
        mu *= 2.0
    return _repair(problem, a, p, low, high)


def _solution(problem: PricingProblem, prices: np.ndarray, winning_start: int | None) -> PricingSolution:
    a = _arrays(problem)
    overall, margins, feasible = margin_constraints(prices, problem)
    return PricingSolution(
        prices=[float(x) for x in prices],
        revenue=revenue(prices, np.column_stack([a.alpha, a.beta])),
        overall_margin=overall,
        product_margins=margins,
        feasible=feasible,
        winning_start=winning_start,
    )


def _infeasible(problem: PricingProblem, binding: str) -> PricingSolution:
    return PricingSolution(
        prices=[],
        revenue=0.0,
        overall_margin=None,
        product_margins=[],
        feasible=False,
        binding_constraint=binding,
    )


def optimize(problem: PricingProblem, n_starts: int = 32, seed: int = 0, config: OptimizerConfig | None = None) -> PricingSolution:
    """
    Best feasible price vector over seeded random starts.

    Starts are drawn one after another from one generator, so a run with more
    starts repeats every start of a shorter run.

    Args:
        problem: Pricing problem
        n_starts: Number of random starts
        seed: Seed of the start generator
        config: Solver limits

    Returns:
        PricingSolution; feasible=False with binding_constraint set when no start succeeds
    """
    if n_starts < 1:
        raise InputError(f"n_starts must be >= 1, got {n_starts}")
    config = config or OptimizerConfig(n_starts=n_starts)
    low, high, binding = price_box(problem)
    if binding is not None:
        logger.warning(f"[OPT] empty price box, binding constraint {binding}")
        return _infeasible(problem, binding)

    a = _arrays(problem)
    rng = np.random.default_rng(seed)
    best: PricingSolution | None = None
    for start in range(n_starts):
        p0 = rng.uniform(low, high)
        prices = _solve_from(problem, a, p0, low, high, config)
        if prices is None:
            logger.debug(f"[OPT] start {start} found no feasible point")
            continue
        candidate = _solution(problem, prices, start)
        logger.debug(f"[OPT] start {start} revenue={candidate.revenue:.6f} feasible={candidate.feasible}")
        if candidate.feasible and (best is None or candidate.revenue > best.revenue):
            best = candidate

    if best is None:
        logger.warning(f"[OPT] no feasible point across {n_starts} starts")
        return _infeasible(problem, "overall_margin")
    logger.info(f"[OPT] best start {best.winning_start} of {n_starts}, revenue={best.revenue:.6f}")
    return best


def grid_oracle(problem: PricingProblem, points_per_axis: int = 200) -> PricingSolution:
    """
    Exhaustive search over an evenly spaced grid of every product's price box.

    Raises:
        InputError: If the problem has more than four products
    """
    n = len(problem.products)
    if n > MAX_ORACLE_PRODUCTS:
        raise InputError(f"grid oracle supports at most {MAX_ORACLE_PRODUCTS} products, got {n}")
    if points_per_axis < 1:
        raise InputError(f"points_per_axis must be >= 1, got {points_per_axis}")
    low, high, binding = price_box(problem)
    if binding is not None:
        return _infeasible(problem, binding)

    a = _arrays(problem)
    grids = [np.linspace(low[i], high[i], points_per_axis) for i in range(n)]
    demand = [np.maximum(a.alpha[i] + a.beta[i] * grids[i], 0.0) for i in range(n)]
    rev_terms = [grids[i] * demand[i] for i in range(n)]
    cost_terms = [(grids[i] - a.cost[i]) * demand[i] for i in range(n)]

    def feasible(rev: np.ndarray, profit: np.ndarray) -> np.ndarray:
        if a.target is None:
            return np.ones(rev.shape, dtype=bool)
        return (rev > 0) & (profit >= (a.target - FEASIBILITY_TOLERANCE) * rev)

    best_value, best_index = -np.inf, None
    tail = min(n, 2)
    head = n - tail
    tail_rev = rev_terms[head] if tail == 1 else rev_terms[head][:, None] + rev_terms[head + 1][None, :]
    tail_profit = cost_terms[head] if tail == 1 else cost_terms[head][:, None] + cost_terms[head + 1][None, :]
    for lead in itertools.product(range(points_per_axis), repeat=head):
        rev = tail_rev + sum(rev_terms[i][k] for i, k in enumerate(lead))
        profit = tail_profit + sum(cost_terms[i][k] for i, k in enumerate(lead))
        values = np.where(feasible(rev, profit), rev, -np.inf)
        flat = int(np.argmax(values))
        if values.flat[flat] > best_value:
            best_value = values.flat[flat]
            best_index = (*lead, *np.unravel_index(flat, values.shape))

    if best_index is None:
        return _infeasible(problem, "overall_margin")
    prices = np.array([grids[i][k] for i, k in enumerate(best_index)])
    return _solution(problem, prices, None)


def problem_from_estimates(
    thetas: Sequence[DemandTheta],
    costs: Sequence[float],
    margin_lb: float | Sequence[float] = 0.0,
    margin_ub: float | Sequence[float] = 0.99,
    margin_target: float | None = None,
    product_ids: Sequence[int] | None = None,
    price_caps: Sequence[float | None] | None = None,
) -> PricingProblem:
    """Turn estimated demand parameters and unit costs into a pricing problem."""
    n = len(thetas)
    if len(costs) != n:
        raise InputError(f"{len(costs)} costs for {n} demand estimates")
    product_ids = list(product_ids) if product_ids is not None else list(range(n))
    lbs = np.broadcast_to(np.asarray(margin_lb, dtype=float), (n,))
    ubs = np.broadcast_to(np.asarray(margin_ub, dtype=float), (n,))
    caps = list(price_caps) if price_caps is not None else [None] * n
    products = [
        ProductPricing(
            product_id=int(product_ids[i]),
            alpha=thetas[i].alpha,
            beta=thetas[i].beta,
            cost=float(costs[i]),
            margin_lb=float(lbs[i]),
            margin_ub=float(ubs[i]),
            price_cap=caps[i],
        )
        for i in range(n)
    ]
    return PricingProblem(products=products, margin_target=margin_target)
