"""Direct solvers on the full allocation matrix: the naive rule and EG descent.

The EG solvers hold one raw parameter per (buyer, good) pair, map it through
softplus to keep allocations positive, and minimize the penalized Lagrangian

    L(x; lam) = -(1/n) sum_i B_i log u_i(x_i)
                + sum_j lam_j ((1/n) sum_i x_ij - 1)
                + (rho/2) sum_j ((1/n) sum_i x_ij - 1)^2

by full-batch gradient descent (optionally with heavy-ball momentum), with one
dual ascent step on the multipliers per epoch.  Per-iteration cost is O(n*m),
which is what the batched network method is designed to avoid.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace

import numpy as np

from . import ces, metrics
from .errors import InvalidArgument, InvalidPrices, NumericFailure
from .market import Market, softplus
from .net import _sigmoid
from .trainer import EpochRecord, TrainHistory

_RAW_AT_ONE = math.log(math.e - 1.0)  # softplus(_RAW_AT_ONE) = 1


def step_size_for(market: Market) -> float:
    """Tuned full-batch step size: grows with n (gradients carry a 1/n factor)
    and differs between the linear and curved regimes."""
    linear = market.ces.regime is ces.Regime.LINEAR
    if market.n > 1000:
        return 1e2 if linear else 1e3
    return 0.1 if linear else 1.0


@dataclass(frozen=True)
class EgConfig:
    """Knobs for eg_solve / eg_momentum_solve.

    step_size / inner_iters default to None, meaning "pick from the market
    size" (the tuned table above; 1000 inner iterations when n > 1000, else
    100).  beta_schedule is "inv_sqrt" (beta_t = beta_scale/sqrt(t)) or
    "constant" (beta_t = beta_scale); the latter is what the high-precision
    reference configuration uses.
    """

    step_size: float | None = None
    momentum: float = 0.0
    inner_iters: int | None = None
    epochs: int = 30
    rho: float = 0.2
    beta_schedule: str = "inv_sqrt"
    beta_scale: float = 1.0
    ng_stop: float | None = 1e-3  # early stop once projected NG drops below
    lambda_stop: float | None = None  # early stop once max|dlam|/max(lam) drops below
    eval_each_epoch: bool = True
    init: str = "ones"  # "ones": softplus(raw) = 1 everywhere; "demand": fixed-price demand at naive prices
    seed: int = 0

    def __post_init__(self):
        if self.step_size is not None and self.step_size <= 0:
            raise InvalidArgument("step size must be > 0")
        if not 0.0 <= self.momentum < 1.0:
            raise InvalidArgument("momentum must lie in [0, 1)")
        if self.rho <= 0 or self.epochs < 1:
            raise InvalidArgument("rho must be > 0 and epochs >= 1")
        if self.beta_schedule not in ("inv_sqrt", "constant"):
            raise InvalidArgument("beta_schedule must be 'inv_sqrt' or 'constant'")
        if self.init not in ("ones", "demand"):
            raise InvalidArgument("init must be 'ones' or 'demand'")

    def beta(self, epoch: int) -> float:
        if self.beta_schedule == "constant":
            return self.beta_scale
        return self.beta_scale / math.sqrt(epoch)


def naive(market: Market) -> metrics.EquilibriumCandidate:
    """Even allocation, budget-proportional prices; feasible by construction.

    x_ij = Y_j / n (one normalized unit each) and p_j = sum_i B_i / (m Y_j),
    so VoA = VoP = 0 exactly; only buyer optimality is violated.
    """
    supplies = market.supplies
    x = np.tile(supplies / market.n, (market.n, 1))
    p = market.total_budget / (market.m * supplies)
    return metrics.EquilibriumCandidate(x, p)


def eg_solve(market: Market, config: EgConfig | None = None):
    """Plain full-batch EG descent; returns (candidate, history)."""
    config = config or EgConfig()
    if config.momentum != 0.0:
        raise InvalidArgument("eg_solve is the momentum-free variant; use eg_momentum_solve")
    return _solve(market, config)


def eg_momentum_solve(market: Market, config: EgConfig | None = None):
    """Heavy-ball variant; momentum defaults to 0.9."""
    config = config or EgConfig(momentum=0.9)
    if config.momentum == 0.0:
        config = replace(config, momentum=0.9)
    return _solve(market, config)


def _solve(market: Market, config: EgConfig, state: "SolverState | None" = None,
            keep_state: bool = False):
    eta = config.step_size if config.step_size is not None else step_size_for(market)
    inner = config.inner_iters if config.inner_iters is not None else (
        1000 if market.n > 1000 else 100)
    y_norm = market.supplies / market.n
    budgets = market.budgets
    values = market.values
    spec = market.ces

    if state is None:
        raw = _initial_raw(market, config, y_norm)
        velocity = np.zeros_like(raw)
        lam = np.ones(market.m)
        epoch0 = 0
    else:
        raw, velocity, lam, epoch0 = state.raw, state.velocity, state.lam, state.epoch
    history = TrainHistory()

    for epoch in range(epoch0 + 1, epoch0 + config.epochs + 1):
        t_start = time.perf_counter()
        last_loss = float("nan")
        for _ in range(inner):
            x_hat = softplus(raw)
            resid = x_hat.mean(axis=0) - 1.0
            x_phys = x_hat * y_norm
            log_u = ces.log_utility(values, x_phys, spec)
            if not np.all(np.isfinite(log_u)):
                raise NumericFailure("a buyer reached zero utility during descent", history=history)
            dlog_u = ces.log_utility_gradient(values, x_phys, spec)
            grad_x = (-(budgets[:, None] * dlog_u) * y_norm + (lam + config.rho * resid)[None, :]) / market.n
            grad_raw = grad_x * _sigmoid(raw)
            if config.momentum:
                velocity = config.momentum * velocity + grad_raw
                raw -= eta * velocity
            else:
                raw -= eta * grad_raw
            if not np.all(np.isfinite(raw)):
                raise NumericFailure("parameters diverged; lower the step size", history=history)
        last_loss = float(
            -(budgets @ log_u) / market.n + lam @ resid + config.rho / 2.0 * resid @ resid
        )
        train_seconds = time.perf_counter() - t_start

        t_eval = time.perf_counter()
        resid = softplus(raw).mean(axis=0) - 1.0
        dlam = config.beta(epoch) * config.rho * resid
        lam = lam + dlam
        ng = voa = vop = float("nan")
        if config.eval_each_epoch:
            ng, voa, vop = _eval(market, raw, lam, y_norm)
        history.append(EpochRecord(
            epoch=epoch, loss=last_loss, exact_lagrangian=last_loss,
            ng=ng, voa=voa, vop=vop,
            train_seconds=train_seconds, eval_seconds=time.perf_counter() - t_eval,
        ))
        if config.ng_stop is not None and np.isfinite(ng) and ng < config.ng_stop:
            break
        if (config.lambda_stop is not None
                and np.max(np.abs(dlam)) < config.lambda_stop * max(np.max(np.abs(lam)), 1e-300)):
            break

    if not keep_state and np.any(lam <= 0):
        raise InvalidPrices("a multiplier ended nonpositive; the run cannot stand as prices")
    x = softplus(raw) * y_norm
    p = lam / y_norm
    candidate = metrics.EquilibriumCandidate(x, p)
    if keep_state:
        return candidate, history, SolverState(raw=raw, velocity=velocity, lam=lam, epoch=epoch)
    return candidate, history


@dataclass
class SolverState:
    """Resumable mid-run solver state (used by the segmented reference solves)."""

    raw: np.ndarray
    velocity: np.ndarray
    lam: np.ndarray
    epoch: int


def _initial_raw(market: Market, config: EgConfig, y_norm) -> np.ndarray:
    if config.init == "ones":
        # softplus(raw) = 1 everywhere: the naive warm start
        return np.full((market.n, market.m), _RAW_AT_ONE)
    # each buyer's fixed-price demand at the naive prices; floored so that a
    # coordinate parked near zero can still climb back if the duals move
    p0 = market.total_budget / (market.m * market.supplies)
    x_hat = ces.demand_matrix(market.values, market.budgets, p0, market.ces) / y_norm
    floor = 1e-4 * market.budgets[:, None] / (market.m * p0[None, :] * y_norm)
    x_hat = np.maximum(x_hat, floor)
    with np.errstate(over="ignore"):
        return np.where(x_hat > 30.0, x_hat, np.log(np.expm1(np.minimum(x_hat, 30.0))))


def _eval(market: Market, raw, lam, y_norm):
    if np.any(lam <= 0):
        return float("nan"), float("nan"), float("nan")
    x = softplus(raw) * y_norm
    p = lam / y_norm
    x_t, p_t, voa, vop = metrics.project(market, x, p)
    ng = metrics.lfw(market, p_t) - metrics.lnw(market, x_t)
    return float(ng), voa, vop


__all__ = ["EgConfig", "SolverState", "naive", "eg_solve", "eg_momentum_solve", "step_size_for"]
