"""Reference equilibria for testing: closed forms where they exist, a
high-precision numeric solve with KKT certification elsewhere.

Every result returned here is certified, not assumed: clearance and the price
identity hold, NG is evaluated after projection, and (where the regime has a
usable gradient) the stationarity residuals are checked.  Certification
failure raises instead of returning, so tests cannot silently pass on an
unconverged reference.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import ces, metrics
from .baselines import EgConfig, _solve
from .errors import (
    InvalidArgument,
    NumericFailure,
    OracleFailure,
    ProjectionUndefined,
    UnsupportedRegime,
)
from .market import Market

MAX_NUMERIC_BUYERS = 200
MAX_NUMERIC_GOODS = 10


@dataclass(frozen=True)
class OracleResult:
    candidate: metrics.EquilibriumCandidate
    certified_ng: float
    kkt_residual: float
    method: str  # "closed-form" | "numeric"


def _certify(market: Market, x, p, ng_tol: float, kkt_tol: float | None, method: str) -> OracleResult:
    x_t, p_t, _, _ = metrics.project(market, x, p)
    ng = metrics.nash_gap(market, x_t, p_t)
    if not (abs(ng) <= ng_tol):
        raise OracleFailure(f"{method} oracle: NG {ng:.3e} above tolerance {ng_tol:.1e}")
    identity = abs(float(p_t @ market.supplies) - market.total_budget)
    if identity > 1e-8 * market.total_budget:
        raise OracleFailure(f"{method} oracle: price identity residual {identity:.3e}")
    if np.any(p_t <= 0):
        raise OracleFailure(f"{method} oracle: nonpositive certified price")
    kkt = float("nan")
    if ces.regime_supports_gradient(market.ces):
        kkt = metrics.kkt_residuals(market, metrics.EquilibriumCandidate(x_t, p_t))
        if kkt_tol is not None and not (kkt <= kkt_tol):
            raise OracleFailure(f"{method} oracle: KKT residual {kkt:.3e} above {kkt_tol:.1e}")
    return OracleResult(metrics.EquilibriumCandidate(x_t, p_t), float(max(ng, 0.0)), kkt, method)


def cobb_douglas_equilibrium(market: Market) -> OracleResult:
    """Closed-form equilibrium for the cobb-douglas regime.

    Budget shares are price-independent, so clearance pins the prices:
    p_j = (1/Y_j) sum_i B_i v_ij / v_ti, then x_ij = (v_ij/v_ti) B_i / p_j.
    """
    if market.ces.regime is not ces.Regime.COBB_DOUGLAS:
        raise UnsupportedRegime("closed-form equilibrium requires the cobb-douglas regime")
    weights = market.values / market.values.sum(axis=1, keepdims=True)
    spend = market.budgets[:, None] * weights  # b_ij: money buyer i puts on good j
    p = spend.sum(axis=0) / market.supplies
    x = spend / p[None, :]
    return _certify(market, x, p, ng_tol=1e-10, kkt_tol=1e-8, method="closed-form")


def single_pair_equilibrium(market: Market) -> OracleResult:
    """Degenerate 1x1 equilibrium: the buyer takes the whole supply at p = B/Y."""
    if market.n != 1 or market.m != 1:
        raise InvalidArgument("single-pair oracle requires n = m = 1")
    y = market.supplies[0]
    b = market.total_budget
    x = np.array([[y]])
    p = np.array([b / y])
    kkt_tol = 1e-10 if ces.regime_supports_gradient(market.ces) else None
    return _certify(market, x, p, ng_tol=1e-12, kkt_tol=kkt_tol, method="closed-form")


def numeric_equilibrium(market: Market, tol: float = 1e-6, kkt_tol: float = 1e-4) -> OracleResult:
    """High-precision EG-momentum solve, certified before returning.

    A test oracle, not a production solver: enforces n <= 200, m <= 10.
    Tightened configuration: constant (exact method-of-multipliers) dual
    updates, a step size that scales with n like the tuned table does, and a
    demand-based warm start for the curved regimes.  The solve runs in
    segments, attempting certification after each one, so easy markets return
    in a couple of seconds while hard ones keep iterating; linear markets get
    their vanishing allocations snapped to exact zeros first (a strictly
    dominated good sheds its last mass only asymptotically under softplus
    parameters).  If the segment budget runs out uncertified, this raises.
    """
    if market.n > MAX_NUMERIC_BUYERS or market.m > MAX_NUMERIC_GOODS:
        raise InvalidArgument(
            f"numeric oracle limited to n <= {MAX_NUMERIC_BUYERS}, m <= {MAX_NUMERIC_GOODS}")
    if not ces.regime_supports_gradient(market.ces):
        raise UnsupportedRegime("numeric oracle needs a differentiable regime (not leontief)")
    linear = market.ces.regime is ces.Regime.LINEAR
    eta_scale = 0.5 if linear else 1.5
    config = EgConfig(
        step_size=eta_scale * market.n,  # gradients carry a 1/n factor
        momentum=0.9,
        rho=2.0,
        beta_schedule="constant",
        beta_scale=1.0,
        epochs=100,  # one segment; certification decides whether to continue
        inner_iters=300,
        ng_stop=None,
        eval_each_epoch=False,
        init="ones" if linear else "demand",
    )
    last_error = None
    for _ in range(3):  # divergence retries at halved step size
        state = None
        try:
            for _segment in range(30):
                candidate, _, state = _solve(market, config, state, keep_state=True)
                if np.any(candidate.prices <= 0):
                    continue
                x = candidate.allocation
                if linear:
                    x = _snap_dominated(market, x, candidate.prices, kkt_tol)
                try:
                    return _certify(market, x, candidate.prices, ng_tol=tol,
                                    kkt_tol=kkt_tol, method="numeric")
                except (OracleFailure, ProjectionUndefined) as err:
                    last_error = err
        except NumericFailure as err:
            last_error = err
            config = replace(config, step_size=config.step_size / 2.0)
    raise OracleFailure(f"numeric oracle failed to certify: {last_error}")


def _snap_dominated(market: Market, x: np.ndarray, p: np.ndarray, kkt_tol: float) -> np.ndarray:
    """Zero out allocations that are tiny and strictly dominated at these prices."""
    x = x.copy()
    marginal = market.budgets[:, None] * ces.log_utility_gradient(market.values, np.maximum(x, 1e-300), market.ces)
    dominated = marginal < p[None, :] * (1.0 - 10.0 * kkt_tol)
    tiny = x < 1e-3 * market.budgets[:, None] / (market.m * p[None, :])
    x[dominated & tiny] = 0.0
    return x


__all__ = [
    "OracleResult",
    "cobb_douglas_equilibrium",
    "single_pair_equilibrium",
    "numeric_equilibrium",
    "MAX_NUMERIC_BUYERS",
    "MAX_NUMERIC_GOODS",
]
