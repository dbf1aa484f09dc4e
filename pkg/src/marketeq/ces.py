"""CES utility family: evaluation, gradients, and fixed-price closed forms.

The family is u(x) = (sum_j (v_j x_j)^alpha)^(1/alpha) with alpha <= 1, split
into four regimes with their own closed forms:

* linear (alpha = 1):        u = sum_j v_j x_j
* general (alpha < 1, != 0): the displayed power form
* cobb-douglas (alpha = 0):  log u = (1/v_t) sum_j v_j log x_j, v_t = sum_j v_j
* leontief (alpha = -inf):   u = min_j v_j x_j

All utilities are homogeneous of degree 1 in the bundle.  Every function
broadcasts over leading axes, so a single buyer is shape (m,) and a batch is
(n, m).
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConditioningWarning, InvalidArgument, InvalidPrices, UnsupportedRegime

# Below this distance from the removable singularities at alpha=0 / alpha=1 the
# general-regime closed forms lose precision; callers should pick the exact regime.
_ALPHA_CONDITIONING_TOL = 1e-6


class Regime(enum.Enum):
    LINEAR = "linear"
    GENERAL = "general"
    COBB_DOUGLAS = "cobb-douglas"
    LEONTIEF = "leontief"


@dataclass(frozen=True)
class CesSpec:
    """Utility regime tag plus the substitution parameter for the general case."""

    regime: Regime
    alpha: float | None = None

    def __post_init__(self):
        if self.regime is Regime.GENERAL:
            if self.alpha is None:
                raise InvalidArgument("general CES regime requires alpha")
            if not np.isfinite(self.alpha) or self.alpha >= 1.0 or self.alpha == 0.0:
                raise InvalidArgument(
                    f"general CES regime requires alpha < 1 and alpha != 0, got {self.alpha}"
                )
            if abs(self.alpha) < _ALPHA_CONDITIONING_TOL or abs(1.0 - self.alpha) < _ALPHA_CONDITIONING_TOL:
                warnings.warn(
                    f"alpha={self.alpha} is close to a removable singularity; "
                    "use the cobb-douglas or linear regime instead",
                    ConditioningWarning,
                    stacklevel=2,
                )
        elif self.alpha is not None:
            raise InvalidArgument(f"alpha is only meaningful for the general regime, got {self.regime}")

    @classmethod
    def linear(cls) -> "CesSpec":
        return cls(Regime.LINEAR)

    @classmethod
    def general(cls, alpha: float) -> "CesSpec":
        return cls(Regime.GENERAL, float(alpha))

    @classmethod
    def cobb_douglas(cls) -> "CesSpec":
        return cls(Regime.COBB_DOUGLAS)

    @classmethod
    def leontief(cls) -> "CesSpec":
        return cls(Regime.LEONTIEF)

    @classmethod
    def from_alpha(cls, alpha: float) -> "CesSpec":
        """Map a raw substitution parameter onto its regime (1, 0 and -inf are special)."""
        if alpha == 1.0:
            return cls.linear()
        if alpha == 0.0:
            return cls.cobb_douglas()
        if alpha == -np.inf:
            return cls.leontief()
        return cls.general(alpha)

    @property
    def alpha_label(self) -> str:
        if self.regime is Regime.LINEAR:
            return "1"
        if self.regime is Regime.COBB_DOUGLAS:
            return "0"
        if self.regime is Regime.LEONTIEF:
            return "-inf"
        return repr(self.alpha)


@dataclass(frozen=True)
class BuyerProblem:
    """One buyer's fixed-price optimization data: values, budget, prices."""

    values: np.ndarray
    budget: float
    prices: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        prices = np.asarray(self.prices, dtype=float)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "prices", prices)
        if values.ndim != 1 or prices.shape != values.shape:
            raise InvalidArgument("values and prices must be 1-d arrays of equal length")
        if not (np.all(np.isfinite(values)) and np.all(values > 0)):
            raise InvalidArgument("values must be finite and strictly positive")
        if not (np.isfinite(self.budget) and self.budget > 0):
            raise InvalidArgument("budget must be finite and strictly positive")
        if not (np.all(np.isfinite(prices)) and np.all(prices > 0)):
            raise InvalidPrices("prices must be finite and strictly positive")


def _check_bundle(values, bundle):
    values = np.asarray(values, dtype=float)
    bundle = np.asarray(bundle, dtype=float)
    if values.shape[-1] != bundle.shape[-1]:
        raise InvalidArgument(
            f"values/bundle length mismatch: {values.shape[-1]} vs {bundle.shape[-1]}"
        )
    if np.any(bundle < 0):
        raise InvalidArgument("bundle components must be nonnegative")
    return values, bundle


def log_utility(values, bundle, spec: CesSpec):
    """log u(bundle); -inf where the utility is zero.

    Broadcasts over leading axes of `values`/`bundle`.
    """
    values, bundle = _check_bundle(values, bundle)
    with np.errstate(divide="ignore", invalid="ignore"):
        if spec.regime is Regime.LINEAR:
            return np.log(np.sum(values * bundle, axis=-1))
        if spec.regime is Regime.LEONTIEF:
            return np.log(np.min(values * bundle, axis=-1))
        if spec.regime is Regime.COBB_DOUGLAS:
            weights = values / np.sum(values, axis=-1, keepdims=True)
            logs = np.where(bundle > 0, np.log(np.where(bundle > 0, bundle, 1.0)), -np.inf)
            return np.sum(weights * logs, axis=-1)
        # general: (1/alpha) * logsumexp(alpha * log(v x)).  Zero components
        # contribute -inf logs, which the inf arithmetic maps to u = 0 for
        # alpha < 0 (limit convention) and simply drops for alpha > 0.
        vx = values * bundle
        logs = np.where(vx > 0, np.log(np.where(vx > 0, vx, 1.0)), -np.inf)
        return _logsumexp(spec.alpha * logs) / spec.alpha


def _logsumexp(a):
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        hi = np.max(a, axis=-1, keepdims=True)
        hi = np.where(np.isfinite(hi), hi, 0.0)
        return np.squeeze(hi, axis=-1) + np.log(np.sum(np.exp(a - hi), axis=-1))


def utility(values, bundle, spec: CesSpec):
    """u(bundle) >= 0 for the given regime."""
    values, bundle = _check_bundle(values, bundle)
    if spec.regime is Regime.LINEAR:
        return np.sum(values * bundle, axis=-1)
    if spec.regime is Regime.LEONTIEF:
        return np.min(values * bundle, axis=-1)
    return np.exp(log_utility(values, bundle, spec))


def utility_gradient(values, bundle, spec: CesSpec):
    """Marginal utilities du/dx_j.

    General and cobb-douglas require a strictly positive bundle (the gradient
    is singular on the boundary).  Leontief returns the subgradient
    concentrated on the lowest index attaining the min.
    """
    values, bundle = _check_bundle(values, bundle)
    if spec.regime is Regime.LINEAR:
        return np.broadcast_to(values, bundle.shape).copy()
    if spec.regime is Regime.LEONTIEF:
        vx = values * bundle
        j_star = np.argmin(vx, axis=-1)
        grad = np.zeros_like(vx)
        idx = np.indices(j_star.shape)
        grad[(*idx, j_star)] = np.broadcast_to(values, vx.shape)[(*idx, j_star)]
        return grad
    if np.any(bundle <= 0):
        raise InvalidArgument("gradient is singular at boundary bundles in this regime")
    u = utility(values, bundle, spec)
    return log_utility_gradient(values, bundle, spec) * u[..., None]


def log_utility_gradient(values, bundle, spec: CesSpec):
    """d log u / dx_j, the solver-facing form of the marginal utilities.

    Equals utility_gradient / u; cheaper and better conditioned for the
    stationarity checks and the Lagrangian gradients.
    """
    values, bundle = _check_bundle(values, bundle)
    if spec.regime is Regime.LINEAR:
        denom = np.sum(values * bundle, axis=-1, keepdims=True)
        return np.broadcast_to(values, bundle.shape) / denom
    if spec.regime is Regime.COBB_DOUGLAS:
        if np.any(bundle <= 0):
            raise InvalidArgument("gradient is singular at boundary bundles in this regime")
        weights = values / np.sum(values, axis=-1, keepdims=True)
        return weights / bundle
    if spec.regime is Regime.LEONTIEF:
        vx = values * bundle
        u = np.min(vx, axis=-1, keepdims=True)
        j_star = np.argmin(vx, axis=-1)
        grad = np.zeros_like(vx)
        idx = np.indices(j_star.shape)
        grad[(*idx, j_star)] = (np.broadcast_to(values, vx.shape) / u)[(*idx, j_star)]
        return grad
    if np.any(bundle <= 0):
        raise InvalidArgument("gradient is singular at boundary bundles in this regime")
    s = np.power(values * bundle, spec.alpha)
    return s / (bundle * np.sum(s, axis=-1, keepdims=True))


def fixed_price_log_utility(problem: BuyerProblem, spec: CesSpec) -> float:
    """log of the best utility affordable at the given prices (supply ignored)."""
    out = fixed_price_log_utility_matrix(
        problem.values[None, :], np.array([problem.budget]), problem.prices, spec
    )
    return float(out[0])


def fixed_price_log_utility_matrix(values, budgets, prices, spec: CesSpec):
    """Vectorized fixed-price log utility: values (n, m), budgets (n,), prices (m,) -> (n,)."""
    values = np.asarray(values, dtype=float)
    budgets = np.asarray(budgets, dtype=float)
    prices = np.asarray(prices, dtype=float)
    if np.any(prices <= 0) or not np.all(np.isfinite(prices)):
        raise InvalidPrices("prices must be finite and strictly positive")
    log_b = np.log(budgets)
    if spec.regime is Regime.LINEAR:
        return log_b + np.log(np.max(values / prices, axis=-1))
    if spec.regime is Regime.COBB_DOUGLAS:
        v_t = np.sum(values, axis=-1, keepdims=True)
        weights = values / v_t
        return log_b + np.sum(weights * np.log(values / (prices * v_t)), axis=-1)
    if spec.regime is Regime.LEONTIEF:
        return log_b - np.log(np.sum(prices / values, axis=-1))
    alpha = spec.alpha
    r = alpha / (1.0 - alpha)
    log_c0 = _logsumexp(r * (np.log(values) - np.log(prices)))
    return log_b + log_c0 / r


def demand(problem: BuyerProblem, spec: CesSpec) -> np.ndarray:
    """A utility-maximizing bundle at the problem's prices and budget.

    Spends the budget exactly; u(demand) = exp(fixed_price_log_utility).
    Linear ties break toward the lowest index.
    """
    out = demand_matrix(problem.values[None, :], np.array([problem.budget]), problem.prices, spec)
    return out[0]


def demand_matrix(values, budgets, prices, spec: CesSpec):
    """Vectorized demand: values (n, m), budgets (n,), prices (m,) -> (n, m)."""
    values = np.asarray(values, dtype=float)
    budgets = np.asarray(budgets, dtype=float)
    prices = np.asarray(prices, dtype=float)
    if np.any(prices <= 0) or not np.all(np.isfinite(prices)):
        raise InvalidPrices("prices must be finite and strictly positive")
    if spec.regime is Regime.LINEAR:
        j_star = np.argmax(values / prices, axis=-1)
        x = np.zeros_like(values)
        rows = np.arange(values.shape[0])
        x[rows, j_star] = budgets / prices[j_star]
        return x
    if spec.regime is Regime.COBB_DOUGLAS:
        weights = values / np.sum(values, axis=-1, keepdims=True)
        return weights * budgets[:, None] / prices
    if spec.regime is Regime.LEONTIEF:
        scale = budgets / np.sum(prices / values, axis=-1)
        return scale[:, None] / values
    alpha = spec.alpha
    r = alpha / (1.0 - alpha)
    log_v, log_p = np.log(values), np.log(prices)
    log_c0 = _logsumexp(r * (log_v - log_p))
    # x_j = v_j^r / p_j^(r+1) * B / c0, with 1/(1-alpha) = r + 1
    log_x = r * log_v - (r + 1.0) * log_p + np.log(budgets)[:, None] - log_c0[:, None]
    return np.exp(log_x)


def regime_supports_gradient(spec: CesSpec) -> bool:
    """True where du/dx is usable for stationarity checks (everything but leontief)."""
    return spec.regime is not Regime.LEONTIEF


__all__ = [
    "Regime",
    "CesSpec",
    "BuyerProblem",
    "utility",
    "log_utility",
    "utility_gradient",
    "log_utility_gradient",
    "fixed_price_log_utility",
    "fixed_price_log_utility_matrix",
    "demand",
    "demand_matrix",
    "regime_supports_gradient",
]
