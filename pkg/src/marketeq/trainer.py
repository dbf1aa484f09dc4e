"""Train the allocation network with the augmented Lagrangian method of multipliers.

The solver alternates K adaptive-moment steps on a minibatch estimate of the
penalized Lagrangian with one dual ascent step per epoch on the multipliers,
which become the prices.  The estimator pairs two independent half-batches so
the quadratic penalty term stays unbiased: with 2M sampled buyers the
objective and multiplier terms use the first half only, while the penalty term
multiplies residuals from opposite halves,

    (rho / 2M) * sum_j sum_{i<=M} (x(b_i, g_j) - 1) * (x(b_{i+M}, g_j) - 1).

Per-epoch cost is independent of the buyer count for fixed batch size; only
the exact multiplier pass and the evaluation sweep touch all n buyers.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import ces, metrics
from .errors import InvalidArgument, InvalidPrices, NumericFailure
from .market import Market, softplus
from .net import AdamState, AllocationNet, adam_step

_EVAL_CHUNK = 8192  # buyers per forward chunk in full-population passes

CURVE_COLUMNS = ("epoch", "ng", "voa", "vop", "loss")


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for `train`."""

    batch_size_loss: int = 512  # M1, buyers per half-batch
    batch_size_multiplier: int | None = None  # None -> exact full-population pass
    rho: float = 0.2
    inner_iters: int = 100  # K optimizer steps per epoch
    epochs: int = 30
    learning_rate: float = 1e-4
    hidden_depth: int = 5
    hidden_width: int = 256
    seed: int = 0
    eval_each_epoch: bool = True
    record_exact_lagrangian: bool = False
    checkpoint_dir: str | None = None  # when set, write net_epoch_###.npz after each epoch

    def __post_init__(self):
        if self.batch_size_loss < 1 or self.inner_iters < 1 or self.epochs < 1:
            raise InvalidArgument("batch size, inner iterations and epochs must be >= 1")
        if self.rho <= 0:
            raise InvalidArgument("quadratic penalty rho must be > 0")
        if self.batch_size_multiplier is not None and self.batch_size_multiplier < 1:
            raise InvalidArgument("multiplier batch size must be >= 1 when given")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    loss: float  # mean minibatch Lagrangian estimate over the epoch
    exact_lagrangian: float
    ng: float
    voa: float
    vop: float
    train_seconds: float  # inner-loop time only; excludes multiplier pass and eval
    eval_seconds: float


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)

    def append(self, record: EpochRecord) -> None:
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def to_csv(self, path) -> None:
        """Curve file: one row per epoch, columns (epoch, ng, voa, vop, loss)."""
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(CURVE_COLUMNS)
            for rec in self.records:
                writer.writerow([rec.epoch, repr(rec.ng), repr(rec.voa), repr(rec.vop), repr(rec.loss)])

    def to_json(self) -> list:
        return [
            {
                "epoch": rec.epoch, "loss": rec.loss, "exact_lagrangian": rec.exact_lagrangian,
                "ng": rec.ng, "voa": rec.voa, "vop": rec.vop,
                "train_seconds": rec.train_seconds, "eval_seconds": rec.eval_seconds,
            }
            for rec in self.records
        ]

    def save_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")


def _norm_supply(market: Market) -> np.ndarray:
    # per-buyer normalized supply Y_j / n; identically 1 under the default
    return market.supplies / market.n


def estimate_lagrangian_terms(net: AllocationNet, multipliers, rho: float,
                              buyer_sample: np.ndarray, market: Market):
    """(objective, multiplier, quadratic) terms of the minibatch Lagrangian estimate.

    `buyer_sample` holds 2M buyer contexts; the two halves must be independent
    draws.  Only the first half feeds the objective and multiplier terms.
    """
    buyer_sample = np.atleast_2d(np.asarray(buyer_sample, dtype=float))
    if buyer_sample.shape[0] % 2 != 0 or buyer_sample.shape[0] == 0:
        raise InvalidArgument("buyer sample must contain 2M contexts")
    x_hat = net.forward_batch(buyer_sample, market.goods)
    terms, _ = _lagrangian_terms_from_outputs(x_hat, buyer_sample, np.asarray(multipliers, float),
                                              rho, market, want_grad=False)
    return terms


def estimate_lagrangian(net: AllocationNet, multipliers, rho: float,
                        buyer_sample: np.ndarray, market: Market) -> float:
    """Unbiased minibatch estimate of the penalized Lagrangian."""
    obj, mult, quad = estimate_lagrangian_terms(net, multipliers, rho, buyer_sample, market)
    return obj + mult + quad


def _lagrangian_terms_from_outputs(x_hat, buyer_contexts, lam, rho, market, want_grad):
    """Shared core: terms (and optionally d/dx_hat) of the 2M-sample estimate."""
    two_m = x_hat.shape[0]
    half = two_m // 2
    budgets = np.linalg.norm(buyer_contexts, axis=1)
    values = softplus(buyer_contexts @ market.goods.T)
    y_norm = _norm_supply(market)
    x_phys = x_hat * y_norm  # physical bundles; identical to x_hat by default
    x1, x2 = x_hat[:half], x_hat[half:]

    log_u = ces.log_utility(values[:half], x_phys[:half], market.ces)
    if not np.all(np.isfinite(log_u)):
        raise NumericFailure("a sampled buyer has zero or non-finite utility")
    obj = -float(budgets[:half] @ log_u) / half
    resid1 = x1.mean(axis=0) - 1.0
    mult = float(lam @ resid1)
    quad = rho / (2.0 * half) * float(np.sum((x1 - 1.0) * (x2 - 1.0)))
    if not np.isfinite(obj + mult + quad):
        raise NumericFailure("the Lagrangian estimate overflowed")
    if not want_grad:
        return (obj, mult, quad), None

    dlog_u = ces.log_utility_gradient(values[:half], x_phys[:half], market.ces)
    grad = np.empty_like(x_hat)
    grad[:half] = (
        -(budgets[:half, None] * dlog_u) * y_norm / half
        + lam[None, :] / half
        + rho / (2.0 * half) * (x2 - 1.0)
    )
    grad[half:] = rho / (2.0 * half) * (x1 - 1.0)
    return (obj, mult, quad), grad


def exact_lagrangian_terms(net: AllocationNet, multipliers, rho: float, market: Market):
    """(objective, multiplier, quadratic) terms of the full-population Lagrangian."""
    lam = np.asarray(multipliers, dtype=float)
    x_hat = _full_allocation_normalized(net, market)
    x_phys = x_hat * _norm_supply(market)
    log_u = ces.log_utility(market.values, x_phys, market.ces)
    if not np.all(np.isfinite(log_u)):
        raise NumericFailure("a buyer has zero or non-finite utility")
    obj = -float(market.budgets @ log_u) / market.n
    resid = x_hat.mean(axis=0) - 1.0
    return obj, float(lam @ resid), rho / 2.0 * float(np.sum(resid * resid))


def exact_lagrangian(net: AllocationNet, multipliers, rho: float, market: Market) -> float:
    """Deterministic full-enumeration Lagrangian; the unbiasedness reference."""
    obj, mult, quad = exact_lagrangian_terms(net, multipliers, rho, market)
    return obj + mult + quad


def _full_allocation_normalized(net: AllocationNet, market: Market) -> np.ndarray:
    out = np.empty((market.n, market.m))
    for start in range(0, market.n, _EVAL_CHUNK):
        stop = min(start + _EVAL_CHUNK, market.n)
        out[start:stop] = net.forward_batch(market.buyers[start:stop], market.goods)
    return out


def mean_allocation(net: AllocationNet, market: Market, batch_size: int | None = None,
                    rng: np.random.Generator | None = None) -> np.ndarray:
    """E_b[x(b, g_j)] per good: exact population average, or a Monte Carlo
    estimate on `batch_size` sampled buyers when given.  A batch of at least n
    is the full batch, so it falls back to the exact pass."""
    if batch_size is None or batch_size >= market.n:
        total = np.zeros(market.m)
        for start in range(0, market.n, _EVAL_CHUNK):
            stop = min(start + _EVAL_CHUNK, market.n)
            total += net.forward_batch(market.buyers[start:stop], market.goods).sum(axis=0)
        return total / market.n
    if rng is None:
        raise InvalidArgument("sampled multiplier update needs an rng")
    idx = rng.integers(0, market.n, size=batch_size)
    return net.forward_batch(market.buyers[idx], market.goods).mean(axis=0)


def multiplier_update(multipliers, net: AllocationNet, market: Market, rho: float,
                      beta_t: float, batch_size: int | None = None,
                      rng: np.random.Generator | None = None) -> np.ndarray:
    """Dual ascent step: lambda_j += beta_t * rho * (E_b[x(b, g_j)] - 1)."""
    if beta_t <= 0:
        raise InvalidArgument("step size beta_t must be > 0")
    lam = np.asarray(multipliers, dtype=float)
    resid = mean_allocation(net, market, batch_size, rng) - 1.0
    return lam + beta_t * rho * resid


def train(market: Market, config: TrainConfig, buyer_sampler=None):
    """Run the full training loop; returns (net, multipliers, history).

    Deterministic given the config seed: network init, buyer sampling and all
    reductions are fixed-order.  `buyer_sampler(rng, count) -> (count, k)` can
    replace the default uniform-with-replacement draw over the market's
    buyers (the hook for non-finite buyer populations; the exact multiplier
    pass and the evaluation sweep still enumerate the finite market).
    """
    init_ss, sample_ss = np.random.SeedSequence(config.seed).spawn(2)
    net = AllocationNet.initialize(market.k, config.hidden_depth, config.hidden_width, init_ss)
    adam = AdamState.for_net(net, lr=config.learning_rate)
    sampler = np.random.Generator(np.random.Philox(sample_ss))
    if buyer_sampler is None:
        buyer_sampler = lambda rng, count: market.buyers[rng.integers(0, market.n, size=count)]
    lam = np.ones(market.m)
    history = TrainHistory()
    half = config.batch_size_loss

    for epoch in range(1, config.epochs + 1):
        t_start = time.perf_counter()
        loss_sum = 0.0
        for _ in range(config.inner_iters):
            contexts = buyer_sampler(sampler, 2 * half)
            inputs = _pair_inputs(contexts, market.goods)
            try:
                outputs, cache = net._forward_cached(inputs)
                x_hat = outputs.reshape(2 * half, market.m)
                terms, grad_x = _lagrangian_terms_from_outputs(
                    x_hat, contexts, lam, config.rho, market, want_grad=True)
            except NumericFailure as err:
                raise NumericFailure(f"epoch {epoch}: {err}", history=history) from err
            loss_sum += sum(terms)
            grads = net.backward(cache, grad_x.reshape(-1))
            adam_step(adam, net, grads)
        train_seconds = time.perf_counter() - t_start

        t_eval = time.perf_counter()
        beta_t = 1.0 / math.sqrt(epoch)
        lam = multiplier_update(lam, net, market, config.rho, beta_t,
                                config.batch_size_multiplier,
                                sampler if config.batch_size_multiplier else None)
        exact = float("nan")
        if config.record_exact_lagrangian:
            exact = exact_lagrangian(net, lam, config.rho, market)
        ng = voa = vop = float("nan")
        if config.eval_each_epoch:
            ng, voa, vop = _eval_candidate(net, lam, market)
        if config.checkpoint_dir is not None:
            path = Path(config.checkpoint_dir)
            path.mkdir(parents=True, exist_ok=True)
            net.save(path / f"net_epoch_{epoch:03d}.npz", optimizer=adam)
        history.append(EpochRecord(
            epoch=epoch, loss=loss_sum / config.inner_iters, exact_lagrangian=exact,
            ng=ng, voa=voa, vop=vop,
            train_seconds=train_seconds, eval_seconds=time.perf_counter() - t_eval,
        ))
    return net, lam, history


def _pair_inputs(buyers: np.ndarray, goods: np.ndarray) -> np.ndarray:
    rows, little = buyers.shape[0], goods.shape[0]
    k = buyers.shape[1]
    inputs = np.empty((rows * little, 2 * k))
    inputs[:, :k] = np.repeat(buyers, little, axis=0)
    inputs[:, k:] = np.tile(goods, (rows, 1))
    return inputs


def _eval_candidate(net: AllocationNet, lam, market: Market):
    if np.any(lam <= 0):
        return float("nan"), float("nan"), float("nan")
    x, p = _solution_arrays(net, lam, market)
    x_t, p_t, voa, vop = metrics.project(market, x, p)
    ng = metrics.lfw(market, p_t) - metrics.lnw(market, x_t)
    return float(ng), voa, vop


def _solution_arrays(net: AllocationNet, lam, market: Market):
    x = _full_allocation_normalized(net, market) * _norm_supply(market)
    p = np.asarray(lam, dtype=float) / _norm_supply(market)
    return x, p


def save_solution(path, net: AllocationNet, multipliers) -> None:
    """Checkpoint the trained pair (network, multipliers) as one .npz blob."""
    payload = {
        "version": 1,
        "context_dim": net.context_dim,
        "hidden_depth": net.hidden_depth,
        "hidden_width": net.hidden_width,
        "params": net.get_flat(),
        "multipliers": np.asarray(multipliers, dtype=float),
    }
    np.savez(path, **payload)


def load_solution(path):
    """Inverse of save_solution; returns (net, multipliers)."""
    with np.load(path) as blob:
        net = AllocationNet.initialize(
            int(blob["context_dim"]), int(blob["hidden_depth"]), int(blob["hidden_width"]))
        net.set_flat(blob["params"])
        lam = blob["multipliers"].copy()
    return net, lam


def extract_solution(net: AllocationNet, multipliers, market: Market) -> metrics.EquilibriumCandidate:
    """Materialize the candidate: x_ij = net(b_i, g_j) * Y_j/n, prices from the multipliers.

    Multipliers price the normalized (per-buyer) units, so physical prices are
    lambda_j * n / Y_j; both factors are 1 under the default supply.
    """
    lam = np.asarray(multipliers, dtype=float)
    if lam.shape != (market.m,):
        raise InvalidArgument("multiplier vector length must equal m")
    if np.any(lam <= 0):
        raise InvalidPrices("multipliers must be strictly positive to stand as prices")
    x, p = _solution_arrays(net, lam, market)
    return metrics.EquilibriumCandidate(x, p)


__all__ = [
    "TrainConfig",
    "TrainHistory",
    "EpochRecord",
    "CURVE_COLUMNS",
    "estimate_lagrangian",
    "estimate_lagrangian_terms",
    "exact_lagrangian",
    "exact_lagrangian_terms",
    "mean_allocation",
    "multiplier_update",
    "train",
    "extract_solution",
    "save_solution",
    "load_solution",
]
