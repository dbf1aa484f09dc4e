"""Experiment pipeline: run a solver on a market, certify, persist artifacts.

One run produces, inside its output directory:

* curve.csv     - per-epoch history (epoch, ng, voa, vop, loss)
* summary.json  - the metrics report, timings, and the config hash
* candidate.json - the dense (allocation, prices) pair when n*m is small
* solution.npz  - the trained network + multipliers (network method only)

Sweeps run one cell per (method, n, m, alpha, dist) combination and aggregate
into a single CSV; failed cells are recorded with an error tag and the sweep
continues.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import metrics, trainer
from .baselines import EgConfig, eg_momentum_solve, eg_solve, naive
from .ces import CesSpec
from .errors import InvalidArgument, MarketEqError
from .market import ContextDistribution, Market, generate_market
from .trainer import TrainConfig, TrainHistory

METHODS = ("naive", "eg", "eg-m", "fcnet")

# dense candidate matrices are only materialized up to this many entries;
# beyond it the checkpoint + lazy extraction path is the supported route
DENSE_CANDIDATE_LIMIT = 10**7

SWEEP_COLUMNS = ("method", "n", "m", "alpha", "dist", "ng", "voa", "vop", "seconds", "error")


@dataclass(frozen=True)
class MarketSpec:
    """The generate_market arguments in serializable form."""

    n: int = 2**20
    m: int = 10
    k: int = 5
    dist: str = "normal"
    alpha: float | str = 0.5
    seed: int = 0

    def ces(self) -> CesSpec:
        if self.alpha in ("-inf", "leontief"):
            return CesSpec.leontief()
        try:
            alpha = float(self.alpha)
        except ValueError as err:
            raise InvalidArgument(f"alpha must be a real number or -inf, got {self.alpha!r}") from err
        return CesSpec.from_alpha(alpha)

    def build(self) -> Market:
        return generate_market(self.n, self.m, self.k, ContextDistribution(self.dist),
                               self.ces(), self.seed)


@dataclass(frozen=True)
class ExperimentConfig:
    market: MarketSpec
    method: str
    method_config: TrainConfig | EgConfig | None
    out_dir: str

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidArgument(f"method must be one of {METHODS}")
        if self.method == "fcnet" and not isinstance(self.method_config, TrainConfig):
            raise InvalidArgument("fcnet runs need a TrainConfig")
        if self.method in ("eg", "eg-m") and not isinstance(self.method_config, EgConfig):
            raise InvalidArgument("eg runs need an EgConfig")

    def hash(self) -> str:
        blob = {
            "market": asdict(self.market),
            "method": self.method,
            "method_config": None if self.method_config is None else asdict(self.method_config),
        }
        digest = hashlib.sha256(json.dumps(blob, sort_keys=True).encode())
        return digest.hexdigest()[:16]


@dataclass
class RunRecord:
    config_hash: str
    method: str
    report: metrics.MetricsReport
    train_seconds: float
    eval_seconds: float
    curve_path: str | None = None
    artifacts: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "method": self.method,
            "report": self.report.to_json(),
            "train_seconds": self.train_seconds,
            "eval_seconds": self.eval_seconds,
            "curve": self.curve_path,
            "artifacts": self.artifacts,
        }


def run_experiment(config: ExperimentConfig, market: Market | None = None) -> RunRecord:
    """Execute one configured run end to end and write its artifacts."""
    market = market if market is not None else config.market.build()
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    history = None
    artifacts: dict = {}

    t0 = time.perf_counter()
    if config.method == "naive":
        candidate = naive(market)
    elif config.method == "eg":
        candidate, history = eg_solve(market, config.method_config)
    elif config.method == "eg-m":
        candidate, history = eg_momentum_solve(market, config.method_config)
    else:
        net, lam, history = trainer.train(market, config.method_config)
        solution_path = out / "solution.npz"
        trainer.save_solution(solution_path, net, lam)
        artifacts["solution"] = str(solution_path)
        candidate = trainer.extract_solution(net, lam, market)
    train_seconds = time.perf_counter() - t0

    t1 = time.perf_counter()
    report = metrics.evaluate(market, candidate.allocation, candidate.prices,
                              kkt=market.n * market.m <= 100_000)
    eval_seconds = time.perf_counter() - t1

    curve_path = None
    if history is not None:
        curve_path = str(out / "curve.csv")
        history.to_csv(curve_path)
    if market.n * market.m <= DENSE_CANDIDATE_LIMIT:
        candidate_path = out / "candidate.json"
        candidate.save(candidate_path)
        artifacts["candidate"] = str(candidate_path)

    record = RunRecord(
        config_hash=config.hash(),
        method=config.method,
        report=report,
        train_seconds=train_seconds,
        eval_seconds=eval_seconds,
        curve_path=curve_path,
        artifacts=artifacts,
    )
    (out / "summary.json").write_text(json.dumps(record.to_json(), indent=2) + "\n")
    return record


def evaluate_candidate_file(market: Market, candidate_path=None, solution_path=None) -> metrics.MetricsReport:
    """Certify a stored candidate (dense JSON) or a stored network solution."""
    if (candidate_path is None) == (solution_path is None):
        raise InvalidArgument("provide exactly one of candidate_path / solution_path")
    if candidate_path is not None:
        candidate = metrics.EquilibriumCandidate.load(candidate_path)
    else:
        net, lam = trainer.load_solution(solution_path)
        candidate = trainer.extract_solution(net, lam, market)
    if candidate.allocation.shape != (market.n, market.m):
        raise InvalidArgument("candidate shape does not match the market")
    return metrics.evaluate(market, candidate.allocation, candidate.prices,
                            kkt=market.n * market.m <= 100_000)


def sweep(market_specs, methods, method_config_factory, out_dir) -> list[dict]:
    """Run a grid of cells; one row per (method, market spec).

    `method_config_factory(method, market)` builds the per-cell config.
    Failures are recorded in the row's error column and the sweep continues.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for spec in market_specs:
        market = spec.build()
        for method in methods:
            row = {
                "method": method, "n": spec.n, "m": spec.m,
                "alpha": spec.alpha, "dist": spec.dist,
                "ng": "", "voa": "", "vop": "", "seconds": "", "error": "",
            }
            cell_dir = out / f"{method}_n{spec.n}_m{spec.m}_a{spec.alpha}_{spec.dist}_s{spec.seed}"
            try:
                config = ExperimentConfig(
                    market=spec, method=method,
                    method_config=method_config_factory(method, market),
                    out_dir=str(cell_dir),
                )
                record = run_experiment(config, market)
                row.update(
                    ng=repr(record.report.ng), voa=repr(record.report.voa),
                    vop=repr(record.report.vop),
                    seconds=f"{record.train_seconds + record.eval_seconds:.3f}",
                )
            except MarketEqError as err:
                row["error"] = f"{type(err).__name__}: {err}"
            rows.append(row)
    with open(out / "sweep.csv", "w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=SWEEP_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
    return rows


__all__ = [
    "METHODS",
    "SWEEP_COLUMNS",
    "DENSE_CANDIDATE_LIMIT",
    "MarketSpec",
    "ExperimentConfig",
    "RunRecord",
    "run_experiment",
    "evaluate_candidate_file",
    "sweep",
]
