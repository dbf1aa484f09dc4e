"""Contextual market instances: buyer/good contexts and derived quantities.

A market holds n buyer contexts and m good contexts in R^k.  Budgets, values
and supplies are derived, not stored:

* budget(b)      = ||b||_2
* valuation(b,g) = softplus(<b, g>)
* supply Y_j     = n by default (one unit per buyer), overridable.

Context generation is counter-based: each entity consumes a fixed block of the
underlying random stream (k draws per entity, buyers and goods on separate
substreams), so buyer i's context depends only on (seed, i, k, dist) and never
on n.  Distributions are realized by inverse-CDF transforms of those uniform
draws, which keeps the block property exact.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.special import ndtri

from .ces import CesSpec, Regime
from .errors import DegenerateBudget, InvalidArgument


class ContextDistribution(enum.Enum):
    STANDARD_NORMAL = "normal"
    UNIFORM01 = "uniform"
    EXPONENTIAL_UNIT_RATE = "exponential"


def softplus(z):
    """log(1 + exp(z)), stable for large |z| via max(z,0) + log1p(exp(-|z|))."""
    z = np.asarray(z, dtype=float)
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def budget(b) -> float:
    """Euclidean norm of a buyer context; must be strictly positive."""
    b = np.asarray(b, dtype=float)
    if not np.all(np.isfinite(b)):
        raise InvalidArgument("buyer context must be finite")
    value = float(np.linalg.norm(b))
    if value <= 0.0:
        raise DegenerateBudget("buyer context has zero norm, budget must be > 0")
    return value


def valuation(b, g) -> float:
    """softplus(<b, g>) > 0; contexts must share a dimension."""
    b = np.asarray(b, dtype=float)
    g = np.asarray(g, dtype=float)
    if b.shape != g.shape:
        raise InvalidArgument(f"context dimension mismatch: {b.shape} vs {g.shape}")
    return float(softplus(np.dot(b, g)))


def _sample_contexts(seed_seq: np.random.SeedSequence, count: int, k: int, dist: ContextDistribution):
    gen = np.random.Generator(np.random.Philox(seed_seq))
    u = gen.random((count, k))  # one Philox word per component -> per-entity blocks
    if dist is ContextDistribution.UNIFORM01:
        return u
    if dist is ContextDistribution.EXPONENTIAL_UNIT_RATE:
        return -np.log1p(-u)
    # keep u strictly inside (0, 1) so ndtri stays finite (the shift alone
    # could round the largest representable u up to exactly 1)
    return ndtri(np.clip(u + 2.0**-54, 2.0**-54, np.nextafter(1.0, 0.0)))


@dataclass(frozen=True)
class Market:
    """Immutable problem instance; share freely across threads."""

    n: int
    m: int
    k: int
    buyers: np.ndarray  # (n, k)
    goods: np.ndarray  # (m, k)
    ces: CesSpec
    dist: ContextDistribution | None = None
    seed: int | None = None
    supply_override: np.ndarray | None = None  # explicit Y_j; default Y_j = n

    def __post_init__(self):
        buyers = np.asarray(self.buyers, dtype=float)
        goods = np.asarray(self.goods, dtype=float)
        object.__setattr__(self, "buyers", buyers)
        object.__setattr__(self, "goods", goods)
        if buyers.shape != (self.n, self.k) or goods.shape != (self.m, self.k):
            raise InvalidArgument("context array shapes must match (n, k) and (m, k)")
        if self.n < 1 or self.m < 1 or self.k < 1:
            raise InvalidArgument("n, m, k must all be >= 1")
        if not (np.all(np.isfinite(buyers)) and np.all(np.isfinite(goods))):
            raise InvalidArgument("contexts must be finite")
        if self.supply_override is not None:
            supplies = np.asarray(self.supply_override, dtype=float)
            object.__setattr__(self, "supply_override", supplies)
            if supplies.shape != (self.m,) or np.any(supplies <= 0):
                raise InvalidArgument("supply override must be m strictly positive reals")

    @cached_property
    def budgets(self) -> np.ndarray:
        """B_i = ||b_i||, shape (n,)."""
        norms = np.linalg.norm(self.buyers, axis=1)
        if np.any(norms <= 0.0):
            raise DegenerateBudget("market contains a zero buyer context")
        return norms

    @cached_property
    def values(self) -> np.ndarray:
        """v_ij = softplus(<b_i, g_j>), shape (n, m); strictly positive."""
        return softplus(self.buyers @ self.goods.T)

    @cached_property
    def supplies(self) -> np.ndarray:
        if self.supply_override is not None:
            return self.supply_override
        return np.full(self.m, float(self.n))

    @property
    def total_budget(self) -> float:
        return float(np.sum(self.budgets))

    def supply(self, j: int) -> float:
        if not 0 <= j < self.m:
            raise InvalidArgument(f"good index {j} out of range for m={self.m}")
        return float(self.supplies[j])

    def to_json(self, include_contexts: bool = False) -> dict:
        doc = {
            "version": 1,
            "n": self.n,
            "m": self.m,
            "k": self.k,
            "dist": self.dist.value if self.dist is not None else None,
            "regime": self.ces.regime.value,
            "alpha": self.ces.alpha,
            "seed": self.seed,
        }
        if self.supply_override is not None:
            doc["supplies"] = self.supply_override.tolist()
        if include_contexts or self.dist is None or self.seed is None:
            doc["buyers"] = self.buyers.tolist()
            doc["goods"] = self.goods.tolist()
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "Market":
        regime = Regime(doc["regime"])
        spec = CesSpec(regime, doc.get("alpha"))
        dist = ContextDistribution(doc["dist"]) if doc.get("dist") else None
        supplies = np.asarray(doc["supplies"], dtype=float) if "supplies" in doc else None
        if "buyers" in doc:
            market = cls(
                n=doc["n"], m=doc["m"], k=doc["k"],
                buyers=np.asarray(doc["buyers"], dtype=float),
                goods=np.asarray(doc["goods"], dtype=float),
                ces=spec, dist=dist, seed=doc.get("seed"), supply_override=supplies,
            )
            return market
        if dist is None or doc.get("seed") is None:
            raise InvalidArgument("market document without contexts needs dist and seed")
        market = generate_market(doc["n"], doc["m"], doc["k"], dist, spec, doc["seed"])
        if supplies is not None:
            market = cls(
                n=market.n, m=market.m, k=market.k, buyers=market.buyers, goods=market.goods,
                ces=spec, dist=dist, seed=doc["seed"], supply_override=supplies,
            )
        return market

    def save(self, path, include_contexts: bool = False) -> None:
        Path(path).write_text(json.dumps(self.to_json(include_contexts)) + "\n")

    @classmethod
    def load(cls, path) -> "Market":
        return cls.from_json(json.loads(Path(path).read_text()))


def generate_market(
    n: int,
    m: int,
    k: int,
    dist: ContextDistribution,
    ces: CesSpec,
    seed: int,
) -> Market:
    """Deterministically sample a market; same arguments give a bit-identical result."""
    if n < 1 or m < 1 or k < 1:
        raise InvalidArgument("n, m, k must all be >= 1")
    buyer_ss, good_ss = np.random.SeedSequence(seed).spawn(2)
    buyers = _sample_contexts(buyer_ss, n, k, dist)
    goods = _sample_contexts(good_ss, m, k, dist)
    market = Market(n=n, m=m, k=k, buyers=buyers, goods=goods, ces=ces, dist=dist, seed=seed)
    market.budgets  # force the positivity check at generation time
    return market


__all__ = [
    "ContextDistribution",
    "Market",
    "budget",
    "valuation",
    "softplus",
    "generate_market",
]
