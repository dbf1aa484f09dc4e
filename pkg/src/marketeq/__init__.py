"""Contextual Fisher market equilibria: solvers, baselines, and certification.

The package computes approximate market equilibria for markets whose buyers
and goods are described by context vectors, and certifies any candidate
(allocation, price) pair through the Nash gap and its companion violation
measures.  See the README for the CLI and the module map.
"""

from . import baselines, ces, errors, harness, market, metrics, net, oracle, trainer
from .ces import CesSpec, Regime
from .market import ContextDistribution, Market, generate_market
from .metrics import EquilibriumCandidate, MetricsReport

__version__ = "0.1.0"

__all__ = [
    "baselines",
    "ces",
    "errors",
    "harness",
    "market",
    "metrics",
    "net",
    "oracle",
    "trainer",
    "CesSpec",
    "Regime",
    "ContextDistribution",
    "Market",
    "generate_market",
    "EquilibriumCandidate",
    "MetricsReport",
    "__version__",
]
