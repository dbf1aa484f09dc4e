import numpy as np
import pytest

from marketeq import metrics
from marketeq.baselines import EgConfig, eg_momentum_solve, eg_solve, naive, step_size_for
from marketeq.ces import CesSpec
from marketeq.errors import InvalidArgument, InvalidPrices
from marketeq.market import ContextDistribution, generate_market
from marketeq.oracle import cobb_douglas_equilibrium

from helpers import market_from_values, random_market


def test_naive_symmetric_market():
    mkt = market_from_values(np.ones((2, 2)), [1.0, 1.0], CesSpec.cobb_douglas())
    cand = naive(mkt)
    np.testing.assert_allclose(cand.allocation, np.ones((2, 2)))
    np.testing.assert_allclose(cand.prices, [0.5, 0.5])


def test_naive_feasible_by_construction():
    # feasibility is exact in exact arithmetic; the dot products in the
    # projection leave at most an ulp or two
    rng = np.random.default_rng(0)
    for _ in range(20):
        mkt = random_market(rng, int(rng.integers(2, 40)), int(rng.integers(2, 6)),
                            CesSpec.general(0.5))
        cand = naive(mkt)
        _, _, voa, vop = metrics.project(mkt, cand.allocation, cand.prices)
        assert voa == 0.0
        assert vop <= 1e-14
        assert abs(metrics.price_residual(mkt, cand.prices)) <= 1e-15


def test_step_size_regimes():
    big_linear = generate_market(1001, 2, 2, ContextDistribution.UNIFORM01, CesSpec.linear(), 1)
    big_curved = generate_market(1001, 2, 2, ContextDistribution.UNIFORM01, CesSpec.general(0.5), 1)
    small_linear = generate_market(10, 2, 2, ContextDistribution.UNIFORM01, CesSpec.linear(), 1)
    small_curved = generate_market(10, 2, 2, ContextDistribution.UNIFORM01, CesSpec.cobb_douglas(), 1)
    assert step_size_for(big_linear) == 1e2
    assert step_size_for(big_curved) == 1e3
    assert step_size_for(small_linear) == 0.1
    assert step_size_for(small_curved) == 1.0


def test_eg_single_pair_converges():
    mkt = market_from_values([[1.0]], [1.0], CesSpec.linear())
    cand, history = eg_solve(mkt, EgConfig(epochs=200, ng_stop=1e-4))
    assert cand.allocation[0, 0] == pytest.approx(1.0, abs=1e-2)
    assert cand.prices[0] == pytest.approx(1.0, abs=5e-2)
    assert list(history)[-1].ng <= 1e-3


def test_eg_variants_match_closed_form_prices():
    mkt = generate_market(50, 5, 5, ContextDistribution.STANDARD_NORMAL,
                          CesSpec.cobb_douglas(), 555)
    closed = cobb_douglas_equilibrium(mkt)
    for solver in (eg_solve, eg_momentum_solve):
        config = EgConfig(momentum=0.0 if solver is eg_solve else 0.9,
                          epochs=80, ng_stop=1e-5)
        cand, _ = solver(mkt, config)
        _, p_t, _, _ = metrics.project(mkt, cand.allocation, cand.prices)
        rel = np.max(np.abs(p_t - closed.candidate.prices) / closed.candidate.prices)
        assert rel <= 1e-2


def test_eg_oracle_agreement_small_markets():
    rng = np.random.default_rng(1)
    for alpha in (0.0, 0.5):
        spec = CesSpec.cobb_douglas() if alpha == 0.0 else CesSpec.general(alpha)
        for trial in range(5):
            mkt = random_market(rng, int(rng.integers(5, 101)), int(rng.integers(2, 6)), spec)
            for solver, momentum in ((eg_solve, 0.0), (eg_momentum_solve, 0.9)):
                cand, history = solver(mkt, EgConfig(momentum=momentum, epochs=150))
                assert list(history)[-1].ng <= 1e-3


def test_eg_descent_property():
    # freeze the multipliers (zero dual step) and take one gradient step per
    # epoch, so the recorded losses trace the exact Lagrangian along descent
    rng = np.random.default_rng(2)
    fractions = []
    for trial in range(3):
        mkt = random_market(rng, 20, 3, CesSpec.general(0.5))
        config = EgConfig(inner_iters=1, epochs=150, beta_schedule="constant",
                          beta_scale=0.0, ng_stop=None, eval_each_epoch=False)
        _, history = eg_solve(mkt, config)
        losses = np.array([rec.loss for rec in history])
        drops = np.diff(losses) <= 1e-12
        fractions.append(drops.mean())
    assert min(fractions) >= 0.95


def test_eg_early_stop():
    mkt = generate_market(64, 3, 5, ContextDistribution.STANDARD_NORMAL,
                          CesSpec.cobb_douglas(), 9)
    cand, history = eg_momentum_solve(mkt, EgConfig(momentum=0.9, epochs=150, ng_stop=1e-3))
    assert len(history) < 150
    assert list(history)[-1].ng < 1e-3


def test_eg_rejects_momentum_mismatch():
    mkt = market_from_values([[1.0]], [1.0], CesSpec.linear())
    with pytest.raises(InvalidArgument):
        eg_solve(mkt, EgConfig(momentum=0.5))


def test_eg_nonpositive_multiplier_raises():
    # one near-worthless good: its allocation drops below target in epoch one,
    # and an oversized dual step then drives the multiplier negative
    mkt = market_from_values([[1.0, 1e-3], [1.0, 1e-3]], [1.0, 1.0], CesSpec.cobb_douglas())
    with pytest.raises(InvalidPrices):
        eg_solve(mkt, EgConfig(epochs=1, beta_schedule="constant", beta_scale=1e4,
                               ng_stop=None, eval_each_epoch=False))


def test_eg_history_schema_matches_trainer():
    mkt = generate_market(16, 2, 3, ContextDistribution.UNIFORM01, CesSpec.linear(), 5)
    _, history = eg_solve(mkt, EgConfig(epochs=2, inner_iters=5, ng_stop=None))
    rec = list(history)[0]
    assert rec.epoch == 1
    assert np.isfinite(rec.loss)
    assert np.isfinite(rec.ng)
