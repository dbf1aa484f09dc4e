import itertools

import numpy as np
import pytest

from marketeq import metrics
from marketeq.ces import CesSpec
from marketeq.errors import InvalidArgument, InvalidPrices, NumericFailure
from marketeq.market import ContextDistribution, generate_market
from marketeq.net import AllocationNet
from marketeq.trainer import (
    CURVE_COLUMNS,
    TrainConfig,
    estimate_lagrangian,
    estimate_lagrangian_terms,
    exact_lagrangian,
    exact_lagrangian_terms,
    extract_solution,
    multiplier_update,
    train,
)

from helpers import inv_softplus, market_from_values, random_market


def constant_net(k, value):
    net = AllocationNet.initialize(k, hidden_depth=2, hidden_width=4, seed=0)
    for w in net.weights:
        w[...] = 0.0
    for b in net.biases:
        b[...] = 0.0
    net.biases[-1][...] = inv_softplus(value)
    return net


def enumeration_mean_terms(net, lam, rho, market):
    """Average the M=1 estimator over every ordered (b1, b2) buyer tuple."""
    sums = np.zeros(3)
    count = 0
    for i, j in itertools.product(range(market.n), repeat=2):
        sample = market.buyers[[i, j]]
        sums += estimate_lagrangian_terms(net, lam, rho, sample, market)
        count += 1
    return sums / count


@pytest.mark.parametrize("n", [2, 3])
def test_estimator_unbiased_by_enumeration(n):
    rng = np.random.default_rng(n)
    market = random_market(rng, n, 2, CesSpec.general(0.5))
    net = AllocationNet.initialize(market.k, hidden_depth=2, hidden_width=8, seed=4)
    lam = rng.uniform(0.5, 2.0, size=market.m)
    rho = 0.7
    mean_terms = enumeration_mean_terms(net, lam, rho, market)
    exact_terms = np.array(exact_lagrangian_terms(net, lam, rho, market))
    np.testing.assert_allclose(mean_terms, exact_terms, atol=1e-12)


def test_estimator_clearance_exact_net():
    rng = np.random.default_rng(0)
    market = random_market(rng, 6, 3, CesSpec.cobb_douglas())
    net = constant_net(market.k, 1.0)
    lam = rng.uniform(0.5, 2.0, size=3)
    sample = market.buyers[rng.integers(0, 6, size=8)]
    obj, mult, quad = estimate_lagrangian_terms(net, lam, 0.4, sample, market)
    assert mult == pytest.approx(0.0, abs=1e-12)
    assert quad == pytest.approx(0.0, abs=1e-12)
    # objective is -(mean of B log u(ones)) over the first half
    half = sample[:4]
    budgets = np.linalg.norm(half, axis=1)
    from marketeq import ces
    from marketeq.market import softplus
    values = softplus(half @ market.goods.T)
    expected = -float(budgets @ ces.log_utility(values, np.ones((4, 3)), market.ces)) / 4
    assert obj == pytest.approx(expected, rel=1e-12)


def test_estimator_rho_zero_drops_quadratic():
    rng = np.random.default_rng(1)
    market = random_market(rng, 5, 2, CesSpec.linear())
    net = AllocationNet.initialize(market.k, 2, 8, seed=1)
    lam = np.ones(2)
    sample = market.buyers[rng.integers(0, 5, size=6)]
    obj, mult, quad = estimate_lagrangian_terms(net, lam, 1e-12, sample, market)
    full = estimate_lagrangian(net, lam, 1e-12, sample, market)
    assert quad == pytest.approx(0.0, abs=1e-10)
    assert full == pytest.approx(obj + mult, abs=1e-10)


def test_estimator_rejects_odd_sample():
    rng = np.random.default_rng(2)
    market = random_market(rng, 4, 2, CesSpec.linear())
    net = AllocationNet.initialize(market.k, 2, 4, seed=0)
    with pytest.raises(InvalidArgument):
        estimate_lagrangian(net, np.ones(2), 0.2, market.buyers[:3], market)


def test_estimator_monte_carlo_sanity():
    rng = np.random.default_rng(3)
    market = random_market(rng, 100, 3, CesSpec.general(0.5))
    net = AllocationNet.initialize(market.k, 2, 16, seed=5)
    lam = np.ones(3)
    rho = 0.2
    exact = exact_lagrangian(net, lam, rho, market)
    draws = np.empty(2000)
    m_half = 50
    for t in range(draws.size):
        idx = rng.integers(0, market.n, size=2 * m_half)
        draws[t] = estimate_lagrangian(net, lam, rho, market.buyers[idx], market)
    se = draws.std(ddof=1) / np.sqrt(draws.size)
    assert abs(draws.mean() - exact) < 4 * se + 1e-12


def test_multiplier_update_fixed_points():
    rng = np.random.default_rng(4)
    market = random_market(rng, 5, 3, CesSpec.linear())
    lam = np.ones(3)
    exactly_one = constant_net(market.k, 1.0)
    np.testing.assert_allclose(
        multiplier_update(lam, exactly_one, market, 0.2, 1.0), lam, atol=1e-12)
    exactly_two = constant_net(market.k, 2.0)
    np.testing.assert_allclose(
        multiplier_update(lam, exactly_two, market, 0.2, 1.0), lam + 0.2, atol=1e-10)


def test_multiplier_update_full_batch_equals_exact():
    rng = np.random.default_rng(5)
    market = random_market(rng, 3, 2, CesSpec.cobb_douglas())
    net = AllocationNet.initialize(market.k, 2, 8, seed=6)
    lam = np.ones(2)
    exact = multiplier_update(lam, net, market, 0.5, 0.7)
    sampled = multiplier_update(lam, net, market, 0.5, 0.7, batch_size=3,
                                rng=np.random.default_rng(0))
    np.testing.assert_allclose(sampled, exact, atol=1e-12)


def test_train_single_pair_market():
    market = market_from_values([[1.0]], [1.0], CesSpec.linear())
    config = TrainConfig(batch_size_loss=8, hidden_width=16, hidden_depth=2, rho=1.0,
                         learning_rate=3e-3, inner_iters=50, epochs=40, seed=0,
                         eval_each_epoch=False)
    net, lam, _ = train(market, config)
    cand = extract_solution(net, lam, market)
    assert cand.allocation[0, 0] == pytest.approx(1.0, abs=2e-2)
    assert lam[0] == pytest.approx(1.0, abs=5e-2)


def test_train_small_cobb_douglas_ng():
    market = generate_market(256, 3, 5, ContextDistribution.UNIFORM01,
                             CesSpec.cobb_douglas(), 77)
    config = TrainConfig(batch_size_loss=128, hidden_width=64, hidden_depth=3,
                         learning_rate=1e-3, inner_iters=100, epochs=15, seed=1)
    net, lam, history = train(market, config)
    final = list(history)[-1]
    assert final.ng <= 1e-2
    assert len(history) == 15


def test_train_deterministic_histories():
    market = generate_market(64, 2, 3, ContextDistribution.STANDARD_NORMAL,
                             CesSpec.general(0.5), 10)
    config = TrainConfig(batch_size_loss=16, hidden_width=8, hidden_depth=2,
                         inner_iters=10, epochs=3, seed=9)
    _, lam_a, hist_a = train(market, config)
    _, lam_b, hist_b = train(market, config)
    assert np.array_equal(lam_a, lam_b)
    for ra, rb in zip(hist_a, hist_b):
        assert (ra.loss, ra.ng, ra.voa, ra.vop) == (rb.loss, rb.ng, rb.voa, rb.vop)


def test_train_aborts_with_history_on_blowup():
    market = generate_market(32, 2, 3, ContextDistribution.STANDARD_NORMAL,
                             CesSpec.general(0.5), 11)
    config = TrainConfig(batch_size_loss=8, hidden_width=8, hidden_depth=5,
                         learning_rate=1e40, inner_iters=50, epochs=10, seed=2,
                         eval_each_epoch=False)
    with pytest.raises(NumericFailure) as excinfo:
        with np.errstate(over="ignore", invalid="ignore"):
            train(market, config)
    assert excinfo.value.history is not None


def test_extract_solution_contract():
    rng = np.random.default_rng(6)
    market = random_market(rng, 4, 2, CesSpec.linear())
    net = AllocationNet.initialize(market.k, 2, 8, seed=7)
    with pytest.raises(InvalidPrices):
        extract_solution(net, np.array([1.0, -0.5]), market)
    cand = extract_solution(net, np.array([1.0, 2.0]), market)
    # batch extraction equals entrywise forward calls
    for i in range(market.n):
        for j in range(market.m):
            assert cand.allocation[i, j] == pytest.approx(
                net.forward(market.buyers[i], market.goods[j]), rel=1e-12)
    np.testing.assert_array_equal(cand.prices, [1.0, 2.0])


def test_train_checkpoints_each_epoch(tmp_path):
    market = generate_market(32, 2, 3, ContextDistribution.UNIFORM01, CesSpec.linear(), 3)
    config = TrainConfig(batch_size_loss=8, hidden_width=8, hidden_depth=2,
                         inner_iters=5, epochs=3, seed=0, eval_each_epoch=False,
                         checkpoint_dir=str(tmp_path / "ckpts"))
    net, _, _ = train(market, config)
    files = sorted(p.name for p in (tmp_path / "ckpts").iterdir())
    assert files == ["net_epoch_001.npz", "net_epoch_002.npz", "net_epoch_003.npz"]
    last, opt = AllocationNet.load(tmp_path / "ckpts" / "net_epoch_003.npz")
    assert np.array_equal(last.get_flat(), net.get_flat())
    assert opt is not None


def test_train_accepts_custom_buyer_sampler():
    market = generate_market(32, 2, 3, ContextDistribution.STANDARD_NORMAL,
                             CesSpec.general(0.5), 6)
    config = TrainConfig(batch_size_loss=8, hidden_width=8, hidden_depth=2,
                         inner_iters=5, epochs=2, seed=0, eval_each_epoch=False)
    calls = []

    def sampler(rng, count):
        calls.append(count)
        return market.buyers[rng.integers(0, market.n, size=count)]

    _, _, history = train(market, config, buyer_sampler=sampler)
    assert len(history) == 2
    assert calls == [16] * 10


def test_history_curve_csv(tmp_path):
    market = generate_market(32, 2, 3, ContextDistribution.UNIFORM01, CesSpec.linear(), 3)
    config = TrainConfig(batch_size_loss=8, hidden_width=8, hidden_depth=2,
                         inner_iters=5, epochs=2, seed=0)
    _, _, history = train(market, config)
    path = tmp_path / "curve.csv"
    history.to_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == ",".join(CURVE_COLUMNS)
    assert len(lines) == 3
    payload = history.to_json()
    assert payload[0]["epoch"] == 1 and "train_seconds" in payload[0]
