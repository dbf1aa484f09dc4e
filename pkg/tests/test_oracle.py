import numpy as np
import pytest

from marketeq import metrics
from marketeq.ces import CesSpec
from marketeq.errors import InvalidArgument, UnsupportedRegime
from marketeq.market import ContextDistribution, generate_market
from marketeq.oracle import (
    cobb_douglas_equilibrium,
    numeric_equilibrium,
    single_pair_equilibrium,
)

from helpers import market_from_values, random_market


def test_cobb_douglas_symmetric():
    mkt = market_from_values(np.ones((2, 2)), [1.0, 1.0], CesSpec.cobb_douglas())
    res = cobb_douglas_equilibrium(mkt)
    np.testing.assert_allclose(res.candidate.prices, [0.5, 0.5])
    np.testing.assert_allclose(res.candidate.allocation, np.ones((2, 2)))
    assert res.certified_ng <= 1e-10
    assert res.method == "closed-form"


def test_cobb_douglas_asymmetric():
    mkt = market_from_values([[1.0, 3.0], [3.0, 1.0]], [1.0, 1.0], CesSpec.cobb_douglas())
    res = cobb_douglas_equilibrium(mkt)
    # column sums of B_i * w_ij are symmetric here, so prices match
    np.testing.assert_allclose(res.candidate.prices, [0.5, 0.5], rtol=1e-12)
    np.testing.assert_allclose(res.candidate.allocation.sum(axis=0), [2.0, 2.0], rtol=1e-12)
    assert res.certified_ng <= 1e-10


def test_cobb_douglas_single_buyer():
    values = np.array([[1.0, 2.0, 3.0]])
    budgets = np.array([2.0])
    mkt = market_from_values(values, budgets, CesSpec.cobb_douglas())
    res = cobb_douglas_equilibrium(mkt)
    v_t = values.sum()
    expected = budgets[0] * values[0] / (v_t * mkt.supplies)
    np.testing.assert_allclose(res.candidate.prices, expected, rtol=1e-12)


def test_cobb_douglas_regime_check():
    mkt = market_from_values(np.ones((2, 2)), [1.0, 1.0], CesSpec.linear())
    with pytest.raises(UnsupportedRegime):
        cobb_douglas_equilibrium(mkt)


@pytest.mark.parametrize("spec", [CesSpec.linear(), CesSpec.general(0.5),
                                  CesSpec.cobb_douglas(), CesSpec.leontief()])
def test_single_pair_any_regime(spec):
    mkt = market_from_values([[1.0]], [1.0], spec)
    res = single_pair_equilibrium(mkt)
    assert res.candidate.allocation[0, 0] == pytest.approx(1.0)
    assert res.candidate.prices[0] == pytest.approx(1.0)
    assert res.certified_ng <= 1e-12


def test_single_pair_scaled():
    mkt = market_from_values([[2.0]], [3.0], CesSpec.linear(), supplies=[2.0])
    res = single_pair_equilibrium(mkt)
    assert res.candidate.allocation[0, 0] == pytest.approx(2.0)
    assert res.candidate.prices[0] == pytest.approx(1.5)


def test_single_pair_shape_check():
    mkt = market_from_values(np.ones((2, 1)), [1.0, 1.0], CesSpec.linear())
    with pytest.raises(InvalidArgument):
        single_pair_equilibrium(mkt)


def test_numeric_matches_closed_form_cobb_douglas():
    rng = np.random.default_rng(3)
    mkt = random_market(rng, 5, 3, CesSpec.cobb_douglas())
    closed = cobb_douglas_equilibrium(mkt)
    num = numeric_equilibrium(mkt)
    rel = np.max(np.abs(num.candidate.prices - closed.candidate.prices) / closed.candidate.prices)
    assert rel <= 1e-5
    assert num.method == "numeric"


def test_numeric_half_alpha_certifies():
    rng = np.random.default_rng(4)
    mkt = random_market(rng, 3, 2, CesSpec.general(0.5))
    res = numeric_equilibrium(mkt)
    assert res.certified_ng <= 1e-6
    assert res.kkt_residual <= 1e-4


def test_numeric_linear_with_zero_allocations():
    # distinct bang-per-buck ratios force true zeros in the allocation
    mkt = market_from_values([[2.0, 1.0], [1.0, 2.0]], [1.0, 1.0], CesSpec.linear())
    res = numeric_equilibrium(mkt)
    assert res.certified_ng <= 1e-6
    assert res.kkt_residual <= 1e-4
    assert np.sum(res.candidate.allocation == 0.0) >= 2


def test_numeric_certified_results_satisfy_price_identity():
    rng = np.random.default_rng(5)
    for spec in (CesSpec.cobb_douglas(), CesSpec.general(0.5)):
        mkt = random_market(rng, 10, 3, spec)
        res = numeric_equilibrium(mkt)
        identity = abs(res.candidate.prices @ mkt.supplies - mkt.total_budget)
        assert identity <= 1e-8 * mkt.total_budget
        assert np.all(res.candidate.prices > 0)


def test_numeric_size_guard():
    mkt = generate_market(201, 2, 2, ContextDistribution.UNIFORM01, CesSpec.cobb_douglas(), 1)
    with pytest.raises(InvalidArgument):
        numeric_equilibrium(mkt)


def test_numeric_rejects_leontief():
    mkt = market_from_values(np.ones((2, 2)), [1.0, 1.0], CesSpec.leontief())
    with pytest.raises(UnsupportedRegime):
        numeric_equilibrium(mkt)
