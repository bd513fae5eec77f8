import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dpads.auction import (
    Candidate,
    apply_reserve_eligibility,
    bag_of_contents,
    compute_prices,
    rank_and_price,
    rank_candidates,
)
from dpads.errors import ContractViolation, InvalidInputError, InvalidParameterError


def cands(bids, pclicks=None):
    pclicks = pclicks or [0.1] * len(bids)
    return [Candidate(f"c{i}", b, p, p) for i, (b, p) in enumerate(zip(bids, pclicks))]


def test_candidate_validation():
    for bad in (dict(bid=0.0), dict(pclick_server=0.0), dict(pclick_device=1.2)):
        kw = dict(id="x", bid=1.0, pclick_server=0.5, pclick_device=0.5) | bad
        with pytest.raises(InvalidInputError):
            Candidate(**kw)
    c = Candidate("x", 2.0, 0.1, 0.3)
    assert c.server_score == pytest.approx(0.2) and c.device_score == pytest.approx(0.6)


def test_reserve_eligibility():
    cs = cands([2.0, 0.5, 1.0])
    assert [c.bid for c in apply_reserve_eligibility(cs, 0.8)] == [2.0, 1.0]
    assert apply_reserve_eligibility(cs, 0.0) == cs
    assert apply_reserve_eligibility(cs, 5.0) == []
    with pytest.raises(InvalidParameterError):
        apply_reserve_eligibility(cs, -1.0)


def test_rank_example(three):
    ranked = rank_candidates(three)
    assert [c.id for c in ranked] == ["a", "b", "c"]
    assert [round(c.server_score, 10) for c in ranked] == [0.2, 0.18, 0.05]
    assert rank_candidates(three[:1]) == three[:1]


def test_rank_ties_by_id():
    x, y = Candidate("b", 1.0, 0.5, 0.5), Candidate("a", 1.0, 0.5, 0.1)
    assert [c.id for c in rank_candidates([x, y])] == ["a", "b"]


def test_prices_example(three):
    prices = compute_prices(rank_candidates(three), 0.1)
    np.testing.assert_allclose(prices, [1.5 * 0.12 / 0.10, 1.0 * 0.05 / 0.12, 0.1])
    np.testing.assert_allclose(prices, [1.80, 0.41667, 0.1], atol=1e-5)
    assert compute_prices(three[:1], 0.1) == [0.1]


def test_prices_tied_scores_charge_own_bid():
    ranked = rank_candidates([Candidate("a", 2.0, 0.25, 0.1), Candidate("b", 1.0, 0.5, 0.1)])
    assert ranked[0].server_score == ranked[1].server_score
    assert compute_prices(ranked, 0.0)[0] == pytest.approx(ranked[0].bid)


def test_prices_reject_unranked(three):
    with pytest.raises(ContractViolation):
        compute_prices(list(reversed(three)), 0.1)


def test_prices_floor_at_reserve():
    ranked = rank_candidates(cands([3.0, 0.6], [0.1, 0.01]))
    assert compute_prices(ranked, 0.5) == [0.5, 0.5]


def test_prices_ignore_device_pclick(three):
    other = [Candidate(c.id, c.bid, c.pclick_server, 1.0 - c.pclick_device) for c in three]
    assert compute_prices(rank_candidates(three), 0.1) == compute_prices(rank_candidates(other), 0.1)


@given(st.lists(st.tuples(st.floats(0.01, 100), st.floats(0.001, 1.0), st.floats(0.001, 1.0)),
                min_size=1, max_size=12), st.floats(0, 5))
def test_prices_between_reserve_and_bid(rows, reserve):
    cs = [Candidate(f"c{i}", b, ps, pd) for i, (b, ps, pd) in enumerate(rows)]
    auction = rank_and_price(cs, reserve)
    assert len(auction.prices) == len(auction.candidates)
    for c, p in zip(auction.candidates, auction.prices):
        assert reserve <= p <= c.bid * (1 + 1e-12)


def _scored(scores):
    return [Candidate(f"c{i}", s, 1.0, 1.0) for i, s in enumerate(scores)]


def test_bag_examples():
    ranked = rank_candidates(_scored([10, 9, 5, 1]))
    assert [r for r, _ in bag_of_contents(ranked, 0.2)] == [0, 1]
    assert len(bag_of_contents(ranked, 1.0)) == 4
    assert [r for r, _ in bag_of_contents(ranked, 0.0)] == [0]


def test_bag_keeps_exact_ties_at_top():
    ranked = rank_candidates(_scored([4, 4, 1]))
    assert len(bag_of_contents(ranked, 0.0)) == 2


def test_bag_rejects_bad_gamma():
    with pytest.raises(InvalidParameterError):
        bag_of_contents(_scored([1]), 1.5)


@given(st.lists(st.floats(0.01, 100), min_size=1, max_size=15), st.floats(0, 1), st.floats(0, 1))
def test_bag_size_monotone_in_gamma(scores, g1, g2):
    ranked = rank_candidates(_scored(scores))
    lo, hi = sorted((g1, g2))
    small, big = bag_of_contents(ranked, lo), bag_of_contents(ranked, hi)
    assert len(small) <= len(big)
    assert [r for r, _ in small] == [r for r, _ in big][: len(small)]
