from __future__ import annotations

import random
import statistics

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from poaclone.chain import Block, ChainView, InvalidBlock, Protocol, SealerId, canonical_branch
from poaclone.clique import (
    CliqueConfig,
    CliqueSealerState,
    fire_seal,
    in_order,
    on_deliver_clique,
    schedule_seal,
    signed_recently,
    validate_view,
)
from poaclone.net import DelayModel, NodeEndpoint, Simulation

from conftest import clique_chain

CFG = CliqueConfig(9, 5000)


def never(lo: int, hi: int) -> int:
    raise AssertionError("in-order seals draw no delay")


def test_config_defaults():
    assert CFG.majority == 5 and CFG.sealer_limit == 5
    assert CFG.max_delay_ms == 2500
    with pytest.raises(ValueError):
        CliqueConfig(9, 0)


def test_signed_recently_genesis(genesis_clique):
    assert not any(signed_recently(genesis_clique, SealerId(i), 5) for i in range(9))


def test_signed_recently_sliding_window():
    # Sealer 1 seals block k=1, then others fill k+1.. one by one.
    view = clique_chain([1])
    seen = []
    for filler in (2, 3, 4, 5):
        seen.append(signed_recently(view, SealerId(1), 5))
        view = clique_chain([filler], view=view)
    seen.append(signed_recently(view, SealerId(1), 5))
    # candidates k+1..k+4 blocked, k+5 allowed
    assert seen == [True, True, True, True, False]


def test_in_order_examples():
    assert in_order(9, SealerId(0), 9)
    assert in_order(10, SealerId(1), 9)


@given(number=st.integers(1, 10**6))
def test_exactly_one_in_order_sealer(number):
    assert sum(in_order(number, SealerId(i), 9) for i in range(9)) == 1


def test_schedule_in_order_fires_immediately():
    st_ = CliqueSealerState.fresh(1, CFG)
    plan = schedule_seal(st_, 5000, never)
    assert plan.fire_ms == 5000 and plan.weight == 2 and plan.target == 1


def test_schedule_out_of_order_delay_domain():
    st_ = CliqueSealerState.fresh(2, CFG)
    bounds = []
    plan = schedule_seal(st_, 0, lambda lo, hi: bounds.append((lo, hi)) or hi)
    assert bounds == [(0, 2500)]
    assert plan.weight == 1 and plan.timestamp == 5000 and plan.fire_ms == 7500


def test_schedule_blocked_by_sealer_limit():
    st_ = CliqueSealerState.fresh(3, CFG)
    st_.view = clique_chain([3, 4])
    assert schedule_seal(st_, 0, never) is None


def test_out_of_order_delay_mean():
    rng = random.Random(9)
    draws = []
    for _ in range(10_000):
        st_ = CliqueSealerState.fresh(2, CFG)
        plan = schedule_seal(st_, 5000, rng.randint)
        draws.append(plan.fire_ms - plan.timestamp)
    assert min(draws) >= 0 and max(draws) <= 2500
    assert abs(statistics.fmean(draws) - 1250) <= 0.03 * 1250


def test_uncontested_fire_appends_weight_two():
    st_ = CliqueSealerState.fresh(1, CFG)
    schedule_seal(st_, 5000, never)
    block = fire_seal(st_, 5000)
    assert block.weight == 2 and block.number == 1
    assert st_.view.head == block.id and st_.pending_seal is None


def test_fire_before_time_is_noop():
    st_ = CliqueSealerState.fresh(2, CFG)
    schedule_seal(st_, 5000, lambda lo, hi: 100)
    assert fire_seal(st_, 5050) is None


def test_out_of_order_timer_beaten_by_in_order_arrival():
    late = CliqueSealerState.fresh(2, CFG)
    schedule_seal(late, 5000, lambda lo, hi: 800)
    punctual = CliqueSealerState.fresh(1, CFG)
    schedule_seal(punctual, 5000, never)
    winner = fire_seal(punctual, 5000)
    assert on_deliver_clique(late, punctual.view)
    assert late.pending_seal is None
    assert fire_seal(late, 5800) is None
    assert [b.number for b in canonical_branch(late.view)] == [0, 1]
    assert late.view.head == winner.id


def test_out_of_order_seal_then_sealer_limit():
    # Sealer 3 fires with a null delay at number 2 (S2's turn) and is then blocked.
    st_ = CliqueSealerState.fresh(3, CFG)
    st_.view = clique_chain([1])
    schedule_seal(st_, 0, lambda lo, hi: 0)
    block = fire_seal(st_, st_.pending_seal.fire_ms)
    assert block.weight == 1 and block.number == 2
    assert schedule_seal(st_, 20000, never) is None


def test_deliver_equal_weight_keeps_local():
    st_ = CliqueSealerState.fresh(0, CFG)
    st_.view = clique_chain([1, 3])
    other = clique_chain([1, 4])
    assert not on_deliver_clique(st_, other)


def test_deliver_heavier_by_one():
    st_ = CliqueSealerState.fresh(0, CFG)
    st_.view = clique_chain([1, 3])
    heavier = clique_chain([1, 3, 4])
    assert on_deliver_clique(st_, heavier)


def test_deliver_fig3_merge_picks_weight_eight():
    prefix = clique_chain([i % 9 for i in range(1, 10)])
    left = clique_chain([1, 3, 2, 4, 5], view=prefix)
    right = clique_chain([1, 6, 7, 8, 0], view=prefix)
    st_ = CliqueSealerState.fresh(6, CFG)
    st_.view = right
    assert on_deliver_clique(st_, left)
    assert st_.view.head == left.head


def test_validation_rejects_wrong_weight(genesis_clique):
    g = genesis_clique.head_block
    bad = Block.seal(g, SealerId(2), 5000, weight=2)
    with pytest.raises(InvalidBlock):
        validate_view(genesis_clique.extend(bad), CFG)


def test_validation_rejects_sealer_limit_breach():
    view = clique_chain([1, 2])
    head = view.head_block
    bad = Block.seal(head, SealerId(1), head.timestamp + 5000, weight=1)
    with pytest.raises(InvalidBlock):
        validate_view(view.extend(bad), CFG)


def test_validation_rejects_short_period():
    view = clique_chain([1])
    head = view.head_block
    bad = Block.seal(head, SealerId(2), head.timestamp + 4999, weight=2)
    with pytest.raises(InvalidBlock):
        validate_view(view.extend(bad), CFG)


def _honest(n: int, seed: int, delay: DelayModel, until: int = 60000) -> Simulation:
    sim = Simulation(Protocol.CLIQUE, CliqueConfig(n, 5000), [NodeEndpoint(i, SealerId(i)) for i in range(n)],
                     delay=delay, seed=seed)
    sim.run(until)
    return sim


def test_zero_delay_honest_run_is_in_order_and_fork_free():
    sim = _honest(9, 1, DelayModel(0, 0))
    views = sim.views()
    assert len({v.head for v in views.values()}) == 1
    branch = canonical_branch(views[0])[1:]
    assert len(branch) == 12
    assert all(b.weight == 2 for b in branch)
    sealed = [b for node in sim.nodes.values() for b in node.sealed]
    assert len(sealed) == len(branch)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32))
def test_honest_runs_keep_block_invariants(seed):
    sim = _honest(9, seed, DelayModel(50, 10), until=45000)
    for view in sim.views().values():
        branch = canonical_branch(view)
        for i in range(1, len(branch)):
            b = branch[i]
            assert (b.weight == 2) == (b.number % 9 == b.sealer.index)
            window = branch[max(1, i - 4):i]
            assert b.sealer not in {w.sealer for w in window}
            assert b.timestamp - branch[i - 1].timestamp >= 5000
