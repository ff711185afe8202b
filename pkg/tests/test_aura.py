from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from poaclone.aura import (
    AuraConfig,
    AuraSealerState,
    current_step,
    my_turn,
    next_turn_step,
    on_deliver_aura,
    propose_aura,
    validate_view,
)
from poaclone.chain import (
    Block,
    ChainView,
    DecisionRule,
    InvalidBlock,
    Protocol,
    RuleKind,
    SealerId,
    Transaction,
    canonical_branch,
)
from poaclone.net import DelayModel, NodeEndpoint, Simulation

from conftest import aura_chain

CFG = AuraConfig(9, 3000)


def test_config_validation():
    with pytest.raises(ValueError):
        AuraConfig(0, 1000)
    with pytest.raises(ValueError):
        AuraConfig(3, 0)
    with pytest.raises(ValueError):
        AuraSealerState.fresh(9, CFG)


@pytest.mark.parametrize("clock,step", [(0, 0), (30000, 10), (2999, 0)])
def test_current_step(clock, step):
    assert current_step(clock, CFG) == step


def test_my_turn_examples():
    assert my_turn(10, SealerId(1), 9)
    assert not my_turn(10, SealerId(2), 9)


@given(k=st.integers(0, 10**6), n=st.integers(1, 30))
def test_round_robin_over_one_cycle(k, n):
    owners = []
    for step in range(k, k + n):
        holders = [i for i in range(n) if my_turn(step, SealerId(i), n)]
        assert len(holders) == 1
        owners.append(holders[0])
    assert sorted(owners) == list(range(n))


@given(after=st.integers(0, 10**6), idx=st.integers(0, 8))
def test_next_turn_step(after, idx):
    s = next_turn_step(after, SealerId(idx), 9)
    assert s > after and s - after <= 9
    assert my_turn(s, SealerId(idx), 9)


def test_propose_on_own_turn():
    st_ = AuraSealerState.fresh(1, CFG)
    head = st_.view.head
    block = propose_aura(st_, 30000)
    assert block is not None
    assert block.step == 10 and block.sealer == SealerId(1) and block.parent == head
    assert st_.view.head == block.id


def test_propose_off_turn_returns_nothing():
    assert propose_aura(AuraSealerState.fresh(2, CFG), 30000) is None


def test_propose_once_per_step():
    st_ = AuraSealerState.fresh(1, CFG)
    assert propose_aura(st_, 30000) is not None
    assert propose_aura(st_, 31000) is None


def test_propose_drops_invalid_pending():
    st_ = AuraSealerState.fresh(1, CFG)
    ok = Transaction("m", "a", 1, 0)
    clash = Transaction("m", "b", 1, 0)
    block = propose_aura(st_, 30000, [ok, clash])
    assert block.txs == (ok,)


def test_deliver_same_view_is_not_adopted():
    st_ = AuraSealerState.fresh(0, CFG)
    st_.view = aura_chain([1, 2])
    assert not on_deliver_aura(st_, aura_chain([1, 2]))


def test_deliver_taller_view_is_adopted():
    st_ = AuraSealerState.fresh(0, CFG)
    st_.view = aura_chain([1, 2])
    taller = aura_chain([1, 2, 3])
    assert on_deliver_aura(st_, taller)
    assert st_.view.head == taller.head


def test_deliver_merge_discards_victim_tx():
    tx1 = Transaction("m", "merchant", 100, 0)
    prefix = aura_chain(range(1, 10))
    g = prefix.head_block
    victim = prefix.extend(Block.seal(g, SealerId(1), 30000, step=10, txs=[tx1]))
    victim = aura_chain([12, 14, 16, 18], view=victim)
    attacker = aura_chain([10, 11, 13, 15, 17, 19], view=prefix)
    st_ = AuraSealerState.fresh(2, CFG)
    st_.view = victim
    assert victim.block_of(tx1) is not None
    assert on_deliver_aura(st_, attacker)
    assert st_.view.block_of(tx1) is None


def test_validation_rejects_out_of_turn_block(genesis_aura):
    bad = Block.seal(genesis_aura.head_block, SealerId(2), 1000, step=1)
    with pytest.raises(InvalidBlock):
        validate_view(genesis_aura.extend(bad), CFG)
    st_ = AuraSealerState.fresh(0, CFG)
    assert not on_deliver_aura(st_, genesis_aura.extend(bad))


def test_validation_rejects_unknown_sealer(genesis_aura):
    bad = Block.seal(genesis_aura.head_block, SealerId(10), 10000, step=10)
    with pytest.raises(InvalidBlock):
        validate_view(genesis_aura.extend(bad), CFG)


def test_clone_pair_may_seal_the_same_turn_on_two_branches():
    prefix = aura_chain(range(1, 10))
    a = prefix.extend(Block.seal(prefix.head_block, SealerId(1), 30000, step=10))
    b = prefix.extend(Block.seal(prefix.head_block, SealerId(1), 30001, step=10))
    validate_view(a, CFG)
    validate_view(b, CFG)
    assert a.head != b.head


def _honest(n: int, step_ms: int, until: int, seed: int = 0, delay: DelayModel = DelayModel(0, 0)) -> Simulation:
    sim = Simulation(Protocol.AURA, AuraConfig(n, step_ms), [NodeEndpoint(i, SealerId(i)) for i in range(n)],
                     delay=delay, seed=seed)
    sim.run(until)
    return sim


def test_honest_zero_delay_one_block_per_step_five_rotations():
    n, s = 5, 1000
    sim = _honest(n, s, 5 * n * s)
    heads = {v.head for v in sim.views().values()}
    assert len(heads) == 1
    view = sim.nodes[0].view
    steps = [b.step for b in canonical_branch(view)[1:]]
    assert steps == list(range(1, 5 * n + 1))
    total = sum(len(node.sealed) for node in sim.nodes.values())
    assert total == len(steps)


def test_honest_n3_ten_seconds_is_ten_blocks():
    sim = _honest(3, 1000, 10000)
    assert sim.nodes[0].view.height == 10


def test_score_never_regresses_during_run():
    from poaclone.chain import aura_score

    sim = Simulation(Protocol.AURA, CFG, [NodeEndpoint(i, SealerId(i)) for i in range(9)], seed=4)
    last = {i: 0 for i in range(9)}

    def watch(sim_, node):
        score = aura_score(node.view)
        assert score >= last[node.id]
        last[node.id] = score

    sim.view_listeners.append(watch)
    sim.run(90000)
    assert max(last.values()) > 0


def test_rounds_rule_decides_on_honest_chain():
    view = _honest(9, 1000, 40000).nodes[0].view
    rule = DecisionRule(RuleKind.AURA_ROUNDS)
    from poaclone.chain import is_decided

    assert is_decided(view, canonical_branch(view)[1].id, rule, 9)
