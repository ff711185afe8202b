from __future__ import annotations

import dataclasses

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from poaclone.attack import (
    BLIND_CAP_MS,
    ConflictingTxPair,
    RunOutcome,
    plan_aura_attack,
    plan_clique_attack,
    plan_clique_blind_attack,
    run_attack,
)
from poaclone.chain import (
    ChainView,
    DecisionRule,
    RuleKind,
    SealerId,
    Transaction,
    blocks_after,
    clique_total_weight,
    common_ancestor,
    dump_view,
    load_view,
)
from poaclone.errors import PlanError


def labels(group: frozenset[int], n: int = 9) -> set[int]:
    """Endpoint ids back to 1-based sealer labels; the clone endpoint reads as label 1."""
    return {n if e == 0 else (1 if e == n else e) for e in group}


# -- planning ------------------------------------------------------------------


def test_aura_plan_duration_and_identities():
    plan = plan_aura_attack(9, 3000, 10, placement_seed=0)
    assert plan.duration_ms == 30000
    assert plan.identities(plan.attacker_group) == 5
    assert plan.identities(plan.victim_group) == 5
    assert plan.clones[0].endpoints == (1, 9)
    assert plan.start_ms == 29900


@given(seed=st.integers(0, 2**32))
def test_aura_plan_balanced_for_any_placement(seed):
    plan = plan_aura_attack(9, 3000, 9, placement_seed=seed)
    assert len(plan.attacker_group) == len(plan.victim_group) == 5
    assert 1 in plan.attacker_group and 9 in plan.victim_group


def test_aura_plan_even_n_needs_two_attackers():
    with pytest.raises(PlanError, match="two attackers"):
        plan_aura_attack(10, 3000, 12, 0)
    plan = plan_aura_attack(10, 3000, 12, 0, attackers=2)
    assert plan.identities(plan.attacker_group) == plan.identities(plan.victim_group) == 6


def test_aura_plan_rejects_bad_steps():
    with pytest.raises(PlanError):
        plan_aura_attack(9, 3000, 0, 0)


def test_clique_divisions():
    k5 = plan_clique_attack(9, 5)
    assert labels(k5.attacker_group) == {1, 2, 3, 4, 5}
    assert labels(k5.victim_group) == {1, 6, 7, 8, 9}
    k2 = plan_clique_attack(9, 2)
    assert labels(k2.attacker_group) == {1, 2, 4, 6, 8}
    assert labels(k2.victim_group) == {1, 3, 5, 7, 9}


@pytest.mark.parametrize("k", [1, 6])
def test_clique_division_out_of_range(k):
    with pytest.raises(PlanError):
        plan_clique_attack(9, k)


@pytest.mark.parametrize("n", [5, 7, 11, 13])
def test_clique_general_division_is_balanced(n):
    for k in range(2, n // 2 + 2):
        plan = plan_clique_attack(n, k)
        assert plan.identities(plan.attacker_group) == n // 2 + 1
        assert plan.identities(plan.victim_group) == n // 2 + 1
        # the next k in-order labels after the attacker sit attacker-side
        assert {lab % n for lab in range(2, k + 1)} <= plan.attacker_group


def test_conflicting_pair_must_conflict():
    a = Transaction("m", "x", 1, 0)
    with pytest.raises(PlanError):
        ConflictingTxPair(a, a)


def test_outcome_rejects_inconsistent_verdict():
    with pytest.raises(ValueError):
        RunOutcome(True, True, False, False, (5, 6), (0, 0), "x")


# -- execution -----------------------------------------------------------------


def test_fig2_style_run_double_spends():
    plan = plan_aura_attack(9, 3000, 10, placement_seed=7)
    run = run_attack(plan, period_ms=3000, seed=7)
    o = run.outcome
    assert o.double_spend
    assert o.blocks_per_branch == (5, 6)
    v, a = run.trace.victim_at_heal, run.trace.attacker_at_heal
    base = common_ancestor(v, a)
    # both clones sealed the first turn of the partition
    assert blocks_after(v, base.id)[0].sealer == SealerId(1)
    assert blocks_after(a, base.id)[0].sealer == SealerId(1)
    assert blocks_after(v, base.id)[0].step == blocks_after(a, base.id)[0].step


@pytest.mark.parametrize("seed", range(6))
def test_aura_eight_steps_never_succeeds(seed):
    plan = plan_aura_attack(9, 3000, 8, placement_seed=seed)
    o = run_attack(plan, period_ms=3000, seed=seed).outcome
    assert not o.double_spend
    if 0 in plan.victim_group:
        # sealer 0 owns no turn in steps 10..17, so the victim side stays at 4 blocks
        assert not o.tx1_committed_in_partition


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32), steps=st.integers(8, 12), period=st.sampled_from([3000, 5000]))
def test_aura_verdict_and_overtake_arithmetic(seed, steps, period):
    plan = plan_aura_attack(9, period, steps, placement_seed=seed)
    run = run_attack(plan, period_ms=period, seed=seed)
    o = run.outcome
    assert o.double_spend == (o.tx1_committed_in_partition and o.attacker_branch_adopted and not o.tx1_in_final_chain)
    if o.double_spend and steps >= 10:
        assert o.attacker_blocks == o.victim_blocks + 1
        orig, clone = plan.clones[0].endpoints
        assert len(run.sim.nodes[orig].sealed) >= 1
        base = common_ancestor(run.trace.victim_at_heal, run.trace.attacker_at_heal)
        a_own = sum(b.sealer == SealerId(1) for b in blocks_after(run.trace.attacker_at_heal, base.id))
        v_own = sum(b.sealer == SealerId(1) for b in blocks_after(run.trace.victim_at_heal, base.id))
        assert a_own == v_own + 1


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32), k=st.integers(2, 5), duration=st.integers(124, 140))
def test_clique_weight_accounting_round_trips(seed, k, duration):
    plan = plan_clique_attack(9, k, duration_ms=duration * 200)
    run = run_attack(plan, period_ms=5000, seed=seed)
    o = run.outcome
    v = load_view(dump_view(run.trace.victim_at_heal))
    a = load_view(dump_view(run.trace.attacker_at_heal))
    base = common_ancestor(v, a)
    pos = v.positions[base.id]
    base_weight = clique_total_weight(ChainView(v.blocks, v.canonical[pos].id))
    assert o.weight_gain_per_branch == (clique_total_weight(v) - base_weight, clique_total_weight(a) - base_weight)
    assert o.double_spend == (o.tx1_committed_in_partition and o.attacker_branch_adopted and not o.tx1_in_final_chain)


def test_clique_partition_starts_right_before_attacker_turn():
    plan = plan_clique_attack(9, 5, duration_ms=30000)
    run = run_attack(plan, period_ms=5000, seed=1)
    v, a = run.trace.victim_at_heal, run.trace.attacker_at_heal
    base = common_ancestor(v, a)
    assert base.number % 9 == 0 and base.number >= 9
    assert blocks_after(v, base.id)[0].sealer == SealerId(1)
    assert blocks_after(a, base.id)[0].sealer == SealerId(1)


def test_blind_plan_targets():
    plan = plan_clique_blind_attack(9, 0)
    assert plan.budgets == (1, None)
    assert plan.duration_ms == BLIND_CAP_MS
    with pytest.raises(PlanError):
        plan_clique_blind_attack(10)


def test_blind_plan_best_and_worst_case():
    order = plan_clique_attack(9, 5)
    best = dataclasses.replace(order, blind=True, budgets=(1, None), duration_ms=BLIND_CAP_MS, clique_division=None)
    worst = dataclasses.replace(best, groups=(frozenset({1, 6, 7, 8, 0}), frozenset({2, 3, 4, 5, 9})))
    o_order = run_attack(order, period_ms=5000, seed=2).outcome
    o_best = run_attack(best, period_ms=5000, seed=2).outcome
    o_worst = run_attack(worst, period_ms=5000, seed=2).outcome
    span = lambda o: o.heal_ms - o.partition_start_ms  # noqa: E731
    assert o_best.double_spend and o_worst.double_spend
    assert span(o_best) == span(o_order)
    assert span(o_worst) > span(o_order)
    assert o_worst.weight_gain_per_branch[0] <= 10
    assert o_worst.weight_gain_per_branch[1] >= 11


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**32))
def test_blind_plan_succeeds_for_random_placement(seed):
    o = run_attack(plan_clique_blind_attack(9, seed), period_ms=5000, seed=seed).outcome
    assert o.double_spend
    assert o.weight_gain_per_branch[0] <= 10


def test_threshold_seven_blocks_both_conditions():
    plan = plan_aura_attack(9, 3000, 12, placement_seed=3, attackers=2)
    rule = DecisionRule(RuleKind.THRESHOLD, 7)
    o = run_attack(plan, period_ms=3000, seed=3, rule=rule).outcome
    assert not o.tx1_committed_in_partition
    assert not o.tx2_committed_in_partition
    assert not o.double_spend
