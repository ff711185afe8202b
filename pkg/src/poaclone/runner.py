"""Turn a ScenarioConfig plus a seed into a finished simulation."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional

from .attack import (
    AttackPlan,
    AttackTrace,
    ConflictingTxPair,
    RunOutcome,
    make_config,
    plan_aura_attack,
    plan_clique_attack,
    plan_clique_blind_attack,
    run_attack,
)
from .chain import ChainView, SealerId, dump_view, tx_decided
from .config import AttackKind, ScenarioConfig
from .net import DelayModel, NodeEndpoint, SealScript, Simulation


@dataclass
class SimulationResult:
    outcome: RunOutcome
    sim: Simulation
    plan: Optional[AttackPlan] = None
    trace: Optional[AttackTrace] = None

    @property
    def views(self) -> dict[int, ChainView]:
        return self.sim.views()

    def dump(self) -> str:
        """Serialized final views of every endpoint, in endpoint order."""
        parts = []
        for eid, view in sorted(self.views.items()):
            parts.append(f"# endpoint {eid}\n{dump_view(view)}")
        return "".join(parts)


def build_plan(scenario: ScenarioConfig, seed: int) -> Optional[AttackPlan]:
    placement = scenario.placement_seed if scenario.placement_seed is not None else seed
    if scenario.attack is AttackKind.AURA:
        steps = scenario.partition_steps
        if steps is None:
            steps = -(-scenario.partition_ms // scenario.period_ms)
        plan = plan_aura_attack(scenario.n, scenario.period_ms, steps, placement, attackers=scenario.attackers)
        if scenario.partition_ms is not None:
            plan = _with_duration(plan, scenario.partition_ms)
        return plan
    if scenario.attack is AttackKind.CLIQUE:
        return plan_clique_attack(scenario.n, scenario.division_k, placement, scenario.partition_ms)
    if scenario.attack is AttackKind.CLIQUE_BLIND:
        if scenario.partition_ms is not None:
            return plan_clique_blind_attack(scenario.n, placement, scenario.partition_ms)
        return plan_clique_blind_attack(scenario.n, placement)
    return None


def _with_duration(plan: AttackPlan, duration_ms: int) -> AttackPlan:
    return dataclasses.replace(plan, duration_ms=duration_ms)


def _script(scenario: ScenarioConfig) -> SealScript:
    return SealScript(
        delays={(s, num): ms for s, num, ms in scenario.delays},
        lags={(s, num): ms for s, num, ms in scenario.lags},
    )


def execute(scenario: ScenarioConfig, seed: int, *, trace: bool = False) -> SimulationResult:
    """Run one scenario; attack scenarios go through the orchestrator."""
    delay = DelayModel(scenario.base_delay_ms, scenario.jitter_ms)
    plan = build_plan(scenario, seed)
    if plan is not None:
        run = run_attack(
            plan,
            period_ms=scenario.period_ms,
            seed=seed,
            rule=scenario.rule,
            delay=delay,
            script=_script(scenario),
            trace=trace,
        )
        return SimulationResult(run.outcome, run.sim, plan, run.trace)
    return run_honest(scenario, seed, trace=trace)


def run_honest(scenario: ScenarioConfig, seed: int, *, trace: bool = False) -> SimulationResult:
    """Fully connected run; ``silent`` sealers never seal. TX1 goes to the first active sealer."""
    n = scenario.n
    sim = Simulation(
        scenario.protocol,
        make_config(scenario.protocol, n, scenario.period_ms),
        [NodeEndpoint(i, SealerId(i)) for i in range(n)],
        delay=DelayModel(scenario.base_delay_ms, scenario.jitter_ms),
        seed=seed,
        trace=trace,
        script=_script(scenario),
    )
    for s in scenario.silent:
        sim.set_sealing(s, False)
    txs = ConflictingTxPair.default()
    active = [i for i in range(n) if i not in scenario.silent]
    if active:
        at = scenario.tx_at_ms if scenario.tx_at_ms is not None else scenario.period_ms // 2
        sim.inject_tx(at, txs.tx1, active[0])
    sim.run(scenario.duration_ms)
    for node in sim.nodes.values():
        if node.sealing:
            sim.set_sealing(node.id, False)
    sim.run(sim.now + sim.delay.bound_ms)

    views = [sim.nodes[i].view for i in active] or [sim.nodes[0].view]
    heads = {v.head for v in views}
    final = views[0]
    outcome = RunOutcome(
        tx1_committed_in_partition=False,
        attacker_branch_adopted=False,
        tx1_in_final_chain=final.block_of(txs.tx1) is not None,
        double_spend=False,
        blocks_per_branch=(0, 0),
        weight_gain_per_branch=(0, 0),
        final_head=final.head,
        converged=len(heads) == 1,
        tx1_decided_final=tx_decided(final, txs.tx1, scenario.rule, n),
    )
    return SimulationResult(outcome, sim)


def run_simulation(scenario: ScenarioConfig, seed: int) -> RunOutcome:
    return execute(scenario, seed).outcome
