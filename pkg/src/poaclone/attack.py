"""Cloning-attack planning, execution and the double-spend verdict.

Endpoint layout used by every plan: sealer ``i`` runs at endpoint ``i`` and
the clone of the ``j``-th attacker runs at endpoint ``n + j``. The original
instance stays in the attacker group, the clone joins the victim group.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Optional, Sequence

from . import aura, clique
from .chain import (
    ChainView,
    DecisionRule,
    Protocol,
    RuleKind,
    SealerId,
    Transaction,
    blocks_after,
    common_ancestor,
    fork_choice_key,
    tx_decided,
)
from .errors import PlanError
from .net import (
    POLL_MS,
    CloneBinding,
    DelayModel,
    NodeEndpoint,
    PartitionWindow,
    SealScript,
    Simulation,
)

#: How long before the attacker's first partition turn the Aura partition opens.
AURA_LEAD_MS = 100
#: Blocks/steps simulated after the heal so that fork resolution completes.
SETTLE_ROUNDS = 3
#: Upper bound on a topology-blind Clique partition.
BLIND_CAP_MS = 120_000

# Sealer labels 1..9 for n=9, attacker label 1: (attacker group, victim group).
CLIQUE_DIVISIONS_9 = {
    5: ({1, 2, 3, 4, 5}, {1, 6, 7, 8, 9}),
    4: ({1, 2, 3, 4, 6}, {1, 5, 7, 8, 9}),
    3: ({1, 2, 3, 6, 7}, {1, 4, 5, 8, 9}),
    2: ({1, 2, 4, 6, 8}, {1, 3, 5, 7, 9}),
}


@dataclass(frozen=True)
class ConflictingTxPair:
    tx1: Transaction
    tx2: Transaction

    def __post_init__(self) -> None:
        if not self.tx1.conflicts_with(self.tx2):
            raise PlanError("tx1 and tx2 must share sender and nonce and differ otherwise")

    @classmethod
    def default(cls) -> "ConflictingTxPair":
        return cls(Transaction("mallory", "merchant", 100, 0), Transaction("mallory", "accomplice", 100, 0))


@dataclass(frozen=True)
class AttackPlan:
    protocol: Protocol
    n: int
    attackers: tuple[SealerId, ...]
    groups: tuple[frozenset[int], frozenset[int]]
    clones: tuple[CloneBinding, ...]
    duration_ms: int
    txs: ConflictingTxPair = field(default_factory=ConflictingTxPair.default)
    start_ms: Optional[int] = None
    clique_division: Optional[int] = None
    budgets: tuple[Optional[int], Optional[int]] = (1, None)
    blind: bool = False
    stop_on_lock: bool = True

    def __post_init__(self) -> None:
        problems = []
        a_group, v_group = self.groups
        if a_group & v_group:
            problems.append("attacker and victim groups overlap")
        for binding in self.clones:
            orig, clone = binding.endpoints
            if orig not in a_group or clone not in v_group:
                problems.append(f"clone pair {binding.endpoints} is not split across the groups")
        if self.duration_ms <= 0:
            problems.append("partition duration must be positive")
        if problems:
            raise PlanError("inconsistent attack plan", problems)

    @property
    def attacker(self) -> Optional[SealerId]:
        return self.attackers[0] if self.attackers else None

    @property
    def attacker_group(self) -> frozenset[int]:
        return self.groups[0]

    @property
    def victim_group(self) -> frozenset[int]:
        return self.groups[1]

    @property
    def clone_endpoints(self) -> frozenset[int]:
        return frozenset(e for b in self.clones for e in b.endpoints)

    def honest(self, group: frozenset[int]) -> list[int]:
        return sorted(e for e in group if e not in self.clone_endpoints)

    def endpoints(self) -> list[NodeEndpoint]:
        eps = [NodeEndpoint(i, SealerId(i)) for i in range(self.n)]
        eps += [NodeEndpoint(b.endpoints[1], b.sealer) for b in self.clones]
        return eps

    def identities(self, group: frozenset[int]) -> int:
        return len({e if e < self.n else self._clone_sealer(e) for e in group})

    def _clone_sealer(self, endpoint: int) -> int:
        for b in self.clones:
            if b.endpoints[1] == endpoint:
                return b.sealer.index
        raise KeyError(endpoint)


def _bindings(n: int, attackers: Sequence[SealerId]) -> tuple[CloneBinding, ...]:
    return tuple(CloneBinding(a, (a.index, n + j)) for j, a in enumerate(attackers))


def plan_aura_attack(
    n: int,
    step_duration_ms: int,
    partition_steps: int,
    placement_seed: int,
    attackers: int = 1,
    txs: Optional[ConflictingTxPair] = None,
) -> AttackPlan:
    """Balanced random split with one clone pair per attacker.

    The partition opens just before the lead attacker's first turn after one
    full round and lasts ``partition_steps`` steps.
    """
    if partition_steps < 1:
        raise PlanError("partition_steps must be at least 1")
    if not 0 <= attackers < n:
        raise PlanError(f"attacker count {attackers} outside [0, {n})")
    if n % 2 == 0 and attackers == 1:
        raise PlanError(
            f"n={n} is even: one clone pair leaves the smaller group short of a majority; "
            "use two attackers (two clone pairs)"
        )
    ids = tuple(SealerId(1 + j) for j in range(attackers)) if n > 1 else ()
    honest = [i for i in range(n) if SealerId(i) not in ids]
    random.Random(placement_seed).shuffle(honest)
    victim_honest = len(honest) // 2
    victim = set(honest[:victim_honest])
    attacker_side = set(honest[victim_honest:])
    clones = _bindings(n, ids)
    for b in clones:
        attacker_side.add(b.endpoints[0])
        victim.add(b.endpoints[1])
    lead = ids[0] if ids else SealerId(1 % n)
    first = aura.next_turn_step(n, lead, n)
    return AttackPlan(
        protocol=Protocol.AURA,
        n=n,
        attackers=ids,
        groups=(frozenset(attacker_side), frozenset(victim)),
        clones=clones,
        duration_ms=partition_steps * step_duration_ms,
        txs=txs or ConflictingTxPair.default(),
        start_ms=first * step_duration_ms - AURA_LEAD_MS,
        budgets=(1, None),
    )


def _general_division(n: int, k: int) -> tuple[set[int], set[int]]:
    """Attacker gets labels 2..k, victim gets k+1, the rest alternate."""
    quota = (n - 1) // 2
    attacker = set(range(2, k + 1))
    rest = list(range(k + 2, n + 1))
    victim = {k + 1}
    turn_attacker = True
    for label in rest:
        if turn_attacker and len(attacker) < quota:
            attacker.add(label)
        else:
            victim.add(label)
        turn_attacker = not turn_attacker
    while len(attacker) < quota:
        moved = max(victim - {k + 1})
        victim.remove(moved)
        attacker.add(moved)
    return attacker | {1}, victim | {1}


def clique_division(n: int, k: int) -> tuple[set[int], set[int]]:
    """Sealer labels (1-based) of the attacker and victim groups for division ``k``."""
    if n % 2 == 0:
        raise PlanError(f"n={n} is even: the order-aware plan needs n odd")
    top = n // 2 + 1
    if not 2 <= k <= top:
        raise PlanError(f"division k={k} outside [2, {top}]")
    if n == 9:
        a, v = CLIQUE_DIVISIONS_9[k]
        return set(a), set(v)
    return _general_division(n, k)


def _groups_from_labels(n: int, labels: tuple[set[int], set[int]]) -> tuple[frozenset[int], frozenset[int]]:
    a_labels, v_labels = labels
    attacker = {lab % n for lab in a_labels}
    victim = {lab % n for lab in v_labels if lab != 1} | {n}
    return frozenset(attacker), frozenset(victim)


def plan_clique_attack(
    n: int,
    consecutive_k: int,
    placement_seed: int = 0,
    duration_ms: int = 28_000,
    txs: Optional[ConflictingTxPair] = None,
) -> AttackPlan:
    """Order-aware plan: k upcoming in-order sealers on the attacker side.

    ``placement_seed`` is accepted for interface symmetry; divisions are fixed.
    """
    groups = _groups_from_labels(n, clique_division(n, consecutive_k))
    attacker = SealerId(1 % n)
    return AttackPlan(
        protocol=Protocol.CLIQUE,
        n=n,
        attackers=(attacker,),
        groups=groups,
        clones=_bindings(n, [attacker]),
        duration_ms=duration_ms,
        txs=txs or ConflictingTxPair.default(),
        clique_division=consecutive_k,
        budgets=(1, 1),
    )


def plan_clique_blind_attack(
    n: int,
    placement_seed: int = 0,
    duration_ms: int = BLIND_CAP_MS,
    txs: Optional[ConflictingTxPair] = None,
) -> AttackPlan:
    """Topology-blind plan: one victim-side seal, unlimited attacker-side seals."""
    if n % 2 == 0:
        raise PlanError(f"n={n} is even: the blind plan needs n odd")
    attacker = SealerId(1 % n)
    honest = [i for i in range(n) if i != attacker.index]
    random.Random(placement_seed).shuffle(honest)
    half = len(honest) // 2
    victim = frozenset(honest[:half]) | {n}
    attacker_side = frozenset(honest[half:]) | {attacker.index}
    return AttackPlan(
        protocol=Protocol.CLIQUE,
        n=n,
        attackers=(attacker,),
        groups=(attacker_side, victim),
        clones=_bindings(n, [attacker]),
        duration_ms=duration_ms,
        txs=txs or ConflictingTxPair.default(),
        budgets=(1, None),
        blind=True,
    )


# -- execution ----------------------------------------------------------------


@dataclass(frozen=True)
class RunOutcome:
    tx1_committed_in_partition: bool
    attacker_branch_adopted: bool
    tx1_in_final_chain: bool
    double_spend: bool
    blocks_per_branch: tuple[int, int]
    weight_gain_per_branch: tuple[int, int]
    final_head: str
    tx2_committed_in_partition: bool = False
    converged: bool = False
    partition_start_ms: Optional[int] = None
    heal_ms: Optional[int] = None
    victim_sealed: int = 0
    attacker_sealed: int = 0
    tx1_decided_final: bool = False

    def __post_init__(self) -> None:
        expected = self.tx1_committed_in_partition and self.attacker_branch_adopted and not self.tx1_in_final_chain
        if self.double_spend != expected:
            raise ValueError("double_spend must be the conjunction of the three conditions")

    @property
    def victim_blocks(self) -> int:
        return self.blocks_per_branch[0]

    @property
    def attacker_blocks(self) -> int:
        return self.blocks_per_branch[1]


@dataclass
class AttackTrace:
    """What the orchestrator observed during one run."""

    plan: AttackPlan
    rule: DecisionRule
    partition: Optional[PartitionWindow] = None
    heal_ms: Optional[int] = None
    tx1_committed: bool = False
    tx2_committed: bool = False
    victim_at_heal: Optional[ChainView] = None
    attacker_at_heal: Optional[ChainView] = None
    final_views: dict[int, ChainView] = field(default_factory=dict)
    sealed_before: dict[int, int] = field(default_factory=dict)
    victim_sealed: int = 0
    attacker_sealed: int = 0


def _best(views: Sequence[ChainView]) -> ChainView:
    return max(views, key=fork_choice_key)


def evaluate_double_spend(trace: AttackTrace, plan: AttackPlan, rule: DecisionRule) -> RunOutcome:
    """Apply the three success conditions to a finished run."""
    byzantine = {a.index for a in plan.attackers}
    honest_views = [v for e, v in sorted(trace.final_views.items()) if e < plan.n and e not in byzantine]
    heads = {v.head for v in honest_views}
    converged = len(heads) == 1
    final = honest_views[0]
    txs = plan.txs

    blocks = (0, 0)
    gains = (0, 0)
    adopted = False
    if trace.victim_at_heal is not None and trace.attacker_at_heal is not None:
        v, a = trace.victim_at_heal, trace.attacker_at_heal
        base = common_ancestor(v, a)
        v_blocks, a_blocks = blocks_after(v, base.id), blocks_after(a, base.id)
        blocks = (len(v_blocks), len(a_blocks))
        gains = (sum(b.weight or 0 for b in v_blocks), sum(b.weight or 0 for b in a_blocks))
        # Every honest view must sit on the attacker branch; a late sibling tie
        # at the tips does not undo that.
        adopted = bool(a_blocks) and all(view.contains(a_blocks[0].id) for view in honest_views)

    tx1_final = any(view.block_of(txs.tx1) is not None for view in honest_views)
    cond1 = trace.tx1_committed
    return RunOutcome(
        tx1_committed_in_partition=cond1,
        attacker_branch_adopted=adopted,
        tx1_in_final_chain=tx1_final,
        double_spend=cond1 and adopted and not tx1_final,
        blocks_per_branch=blocks,
        weight_gain_per_branch=gains,
        final_head=final.head,
        tx2_committed_in_partition=trace.tx2_committed,
        converged=converged,
        partition_start_ms=trace.partition.start_ms if trace.partition else None,
        heal_ms=trace.heal_ms,
        victim_sealed=trace.victim_sealed,
        attacker_sealed=trace.attacker_sealed,
        tx1_decided_final=tx_decided(final, txs.tx1, rule, plan.n),
    )


@dataclass
class AttackRun:
    outcome: RunOutcome
    trace: AttackTrace
    sim: Simulation


class _Orchestrator:
    """Drives one attack inside a Simulation through its listener hooks."""

    def __init__(self, sim: Simulation, plan: AttackPlan, rule: DecisionRule) -> None:
        self.sim = sim
        self.plan = plan
        self.rule = rule
        self.trace = AttackTrace(plan, rule)
        self.period = (
            sim.config.step_duration_ms if plan.protocol is Protocol.AURA else sim.config.block_period_ms
        )
        self.honest_victims = plan.honest(plan.victim_group)
        self.honest_attackers = plan.honest(plan.attacker_group)
        self.heal_requested = False
        self.lambda_ = sim.config.sealer_limit if plan.protocol is Protocol.CLIQUE else 0
        sim.view_listeners.append(self.on_view)
        sim.edge_listeners.append(self.on_edge)
        for b in plan.clones:
            sim.set_sealing(b.endpoints[1], False)
        if plan.start_ms is not None:
            self.open(plan.start_ms)

    def open(self, start_ms: int) -> None:
        sim, plan = self.sim, self.plan
        self.trace.partition = sim.add_partition(
            start_ms, start_ms + plan.duration_ms, [plan.attacker_group, plan.victim_group], plan.clones
        )
        v_first, a_first = self._inject_targets()
        if v_first is not None:
            sim.inject_tx(start_ms, plan.txs.tx1, v_first)
        if a_first is not None:
            sim.inject_tx(start_ms, plan.txs.tx2, a_first)

    def _inject_targets(self) -> tuple[Optional[int], Optional[int]]:
        v = self.honest_victims[0] if self.honest_victims else None
        a = self.honest_attackers[0] if self.honest_attackers else None
        if v is None and self.plan.clones:
            v = self.plan.clones[0].endpoints[1]
        if a is None and self.plan.clones:
            a = self.plan.clones[0].endpoints[0]
        return v, a

    # hooks

    def on_edge(self, sim: Simulation, window: PartitionWindow, opening: bool) -> None:
        victim_budget, attacker_budget = self.plan.budgets
        if opening:
            self.trace.sealed_before = {i: len(node.sealed) for i, node in sim.nodes.items()}
            for b in self.plan.clones:
                orig, clone = b.endpoints
                sim.set_sealing(orig, True, attacker_budget)
                sim.set_sealing(clone, True, victim_budget)
            return
        self.trace.heal_ms = sim.now
        before = self.trace.sealed_before
        self.trace.victim_sealed = sum(len(sim.nodes[e].sealed) - before[e] for e in self.plan.victim_group)
        self.trace.attacker_sealed = sum(len(sim.nodes[e].sealed) - before[e] for e in self.plan.attacker_group)
        self.trace.victim_at_heal = _best([sim.nodes[e].view for e in sorted(self.plan.victim_group)])
        self.trace.attacker_at_heal = _best([sim.nodes[e].view for e in sorted(self.plan.attacker_group)])
        for b in self.plan.clones:
            for e in b.endpoints:
                sim.set_sealing(e, False)

    def on_view(self, sim: Simulation, node) -> None:
        plan = self.plan
        if self.trace.partition is None:
            if plan.start_ms is None and plan.attacker is not None and node.id == plan.attacker.index:
                head = node.view.head_block.number
                if head >= plan.n and (head + 1) % plan.n == plan.attacker.index:
                    self.open(-(-sim.now // POLL_MS) * POLL_MS)
            return
        if sim.active_partition is None:
            return
        if node.id in self.honest_victims and not self.trace.tx1_committed:
            if tx_decided(node.view, plan.txs.tx1, self.rule, plan.n):
                self.trace.tx1_committed = True
        if node.id in self.honest_attackers and not self.trace.tx2_committed:
            if tx_decided(node.view, plan.txs.tx2, self.rule, plan.n):
                self.trace.tx2_committed = True
        if plan.stop_on_lock and not self.heal_requested and self.trace.tx1_committed and self._locked():
            self.heal_requested = True
            sim.heal_at(-(-sim.now // POLL_MS) * POLL_MS)

    def _locked(self) -> bool:
        sim = self.sim
        victim = _best([sim.nodes[e].view for e in sorted(self.plan.victim_group)])
        attacker = _best([sim.nodes[e].view for e in sorted(self.plan.attacker_group)])
        if self.plan.protocol is Protocol.AURA:
            # Hold out for the extra block; a same-height lead rests on the step tie-break only.
            if attacker.height > victim.height:
                return True
        elif fork_choice_key(attacker) > fork_choice_key(victim):
            return True
        if self.plan.blind:
            base = common_ancestor(victim, attacker)
            gain = sum(b.weight or 0 for b in blocks_after(attacker, base.id))
            return gain >= 2 * self.lambda_ + 1
        return False

    def end_ms(self) -> Optional[int]:
        """Current planned end of the run, or None before the partition opens."""
        if self.trace.partition is None:
            return None
        w = self.sim.active_partition
        heal = self.trace.heal_ms if self.trace.heal_ms is not None else (w.end_ms if w else self.trace.partition.end_ms)
        return heal + SETTLE_ROUNDS * self.period


def default_rule(protocol: Protocol) -> DecisionRule:
    return DecisionRule(RuleKind.AURA_MAJORITY if protocol is Protocol.AURA else RuleKind.CLIQUE_MAJORITY)


def make_config(protocol: Protocol, n: int, period_ms: int):
    if protocol is Protocol.AURA:
        return aura.AuraConfig(n, period_ms)
    return clique.CliqueConfig(n, period_ms)


def run_attack(
    plan: AttackPlan,
    *,
    period_ms: int,
    seed: int,
    rule: Optional[DecisionRule] = None,
    delay: DelayModel = DelayModel(),
    script: Optional[SealScript] = None,
    trace: bool = False,
    horizon_ms: int = 600_000,
) -> AttackRun:
    """Simulate ``plan`` until the partition heals and the network settles."""
    rule = rule or default_rule(plan.protocol)
    rule.validate(plan.n)
    sim = Simulation(
        plan.protocol,
        make_config(plan.protocol, plan.n, period_ms),
        plan.endpoints(),
        delay=delay,
        seed=seed,
        trace=trace,
        script=script,
    )
    orch = _Orchestrator(sim, plan, rule)
    sim.start()
    while True:
        end = orch.end_ms()
        target = horizon_ms if end is None else min(end, horizon_ms)
        next_t = sim.queue.peek_time()
        if next_t is None or next_t > target:
            sim.run(target)
            if orch.end_ms() == end:
                break
            continue
        sim.run(next_t)
    # Quiesce: no new seals, let in-flight messages land.
    for node in sim.nodes.values():
        if node.sealing:
            sim.set_sealing(node.id, False)
    sim.run(sim.now + delay.bound_ms)
    orch.trace.final_views = sim.views()
    return AttackRun(evaluate_double_spend(orch.trace, plan, rule), orch.trace, sim)
