"""Deterministic discrete-event network for sealer state machines.

One :class:`Simulation` owns every endpoint state, a single seeded RNG and a
totally ordered event queue, so identical inputs replay identically.
"""

from __future__ import annotations

import enum
import heapq
import itertools
import logging
import random
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Optional, Sequence, Union

from . import aura, clique
from .chain import Block, ChainView, Protocol, SealerId, Transaction, prefers
from .errors import ConfigError

log = logging.getLogger(__name__)

#: Granularity of the attacker's polling loop.
POLL_MS = 10


class EventKind(enum.IntEnum):
    PARTITION_EDGE = 0
    DELIVER = 1
    INJECT_TX = 2
    TIMER = 3


# Ties at equal fire_ms: topology changes, then message arrivals, then
# transaction arrivals, then seals. In-turn seals precede out-of-turn ones.
_RANK = {
    EventKind.PARTITION_EDGE: 0,
    EventKind.DELIVER: 1,
    EventKind.INJECT_TX: 2,
    EventKind.TIMER: 3,
}
_RANK_LATE_TIMER = 4


@dataclass(order=True, frozen=True)
class Event:
    fire_ms: int
    rank: int
    sequence: int
    kind: EventKind = field(compare=False)
    endpoint: Optional[int] = field(default=None, compare=False)
    payload: Any = field(default=None, compare=False)


class EventQueue:
    """Min-heap of events keyed by (fire_ms, rank, sequence)."""

    def __init__(self) -> None:
        self._heap: list[Event] = []
        self._seq = itertools.count()

    def push(
        self,
        fire_ms: int,
        kind: EventKind,
        endpoint: Optional[int] = None,
        payload: Any = None,
        rank: Optional[int] = None,
    ) -> Event:
        if fire_ms < 0:
            raise ValueError("events cannot fire before time 0")
        ev = Event(fire_ms, _RANK[kind] if rank is None else rank, next(self._seq), kind, endpoint, payload)
        heapq.heappush(self._heap, ev)
        return ev

    def pop(self) -> Event:
        return heapq.heappop(self._heap)

    def peek_time(self) -> Optional[int]:
        return self._heap[0].fire_ms if self._heap else None

    def __len__(self) -> int:
        return len(self._heap)


@dataclass(frozen=True)
class NodeEndpoint:
    endpoint_id: int
    sealer: Optional[SealerId] = None


@dataclass(frozen=True)
class CloneBinding:
    """Two endpoints sharing one sealer identity.

    ``endpoints[0]`` is the original instance; at activation its view is
    copied onto ``endpoints[1]``.
    """

    sealer: SealerId
    endpoints: tuple[int, int]
    split_at_ms: Optional[int] = None


@dataclass(frozen=True)
class PartitionWindow:
    start_ms: int
    end_ms: int
    groups: tuple[frozenset[int], ...]

    def group_of(self, endpoint_id: int) -> Optional[int]:
        for i, g in enumerate(self.groups):
            if endpoint_id in g:
                return i
        return None


@dataclass
class PartitionSchedule:
    windows: list[PartitionWindow] = field(default_factory=list)

    def validate(self, endpoint_ids: Iterable[int]) -> None:
        ids = set(endpoint_ids)
        problems = []
        ordered = sorted(self.windows, key=lambda w: w.start_ms)
        for w in ordered:
            if w.end_ms <= w.start_ms:
                problems.append(f"window [{w.start_ms}, {w.end_ms}) has no length")
            seen: set[int] = set()
            for g in w.groups:
                if seen & g:
                    problems.append(f"window at {w.start_ms}: groups overlap on {sorted(seen & g)}")
                seen |= g
            if seen != ids:
                problems.append(f"window at {w.start_ms}: groups do not cover endpoints {sorted(ids ^ seen)}")
        for a, b in zip(ordered, ordered[1:]):
            if b.start_ms < a.end_ms:
                problems.append(f"windows at {a.start_ms} and {b.start_ms} overlap")
        if problems:
            raise ConfigError("invalid partition schedule", problems)

    def window_at(self, clock_ms: int) -> Optional[PartitionWindow]:
        for w in self.windows:
            if w.start_ms <= clock_ms < w.end_ms:
                return w
        return None

    def reachable(self, a: int, b: int, clock_ms: int) -> bool:
        w = self.window_at(clock_ms)
        return w is None or w.group_of(a) == w.group_of(b)


@dataclass(frozen=True)
class DelayModel:
    base_delay_ms: int = 50
    jitter_ms: int = 10

    def __post_init__(self) -> None:
        if self.base_delay_ms < 0 or self.jitter_ms < 0:
            raise ValueError("delays must be non-negative")

    def sample(self, rng: random.Random) -> int:
        if self.jitter_ms == 0:
            return self.base_delay_ms
        return self.base_delay_ms + rng.randint(0, self.jitter_ms)

    @property
    def bound_ms(self) -> int:
        return self.base_delay_ms + self.jitter_ms


@dataclass
class ObserverState:
    """Non-sealer endpoint: it only follows the fork-choice rule."""

    view: ChainView


SealerState = Union[aura.AuraSealerState, clique.CliqueSealerState, ObserverState]


@dataclass
class SealScript:
    """Scripted timing for deterministic replays (Clique only).

    ``delays`` pins the out-of-order random delay and ``lags`` postpones any
    seal, both keyed by ``(sealer index, block number)``.
    """

    delays: dict[tuple[int, int], int] = field(default_factory=dict)
    lags: dict[tuple[int, int], int] = field(default_factory=dict)


@dataclass
class Node:
    endpoint: NodeEndpoint
    state: SealerState
    sealing: bool = True
    budget: Optional[int] = None
    pending: list[Transaction] = field(default_factory=list)
    token: int = 0
    sealed: list[Block] = field(default_factory=list)

    @property
    def id(self) -> int:
        return self.endpoint.endpoint_id

    @property
    def view(self) -> ChainView:
        return self.state.view


ViewListener = Callable[["Simulation", Node], None]
EdgeListener = Callable[["Simulation", PartitionWindow, bool], None]


class Simulation:
    """Event-driven run of one protocol over a set of endpoints."""

    def __init__(
        self,
        protocol: Protocol,
        config: Union[aura.AuraConfig, clique.CliqueConfig],
        endpoints: Sequence[NodeEndpoint],
        *,
        delay: DelayModel = DelayModel(),
        seed: int = 0,
        trace: bool = False,
        script: Optional[SealScript] = None,
    ) -> None:
        self.protocol = Protocol(protocol)
        self.config = config
        self.delay = delay
        self.rng = random.Random(seed)
        self.queue = EventQueue()
        self.now = 0
        self.schedule = PartitionSchedule()
        self.script = script or SealScript()
        self.trace_enabled = trace
        self.trace: list[str] = []
        self.known_good: set[str] = set()
        self.view_listeners: list[ViewListener] = []
        self.edge_listeners: list[EdgeListener] = []
        self.clones: list[CloneBinding] = []
        self._active: Optional[PartitionWindow] = None
        self._clone_windows: dict[int, list[CloneBinding]] = {}
        self._edge_token = itertools.count()
        self._live_end: dict[int, int] = {}

        ids = [e.endpoint_id for e in endpoints]
        if len(set(ids)) != len(ids):
            raise ConfigError("endpoint ids must be unique")
        self.nodes: dict[int, Node] = {}
        for ep in sorted(endpoints, key=lambda e: e.endpoint_id):
            if ep.sealer is not None and ep.sealer.index >= config.n:
                raise ConfigError(f"endpoint {ep.endpoint_id}: sealer {ep.sealer} outside [0, {config.n})")
            self.nodes[ep.endpoint_id] = Node(ep, self._fresh_state(ep), sealing=ep.sealer is not None)

    # -- setup ---------------------------------------------------------------

    def _fresh_state(self, ep: NodeEndpoint) -> SealerState:
        genesis = ChainView.genesis(self.protocol)
        if ep.sealer is None:
            return ObserverState(genesis)
        if self.protocol is Protocol.AURA:
            return aura.AuraSealerState(ep.sealer, genesis, self.config)
        return clique.CliqueSealerState(ep.sealer, genesis, self.config)

    def set_sealing(self, endpoint_id: int, sealing: bool, budget: Optional[int] = None) -> None:
        """Enable or disable sealing at an endpoint; ``budget`` caps further seals."""
        node = self.nodes[endpoint_id]
        if node.endpoint.sealer is None and sealing:
            raise ConfigError(f"endpoint {endpoint_id} is not a sealer")
        node.sealing = sealing
        node.budget = budget
        node.token += 1
        if sealing and self._started:
            self._arm(node)

    _started = False

    def start(self) -> None:
        if self._started:
            return
        self._started = True
        for node in self.nodes.values():
            if node.sealing:
                self._arm(node)

    def add_partition(
        self,
        start_ms: int,
        end_ms: int,
        groups: Sequence[Iterable[int]],
        clones: Sequence[CloneBinding] = (),
    ) -> PartitionWindow:
        """Schedule a partition window; clones split at its start."""
        window = PartitionWindow(start_ms, end_ms, tuple(frozenset(g) for g in groups))
        candidate = PartitionSchedule(self.schedule.windows + [window])
        candidate.validate(self.nodes)
        problems = []
        for binding in clones:
            a, b = binding.endpoints
            for e in (a, b):
                node = self.nodes.get(e)
                if node is None or node.endpoint.sealer != binding.sealer:
                    problems.append(f"clone endpoint {e} does not carry sealer {binding.sealer}")
            if window.group_of(a) == window.group_of(b):
                problems.append(f"clone endpoints {a} and {b} placed in the same group")
        if problems:
            raise ConfigError("invalid clone placement", problems)
        if start_ms < self.now:
            raise ConfigError(f"partition start {start_ms} is in the past (now {self.now})")
        self.schedule = candidate
        self._clone_windows[start_ms] = list(clones)
        token = next(self._edge_token)
        self._live_end[start_ms] = token
        self.queue.push(start_ms, EventKind.PARTITION_EDGE, payload=(window, True, None))
        self.queue.push(end_ms, EventKind.PARTITION_EDGE, payload=(window, False, token))
        return window

    def heal_at(self, clock_ms: int) -> None:
        """Bring the active partition's end forward to ``clock_ms``."""
        w = self._active
        if w is None or clock_ms >= w.end_ms:
            return
        clock_ms = max(clock_ms, self.now)
        shortened = PartitionWindow(w.start_ms, clock_ms, w.groups)
        self.schedule.windows = [shortened if x is w else x for x in self.schedule.windows]
        self._active = shortened
        token = next(self._edge_token)
        self._live_end[w.start_ms] = token
        self.queue.push(clock_ms, EventKind.PARTITION_EDGE, payload=(shortened, False, token))

    def inject_tx(self, clock_ms: int, tx: Transaction, endpoint_id: int) -> None:
        self.queue.push(clock_ms, EventKind.INJECT_TX, endpoint_id, (tx, True))

    @property
    def active_partition(self) -> Optional[PartitionWindow]:
        return self._active

    # -- network -------------------------------------------------------------

    def reachable(self, a: int, b: int) -> bool:
        w = self._active
        return w is None or w.group_of(a) == w.group_of(b)

    def broadcast(self, sender: int, view: ChainView) -> list[Event]:
        events = []
        for other in self.nodes:
            if other == sender or not self.reachable(sender, other):
                continue
            at = self.now + self.delay.sample(self.rng)
            events.append(self.queue.push(at, EventKind.DELIVER, other, (sender, view)))
        return events

    def activate_clone(self, binding: CloneBinding, clock_ms: int) -> None:
        """Copy the original's view onto the clone; both then seal as one identity."""
        if not any(w.start_ms == clock_ms for w in self.schedule.windows):
            raise ConfigError(f"clone activation at {clock_ms} is not a partition window start")
        src, dst = (self.nodes[e] for e in binding.endpoints)
        dst.state.view = src.state.view
        if isinstance(dst.state, aura.AuraSealerState):
            dst.state.last_sealed_step = src.state.last_sealed_step
        if isinstance(dst.state, clique.CliqueSealerState):
            dst.state.pending_seal = None
        self.clones.append(CloneBinding(binding.sealer, binding.endpoints, clock_ms))
        self._notify(dst)

    # -- sealing -------------------------------------------------------------

    def _arm(self, node: Node) -> None:
        node.token += 1
        if not node.sealing or node.budget == 0:
            return
        if self.protocol is Protocol.AURA:
            dur = self.config.step_duration_ms
            first = max(1, -(-self.now // dur))
            step = aura.next_turn_step(first - 1, node.state.id, self.config.n)
            if node.state.last_sealed_step is not None and step <= node.state.last_sealed_step:
                step = aura.next_turn_step(node.state.last_sealed_step, node.state.id, self.config.n)
            self.queue.push(step * dur, EventKind.TIMER, node.id, node.token)
        else:
            plan = clique.schedule_seal(node.state, self.now, self.rng.randint)
            if plan is None:
                return
            key = (node.state.id.index, plan.target)
            fire = plan.fire_ms
            if plan.weight == 1 and key in self.script.delays:
                fire = plan.timestamp + self.script.delays[key]
            fire += self.script.lags.get(key, 0)
            if fire != plan.fire_ms:
                plan = clique.PendingSeal(fire, plan.weight, plan.target, plan.timestamp)
                node.state.pending_seal = plan
            rank = _RANK[EventKind.TIMER] if plan.weight == 2 else _RANK_LATE_TIMER
            self.queue.push(fire, EventKind.TIMER, node.id, node.token, rank=rank)

    def _on_timer(self, node: Node, token: int) -> Optional[Block]:
        if token != node.token or not node.sealing or node.budget == 0:
            return None
        if self.protocol is Protocol.AURA:
            block = aura.propose_aura(node.state, self.now, node.pending)
        else:
            block = clique.fire_seal(node.state, self.now, node.pending)
        if block is not None:
            node.sealed.append(block)
            if node.budget is not None:
                node.budget -= 1
            self._notify(node)
            self.broadcast(node.id, node.state.view)
        self._arm(node)
        return block

    # -- delivery ------------------------------------------------------------

    def _deliver(self, node: Node, incoming: ChainView) -> bool:
        state = node.state
        if isinstance(state, aura.AuraSealerState):
            adopted = aura.on_deliver_aura(state, incoming, self.known_good)
        elif isinstance(state, clique.CliqueSealerState):
            adopted = clique.on_deliver_clique(state, incoming, self.known_good)
        else:
            adopted = self._observer_deliver(state, incoming)
        if adopted:
            if self.protocol is Protocol.CLIQUE and node.sealing:
                self._arm(node)
            self._notify(node)
        return adopted

    def _observer_deliver(self, state: ObserverState, incoming: ChainView) -> bool:
        validate = aura.validate_view if self.protocol is Protocol.AURA else clique.validate_view
        try:
            validate(incoming, self.config, self.known_good)
        except Exception:  # noqa: BLE001 - invalid views are ignored, as for sealers
            return False
        if prefers(incoming, state.view):
            state.view = incoming
            return True
        return False

    def _notify(self, node: Node) -> None:
        for listener in self.view_listeners:
            listener(self, node)

    # -- main loop -----------------------------------------------------------

    def run(self, until_ms: int) -> None:
        """Process every event with fire_ms <= until_ms."""
        self.start()
        while self.queue and self.queue.peek_time() <= until_ms:
            ev = self.queue.pop()
            if ev.fire_ms < self.now:
                raise AssertionError("event queue went backwards")
            self.now = ev.fire_ms
            detail = self._dispatch(ev)
            if self.trace_enabled and detail is not None:
                self.trace.append(f"{ev.fire_ms} {ev.sequence} {ev.kind.name} {detail}")
        self.now = max(self.now, until_ms)

    def _dispatch(self, ev: Event) -> Optional[str]:
        if ev.kind is EventKind.TIMER:
            node = self.nodes[ev.endpoint]
            block = self._on_timer(node, ev.payload)
            if block is None:
                return None
            pos = block.step if block.step is not None else block.number
            return (
                f"ep={node.id} seal={block.id} sealer={block.sealer.index} at={pos} "
                f"weight={block.weight if block.weight is not None else '-'} txs={len(block.txs)}"
            )
        if ev.kind is EventKind.DELIVER:
            sender, view = ev.payload
            node = self.nodes[ev.endpoint]
            adopted = self._deliver(node, view)
            return f"ep={node.id} from={sender} head={view.head} adopted={int(adopted)}"
        if ev.kind is EventKind.INJECT_TX:
            tx, gossip = ev.payload
            node = self.nodes[ev.endpoint]
            if tx in node.pending:
                return None
            node.pending.append(tx)
            if gossip:
                for other in self.nodes:
                    if other != node.id and self.reachable(node.id, other):
                        at = self.now + self.delay.sample(self.rng)
                        self.queue.push(at, EventKind.INJECT_TX, other, (tx, False))
            return f"ep={node.id} tx={tx}"
        window, opening, token = ev.payload
        if opening:
            self._active = next(w for w in self.schedule.windows if w.start_ms == window.start_ms)
            for binding in self._clone_windows.get(window.start_ms, []):
                self.activate_clone(binding, self.now)
            for listener in self.edge_listeners:
                listener(self, self._active, True)
            groups = " | ".join(",".join(map(str, sorted(g))) for g in window.groups)
            return f"partition-start groups={groups}"
        if self._live_end.get(window.start_ms) != token:
            return None
        closed = self._active
        self._active = None
        for listener in self.edge_listeners:
            listener(self, closed, False)
        for node in self.nodes.values():
            self.broadcast(node.id, node.state.view)
        return f"partition-end started={window.start_ms}"

    # -- inspection ----------------------------------------------------------

    def views(self) -> dict[int, ChainView]:
        return {i: n.state.view for i, n in self.nodes.items()}
