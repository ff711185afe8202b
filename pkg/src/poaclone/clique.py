"""Per-sealer Clique state machine: sealer-limit gating, in-order and
out-of-order sealing with weights, and weight-based adoption."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

from .chain import (
    Block,
    ChainError,
    ChainView,
    InvalidBlock,
    Protocol,
    SealerId,
    Transaction,
    clique_total_weight,
    select_transactions,
)

#: Out-of-order wiggle per majority member, in milliseconds.
WIGGLE_MS = 500

RandDraw = Callable[[int, int], int]


@dataclass(frozen=True)
class CliqueConfig:
    n: int
    block_period_ms: int = 5000
    sealer_limit: Optional[int] = None
    majority: int = field(init=False)

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("n must be at least 1")
        if self.block_period_ms <= 0:
            raise ValueError("block_period_ms must be positive")
        object.__setattr__(self, "majority", self.n // 2 + 1)
        if self.sealer_limit is None:
            object.__setattr__(self, "sealer_limit", self.majority)
        elif self.sealer_limit < 1:
            raise ValueError("sealer_limit must be at least 1")

    @property
    def max_delay_ms(self) -> int:
        return WIGGLE_MS * self.majority


@dataclass(frozen=True)
class PendingSeal:
    fire_ms: int
    weight: int
    target: int
    timestamp: int


@dataclass
class CliqueSealerState:
    id: SealerId
    view: ChainView
    config: CliqueConfig
    pending_seal: Optional[PendingSeal] = None

    def __post_init__(self) -> None:
        if self.id.index >= self.config.n:
            raise ValueError(f"sealer {self.id} outside [0, {self.config.n})")

    @classmethod
    def fresh(cls, index: int, config: CliqueConfig) -> "CliqueSealerState":
        return cls(SealerId(index), ChainView.genesis(Protocol.CLIQUE), config)


def signed_recently(view: ChainView, id: SealerId, limit: int) -> bool:
    """Whether ``id`` sealed any of the last ``limit - 1`` canonical blocks.

    A sealer may seal block N only if it sealed none of N-limit+1 .. N-1.
    """
    if limit <= 1:
        return False
    return any(b.sealer == id for b in view.canonical[-(limit - 1) :])


def in_order(next_number: int, id: SealerId, n: int) -> bool:
    return next_number % n == id.index


def schedule_seal(
    state: CliqueSealerState, clock_ms: int, rand_draw: RandDraw
) -> Optional[PendingSeal]:
    """Plan the next seal for this sealer, or return None while it must wait.

    The block timestamp is the earliest admissible time; the random
    out-of-order delay postpones sealing but is not stamped into the block,
    so delays do not accumulate along a branch.
    """
    cfg = state.config
    state.pending_seal = None
    if signed_recently(state.view, state.id, cfg.sealer_limit):
        return None
    head = state.view.head_block
    earliest = max(clock_ms, head.timestamp + cfg.block_period_ms)
    target = head.number + 1
    if in_order(target, state.id, cfg.n):
        plan = PendingSeal(earliest, 2, target, earliest)
    else:
        delay = rand_draw(0, cfg.max_delay_ms)
        plan = PendingSeal(earliest + delay, 1, target, earliest)
    state.pending_seal = plan
    return plan


def fire_seal(
    state: CliqueSealerState, clock_ms: int, pending_txs: Iterable[Transaction] = ()
) -> Optional[Block]:
    plan = state.pending_seal
    if plan is None or clock_ms < plan.fire_ms:
        return None
    state.pending_seal = None
    head = state.view.head_block
    if head.number != plan.target - 1:
        return None
    txs = select_transactions(state.view, pending_txs)
    block = Block.seal(head, state.id, plan.timestamp, weight=plan.weight, txs=txs)
    state.view = state.view.extend(block)
    return block


def validate_block(view_prefix: tuple[Block, ...], block: Block, config: CliqueConfig) -> None:
    """Check ``block`` against the branch that precedes it."""
    parent = view_prefix[-1]
    if block.sealer is None or not 0 <= block.sealer.index < config.n:
        raise InvalidBlock(f"{block.id}: unknown sealer {block.sealer}")
    if block.number is None or block.weight is None:
        raise InvalidBlock(f"{block.id}: not a Clique block")
    if block.number != parent.number + 1:
        raise InvalidBlock(f"{block.id}: number does not follow parent")
    expected = 2 if in_order(block.number, block.sealer, config.n) else 1
    if block.weight != expected:
        raise InvalidBlock(f"{block.id}: weight {block.weight}, expected {expected}")
    window = view_prefix[-(config.sealer_limit - 1) :] if config.sealer_limit > 1 else ()
    if any(b.sealer == block.sealer for b in window):
        raise InvalidBlock(f"{block.id}: {block.sealer} sealed within the sealer limit")
    if block.timestamp < parent.timestamp + config.block_period_ms:
        raise InvalidBlock(f"{block.id}: block period not respected")


def validate_view(view: ChainView, config: CliqueConfig, known_good: Optional[set] = None) -> None:
    try:
        branch = view.canonical
    except ChainError as exc:
        raise InvalidBlock(str(exc)) from exc
    if branch[0].id != Block.genesis(Protocol.CLIQUE).id:
        raise InvalidBlock("foreign genesis")
    for i in range(1, len(branch)):
        block = branch[i]
        if known_good is not None and block.id in known_good:
            continue
        validate_block(branch[:i], block, config)
        if known_good is not None:
            known_good.add(block.id)


def on_deliver_clique(
    state: CliqueSealerState, incoming: ChainView, known_good: Optional[set] = None
) -> bool:
    """Adopt ``incoming`` iff strictly heavier; a pending seal is dropped on adoption."""
    if incoming is state.view:
        return False
    try:
        validate_view(incoming, state.config, known_good)
    except InvalidBlock:
        return False
    if clique_total_weight(incoming) > clique_total_weight(state.view):
        state.view = incoming
        state.pending_seal = None
        return True
    return False
