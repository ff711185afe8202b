"""Per-sealer Aura state machine: step-clocked turns and score-based adoption."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

from .chain import (
    Block,
    ChainError,
    ChainView,
    InvalidBlock,
    Protocol,
    SealerId,
    Transaction,
    aura_score,
    select_transactions,
)


@dataclass(frozen=True)
class AuraConfig:
    n: int
    step_duration_ms: int

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("n must be at least 1")
        if self.step_duration_ms <= 0:
            raise ValueError("step_duration_ms must be positive")


@dataclass
class AuraSealerState:
    id: SealerId
    view: ChainView
    config: AuraConfig
    last_sealed_step: Optional[int] = None

    def __post_init__(self) -> None:
        if self.id.index >= self.config.n:
            raise ValueError(f"sealer {self.id} outside [0, {self.config.n})")

    @classmethod
    def fresh(cls, index: int, config: AuraConfig) -> "AuraSealerState":
        return cls(SealerId(index), ChainView.genesis(Protocol.AURA), config)


def current_step(clock_ms: int, config: AuraConfig) -> int:
    return clock_ms // config.step_duration_ms


def my_turn(step: int, id: SealerId, n: int) -> bool:
    return step % n == id.index


def next_turn_step(after_step: int, id: SealerId, n: int) -> int:
    """Smallest step strictly greater than ``after_step`` owned by ``id``."""
    base = after_step + 1
    return base + (id.index - base) % n


def propose_aura(
    state: AuraSealerState, clock_ms: int, pending_txs: Iterable[Transaction] = ()
) -> Optional[Block]:
    """Seal a block if this step is ours and we have not sealed in it yet."""
    step = current_step(clock_ms, state.config)
    if not my_turn(step, state.id, state.config.n):
        return None
    if state.last_sealed_step == step or state.view.head_block.step >= step:
        return None
    txs = select_transactions(state.view, pending_txs)
    block = Block.seal(state.view.head_block, state.id, clock_ms, step=step, txs=txs)
    state.view = state.view.extend(block)
    state.last_sealed_step = step
    return block


def validate_block(block: Block, parent: Block, config: AuraConfig) -> None:
    if block.sealer is None or not 0 <= block.sealer.index < config.n:
        raise InvalidBlock(f"{block.id}: unknown sealer {block.sealer}")
    if block.step is None:
        raise InvalidBlock(f"{block.id}: not an Aura block")
    if not my_turn(block.step, block.sealer, config.n):
        raise InvalidBlock(f"{block.id}: step {block.step} is not {block.sealer}'s turn")
    if block.step <= parent.step:
        raise InvalidBlock(f"{block.id}: step does not advance past parent")


def validate_view(view: ChainView, config: AuraConfig, known_good: Optional[set] = None) -> None:
    """Validation gate applied to the canonical branch of an incoming view.

    ``known_good`` caches ids of blocks that already passed; block ids are
    content hashes so the cache is safe to share between endpoints.
    """
    try:
        branch = view.canonical
    except ChainError as exc:
        raise InvalidBlock(str(exc)) from exc
    if branch[0].id != Block.genesis(Protocol.AURA).id:
        raise InvalidBlock("foreign genesis")
    for parent, block in zip(branch, branch[1:]):
        if known_good is not None and block.id in known_good:
            continue
        validate_block(block, parent, config)
        if known_good is not None:
            known_good.add(block.id)


def on_deliver_aura(
    state: AuraSealerState, incoming: ChainView, known_good: Optional[set] = None
) -> bool:
    """Adopt ``incoming`` iff it scores strictly higher than the local view."""
    if incoming is state.view:
        return False
    try:
        validate_view(incoming, state.config, known_good)
    except InvalidBlock:
        return False
    if aura_score(incoming) > aura_score(state.view):
        state.view = incoming
        return True
    return False
