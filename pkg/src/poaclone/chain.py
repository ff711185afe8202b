"""Block and chain data model shared by the Aura and Clique engines.

Views are immutable values: extending or adopting a chain always produces a
new :class:`ChainView`, so a view can be broadcast to many endpoints without
copying.
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Optional, Sequence

#: Multiplier of the height term in the Aura score (parity's UINT128_MAX).
SCORE_MULTIPLIER = 2**128 - 1


class ChainError(Exception):
    """Base class for chain-model errors."""


class StructureError(ChainError):
    """A view violates a structural invariant (orphan gap, unreachable head)."""


class QueryError(ChainError):
    """A query referenced a block that is not on the canonical branch."""


class InvalidBlock(ChainError):
    """A block failed a validation gate and is ignored."""


class Protocol(str, enum.Enum):
    AURA = "aura"
    CLIQUE = "clique"


@dataclass(frozen=True, order=True)
class SealerId:
    """Sealer identity. Clones share one identity, so equality is by index only."""

    index: int

    def __post_init__(self) -> None:
        if self.index < 0:
            raise ValueError(f"sealer index must be non-negative, got {self.index}")

    def __str__(self) -> str:
        return f"S{self.index}"


@dataclass(frozen=True)
class Transaction:
    sender: str
    recipient: str
    amount: int
    nonce: int

    def conflicts_with(self, other: "Transaction") -> bool:
        """Same sender and nonce, but a different payload."""
        return (
            self.sender == other.sender
            and self.nonce == other.nonce
            and (self.recipient != other.recipient or self.amount != other.amount)
        )

    def __str__(self) -> str:
        return f"{self.sender}->{self.recipient}:{self.amount}#{self.nonce}"


def _block_digest(
    parent: Optional[str],
    sealer: Optional[SealerId],
    step: Optional[int],
    number: Optional[int],
    weight: Optional[int],
    timestamp: int,
    txs: Sequence[Transaction],
) -> str:
    sealer_repr = "-" if sealer is None else str(sealer.index)
    payload = "|".join(
        [
            parent or "-",
            sealer_repr,
            "-" if step is None else str(step),
            "-" if number is None else str(number),
            "-" if weight is None else str(weight),
            str(timestamp),
            ",".join(str(tx) for tx in txs),
        ]
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class Block:
    id: str
    parent: Optional[str]
    sealer: Optional[SealerId]
    step: Optional[int] = None
    number: Optional[int] = None
    weight: Optional[int] = None
    timestamp: int = 0
    txs: tuple[Transaction, ...] = ()

    @classmethod
    def seal(
        cls,
        parent: "Block",
        sealer: SealerId,
        timestamp: int,
        *,
        step: Optional[int] = None,
        weight: Optional[int] = None,
        txs: Iterable[Transaction] = (),
    ) -> "Block":
        """Build a child of ``parent``.

        Aura blocks carry ``step``; Clique blocks carry ``weight`` and get
        ``number = parent.number + 1``.
        """
        txs = tuple(txs)
        if (step is None) == (weight is None):
            raise ValueError("exactly one of step (Aura) or weight (Clique) must be given")
        number = None
        if weight is not None:
            if weight not in (1, 2):
                raise ValueError(f"Clique weight must be 1 or 2, got {weight}")
            if parent.number is None:
                raise ValueError("Clique block needs a Clique parent")
            number = parent.number + 1
        bid = _block_digest(parent.id, sealer, step, number, weight, timestamp, txs)
        return cls(bid, parent.id, sealer, step, number, weight, timestamp, txs)

    @classmethod
    def genesis(cls, protocol: Protocol) -> "Block":
        if protocol is Protocol.AURA:
            step, number, weight = 0, None, None
        else:
            step, number, weight = None, 0, 0
        bid = _block_digest(None, None, step, number, weight, 0, ())
        return cls(bid, None, None, step, number, weight, 0, ())

    @property
    def is_genesis(self) -> bool:
        return self.parent is None

    @property
    def protocol(self) -> Protocol:
        return Protocol.AURA if self.step is not None else Protocol.CLIQUE


@dataclass(frozen=True)
class ChainView:
    """A node's block DAG plus the head of its selected branch."""

    blocks: Mapping[str, Block]
    head: str
    _branch: Optional[tuple[Block, ...]] = field(default=None, repr=False, compare=False)

    @classmethod
    def genesis(cls, protocol: Protocol) -> "ChainView":
        g = Block.genesis(protocol)
        return cls({g.id: g}, g.id, (g,))

    @classmethod
    def from_blocks(cls, blocks: Iterable[Block], head: str) -> "ChainView":
        view = cls({b.id: b for b in blocks}, head)
        view.check()
        return view

    @property
    def protocol(self) -> Protocol:
        return self.blocks[self.head].protocol

    @property
    def head_block(self) -> Block:
        return self.blocks[self.head]

    @cached_property
    def canonical(self) -> tuple[Block, ...]:
        if self._branch is not None:
            return self._branch
        path = []
        cursor: Optional[str] = self.head
        seen = set()
        while cursor is not None:
            if cursor in seen:
                raise StructureError("pointer cycle")
            seen.add(cursor)
            block = self.blocks.get(cursor)
            if block is None:
                raise StructureError(f"block {cursor} missing from view (head unreachable)")
            path.append(block)
            cursor = block.parent
        path.reverse()
        return tuple(path)

    @cached_property
    def positions(self) -> dict[str, int]:
        return {b.id: i for i, b in enumerate(self.canonical)}

    @property
    def height(self) -> int:
        return len(self.canonical) - 1

    @cached_property
    def total_weight(self) -> int:
        return sum(b.weight or 0 for b in self.canonical)

    @cached_property
    def tx_index(self) -> dict[tuple[str, int], tuple[Transaction, str]]:
        """(sender, nonce) -> (transaction, id of the canonical block holding it)."""
        index: dict[tuple[str, int], tuple[Transaction, str]] = {}
        for block in self.canonical:
            for tx in block.txs:
                index[(tx.sender, tx.nonce)] = (tx, block.id)
        return index

    def extend(self, block: Block) -> "ChainView":
        """Add ``block`` and make it the head."""
        if block.parent not in self.blocks:
            raise StructureError(f"parent {block.parent} of {block.id} not in view")
        blocks = dict(self.blocks)
        blocks[block.id] = block
        branch = self.canonical + (block,) if block.parent == self.head else None
        return ChainView(blocks, block.id, branch)

    def contains(self, block_id: str) -> bool:
        return block_id in self.positions

    def block_of(self, tx: Transaction) -> Optional[str]:
        """Id of the canonical block containing exactly ``tx``, if any."""
        hit = self.tx_index.get((tx.sender, tx.nonce))
        if hit is None or hit[0] != tx:
            return None
        return hit[1]

    def next_nonce(self, sender: str) -> int:
        return sum(1 for (s, _) in self.tx_index if s == sender)

    def check(self) -> None:
        """Raise StructureError unless every invariant of the view holds."""
        for block in self.blocks.values():
            if block.parent is not None and block.parent not in self.blocks:
                raise StructureError(f"orphan block {block.id}")
        branch = self.canonical
        if not branch[0].is_genesis:
            raise StructureError("canonical branch does not start at genesis")
        seen_tx: set[tuple[str, int]] = set()
        for prev, cur in zip(branch, branch[1:]):
            if cur.step is not None and prev.step is not None and cur.step <= prev.step:
                raise StructureError(f"Aura steps not increasing at {cur.id}")
            if cur.number is not None and prev.number is not None and cur.number != prev.number + 1:
                raise StructureError(f"Clique numbers not consecutive at {cur.id}")
        for block in branch:
            for tx in block.txs:
                key = (tx.sender, tx.nonce)
                if key in seen_tx:
                    raise StructureError(f"conflicting transaction {tx} on canonical branch")
                seen_tx.add(key)


def canonical_branch(view: ChainView) -> list[Block]:
    """Genesis-to-head path of ``view``."""
    return list(view.canonical)


def aura_score(view: ChainView) -> int:
    return SCORE_MULTIPLIER * view.height - (view.head_block.step or 0)


def clique_total_weight(view: ChainView) -> int:
    return view.total_weight


def fork_choice_key(view: ChainView) -> int:
    """Comparable preference of a view under its protocol's fork-choice rule."""
    if view.protocol is Protocol.AURA:
        return aura_score(view)
    return clique_total_weight(view)


def prefers(incoming: ChainView, local: ChainView) -> bool:
    """Deliver rule shared by both protocols: strictly better wins, ties keep local."""
    return fork_choice_key(incoming) > fork_choice_key(local)


def distinct_sealers_since(view: ChainView, block_id: str) -> set[SealerId]:
    pos = view.positions.get(block_id)
    if pos is None:
        raise QueryError(f"block {block_id} is not on the canonical branch")
    return {b.sealer for b in view.canonical[pos:] if b.sealer is not None}


class RuleKind(str, enum.Enum):
    AURA_MAJORITY = "aura_majority"
    AURA_ROUNDS = "aura_rounds"
    CLIQUE_MAJORITY = "clique_majority"
    THRESHOLD = "threshold"


@dataclass(frozen=True)
class DecisionRule:
    kind: RuleKind
    threshold: Optional[int] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", RuleKind(self.kind))
        if self.kind is RuleKind.THRESHOLD and self.threshold is None:
            raise ValueError("THRESHOLD rule requires a threshold V")

    def validate(self, n: int) -> None:
        if self.kind is RuleKind.THRESHOLD and not 1 <= self.threshold <= n:
            raise ValueError(f"threshold V={self.threshold} outside [1, {n}]")

    def __str__(self) -> str:
        if self.kind is RuleKind.THRESHOLD:
            return f"threshold:{self.threshold}"
        return self.kind.value


def is_decided(view: ChainView, block_id: str, rule: DecisionRule, n: int) -> bool:
    pos = view.positions.get(block_id)
    if pos is None:
        raise QueryError(f"block {block_id} is not on the canonical branch")
    block = view.canonical[pos]
    if block.is_genesis:
        return True
    if rule.kind is RuleKind.AURA_ROUNDS:
        length = n
        start = block.step
        later = [b.step for b in view.canonical[pos + 1 :]]
        round1 = sum(1 for s in later if start < s <= start + length)
        round2 = sum(1 for s in later if start + length < s <= start + 2 * length)
        return round1 > length / 2 and round2 > length / 2
    count = len(distinct_sealers_since(view, block_id))
    if rule.kind is RuleKind.AURA_MAJORITY:
        return count * 2 > n
    if rule.kind is RuleKind.CLIQUE_MAJORITY:
        return count >= n // 2 + 1
    return count >= rule.threshold


def tx_decided(view: ChainView, tx: Transaction, rule: DecisionRule, n: int) -> bool:
    bid = view.block_of(tx)
    return bid is not None and is_decided(view, bid, rule, n)


def select_transactions(view: ChainView, pending: Iterable[Transaction]) -> list[Transaction]:
    """Pending transactions that can extend ``view``'s canonical branch.

    Nonces must continue each sender's sequence; anything already included,
    conflicting, or out of sequence is dropped.
    """
    next_nonce: dict[str, int] = {}
    chosen = []
    for tx in pending:
        if tx.sender not in next_nonce:
            next_nonce[tx.sender] = view.next_nonce(tx.sender)
        if tx.nonce == next_nonce[tx.sender]:
            chosen.append(tx)
            next_nonce[tx.sender] += 1
    return chosen


# -- serialization -----------------------------------------------------------


def _fmt(value: object) -> str:
    return "-" if value is None else str(value)


def dump_view(view: ChainView) -> str:
    """Canonical text dump: a head line, then one block per line.

    Blocks are ordered by depth then id, so equal views dump identically.
    """
    depth: dict[str, int] = {}

    def depth_of(bid: str) -> int:
        chain = []
        cursor: Optional[str] = bid
        while cursor is not None and cursor not in depth:
            chain.append(cursor)
            cursor = view.blocks[cursor].parent
        base = -1 if cursor is None else depth[cursor]
        for i, b in enumerate(reversed(chain)):
            depth[b] = base + i + 1
        return depth[bid]

    ordered = sorted(view.blocks.values(), key=lambda b: (depth_of(b.id), b.id))
    lines = [f"head {view.head}"]
    for b in ordered:
        sealer = "-" if b.sealer is None else str(b.sealer.index)
        txs = ";".join(str(tx) for tx in b.txs) or "-"
        mark = "*" if view.contains(b.id) else " "
        lines.append(
            f"{mark} {b.id} parent={_fmt(b.parent)} sealer={sealer} step={_fmt(b.step)} "
            f"number={_fmt(b.number)} weight={_fmt(b.weight)} ts={b.timestamp} txs={txs}"
        )
    return "\n".join(lines) + "\n"


def _parse_tx(text: str) -> Transaction:
    route, nonce = text.rsplit("#", 1)
    pair, amount = route.rsplit(":", 1)
    sender, recipient = pair.split("->", 1)
    return Transaction(sender, recipient, int(amount), int(nonce))


def load_view(text: str) -> ChainView:
    """Inverse of :func:`dump_view`."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("head "):
        raise StructureError("dump must start with a head line")
    head = lines[0].split()[1]
    blocks = []
    for line in lines[1:]:
        fields = dict(tok.split("=", 1) for tok in line[2:].split()[1:])
        bid = line[2:].split()[0]

        def opt_int(key: str) -> Optional[int]:
            return None if fields[key] == "-" else int(fields[key])

        sealer = None if fields["sealer"] == "-" else SealerId(int(fields["sealer"]))
        txs = () if fields["txs"] == "-" else tuple(_parse_tx(t) for t in fields["txs"].split(";"))
        blocks.append(
            Block(
                bid,
                None if fields["parent"] == "-" else fields["parent"],
                sealer,
                opt_int("step"),
                opt_int("number"),
                opt_int("weight"),
                int(fields["ts"]),
                txs,
            )
        )
    return ChainView.from_blocks(blocks, head)


def common_ancestor(a: ChainView, b: ChainView) -> Block:
    """Deepest block shared by both canonical branches."""
    last = a.canonical[0]
    for x, y in zip(a.canonical, b.canonical):
        if x.id != y.id:
            break
        last = x
    return last


def blocks_after(view: ChainView, ancestor_id: str) -> tuple[Block, ...]:
    pos = view.positions.get(ancestor_id)
    if pos is None:
        raise QueryError(f"block {ancestor_id} is not on the canonical branch")
    return view.canonical[pos + 1 :]
