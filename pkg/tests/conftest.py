from __future__ import annotations

from typing import Iterable, Sequence

import pytest

from poaclone.chain import Block, ChainView, Protocol, SealerId


def aura_chain(steps: Sequence[int], n: int = 9, view: ChainView | None = None) -> ChainView:
    """Linear Aura chain with one block per listed step, sealed by its turn owner."""
    view = view or ChainView.genesis(Protocol.AURA)
    for step in steps:
        block = Block.seal(view.head_block, SealerId(step % n), step * 1000, step=step)
        view = view.extend(block)
    return view


def clique_chain(sealers: Iterable[int], n: int = 9, period_ms: int = 5000, view: ChainView | None = None) -> ChainView:
    """Linear Clique chain; weights follow the in-order rule."""
    view = view or ChainView.genesis(Protocol.CLIQUE)
    for s in sealers:
        head = view.head_block
        number = head.number + 1
        weight = 2 if number % n == s else 1
        block = Block.seal(head, SealerId(s), head.timestamp + period_ms, weight=weight)
        view = view.extend(block)
    return view


@pytest.fixture
def genesis_aura() -> ChainView:
    return ChainView.genesis(Protocol.AURA)


@pytest.fixture
def genesis_clique() -> ChainView:
    return ChainView.genesis(Protocol.CLIQUE)


CRITERIA: dict[int, str] = {}


def report(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    CRITERIA[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for number in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[number])
