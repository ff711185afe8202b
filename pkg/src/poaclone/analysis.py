"""Closed-form safety and liveness thresholds for a decision quorum V."""

from __future__ import annotations

import enum
from dataclasses import dataclass


class Sync(str, enum.Enum):
    SYNCHRONOUS = "sync"
    PARTIAL = "partial"


@dataclass(frozen=True, order=True)
class RegionPoint:
    n: int
    t: int
    V: int
    sync: Sync
    safe: bool
    live: bool

    def __post_init__(self) -> None:
        if not 0 <= self.t <= self.n:
            raise ValueError(f"t={self.t} outside [0, {self.n}]")
        if not 1 <= self.V <= self.n:
            raise ValueError(f"V={self.V} outside [1, {self.n}]")


def _check(n: int, t: int, V: int) -> None:
    if n < 1:
        raise ValueError("n must be at least 1")
    if not 0 <= t <= n:
        raise ValueError(f"t={t} outside [0, {n}]")
    if not 1 <= V <= n:
        raise ValueError(f"V={V} outside [1, {n}]")


def is_safe(n: int, t: int, V: int, sync: Sync = Sync.PARTIAL) -> bool:
    """Two conflicting quorums of size V cannot both form.

    Under partial synchrony V > (n+t)/2; with synchrony V > t.
    """
    _check(n, t, V)
    if Sync(sync) is Sync.SYNCHRONOUS:
        return V >= t + 1
    return V >= (n + t) // 2 + 1


def is_live(n: int, t: int, V: int) -> bool:
    """The n-t correct sealers still form a quorum, with a strict bound."""
    _check(n, t, V)
    return V < n - t


def safe_live_region(n: int, sync: Sync = Sync.PARTIAL) -> list[RegionPoint]:
    """Every (t, V) point for ``n`` sealers, ordered by t then V."""
    if n < 1:
        raise ValueError("n must be at least 1")
    sync = Sync(sync)
    return [
        RegionPoint(n, t, V, sync, is_safe(n, t, V, sync), is_live(n, t, V))
        for t in range(n + 1)
        for V in range(1, n + 1)
    ]


def safe_and_live_quorums(n: int, t: int, sync: Sync = Sync.PARTIAL) -> set[int]:
    return {p.V for p in safe_live_region(n, sync) if p.t == t and p.safe and p.live}


def min_aura_attack_duration(n: int, step_duration_ms: int) -> int:
    """Partition length giving a single attacker two turns: (n+1) steps."""
    if n < 1 or n % 2 == 0:
        raise ValueError(f"n must be odd and positive, got {n}")
    if step_duration_ms <= 0:
        raise ValueError("step_duration_ms must be positive")
    return (n + 1) * step_duration_ms


def region_rows(points: list[RegionPoint]) -> list[dict]:
    return [
        {"n": p.n, "t": p.t, "V": p.V, "sync": p.sync.value, "safe": int(p.safe), "live": int(p.live)}
        for p in points
    ]
