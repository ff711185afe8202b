"""Seeded batch execution of sweep grids and CSV emission."""

from __future__ import annotations

import csv
import hashlib
import io
import math
import os
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

from . import analysis
from .attack import RunOutcome, plan_aura_attack, run_attack
from .chain import DecisionRule, RuleKind
from .config import ScenarioConfig, SweepConfig
from .errors import PlanError
from .runner import run_simulation

RUN_COLUMNS = [
    "point_id",
    "run",
    "seed",
    "success",
    "victim_blocks",
    "attacker_blocks",
    "victim_weight_gain",
    "attacker_weight_gain",
    "tx1_committed",
    "tx1_final",
    "victim_sealed",
    "attacker_sealed",
    "tx2_committed",
    "converged",
]

AGG_STATS = [
    "runs",
    "success_rate",
    "ci_half_width",
    "mean_victim_blocks",
    "mean_attacker_blocks",
    "mean_victim_weight_gain",
    "mean_attacker_weight_gain",
    "mean_victim_sealed",
]

#: Two-sided 95% normal quantile for the Wald interval.
Z95 = 1.959963984540054


def sub_seed(seed: int, point_id: int, run: int) -> int:
    """Stable 63-bit seed for one run of one grid point."""
    digest = hashlib.sha256(f"{seed}:{point_id}:{run}".encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def outcome_row(point_id: int, run: int, seed: int, o: RunOutcome) -> dict[str, int]:
    return {
        "point_id": point_id,
        "run": run,
        "seed": seed,
        "success": int(o.double_spend),
        "victim_blocks": o.blocks_per_branch[0],
        "attacker_blocks": o.blocks_per_branch[1],
        "victim_weight_gain": o.weight_gain_per_branch[0],
        "attacker_weight_gain": o.weight_gain_per_branch[1],
        "tx1_committed": int(o.tx1_committed_in_partition),
        "tx1_final": int(o.tx1_in_final_chain),
        "victim_sealed": o.victim_sealed,
        "attacker_sealed": o.attacker_sealed,
        "tx2_committed": int(o.tx2_committed_in_partition),
        "converged": int(o.converged),
    }


def _one(job: tuple[int, int, int, ScenarioConfig]) -> dict[str, int]:
    point_id, run, seed, scenario = job
    return outcome_row(point_id, run, seed, run_simulation(scenario, seed))


@dataclass
class SweepResult:
    name: str
    grid_keys: list[str]
    points: list[dict[str, Any]]
    rows: list[dict[str, int]]

    def aggregate(self) -> list[dict[str, Any]]:
        return aggregate(self.points, self.rows, self.grid_keys)

    def point_rows(self, point_id: int) -> list[dict[str, int]]:
        return [r for r in self.rows if r["point_id"] == point_id]


def _mean(values: Sequence[float]) -> float:
    return statistics.fmean(values) if values else 0.0


def aggregate(points: list[dict[str, Any]], rows: list[dict[str, int]], grid_keys: list[str]) -> list[dict[str, Any]]:
    """Per-point statistics; recomputable from the per-run rows alone."""
    by_point: dict[int, list[dict[str, int]]] = {}
    for r in rows:
        by_point.setdefault(int(r["point_id"]), []).append(r)
    out = []
    for point in points:
        pid = point["point_id"]
        rs = by_point.get(pid, [])
        k = len(rs)
        rate = _mean([int(r["success"]) for r in rs])
        half = Z95 * math.sqrt(rate * (1 - rate) / k) if k else 0.0
        rec = {"point_id": pid}
        rec.update({key: point[key] for key in grid_keys})
        rec.update(
            runs=k,
            success_rate=round(rate, 6),
            ci_half_width=round(half, 6),
            mean_victim_blocks=round(_mean([int(r["victim_blocks"]) for r in rs]), 6),
            mean_attacker_blocks=round(_mean([int(r["attacker_blocks"]) for r in rs]), 6),
            mean_victim_weight_gain=round(_mean([int(r["victim_weight_gain"]) for r in rs]), 6),
            mean_attacker_weight_gain=round(_mean([int(r["attacker_weight_gain"]) for r in rs]), 6),
            mean_victim_sealed=round(_mean([int(r["victim_sealed"]) for r in rs]), 6),
        )
        out.append(rec)
    return out


def _value(v: Any) -> Any:
    # DecisionRule grid values serialize as their threshold.
    return getattr(v, "threshold", v)


def run_sweep(
    sweep: SweepConfig,
    *,
    runs: Optional[int] = None,
    seed: Optional[int] = None,
    workers: Optional[int] = None,
) -> SweepResult:
    """Execute every (point, run); rows come back ordered by (point_id, run)."""
    runs = runs if runs is not None else sweep.base.runs
    seed = seed if seed is not None else sweep.base.seed
    grid_keys = ["threshold" if k == "rule" else k for k, _ in sweep.grid]
    points = []
    jobs = []
    for pid, overrides, scenario in sweep.points():
        points.append({"point_id": pid, **{("threshold" if k == "rule" else k): _value(v) for k, v in overrides.items()}})
        for r in range(runs):
            jobs.append((pid, r, sub_seed(seed, pid, r), scenario))
    rows = _map(jobs, workers)
    rows.sort(key=lambda r: (r["point_id"], r["run"]))
    return SweepResult(sweep.name, grid_keys, points, rows)


def default_workers() -> int:
    env = os.environ.get("POACLONE_WORKERS")
    if env:
        return max(1, int(env))
    return max(1, min(8, os.cpu_count() or 1))


def _map(jobs: list, workers: Optional[int]) -> list[dict[str, int]]:
    workers = default_workers() if workers is None else workers
    if workers <= 1 or len(jobs) < 64:
        return [_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_one, jobs, chunksize=max(1, len(jobs) // (workers * 8))))


CHECK_COLUMNS = ["n", "t", "V", "safe", "runs", "double_spends", "tx1_committed", "attacker_adopted"]


def boundary_points(n: int, ts: Sequence[int] = (0, 1, 2)) -> list[tuple[int, int]]:
    """(t, V) pairs on both sides of the partial-synchrony safety bound."""
    out = []
    for t in ts:
        edge = (n + t) // 2
        out += [(t, v) for v in (edge, edge + 1) if 1 <= v <= n]
    return out


def region_check(
    n: int,
    runs: int,
    seed: int,
    *,
    period_ms: int = 3000,
    partition_steps: int = 12,
    ts: Sequence[int] = (0, 1, 2),
) -> list[dict[str, int]]:
    """Aura cloning attacks with t clone pairs under a THRESHOLD V rule.

    t = 0 degenerates to a plain partition with no clone.
    """
    rows = []
    for pid, (t, v) in enumerate(boundary_points(n, ts)):
        rule = DecisionRule(RuleKind.THRESHOLD, v)
        counts = [0, 0, 0]
        done = 0
        for r in range(runs):
            s = sub_seed(seed, pid, r)
            try:
                plan = plan_aura_attack(n, period_ms, partition_steps, s, attackers=t)
            except PlanError:
                break
            o = run_attack(plan, period_ms=period_ms, seed=s, rule=rule).outcome
            counts[0] += o.double_spend
            counts[1] += o.tx1_committed_in_partition
            counts[2] += o.attacker_branch_adopted
            done += 1
        if done:
            rows.append({
                "n": n, "t": t, "V": v, "safe": int(analysis.is_safe(n, t, v)), "runs": done,
                "double_spends": counts[0], "tx1_committed": counts[1], "attacker_adopted": counts[2],
            })
    return rows


def to_csv(rows: Iterable[dict[str, Any]], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({c: r[c] for c in columns})
    return buf.getvalue()


def read_csv(text: str) -> list[dict[str, str]]:
    return list(csv.DictReader(io.StringIO(text)))


def write_sweep(result: SweepResult, out_dir: Path) -> tuple[Path, Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    runs_path = out_dir / f"{result.name}.runs.csv"
    agg_path = out_dir / f"{result.name}.csv"
    runs_path.write_text(to_csv(result.rows, RUN_COLUMNS))
    agg_path.write_text(to_csv(result.aggregate(), ["point_id", *result.grid_keys, *AGG_STATS]))
    return runs_path, agg_path
