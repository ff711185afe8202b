from __future__ import annotations

import textwrap

from hypothesis import given
from hypothesis import strategies as st

from poaclone.config import load_text
from poaclone.plot import line_chart, region_heatmap
from poaclone import analysis
from poaclone.sweep import (
    AGG_STATS,
    RUN_COLUMNS,
    aggregate,
    read_csv,
    run_sweep,
    sub_seed,
    to_csv,
    write_sweep,
)

SWEEP = textwrap.dedent(
    """\
    schema_version: 1
    kind: sweep
    name: mini
    protocol: clique
    n: 9
    attack: {kind: clique, division_k: 5, partition_ms: 24800}
    runs: 4
    seed: 5
    grid:
      division_k: [2, 5]
      partition_ms: [24800, 28000]
    """
)


def test_sub_seed_is_stable_and_distinct():
    assert sub_seed(1, 2, 3) == sub_seed(1, 2, 3)
    assert 0 <= sub_seed(1, 2, 3) < 2**63
    seeds = {sub_seed(2019, p, r) for p in range(20) for r in range(50)}
    assert len(seeds) == 1000


def test_rows_ordered_and_aggregates_recomputable(tmp_path):
    result = run_sweep(load_text(SWEEP))
    keys = [(r["point_id"], r["run"]) for r in result.rows]
    assert keys == sorted(keys) and len(keys) == 16
    runs_path, agg_path = write_sweep(result, tmp_path)
    rows = read_csv(runs_path.read_text())
    assert list(rows[0]) == RUN_COLUMNS
    again = aggregate(result.points, rows, result.grid_keys)
    assert to_csv(again, ["point_id", *result.grid_keys, *AGG_STATS]) == agg_path.read_text()
    for rec in result.aggregate():
        assert 0.0 <= rec["success_rate"] <= 1.0


def test_rerun_is_byte_identical(tmp_path):
    a = write_sweep(run_sweep(load_text(SWEEP)), tmp_path / "a")
    b = write_sweep(run_sweep(load_text(SWEEP)), tmp_path / "b")
    for x, y in zip(a, b):
        assert x.read_bytes() == y.read_bytes()


def test_parallel_matches_serial(tmp_path):
    cfg = load_text(SWEEP.replace("runs: 4", "runs: 20"))
    serial = run_sweep(cfg, workers=1)
    parallel = run_sweep(cfg, workers=2)
    assert serial.rows == parallel.rows


def test_overrides_for_runs_and_seed():
    cfg = load_text(SWEEP)
    result = run_sweep(cfg, runs=1, seed=99)
    assert len(result.rows) == 4
    assert result.rows[0]["seed"] == sub_seed(99, 0, 0)


def test_svg_regenerates_identically_from_csv(tmp_path):
    result = run_sweep(load_text(SWEEP))
    _, agg_path = write_sweep(result, tmp_path)
    text = agg_path.read_text()
    first = line_chart(text, "partition_ms", "success_rate", "division_k", title="t")
    second = line_chart(agg_path.read_text(), "partition_ms", "success_rate", "division_k", title="t")
    assert first == second
    assert first.startswith("<svg") and first.count("<polyline") == 2


def test_region_heatmap_is_pure():
    rows = analysis.region_rows(analysis.safe_live_region(9))
    text = to_csv(rows, ["n", "t", "V", "sync", "safe", "live"])
    assert region_heatmap(text) == region_heatmap(text)
    assert region_heatmap(text).count("<rect") == 1 + 90 + 4


@given(st.lists(st.fixed_dictionaries({"a": st.integers(), "b": st.text(alphabet="xyz,\"", max_size=5)}), max_size=8))
def test_csv_round_trip(rows):
    text = to_csv(rows, ["a", "b"])
    back = read_csv(text)
    assert [(int(r["a"]), r["b"]) for r in back] == [(r["a"], r["b"]) for r in rows]
