"""YAML scenario and sweep configuration with field-level validation."""

from __future__ import annotations

import dataclasses
import enum
import itertools
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Iterator, Mapping, Optional, Union

import yaml

from .chain import DecisionRule, Protocol, RuleKind
from .errors import ConfigError

SCHEMA_VERSION = 1


class AttackKind(str, enum.Enum):
    NONE = "none"
    AURA = "aura"
    CLIQUE = "clique"
    CLIQUE_BLIND = "clique_blind"


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to run one simulation, minus the seed."""

    protocol: Protocol
    n: int
    period_ms: int
    attack: AttackKind = AttackKind.NONE
    partition_steps: Optional[int] = None
    partition_ms: Optional[int] = None
    division_k: Optional[int] = None
    attackers: int = 1
    placement_seed: Optional[int] = None
    silent: tuple[int, ...] = ()
    duration_ms: int = 60_000
    tx_at_ms: Optional[int] = None
    rule: DecisionRule = DecisionRule(RuleKind.AURA_MAJORITY)
    runs: int = 1
    seed: int = 0
    base_delay_ms: int = 50
    jitter_ms: int = 10
    lags: tuple[tuple[int, int, int], ...] = ()
    delays: tuple[tuple[int, int, int], ...] = ()
    name: str = "scenario"

    @property
    def partition_duration_ms(self) -> Optional[int]:
        if self.partition_ms is not None:
            return self.partition_ms
        if self.partition_steps is not None:
            return self.partition_steps * self.period_ms
        return None

    def with_overrides(self, **kw: Any) -> "ScenarioConfig":
        cfg = dataclasses.replace(self, **kw)
        validate_scenario(cfg)
        return cfg


@dataclass(frozen=True)
class SweepConfig:
    base: ScenarioConfig
    grid: tuple[tuple[str, tuple[Any, ...]], ...]
    name: str = "sweep"

    def points(self) -> Iterator[tuple[int, dict[str, Any], ScenarioConfig]]:
        keys = [k for k, _ in self.grid]
        for pid, values in enumerate(itertools.product(*(v for _, v in self.grid))):
            overrides = dict(zip(keys, values))
            yield pid, overrides, self.base.with_overrides(**overrides)

    @property
    def n_points(self) -> int:
        total = 1
        for _, values in self.grid:
            total *= len(values)
        return total


@dataclass(frozen=True)
class RegionConfig:
    n: int
    sync: str = "partial"
    name: str = "region"
    check_runs: int = 0
    seed: int = 0


GRID_KEYS = {"period_ms", "partition_steps", "partition_ms", "division_k", "attackers", "n", "threshold"}

_SCENARIO_FIELDS = {
    "schema_version", "kind", "name", "protocol", "n", "timing", "attack", "decision_rule",
    "runs", "seed", "delay", "duration_ms", "silent", "tx_at_ms", "script", "grid", "sync", "check_runs",
}


class _Problems:
    def __init__(self) -> None:
        self.items: list[str] = []

    def add(self, path: str, msg: str) -> None:
        self.items.append(f"{path}: {msg}")

    def raise_if_any(self, what: str) -> None:
        if self.items:
            raise ConfigError(f"invalid {what}", self.items)


def _int(doc: Mapping, key: str, path: str, p: _Problems, default: Any = None, minimum: Optional[int] = None):
    if key not in doc:
        return default
    value = doc[key]
    if isinstance(value, bool) or not isinstance(value, int):
        p.add(f"{path}{key}", f"expected integer, got {value!r}")
        return default
    if minimum is not None and value < minimum:
        p.add(f"{path}{key}", f"must be >= {minimum}, got {value}")
    return value


def _mapping(doc: Mapping, key: str, p: _Problems) -> Mapping:
    value = doc.get(key, {})
    if value is None:
        return {}
    if not isinstance(value, Mapping):
        p.add(key, f"expected mapping, got {type(value).__name__}")
        return {}
    return value


def _rule(doc: Mapping, protocol: Optional[Protocol], p: _Problems) -> DecisionRule:
    default = RuleKind.CLIQUE_MAJORITY if protocol is Protocol.CLIQUE else RuleKind.AURA_MAJORITY
    raw = doc.get("decision_rule")
    if raw is None:
        return DecisionRule(default)
    if isinstance(raw, str):
        raw = {"kind": raw}
    if not isinstance(raw, Mapping):
        p.add("decision_rule", "expected a rule name or mapping")
        return DecisionRule(default)
    try:
        kind = RuleKind(raw.get("kind", default.value))
    except ValueError:
        p.add("decision_rule.kind", f"unknown rule {raw.get('kind')!r}; one of {[k.value for k in RuleKind]}")
        return DecisionRule(default)
    threshold = _int(raw, "threshold", "decision_rule.", p, minimum=1)
    if kind is RuleKind.THRESHOLD and threshold is None:
        p.add("decision_rule.threshold", "required for the threshold rule")
        return DecisionRule(default)
    return DecisionRule(kind, threshold)


def _script(doc: Mapping, p: _Problems) -> tuple[tuple, tuple]:
    raw = _mapping(doc, "script", p)
    out = []
    for key in ("lags", "delays"):
        entries = []
        for i, e in enumerate(raw.get(key, []) or []):
            path = f"script.{key}[{i}]."
            if not isinstance(e, Mapping) or set(e) != {"sealer", "number", "ms"}:
                p.add(f"script.{key}[{i}]", "expected {sealer, number, ms}")
                continue
            vals = [_int(e, k, path, p, minimum=0) for k in ("sealer", "number", "ms")]
            entries.append(tuple(vals))
        out.append(tuple(entries))
    return out[0], out[1]


def parse_scenario(doc: Any, *, allow_grid: bool = False) -> ScenarioConfig:
    """Build and validate a ScenarioConfig from a parsed YAML document."""
    p = _Problems()
    if not isinstance(doc, Mapping):
        raise ConfigError("config must be a mapping at top level")
    for key in doc:
        if key not in _SCENARIO_FIELDS:
            p.add(str(key), "unknown field")
    if doc.get("schema_version") != SCHEMA_VERSION:
        p.add("schema_version", f"expected {SCHEMA_VERSION}, got {doc.get('schema_version')!r}")
    if "grid" in doc and not allow_grid:
        p.add("grid", "only allowed in sweep configs")

    protocol = None
    try:
        protocol = Protocol(doc.get("protocol"))
    except ValueError:
        p.add("protocol", f"expected 'aura' or 'clique', got {doc.get('protocol')!r}")
    n = _int(doc, "n", "", p, minimum=1)
    if "n" not in doc:
        p.add("n", "required")

    timing = _mapping(doc, "timing", p)
    period = None
    if protocol is Protocol.AURA:
        period = _int(timing, "step_duration_ms", "timing.", p, minimum=1)
        if "block_period_ms" in timing:
            p.add("timing.block_period_ms", "not used by aura; use step_duration_ms")
    elif protocol is Protocol.CLIQUE:
        period = _int(timing, "block_period_ms", "timing.", p, default=5000, minimum=1)
        if "step_duration_ms" in timing:
            p.add("timing.step_duration_ms", "not used by clique; use block_period_ms")
    if protocol is Protocol.AURA and period is None:
        p.add("timing.step_duration_ms", "required for aura")

    atk = _mapping(doc, "attack", p)
    kind = AttackKind.NONE
    try:
        kind = AttackKind(atk.get("kind", "none"))
    except ValueError:
        p.add("attack.kind", f"unknown kind {atk.get('kind')!r}; one of {[k.value for k in AttackKind]}")
    known = {"kind", "partition_steps", "partition_ms", "division_k", "attackers", "placement_seed"}
    for key in atk:
        if key not in known:
            p.add(f"attack.{key}", "unknown field")
    partition_steps = _int(atk, "partition_steps", "attack.", p, minimum=1)
    partition_ms = _int(atk, "partition_ms", "attack.", p, minimum=1)
    division_k = _int(atk, "division_k", "attack.", p)
    attackers = _int(atk, "attackers", "attack.", p, default=1, minimum=0)
    placement_seed = _int(atk, "placement_seed", "attack.", p, minimum=0)

    delay = _mapping(doc, "delay", p)
    base_delay = _int(delay, "base_ms", "delay.", p, default=50, minimum=0)
    jitter = _int(delay, "jitter_ms", "delay.", p, default=10, minimum=0)

    silent_raw = doc.get("silent", []) or []
    silent: list[int] = []
    if not isinstance(silent_raw, list):
        p.add("silent", "expected a list of sealer indices")
    else:
        for i, s in enumerate(silent_raw):
            if isinstance(s, bool) or not isinstance(s, int):
                p.add(f"silent[{i}]", f"expected integer, got {s!r}")
            else:
                silent.append(s)

    lags, delays = _script(doc, p)
    rule = _rule(doc, protocol, p)
    duration = _int(doc, "duration_ms", "", p, default=60_000, minimum=1)
    tx_at = _int(doc, "tx_at_ms", "", p, minimum=0)
    runs = _int(doc, "runs", "", p, default=1, minimum=1)
    seed = _int(doc, "seed", "", p, default=0, minimum=0)
    p.raise_if_any("scenario")

    cfg = ScenarioConfig(
        protocol=protocol,
        n=n,
        period_ms=period,
        attack=kind,
        partition_steps=partition_steps,
        partition_ms=partition_ms,
        division_k=division_k,
        attackers=attackers,
        placement_seed=placement_seed,
        silent=tuple(silent),
        duration_ms=duration,
        tx_at_ms=tx_at,
        rule=rule,
        runs=runs,
        seed=seed,
        base_delay_ms=base_delay,
        jitter_ms=jitter,
        lags=lags,
        delays=delays,
        name=str(doc.get("name", "scenario")),
    )
    validate_scenario(cfg)
    return cfg


def validate_scenario(cfg: ScenarioConfig) -> None:
    """Cross-field checks shared by files, overrides and sweep points."""
    p = _Problems()
    if cfg.runs < 1:
        p.add("runs", "must be >= 1")
    for s in cfg.silent:
        if not 0 <= s < cfg.n:
            p.add("silent", f"sealer {s} outside [0, {cfg.n})")
    try:
        cfg.rule.validate(cfg.n)
    except ValueError as exc:
        p.add("decision_rule.threshold", str(exc))
    if cfg.protocol is Protocol.AURA and cfg.attack in (AttackKind.CLIQUE, AttackKind.CLIQUE_BLIND):
        p.add("attack.kind", f"{cfg.attack.value} attack needs protocol clique")
    if cfg.protocol is Protocol.CLIQUE and cfg.attack is AttackKind.AURA:
        p.add("attack.kind", "aura attack needs protocol aura")
    if cfg.attack is AttackKind.AURA:
        if cfg.partition_steps is None and cfg.partition_ms is None:
            p.add("attack.partition_steps", "required for the aura attack")
        if cfg.n % 2 == 0 and cfg.attackers == 1:
            p.add("attack.attackers", f"n={cfg.n} is even: two attackers (clone pairs) are required")
        if not 0 <= cfg.attackers < cfg.n:
            p.add("attack.attackers", f"must be in [0, {cfg.n})")
    if cfg.attack is AttackKind.CLIQUE:
        top = cfg.n // 2 + 1
        if cfg.partition_ms is None:
            p.add("attack.partition_ms", "required for the clique attack")
        if cfg.division_k is None or not 2 <= cfg.division_k <= top:
            p.add("attack.division_k", f"must be in [2, {top}], got {cfg.division_k}")
    if cfg.attack in (AttackKind.CLIQUE, AttackKind.CLIQUE_BLIND) and cfg.n % 2 == 0:
        p.add("n", "clique attack plans need n odd")
    if cfg.attack is not AttackKind.NONE and cfg.n < 3:
        p.add("n", "an attack needs at least 3 sealers")
    if (cfg.lags or cfg.delays) and cfg.protocol is not Protocol.CLIQUE:
        p.add("script", "scripted seal timing applies to clique only")
    for sealer, _, _ in cfg.lags + cfg.delays:
        if sealer >= cfg.n:
            p.add("script", f"sealer {sealer} outside [0, {cfg.n})")
    p.raise_if_any("scenario")


def _grid(doc: Mapping, p: _Problems) -> tuple[tuple[str, tuple[Any, ...]], ...]:
    raw = doc.get("grid")
    if not isinstance(raw, Mapping) or not raw:
        p.add("grid", "sweep needs a non-empty mapping of field -> list of values")
        return ()
    out = []
    for key, values in raw.items():
        if key not in GRID_KEYS:
            p.add(f"grid.{key}", f"not sweepable; one of {sorted(GRID_KEYS)}")
            continue
        if isinstance(values, Mapping) and set(values) == {"start", "stop", "step"}:
            start, stop, step = values["start"], values["stop"], values["step"]
            if not all(isinstance(v, int) and not isinstance(v, bool) for v in (start, stop, step)) or step <= 0:
                p.add(f"grid.{key}", "range needs integer start/stop and positive step")
                continue
            values = list(range(start, stop + 1, step))
        if not isinstance(values, list) or not values:
            p.add(f"grid.{key}", "expected a non-empty list or {start, stop, step}")
            continue
        if any(isinstance(v, bool) or not isinstance(v, int) for v in values):
            p.add(f"grid.{key}", "values must be integers")
            continue
        out.append((key, tuple(values)))
    return tuple(out)


def _apply_threshold(grid):
    """``threshold`` in a grid is sugar for a THRESHOLD decision rule."""
    fixed = []
    for key, values in grid:
        if key == "threshold":
            fixed.append(("rule", tuple(DecisionRule(RuleKind.THRESHOLD, v) for v in values)))
        else:
            fixed.append((key, values))
    return tuple(fixed)


def parse_document(doc: Any) -> Union[ScenarioConfig, SweepConfig, RegionConfig]:
    if not isinstance(doc, Mapping):
        raise ConfigError("config must be a mapping at top level")
    kind = doc.get("kind", "scenario")
    if kind == "region":
        p = _Problems()
        if doc.get("schema_version") != SCHEMA_VERSION:
            p.add("schema_version", f"expected {SCHEMA_VERSION}, got {doc.get('schema_version')!r}")
        for key in doc:
            if key not in {"schema_version", "kind", "name", "n", "sync", "check_runs", "seed"}:
                p.add(str(key), "unknown field")
        n = _int(doc, "n", "", p, minimum=1)
        if n is None:
            p.add("n", "required")
        sync = doc.get("sync", "partial")
        if sync not in ("partial", "sync"):
            p.add("sync", f"expected 'partial' or 'sync', got {sync!r}")
        check_runs = _int(doc, "check_runs", "", p, default=0, minimum=0)
        seed = _int(doc, "seed", "", p, default=0, minimum=0)
        p.raise_if_any("region config")
        return RegionConfig(n=n, sync=sync, name=str(doc.get("name", "region")), check_runs=check_runs, seed=seed)
    if kind == "sweep":
        p = _Problems()
        grid = _grid(doc, p)
        base_doc = {k: v for k, v in doc.items() if k not in ("grid", "kind")}
        try:
            base = parse_scenario(base_doc, allow_grid=True)
        except ConfigError as exc:
            p.items.extend(exc.problems or [str(exc)])
            base = None
        p.raise_if_any("sweep config")
        sweep = SweepConfig(base, _apply_threshold(grid), name=base.name)
        problems = []
        for key, values in sweep.grid:
            for v in values:
                try:
                    base.with_overrides(**{key: v})
                except ConfigError as exc:
                    problems.extend(f"grid.{key}={v}: {m}" for m in (exc.problems or [str(exc)]))
        if problems:
            raise ConfigError("invalid sweep config", problems)
        return sweep
    if kind != "scenario":
        raise ConfigError("invalid config", [f"kind: expected scenario, sweep or region, got {kind!r}"])
    return parse_scenario({k: v for k, v in doc.items() if k != "kind"})


def load_text(text: str):
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("config is not valid YAML", [str(exc)]) from exc
    return parse_document(doc)


PRESET_DIR = "presets"


def preset_names() -> list[str]:
    root = resources.files(__package__) / PRESET_DIR
    return sorted(p.name[: -len(".yaml")] for p in root.iterdir() if p.name.endswith(".yaml"))


def resolve(ref: Union[str, Path]) -> str:
    """Return config text for a file path or a built-in preset name."""
    path = Path(ref)
    if path.is_file():
        return path.read_text()
    name = str(ref)
    if name.endswith(".yaml"):
        name = name[:-5]
    res = resources.files(__package__) / PRESET_DIR / f"{name}.yaml"
    if res.is_file():
        return res.read_text()
    raise ConfigError("config not found", [f"{ref}: no such file or preset (presets: {', '.join(preset_names())})"])


def load(ref: Union[str, Path]):
    return load_text(resolve(ref))
