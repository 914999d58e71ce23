import json
import math
import numbers
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Callable, Dict, FrozenSet, List, Optional, Tuple, Union

from pourl.consensus import TieBreakRule
from pourl.environment import GridWorldConfig
from pourl.errors import ConfigError

CONFIG_VERSION = 1
SCENARIO_NAMES = ("mine", "converge", "partition", "attack", "learncurve")
RACE_MODES = ("equal_length", "open")


def _is_integer(value: Any) -> bool:
    return isinstance(value, numbers.Integral) and not isinstance(value, bool)


def _non_integers(obj: Any, names: Tuple[str, ...]) -> List[str]:
    return [f"{name} must be an integer" for name in names if not _is_integer(getattr(obj, name))]


@dataclass(frozen=True)
class LearningConfig:
    alpha: float = 0.01
    gamma: float = 0.9
    epsilon: float = 0.1
    sync_interval_C: int = 50
    batch_size: int = 32
    buffer_capacity: int = 10_000
    hidden_sizes: Tuple[int, ...] = (32, 32)
    seed: int = 0

    def problems(self) -> List[str]:
        found = _non_integers(self, ("sync_interval_C", "batch_size", "buffer_capacity", "seed"))
        if not all(_is_integer(h) for h in self.hidden_sizes):
            found.append("hidden_sizes must be integers")
        if found:
            return found
        if not 0.0 < self.alpha < 1.0:
            found.append("alpha must lie in (0, 1)")
        if not 0.0 < self.gamma < 1.0:
            found.append("gamma must lie in (0, 1)")
        if not 0.0 <= self.epsilon <= 1.0:
            found.append("epsilon must lie in [0, 1]")
        for name in ("sync_interval_C", "batch_size", "buffer_capacity"):
            if getattr(self, name) <= 0:
                found.append(f"{name} must be positive")
        if any(h <= 0 for h in self.hidden_sizes):
            found.append("hidden_sizes must be positive")
        if not 0 <= self.seed < 2 ** 64:
            found.append("seed must be an unsigned 64-bit integer")
        return found


@dataclass(frozen=True)
class Partition:
    start: float
    end: float
    side: FrozenSet[int]  # the other side is every remaining node

    def separates(self, a: int, b: int) -> bool:
        return (a in self.side) != (b in self.side)


@dataclass(frozen=True)
class SimConfig:
    node_count: int = 1
    seed: int = 0
    mean_mine_time: Union[float, Tuple[float, ...]] = 1.0
    mean_link_delay: float = 0.1
    drop_probability: float = 0.0
    partitions: Tuple[Partition, ...] = ()
    max_blocks: int = 50
    tie_break: TieBreakRule = TieBreakRule.LAST_REWARD
    stop_time: Optional[float] = None
    heal_sync: bool = True

    def mine_time_for(self, node_id: int) -> float:
        if isinstance(self.mean_mine_time, tuple):
            return self.mean_mine_time[node_id]
        return self.mean_mine_time

    def problems(self) -> List[str]:
        found = _non_integers(self, ("node_count", "seed", "max_blocks"))
        if found:
            return found
        if self.node_count <= 0:
            found.append("node_count must be positive")
        if not 0 <= self.seed < 2 ** 64:
            found.append("seed must be an unsigned 64-bit integer")
        times = self.mean_mine_time if isinstance(self.mean_mine_time, tuple) else (self.mean_mine_time,)
        if isinstance(self.mean_mine_time, tuple) and len(times) != self.node_count:
            found.append("mean_mine_time list needs one entry per node")
        if any(not (math.isfinite(t) and t > 0) for t in times):
            found.append("mean_mine_time must be positive")
        if not (math.isfinite(self.mean_link_delay) and self.mean_link_delay > 0):
            found.append("mean_link_delay must be positive")
        if not 0.0 <= self.drop_probability < 1.0:
            found.append("drop_probability must lie in [0, 1)")
        if self.max_blocks <= 0:
            found.append("max_blocks must be positive")
        if self.stop_time is not None and self.stop_time <= 0:
            found.append("stop_time must be positive")
        ordered = sorted(self.partitions, key=lambda p: p.start)
        for p in ordered:
            if not 0 <= p.start < p.end:
                found.append(f"partition [{p.start}, {p.end}) is empty or negative")
            if not p.side or any(not 0 <= n < self.node_count for n in p.side):
                found.append("partition side must name existing nodes")
            elif len(p.side) == self.node_count:
                found.append("partition side must leave at least one node on the other side")
        for earlier, later in zip(ordered, ordered[1:]):
            if later.start < earlier.end:
                found.append("partition intervals overlap")
        return found


@dataclass(frozen=True)
class AttackConfig:
    honest_count: int = 4
    attacker_count: int = 6
    tamper_height: int = 10
    sweep_seeds: int = 100
    race: str = "equal_length"
    race_blocks: int = 20

    def problems(self) -> List[str]:
        found = _non_integers(
            self, ("honest_count", "attacker_count", "tamper_height", "sweep_seeds", "race_blocks")
        )
        if found:
            return found
        for name in ("honest_count", "attacker_count", "sweep_seeds", "race_blocks"):
            if getattr(self, name) <= 0:
                found.append(f"{name} must be positive")
        if self.tamper_height < 1:
            found.append("tamper_height must be at least 1 (genesis is fixed)")
        if self.race not in RACE_MODES:
            found.append(f"race must be one of {', '.join(RACE_MODES)}")
        return found


@dataclass(frozen=True)
class CurveConfig:
    window: int = 200
    pooling_nodes: int = 5
    sweep_seeds: int = 20
    sweep_blocks: int = 300

    def problems(self) -> List[str]:
        names = tuple(f.name for f in fields(self))
        typed = _non_integers(self, names)
        return typed or [f"{name} must be positive" for name in names if getattr(self, name) <= 0]


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str = "mine"
    output_dir: str = "out"
    simulation: SimConfig = field(default_factory=SimConfig)
    learning: LearningConfig = field(default_factory=LearningConfig)
    gridworld: GridWorldConfig = field(default_factory=GridWorldConfig)
    attack: AttackConfig = field(default_factory=AttackConfig)
    learncurve: CurveConfig = field(default_factory=CurveConfig)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(
            self,
            simulation=replace(self.simulation, seed=seed),
            learning=replace(self.learning, seed=seed),
        )

    def problems(self) -> List[str]:
        found = []
        if self.scenario not in SCENARIO_NAMES:
            found.append(f"scenario: must be one of {', '.join(SCENARIO_NAMES)}")
        for section in ("simulation", "learning", "gridworld", "attack", "learncurve"):
            found.extend(f"{section}: {p}" for p in getattr(self, section).problems())
        return found


def _check_keys(section: str, data: Any, allowed: List[str]) -> Dict[str, Any]:
    if not isinstance(data, dict):
        raise ConfigError(section, "must be an object")
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigError(f"{section}.{unknown[0]}" if section else unknown[0], "unknown key")
    return dict(data)


def _section(cls, section: str, data: Any, convert: Optional[Dict[str, Callable[[Any], Any]]] = None):
    values = _check_keys(section, data, [f.name for f in fields(cls)])
    for key, fn in (convert or {}).items():
        if key in values:
            try:
                values[key] = fn(values[key])
            except (TypeError, ValueError, KeyError) as exc:
                raise ConfigError(f"{section}.{key}", str(exc)) from exc
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(section, str(exc)) from exc


def _partition(data: Any) -> Partition:
    values = _check_keys("simulation.partitions[]", data, ["start", "end", "side"])
    return Partition(float(values["start"]), float(values["end"]), frozenset(int(n) for n in values["side"]))


def _mine_time(value: Any) -> Union[float, Tuple[float, ...]]:
    if isinstance(value, list):
        return tuple(float(v) for v in value)
    return float(value)


def config_from_dict(data: Any) -> ExperimentConfig:
    top = _check_keys(
        "", data,
        ["version", "scenario", "output_dir", "seed", "simulation", "learning", "gridworld", "attack", "learncurve"],
    )
    version = top.pop("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ConfigError("version", f"unsupported config version {version!r}")
    seed = top.pop("seed", None)
    config = ExperimentConfig(
        scenario=str(top.get("scenario", "mine")),
        output_dir=str(top.get("output_dir", "out")),
        simulation=_section(SimConfig, "simulation", top.get("simulation", {}), {
            "mean_mine_time": _mine_time,
            "partitions": lambda ps: tuple(_partition(p) for p in ps),
            "tie_break": TieBreakRule,
        }),
        learning=_section(LearningConfig, "learning", top.get("learning", {}), {
            "hidden_sizes": tuple,
        }),
        gridworld=_section(GridWorldConfig, "gridworld", top.get("gridworld", {}), {
            "start": lambda c: tuple(int(v) for v in c),
            "goal": lambda c: tuple(int(v) for v in c),
            "walls": lambda ws: frozenset(tuple(int(v) for v in w) for w in ws),
        }),
        attack=_section(AttackConfig, "attack", top.get("attack", {})),
        learncurve=_section(CurveConfig, "learncurve", top.get("learncurve", {})),
    )
    if seed is not None:
        if not isinstance(seed, int) or isinstance(seed, bool):
            raise ConfigError("seed", "must be an integer")
        config = config.with_seed(seed)
    return config


def validate_config(config: ExperimentConfig, log_fn: Callable[[str], None]) -> List[str]:
    """Report every range problem through ``log_fn``; returns the same list."""
    problems = config.problems()
    for problem in problems:
        log_fn(f"CONFIG ERROR: {problem}")
    return problems


def load_experiment_config(path: str, log_fn: Callable[[str], None] = lambda _: None) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except OSError as exc:
        raise ConfigError("", f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"{path} is not valid JSON: {exc}") from exc
    config = config_from_dict(data)
    try:
        problems = validate_config(config, log_fn)
    except TypeError as exc:
        raise ConfigError("", f"wrongly typed value: {exc}") from exc
    if problems:
        raise ConfigError("", "; ".join(problems))
    return config


def config_to_dict(config: ExperimentConfig) -> Dict[str, Any]:
    """The file form of ``config``; config_from_dict reads it back unchanged."""
    sim = asdict(config.simulation)
    sim["tie_break"] = config.simulation.tie_break.value
    sim["partitions"] = [
        {"start": p.start, "end": p.end, "side": sorted(p.side)} for p in config.simulation.partitions
    ]
    if isinstance(config.simulation.mean_mine_time, tuple):
        sim["mean_mine_time"] = list(config.simulation.mean_mine_time)
    learning = asdict(config.learning)
    learning["hidden_sizes"] = list(config.learning.hidden_sizes)
    return {
        "version": CONFIG_VERSION,
        "scenario": config.scenario,
        "output_dir": config.output_dir,
        "simulation": sim,
        "learning": learning,
        "gridworld": config.gridworld.to_dict(),
        "attack": asdict(config.attack),
        "learncurve": asdict(config.learncurve),
    }
