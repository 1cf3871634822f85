"""Experiment configuration: an INI file with sections, plus keyword overrides."""

from __future__ import annotations

import configparser
import dataclasses
import math
from dataclasses import dataclass, fields

from .channels import CommGraph
from .protocol import SCHEMES
from .sampling import ACCUMULATE, REPLACE, validate_sizes


class ConfigError(ValueError):
    pass


# INI section of every ExperimentConfig field.
SECTIONS = {
    "mdp": ("side", "wrap"),
    "graph": ("agents", "graph", "degree", "edges"),
    "channels": ("sigma_l2", "sigma_a2", "sigma_r", "delta_q_l", "delta_q_a"),
    "learning": ("k", "k_m", "eps_a", "eps_b", "gamma", "max_sweeps", "mode"),
    "experiment": (
        "scheme", "degree_corrected", "episodes", "steps_per_episode", "replications",
        "base_seed", "include_oracle_agent", "workers",
    ),
    "bounds": ("delta", "eps_s", "sigma_bellman"),
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Every knob of one run. Defaults reproduce the weak-noise grid-world setting."""

    side: int = 5
    wrap: bool = True
    agents: int = 4
    graph: str = "full"  # full | regular | edges
    degree: int = 0
    edges: tuple = ()
    sigma_l2: float = 0.1
    sigma_a2: float = 0.1
    sigma_r: float = 0.0
    delta_q_l: float = 0.0
    delta_q_a: float = 0.0
    k: int = 9
    k_m: int = 3
    eps_a: float = 1e-7
    eps_b: float = 0.1
    gamma: float = 0.98
    max_sweeps: int = 30
    mode: str = ACCUMULATE
    scheme: str = "optimal"
    degree_corrected: bool = False
    episodes: int = 10
    steps_per_episode: int = 50
    replications: int = 150
    base_seed: int = 0
    include_oracle_agent: bool = True
    workers: int = 1
    delta: float = 0.1
    eps_s: float = 1.0
    sigma_bellman: float | None = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.side >= 1, "side must be positive")
        need(self.agents >= 1, "agents must be positive")
        need(self.graph in ("full", "regular", "edges"), f"unknown graph kind {self.graph!r}")
        for name in ("sigma_l2", "sigma_a2", "sigma_r", "delta_q_l", "delta_q_a"):
            need(getattr(self, name) >= 0, f"{name} must be non-negative")
        need(0.0 <= self.gamma < 1.0, "gamma must lie in [0, 1)")
        need(self.eps_a > 0, "eps_a must be positive")
        need(self.eps_b >= 0, "eps_b must be non-negative")
        need(self.max_sweeps >= 1, "max_sweeps must be at least 1")
        need(self.mode in (REPLACE, ACCUMULATE), f"unknown mode {self.mode!r}")
        need(self.scheme in SCHEMES, f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        need(self.episodes >= 1 and self.steps_per_episode >= 1, "episodes and steps must be positive")
        need(self.replications >= 1, "replications must be at least 1")
        need(self.workers >= 1, "workers must be at least 1")
        need(0.0 < self.delta < 1.0, "delta must lie in (0, 1)")
        need(self.eps_s > 0, "eps_s must be positive")
        try:
            validate_sizes(self.k, self.k_m, self.mode)
            self.make_graph()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.scheme == "optimal_quantization":
            need(self.sigma_l2 > 0, "optimal_quantization needs sigma_l2 > 0")

    def make_graph(self) -> CommGraph:
        if self.graph == "full":
            return CommGraph.full(self.agents)
        if self.graph == "regular":
            return CommGraph.regular(self.agents, self.degree)
        return CommGraph.from_edges(self.agents, self.edges)

    def replace(self, **overrides) -> ExperimentConfig:
        clean = {k: v for k, v in overrides.items() if v is not None}
        unknown = set(clean) - {f.name for f in fields(self)}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return dataclasses.replace(self, **clean)


def _parse_edges(text: str) -> tuple:
    edges = []
    for item in text.replace(";", ",").split(","):
        item = item.strip()
        if not item:
            continue
        a, _, b = item.partition("-")
        edges.append((int(a), int(b)))
    return tuple(edges)


def _convert(name: str, raw: str):
    default = next(f for f in fields(ExperimentConfig) if f.name == name).default
    raw = raw.strip()
    if name == "edges":
        return _parse_edges(raw)
    if name == "sigma_bellman":
        return None if raw.lower() in ("", "none", "auto") else float(raw)
    if isinstance(default, bool):
        lowered = raw.lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        value = float(raw)
        if not math.isfinite(value):
            raise ValueError(f"not finite: {raw!r}")
        return value
    return raw


def load_config(path) -> ExperimentConfig:
    """Read an INI file; unknown sections or keys are configuration errors."""
    parser = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    values = {}
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(f"{path}: unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in SECTIONS[section]:
                raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")
            try:
                values[key] = _convert(key, raw)
            except ValueError as exc:
                raise ConfigError(f"{path}: bad value for {key}: {exc}") from exc
    return ExperimentConfig(**values)


def dump_config(cfg: ExperimentConfig) -> str:
    lines = []
    for section, keys in SECTIONS.items():
        lines.append(f"[{section}]")
        for key in keys:
            value = getattr(cfg, key)
            if key == "edges":
                value = ",".join(f"{a}-{b}" for a, b in value)
            elif value is None:
                value = "auto"
            elif isinstance(value, bool):
                value = str(value).lower()
            lines.append(f"{key} = {value}")
        lines.append("")
    return "\n".join(lines)
