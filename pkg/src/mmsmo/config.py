"""JSON run configuration: schema check, dataclass construction, seed fan-out."""
from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import MapGenConfig
from .marl import TrainingConfig
from .mobility import MobilityConfig
from .power import PowerConfig
from .qos import QosConfig
from .radio import RadioConfig

STRATEGIES = ("ddqn", "itqoslb", "allon")
# named sub-streams of the master seed
STREAMS = {"map": 0, "sites": 1, "mobility": 2, "clustering": 3, "agents": 4}

_BLOCKS = {
    "radio": RadioConfig,
    "power": PowerConfig,
    "mobility": MobilityConfig,
    "qos": QosConfig,
    "training": TrainingConfig,
}
_MAP_EXTRA = ("heightmap",)
_TOP = ("seed", "strategy", "episodes", "n_bs", "n_ue", "out_dir", "report_last_episodes", "map") + tuple(_BLOCKS)


class ConfigError(ValueError):
    def __init__(self, field: str, msg: str):
        super().__init__(f"{field}: {msg}")
        self.field = field


def _fields(cls) -> list[str]:
    return [f.name for f in dataclasses.fields(cls) if f.name != "seed"]


@dataclass
class RunConfig:
    seed: int
    strategy: str
    episodes: int
    n_bs: int
    n_ue: int
    out_dir: str
    report_last_episodes: int
    heightmap: str | None
    map: MapGenConfig
    radio: RadioConfig
    power: PowerConfig
    mobility: MobilityConfig
    qos: QosConfig
    training: TrainingConfig
    raw: dict

    def seed_sequence(self, stream: str) -> np.random.SeedSequence:
        return np.random.SeedSequence(self.seed, spawn_key=(STREAMS[stream],))

    def rng(self, stream: str) -> np.random.Generator:
        return np.random.default_rng(self.seed_sequence(stream))

    def stream_int(self, stream: str) -> int:
        return int(self.seed_sequence(stream).generate_state(1)[0])

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.raw, sort_keys=True).encode()).hexdigest()


def _build_block(name: str, cls, data, extra=()):
    if not isinstance(data, dict):
        raise ConfigError(name, "must be an object")
    want = _fields(cls)
    for key in want + list(extra):
        if key not in data:
            raise ConfigError(f"{name}.{key}", "missing required field")
    unknown = sorted(set(data) - set(want) - set(extra))
    if unknown:
        raise ConfigError(f"{name}.{unknown[0]}", "unknown field")
    kwargs = {k: data[k] for k in want}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        msg = str(exc)
        # surface the offending field when the message names one
        hit = next((k for k in want if f"{name}.{k}" in msg), None)
        raise ConfigError(f"{name}.{hit}" if hit else name, msg) from exc


def _int(data, key, lo=None):
    v = data[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(key, f"must be an integer, got {v!r}")
    if lo is not None and v < lo:
        raise ConfigError(key, f"must be >= {lo}")
    return v


def parse_config(data: dict, overrides: dict | None = None) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    data = copy.deepcopy(data)
    for k, v in (overrides or {}).items():
        if v is not None:
            data[k] = v
    for key in _TOP:
        if key not in data:
            raise ConfigError(key, "missing required field")
    unknown = sorted(set(data) - set(_TOP))
    if unknown:
        raise ConfigError(unknown[0], "unknown field")
    if data["strategy"] not in STRATEGIES:
        raise ConfigError("strategy", f"must be one of {', '.join(STRATEGIES)}")
    seed = _int(data, "seed", 0)
    episodes = _int(data, "episodes", 1)
    n_bs = _int(data, "n_bs", 1)
    n_ue = _int(data, "n_ue", 1)
    last = _int(data, "report_last_episodes", 1)
    if not isinstance(data["out_dir"], str):
        raise ConfigError("out_dir", "must be a string")

    m = data["map"]
    mapcfg = _build_block("map", MapGenConfig, m, _MAP_EXTRA)
    hm = m["heightmap"]
    if hm is not None:
        if not isinstance(hm, str) or not Path(hm).is_file():
            raise ConfigError("map.heightmap", f"file not found: {hm!r}")
    blocks = {name: _build_block(name, cls, data[name]) for name, cls in _BLOCKS.items()}
    if n_ue < blocks["mobility"].n_communities:
        raise ConfigError("n_ue", "fewer UEs than communities")
    return RunConfig(seed, data["strategy"], episodes, n_bs, n_ue, data["out_dir"], last, hm, mapcfg, raw=data, **blocks)


def load_config(path, overrides: dict | None = None) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError("--config", f"file not found: {path}")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("<root>", f"invalid JSON: {exc}") from exc
    return parse_config(data, overrides)


def default_config_dict() -> dict:
    """Complete config using every dataclass default."""

    def block(cls, extra=None):
        inst = cls()
        d = {k: getattr(inst, k) for k in _fields(cls)}
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return {**(extra or {}), **d}

    mob = block(MobilityConfig)
    mob["t_episode_s"] = None
    mob["p_stay_local_nmp"] = None
    mob["p_stay_local_cmp"] = None
    return {
        "seed": 0,
        "strategy": "ddqn",
        "episodes": 1000,
        "n_bs": 9,
        "n_ue": 70,
        "out_dir": "runs/default",
        "report_last_episodes": 200,
        "map": block(MapGenConfig, {"heightmap": None}),
        "radio": block(RadioConfig),
        "power": block(PowerConfig),
        "mobility": mob,
        "qos": block(QosConfig),
        "training": block(TrainingConfig),
    }
