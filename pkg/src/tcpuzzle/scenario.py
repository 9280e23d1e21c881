"""Scenario configuration and its JSON file format.

A scenario file is a JSON object whose keys mirror :class:`ScenarioConfig`::

    {
      "seed": 7,
      "duration_s": 90,
      "attack_window": [15, 75],
      "server": {"mode": "puzzles", "mu": 200, "backlog": 64, "accept_capacity": 64,
                 "puzzle_params": {"k": 2, "m": 17, "l": 64}, "expiry_s": 60,
                 "synack_timeout_s": 30, "puzzles_enabled_dynamically": true},
      "clients": {"count": 5, "rate": 0.5, "request_bytes": 10000,
                  "hash_rate": 351575, "strategy": "solve"},
      "attackers": {"count": 3, "rate": 500, "kind": "conn_flood",
                    "strategy": "solve", "hash_rate": 351575},
      "network": {"client_latency_ms": 10, "attacker_latency_ms": 1},
      "exact_hashing": false
    }

Omitted keys take the defaults below.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Union

from .handshake import Mode, ServerConfig
from .puzzle import PuzzleParams

CLIENT_STRATEGIES = ("solve", "no_solve")
ATTACK_KINDS = ("syn_flood_spoofed", "conn_flood")
ATTACK_STRATEGIES = ("solve", "no_solve", "replay")


class ConfigError(ValueError):
    """Invalid scenario configuration."""


@dataclass
class ServerSpec(ServerConfig):
    mu: float = 200.0


@dataclass
class ClientSpec:
    count: int = 5
    rate: float = 20.0
    request_bytes: int = 10_000
    hash_rate: float = 351_575.0
    strategy: str = "solve"


@dataclass
class AttackerSpec:
    count: int = 3
    rate: float = 500.0
    kind: str = "conn_flood"
    strategy: str = "solve"
    hash_rate: float = 351_575.0


@dataclass
class NetworkSpec:
    client_latency_ms: float = 10.0
    attacker_latency_ms: float = 1.0


@dataclass
class ScenarioConfig:
    seed: int = 0
    duration_s: int = 60
    attack_window: tuple = (0.0, 0.0)
    server: ServerSpec = field(default_factory=ServerSpec)
    clients: ClientSpec = field(default_factory=ClientSpec)
    attackers: AttackerSpec = field(default_factory=lambda: AttackerSpec(count=0))
    network: NetworkSpec = field(default_factory=NetworkSpec)
    exact_hashing: bool = False

    def validate(self) -> "ScenarioConfig":
        if int(self.duration_s) != self.duration_s or self.duration_s <= 0:
            raise ConfigError("duration_s must be a positive whole number of seconds")
        start, end = self.attack_window
        if not 0 <= start <= end <= self.duration_s:
            raise ConfigError(f"attack_window {self.attack_window} not within [0, {self.duration_s}]")
        c, a = self.clients, self.attackers
        if c.count < 0 or a.count < 0:
            raise ConfigError("agent counts must be non-negative")
        if c.count and (c.rate <= 0 or c.hash_rate <= 0 or c.request_bytes < 0):
            raise ConfigError("client rate and hash_rate must be positive")
        if a.count and (a.rate <= 0 or a.hash_rate <= 0):
            raise ConfigError("attacker rate and hash_rate must be positive")
        if c.strategy not in CLIENT_STRATEGIES:
            raise ConfigError(f"client strategy must be one of {CLIENT_STRATEGIES}")
        if a.kind not in ATTACK_KINDS:
            raise ConfigError(f"attacker kind must be one of {ATTACK_KINDS}")
        if a.strategy not in ATTACK_STRATEGIES:
            raise ConfigError(f"attacker strategy must be one of {ATTACK_STRATEGIES}")
        if self.server.mu <= 0:
            raise ConfigError("service rate mu must be positive")
        if self.network.client_latency_ms < 0 or self.network.attacker_latency_ms < 0:
            raise ConfigError("latencies must be non-negative")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["attack_window"] = list(self.attack_window)
        d["server"]["mode"] = Mode(self.server.mode).value
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        data = dict(data)
        try:
            server = dict(data.pop("server", {}))
            if "puzzle_params" in server:
                server["puzzle_params"] = PuzzleParams(**server["puzzle_params"])
            cfg = cls(
                server=_build(ServerSpec, server),
                clients=_build(ClientSpec, data.pop("clients", {})),
                attackers=_build(AttackerSpec, data.pop("attackers", {"count": 0})),
                network=_build(NetworkSpec, data.pop("network", {})),
                **_known(cls, data),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        cfg.attack_window = tuple(float(x) for x in cfg.attack_window)
        return cfg.validate()


def _known(cls, data: dict) -> dict:
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown keys for {cls.__name__}: {sorted(unknown)}")
    return data


def _build(cls, data: dict):
    return cls(**_known(cls, dict(data)))


def load_scenario(path: Union[str, Path]) -> ScenarioConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return ScenarioConfig.from_dict(data)


def save_scenario(config: ScenarioConfig, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(config.to_dict(), indent=2) + "\n")
