"""Desk-scale versions of the evaluation scenarios.

Each builder returns a :class:`ScenarioConfig`; the ``run_*`` helpers run a
family of them and reduce the logs to the numbers the evaluation compares.
Attackers sit on a LAN-like link (0.1 ms) and clients 10 ms away.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .handshake import Mode
from .puzzle import PuzzleParams
from .scenario import AttackerSpec, ClientSpec, NetworkSpec, ScenarioConfig, ServerSpec
from .simulator import MetricsLog, run_scenario

LAN = NetworkSpec(client_latency_ms=10.0, attacker_latency_ms=0.1)


def syn_flood(mode: Mode, seed: int = 1) -> ScenarioConfig:
    """5 clients, 3 spoofing attackers at 500 SYN/s each, 60 s attack."""
    return ScenarioConfig(seed=seed, duration_s=80, attack_window=(10.0, 70.0),
                          server=ServerSpec(mode=Mode(mode)), clients=ClientSpec(5, rate=0.5),
                          attackers=AttackerSpec(3, rate=500, kind="syn_flood_spoofed"))


def conn_flood(mode: Mode, seed: int = 1, attacker_rate: float = 2000.0) -> ScenarioConfig:
    """5 clients, 3 solving attackers completing handshakes from real addresses."""
    return ScenarioConfig(seed=seed, duration_s=80, attack_window=(10.0, 70.0),
                          server=ServerSpec(mode=Mode(mode)), clients=ClientSpec(5, rate=0.5),
                          attackers=AttackerSpec(3, rate=attacker_rate), network=LAN)


def difficulty_probe(k: int, m: int, seed: int = 3, duration_s: int = 600) -> ScenarioConfig:
    """Unloaded server that challenges every SYN; zero latency isolates solve time."""
    return ScenarioConfig(seed=seed, duration_s=duration_s,
                          server=ServerSpec(puzzle_params=PuzzleParams(k, m),
                                            puzzles_enabled_dynamically=False),
                          clients=ClientSpec(20, rate=0.05), network=NetworkSpec(0.0, 0.0))


def botnet(size: int, per_node_rate: float, seed: int = 1,
           client_strategy: str = "solve", attacker_strategy: str = "solve") -> ScenarioConfig:
    return ScenarioConfig(seed=seed, duration_s=70, attack_window=(5.0, 65.0),
                          clients=ClientSpec(5, rate=0.5, strategy=client_strategy),
                          attackers=AttackerSpec(size, rate=per_node_rate, strategy=attacker_strategy),
                          network=LAN)


@dataclass
class FloodComparison:
    baseline: MetricsLog
    protected: MetricsLog

    @property
    def reduction(self) -> float:
        prot = self.protected.mean_cps("attacker")
        return self.baseline.mean_cps("attacker") / prot if prot else float("inf")


def run_conn_flood(seed: int = 1) -> FloodComparison:
    return FloodComparison(run_scenario(conn_flood(Mode.COOKIES, seed)),
                           run_scenario(conn_flood(Mode.PUZZLES, seed)))


def mean_latency(k: int, m: int, **kw) -> float:
    return float(run_scenario(difficulty_probe(k, m, **kw)).connect_latencies().mean())


def botnet_size_sweep(sizes=(3, 6, 9, 12, 15), aggregate_rate: float = 1500.0,
                      seed: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Effective attacker cps against botnet size at a fixed aggregate SYN rate."""
    cps = [run_scenario(botnet(n, aggregate_rate / n, seed)).mean_cps("attacker") for n in sizes]
    return np.array(sizes, dtype=float), np.array(cps)


def botnet_rate_sweep(rates=(200, 400, 800, 1600), size: int = 5,
                      seed: int = 1) -> tuple[np.ndarray, np.ndarray]:
    cps = [run_scenario(botnet(size, r, seed)).mean_cps("attacker") for r in rates]
    return np.array(rates, dtype=float), np.array(cps)


def adoption_matrix(seed: int = 1) -> dict:
    """Client completion during the attack for each (client, attacker) strategy pair."""
    out = {}
    for cs in ("solve", "no_solve"):
        for ast in ("solve", "no_solve"):
            log = run_scenario(botnet(3, 500, seed, cs, ast))
            out[(cs, ast)] = log.attack_completion_ratio()
    return out


def r_squared(x, y) -> float:
    r = np.corrcoef(x, y)[0, 1]
    return float(r * r)
