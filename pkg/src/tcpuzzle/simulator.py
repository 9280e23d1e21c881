"""Discrete-event simulation of a puzzle-protected server under flood attacks.

One :class:`~tcpuzzle.handshake.HandshakeEngine` plays the server.  Clients
issue requests as a Poisson process; attackers send SYNs at a constant rate.
Packets cross the network with a fixed one-way latency per agent class.
Established connections leave the accept queue through a single M/M/1 server
with rate ``mu``.

Solving is either sampled (trial count = sum of k geometric(2^-m) draws, no
hashing) or done for real with :func:`tcpuzzle.puzzle.solve` when
``exact_hashing`` is set.  Either way an agent's solver runs jobs one at a time
at ``hash_rate`` hashes per second.
"""

from __future__ import annotations

import csv
import heapq
import itertools
import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from . import puzzle
from .handshake import (Accept, HandshakeEngine, Ignore, Rst, SendSynAckChallenge,
                        SendSynAckCookie, SendSynAckPlain)
from .puzzle import FlowTuple, HashCounter, PuzzleParams, VerifyResult, derive_challenge
from .scenario import ScenarioConfig
from .wire import ChallengeOption, SolutionOption

SERVER_IP = 0x0A000001  # 10.0.0.1
SERVER_PORT = 80
CLIENT_NET = 0x0A010000  # 10.1.0.0/16
ATTACKER_NET = 0x0A020000  # 10.2.0.0/16
SPOOF_NET = 0x0B000000  # 11.0.0.0/8, 2^24 spoofed sources
SYN_RETRY_S = 1.0
SYN_TRIES = 3
CLIENT_MSS = 1460
CLIENT_WSCALE = 7


class ModeledSolutions(tuple):
    """Stand-in for k solution strings in sampled mode.

    Carries the pre-image the solver was given; the modeled verifier re-derives
    the challenge from (secret, t, flow) and compares, so flow and timestamp
    binding still hold.
    """

    preimage: bytes

    def __new__(cls, preimage: bytes, k: int):
        obj = super().__new__(cls, (b"",) * k)
        obj.preimage = preimage
        return obj


def modeled_verify(secret, t, flow, params, sols, now, expiry_s, *, rng=None, counter=None):
    if now < t:
        return VerifyResult.REJECT_INVALID
    if now - t > expiry_s:
        return VerifyResult.REJECT_EXPIRED
    if not isinstance(sols, ModeledSolutions) or len(sols) != params.k:
        return VerifyResult.REJECT_INVALID
    ch = derive_challenge(secret, t, flow, params, counter)
    if ch.preimage != sols.preimage:
        return VerifyResult.REJECT_INVALID
    if counter is not None:
        counter.add(params.k)
    return VerifyResult.ACCEPT


@dataclass
class ConnectionRecord:
    agent: str
    start: float
    outcome: str = "pending"  # accepted | rst | abandoned | pending
    latency: Optional[float] = None
    challenged: bool = False
    departed: Optional[float] = None  # end of service

    @property
    def sojourn(self) -> Optional[float]:
        """Accept queue wait plus service time."""
        if self.departed is None or self.latency is None:
            return None
        return self.departed - (self.start + self.latency)


@dataclass
class MetricsLog:
    """Per-second series (index s covers [s, s+1)) and per-request records."""

    duration_s: int
    attack_window: tuple
    series: dict
    per_client_throughput: np.ndarray
    connections: list
    counters: dict
    n_attackers: int = 0
    replay_accepts: dict = field(default_factory=dict)  # captured flow -> (t, accept times)

    def attack_slice(self) -> slice:
        a, b = self.attack_window
        return slice(int(a), int(np.ceil(b)))

    def completion_ratio(self, window: Optional[tuple] = None) -> float:
        """Accepted fraction of client requests started in ``window`` (whole run if None)."""
        lo, hi = window if window is not None else (0.0, float(self.duration_s))
        recs = [r for r in self.connections if lo <= r.start < hi and r.outcome != "pending"]
        if not recs:
            return float("nan")
        return sum(r.outcome == "accepted" for r in recs) / len(recs)

    def attack_completion_ratio(self) -> float:
        """Completion ratio of requests started during the attack, excluding the
        last give-up horizon whose SYN retries may land after the attack ends."""
        a, b = self.attack_window
        return self.completion_ratio((a, max(a, b - SYN_RETRY_S * SYN_TRIES)))

    def mean_cps(self, cls: str, window: Optional[tuple] = None) -> float:
        lo, hi = window if window is not None else self.attack_window
        s = self.series[f"{cls}_cps"][int(lo):int(np.ceil(hi))]
        return float(s.mean()) if len(s) else 0.0

    def per_attacker_cps(self) -> float:
        if not self.n_attackers:
            return 0.0
        return self.mean_cps("attacker") / self.n_attackers

    def connect_latencies(self) -> np.ndarray:
        return np.array([r.latency for r in self.connections if r.outcome == "accepted"])


class _Solver:
    """Serial hash worker shared by all of one agent's puzzles."""

    def __init__(self, sim: "Simulation", hash_rate: float, rng: np.random.Generator, cls: str):
        self.sim = sim
        self.hash_rate = hash_rate
        self.rng = rng
        self.cls = cls
        self.jobs: deque = deque()
        self.busy = False

    def submit(self, flow: FlowTuple, option: ChallengeOption, done) -> None:
        self.jobs.append((flow, option, done))
        if not self.busy:
            self._next()

    def _next(self) -> None:
        if not self.jobs:
            self.busy = False
            return
        self.busy = True
        flow, option, done = self.jobs.popleft()
        params = option.params
        if self.sim.config.exact_hashing:
            counter = HashCounter()
            ch = puzzle.Challenge(option.preimage, option.t, params)
            sols = puzzle.solve(ch, int(self.rng.integers(2 ** 63)), counter)
            trials = counter.count
        else:
            trials = puzzle.sampled_solve_trials(params, self.rng)
            sols = ModeledSolutions(option.preimage, params.k)
        self.sim.after(trials / self.hash_rate, self._finish, flow, option, sols, trials, done)

    def _finish(self, flow, option, sols, trials, done) -> None:
        self.sim.count_hashes(self.cls, trials)
        done(flow, option, sols)
        self._next()


class _Initiator:
    """After the final ACK the initiator considers the connection open and
    sends its request straight away."""

    def send_ack(self, flow, solution=None, cookie=None) -> None:
        self.sim.to_server("ack", flow, self.latency, solution, cookie)
        self.sim.to_server("data", flow, self.latency)


class Client(_Initiator):
    cls = "client"

    def __init__(self, sim: "Simulation", idx: int, rng: np.random.Generator):
        spec = sim.config.clients
        self.sim, self.idx, self.rng, self.spec = sim, idx, rng, spec
        self.name = f"client{idx}"
        self.ip = CLIENT_NET + idx + 1
        self.latency = sim.config.network.client_latency_ms / 1000.0
        self.solver = _Solver(sim, spec.hash_rate, rng, self.cls)
        self.ports = itertools.cycle(range(1024, 65536))
        self.pending: dict = {}  # flow -> (record, tries, answered)

    def start(self) -> None:
        self.sim.after(self.rng.exponential(1.0 / self.spec.rate), self.request)

    def request(self) -> None:
        now = self.sim.now
        self.sim.after(self.rng.exponential(1.0 / self.spec.rate), self.request)
        flow = FlowTuple(self.ip, SERVER_IP, next(self.ports), SERVER_PORT,
                         int(self.rng.integers(2 ** 32)))
        rec = ConnectionRecord(self.name, now)
        self.sim.connections.append(rec)
        self.sim.record_flow(flow, self, rec)
        self.pending[flow] = [rec, 1, False]
        self.sim.to_server("syn", flow, self.latency)
        self.sim.after(SYN_RETRY_S, self.syn_timer, flow)

    def syn_timer(self, flow: FlowTuple) -> None:
        state = self.pending.get(flow)
        if state is None or state[2]:
            return
        rec, tries, _ = state
        if tries >= SYN_TRIES:
            rec.outcome = "abandoned"
            del self.pending[flow]
            return
        state[1] += 1
        self.sim.to_server("syn", flow, self.latency)
        self.sim.after(SYN_RETRY_S, self.syn_timer, flow)

    def _answered(self, flow: FlowTuple):
        state = self.pending.get(flow)
        if state is None or state[2]:
            return None
        state[2] = True
        return state[0]

    def on_synack(self, action) -> None:
        flow = action.flow
        rec = self._answered(flow)
        if rec is None:
            return
        if isinstance(action, SendSynAckChallenge):
            rec.challenged = True
            if self.spec.strategy == "solve":
                self.solver.submit(flow, action.option, self._solved)
                return
            self._ack(flow)
        elif isinstance(action, SendSynAckCookie):
            self._ack(flow, cookie=action.isn)
        else:
            self._ack(flow)

    def _solved(self, flow, option, sols) -> None:
        sol = SolutionOption(CLIENT_MSS, CLIENT_WSCALE, sols, option.t)
        self.sim.tap_solution(flow, sol)
        self._ack(flow, solution=sol)

    def _ack(self, flow, solution=None, cookie=None) -> None:
        self.pending.pop(flow, None)
        self.send_ack(flow, solution, cookie)

    def on_rst(self, flow: FlowTuple) -> None:
        rec = self.sim.flow_record(flow)
        if rec is not None and rec.outcome == "pending":
            rec.outcome = "rst"


class SpoofingAttacker:
    """SYN flood from random source addresses; replies go nowhere."""

    cls = "attacker"

    def __init__(self, sim: "Simulation", idx: int, rng: np.random.Generator):
        self.sim, self.rng = sim, rng
        self.spec = sim.config.attackers
        self.latency = sim.config.network.attacker_latency_ms / 1000.0

    def start(self) -> None:
        start, _ = self.sim.config.attack_window
        self.sim.at(start + self.rng.uniform(0, 1.0 / self.spec.rate), self.fire)

    def fire(self) -> None:
        if self.sim.now >= self.sim.config.attack_window[1]:
            return
        r = self.rng.integers(2 ** 24, size=3)
        flow = FlowTuple(SPOOF_NET + int(r[0]), SERVER_IP, 1024 + int(r[1]) % 64512, SERVER_PORT,
                         int(r[2]) << 8)
        self.sim.to_server("syn", flow, self.latency)
        self.sim.after(1.0 / self.spec.rate, self.fire)


class FloodAttacker(_Initiator):
    """Connection flood from a real address.

    ``solve`` works on one challenge at a time and drops challenges that
    arrive while busy; ``no_solve`` answers challenges with a bare ACK;
    ``replay`` re-sends the first client solution it overhears.
    """

    cls = "attacker"

    def __init__(self, sim: "Simulation", idx: int, rng: np.random.Generator):
        self.sim, self.rng = sim, rng
        self.spec = sim.config.attackers
        self.ip = ATTACKER_NET + idx + 1
        self.name = f"attacker{idx}"
        self.latency = sim.config.network.attacker_latency_ms / 1000.0
        self.solver = _Solver(sim, self.spec.hash_rate, rng, self.cls)
        self.ports = itertools.cycle(range(1024, 65536))
        self.captured = None

    def start(self) -> None:
        start, _ = self.sim.config.attack_window
        self.sim.at(start + self.rng.uniform(0, 1.0 / self.spec.rate), self.fire)

    def fire(self) -> None:
        if self.sim.now >= self.sim.config.attack_window[1]:
            return
        self.sim.after(1.0 / self.spec.rate, self.fire)
        if self.spec.strategy == "replay":
            if self.captured is not None:
                flow, sol = self.captured
                self.sim.to_server("ack", flow, self.latency, sol)
            return
        flow = FlowTuple(self.ip, SERVER_IP, next(self.ports), SERVER_PORT,
                         int(self.rng.integers(2 ** 32)))
        self.sim.record_flow(flow, self, None)
        self.sim.to_server("syn", flow, self.latency)

    def on_synack(self, action) -> None:
        flow = action.flow
        if isinstance(action, SendSynAckChallenge):
            if self.spec.strategy == "solve":
                if not self.solver.busy:
                    self.solver.submit(flow, action.option, self._solved)
            else:
                self.send_ack(flow)
        elif isinstance(action, SendSynAckCookie):
            self.send_ack(flow, cookie=action.isn)
        else:
            self.send_ack(flow)

    def _solved(self, flow, option, sols) -> None:
        if self.sim.now < self.sim.config.attack_window[1]:
            self.send_ack(flow, SolutionOption(CLIENT_MSS, CLIENT_WSCALE, sols, option.t))

    def overhear(self, flow, sol) -> None:
        if self.captured is None:
            self.captured = (flow, sol)

    def on_rst(self, flow) -> None:
        pass


class Simulation:
    def __init__(self, config: ScenarioConfig):
        self.config = config.validate()
        seq = np.random.SeedSequence(config.seed)
        server_seed, client_seq, attacker_seq = seq.spawn(3)
        verifier = puzzle.verify if config.exact_hashing else modeled_verify
        self.engine = HandshakeEngine(config.server, seed=int(server_seed.generate_state(1)[0]),
                                      verifier=verifier)
        self.service_rng = np.random.default_rng(server_seed)
        self.now = 0.0
        self._heap: list = []
        self._seq = itertools.count()
        self.connections: list = []
        self._flows: dict = {}  # flow -> (agent, record)
        self.busy = False

        D = config.duration_s
        names = ["server_throughput_Bps", "served", "client_cps", "attacker_cps", "listen_q_occupancy",
                 "accept_q_occupancy", "puzzles_active", "challenge_fraction",
                 "client_challenge_fraction", "server_hash_ops", "client_hash_ops",
                 "attacker_hash_ops"]
        self.series = {n: np.zeros(D) for n in names}
        self._synacks = np.zeros(D)
        self._challenges = np.zeros(D)
        self._client_synacks = np.zeros(D)
        self._client_challenges = np.zeros(D)
        self.per_client = np.zeros((config.clients.count, D))

        self.clients = [Client(self, i, np.random.default_rng(s))
                        for i, s in enumerate(client_seq.spawn(config.clients.count))]
        a = config.attackers
        kind = SpoofingAttacker if a.kind == "syn_flood_spoofed" else FloodAttacker
        self.attackers = [kind(self, i, np.random.default_rng(s))
                          for i, s in enumerate(attacker_seq.spawn(a.count))]
        self._replay_accepts: dict = {}
        self.replayers = [x for x in self.attackers
                          if isinstance(x, FloodAttacker) and a.strategy == "replay"]
        self._by_ip = {c.ip: c for c in self.clients}
        self._by_ip.update({x.ip: x for x in self.attackers if isinstance(x, FloodAttacker)})

    # -- scheduling ------------------------------------------------------------

    def at(self, t: float, fn, *args) -> None:
        heapq.heappush(self._heap, (t, next(self._seq), fn, args))

    def after(self, dt: float, fn, *args) -> None:
        self.at(self.now + dt, fn, *args)

    def _second(self) -> int:
        return int(self.now)

    def count_hashes(self, cls: str, n: int) -> None:
        s = self._second()
        if s < self.config.duration_s:
            self.series[f"{cls}_hash_ops"][s] += n

    def record_flow(self, flow, agent, rec) -> None:
        self._flows[flow] = (agent, rec)

    def flow_record(self, flow):
        entry = self._flows.get(flow)
        return entry[1] if entry else None

    def tap_solution(self, flow, sol) -> None:
        for r in self.replayers:
            r.overhear(flow, sol)

    # -- packets ----------------------------------------------------------------

    def to_server(self, kind: str, flow: FlowTuple, latency: float, solution=None, cookie=None):
        self.after(latency, self._server_rx, kind, flow, solution, cookie)

    def _server_rx(self, kind, flow, solution, cookie) -> None:
        eng = self.engine
        if kind == "syn":
            actions = eng.on_syn(flow, self.now)
        elif kind == "ack":
            actions = eng.on_ack(flow, self.now, solution, cookie)
        else:
            actions = eng.on_data(flow, self.now)
        for act in actions:
            self._server_action(act)

    def _server_action(self, act) -> None:
        s = self._second()
        in_run = s < self.config.duration_s
        agent = self._by_ip.get(act.flow.src_ip)
        if isinstance(act, (SendSynAckPlain, SendSynAckChallenge, SendSynAckCookie)):
            challenged = isinstance(act, SendSynAckChallenge)
            if in_run:
                self._synacks[s] += 1
                self._challenges[s] += challenged
                if isinstance(agent, Client):
                    self._client_synacks[s] += 1
                    self._client_challenges[s] += challenged
            if agent is not None:
                self.after(agent.latency, agent.on_synack, act)
        elif isinstance(act, Accept):
            entry = self._flows.get(act.flow)
            rec = entry[1] if entry else None
            if in_run:
                self.series[f"{agent.cls}_cps" if agent else "attacker_cps"][s] += 1
            if rec is not None and rec.outcome == "pending":
                rec.outcome = "accepted"
                rec.latency = self.now - rec.start
            for r in self.replayers:
                if r.captured is not None and r.captured[0] == act.flow:
                    self._replay_accepts.setdefault(act.flow, (r.captured[1].t, []))[1].append(self.now)
            if not self.busy:
                self._serve_next()
        elif isinstance(act, Rst):
            if agent is not None:
                self.after(agent.latency, agent.on_rst, act.flow)

    # -- M/M/1 service -----------------------------------------------------------

    def _serve_next(self) -> None:
        head = self.engine.pop_accept()
        if head is None:
            self.busy = False
            return
        self.busy = True
        self.after(self.service_rng.exponential(1.0 / self.config.server.mu), self._depart, head.flow)

    def _depart(self, flow: FlowTuple) -> None:
        self.engine.close(flow)
        entry = self._flows.pop(flow, None)
        agent = entry[0] if entry else None
        s = self._second()
        if s < self.config.duration_s:
            self.series["served"][s] += 1
        if entry is not None and entry[1] is not None and entry[1].departed is None:
            entry[1].departed = self.now
        if isinstance(agent, Client) and s < self.config.duration_s:
            nbytes = self.config.clients.request_bytes
            self.series["server_throughput_Bps"][s] += nbytes
            self.per_client[agent.idx, s] += nbytes
        self._serve_next()

    # -- sampling ------------------------------------------------------------------

    def _tick(self, s: int) -> None:
        self.engine.tick(self.now)
        if s > 0:
            prev = s - 1
            eng = self.engine
            self.series["listen_q_occupancy"][prev] = len(eng.listen_q)
            self.series["accept_q_occupancy"][prev] = len(eng.accept_q)
            self.series["puzzles_active"][prev] = float(eng.puzzles_active)
            self.series["server_hash_ops"][prev] = eng.hash_ops - self._last_server_hashes
            self._last_server_hashes = eng.hash_ops
        if s < self.config.duration_s:
            self.at(s + 1.0, self._tick, s + 1)

    def run(self) -> MetricsLog:
        self._last_server_hashes = 0
        self.at(0.0, self._tick, 0)
        for agent in self.clients + self.attackers:
            agent.start()
        end = float(self.config.duration_s)
        heap = self._heap
        while heap:
            t, _, fn, args = heapq.heappop(heap)
            if t > end:
                break
            self.now = t
            fn(*args)
        with np.errstate(invalid="ignore", divide="ignore"):
            self.series["challenge_fraction"] = np.nan_to_num(self._challenges / self._synacks)
            self.series["client_challenge_fraction"] = np.nan_to_num(
                self._client_challenges / self._client_synacks)
        return MetricsLog(self.config.duration_s, tuple(self.config.attack_window), self.series,
                          self.per_client, self.connections, self.engine.snapshot(),
                          len(self.attackers), self._replay_accepts)


def run_scenario(config: ScenarioConfig) -> MetricsLog:
    return Simulation(config).run()


CSV_NAME = "metrics.csv"
SUMMARY_NAME = "summary.json"


def summarize(log: MetricsLog, baseline: Optional[MetricsLog] = None,
              baseline_name: str = "baseline") -> dict:
    lat = log.connect_latencies()
    out = {
        "duration_s": log.duration_s,
        "attack_window": list(log.attack_window),
        "completion_ratio": _num(log.completion_ratio()),
        "mean_connect_latency_s": _num(lat.mean()) if len(lat) else None,
        "mean_cps": {c: log.mean_cps(c, (0, log.duration_s)) for c in ("client", "attacker")},
        "counters": log.counters,
    }
    if log.attack_window[1] > log.attack_window[0]:
        out["attack"] = {
            "completion_ratio": _num(log.attack_completion_ratio()),
            "client_cps": log.mean_cps("client"),
            "attacker_cps": log.mean_cps("attacker"),
            "per_attacker_cps": log.per_attacker_cps(),
        }
    if baseline is not None:
        base, ours = baseline.mean_cps("attacker"), log.mean_cps("attacker")
        out["reduction"] = {
            "baseline": baseline_name,
            "baseline_attacker_cps": base,
            "attacker_cps": ours,
            "factor": base / ours if ours > 0 else None,
        }
    return out


def _num(x: float):
    return None if np.isnan(x) else float(x)


def export_metrics(log: MetricsLog, out_dir: Union[str, Path], baseline: Optional[MetricsLog] = None,
                   baseline_name: str = "baseline") -> tuple[Path, Path]:
    """Write ``metrics.csv`` (one row per simulated second) and ``summary.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = list(log.series)
    n_clients = log.per_client_throughput.shape[0]
    header = ["second"] + names + [f"client{i}_throughput_Bps" for i in range(n_clients)]
    csv_path = out / CSV_NAME
    with csv_path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for s in range(log.duration_s):
            row = [s] + [repr(float(log.series[n][s])) for n in names]
            row += [repr(float(v)) for v in log.per_client_throughput[:, s]]
            w.writerow(row)
    summary_path = out / SUMMARY_NAME
    summary_path.write_text(json.dumps(summarize(log, baseline, baseline_name), indent=2) + "\n")
    return csv_path, summary_path
