"""Stateless puzzle-gated connection establishment.

:class:`HandshakeEngine` is a deterministic event machine: each ``on_*`` call
takes the current time and returns the actions the server emits.  It models a
listening socket with a bounded listen (half-open) queue and a bounded accept
queue.

While the listen queue has room, SYNs are answered plainly.  Once it fills,
puzzles switch on and every SYN gets a challenge without any state being
stored; they switch off again when occupancy drops below half the backlog.
A solution ACK is verified only when the accept queue has room, and is
otherwise ignored.  Data on a flow the server never accepted draws a RST.
"""

from __future__ import annotations

import enum
import hashlib
import random
import struct
from collections import OrderedDict
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, NamedTuple, Optional, Union

from .puzzle import (FlowTuple, HashCounter, PuzzleParams, VerifyResult, derive_challenge,
                     generate_secret, verify)
from .wire import ChallengeOption, OptionError, SolutionOption, decode_solution

COOKIE_SLOT_S = 64
DEFAULT_MSS = 536
DEFAULT_WSCALE = 0


class Mode(str, enum.Enum):
    OFF = "off"
    PUZZLES = "puzzles"
    COOKIES = "cookies"
    PUZZLES_WITH_COOKIE_FALLBACK = "puzzles_with_cookie_fallback"


class ClockError(RuntimeError):
    """Time moved backwards."""


@dataclass
class ServerConfig:
    backlog: int = 64
    accept_capacity: int = 64
    puzzle_params: PuzzleParams = field(default_factory=lambda: PuzzleParams(2, 17))
    expiry_s: float = 60.0
    synack_timeout_s: float = 30.0
    mode: Mode = Mode.PUZZLES
    # False: challenge every SYN instead of only while the listen queue is saturated
    puzzles_enabled_dynamically: bool = True

    def __post_init__(self) -> None:
        self.mode = Mode(self.mode)
        if self.backlog < 1 or self.accept_capacity < 1:
            raise ValueError("backlog and accept_capacity must be >= 1")
        if self.expiry_s <= 0 or self.synack_timeout_s <= 0:
            raise ValueError("expiry_s and synack_timeout_s must be positive")


# Actions

class SendSynAckPlain(NamedTuple):
    flow: FlowTuple


class SendSynAckChallenge(NamedTuple):
    flow: FlowTuple
    option: ChallengeOption


class SendSynAckCookie(NamedTuple):
    flow: FlowTuple
    isn: int


class Accept(NamedTuple):
    flow: FlowTuple
    mss: int = DEFAULT_MSS
    wscale: int = DEFAULT_WSCALE


class Ignore(NamedTuple):
    flow: FlowTuple
    reason: str


class Rst(NamedTuple):
    flow: FlowTuple


Action = Union[SendSynAckPlain, SendSynAckChallenge, SendSynAckCookie, Accept, Ignore, Rst]


@dataclass
class Counters:
    syns: int = 0
    synacks_plain: int = 0
    challenges_sent: int = 0
    cookies_sent: int = 0
    syns_dropped: int = 0
    acks_ignored: int = 0
    malformed: int = 0
    rsts_sent: int = 0
    accepts: int = 0
    puzzle_accepts: int = 0
    cookie_accepts: int = 0
    evictions: int = 0
    verify_failures: int = 0
    expired: int = 0
    hash_ops: int = 0


def cookie_encode(secret: bytes, flow: FlowTuple, now: float,
                  counter: Optional[HashCounter] = None) -> int:
    return _cookie(secret, flow, int(now) // COOKIE_SLOT_S, counter)


def cookie_validate(secret: bytes, flow: FlowTuple, isn: int, now: float,
                    counter: Optional[HashCounter] = None) -> bool:
    slot = int(now) // COOKIE_SLOT_S
    for s in (slot, slot - 1):
        if s >= 0 and _cookie(secret, flow, s, counter) == isn:
            return True
    return False


def _cookie(secret: bytes, flow: FlowTuple, slot: int, counter: Optional[HashCounter]) -> int:
    if counter is not None:
        counter.add()
    digest = hashlib.sha256(secret + flow.pack() + struct.pack(">I", slot & 0xFFFFFFFF)).digest()
    return int.from_bytes(digest[:4], "big")


Verifier = Callable[..., VerifyResult]

TUNABLES = ("puzzle.k", "puzzle.m", "puzzle.l", "puzzle.expiry_s", "puzzle.enabled",
            "cookies.enabled", "backlog", "accept_capacity")


class HandshakeEngine:
    """Server side of the three-way handshake.

    Not thread-safe: callers feed events one at a time with non-decreasing
    ``now``.  ``verifier`` has the signature of :func:`tcpuzzle.puzzle.verify`
    and may be swapped by a simulator that models solutions instead of
    hashing them.
    """

    def __init__(self, config: ServerConfig, secret: Optional[bytes] = None, seed: int = 0,
                 verifier: Verifier = verify):
        self.config = replace(config)
        self._rng = random.Random(seed)
        self.secret = secret if secret is not None else generate_secret(32, self._rng)
        self.verifier = verifier
        self.listen_q: "OrderedDict[FlowTuple, float]" = OrderedDict()
        self.accept_q: "OrderedDict[FlowTuple, Accept]" = OrderedDict()
        self.established: set = set()
        self.counters = Counters()
        self._hashes = HashCounter()
        self.puzzles_active = False
        self.puzzles_enabled = self.config.mode in (Mode.PUZZLES, Mode.PUZZLES_WITH_COOKIE_FALLBACK)
        self.cookies_enabled = self.config.mode in (Mode.COOKIES, Mode.PUZZLES_WITH_COOKIE_FALLBACK)
        self._last_now = float("-inf")

    # -- bookkeeping -------------------------------------------------------

    @property
    def params(self) -> PuzzleParams:
        return self.config.puzzle_params

    @property
    def hash_ops(self) -> int:
        return self._hashes.count

    def per_flow_entries(self) -> int:
        """Number of flows the server holds any state for."""
        return len(self.listen_q) + len(self.accept_q) + len(self.established)

    def holds(self, flow: FlowTuple) -> bool:
        return flow in self.listen_q or flow in self.accept_q or flow in self.established

    def listen_full(self) -> bool:
        return len(self.listen_q) >= self.config.backlog

    def accept_full(self) -> bool:
        return len(self.accept_q) >= self.config.accept_capacity

    def _clock(self, now: float) -> None:
        if now < self._last_now:
            raise ClockError(f"time went backwards: {now} < {self._last_now}")
        self._last_now = now

    def _refresh_active(self) -> None:
        n = len(self.listen_q)
        if n >= self.config.backlog:
            self.puzzles_active = True
        elif n < self.config.backlog / 2:
            self.puzzles_active = False

    def _sync_counters(self) -> None:
        self.counters.hash_ops = self._hashes.count

    # -- events --------------------------------------------------------------

    def on_syn(self, flow: FlowTuple, now: float) -> list:
        self._clock(now)
        c = self.counters
        c.syns += 1
        cfg = self.config
        out: list = []
        if flow in self.listen_q:
            # duplicate SYN: refresh the entry, no new slot
            self.listen_q.move_to_end(flow)
            self.listen_q[flow] = now
            c.synacks_plain += 1
            out.append(SendSynAckPlain(flow))
        elif self.puzzles_enabled and (self.puzzles_active or self.listen_full()
                                       or not cfg.puzzles_enabled_dynamically):
            out.append(self._challenge(flow, now))
        elif not self.listen_full() and (self.puzzles_enabled or not self.accept_full()):
            self.listen_q[flow] = now
            c.synacks_plain += 1
            out.append(SendSynAckPlain(flow))
        elif self.cookies_enabled and not self.accept_full():
            c.cookies_sent += 1
            out.append(SendSynAckCookie(flow, cookie_encode(self.secret, flow, now, self._hashes)))
        else:
            c.syns_dropped += 1
        self._refresh_active()
        self._sync_counters()
        return out

    def _challenge(self, flow: FlowTuple, now: float) -> SendSynAckChallenge:
        t = int(now)
        ch = derive_challenge(self.secret, t, flow, self.params, self._hashes)
        self.counters.challenges_sent += 1
        self.puzzles_active = True
        return SendSynAckChallenge(flow, ChallengeOption(self.params, ch.preimage, t))

    def on_ack(self, flow: FlowTuple, now: float, solution: Union[SolutionOption, bytes, None] = None,
               cookie_isn: Optional[int] = None) -> list:
        self._clock(now)
        try:
            return self._on_ack(flow, now, solution, cookie_isn)
        finally:
            self._refresh_active()
            self._sync_counters()

    def _on_ack(self, flow, now, solution, cookie_isn) -> list:
        c = self.counters
        if flow in self.accept_q or flow in self.established:
            return self._ignore(flow, "duplicate")
        if flow in self.listen_q:
            if self.accept_full():
                # entry stays half-open until it ages out
                return self._ignore(flow, "accept_full")
            del self.listen_q[flow]
            return [self._accept(Accept(flow))]
        if solution is not None:
            if isinstance(solution, (bytes, bytearray)):
                try:
                    solution = decode_solution(solution, self.params.k, self.params.l)
                except OptionError:
                    c.malformed += 1
                    return self._ignore(flow, "malformed")
            if self.accept_full():
                return self._ignore(flow, "accept_full")
            if solution.t is None:
                c.malformed += 1
                return self._ignore(flow, "malformed")
            result = self.verifier(self.secret, solution.t, flow, self.params, solution.solutions,
                                   now, self.config.expiry_s, rng=self._rng, counter=self._hashes)
            if result is VerifyResult.ACCEPT:
                c.puzzle_accepts += 1
                return [self._accept(Accept(flow, solution.mss, solution.wscale))]
            if result is VerifyResult.REJECT_EXPIRED:
                c.expired += 1
            else:
                c.verify_failures += 1
            return self._ignore(flow, result.value)
        if cookie_isn is not None and self.cookies_enabled:
            if self.accept_full():
                return self._ignore(flow, "accept_full")
            if cookie_validate(self.secret, flow, cookie_isn, now, self._hashes):
                c.cookie_accepts += 1
                return [self._accept(Accept(flow))]
            return self._ignore(flow, "bad_cookie")
        return self._ignore(flow, "unknown")

    def _accept(self, action: Accept) -> Accept:
        self.accept_q[action.flow] = action
        self.counters.accepts += 1
        return action

    def _ignore(self, flow: FlowTuple, reason: str) -> list:
        self.counters.acks_ignored += 1
        return [Ignore(flow, reason)]

    def on_data(self, flow: FlowTuple, now: float) -> list:
        self._clock(now)
        if flow in self.accept_q or flow in self.established:
            return []
        self.counters.rsts_sent += 1
        return [Rst(flow)]

    def tick(self, now: float) -> list:
        """Age out half-open entries and re-evaluate the puzzle controller."""
        self._clock(now)
        limit = self.config.synack_timeout_s
        q = self.listen_q
        # refreshed entries move to the back, so the front is always the oldest
        while q:
            flow, created = next(iter(q.items()))
            if now - created <= limit:
                break
            del q[flow]
            self.counters.evictions += 1
        self._refresh_active()
        return []

    # -- application side ----------------------------------------------------

    def pop_accept(self) -> Optional[Accept]:
        """The application's accept(): move the head connection to established."""
        if not self.accept_q:
            return None
        flow, action = self.accept_q.popitem(last=False)
        self.established.add(flow)
        return action

    def close(self, flow: FlowTuple) -> None:
        self.established.discard(flow)

    # -- runtime tunables -------------------------------------------------------

    def set_tunable(self, key: str, value) -> None:
        cfg = self.config
        p = cfg.puzzle_params
        if key == "puzzle.k":
            cfg.puzzle_params = PuzzleParams(int(value), p.m, p.l)
        elif key == "puzzle.m":
            cfg.puzzle_params = PuzzleParams(p.k, int(value), p.l)
        elif key == "puzzle.l":
            cfg.puzzle_params = PuzzleParams(p.k, p.m, int(value))
        elif key == "puzzle.expiry_s":
            if float(value) <= 0:
                raise ValueError("expiry must be positive")
            cfg.expiry_s = float(value)
        elif key == "puzzle.enabled":
            self.puzzles_enabled = _as_bool(value)
        elif key == "cookies.enabled":
            self.cookies_enabled = _as_bool(value)
        elif key == "backlog":
            if int(value) < 1:
                raise ValueError("backlog must be >= 1")
            cfg.backlog = int(value)
        elif key == "accept_capacity":
            if int(value) < 1:
                raise ValueError("accept_capacity must be >= 1")
            cfg.accept_capacity = int(value)
        else:
            raise KeyError(f"unknown tunable {key!r}; known: {', '.join(TUNABLES)}")

    def tunables(self) -> dict:
        p = self.config.puzzle_params
        return {"puzzle.k": p.k, "puzzle.m": p.m, "puzzle.l": p.l,
                "puzzle.expiry_s": self.config.expiry_s, "puzzle.enabled": self.puzzles_enabled,
                "cookies.enabled": self.cookies_enabled, "backlog": self.config.backlog,
                "accept_capacity": self.config.accept_capacity}

    def snapshot(self) -> dict:
        d = asdict(self.counters)
        d.update(listen_q=len(self.listen_q), accept_q=len(self.accept_q),
                 established=len(self.established), puzzles_active=self.puzzles_active)
        return d


def _as_bool(value) -> bool:
    if isinstance(value, str):
        return value.strip().lower() in ("1", "true", "yes", "on")
    return bool(value)
