"""The handshake over UDP datagrams.

Frame layout (big-endian)::

    type (1B) | src_ip (4) | dst_ip (4) | src_port (2) | dst_port (2) | isn (4) | ack_no (4) | options

``type`` is SYN=1, SYNACK=2, ACK=3, DATA=4, RST=5.  ``options`` carries a raw
challenge or solution block (or nothing).  ``ack_no`` carries the cookie on
cookie SYN-ACKs and their ACKs and is zero otherwise.

On accepting a connection the server sends a DATA greeting, so a client can
tell an accepted handshake from an ignored one without sending data.
A separate admin socket answers ``counters`` and ``set <key> <value>``
requests with JSON.
"""

from __future__ import annotations

import enum
import json
import logging
import random
import socket
import struct
import threading
import time
from dataclasses import dataclass
from typing import Optional

from .handshake import (Accept, HandshakeEngine, Ignore, Rst, SendSynAckChallenge,
                        SendSynAckCookie, SendSynAckPlain, ServerConfig)
from .puzzle import FLOW_BYTES, Challenge, FlowTuple, HashCounter, solve
from .wire import OptionError, SolutionOption, decode_challenge, encode_challenge, encode_solution

log = logging.getLogger(__name__)

HEADER = struct.Struct(">B16sI")
MAX_FRAME = 2048
TICK_S = 0.5
POLL_S = 0.2
GREETING = b"hello"
CLIENT_MSS = 1460
CLIENT_WSCALE = 7


class FrameType(enum.IntEnum):
    SYN = 1
    SYNACK = 2
    ACK = 3
    DATA = 4
    RST = 5


class FrameError(ValueError):
    """Datagram is not a valid frame."""


@dataclass(frozen=True)
class Frame:
    type: FrameType
    flow: FlowTuple
    ack_no: int = 0
    options: bytes = b""

    def pack(self) -> bytes:
        return HEADER.pack(self.type, self.flow.pack(), self.ack_no) + self.options

    @classmethod
    def unpack(cls, data: bytes) -> "Frame":
        if len(data) < HEADER.size:
            raise FrameError(f"frame of {len(data)} bytes shorter than header")
        kind, flow, ack_no = HEADER.unpack_from(data)
        try:
            kind = FrameType(kind)
        except ValueError:
            raise FrameError(f"unknown frame type {kind}") from None
        return cls(kind, FlowTuple.unpack(flow), ack_no, bytes(data[HEADER.size:]))


assert HEADER.size == 1 + FLOW_BYTES + 4


class PuzzleServer:
    """One engine behind a lock, fed by a UDP socket."""

    def __init__(self, bind_addr: tuple, config: ServerConfig, secret: Optional[bytes] = None,
                 seed: Optional[int] = None, admin_addr: tuple = ("127.0.0.1", 0)):
        self.engine = HandshakeEngine(config, secret,
                                      seed if seed is not None else random.getrandbits(64))
        self.lock = threading.Lock()
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self.sock.bind(bind_addr)
        self.admin = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self.admin.bind(admin_addr)
        for sock in (self.sock, self.admin):
            sock.settimeout(POLL_S)  # lets the loops notice close()
        self.bad_frames = 0
        self._stop = threading.Event()
        self._start = time.time()
        self._last = 0.0
        self._threads = [threading.Thread(target=f, daemon=True)
                         for f in (self._rx_loop, self._admin_loop, self._tick_loop)]

    @property
    def address(self) -> tuple:
        return self.sock.getsockname()

    @property
    def admin_address(self) -> tuple:
        return self.admin.getsockname()

    def start(self) -> "PuzzleServer":
        if not self._threads[0].is_alive():
            for t in self._threads:
                t.start()
        return self

    def close(self) -> None:
        self._stop.set()
        for t in self._threads:
            if t.is_alive():
                t.join(timeout=2)
        self.sock.close()
        self.admin.close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.close()

    def _now(self) -> float:
        # wall clock, clamped so the engine never sees time go backwards
        self._last = max(self._last, time.time())
        return self._last

    def _rx_loop(self) -> None:
        while not self._stop.is_set():
            try:
                data, peer = self.sock.recvfrom(MAX_FRAME)
            except socket.timeout:
                continue
            except OSError:
                return
            try:
                frame = Frame.unpack(data)
            except FrameError:
                with self.lock:
                    self.bad_frames += 1
                continue
            with self.lock:
                replies = self._handle(frame)
            for reply in replies:
                self._send(reply, peer)

    def _handle(self, frame: Frame) -> list:
        eng, now = self.engine, self._now()
        if frame.type is FrameType.SYN:
            actions = eng.on_syn(frame.flow, now)
        elif frame.type is FrameType.ACK:
            actions = eng.on_ack(frame.flow, now, frame.options or None,
                                 frame.ack_no if not frame.options and frame.ack_no else None)
        elif frame.type is FrameType.DATA:
            actions = eng.on_data(frame.flow, now)
            if not actions:
                # one request per connection: answer, then close
                eng.close(frame.flow)
                return [Frame(FrameType.DATA, frame.flow, 0, frame.options)]
        else:
            self.bad_frames += 1
            return []
        out = []
        for act in actions:
            if isinstance(act, SendSynAckPlain):
                out.append(Frame(FrameType.SYNACK, act.flow))
            elif isinstance(act, SendSynAckChallenge):
                out.append(Frame(FrameType.SYNACK, act.flow, 0, encode_challenge(act.option)))
            elif isinstance(act, SendSynAckCookie):
                out.append(Frame(FrameType.SYNACK, act.flow, act.isn))
            elif isinstance(act, Accept):
                # the application accepts at once and greets
                eng.pop_accept()
                out.append(Frame(FrameType.DATA, act.flow, 0, GREETING))
            elif isinstance(act, Rst):
                out.append(Frame(FrameType.RST, act.flow))
            elif isinstance(act, Ignore):
                log.debug("ignored %s: %s", act.flow, act.reason)
        return out

    def _send(self, frame: Frame, peer) -> None:
        try:
            self.sock.sendto(frame.pack(), peer)
        except OSError as exc:
            log.warning("send to %s failed: %s", peer, exc)

    def _tick_loop(self) -> None:
        while not self._stop.wait(TICK_S):
            with self.lock:
                self.engine.tick(self._now())

    def _admin_loop(self) -> None:
        while not self._stop.is_set():
            try:
                data, peer = self.admin.recvfrom(MAX_FRAME)
            except socket.timeout:
                continue
            except OSError:
                return
            reply = self._admin(data.decode(errors="replace").split())
            try:
                self.admin.sendto(json.dumps(reply).encode(), peer)
            except OSError:
                pass

    def _admin(self, words: list) -> dict:
        with self.lock:
            eng = self.engine
            if words == ["counters"]:
                snap = eng.snapshot()
                snap.update(per_flow_entries=eng.per_flow_entries(), bad_frames=self.bad_frames,
                            tunables=eng.tunables())
                return snap
            if len(words) == 3 and words[0] == "set":
                try:
                    eng.set_tunable(words[1], words[2])
                except (KeyError, ValueError) as exc:
                    return {"error": str(exc)}
                return {"ok": True, "tunables": eng.tunables()}
        return {"error": "expected 'counters' or 'set <key> <value>'"}


def serve(bind_addr: tuple, config: ServerConfig, **kwargs) -> PuzzleServer:
    """Bind and start a server; call ``close()`` (or use it as a context manager) to stop."""
    return PuzzleServer(bind_addr, config, **kwargs).start()


def admin_request(admin_addr: tuple, request: str, timeout_s: float = 2.0) -> dict:
    with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as s:
        s.settimeout(timeout_s)
        s.sendto(request.encode(), admin_addr)
        data, _ = s.recvfrom(65536)
    return json.loads(data)


class Outcome(str, enum.Enum):
    ACCEPTED = "accepted"
    IGNORED = "ignored"
    RST = "rst"
    TIMEOUT = "timeout"


@dataclass
class ConnectResult:
    outcome: Outcome
    elapsed_s: float
    challenged: bool = False
    hashes: int = 0


def connect(server_addr: tuple, strategy: str = "solve", timeout_s: float = 5.0, *,
            send_data: bool = True, seed: Optional[int] = None, tamper: bool = False,
            greeting_wait_s: float = 0.5, syn_retry_s: float = 1.0) -> ConnectResult:
    """Run one handshake against ``server_addr``.

    After the final ACK the client waits ``greeting_wait_s`` for the server's
    greeting.  Without one it either sends data (and expects a RST) or, with
    ``send_data=False``, reports the ACK as ignored.
    """
    if strategy not in ("solve", "no_solve"):
        raise ValueError("strategy must be 'solve' or 'no_solve'")
    rng = random.Random(seed)
    start = time.monotonic()
    deadline = start + timeout_s
    with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as s:
        s.connect(server_addr)
        lip, lport = s.getsockname()
        flow = FlowTuple(int.from_bytes(socket.inet_aton(lip), "big"),
                         int.from_bytes(socket.inet_aton(s.getpeername()[0]), "big"),
                         lport, server_addr[1], rng.getrandbits(32))

        def elapsed():
            return time.monotonic() - start

        def recv(until: float, *types) -> Optional[Frame]:
            while True:
                left = until - time.monotonic()
                if left <= 0:
                    return None
                s.settimeout(left)
                try:
                    frame = Frame.unpack(s.recv(MAX_FRAME))
                except socket.timeout:
                    return None
                except (FrameError, ConnectionRefusedError):
                    continue
                if frame.flow == flow and frame.type in types:
                    return frame

        synack = None
        while synack is None and time.monotonic() < deadline:
            s.send(Frame(FrameType.SYN, flow).pack())
            synack = recv(min(deadline, time.monotonic() + syn_retry_s), FrameType.SYNACK)
        if synack is None:
            return ConnectResult(Outcome.TIMEOUT, elapsed())

        challenged, hashes = False, 0
        ack = Frame(FrameType.ACK, flow, synack.ack_no)
        if synack.options:
            challenged = True
            try:
                ch = decode_challenge(synack.options)
            except OptionError:
                return ConnectResult(Outcome.IGNORED, elapsed(), True)
            if strategy == "solve":
                counter = HashCounter()
                sols = solve(Challenge(ch.preimage, ch.t, ch.params), rng.getrandbits(63), counter)
                hashes = counter.count
                if tamper:
                    sols = (bytes([sols[0][0] ^ 1]) + sols[0][1:],) + sols[1:]
                opt = SolutionOption(CLIENT_MSS, CLIENT_WSCALE, sols, ch.t)
                ack = Frame(FrameType.ACK, flow, 0, encode_solution(opt))
            else:
                ack = Frame(FrameType.ACK, flow)
        s.send(ack.pack())
        wait = min(deadline, time.monotonic() + greeting_wait_s)
        if recv(wait, FrameType.DATA) is not None:
            return ConnectResult(Outcome.ACCEPTED, elapsed(), challenged, hashes)
        if not send_data:
            return ConnectResult(Outcome.IGNORED, elapsed(), challenged, hashes)
        s.send(Frame(FrameType.DATA, flow, 0, b"request").pack())
        reply = recv(deadline, FrameType.DATA, FrameType.RST)
        if reply is None:
            return ConnectResult(Outcome.TIMEOUT, elapsed(), challenged, hashes)
        outcome = Outcome.RST if reply.type is FrameType.RST else Outcome.ACCEPTED
        return ConnectResult(outcome, elapsed(), challenged, hashes)


def flood_syns(server_addr: tuple, count: int, seed: int = 0) -> None:
    """Send ``count`` SYNs from made-up flows that never complete (fills the listen queue)."""
    rng = random.Random(seed)
    with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as s:
        for _ in range(count):
            flow = FlowTuple(0x0B000000 | rng.getrandbits(24), 0x7F000001,
                             1024 + rng.randrange(64512), server_addr[1], rng.getrandbits(32))
            s.sendto(Frame(FrameType.SYN, flow).pack(), server_addr)
