"""Hash-prefix client puzzles over SHA-256.

A server derives a pre-image ``P`` from its secret, a timestamp and the
connection's flow tuple.  A client must return ``k`` strings ``s_i`` of ``l``
bits such that the first ``m`` bits of ``sha256(P || i || s_i)`` equal the
first ``m`` bits of ``P``.  The server re-derives ``P`` on receipt, so it keeps
no per-challenge state.

Every SHA-256 invocation made by this module can be observed through a
:class:`HashCounter`.
"""

from __future__ import annotations

import enum
import hashlib
import ipaddress
import os
import random
import struct
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple, Optional, Sequence

DEFAULT_L = 64
MIN_SECRET_BYTES = 16

SolutionSet = tuple  # tuple[bytes, ...], one l-bit string per sub-puzzle


class PuzzleError(ValueError):
    """Invalid puzzle parameters or malformed puzzle data."""


class SolveBudgetExhausted(RuntimeError):
    """Raised by :func:`solve` when ``max_hashes`` runs out before all k solutions are found."""

    def __init__(self, trials: int):
        super().__init__(f"hash budget exhausted after {trials} trials")
        self.trials = trials


class HashCounter:
    """Tally of SHA-256 invocations.  Not thread-safe; give each worker its own."""

    __slots__ = ("count",)

    def __init__(self) -> None:
        self.count = 0

    def add(self, n: int = 1) -> None:
        self.count += n

    def __repr__(self) -> str:
        return f"HashCounter({self.count})"


@dataclass(frozen=True)
class PuzzleParams:
    k: int
    m: int
    l: int = DEFAULT_L

    def __post_init__(self) -> None:
        if not (1 <= self.k <= 255):
            raise PuzzleError(f"k must be in [1, 255], got {self.k}")
        if self.l <= 0 or self.l % 8 or self.l > 255:
            raise PuzzleError(f"l must be a positive multiple of 8 no larger than 255, got {self.l}")
        if not (1 <= self.m < self.l):
            raise PuzzleError(f"m must satisfy 1 <= m < l, got m={self.m}, l={self.l}")

    @property
    def nbytes(self) -> int:
        return self.l // 8

    @property
    def expected_solve_hashes(self) -> int:
        return self.k * 2 ** (self.m - 1)


class FlowTuple(NamedTuple):
    """Connection identity; addresses are 32-bit ints, all fields hashed big-endian."""

    src_ip: int
    dst_ip: int
    src_port: int
    dst_port: int
    isn: int = 0

    @classmethod
    def parse(cls, src: str, dst: str, isn: int = 0) -> "FlowTuple":
        """Build from ``"a.b.c.d:port"`` endpoint strings."""
        sip, sport = src.rsplit(":", 1)
        dip, dport = dst.rsplit(":", 1)
        return cls(int(ipaddress.IPv4Address(sip)), int(ipaddress.IPv4Address(dip)),
                   int(sport), int(dport), isn)

    def pack(self) -> bytes:
        return _FLOW.pack(*self)

    @classmethod
    def unpack(cls, data: bytes) -> "FlowTuple":
        return cls(*_FLOW.unpack(data))

    def __str__(self) -> str:
        return (f"{ipaddress.IPv4Address(self.src_ip)}:{self.src_port}->"
                f"{ipaddress.IPv4Address(self.dst_ip)}:{self.dst_port}/isn={self.isn}")


_FLOW = struct.Struct(">IIHHI")
FLOW_BYTES = _FLOW.size


@dataclass(frozen=True)
class Challenge:
    preimage: bytes
    t: int
    params: PuzzleParams


class VerifyResult(enum.Enum):
    ACCEPT = "accept"
    REJECT_EXPIRED = "reject_expired"
    REJECT_INVALID = "reject_invalid"


def generate_secret(nbytes: int = 32, rng: Optional[random.Random] = None) -> bytes:
    """Fresh server secret; pass ``rng`` for reproducible simulations."""
    if nbytes < MIN_SECRET_BYTES:
        raise PuzzleError(f"secret must be at least {MIN_SECRET_BYTES} bytes")
    if rng is None:
        return os.urandom(nbytes)
    return rng.randbytes(nbytes)


def preimage_input(secret: bytes, t: int, flow: FlowTuple) -> bytes:
    """Byte string hashed to form the pre-image: secret, t (4B), then the flow fields."""
    return secret + struct.pack(">I", t & 0xFFFFFFFF) + _FLOW.pack(*flow)


def derive_challenge(secret: bytes, t: int, flow: FlowTuple, params: PuzzleParams,
                     counter: Optional[HashCounter] = None) -> Challenge:
    if len(secret) < MIN_SECRET_BYTES:
        raise PuzzleError("server secret too short")
    if not isinstance(params, PuzzleParams):
        raise PuzzleError("params must be PuzzleParams")
    digest = hashlib.sha256(preimage_input(secret, t, flow)).digest()
    if counter is not None:
        counter.add()
    return Challenge(digest[:params.nbytes], t, params)


def _prefix_bits(data: bytes, m: int) -> int:
    nb = (m + 7) // 8
    return int.from_bytes(data[:nb], "big") >> (nb * 8 - m)


def _index_bytes(i: int) -> bytes:
    return struct.pack(">I", i)


def check_sub_solution(challenge: Challenge, index: int, candidate: bytes,
                       counter: Optional[HashCounter] = None) -> bool:
    """True iff the first m bits of sha256(P || i || candidate) match those of P."""
    params = challenge.params
    if len(candidate) != params.nbytes:
        raise PuzzleError(f"candidate must be {params.nbytes} bytes, got {len(candidate)}")
    if not 1 <= index <= params.k:
        raise PuzzleError(f"sub-solution index {index} outside 1..{params.k}")
    digest = hashlib.sha256(challenge.preimage + _index_bytes(index) + candidate).digest()
    if counter is not None:
        counter.add()
    return _prefix_bits(digest, params.m) == _prefix_bits(challenge.preimage, params.m)


def solve(challenge: Challenge, rng_seed: int, counter: Optional[HashCounter] = None,
          max_hashes: Optional[int] = None) -> SolutionSet:
    """Brute-force the k sub-solutions with uniformly random candidates.

    Candidates come from ``random.Random(rng_seed)`` so the result (and the
    number of trials, observable via ``counter``) is a function of the inputs.
    Each trial succeeds with probability 2**-m.
    """
    params = challenge.params
    rng = random.Random(rng_seed)
    m, nb = params.m, params.nbytes
    pbytes = (m + 7) // 8
    shift = pbytes * 8 - m
    target = _prefix_bits(challenge.preimage, m)
    sha = hashlib.sha256
    from_bytes = int.from_bytes
    randbytes = rng.randbytes

    trials = 0
    sols = []
    try:
        for i in range(1, params.k + 1):
            base = sha(challenge.preimage + _index_bytes(i))
            while True:
                if max_hashes is not None and trials >= max_hashes:
                    raise SolveBudgetExhausted(trials)
                cand = randbytes(nb)
                h = base.copy()
                h.update(cand)
                trials += 1
                if from_bytes(h.digest()[:pbytes], "big") >> shift == target:
                    sols.append(cand)
                    break
    finally:
        if counter is not None:
            counter.add(trials)
    return tuple(sols)


def verify(secret: bytes, t: int, flow: FlowTuple, params: PuzzleParams, sols: Sequence[bytes],
           now: float, expiry_s: float, *, rng: Optional[random.Random] = None,
           counter: Optional[HashCounter] = None) -> VerifyResult:
    """Stateless check of a solution set against a re-derived challenge.

    Expiry is tested first (no hashing).  Sub-solutions are then checked in a
    random order drawn from ``rng`` and checking stops at the first failure.
    ``rng`` defaults to ``random.Random(0)`` to keep the call a pure function.
    """
    if now < t:
        return VerifyResult.REJECT_INVALID
    if now - t > expiry_s:
        return VerifyResult.REJECT_EXPIRED
    if len(sols) != params.k or any(len(s) != params.nbytes for s in sols):
        return VerifyResult.REJECT_INVALID
    challenge = derive_challenge(secret, t, flow, params, counter)
    order = list(range(1, params.k + 1))
    (rng or random.Random(0)).shuffle(order)
    for i in order:
        if not check_sub_solution(challenge, i, sols[i - 1], counter):
            return VerifyResult.REJECT_INVALID
    return VerifyResult.ACCEPT


def expected_costs(params: PuzzleParams) -> tuple[Fraction, Fraction, Fraction]:
    """(solve, generate, verify) hash costs of the game model: k*2^(m-1), 1, 1 + k/2."""
    return (Fraction(params.k * 2 ** (params.m - 1)), Fraction(1), 1 + Fraction(params.k, 2))


def sampled_solve_trials(params: PuzzleParams, rng) -> int:
    """Draw a trial count with the same law as :func:`solve` (sum of k geometric(2^-m)).

    ``rng`` is a ``numpy.random.Generator``.
    """
    return int(rng.geometric(2.0 ** -params.m, size=params.k).sum())
