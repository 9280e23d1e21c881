"""TCP option blocks carrying challenges (kind 0xFC) and solutions (kind 0xFD).

Challenge::

    FC | len | k | m | l | preimage (l/8 bytes) | [t, 4B] | NOP padding

Solution::

    FD | len | MSS (2B) | wscale | s_1 .. s_k (l/8 bytes each) | [t, 4B] | NOP padding

The length byte counts kind, length and payload but not the trailing NOPs.
The optional timestamp is signalled by the length alone.  Integers are
big-endian.  A padded block never exceeds the 40-byte TCP option budget.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional, Union

from .puzzle import PuzzleError, PuzzleParams

CHALLENGE_KIND = 0xFC
SOLUTION_KIND = 0xFD
NOP = 0x01
EOL = 0x00
MAX_OPTION_BYTES = 40
TS_BYTES = 4


class OptionError(ValueError):
    """Malformed option block."""


class OversizeError(OptionError):
    """Encoded block would not fit in the 40-byte TCP option area."""


@dataclass(frozen=True)
class ChallengeOption:
    params: PuzzleParams
    preimage: bytes
    t: Optional[int] = None


@dataclass(frozen=True)
class SolutionOption:
    mss: int
    wscale: int
    solutions: tuple
    t: Optional[int] = None


def _pad(block: bytes) -> bytes:
    return block + bytes([NOP]) * (-len(block) % 4)


def _finish(body: bytes) -> bytes:
    if len(body) > MAX_OPTION_BYTES:
        raise OversizeError(f"option block of {len(body)} bytes exceeds {MAX_OPTION_BYTES}")
    return _pad(body)


def encode_challenge(opt: ChallengeOption) -> bytes:
    p = opt.params
    if len(opt.preimage) != p.nbytes:
        raise OptionError(f"preimage must be {p.nbytes} bytes")
    length = 5 + p.nbytes + (TS_BYTES if opt.t is not None else 0)
    body = bytes([CHALLENGE_KIND, length & 0xFF, p.k, p.m, p.l]) + opt.preimage
    if opt.t is not None:
        body += struct.pack(">I", opt.t)
    return _finish(body)


def _split(block: bytes, kind: int) -> tuple[int, bytes]:
    if len(block) < 2:
        raise OptionError("truncated option block")
    if block[0] != kind:
        raise OptionError(f"wrong option kind 0x{block[0]:02X}, expected 0x{kind:02X}")
    length = block[1]
    if length < 2 or length > len(block):
        raise OptionError(f"length byte {length} inconsistent with {len(block)} available bytes")
    if any(b != NOP for b in block[length:]):
        raise OptionError("non-NOP bytes after option block")
    return length, block[:length]


def decode_challenge(block: bytes) -> ChallengeOption:
    length, body = _split(bytes(block), CHALLENGE_KIND)
    if length < 5:
        raise OptionError("challenge option shorter than its fixed header")
    k, m, l = body[2], body[3], body[4]
    if l == 0 or l % 8:
        raise OptionError(f"bit length l={l} is not a positive multiple of 8")
    base = 5 + l // 8
    if length == base:
        t = None
    elif length == base + TS_BYTES:
        t = struct.unpack(">I", body[base:])[0]
    else:
        raise OptionError(f"length {length} inconsistent with l={l}")
    try:
        params = PuzzleParams(k, m, l)
    except PuzzleError as exc:
        raise OptionError(str(exc)) from exc
    return ChallengeOption(params, body[5:base], t)


def encode_solution(opt: SolutionOption) -> bytes:
    if not 0 <= opt.mss <= 0xFFFF or not 0 <= opt.wscale <= 0xFF:
        raise OptionError("mss or wscale out of range")
    if not opt.solutions:
        raise OptionError("solution option needs at least one solution")
    width = len(opt.solutions[0])
    if width == 0 or any(len(s) != width for s in opt.solutions):
        raise OptionError("solutions must be non-empty and of equal length")
    payload = b"".join(opt.solutions)
    length = 5 + len(payload) + (TS_BYTES if opt.t is not None else 0)
    body = struct.pack(">BBHB", SOLUTION_KIND, length & 0xFF, opt.mss, opt.wscale) + payload
    if opt.t is not None:
        body += struct.pack(">I", opt.t)
    return _finish(body)


def decode_solution(block: bytes, k: int, l: int) -> SolutionOption:
    """Decode with ``(k, l)`` taken from the server's current puzzle settings."""
    length, body = _split(bytes(block), SOLUTION_KIND)
    nb = l // 8
    base = 5 + k * nb
    if length == base:
        t = None
    elif length == base + TS_BYTES:
        t = struct.unpack(">I", body[base:])[0]
    else:
        raise OptionError(f"length {length} inconsistent with k={k}, l={l}")
    mss, wscale = struct.unpack(">HB", body[2:5])
    sols = tuple(body[5 + i * nb: 5 + (i + 1) * nb] for i in range(k))
    return SolutionOption(mss, wscale, sols, t)


def iter_options(area: bytes) -> Iterator[tuple[int, bytes]]:
    """Walk a TCP options area yielding ``(kind, raw block)``; NOPs are skipped."""
    i = 0
    while i < len(area):
        kind = area[i]
        if kind == EOL:
            return
        if kind == NOP:
            i += 1
            continue
        if i + 1 >= len(area) or area[i + 1] < 2 or i + area[i + 1] > len(area):
            raise OptionError(f"bad option length at offset {i}")
        length = area[i + 1]
        yield kind, area[i:i + length]
        i += length


# Golden-vector fixture files: one block per line, "<name> <hex bytes>", '#' comments.

def read_hex_blocks(path: Union[str, Path]) -> dict[str, bytes]:
    blocks = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        name, _, hexpart = line.partition(" ")
        blocks[name] = bytes.fromhex(hexpart)
    return blocks


def write_hex_blocks(path: Union[str, Path], blocks: dict[str, bytes]) -> None:
    lines = [f"{name} {data.hex(' ').upper()}" for name, data in blocks.items()]
    Path(path).write_text("\n".join(lines) + "\n")
