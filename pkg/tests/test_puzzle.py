import random
import struct
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tcpuzzle.puzzle import (Challenge, FlowTuple, HashCounter, PuzzleError, PuzzleParams,
                             SolveBudgetExhausted, VerifyResult, check_sub_solution,
                             derive_challenge, expected_costs, generate_secret, sampled_solve_trials,
                             solve, verify)

SECRET = bytes(range(16))
FLOW = FlowTuple.parse("10.0.0.1:1234", "10.0.0.2:80", 0)


def prefix(data: bytes, m: int) -> int:
    return int.from_bytes(data, "big") >> (8 * len(data) - m)


class TestParams:
    def test_rejects_bad_values(self):
        for k, m, l in [(0, 5, 64), (256, 5, 64), (2, 0, 64), (2, 64, 64), (2, 5, 60), (2, 5, 0)]:
            with pytest.raises(PuzzleError):
                PuzzleParams(k, m, l)

    def test_expected_costs(self):
        assert expected_costs(PuzzleParams(2, 17)) == (131072, 1, 2)
        assert expected_costs(PuzzleParams(1, 4)) == (8, 1, Fraction(3, 2))
        assert expected_costs(PuzzleParams(4, 16)) == (131072, 1, 3)


class TestDerive:
    def test_golden_preimage_matches_reference(self, sha_oracle):
        ch = derive_challenge(SECRET, 1_000_000, FLOW, PuzzleParams(2, 17))
        msg = (SECRET + struct.pack(">I", 1_000_000) + bytes([10, 0, 0, 1, 10, 0, 0, 2])
               + struct.pack(">HHI", 1234, 80, 0))
        assert ch.preimage == sha_oracle(msg)[:8]
        assert ch.preimage.hex() == "458374bdca0cfaac"

    def test_deterministic(self):
        p = PuzzleParams(2, 10)
        assert derive_challenge(SECRET, 5, FLOW, p) == derive_challenge(SECRET, 5, FLOW, p)

    def test_src_port_changes_preimage(self, sha_oracle):
        other = FLOW._replace(src_port=1235)
        a = derive_challenge(SECRET, 5, FLOW, PuzzleParams(2, 10))
        b = derive_challenge(SECRET, 5, other, PuzzleParams(2, 10))
        assert a.preimage != b.preimage
        msg = SECRET + struct.pack(">I", 5) + other.pack()
        assert b.preimage == sha_oracle(msg)[:8]

    def test_short_secret_rejected(self):
        with pytest.raises(PuzzleError):
            derive_challenge(b"short", 0, FLOW, PuzzleParams(1, 1))

    def test_counts_one_hash(self):
        c = HashCounter()
        derive_challenge(SECRET, 0, FLOW, PuzzleParams(1, 1), c)
        assert c.count == 1


class TestSubSolution:
    def test_solution_checks_against_oracle(self, sha_oracle):
        ch = derive_challenge(SECRET, 7, FLOW, PuzzleParams(2, 12))
        sols = solve(ch, 3)
        for i, s in enumerate(sols, 1):
            assert check_sub_solution(ch, i, s)
            digest = sha_oracle(ch.preimage + struct.pack(">I", i) + s)
            assert prefix(digest[:2], 12) == prefix(ch.preimage[:2], 12)

    def test_flipped_input_fails(self, sha_oracle):
        # m = l - 1: a perturbed candidate matching by chance has probability 2^-63
        ch = derive_challenge(SECRET, 7, FLOW, PuzzleParams(1, 8))
        (s,) = solve(ch, 11)
        bad = bytes([s[0] ^ 0x80]) + s[1:]
        hard = Challenge(ch.preimage, 7, PuzzleParams(1, 63))
        assert not check_sub_solution(hard, 1, bad)
        digest = sha_oracle(ch.preimage + struct.pack(">I", 1) + bad)
        assert prefix(digest[:8], 63) != prefix(ch.preimage, 63)

    def test_wrong_length_and_index(self):
        ch = derive_challenge(SECRET, 0, FLOW, PuzzleParams(2, 4))
        with pytest.raises(PuzzleError):
            check_sub_solution(ch, 1, b"\x00" * 7)
        with pytest.raises(PuzzleError):
            check_sub_solution(ch, 3, b"\x00" * 8)


class TestSolve:
    def test_easiest_puzzle(self):
        c = HashCounter()
        ch = derive_challenge(SECRET, 0, FLOW, PuzzleParams(1, 1))
        sols = solve(ch, 0, c)
        assert len(sols) == 1 and c.count >= 1

    def test_deterministic_in_seed(self):
        ch = derive_challenge(SECRET, 0, FLOW, PuzzleParams(2, 8))
        c1, c2 = HashCounter(), HashCounter()
        assert solve(ch, 42, c1) == solve(ch, 42, c2)
        assert c1.count == c2.count

    def test_budget(self):
        ch = derive_challenge(SECRET, 0, FLOW, PuzzleParams(2, 20))
        c = HashCounter()
        with pytest.raises(SolveBudgetExhausted) as exc:
            solve(ch, 0, c, max_hashes=100)
        assert exc.value.trials == 100 == c.count

    def test_counter_equals_trials_mean(self):
        # uniform candidates: each sub-solution costs 2^m trials on average
        p = PuzzleParams(2, 6)
        ch = derive_challenge(SECRET, 0, FLOW, p)
        counts = []
        for seed in range(400):
            c = HashCounter()
            solve(ch, seed, c)
            counts.append(c.count)
        assert abs(np.mean(counts) / (p.k * 2 ** p.m) - 1) < 0.1

    def test_sampled_trials_same_law(self):
        p = PuzzleParams(2, 10)
        rng = np.random.default_rng(0)
        draws = [sampled_solve_trials(p, rng) for _ in range(20000)]
        assert abs(np.mean(draws) / (p.k * 2 ** p.m) - 1) < 0.03
        assert min(draws) >= p.k


class TestVerify:
    p = PuzzleParams(2, 10)

    def _solved(self, t=100):
        return solve(derive_challenge(SECRET, t, FLOW, self.p), 1)

    def test_round_trip(self):
        assert verify(SECRET, 100, FLOW, self.p, self._solved(), 100, 60) is VerifyResult.ACCEPT

    def test_expiry_boundary_inclusive(self):
        sols = self._solved()
        assert verify(SECRET, 100, FLOW, self.p, sols, 160, 60) is VerifyResult.ACCEPT
        c = HashCounter()
        assert verify(SECRET, 100, FLOW, self.p, sols, 161, 60, counter=c) is VerifyResult.REJECT_EXPIRED
        assert c.count == 0

    def test_future_timestamp(self):
        assert verify(SECRET, 100, FLOW, self.p, self._solved(), 99, 60) is VerifyResult.REJECT_INVALID

    def test_flipped_last_bit(self, sha_oracle):
        sols = list(self._solved())
        sols[1] = sols[1][:-1] + bytes([sols[1][-1] ^ 1])
        pre = derive_challenge(SECRET, 100, FLOW, self.p).preimage
        digest = sha_oracle(pre + struct.pack(">I", 2) + sols[1])
        assert prefix(digest[:2], 10) != prefix(pre[:2], 10)
        assert verify(SECRET, 100, FLOW, self.p, sols, 100, 60) is VerifyResult.REJECT_INVALID

    def test_other_flow_rejected(self):
        other = FLOW._replace(isn=1)
        assert verify(SECRET, 100, other, self.p, self._solved(), 100, 60) is VerifyResult.REJECT_INVALID

    def test_malformed(self):
        sols = self._solved()
        assert verify(SECRET, 100, FLOW, self.p, sols[:1], 100, 60) is VerifyResult.REJECT_INVALID
        assert verify(SECRET, 100, FLOW, self.p, (sols[0], b"x"), 100, 60) is VerifyResult.REJECT_INVALID

    @pytest.mark.parametrize("k", [6, 8, 16])
    def test_early_stop_mean(self, k):
        p = PuzzleParams(k, 4)
        ch = derive_challenge(SECRET, 0, FLOW, p)
        good = solve(ch, 5)
        rng = random.Random(0)
        checks = []
        for _ in range(2000):
            sols = list(good)
            j = rng.randrange(k)
            while True:
                cand = rng.randbytes(8)
                if not check_sub_solution(ch, j + 1, cand):
                    break
            sols[j] = cand
            c = HashCounter()
            assert verify(SECRET, 0, FLOW, p, sols, 0, 60, rng=rng, counter=c) is VerifyResult.REJECT_INVALID
            checks.append(c.count - 1)
        assert 0.4 * k <= np.mean(checks) <= 0.6 * k

    def test_pure_without_rng(self):
        sols = self._solved()
        c1, c2 = HashCounter(), HashCounter()
        verify(SECRET, 100, FLOW, self.p, sols, 100, 60, counter=c1)
        verify(SECRET, 100, FLOW, self.p, sols, 100, 60, counter=c2)
        assert c1.count == c2.count == 1 + self.p.k


@given(k=st.integers(1, 3), m=st.integers(1, 8), seed=st.integers(0, 2**32), t=st.integers(0, 2**32 - 1))
def test_round_trip_property(k, m, seed, t):
    p = PuzzleParams(k, m)
    ch = derive_challenge(SECRET, t, FLOW, p)
    sols = solve(ch, seed)
    assert verify(SECRET, t, FLOW, p, sols, t, 60) is VerifyResult.ACCEPT


def test_generate_secret():
    assert len(generate_secret()) == 32
    assert generate_secret(16, random.Random(1)) == generate_secret(16, random.Random(1))
    with pytest.raises(PuzzleError):
        generate_secret(8)


def test_flow_parse_and_pack():
    assert str(FLOW) == "10.0.0.1:1234->10.0.0.2:80/isn=0"
    assert FlowTuple.unpack(FLOW.pack()) == FLOW
