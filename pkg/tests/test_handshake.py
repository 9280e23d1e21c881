import pytest
from hypothesis import given, strategies as st

from tcpuzzle.handshake import (Accept, ClockError, HandshakeEngine, Ignore, Mode, Rst,
                                SendSynAckChallenge, SendSynAckCookie, SendSynAckPlain,
                                ServerConfig, cookie_encode, cookie_validate)
from tcpuzzle.puzzle import Challenge, FlowTuple, PuzzleParams, solve
from tcpuzzle.wire import SolutionOption, encode_solution

SECRET = bytes(range(32))
P = PuzzleParams(1, 4)


def flow(i: int) -> FlowTuple:
    return FlowTuple(0x0A000000 + i, 0x0A0000FE, 1024 + i % 60000, 80, i)


def engine(**kw) -> HandshakeEngine:
    cfg = dict(backlog=4, accept_capacity=2, puzzle_params=P, expiry_s=10, synack_timeout_s=30)
    cfg.update(kw)
    return HandshakeEngine(ServerConfig(**cfg), secret=SECRET, seed=1)


def fill_listen(eng, n=None, now=0.0):
    for i in range(n if n is not None else eng.config.backlog):
        eng.on_syn(flow(1000 + i), now)


def answer(action: SendSynAckChallenge, seed=0, t=None) -> SolutionOption:
    opt = action.option
    sols = solve(Challenge(opt.preimage, opt.t, opt.params), seed)
    return SolutionOption(1460, 7, sols, opt.t if t is None else t)


class TestSyn:
    def test_plain_when_room(self):
        eng = engine()
        assert eng.on_syn(flow(1), 0) == [SendSynAckPlain(flow(1))]
        assert len(eng.listen_q) == 1

    def test_challenge_when_full(self):
        eng = engine()
        fill_listen(eng)
        before = eng.per_flow_entries()
        (act,) = eng.on_syn(flow(1), 0)
        assert isinstance(act, SendSynAckChallenge)
        assert act.option.t == 0 and act.option.params == P
        assert eng.per_flow_entries() == before

    def test_challenge_even_if_accept_full(self):
        eng = engine()
        for i in range(2):
            eng.on_syn(flow(2000 + i), 0)
            eng.on_ack(flow(2000 + i), 0)
        fill_listen(eng)
        assert eng.accept_full() and eng.listen_full()
        assert isinstance(eng.on_syn(flow(1), 0)[0], SendSynAckChallenge)

    def test_duplicate_refreshes(self):
        eng = engine()
        eng.on_syn(flow(1), 0)
        eng.on_syn(flow(1), 5)
        assert len(eng.listen_q) == 1 and eng.listen_q[flow(1)] == 5

    def test_off_mode_drops_when_full(self):
        eng = engine(mode=Mode.OFF)
        fill_listen(eng)
        assert eng.on_syn(flow(1), 0) == []
        assert eng.counters.syns_dropped == 1

    def test_cookie_mode(self):
        eng = engine(mode=Mode.COOKIES)
        fill_listen(eng)
        (act,) = eng.on_syn(flow(1), 0)
        assert isinstance(act, SendSynAckCookie)
        assert eng.on_ack(flow(1), 1, cookie_isn=act.isn) == [Accept(flow(1))]
        assert eng.counters.cookie_accepts == 1

    def test_hysteresis(self):
        eng = engine()
        fill_listen(eng)
        assert eng.puzzles_active
        eng.on_ack(flow(1000), 0)
        assert eng.puzzles_active  # 3 of 4, still above half
        eng.on_ack(flow(1001), 0)
        eng.pop_accept()
        eng.on_ack(flow(1002), 0)
        assert len(eng.listen_q) == 1 and not eng.puzzles_active


class TestAck:
    def _challenged(self, eng, f=flow(1), now=0):
        fill_listen(eng, now=now)
        (act,) = eng.on_syn(f, now)
        return act

    def test_valid_solution_accepted(self):
        eng = engine()
        act = self._challenged(eng)
        before = eng.per_flow_entries()
        (res,) = eng.on_ack(flow(1), 1, answer(act))
        assert res == Accept(flow(1), 1460, 7)
        assert eng.per_flow_entries() == before + 1

    def test_bytes_solution(self):
        eng = engine()
        act = self._challenged(eng)
        assert isinstance(eng.on_ack(flow(1), 1, encode_solution(answer(act)))[0], Accept)

    def test_full_accept_ignores_without_hashing(self):
        eng = engine()
        act = self._challenged(eng)
        for i in range(2):
            eng.on_ack(flow(1000 + i), 0)
        hashes = eng.hash_ops
        assert eng.on_ack(flow(1), 1, answer(act)) == [Ignore(flow(1), "accept_full")]
        assert eng.hash_ops == hashes

    def test_expired(self):
        eng = engine()
        act = self._challenged(eng)
        assert eng.on_ack(flow(1), 11, answer(act)) == [Ignore(flow(1), "reject_expired")]

    def test_expiry_uses_fractional_clock(self):
        eng = engine()
        act = self._challenged(eng)
        assert eng.on_ack(flow(1), 10.5, answer(act)) == [Ignore(flow(1), "reject_expired")]

    def test_bare_ack_on_challenged_flow(self):
        eng = engine()
        self._challenged(eng)
        assert eng.on_ack(flow(1), 1) == [Ignore(flow(1), "unknown")]
        assert eng.on_data(flow(1), 1) == [Rst(flow(1))]

    def test_solution_bound_to_flow(self):
        eng = engine()
        act = self._challenged(eng)
        assert eng.on_ack(flow(2), 1, answer(act))[0].reason == "reject_invalid"

    def test_malformed(self):
        eng = engine()
        self._challenged(eng)
        assert eng.on_ack(flow(1), 1, b"\xfd\x03\x00")[0].reason == "malformed"
        sol = SolutionOption(1460, 7, (b"\x00" * 8,))
        assert eng.on_ack(flow(1), 1, sol)[0].reason == "malformed"

    def test_plain_ack_promotes(self):
        eng = engine()
        eng.on_syn(flow(1), 0)
        assert eng.on_ack(flow(1), 0) == [Accept(flow(1))]
        assert eng.on_data(flow(1), 0) == []


class TestData:
    def test_no_unsolicited_rst(self):
        eng = engine()
        fill_listen(eng)
        eng.on_syn(flow(1), 0)
        eng.on_ack(flow(1), 0)
        assert eng.counters.rsts_sent == 0


class TestTick:
    def test_eviction_and_spark(self):
        eng = engine()
        fill_listen(eng, now=0)
        eng.on_syn(flow(1), 1)  # challenged
        eng.tick(31)
        assert eng.counters.evictions == 4 and not eng.puzzles_active
        assert eng.on_syn(flow(2), 31) == [SendSynAckPlain(flow(2))]

    def test_not_before_timeout(self):
        eng = engine()
        fill_listen(eng, now=0)
        assert eng.tick(30) == [] and len(eng.listen_q) == 4

    def test_empty(self):
        assert engine().tick(0) == []

    def test_clock(self):
        eng = engine()
        eng.tick(5)
        with pytest.raises(ClockError):
            eng.on_syn(flow(1), 4)


class TestCookies:
    def test_round_trip_and_slots(self):
        c = cookie_encode(SECRET, flow(1), 100)
        assert cookie_validate(SECRET, flow(1), c, 100)
        assert cookie_validate(SECRET, flow(1), c, 130)
        assert not cookie_validate(SECRET, flow(1), c, 230)
        assert not cookie_validate(SECRET, flow(1), c ^ 1, 100)
        assert not cookie_validate(SECRET, flow(2), c, 100)


class TestTunables:
    def test_set_and_read(self):
        eng = engine()
        eng.set_tunable("puzzle.m", 6)
        eng.set_tunable("puzzle.k", "3")
        eng.set_tunable("cookies.enabled", "on")
        eng.set_tunable("backlog", 8)
        t = eng.tunables()
        assert (t["puzzle.k"], t["puzzle.m"], t["cookies.enabled"], t["backlog"]) == (3, 6, True, 8)
        with pytest.raises(KeyError):
            eng.set_tunable("nope", 1)
        with pytest.raises(ValueError):
            eng.set_tunable("backlog", 0)

    def test_new_difficulty_applies_to_next_challenge(self):
        eng = engine()
        fill_listen(eng)
        eng.set_tunable("puzzle.m", 5)
        assert eng.on_syn(flow(1), 0)[0].option.params.m == 5

    def test_disable_puzzles(self):
        eng = engine()
        eng.set_tunable("puzzle.enabled", False)
        fill_listen(eng)
        assert eng.on_syn(flow(1), 0) == []


# -- property suites ------------------------------------------------------------------

events = st.lists(st.tuples(st.sampled_from(["syn", "ack", "sol", "bad", "data", "tick", "pop"]),
                            st.integers(0, 11), st.floats(0, 3)), max_size=80)


def run_trace(trace, mode=Mode.PUZZLES):
    eng = engine(mode=mode, backlog=3, accept_capacity=2, synack_timeout_s=2)
    now = 0.0
    issued = {}
    created_by_verify = 0
    for kind, i, dt in trace:
        now += dt
        f = flow(i)
        before = eng.per_flow_entries()
        if kind == "syn":
            out = eng.on_syn(f, now)
            for a in out:
                if isinstance(a, SendSynAckChallenge):
                    issued[f] = a
        elif kind in ("ack", "sol", "bad"):
            sol = None
            if kind != "ack" and f in issued:
                sol = answer(issued[f])
                if kind == "bad":
                    sol = SolutionOption(1, 1, (bytes(8),) * len(sol.solutions), sol.t)
            out = eng.on_ack(f, now, sol)
            if sol is not None and out and isinstance(out[0], Accept):
                created_by_verify += 1
        elif kind == "data":
            out = eng.on_data(f, now)
        elif kind == "tick":
            out = eng.tick(now)
        else:
            a = eng.pop_accept()
            if a is not None:
                eng.close(a.flow)
            out = []
        assert len(eng.listen_q) <= 3 and len(eng.accept_q) <= 2
        grew = eng.per_flow_entries() - before
        if grew > 0 and kind != "syn":
            assert isinstance(out[0], Accept)
    return eng, created_by_verify


@given(events)
def test_statelessness_and_capacity(trace):
    eng, verified = run_trace(trace)
    assert eng.counters.puzzle_accepts == verified
    c = eng.counters
    assert c.syns == c.synacks_plain + c.challenges_sent + c.cookies_sent + c.syns_dropped


@given(events)
def test_challenges_store_nothing(trace):
    # m = 30 so that the junk solution below is (practically) never valid
    eng = engine(backlog=3, accept_capacity=2, puzzle_params=PuzzleParams(1, 30))
    fill_listen(eng, 3)
    base = eng.per_flow_entries()
    now = 0.0
    for kind, i, dt in trace:
        now += dt
        if kind == "syn":
            eng.on_syn(flow(i), now)
        elif kind in ("ack", "bad", "data"):
            eng.on_ack(flow(i), now, SolutionOption(1, 1, (bytes(8),), int(now)) if kind == "bad" else None)
    # every SYN was challenged and no solution was valid: no new per-flow state
    assert eng.per_flow_entries() == base


@given(events)
def test_deterministic(trace):
    a, _ = run_trace(trace)
    b, _ = run_trace(trace)
    assert a.snapshot() == b.snapshot()


@given(st.lists(st.floats(0, 25), min_size=1, max_size=40).map(sorted))
def test_replay_containment(times):
    eng = engine(backlog=1, accept_capacity=8, expiry_s=10)
    eng.on_syn(flow(99), 0)
    (ch,) = eng.on_syn(flow(1), 0)
    sol = answer(ch)
    for now in times:
        out = eng.on_ack(flow(1), now, sol)
        slots = sum(1 for f in list(eng.accept_q) + list(eng.established) if f == flow(1))
        assert slots <= 1
        if now > 10:
            assert not isinstance(out[0], Accept)
        if isinstance(out[0], Accept) and now > 5:
            # application finishes with it; the replay may re-occupy a slot only before expiry
            eng.pop_accept()
            eng.close(flow(1))
