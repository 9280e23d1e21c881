# %% [markdown]
# # One puzzle, end to end
#
# The server derives a challenge from its secret and the connection's flow, and
# keeps nothing. The client solves it and sends the answer back inside a TCP
# option. The server re-derives the challenge and checks the answer.

# %%
from tcpuzzle.puzzle import (FlowTuple, HashCounter, PuzzleParams, VerifyResult, derive_challenge,
                             expected_costs, generate_secret, solve, verify)
from tcpuzzle.wire import ChallengeOption, SolutionOption, decode_solution, encode_challenge, encode_solution

secret = generate_secret()
flow = FlowTuple.parse("192.0.2.7:40112", "198.51.100.1:443", isn=0x1234ABCD)
params = PuzzleParams(k=2, m=12)
t = 1_700_000_000

challenge = derive_challenge(secret, t, flow, params)
block = encode_challenge(ChallengeOption(params, challenge.preimage, t))
print("SYN-ACK option:", block.hex(" ").upper())

# %%
counter = HashCounter()
sols = solve(challenge, rng_seed=11, counter=counter)
answer = encode_solution(SolutionOption(1460, 7, sols, t))
# each sub-solution takes 2^m tries on average, so k * 2^m in all
print(f"solved with {counter.count} hashes (mean {params.k * 2 ** params.m})")
print("ACK option:    ", answer.hex(" ").upper())

# %% [markdown]
# Verification costs one hash to rebuild the challenge plus up to k checks.
# The timestamp inside the answer bounds how long it can be replayed.

# %%
got = decode_solution(answer, params.k, params.l)
for now in (t + 1, t + 61):
    print(f"verify at t+{now - t}s:", verify(secret, got.t, flow, params, got.solutions, now, 60).value)
other = FlowTuple.parse("192.0.2.8:40112", "198.51.100.1:443", isn=0x1234ABCD)
print("same answer, other source:", verify(secret, t, other, params, sols, t, 60).value)
solve_cost, gen_cost, verify_cost = expected_costs(params)
print(f"game-model costs: solve {solve_cost}, generate {gen_cost}, verify {verify_cost}")
