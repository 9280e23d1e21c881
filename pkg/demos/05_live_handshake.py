# %% [markdown]
# # A live handshake over UDP
#
# The same engine runs behind a UDP socket on loopback. A burst of fake SYNs
# fills the listen queue, which switches puzzles on. A solving client still
# gets in; a client that ignores the challenge gets nowhere, and its data is
# answered with a RST.

# %%
import time

from tcpuzzle.handshake import ServerConfig
from tcpuzzle.harness import admin_request, connect, flood_syns, serve
from tcpuzzle.puzzle import PuzzleParams

config = ServerConfig(backlog=16, puzzle_params=PuzzleParams(2, 12))
with serve(("127.0.0.1", 0), config) as server:
    print("server on", server.address)
    print("idle:", connect(server.address))

    flood_syns(server.address, 40)
    time.sleep(0.2)
    print("puzzles active:", admin_request(server.admin_address, "counters")["puzzles_active"])
    print("solver:    ", connect(server.address, "solve"))
    print("non-solver:", connect(server.address, "no_solve", timeout_s=2))

    # difficulty can be changed while running
    admin_request(server.admin_address, "set puzzle.m 14")
    print("solver at m=14:", connect(server.address, "solve"))
    counters = admin_request(server.admin_address, "counters")
    print({k: counters[k] for k in ("challenges_sent", "puzzle_accepts", "rsts_sent", "per_flow_entries")})
