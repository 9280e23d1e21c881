# %% [markdown]
# # SYN floods and connection floods
#
# Five clients share a server (mu = 200 requests/s) with three attackers for a
# 60 s attack window. Spoofed SYNs can be beaten with SYN cookies alone. Floods
# from real addresses that finish the handshake cannot: cookies let every one
# through. Puzzles make each of those connections cost a fixed amount of work.

# %%
from tcpuzzle import experiments as ex
from tcpuzzle.handshake import Mode
from tcpuzzle.simulator import run_scenario

print("spoofed SYN flood, client completion during the attack")
for mode in Mode:
    log = run_scenario(ex.syn_flood(mode))
    print(f"  {mode.value:<28} {log.attack_completion_ratio():.3f}")

# %%
cmp = ex.run_conn_flood()
for name, log in (("cookies", cmp.baseline), ("puzzles", cmp.protected)):
    print(f"connection flood, {name}: completion {log.attack_completion_ratio():.3f}, "
          f"{log.per_attacker_cps():.2f} attacker connections/s per node")
print(f"attacker rate cut by {cmp.reduction:.0f}x")

# %% [markdown]
# With 351,575 hashes/s and (k, m) = (2, 17) an attacker can finish at most
# 351575 / 131072 = 2.68 connections per second, whatever its SYN rate.
# The per-second series are in `log.series`; `export_metrics` writes them out.

# %%
from pathlib import Path
from tcpuzzle.scenario import save_scenario
from tcpuzzle.simulator import export_metrics

out = Path("demo_output")
save_scenario(ex.conn_flood(Mode.PUZZLES), Path(__file__).parent / "scenarios" / "conn_flood_puzzles.json")
print(*export_metrics(cmp.protected, out, cmp.baseline, "cookies"), sep="\n")
