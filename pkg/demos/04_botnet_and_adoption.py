# %% [markdown]
# # How much a botnet gets through
#
# Holding the total SYN rate fixed, each extra bot adds one more solver, so the
# attackers' completed connections grow with botnet size. Holding the size
# fixed, sending SYNs faster buys nothing once every bot is busy solving.

# %%
from tcpuzzle import experiments as ex

sizes, cps = ex.botnet_size_sweep()
for n, c in zip(sizes, cps):
    print(f"{int(n):>3} bots: {c:6.2f} attacker connections/s")
print(f"linear fit R^2 = {ex.r_squared(sizes, cps):.4f}")

rates, flat = ex.botnet_rate_sweep()
for r, c in zip(rates, flat):
    print(f"5 bots at {int(r):>5} SYN/s each: {c:6.2f} connections/s")

# %% [markdown]
# ## Partial adoption
#
# Clients that do not solve puzzles only get in while the server is not under
# pressure. Under attack, only solvers are admitted.

# %%
for (clients, attackers), ratio in ex.adoption_matrix().items():
    print(f"clients {clients:<8} attackers {attackers:<8} completion {ratio:.3f}")
