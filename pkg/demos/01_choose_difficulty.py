# %% [markdown]
# # Picking a puzzle difficulty
#
# The server wants honest clients to spend about as much work per connection as
# they can afford within a short delay budget. Two numbers drive the choice:
# `w_av`, the hashes a typical client manages in 400 ms, and `alpha`, the
# server's service rate per concurrent request.

# %%
from tcpuzzle.bench import estimate_alpha, hashes_in_budget, profile_hash_rate
from tcpuzzle.game import recommend

report = profile_hash_rate(duration_s=0.3, repeats=3)
print(f"this machine: {report.rate:,.0f} SHA-256 trials/s (spread {report.spread:.1%})")
print(f"budget: {hashes_in_budget(report.rate):,.0f} hashes in 400 ms")

# %% [markdown]
# A reference laptop measured 351,575 hashes/s and a stress test put the server
# at 1,100 requests/s with 1,000 concurrent users.

# %%
w_av = hashes_in_budget(351_575)
alpha = estimate_alpha(1100, 1000)
rec = recommend(w_av, alpha)
print(f"w_av = {w_av:,.0f}, alpha = {alpha}")
print(f"ell* = {rec.ell:,.2f} hashes -> (k, m) = ({rec.k}, {rec.m})")

# %% [markdown]
# The closed form assumes a very large market. For finite N the optimum sits a
# little away from it, and the gap shrinks by roughly 10^(2/3) per decade.

# %%
for n, ell, gap in rec.corrections:
    print(f"N = {n:>6}: ell*(N) = {ell:>12,.2f}  relative gap {gap:.2e}")
