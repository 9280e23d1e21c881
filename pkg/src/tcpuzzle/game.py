"""Puzzle difficulty as a Stackelberg pricing game.

The server (leader) posts a difficulty ``ell = k * 2**(m-1)`` in expected
hashes per request.  Each user ``i`` picks a request rate ``x_i`` maximising

    u_i = w_i * log(1 + x_i) - ell * x_i - 1 / (mu - x_bar)

where ``x_bar`` is the aggregate rate and the last term is the M/M/1 sojourn
time.  Writing ``y_bar = N + x_bar`` the users' equilibrium is the root of

    L(y_bar) = w_bar / y_bar - ell - 1 / (mu + N - y_bar)**2

and the leader's reduced problem maximises

    G(y_bar) = (w_bar / y_bar - 1 / (mu + N - y_bar)**2) * (y_bar - N)

over ``(N, N + mu)``.  As ``N`` grows with ``mu / N -> alpha`` the optimum
tends to ``ell* = w_av / (alpha + 1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .puzzle import PuzzleParams

BISECT_TOL = 1e-9
RESIDUAL_TOL = 1e-7
DEFAULT_K = 2


class GameError(ValueError):
    """Invalid game inputs."""


class InfeasibleMarketError(GameError):
    """The market admits no positive difficulty."""


class NoSolutionError(GameError):
    """The requested difficulty is at or above the feasibility bound."""


def bisect_decreasing(f: Callable[[float], float], lo: float, hi: float,
                      tol: float = BISECT_TOL, max_iter: int = 400,
                      ftol: float = RESIDUAL_TOL) -> float:
    """Root of a strictly decreasing ``f`` with ``f(lo) > 0`` and ``f < 0`` near ``hi``.

    Only midpoints are evaluated, so ``f`` may be singular at ``hi``.  Stops
    once the bracket is within ``tol`` and ``|f| <= ftol`` (steep functions
    need the second test), or when the bracket hits float resolution.
    """
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            return mid
        fm = f(mid)
        if hi - lo <= tol and abs(fm) <= ftol:
            return mid
        if fm > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def nash_difficulty_asymptotic(w_av: float, alpha: float) -> float:
    if w_av <= 0 or alpha <= 0:
        raise GameError("w_av and alpha must be positive")
    return w_av / (alpha + 1.0)


def factor_difficulty(ell: float, k: int = DEFAULT_K) -> tuple[int, int]:
    """Smallest m with k * 2**(m-1) >= ell (m >= 1)."""
    if ell <= 0 or k < 1:
        raise GameError("ell must be positive and k >= 1")
    m = max(1, 1 + math.ceil(math.log2(ell / k)))
    # guard against log2 rounding at exact powers of two
    while k * 2 ** (m - 1) < ell:
        m += 1
    while m > 1 and k * 2 ** (m - 2) >= ell:
        m -= 1
    return k, m


def max_difficulty_bound(w_bar: float, N: int, mu: float) -> float:
    if w_bar <= 0 or N <= 0 or mu <= 0:
        raise GameError("w_bar, N and mu must be positive")
    r_hat = w_bar / N - 1.0 / mu ** 2
    if r_hat <= 0:
        raise InfeasibleMarketError(f"r_hat = {r_hat} <= 0; no difficulty is sustainable")
    return r_hat


def ybar_residual(y_bar: float, w_bar: float, N: int, mu: float, ell: float) -> float:
    return w_bar / y_bar - ell - 1.0 / (mu + N - y_bar) ** 2


@dataclass
class EquilibriumRates:
    y_bar: float
    x: np.ndarray
    non_participants: list = field(default_factory=list)

    @property
    def x_bar(self) -> float:
        return float(self.x.sum())


def user_equilibrium(w: Sequence[float], mu: float, ell: float,
                     tol: float = BISECT_TOL) -> EquilibriumRates:
    """Followers' Nash rates for a posted difficulty ``ell``.

    Users whose ``y_bar <= w_bar / w_i`` would want a negative rate; they are
    listed in ``non_participants`` and their ``x_i`` is left as computed.
    """
    w = np.asarray(w, dtype=float)
    N = len(w)
    if N == 0 or np.any(w < 0) or mu <= 0 or ell < 0:
        raise GameError("need at least one user, non-negative valuations, mu > 0, ell >= 0")
    w_bar = float(w.sum())
    r_hat = max_difficulty_bound(w_bar, N, mu)
    if ell >= r_hat:
        raise NoSolutionError(f"difficulty {ell} >= bound {r_hat}")
    y_bar = bisect_decreasing(lambda y: ybar_residual(y, w_bar, N, mu, ell), N, N + mu, tol)
    x = w / w_bar * y_bar - 1.0
    with np.errstate(divide="ignore"):
        thresholds = w_bar / w
    bad = [i for i in range(N) if not y_bar > thresholds[i]]
    return EquilibriumRates(y_bar, x, bad)


def _provider_slope(y: float, w_bar: float, N: int, mu: float) -> float:
    return w_bar * N / y ** 2 - (mu + y - N) / (mu + N - y) ** 3


def provider_reduced_objective(y_bar, w_bar: float, N: int, mu: float):
    """G(y_bar); accepts scalars or arrays."""
    return (w_bar / y_bar - 1.0 / (mu + N - y_bar) ** 2) * (y_bar - N)


def finite_n_optimal(w_bar: float, N: int, mu: float, tol: float = BISECT_TOL) -> tuple[float, float]:
    """Leader's optimum for a finite market: ``(y_bar*, ell*)``."""
    max_difficulty_bound(w_bar, N, mu)
    y_star = bisect_decreasing(lambda y: _provider_slope(y, w_bar, N, mu), N, N + mu, tol)
    ell = w_bar / y_star - 1.0 / (mu + N - y_star) ** 2
    return y_star, ell


def utility_eval(x_i: float, x_others_sum: float, w_i: float, params, mu: float) -> float:
    """Per-user utility; ``params`` is a PuzzleParams or a raw difficulty in hashes."""
    ell = params.expected_solve_hashes if isinstance(params, PuzzleParams) else float(params)
    x_bar = x_i + x_others_sum
    if x_bar >= mu:
        raise GameError("aggregate rate must stay below mu")
    return w_i * math.log1p(x_i) - ell * x_i - 1.0 / (mu - x_bar)


def _params_for(k: int, m: int) -> PuzzleParams:
    # l = 64 unless m needs a longer string
    return PuzzleParams(k, m, max(64, 8 * (m // 8 + 1)))


def provider_objective(params: PuzzleParams, x_bar: float) -> float:
    """Server payoff: (solve cost - generate - verify) * aggregate rate."""
    return (params.expected_solve_hashes - 2 - params.k / 2) * x_bar


def reduced_provider_objective(params: PuzzleParams, x_bar: float) -> float:
    return params.expected_solve_hashes * x_bar


@dataclass
class GridSearchResult:
    best: tuple[int, int]
    best_value: float
    reduced_best: tuple[int, int]
    p_prime: tuple[int, int]
    p_prime_value: float
    gap: float
    bound: float
    values: dict

    @property
    def lemma_holds(self) -> bool:
        return self.gap <= self.bound


def brute_force_optimal(w: Sequence[float], mu: float, k_range: Iterable[int] = range(1, 9),
                        m_range: Iterable[int] = range(1, 21)) -> GridSearchResult:
    """Exhaustive search of the server objective over a (k, m) grid.

    Also locates the maximiser of the reduced objective and, among pairs with
    the same ``k * 2**(m-1)``, the one with the smallest k (``p_prime``); the
    gap between the true optimum and ``p_prime`` is bounded by
    ``(k'/2 + 2) * mu``.
    """
    k_range, m_range = list(k_range), list(m_range)
    values = {}
    xbars = {}
    for k in k_range:
        for m in m_range:
            p = _params_for(k, m)
            try:
                eq = user_equilibrium(w, mu, p.expected_solve_hashes)
            except NoSolutionError:
                continue
            xbars[(k, m)] = eq.x_bar
            values[(k, m)] = provider_objective(p, eq.x_bar)
    if not values:
        raise InfeasibleMarketError("no (k, m) in the grid is feasible")
    # ties broken by lexicographic (k, m)
    best = max(sorted(values), key=lambda km: values[km])
    reduced = {km: km[0] * 2 ** (km[1] - 1) * xbars[km] for km in values}
    reduced_best = max(sorted(reduced), key=lambda km: reduced[km])
    ell_tilde = reduced_best[0] * 2 ** (reduced_best[1] - 1)
    same_ell = sorted(km for km in values if km[0] * 2 ** (km[1] - 1) == ell_tilde)
    p_prime = same_ell[0]
    gap = abs(values[best] - values[p_prime])
    return GridSearchResult(best, values[best], reduced_best, p_prime, values[p_prime],
                            gap, (p_prime[0] / 2 + 2) * mu, values)


@dataclass
class Recommendation:
    w_av: float
    alpha: float
    ell: float
    k: int
    m: int
    corrections: list = field(default_factory=list)  # (N, ell*(N), relative gap)

    @property
    def params(self) -> PuzzleParams:
        return _params_for(self.k, self.m)


def finite_n_ladder(w_av: float, alpha: float, Ns: Iterable[int] = (10, 100, 1000, 10000)):
    """ell*(N) for a market of N users with w_bar = N * w_av and mu = alpha * N."""
    target = nash_difficulty_asymptotic(w_av, alpha)
    rows = []
    for N in Ns:
        _, ell = finite_n_optimal(w_av * N, N, alpha * N)
        rows.append((N, ell, abs(ell - target) / ell))
    return rows


def recommend(w_av: float, alpha: float, k: int = DEFAULT_K,
              ladder: Optional[Iterable[int]] = (10, 100, 1000, 10000)) -> Recommendation:
    ell = nash_difficulty_asymptotic(w_av, alpha)
    k, m = factor_difficulty(ell, k)
    rows = finite_n_ladder(w_av, alpha, ladder) if ladder else []
    return Recommendation(w_av, alpha, ell, k, m, rows)
