"""Hash-rate profiling and model-parameter estimation.

``w_av`` is the number of hashes a typical client can afford within the
handshake delay budget (400 ms by default); ``alpha`` is the server's service
rate per concurrent request.  Both feed :func:`tcpuzzle.game.recommend`.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import random
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .puzzle import PuzzleParams

DEFAULT_BUDGET_S = 0.4
MIN_PROFILE_S = 0.1
_BATCH = 4096


class BenchError(ValueError):
    """Invalid profiling or estimation input."""


@dataclass
class HashRateReport:
    rate: float  # hashes per second, mean over repeats
    spread: float  # (max - min) / mean over repeats
    runs: list
    workers: int = 1
    per_worker: Optional[list] = None


def _kernel(duration_s: float, seed: int = 0) -> tuple[int, float]:
    """The solver's inner loop (copy base state, append candidate, digest, compare prefix)."""
    params = PuzzleParams(2, 17)
    rng = random.Random(seed)
    randbytes = rng.randbytes
    base = hashlib.sha256(rng.randbytes(params.nbytes) + (1).to_bytes(4, "big"))
    from_bytes = int.from_bytes
    nb, pbytes, shift = params.nbytes, 3, 7
    target = -1
    trials = 0
    clock = time.perf_counter
    start = clock()
    deadline = start + duration_s
    while True:
        for _ in range(_BATCH):
            h = base.copy()
            h.update(randbytes(nb))
            if from_bytes(h.digest()[:pbytes], "big") >> shift == target:
                break
        trials += _BATCH
        now = clock()
        if now >= deadline:
            return trials, now - start


def _one_run(duration_s: float) -> float:
    trials, elapsed = _kernel(duration_s)
    return trials / elapsed


def profile_hash_rate(duration_s: float = DEFAULT_BUDGET_S, repeats: int = 3,
                      workers: int = 1) -> HashRateReport:
    """Measure SHA-256 trials per second with the solver's own inner loop.

    With ``workers > 1`` each repeat runs one process per worker and ``rate``
    is the aggregate.
    """
    if duration_s < MIN_PROFILE_S:
        raise BenchError(f"duration must be at least {MIN_PROFILE_S} s")
    if repeats < 1 or workers < 1:
        raise BenchError("repeats and workers must be >= 1")
    per_worker = None
    _kernel(0.05)  # warm-up, discarded
    if workers == 1:
        runs = [_one_run(duration_s) for _ in range(repeats)]
    else:
        runs = []
        with ProcessPoolExecutor(workers) as pool:
            for _ in range(repeats):
                rates = list(pool.map(_one_run, [duration_s] * workers))
                per_worker = rates
                runs.append(sum(rates))
    mean = statistics.fmean(runs)
    return HashRateReport(mean, (max(runs) - min(runs)) / mean, runs, workers, per_worker)


def hashes_in_budget(rate: float, budget_s: float = DEFAULT_BUDGET_S) -> float:
    if rate <= 0 or budget_s < 0:
        raise BenchError("rate must be positive and budget non-negative")
    return rate * budget_s


def estimate_alpha(mu: float, concurrent_load: float) -> float:
    if mu <= 0 or concurrent_load <= 0:
        raise BenchError("mu and concurrent_load must be positive")
    return mu / concurrent_load


def read_stress_csv(path: Union[str, Path]) -> tuple[np.ndarray, np.ndarray]:
    """Rows of ``load,service_rate`` (header required), sorted by load."""
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"load", "service_rate"} <= set(reader.fieldnames):
            raise BenchError(f"{path}: expected columns load,service_rate")
        rows = [(float(r["load"]), float(r["service_rate"])) for r in reader]
    if not rows:
        raise BenchError(f"{path}: no data rows")
    rows.sort()
    load, rate = np.array(rows).T
    return load, rate


def converged_alpha(load: Sequence[float], service_rate: Sequence[float], tail: float = 0.25) -> float:
    """alpha from the tail of a stress series: median of mu/load over the
    highest-load ``tail`` fraction of points (at least two)."""
    load = np.asarray(load, dtype=float)
    rate = np.asarray(service_rate, dtype=float)
    if load.shape != rate.shape or len(load) == 0:
        raise BenchError("load and service_rate must be equal-length and non-empty")
    if np.any(load <= 0) or np.any(rate <= 0):
        raise BenchError("load and service_rate must be positive")
    order = np.argsort(load, kind="stable")
    ratios = rate[order] / load[order]
    n = max(2, int(np.ceil(tail * len(ratios)))) if len(ratios) > 1 else 1
    return float(np.median(ratios[-n:]))


def alpha_from_stress_csv(path: Union[str, Path], tail: float = 0.25) -> float:
    return converged_alpha(*read_stress_csv(path), tail=tail)


@dataclass
class ModelParameters:
    w_av: float
    alpha: Optional[float] = None
    hash_rate: Optional[float] = None
    budget_s: float = DEFAULT_BUDGET_S


def write_parameters(params: ModelParameters, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(asdict(params), indent=2) + "\n")


def read_parameters(path: Union[str, Path]) -> ModelParameters:
    try:
        data = json.loads(Path(path).read_text())
        return ModelParameters(**data)
    except (json.JSONDecodeError, TypeError) as exc:
        raise BenchError(f"{path}: not a parameter file ({exc})") from exc


def average_valuation(files: Iterable[Union[str, Path]]) -> float:
    """Uniform mean of w_av over several profile files (one per machine)."""
    values = [read_parameters(f).w_av for f in files]
    if not values:
        raise BenchError("no parameter files given")
    return statistics.fmean(values)


def cpu_count() -> int:
    return os.cpu_count() or 1
