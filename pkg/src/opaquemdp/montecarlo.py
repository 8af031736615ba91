"""Statistical cross-validation of the exact opacity machinery.

Samples runs of a finite model, executes the matching observer
alongside each run, and counts how often the observer enters a
revealing state within the horizon.  The hit fraction estimates the
violation probability computed exactly elsewhere; agreement within
binomial error is strong evidence that the estimator construction and
the reachability numerics implement the same semantics.

Sampling is deterministic for a given seed: work is split into
fixed-size chunks, each chunk draws from its own counter-based stream
keyed by (seed, chunk index), and chunk results are summed.  The number
of worker threads (capped by the OPAQUEMDP_THREADS environment
variable) therefore never affects the estimate.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from opaquemdp.estimators import (
    EstimatorGmdp,
    build_current_estimator,
    build_initial_estimator,
)
from opaquemdp.model import PROB_FLOOR, FiniteGmdp
from opaquemdp.reachability import value_iteration

__all__ = [
    "SimulationConfig",
    "EstimateReport",
    "sample_trajectory",
    "estimate_violation",
]

# Chunk size is part of the determinism contract: changing it reshuffles
# which draws land in which stream, so it is fixed, not tunable.
CHUNK = 16384


@dataclass(frozen=True)
class SimulationConfig:
    """Parameters of one sampling experiment.

    `inputs` is the fixed input sequence to apply; None means worst-case
    mode, which replays the maximizing feedback policy extracted from
    value iteration.  `confidence` sets the reported Wilson interval.
    """

    samples: int
    horizon: int
    seed: int
    inputs: tuple[str, ...] | None = None
    confidence: float = 0.99

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError(f"need at least one sample, got {self.samples}")
        if self.horizon < 0:
            raise ValueError(f"horizon must be nonnegative, got {self.horizon}")
        if not 0 < self.confidence < 1:
            raise ValueError(
                f"confidence must lie in (0, 1), got {self.confidence}"
            )
        if self.inputs is not None and len(self.inputs) != self.horizon:
            raise ValueError(
                f"input sequence has length {len(self.inputs)}, horizon is "
                f"{self.horizon}"
            )


@dataclass
class EstimateReport:
    """Hit-fraction estimate with its confidence interval.

    `first_hit_counts[t]` counts samples whose observer first entered a
    revealing state at step t (index 0 = revealed before any step).
    """

    p_hat: float
    ci_lo: float
    ci_hi: float
    samples: int
    seed: int
    kind: str
    eps: float
    x0: str
    horizon: int
    confidence: float
    worst_case: bool
    first_hit_counts: list[int]


def _stream(seed: int, chunk_index: int) -> np.random.Generator:
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, chunk_index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _row_tables(model: FiniteGmdp):
    """Cumulative-probability tables for inverse-CDF sampling per row.

    Successors are ordered by state index, so the mapping from a uniform
    draw to a successor is a fixed convention, not an accident of dict
    ordering.
    """
    sidx = model.state_index
    cums: dict[tuple[int, int], np.ndarray] = {}
    succs: dict[tuple[int, int], np.ndarray] = {}
    for (s, u), row in model.kernel.items():
        entries = sorted((sidx[t], p) for t, p in row.items() if p > PROB_FLOOR)
        ids = np.array([t for t, _ in entries], dtype=np.int64)
        cum = np.cumsum([p for _, p in entries])
        key = (sidx[s], model.input_index[u])
        cums[key] = cum
        succs[key] = ids
    return cums, succs


def sample_trajectory(model: FiniteGmdp, x0: str, inputs, rng) -> list[str]:
    """One run of the model from `x0` under the given input sequence.

    Each step draws a uniform variate from `rng` and inverts the row's
    cumulative distribution (successors in state-index order).  Returns
    the visited states, length len(inputs) + 1.
    """
    model.index(x0)
    cums, succs = _row_tables(model)
    sidx = model.state_index
    out = [x0]
    cur = sidx[x0]
    for u in inputs:
        ui = model.input_index.get(u)
        if ui is None:
            raise ValueError(f"unknown input {u!r}")
        cum = cums[(cur, ui)]
        pos = int(np.searchsorted(cum, rng.random(), side="right"))
        cur = int(succs[(cur, ui)][min(pos, len(cum) - 1)])
        out.append(model.states[cur])
    return out


def _observer_table(est: EstimatorGmdp) -> np.ndarray:
    """Dense successor map: (estimator state, input, base successor) -> state.

    The observer is deterministic given the actual successor state, so
    for each estimator state and input there is at most one estimator
    successor per base successor; absent combinations hold -1.
    """
    n_est = len(est.states)
    n_in = len(est.inputs)
    n_base = len(est.base.states)
    table = np.full((n_est, n_in, n_base), -1, dtype=np.int64)
    bidx = est.base.state_index
    uidx = {u: i for i, u in enumerate(est.inputs)}
    for (i, u), row in est.kernel.items():
        for j in row:
            b = bidx[est.states[j].base_state]
            table[i, uidx[u], b] = j
    return table


def _simulate_chunk(
    size: int,
    chunk_index: int,
    seed: int,
    base_start: int,
    est_start: int,
    horizon: int,
    input_plan,
    policies,
    cums,
    succs,
    observer,
    is_bad: np.ndarray,
) -> np.ndarray:
    rng = _stream(seed, chunk_index)
    cur_base = np.full(size, base_start, dtype=np.int64)
    cur_est = np.full(size, est_start, dtype=np.int64)
    first_hit = np.full(size, -1, dtype=np.int64)
    if is_bad[est_start]:
        first_hit[:] = 0

    for t in range(horizon):
        if input_plan is not None:
            inp = np.full(size, input_plan[t], dtype=np.int64)
        else:
            remaining = horizon - t
            sweep = min(remaining, len(policies)) - 1
            inp = policies[sweep][cur_est]
        draws = rng.random(size)
        nxt = np.empty(size, dtype=np.int64)
        n_in = observer.shape[1]
        for combined in np.unique(cur_base * n_in + inp):
            s, ui = int(combined) // n_in, int(combined) % n_in
            mask = (cur_base * n_in + inp) == combined
            cum = cums[(s, ui)]
            pos = np.searchsorted(cum, draws[mask], side="right")
            nxt[mask] = succs[(s, ui)][np.minimum(pos, len(cum) - 1)]
        cur_est = observer[cur_est, inp, nxt]
        cur_base = nxt
        fresh = (first_hit < 0) & is_bad[cur_est]
        first_hit[fresh] = t + 1

    hist = np.zeros(horizon + 1, dtype=np.int64)
    hit = first_hit >= 0
    np.add.at(hist, first_hit[hit], 1)
    return hist


def _wilson_interval(hits: int, n: int, confidence: float) -> tuple[float, float]:
    z = float(norm.ppf((1.0 + confidence) / 2.0))
    p = hits / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def _thread_count() -> int:
    raw = os.environ.get("OPAQUEMDP_THREADS")
    if raw:
        return max(1, int(raw))
    return max(1, os.cpu_count() or 1)


def estimate_violation(
    model: FiniteGmdp, kind: str, eps: float, x0: str, config: SimulationConfig
) -> EstimateReport:
    """Estimate the probability that a run from `x0` reveals the secret.

    Builds the estimator for `kind` ("initial" or "current") at
    precision `eps`, samples `config.samples` runs, and tracks the
    observer alongside; a run counts as a hit when the observer enters a
    revealing state within the horizon.  In worst-case mode the inputs
    replay the value-iteration policy (adversarial feedback); otherwise
    the fixed sequence of `config.inputs` is applied.
    """
    k = kind.strip().lower()
    if k in ("initial", "initial-state"):
        est = build_initial_estimator(model, eps)
        report_kind = "initial-state"
    elif k in ("current", "current-state"):
        est = build_current_estimator(model, eps)
        report_kind = "current-state"
    else:
        raise ValueError(f"kind must be 'initial' or 'current', got {kind!r}")
    est_start = est.base_initial_index.get(x0)
    if est_start is None:
        raise ValueError(f"{x0!r} is not an initial state of the model")

    input_plan = None
    policies = None
    if config.inputs is not None:
        for u in config.inputs:
            if u not in model.input_index:
                raise ValueError(f"unknown input {u!r}")
        input_plan = [model.input_index[u] for u in config.inputs]
    else:
        result = value_iteration(est, config.horizon)
        policies = result.policies if result.policies else [
            np.zeros(len(est.states), dtype=np.int64)
        ]

    cums, succs = _row_tables(model)
    observer = _observer_table(est)
    is_bad = np.zeros(len(est.states), dtype=bool)
    for i in est.bad_states:
        is_bad[i] = True

    n = config.samples
    sizes = [CHUNK] * (n // CHUNK)
    if n % CHUNK:
        sizes.append(n % CHUNK)

    def run(args):
        idx, size = args
        return _simulate_chunk(
            size,
            idx,
            config.seed,
            model.state_index[x0],
            est_start,
            config.horizon,
            input_plan,
            policies,
            cums,
            succs,
            observer,
            is_bad,
        )

    jobs = list(enumerate(sizes))
    threads = _thread_count()
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            hists = list(pool.map(run, jobs))
    else:
        hists = [run(j) for j in jobs]
    hist = np.sum(hists, axis=0)

    hits = int(hist.sum())
    p_hat = hits / n
    ci_lo, ci_hi = _wilson_interval(hits, n, config.confidence)
    return EstimateReport(
        p_hat=p_hat,
        ci_lo=ci_lo,
        ci_hi=ci_hi,
        samples=n,
        seed=config.seed,
        kind=report_kind,
        eps=eps,
        x0=x0,
        horizon=config.horizon,
        confidence=config.confidence,
        worst_case=config.inputs is None,
        first_hit_counts=[int(v) for v in hist],
    )
