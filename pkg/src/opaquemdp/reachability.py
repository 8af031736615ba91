"""Bounded-horizon reachability on estimator MDPs and opacity verdicts.

The observer constructions reduce opacity to a question of the form
"what is the worst-case probability that the run enters a revealing
estimator state within n steps".  This module answers it three ways:

* `value_iteration` maximizes over causal input policies (the verdict
  engine: inputs may react to the run as it unfolds);
* `exact_violation_probability` evaluates one fixed input sequence by
  sparse matrix-vector products with absorption at revealing states;
* `brute_force_max_violation` enumerates all input sequences, an
  independent cross-check for the value iteration on small instances.

Note the first maximizes over strictly more adversaries than the third:
a feedback policy can choose different inputs in different states at
the same time step, which no single open-loop sequence can imitate.
The two coincide on single-input models and on every bundled fixture.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from opaquemdp.estimators import (
    EstimatorGmdp,
    build_current_estimator,
    build_initial_estimator,
)

__all__ = [
    "VERDICT_TOL",
    "StateClassification",
    "ReachabilityResult",
    "OpacityVerdict",
    "classify_states",
    "value_iteration",
    "exact_violation_probability",
    "brute_force_max_violation",
    "verify_opacity",
]

# Threshold comparisons absorb one ulp of decimal-literal rounding
# (1 - 0.8 is not the float 0.2); semantic gaps are never this small.
VERDICT_TOL = 1e-12

# Enumeration guard for the open-loop oracle.
BRUTE_FORCE_LIMIT = 10**6


@dataclass
class StateClassification:
    """Partition of estimator states by their relation to the revealing set.

    `bad` are the revealing states themselves, `unreachable_bad` the
    states from which no directed path reaches them, `other` the rest.
    """

    bad: frozenset[int]
    unreachable_bad: frozenset[int]
    other: frozenset[int]


@dataclass
class ReachabilityResult:
    """Worst-case hit probabilities for every estimator state.

    `p[i]` is the maximal probability, over causal input policies, of
    entering the revealing set within `horizon` steps starting from
    estimator state i.  `per_initial` projects this onto the base
    model's initial states.  `policies[k][i]` is the maximizing input
    index at state i when k+1 steps remain (ties resolved to the first
    input in declaration order); the list is truncated once the sweep
    reaches a fixed point, after which the last entry applies.
    """

    horizon: int
    p: np.ndarray
    per_initial: dict[str, float]
    classification: StateClassification
    sweeps_run: int
    policies: list[np.ndarray] = field(default_factory=list)

    def p_by_state(self, est: EstimatorGmdp) -> dict[str, float]:
        return {est.ids[i]: float(v) for i, v in enumerate(self.p)}


@dataclass
class OpacityVerdict:
    """Outcome of an opacity check at precision `eps` and level `lam`.

    Opaque means every initial state keeps its worst-case revealing
    probability at or below 1 - lam.  `witness` names a maximally
    violating initial state when not opaque; `margin` is the smallest
    slack (1 - lam) - per_initial over initial states, negative when
    the property fails.
    """

    kind: str
    eps: float
    lam: float
    horizon: int
    opaque: bool
    witness: str | None
    margin: float
    per_initial: dict[str, float]
    p: dict[str, float]
    estimator_states: int


def classify_states(est: EstimatorGmdp) -> StateClassification:
    """Split estimator states by backward reachability from the bad set."""
    n = len(est.states)
    pred: list[list[int]] = [[] for _ in range(n)]
    for (i, _u), row in est.kernel.items():
        for j in row:
            pred[j].append(i)
    seen = set(est.bad_states)
    frontier = deque(seen)
    while frontier:
        j = frontier.popleft()
        for i in pred[j]:
            if i not in seen:
                seen.add(i)
                frontier.append(i)
    bad = frozenset(est.bad_states)
    nb = frozenset(range(n)) - seen
    other = frozenset(range(n)) - bad - nb
    return StateClassification(bad=bad, unreachable_bad=nb, other=other)


def _input_matrices(est: EstimatorGmdp) -> list[sparse.csr_matrix]:
    """One sparse transition matrix per input, rows = source states."""
    n = len(est.states)
    mats = []
    for u in est.inputs:
        rows, cols, vals = [], [], []
        for i in range(n):
            row = est.kernel.get((i, u))
            if not row:
                continue
            for j, p in row.items():
                rows.append(i)
                cols.append(j)
                vals.append(p)
        mats.append(
            sparse.csr_matrix((vals, (rows, cols)), shape=(n, n), dtype=float)
        )
    return mats


def value_iteration(
    est: EstimatorGmdp,
    horizon: int,
    classification: StateClassification | None = None,
) -> ReachabilityResult:
    """Maximal probability of reaching the bad set within `horizon` steps.

    Runs synchronous sweeps of the dynamic program: each sweep replaces
    p with max over inputs of (transition matrix @ p), with bad states
    pinned to 1 and states that cannot reach the bad set pinned to 0.
    Sweeps stop early at an exact fixed point (no entry changes at all),
    which is sound because the values are nondecreasing in the horizon.
    """
    if horizon < 0:
        raise ValueError(f"horizon must be nonnegative, got {horizon}")
    cls = classification if classification is not None else classify_states(est)
    n = len(est.states)
    bad_idx = np.fromiter(cls.bad, dtype=int, count=len(cls.bad))
    nb_idx = np.fromiter(
        cls.unreachable_bad, dtype=int, count=len(cls.unreachable_bad)
    )
    p = np.zeros(n)
    if bad_idx.size:
        p[bad_idx] = 1.0

    mats = _input_matrices(est)
    policies: list[np.ndarray] = []
    sweeps = 0
    for _ in range(horizon):
        candidates = np.stack([m.dot(p) for m in mats])
        nxt = candidates.max(axis=0)
        pol = candidates.argmax(axis=0)
        if bad_idx.size:
            nxt[bad_idx] = 1.0
            pol[bad_idx] = 0
        if nb_idx.size:
            nxt[nb_idx] = 0.0
            pol[nb_idx] = 0
        np.minimum(nxt, 1.0, out=nxt)
        sweeps += 1
        policies.append(pol)
        if np.array_equal(nxt, p):
            break
        p = nxt

    per_initial = {
        x0: float(p[i]) for x0, i in est.base_initial_index.items()
    }
    return ReachabilityResult(
        horizon=horizon,
        p=p,
        per_initial=per_initial,
        classification=cls,
        sweeps_run=sweeps,
        policies=policies,
    )


def _absorbing_matrices(est: EstimatorGmdp) -> dict[str, sparse.csr_matrix]:
    """Per-input matrices with bad states rewired to self-loops."""
    n = len(est.states)
    bad = est.bad_states
    mats = {}
    for u in est.inputs:
        rows, cols, vals = [], [], []
        for i in range(n):
            if i in bad:
                rows.append(i)
                cols.append(i)
                vals.append(1.0)
                continue
            row = est.kernel.get((i, u))
            if not row:
                continue
            for j, p in row.items():
                rows.append(i)
                cols.append(j)
                vals.append(p)
        mats[u] = sparse.csr_matrix((vals, (rows, cols)), shape=(n, n), dtype=float)
    return mats


def exact_violation_probability(
    est: EstimatorGmdp, x0: str, inputs
) -> float:
    """Probability of entering the bad set under one fixed input sequence.

    Starts in the estimator state of base initial state `x0`, pushes the
    distribution through the per-input transition matrices with bad
    states made absorbing (mass that enters the revealing set must stay
    there; "within n steps" counts first hits, not occupancy), and
    returns the mass sitting on the bad set at the end.
    """
    start = est.base_initial_index.get(x0)
    if start is None:
        raise ValueError(f"{x0!r} is not an initial state of the base model")
    for u in inputs:
        if u not in est.base.input_index:
            raise ValueError(f"unknown input {u!r}")
    mats = _absorbing_matrices(est)
    v = np.zeros(len(est.states))
    v[start] = 1.0
    for u in inputs:
        v = mats[u].T.dot(v)
    if not est.bad_states:
        return 0.0
    idx = np.fromiter(est.bad_states, dtype=int, count=len(est.bad_states))
    return float(v[idx].sum())


def brute_force_max_violation(est: EstimatorGmdp, x0: str, horizon: int) -> float:
    """Maximum of `exact_violation_probability` over all input sequences.

    Open-loop oracle: enumerates every sequence of length `horizon`.
    Guarded by an enumeration bound of 10^6 sequences.  See the module
    docstring for how this relates to `value_iteration`.
    """
    if horizon < 0:
        raise ValueError(f"horizon must be nonnegative, got {horizon}")
    count = len(est.inputs) ** horizon
    if count > BRUTE_FORCE_LIMIT:
        raise ValueError(
            f"{len(est.inputs)}^{horizon} = {count} sequences exceeds "
            f"the enumeration bound {BRUTE_FORCE_LIMIT}"
        )
    start = est.base_initial_index.get(x0)
    if start is None:
        raise ValueError(f"{x0!r} is not an initial state of the base model")
    if not est.bad_states:
        return 0.0
    mats = {u: m.T.tocsr() for u, m in _absorbing_matrices(est).items()}
    idx = np.fromiter(est.bad_states, dtype=int, count=len(est.bad_states))

    e0 = np.zeros(len(est.states))
    e0[start] = 1.0
    best = 0.0

    # Depth-first over the sequence tree, sharing prefix vectors.
    stack = [(e0, 0)]
    while stack:
        v, depth = stack.pop()
        if depth == horizon:
            best = max(best, float(v[idx].sum()))
            continue
        for u in est.inputs:
            stack.append((mats[u].dot(v), depth + 1))
    return best


def _verdict_kind(kind: str) -> str:
    k = kind.strip().lower()
    if k in ("initial", "initial-state"):
        return "initial-state"
    if k in ("current", "current-state"):
        return "current-state"
    raise ValueError(f"kind must be 'initial' or 'current', got {kind!r}")


def verify_opacity(
    model, kind: str, eps: float, lam: float, horizon: int
) -> OpacityVerdict:
    """Check approximate opacity of the model at the given parameters.

    Builds the estimator matching `kind` ("initial" or "current"), runs
    the classification and value iteration, and compares the worst-case
    revealing probability of every initial state against 1 - lam.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    if eps < 0:
        raise ValueError(f"precision must be nonnegative, got {eps}")
    vkind = _verdict_kind(kind)
    build = build_initial_estimator if vkind == "initial-state" else build_current_estimator
    est = build(model, eps)
    result = value_iteration(est, horizon)

    threshold = 1.0 - lam
    margin = min(
        (threshold - result.per_initial[x0] for x0 in model.initial_states),
        default=threshold,
    )
    opaque = margin >= -VERDICT_TOL
    witness = None
    if not opaque:
        witness = max(
            model.initial_states, key=lambda x0: result.per_initial[x0]
        )
    return OpacityVerdict(
        kind=vkind,
        eps=eps,
        lam=lam,
        horizon=horizon,
        opaque=opaque,
        witness=witness,
        margin=margin,
        per_initial=result.per_initial,
        p=result.p_by_state(est),
        estimator_states=len(est.states),
    )
