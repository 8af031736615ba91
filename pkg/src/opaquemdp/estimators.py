"""Observer-side state estimators for opacity analysis.

An outside observer sees the output sequence of a run, blurred to
precision ``eps``, and maintains the set of states consistent with what
it saw.  These constructions fold that set into the system state,
yielding a finite MDP (over the same inputs) whose runs mirror the
original system's runs together with the observer's knowledge.  Opacity
questions then reduce to reachability of designated "revealing" states.

Two estimators are provided:

* the *initial-state* estimator tracks pairs (candidate initial state,
  where that candidate could be now), so that a run reveals the secret
  exactly when every consistent initial candidate is secret;
* the *current-state* estimator tracks the set of states the system
  could be in right now, plus a sticky flag that records whether that
  set was ever contained in the secret set.
"""

from __future__ import annotations

import warnings
from collections import deque
from dataclasses import dataclass

from opaquemdp.model import (
    BALL_TOL,
    PROB_FLOOR,
    FiniteGmdp,
    check_initial_assumption,
    distance_to_vector,
    eps_ball,
)

__all__ = [
    "InitialEstimatorState",
    "CurrentEstimatorState",
    "EstimatorGmdp",
    "build_initial_estimator",
    "build_current_estimator",
    "initial_state_estimate",
]


@dataclass(frozen=True)
class InitialEstimatorState:
    """One state of the initial-state estimator.

    `base_state` is the actual system state.  `estimate_pairs` holds the
    observer's knowledge: pairs ``(candidate_initial, current_shadow)``
    meaning "the run could have started in `candidate_initial`, in which
    case the system could be in `current_shadow` now".  Pairs are kept
    sorted by state declaration order so equal knowledge compares equal.
    """

    base_state: str
    estimate_pairs: tuple[tuple[str, str], ...]

    def candidate_initials(self) -> frozenset[str]:
        return frozenset(a for a, _b in self.estimate_pairs)


@dataclass(frozen=True)
class CurrentEstimatorState:
    """One state of the current-state estimator.

    `estimate` is the set of states consistent with the outputs seen so
    far, sorted by declaration order.  `revealed` is a sticky flag: 1
    once the estimate has ever been contained in the secret set.
    """

    base_state: str
    estimate: tuple[str, ...]
    revealed: int


@dataclass
class EstimatorGmdp:
    """A finite estimator MDP, indexed for the numeric routines.

    States are `InitialEstimatorState` or `CurrentEstimatorState`
    records, listed in construction (BFS) order.  `kernel` maps
    ``(state_index, input)`` to ``{successor_index: probability}``; the
    probabilities are inherited from the base model, so row sums match
    the base rows exactly.  `bad_states` are the revealing states.
    `base_initial_index` maps each base initial state to the estimator
    state its runs start in.
    """

    kind: str
    eps: float
    base: FiniteGmdp
    inputs: tuple[str, ...]
    states: list
    ids: list[str]
    initial_states: list[int]
    bad_states: frozenset[int]
    kernel: dict[tuple[int, str], dict[int, float]]
    base_initial_index: dict[str, int]

    def __len__(self) -> int:
        return len(self.states)


def _format_pairs(pairs: tuple[tuple[str, str], ...]) -> str:
    inner = ",".join(f"({a},{b})" for a, b in pairs)
    return "{" + inner + "}"


def initial_estimator_id(state: InitialEstimatorState) -> str:
    return f"{state.base_state}|{_format_pairs(state.estimate_pairs)}"


def current_estimator_id(state: CurrentEstimatorState) -> str:
    return f"{state.base_state}|{{{','.join(state.estimate)}}}|{state.revealed}"


def _ball_cache(model: FiniteGmdp, eps: float) -> dict[str, frozenset[str]]:
    return {s: frozenset(eps_ball(model, s, eps)) for s in model.states}


def build_initial_estimator(model: FiniteGmdp, eps: float) -> EstimatorGmdp:
    """Construct the reachable part of the initial-state estimator.

    Each estimator state pairs the actual system state with the
    observer's set of (candidate initial, current shadow) pairs.  From
    ``(x, pairs)`` under input u, the system moves to x' with the base
    probability and every shadow is advanced through *every* input and
    filtered by output consistency with x' at precision `eps`; the
    observer does not see inputs, hence the union over inputs.  A state
    is revealing ("bad") when every remaining candidate initial state is
    secret.

    Issues a UserWarning when some initial state is already exposed at
    time zero, since then the secret leaks before any dynamics happen.
    """
    if eps < 0:
        raise ValueError(f"precision must be nonnegative, got {eps}")
    if not check_initial_assumption(model, eps):
        warnings.warn(
            "some initial state is revealed at time zero at this precision; "
            "the opacity analysis is vacuous for it",
            UserWarning,
            stacklevel=2,
        )
    ball = _ball_cache(model, eps)
    succ_any = model.successors_any_input
    sidx = model.state_index
    initial_set = set(model.initial_states)
    secret = model.secret_states

    def sort_pairs(pairs: set[tuple[str, str]]) -> tuple[tuple[str, str], ...]:
        return tuple(sorted(pairs, key=lambda ab: (sidx[ab[0]], sidx[ab[1]])))

    index_of: dict[InitialEstimatorState, int] = {}
    states: list[InitialEstimatorState] = []
    queue: deque[int] = deque()

    def intern(state: InitialEstimatorState) -> int:
        found = index_of.get(state)
        if found is None:
            found = len(states)
            index_of[state] = found
            states.append(state)
            queue.append(found)
        return found

    initial_indices: list[int] = []
    base_initial_index: dict[str, int] = {}
    for x0 in model.initial_states:
        pairs = {(c, c) for c in ball[x0] & initial_set}
        assert pairs, "time-zero estimate is empty; output map is inconsistent"
        idx = intern(InitialEstimatorState(x0, sort_pairs(pairs)))
        base_initial_index[x0] = idx
        if idx not in initial_indices:
            initial_indices.append(idx)

    kernel: dict[tuple[int, str], dict[int, float]] = {}
    while queue:
        i = queue.popleft()
        st = states[i]
        for u in model.inputs:
            row = model.row(st.base_state, u)
            out: dict[int, float] = {}
            for x_next, p in row.items():
                if p <= PROB_FLOOR:
                    continue
                consistent = ball[x_next]
                next_pairs = {
                    (cand, shadow_next)
                    for cand, shadow in st.estimate_pairs
                    for shadow_next in succ_any[shadow]
                    if shadow_next in consistent
                }
                assert next_pairs, (
                    "estimate emptied on a positive-probability move; "
                    "the true run is always self-consistent"
                )
                j = intern(InitialEstimatorState(x_next, sort_pairs(next_pairs)))
                out[j] = out.get(j, 0.0) + p
            if out:
                kernel[(i, u)] = out

    bad = frozenset(
        i for i, st in enumerate(states) if st.candidate_initials() <= secret
    )
    return EstimatorGmdp(
        kind="initial",
        eps=eps,
        base=model,
        inputs=model.inputs,
        states=states,
        ids=[initial_estimator_id(s) for s in states],
        initial_states=initial_indices,
        bad_states=bad,
        kernel=kernel,
        base_initial_index=base_initial_index,
    )


def build_current_estimator(model: FiniteGmdp, eps: float) -> EstimatorGmdp:
    """Construct the reachable part of the current-state estimator.

    Each estimator state carries the actual system state, the set of
    states consistent with the observations so far, and a sticky flag
    that trips when that set falls inside the secret set.  The estimate
    advances through every input (the observer does not see inputs) and
    is filtered by output consistency with the new actual state at
    precision `eps`.  Revealing ("bad") states are exactly those with
    the flag set; once tripped it never resets.

    The flag starts at 0: the time-zero estimate is not itself checked
    against the secret set, only post-transition estimates are.  The
    same UserWarning as for the initial-state estimator applies.
    """
    if eps < 0:
        raise ValueError(f"precision must be nonnegative, got {eps}")
    if not check_initial_assumption(model, eps):
        warnings.warn(
            "some initial state is revealed at time zero at this precision; "
            "the opacity analysis is vacuous for it",
            UserWarning,
            stacklevel=2,
        )
    ball = _ball_cache(model, eps)
    succ_any = model.successors_any_input
    sidx = model.state_index
    initial_set = set(model.initial_states)
    secret = model.secret_states

    def sort_states(xs: set[str]) -> tuple[str, ...]:
        return tuple(sorted(xs, key=sidx.__getitem__))

    index_of: dict[CurrentEstimatorState, int] = {}
    states: list[CurrentEstimatorState] = []
    queue: deque[int] = deque()

    def intern(state: CurrentEstimatorState) -> int:
        found = index_of.get(state)
        if found is None:
            found = len(states)
            index_of[state] = found
            states.append(state)
            queue.append(found)
        return found

    initial_indices: list[int] = []
    base_initial_index: dict[str, int] = {}
    for x0 in model.initial_states:
        estimate = ball[x0] & initial_set
        assert estimate, "time-zero estimate is empty; output map is inconsistent"
        idx = intern(CurrentEstimatorState(x0, sort_states(set(estimate)), 0))
        base_initial_index[x0] = idx
        if idx not in initial_indices:
            initial_indices.append(idx)

    kernel: dict[tuple[int, str], dict[int, float]] = {}
    while queue:
        i = queue.popleft()
        st = states[i]
        estimate_set = set(st.estimate)
        for u in model.inputs:
            row = model.row(st.base_state, u)
            out: dict[int, float] = {}
            for x_next, p in row.items():
                if p <= PROB_FLOOR:
                    continue
                consistent = ball[x_next]
                next_estimate = {
                    t
                    for x in estimate_set
                    for t in succ_any[x]
                    if t in consistent
                }
                assert next_estimate, (
                    "estimate emptied on a positive-probability move; "
                    "the true run is always self-consistent"
                )
                flag = st.revealed or (1 if next_estimate <= secret else 0)
                j = intern(
                    CurrentEstimatorState(x_next, sort_states(next_estimate), flag)
                )
                out[j] = out.get(j, 0.0) + p
            if out:
                kernel[(i, u)] = out

    bad = frozenset(i for i, st in enumerate(states) if st.revealed)
    return EstimatorGmdp(
        kind="current",
        eps=eps,
        base=model,
        inputs=model.inputs,
        states=states,
        ids=[current_estimator_id(s) for s in states],
        initial_states=initial_indices,
        bad_states=bad,
        kernel=kernel,
        base_initial_index=base_initial_index,
    )


def initial_state_estimate(model: FiniteGmdp, eps: float, observed) -> set[str]:
    """Initial states consistent with an observed output sequence.

    `observed` is a sequence of output vectors (scalars are accepted for
    one-dimensional outputs), one per time step starting at time zero.
    Returns every initial state that some run of the model could have
    produced while staying within `eps` of each observation.
    """
    seq = [(y,) if not hasattr(y, "__len__") else tuple(y) for y in observed]
    if not seq:
        raise ValueError("need at least the time-zero observation")
    succ_any = model.successors_any_input

    live = {
        (x0, x0)
        for x0 in model.initial_states
        if distance_to_vector(model, x0, seq[0]) <= eps + BALL_TOL
    }
    for y in seq[1:]:
        live = {
            (cand, t)
            for cand, shadow in live
            for t in succ_any[shadow]
            if distance_to_vector(model, t, y) <= eps + BALL_TOL
        }
        if not live:
            return set()
    return {cand for cand, _shadow in live}
