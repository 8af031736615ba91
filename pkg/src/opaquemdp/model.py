"""Finite stochastic models with metric output maps.

A model couples a finite Markov decision process with an output map into
a metric space (here R^m under the max norm).  An observer never sees
states, only outputs, and cannot distinguish outputs closer than some
precision ``eps``.  Everything downstream (estimator construction,
opacity verdicts, abstraction relations) is built on top of this class.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

__all__ = [
    "ROW_SUM_TOL",
    "PROB_FLOOR",
    "BALL_TOL",
    "FiniteGmdp",
    "ValidationReport",
    "validate",
    "output_distance",
    "eps_ball",
    "initial_assumption_violations",
    "check_initial_assumption",
]

# A kernel row must sum to 1 within this tolerance to count as stochastic.
ROW_SUM_TOL = 1e-9

# Stored probabilities at or below this floor are treated as structural zeros.
PROB_FLOOR = 1e-12

# Output-distance comparisons absorb decimal-literal rounding: 0.25 - 0.3
# differs from -0.05 by an ulp, and boundary cases like these are routine
# (grid cells at exactly eps apart).  Semantic gaps are never this small.
BALL_TOL = 1e-12


@dataclass(frozen=True)
class FiniteGmdp:
    """A finite MDP with designated initial states, secret states and outputs.

    Parameters
    ----------
    states : tuple of str
        State identifiers.  Order is significant: it fixes the indexing
        used by the numeric routines and all tie-breaking.
    inputs : tuple of str
        Input identifiers, in declaration order.
    initial_states : tuple of str
        States the system may start in (subset of `states`).
    secret_states : frozenset of str
        States whose visit (or occupancy at time zero) must stay hidden.
    output_dim : int
        Dimension of the output vectors.
    outputs : dict
        Maps every state id to a tuple of `output_dim` floats.
    kernel : dict
        Maps ``(state, input)`` to a dict ``{successor: probability}``.
        Entries at or below `PROB_FLOOR` should be omitted; support
        queries treat stored entries as positive-probability moves.
    """

    states: tuple[str, ...]
    inputs: tuple[str, ...]
    initial_states: tuple[str, ...]
    secret_states: frozenset[str]
    output_dim: int
    outputs: dict[str, tuple[float, ...]]
    kernel: dict[tuple[str, str], dict[str, float]]

    @cached_property
    def state_index(self) -> dict[str, int]:
        return {s: i for i, s in enumerate(self.states)}

    @cached_property
    def input_index(self) -> dict[str, int]:
        return {u: i for i, u in enumerate(self.inputs)}

    def index(self, state: str) -> int:
        try:
            return self.state_index[state]
        except KeyError:
            raise ValueError(f"unknown state {state!r}") from None

    def row(self, state: str, inp: str) -> dict[str, float]:
        """Transition distribution out of `state` under `inp` (may be empty)."""
        return self.kernel.get((state, inp), {})

    def successors(self, state: str, inp: str) -> tuple[str, ...]:
        row = self.row(state, inp)
        return tuple(t for t, p in row.items() if p > PROB_FLOOR)

    @cached_property
    def successors_any_input(self) -> dict[str, frozenset[str]]:
        """For each state, the union of supports over all inputs."""
        out: dict[str, set[str]] = {s: set() for s in self.states}
        for (s, _u), row in self.kernel.items():
            if s in out:
                out[s].update(t for t, p in row.items() if p > PROB_FLOOR)
        return {s: frozenset(ts) for s, ts in out.items()}


@dataclass
class ValidationReport:
    """Outcome of the structural checks on a model."""

    valid: bool
    failures: list[str] = field(default_factory=list)


def validate(model: FiniteGmdp) -> ValidationReport:
    """Check the structural invariants of a model.

    Verifies unique identifiers, membership of the designated sets,
    output map shape, and that every kernel row is a probability
    distribution (sums to 1 within `ROW_SUM_TOL`, entries in [0, 1]).
    Returns a report listing each violated invariant; an empty failure
    list means the model is well formed.
    """
    failures: list[str] = []
    if len(set(model.states)) != len(model.states):
        failures.append("duplicate state identifiers")
    if len(set(model.inputs)) != len(model.inputs):
        failures.append("duplicate input identifiers")
    if not model.states:
        failures.append("empty state set")
    if not model.inputs:
        failures.append("empty input set")
    state_set = set(model.states)
    input_set = set(model.inputs)

    if not model.initial_states:
        failures.append("empty initial state set")
    for s in model.initial_states:
        if s not in state_set:
            failures.append(f"initial state {s!r} is not a declared state")
    if len(set(model.initial_states)) != len(model.initial_states):
        failures.append("duplicate initial states")
    for s in model.secret_states:
        if s not in state_set:
            failures.append(f"secret state {s!r} is not a declared state")

    if model.output_dim < 1:
        failures.append(f"output_dim must be >= 1, got {model.output_dim}")
    for s in model.states:
        y = model.outputs.get(s)
        if y is None:
            failures.append(f"state {s!r} has no output")
        elif len(y) != model.output_dim:
            failures.append(
                f"output of state {s!r} has length {len(y)}, expected {model.output_dim}"
            )
    for s in model.outputs:
        if s not in state_set:
            failures.append(f"output declared for unknown state {s!r}")

    for (s, u), row in model.kernel.items():
        if s not in state_set:
            failures.append(f"kernel row from unknown state {s!r}")
            continue
        if u not in input_set:
            failures.append(f"kernel row under unknown input {u!r}")
            continue
        for t, p in row.items():
            if t not in state_set:
                failures.append(f"transition {s!r} -{u!r}-> unknown state {t!r}")
            if not (0.0 <= p <= 1.0):
                failures.append(
                    f"probability of {s!r} -{u!r}-> {t!r} is {p!r}, outside [0, 1]"
                )
    for s in model.states:
        for u in model.inputs:
            row = model.row(s, u)
            total = sum(row.values())
            if abs(total - 1.0) > ROW_SUM_TOL:
                failures.append(
                    f"row ({s!r}, {u!r}) sums to {total!r}, not 1 within {ROW_SUM_TOL}"
                )
    return ValidationReport(valid=not failures, failures=failures)


def _output(model: FiniteGmdp, state: str) -> tuple[float, ...]:
    model.index(state)
    return model.outputs[state]


def output_distance(model: FiniteGmdp, a: str, b: str) -> float:
    """Max-norm distance between the outputs of two states."""
    ya = _output(model, a)
    yb = _output(model, b)
    return max(abs(p - q) for p, q in zip(ya, yb))


def distance_to_vector(model: FiniteGmdp, state: str, y) -> float:
    """Max-norm distance between a state's output and an arbitrary vector."""
    ys = _output(model, state)
    if len(y) != len(ys):
        raise ValueError(
            f"output vector has length {len(y)}, model emits length {len(ys)}"
        )
    return max(abs(p - q) for p, q in zip(ys, y))


def eps_ball(model: FiniteGmdp, state: str, eps: float) -> set[str]:
    """States whose output lies within `eps` of `state`'s output (inclusive).

    The comparison allows `BALL_TOL` of slack so that distances that are
    equal to eps up to float rounding count as inside.  Raises
    ValueError for an unknown state or a negative radius.
    """
    if eps < 0:
        raise ValueError(f"radius must be nonnegative, got {eps}")
    model.index(state)
    return {
        s
        for s in model.states
        if output_distance(model, state, s) <= eps + BALL_TOL
    }


def initial_assumption_violations(model: FiniteGmdp, eps: float) -> list[str]:
    """Initial states that are already exposed at time zero.

    An initial state x is exposed when every initial state that looks
    like x at precision `eps` is secret: the very first observation then
    reveals the secret and no estimator-based analysis can help.
    Returns the offending initial states in declaration order.
    """
    secret = model.secret_states
    bad: list[str] = []
    init = set(model.initial_states)
    for x0 in model.initial_states:
        candidates = eps_ball(model, x0, eps) & init
        if candidates <= secret:
            bad.append(x0)
    return bad


def check_initial_assumption(model: FiniteGmdp, eps: float) -> bool:
    """True when no initial state is exposed at time zero (see above)."""
    return not initial_assumption_violations(model, eps)
