"""Coupling-based relations between finite models and guarantee transfer.

Two models are related by matching their transition distributions with
couplings: a joint distribution over successor pairs whose marginals are
the two rows.  The best coupling concentrates as much mass as possible
on a given relation; if mass >= 1 - delta is achievable, one row
delta-simulates the other.  On finite supports this maximum is a
max-flow on a bipartite network, solved here in exact rational
arithmetic so boundary cases (mass exactly 1 - delta) are decided
correctly.

On top of that sit the two opacity-preserving simulation checks between
a concrete model and an abstraction (one for initial-state secrecy, one
for current-state secrecy) and the arithmetic that converts an opacity
verdict on the abstraction into a weaker verdict on the concrete model.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction

from opaquemdp.model import FiniteGmdp, output_distance
from opaquemdp.reachability import OpacityVerdict

__all__ = [
    "COUPLING_TOL",
    "StateRelation",
    "RelationFailure",
    "RelationCheckReport",
    "GuaranteeTransfer",
    "TransferHypothesisError",
    "max_coupling_mass",
    "lifting_exists",
    "check_initsop",
    "check_cursop",
    "transfer_guarantee",
]

# Slack for >= comparisons against 1 - delta: the flow itself is exact,
# but 1 - delta is one float subtraction away from the decimal literal.
COUPLING_TOL = 1e-12

# Distributions must sum to 1 within this tolerance to be coupled.
NORMALIZATION_TOL = 1e-9


@dataclass(frozen=True)
class StateRelation:
    """A set of (concrete state, abstract state) pairs."""

    pairs: frozenset[tuple[str, str]]

    @staticmethod
    def from_pairs(pairs) -> "StateRelation":
        return StateRelation(frozenset((a, b) for a, b in pairs))

    def left_matches(self, a: str) -> set[str]:
        return {y for x, y in self.pairs if x == a}

    def right_matches(self, b: str) -> set[str]:
        return {x for x, y in self.pairs if y == b}

    def validate_against(self, model_a: FiniteGmdp, model_b: FiniteGmdp) -> None:
        known_a = set(model_a.states)
        known_b = set(model_b.states)
        for x, y in self.pairs:
            if x not in known_a:
                raise ValueError(f"relation pair ({x!r}, {y!r}): unknown left state")
            if y not in known_b:
                raise ValueError(f"relation pair ({x!r}, {y!r}): unknown right state")


def _check_normalized(dist, name: str) -> None:
    total = sum(dist.values())
    if abs(total - 1.0) > NORMALIZATION_TOL:
        raise ValueError(f"{name} sums to {total!r}, not 1 within {NORMALIZATION_TOL}")


def _max_flow(capacity: dict[int, dict[int, Fraction]], source: int, sink: int) -> Fraction:
    """Edmonds-Karp in exact rational arithmetic."""
    residual: dict[int, dict[int, Fraction]] = {}
    for u, edges in capacity.items():
        for v, c in edges.items():
            residual.setdefault(u, {})[v] = c
            residual.setdefault(v, {}).setdefault(u, Fraction(0))
    flow = Fraction(0)
    while True:
        parent = {source: source}
        queue = deque([source])
        while queue and sink not in parent:
            u = queue.popleft()
            for v, c in residual[u].items():
                if c > 0 and v not in parent:
                    parent[v] = u
                    queue.append(v)
        if sink not in parent:
            return flow
        bottleneck = None
        v = sink
        while v != source:
            u = parent[v]
            c = residual[u][v]
            bottleneck = c if bottleneck is None else min(bottleneck, c)
            v = u
        v = sink
        while v != source:
            u = parent[v]
            residual[u][v] -= bottleneck
            residual[v][u] += bottleneck
            v = u
        flow += bottleneck


def max_coupling_mass(phi, theta, relation) -> float:
    """Largest probability any coupling of phi and theta puts on the relation.

    `phi` and `theta` are finite distributions given as mappings from
    states to probabilities; both must sum to 1 within 1e-9.  `relation`
    is a `StateRelation` or an iterable of (left, right) pairs.  The
    value is computed as a maximum flow from a source through phi's
    support, across relation edges, through theta's support to a sink.
    Capacities are converted to exact rationals, so the returned mass is
    the exact optimum for the given floating-point inputs.
    """
    pairs = relation.pairs if isinstance(relation, StateRelation) else {
        (a, b) for a, b in relation
    }
    _check_normalized(phi, "phi")
    _check_normalized(theta, "theta")
    supp_a = [a for a, p in phi.items() if p > 0]
    supp_b = [b for b, p in theta.items() if p > 0]
    if not supp_a or not supp_b:
        return 0.0

    source, sink = 0, 1
    a_id = {a: 2 + i for i, a in enumerate(supp_a)}
    b_id = {b: 2 + len(supp_a) + i for i, b in enumerate(supp_b)}
    capacity: dict[int, dict[int, Fraction]] = {source: {}, sink: {}}
    for a in supp_a:
        capacity[source][a_id[a]] = Fraction(phi[a])
        capacity.setdefault(a_id[a], {})
    for b in supp_b:
        capacity.setdefault(b_id[b], {})[sink] = Fraction(theta[b])
    for a in supp_a:
        for b in supp_b:
            if (a, b) in pairs:
                capacity[a_id[a]][b_id[b]] = Fraction(1)
    return float(_max_flow(capacity, source, sink))


def lifting_exists(phi, theta, relation, delta: float) -> tuple[bool, float]:
    """Whether some coupling puts mass >= 1 - delta on the relation."""
    mass = max_coupling_mass(phi, theta, relation)
    return mass >= 1.0 - delta - COUPLING_TOL, mass


@dataclass
class RelationFailure:
    """One violated condition, with the states and numbers involved."""

    condition: str
    state_a: str | None = None
    state_b: str | None = None
    input: str | None = None
    value: float | None = None
    detail: str = ""


@dataclass
class RelationCheckReport:
    """Outcome of a simulation-relation check between two models."""

    kind: str
    eps: float
    delta: float
    holds: bool
    failures: list[RelationFailure] = field(default_factory=list)
    interpreted: tuple[str, ...] = ()


def _common_checks(model_a, model_b, relation, eps, delta):
    if model_a.output_dim != model_b.output_dim:
        raise ValueError(
            f"output dimensions differ: {model_a.output_dim} vs {model_b.output_dim}"
        )
    if eps < 0:
        raise ValueError(f"output precision must be nonnegative, got {eps}")
    if not 0.0 <= delta <= 1.0:
        raise ValueError(f"delta must lie in [0, 1], got {delta}")
    relation.validate_against(model_a, model_b)


def _pair_distance(model_a, model_b, x, y) -> float:
    ya = model_a.outputs[x]
    yb = model_b.outputs[y]
    return max(abs(p - q) for p, q in zip(ya, yb))


def _sorted_pairs(relation, model_a, model_b):
    ia, ib = model_a.state_index, model_b.state_index
    return sorted(relation.pairs, key=lambda xy: (ia[xy[0]], ib[xy[1]]))


def check_initsop(
    model_a: FiniteGmdp,
    model_b: FiniteGmdp,
    relation: StateRelation,
    eps: float,
    delta: float,
) -> RelationCheckReport:
    """Check that the relation preserves initial-state secrecy.

    `model_a` is the concrete model, `model_b` the abstraction.  The
    conditions, labeled in the report:

    * 1a: every secret initial state of A has a related secret initial
      state in B;
    * 1b: every non-secret initial state of B has a related non-secret
      initial state in A;
    * 2: related states have outputs within eps of each other;
    * 3a: for each related pair and each B-input, some A-input's
      successor row couples with mass >= 1 - delta on the relation;
    * 3b: symmetrically for each A-input.

    A pair failing condition 2 is excluded from the 3a/3b scan (the
    coupling conditions are meaningless for pairs that should not be
    related), but every pair is checked and every failure reported.
    """
    _common_checks(model_a, model_b, relation, eps, delta)
    failures: list[RelationFailure] = []

    secret_a, secret_b = model_a.secret_states, model_b.secret_states
    init_a, init_b = set(model_a.initial_states), set(model_b.initial_states)
    for x0 in model_a.initial_states:
        if x0 not in secret_a:
            continue
        if not (relation.left_matches(x0) & init_b & secret_b):
            failures.append(
                RelationFailure(
                    condition="1a",
                    state_a=x0,
                    detail=f"secret initial state {x0!r} has no related secret "
                    "initial state in the abstraction",
                )
            )
    for y0 in model_b.initial_states:
        if y0 in secret_b:
            continue
        if not (relation.right_matches(y0) & (init_a - secret_a)):
            failures.append(
                RelationFailure(
                    condition="1b",
                    state_b=y0,
                    detail=f"non-secret initial state {y0!r} of the abstraction "
                    "has no related non-secret initial state",
                )
            )

    threshold = 1.0 - delta - COUPLING_TOL
    cache: dict[tuple[str, str, str, str], float] = {}

    def coupled_mass(x, u, y, v) -> float:
        key = (x, u, y, v)
        got = cache.get(key)
        if got is None:
            got = max_coupling_mass(model_a.row(x, u), model_b.row(y, v), relation)
            cache[key] = got
        return got

    for x, y in _sorted_pairs(relation, model_a, model_b):
        dist = _pair_distance(model_a, model_b, x, y)
        if dist > eps + COUPLING_TOL:
            failures.append(
                RelationFailure(
                    condition="2",
                    state_a=x,
                    state_b=y,
                    value=dist,
                    detail=f"outputs of {x!r} and {y!r} are {dist:.6g} apart, "
                    f"beyond {eps}",
                )
            )
            continue
        for v in model_b.inputs:
            best = max(coupled_mass(x, u, y, v) for u in model_a.inputs)
            if best < threshold:
                failures.append(
                    RelationFailure(
                        condition="3a",
                        state_a=x,
                        state_b=y,
                        input=v,
                        value=best,
                        detail=f"no input of the concrete model couples with "
                        f"({y!r}, {v!r}); best mass {best:.6g} < 1-delta",
                    )
                )
        for u in model_a.inputs:
            best = max(coupled_mass(x, u, y, v) for v in model_b.inputs)
            if best < threshold:
                failures.append(
                    RelationFailure(
                        condition="3b",
                        state_a=x,
                        state_b=y,
                        input=u,
                        value=best,
                        detail=f"no input of the abstraction couples with "
                        f"({x!r}, {u!r}); best mass {best:.6g} < 1-delta",
                    )
                )
    return RelationCheckReport(
        kind="InitSOP", eps=eps, delta=delta, holds=not failures, failures=failures
    )


def _restricted(relation: StateRelation, left: set[str], right: set[str]) -> StateRelation:
    return StateRelation(
        frozenset((a, b) for a, b in relation.pairs if a in left and b in right)
    )


def check_cursop(
    model_a: FiniteGmdp,
    model_b: FiniteGmdp,
    relation: StateRelation,
    eps: float,
    delta: float,
) -> RelationCheckReport:
    """Check that the relation preserves current-state secrecy.

    Conditions 1a/1b require initial states to be related in both
    directions with no secret restriction; condition 2 is the output
    closeness of `check_initsop`.  Conditions 3a/3c require coupling
    mass >= 1 - delta on the relation for every A-input (3a) and every
    B-input (3c), each matched by some input on the other side.

    Conditions 3b/3d constrain where the coupled mass lands.  Stated
    over realizations ("if the successor is secret..."), they do not
    translate uniquely to distributions; the reading checked here is:

    * 3b: for every A-input whose row puts mass s > 0 on A's secret
      states, some B-input admits a coupling placing mass >=
      (1 - delta) * s on relation pairs that are secret on both sides;
    * 3d: for every B-input whose row puts mass t > 0 outside B's
      secret states, some A-input admits a coupling placing mass >=
      (1 - delta) * t on relation pairs that are non-secret on both
      sides.

    The report marks 3b/3d as interpreted so downstream consumers can
    treat them with appropriate caution.
    """
    _common_checks(model_a, model_b, relation, eps, delta)
    failures: list[RelationFailure] = []

    init_a, init_b = set(model_a.initial_states), set(model_b.initial_states)
    for x0 in model_a.initial_states:
        if not (relation.left_matches(x0) & init_b):
            failures.append(
                RelationFailure(
                    condition="1a",
                    state_a=x0,
                    detail=f"initial state {x0!r} has no related initial state "
                    "in the abstraction",
                )
            )
    for y0 in model_b.initial_states:
        if not (relation.right_matches(y0) & init_a):
            failures.append(
                RelationFailure(
                    condition="1b",
                    state_b=y0,
                    detail=f"initial state {y0!r} of the abstraction has no "
                    "related initial state",
                )
            )

    secret_a, secret_b = set(model_a.secret_states), set(model_b.secret_states)
    nonsecret_a = set(model_a.states) - secret_a
    nonsecret_b = set(model_b.states) - secret_b
    secret_relation = _restricted(relation, secret_a, secret_b)
    nonsecret_relation = _restricted(relation, nonsecret_a, nonsecret_b)
    threshold = 1.0 - delta - COUPLING_TOL

    for x, y in _sorted_pairs(relation, model_a, model_b):
        dist = _pair_distance(model_a, model_b, x, y)
        if dist > eps + COUPLING_TOL:
            failures.append(
                RelationFailure(
                    condition="2",
                    state_a=x,
                    state_b=y,
                    value=dist,
                    detail=f"outputs of {x!r} and {y!r} are {dist:.6g} apart, "
                    f"beyond {eps}",
                )
            )
            continue
        rows_a = {u: model_a.row(x, u) for u in model_a.inputs}
        rows_b = {v: model_b.row(y, v) for v in model_b.inputs}

        for u, row_a in rows_a.items():
            best = max(
                max_coupling_mass(row_a, rows_b[v], relation) for v in model_b.inputs
            )
            if best < threshold:
                failures.append(
                    RelationFailure(
                        condition="3a",
                        state_a=x,
                        state_b=y,
                        input=u,
                        value=best,
                        detail=f"no input of the abstraction couples with "
                        f"({x!r}, {u!r}); best mass {best:.6g} < 1-delta",
                    )
                )
            secret_mass = sum(p for t, p in row_a.items() if t in secret_a)
            if secret_mass > 0:
                need = (1.0 - delta) * secret_mass - COUPLING_TOL
                best_sec = max(
                    max_coupling_mass(row_a, rows_b[v], secret_relation)
                    for v in model_b.inputs
                )
                if best_sec < need:
                    failures.append(
                        RelationFailure(
                            condition="3b",
                            state_a=x,
                            state_b=y,
                            input=u,
                            value=best_sec,
                            detail=f"secret-landing mass {secret_mass:.6g} of "
                            f"({x!r}, {u!r}) cannot be matched inside the secret "
                            f"sets; best mass {best_sec:.6g}",
                        )
                    )
        for v, row_b in rows_b.items():
            best = max(
                max_coupling_mass(rows_a[u], row_b, relation) for u in model_a.inputs
            )
            if best < threshold:
                failures.append(
                    RelationFailure(
                        condition="3c",
                        state_a=x,
                        state_b=y,
                        input=v,
                        value=best,
                        detail=f"no input of the concrete model couples with "
                        f"({y!r}, {v!r}); best mass {best:.6g} < 1-delta",
                    )
                )
            nonsecret_mass = sum(p for t, p in row_b.items() if t not in secret_b)
            if nonsecret_mass > 0:
                need = (1.0 - delta) * nonsecret_mass - COUPLING_TOL
                best_ns = max(
                    max_coupling_mass(rows_a[u], row_b, nonsecret_relation)
                    for u in model_a.inputs
                )
                if best_ns < need:
                    failures.append(
                        RelationFailure(
                            condition="3d",
                            state_a=x,
                            state_b=y,
                            input=v,
                            value=best_ns,
                            detail=f"non-secret-landing mass {nonsecret_mass:.6g} "
                            f"of ({y!r}, {v!r}) cannot be matched outside the "
                            f"secret sets; best mass {best_ns:.6g}",
                        )
                    )
    return RelationCheckReport(
        kind="CurSOP",
        eps=eps,
        delta=delta,
        holds=not failures,
        failures=failures,
        interpreted=("3b", "3d"),
    )


class TransferHypothesisError(ValueError):
    """The guarantee-transfer theorem does not apply to these inputs.

    Raised when the abstract verdict is not opaque, or when the
    horizon-degradation term gamma = 1 - (1-delta)^n exceeds the
    abstract confidence level.  This is a signal that nothing can be
    concluded, not a verdict that the concrete system fails.
    """


@dataclass
class GuaranteeTransfer:
    """Concrete-system guarantee derived from an abstract verdict."""

    kind: str
    eps_abstract: float
    lambda_abstract: float
    eps_rel: float
    delta: float
    horizon: int
    gamma_delta: float
    eps_concrete: float
    lambda_concrete: float


def transfer_guarantee(
    abstract_verdict: OpacityVerdict, eps_rel: float, delta: float
) -> GuaranteeTransfer:
    """Convert an opacity verdict on the abstraction into a concrete one.

    Given that the abstraction is opaque at (eps_abstract, lambda) over
    horizon n and that it simulates the concrete model at output
    precision eps_rel and coupling defect delta, the concrete model is
    opaque at precision eps_abstract + 2 * eps_rel and level
    (1 - gamma) * (lambda - gamma) where gamma = 1 - (1-delta)^n.

    Raises TransferHypothesisError when the verdict is not opaque or
    when gamma exceeds lambda (the degradation swallows the guarantee).
    """
    if eps_rel < 0:
        raise ValueError(f"relation precision must be nonnegative, got {eps_rel}")
    if not 0.0 <= delta <= 1.0:
        raise ValueError(f"delta must lie in [0, 1], got {delta}")
    if not abstract_verdict.opaque:
        raise TransferHypothesisError(
            "the abstract verdict is not opaque; there is no guarantee to transfer"
        )
    n = abstract_verdict.horizon
    lam = abstract_verdict.lam
    one_minus_gamma = (1.0 - delta) ** n
    gamma = 1.0 - one_minus_gamma
    if gamma > lam + COUPLING_TOL:
        raise TransferHypothesisError(
            f"horizon degradation {gamma:.6g} exceeds the abstract level {lam:.6g}; "
            "the transfer theorem does not apply (shrink delta or the horizon)"
        )
    return GuaranteeTransfer(
        kind=abstract_verdict.kind,
        eps_abstract=abstract_verdict.eps,
        lambda_abstract=lam,
        eps_rel=eps_rel,
        delta=delta,
        horizon=n,
        gamma_delta=gamma,
        eps_concrete=abstract_verdict.eps + 2.0 * eps_rel,
        lambda_concrete=one_minus_gamma * (lam - gamma),
    )
