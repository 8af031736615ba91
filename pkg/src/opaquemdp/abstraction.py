"""Finite abstractions of 1-D affine stochastic systems.

The continuous model is x(k+1) = a*x(k) + b*u(k) + d*w(k) with standard
normal noise w, output y = c*x, state constrained to an interval.  The
abstraction grids the interval into cells of width eta, takes cell
centers as representatives, and integrates the Gaussian transition
density over cells to get a finite kernel.  Gaussian tails that escape
the interval are clamped into the boundary cells so rows stay
stochastic; the clamped amount is reported per row so users can judge
how much the truncation distorts the model.

Whether the abstraction is usable for opacity transfer is a separate
question, answered by closed-form feasibility checks on a user-supplied
incremental stability certificate with linear bounds: they produce the
largest admissible cell width and, for current-state secrecy, the least
admissible inflation of the secret set.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from opaquemdp.model import PROB_FLOOR, FiniteGmdp

__all__ = [
    "DeltaIssCertificate",
    "ContinuousAffineSystem",
    "AbstractionParams",
    "FeasibilityReport",
    "check_initsop_params",
    "check_cursop_params",
    "relation_radius",
    "gaussian_cell_masses",
    "build_abstraction",
]

# Slack for feasibility comparisons at decimal-literal boundaries.
FEAS_TOL = 1e-12

# Division slack so ceil(span/eta) is stable when the ratio is integral.
CEIL_TOL = 1e-12


@dataclass(frozen=True)
class DeltaIssCertificate:
    """Incremental input-to-state stability certificate with linear bounds.

    Certifies a function V with alpha_lo*|x-x'| <= V(x,x') <=
    alpha_hi*|x-x'| whose expected one-step decrease is at least
    kappa*V(x,x') - rho*|u-u'|, together with a gamma slope used in the
    cell-width bound and the output Lipschitz slope ell
    (|h(x)-h(x')| <= ell*|x-x'|).  Only linear comparison functions are
    supported: every inverse and composition in the feasibility bounds
    then evaluates in closed form.
    """

    alpha_lo: float
    alpha_hi: float
    kappa: float
    rho: float
    gamma: float
    ell: float

    def __post_init__(self):
        if not 0 < self.alpha_lo <= self.alpha_hi:
            raise ValueError(
                f"need 0 < alpha_lo <= alpha_hi, got {self.alpha_lo}, {self.alpha_hi}"
            )
        if not 0 < self.kappa <= 1:
            raise ValueError(f"decrease rate kappa must lie in (0, 1], got {self.kappa}")
        if self.rho < 0:
            raise ValueError(f"input sensitivity rho must be >= 0, got {self.rho}")
        if self.gamma <= 0:
            raise ValueError(f"slope gamma must be positive, got {self.gamma}")
        if self.ell <= 0:
            raise ValueError(f"output slope ell must be positive, got {self.ell}")


@dataclass(frozen=True)
class ContinuousAffineSystem:
    """1-D affine system with additive standard-normal noise.

    Exactly one of `input_values` (finite input set) and
    `input_interval` (interval to be gridded) must be given.
    `secret_domain` is a union of closed intervals inside the state
    domain; `initial_domain` a single closed interval.
    """

    a: float
    b: float
    c: float
    d: float
    state_domain: tuple[float, float]
    initial_domain: tuple[float, float]
    secret_domain: tuple[tuple[float, float], ...]
    certificate: DeltaIssCertificate
    input_values: tuple[float, ...] | None = None
    input_interval: tuple[float, float] | None = None

    def __post_init__(self):
        if self.d < 0:
            raise ValueError(f"noise coefficient must be >= 0, got {self.d}")
        x_lo, x_hi = self.state_domain
        if not x_lo < x_hi:
            raise ValueError(f"state domain {self.state_domain} is empty")

        def inside(lo, hi, what):
            if not (x_lo <= lo <= hi <= x_hi):
                raise ValueError(
                    f"{what} [{lo}, {hi}] not contained in the state domain "
                    f"[{x_lo}, {x_hi}]"
                )

        inside(*self.initial_domain, "initial domain")
        for piece in self.secret_domain:
            inside(*piece, "secret interval")
        if (self.input_values is None) == (self.input_interval is None):
            raise ValueError(
                "give exactly one of input_values (finite set) or "
                "input_interval (interval)"
            )
        if self.input_values is not None and not self.input_values:
            raise ValueError("input_values must be nonempty")
        if self.input_interval is not None:
            u_lo, u_hi = self.input_interval
            if not u_lo < u_hi:
                raise ValueError(f"input interval {self.input_interval} is empty")


@dataclass(frozen=True)
class AbstractionParams:
    """Quantization parameters and relation tolerances.

    eta: state cell width; theta: secret-set inflation radius;
    mu: input quantization bound (half the input grid step);
    eps_rel: output precision of the simulation relation;
    delta: its coupling defect.
    """

    eta: float
    theta: float
    mu: float
    eps_rel: float
    delta: float

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError(f"cell width eta must be positive, got {self.eta}")
        if self.theta < 0:
            raise ValueError(f"inflation theta must be >= 0, got {self.theta}")
        if self.mu < 0:
            raise ValueError(f"input bound mu must be >= 0, got {self.mu}")
        if self.eps_rel < 0:
            raise ValueError(f"precision eps_rel must be >= 0, got {self.eps_rel}")
        if not 0 <= self.delta <= 1:
            raise ValueError(f"delta must lie in [0, 1], got {self.delta}")


@dataclass
class FeasibilityReport:
    """Outcome of the closed-form quantization-parameter check."""

    kind: str
    feasible: bool
    passes: bool
    eta_max: float | None
    theta_min: float | None
    relation_radius: float
    eta: float
    theta: float
    mu: float
    eps_rel: float
    delta: float
    notes: list[str] = field(default_factory=list)


def relation_radius(cert: DeltaIssCertificate, eps_rel: float) -> float:
    """Level of the certificate function defining the simulation relation.

    States x, x_hat are related when V(x, x_hat) stays at or below this
    value; it is the largest level whose output spread is still within
    eps_rel, namely alpha_lo * (eps_rel / ell).
    """
    if eps_rel < 0:
        raise ValueError(f"precision must be nonnegative, got {eps_rel}")
    return cert.alpha_lo * (eps_rel / cert.ell)


def _eta_bound(cert: DeltaIssCertificate, params: AbstractionParams):
    """Largest admissible cell width, or None when no width works.

    The relation level v = alpha_lo * eps_rel / ell must be invariant
    under one step: the expected decrease kappa*v must dominate the
    input mismatch rho*mu plus the quantization error gamma*eta, with
    slack (1 - delta) of the level available, i.e.
    gamma*eta <= v*delta - (v - kappa*v) - rho*mu.  A second cap
    v / alpha_hi keeps related states within the level set.
    """
    v = relation_radius(cert, params.eps_rel)
    headroom = v * params.delta - (v - cert.kappa * v) - cert.rho * params.mu
    if headroom <= 0:
        return None, v
    return min(headroom / cert.gamma, v / cert.alpha_hi), v


def check_initsop_params(
    cert: DeltaIssCertificate, params: AbstractionParams
) -> FeasibilityReport:
    """Feasibility of the quantization for initial-state secrecy transfer."""
    eta_max, radius = _eta_bound(cert, params)
    notes: list[str] = []
    if eta_max is None:
        notes.append(
            "no cell width works: the decrease rate cannot absorb the "
            "input mismatch at this delta (increase delta or shrink mu)"
        )
        passes = False
    else:
        passes = params.eta <= eta_max + FEAS_TOL
        if not passes:
            notes.append(
                f"cell width {params.eta} exceeds the admissible bound {eta_max}"
            )
    return FeasibilityReport(
        kind="initial",
        feasible=eta_max is not None,
        passes=passes,
        eta_max=eta_max,
        theta_min=None,
        relation_radius=radius,
        eta=params.eta,
        theta=params.theta,
        mu=params.mu,
        eps_rel=params.eps_rel,
        delta=params.delta,
        notes=notes,
    )


def check_cursop_params(
    cert: DeltaIssCertificate, params: AbstractionParams
) -> FeasibilityReport:
    """Feasibility for current-state secrecy transfer.

    Same cell-width bound as the initial-state check, plus a lower bound
    on the secret-set inflation: theta must cover the output precision,
    theta >= eps_rel / ell (boundary included).
    """
    report = check_initsop_params(cert, params)
    theta_min = params.eps_rel / cert.ell
    report.kind = "current"
    report.theta_min = theta_min
    if params.theta < theta_min - FEAS_TOL:
        report.passes = False
        report.notes.append(
            f"secret inflation {params.theta} is below the required {theta_min}"
        )
    return report


def gaussian_cell_masses(mean: float, std: float, edges) -> tuple[np.ndarray, float, float]:
    """Probability mass of a normal distribution in each grid cell.

    `edges` are the cell boundaries in increasing order (k+1 edges for k
    cells).  Mass outside [edges[0], edges[-1]] is clamped into the
    first/last cell; the returned (clamp_lo, clamp_hi) report how much.
    Tail cells are computed from the survival function on whichever side
    is numerically safe, so far-out cells do not collapse to 0 by
    cancellation.  A zero std puts the whole mass in the cell containing
    the mean, with boundary points belonging to the cell they start
    (cells are half-open below the last, which is closed).
    """
    edges = np.asarray(edges, dtype=float)
    k = len(edges) - 1
    if k < 1:
        raise ValueError("need at least two edges")
    if std < 0:
        raise ValueError(f"standard deviation must be >= 0, got {std}")
    if std == 0:
        masses = np.zeros(k)
        clamp_lo = clamp_hi = 0.0
        if mean < edges[0]:
            cell, clamp_lo = 0, 1.0
        elif mean > edges[-1]:
            cell, clamp_hi = k - 1, 1.0
        elif mean == edges[-1]:
            cell = k - 1
        else:
            cell = int(np.searchsorted(edges, mean, side="right")) - 1
        masses[cell] = 1.0
        return masses, clamp_lo, clamp_hi

    z = (edges - mean) / std
    cdf = norm.cdf(z)
    sf = norm.sf(z)
    lo, hi = z[:-1], z[1:]
    masses = np.where(lo >= 0, sf[:-1] - sf[1:], cdf[1:] - cdf[:-1])
    np.maximum(masses, 0.0, out=masses)
    clamp_lo = float(cdf[0])
    clamp_hi = float(sf[-1])
    masses[0] += clamp_lo
    masses[-1] += clamp_hi
    return masses, clamp_lo, clamp_hi


def _overlaps_cell(cell_lo, cell_hi, lo, hi, is_last) -> bool:
    """Positive-length overlap; degenerate intervals fall back to membership."""
    if lo == hi:
        return (cell_lo <= lo < cell_hi) or (is_last and lo == cell_hi)
    return max(cell_lo, lo) < min(cell_hi, hi)


def _merge_intervals(pieces):
    merged = []
    for lo, hi in sorted(pieces):
        if merged and lo <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], hi))
        else:
            merged.append((lo, hi))
    return merged


def _min_piece_span(pieces) -> float:
    spans = [hi - lo for lo, hi in pieces if hi > lo]
    return min(spans) if spans else math.inf


def _complement(pieces, x_lo, x_hi):
    out = []
    cursor = x_lo
    for lo, hi in _merge_intervals(pieces):
        if lo > cursor:
            out.append((cursor, lo))
        cursor = max(cursor, hi)
    if cursor < x_hi:
        out.append((cursor, x_hi))
    return out


def _grid(lo: float, hi: float, width: float):
    count = max(1, math.ceil((hi - lo) / width - CEIL_TOL))
    edges = lo + width * np.arange(count + 1)
    edges[-1] = hi
    return count, edges


def build_abstraction(
    sys: ContinuousAffineSystem, params: AbstractionParams
) -> tuple[FiniteGmdp, dict]:
    """Grid the system into a finite model; returns (model, metadata).

    States are the cells of an eta-grid over the state interval
    (half-open below the last cell, which is closed), named cell_0,
    cell_1, ... from the left, with centers as representative points.
    A cell is initial when it overlaps the initial interval on positive
    length, and secret when it so overlaps some secret interval inflated
    by theta.  Finite input sets are kept as-is (named u_0, u_1, ... in
    the given order); interval input sets are gridded with step 2*mu and
    center representatives.  Kernel entries are Gaussian cell masses
    from each (representative, input value) pair; escaping tail mass is
    clamped into the boundary cells and reported per row in the
    metadata under `clamped_mass`.

    Infeasible or out-of-bound quantization parameters produce warnings
    (and metadata notes), not errors; exploratory builds are legal.
    """
    x_lo, x_hi = sys.state_domain
    span = x_hi - x_lo
    if params.eta > span:
        raise ValueError(
            f"cell width {params.eta} exceeds the state domain span {span}"
        )
    n_cells, edges = _grid(x_lo, x_hi, params.eta)
    centers = (edges[:-1] + edges[1:]) / 2.0
    names = tuple(f"cell_{i}" for i in range(n_cells))

    if sys.input_values is not None:
        input_values = tuple(float(u) for u in sys.input_values)
    else:
        u_lo, u_hi = sys.input_interval
        if params.mu <= 0:
            raise ValueError(
                "interval input domains need mu > 0 to be gridded (step 2*mu)"
            )
        _n_in, u_edges = _grid(u_lo, u_hi, 2.0 * params.mu)
        input_values = tuple((u_edges[:-1] + u_edges[1:]) / 2.0)
    input_names = tuple(f"u_{j}" for j in range(len(input_values)))

    inflated = [
        (lo - params.theta, hi + params.theta) for lo, hi in sys.secret_domain
    ]
    secret = frozenset(
        names[i]
        for i in range(n_cells)
        if any(
            _overlaps_cell(edges[i], edges[i + 1], lo, hi, i == n_cells - 1)
            for lo, hi in inflated
        )
    )
    init_lo, init_hi = sys.initial_domain
    initial = tuple(
        names[i]
        for i in range(n_cells)
        if _overlaps_cell(edges[i], edges[i + 1], init_lo, init_hi, i == n_cells - 1)
    )
    assert initial, "initial interval overlaps no cell; grid construction is broken"

    kernel: dict[tuple[str, str], dict[str, float]] = {}
    clamped: dict[str, dict[str, float]] = {}
    for i, center in enumerate(centers):
        for j, uval in enumerate(input_values):
            mean = sys.a * center + sys.b * uval
            masses, clamp_lo, clamp_hi = gaussian_cell_masses(mean, sys.d, edges)
            kernel[(names[i], input_names[j])] = {
                names[t]: float(m) for t, m in enumerate(masses) if m > PROB_FLOOR
            }
            clamp = clamp_lo + clamp_hi
            if clamp > 0:
                clamped.setdefault(names[i], {})[input_names[j]] = clamp

    model = FiniteGmdp(
        states=names,
        inputs=input_names,
        initial_states=initial,
        secret_states=secret,
        output_dim=1,
        outputs={names[i]: (sys.c * float(centers[i]),) for i in range(n_cells)},
        kernel=kernel,
    )

    notes: list[str] = []
    feas_init = check_initsop_params(sys.certificate, params)
    feas_cur = check_cursop_params(sys.certificate, params)
    if not feas_init.passes:
        notes.append("quantization fails the initial-state feasibility check")
    if not feas_cur.passes:
        notes.append("quantization fails the current-state feasibility check")
    min_secret = _min_piece_span(inflated)
    min_nonsecret = _min_piece_span(_complement(inflated, x_lo, x_hi))
    if params.eta > min(min_secret, min_nonsecret):
        notes.append(
            f"cell width {params.eta} exceeds the narrowest secret/non-secret "
            f"piece ({min(min_secret, min_nonsecret)}); cells straddle the "
            "secret boundary"
        )
    if sys.input_interval is not None:
        u_span = sys.input_interval[1] - sys.input_interval[0]
        if params.mu >= u_span:
            notes.append(
                f"input bound mu={params.mu} is at least the input span {u_span}; "
                "the input grid degenerates to one point"
            )
    for note in notes:
        warnings.warn(note, UserWarning, stacklevel=2)

    meta = {
        "eta": params.eta,
        "theta": params.theta,
        "mu": params.mu,
        "eps": params.eps_rel,
        "delta": params.delta,
        "relation_radius": relation_radius(sys.certificate, params.eps_rel),
        "cells": [[float(edges[i]), float(edges[i + 1])] for i in range(n_cells)],
        "representatives": [float(v) for v in centers],
        "input_values": [float(v) for v in input_values],
        "clamped_mass": clamped,
        "feasibility": {
            "initial": _report_dict(feas_init),
            "current": _report_dict(feas_cur),
        },
        "notes": notes,
    }
    return model, meta


def _report_dict(report: FeasibilityReport) -> dict:
    return {
        "kind": report.kind,
        "feasible": report.feasible,
        "passes": report.passes,
        "eta_max": report.eta_max,
        "theta_min": report.theta_min,
        "relation_radius": report.relation_radius,
        "eta": report.eta,
        "theta": report.theta,
        "mu": report.mu,
        "eps_rel": report.eps_rel,
        "delta": report.delta,
        "notes": list(report.notes),
    }
