"""Acceptance gate: one test per shipping criterion.

Each test prints a single pass/fail line (visible under `pytest -s` or
on failure) and enforces its stated tolerance and runtime budget.
"""

from __future__ import annotations

import json
import math
import time
import warnings
from contextlib import contextmanager

import numpy as np
import pytest

from opaquemdp import (
    AbstractionParams,
    StateRelation,
    brute_force_max_violation,
    build_abstraction,
    build_current_estimator,
    build_initial_estimator,
    check_initsop,
    check_initsop_params,
    classify_states,
    estimate_violation,
    max_coupling_mass,
    verify_opacity,
    SimulationConfig,
)
from opaquemdp.cli import main as cli_main
from opaquemdp.fileio import read_gmdp

import test_properties
from conftest import fixture_path
from generators import random_eps, random_gmdp
from oracles import max_coupling_lp

VALUE_TOL = 1e-12
ORACLE_TOL = 1e-9
# two-sided 99.9% normal quantile for the binomial check
Z_999 = 3.2905


@contextmanager
def criterion(number: int, label: str, budget_seconds: float | None = None):
    start = time.perf_counter()
    try:
        yield
    except BaseException:
        print(f"criterion {number} ({label}): FAIL")
        raise
    elapsed = time.perf_counter() - start
    if budget_seconds is not None:
        assert elapsed < budget_seconds, (
            f"criterion {number} exceeded {budget_seconds}s: {elapsed:.2f}s")
    print(f"criterion {number} ({label}): PASS in {elapsed:.2f}s")


def test_criterion_1_initial_state_golden(five_state):
    with criterion(1, "initial-state golden model", budget_seconds=1.0):
        est = build_initial_estimator(five_state, 0.0)
        assert len(est.states) == 9
        assert len(est.initial_states) == 2
        assert len(est.bad_states) == 3

        for horizon in (1, 3, 10):
            verdict = verify_opacity(five_state, "initial", 0.0, 0.9, horizon)
            assert verdict.per_initial["A"] == pytest.approx(
                0.1, abs=VALUE_TOL)
            assert verdict.per_initial["B"] == pytest.approx(
                0.0, abs=VALUE_TOL)
            assert verdict.opaque


def test_criterion_2_current_state_golden(five_state):
    with criterion(2, "current-state golden model", budget_seconds=1.0):
        for horizon in range(1, 11):
            verdict = verify_opacity(five_state, "current", 0.0, 0.8, horizon)
            assert verdict.opaque, f"horizon {horizon}"
            assert verdict.per_initial["B"] == 0.2


@pytest.mark.filterwarnings("ignore:some initial state is revealed")
def test_criterion_3_brute_force_matches_value_iteration():
    with criterion(3, "exhaustive oracle equivalence", budget_seconds=30.0):
        rng = np.random.default_rng(2)
        checked = 0
        for _ in range(24):
            model = random_gmdp(rng, max_states=6, max_inputs=3)
            eps = random_eps(rng)
            horizon = int(rng.integers(0, 6))
            for kind, build in (("initial", build_initial_estimator),
                                ("current", build_current_estimator)):
                est = build(model, eps)
                verdict = verify_opacity(model, kind, eps, 0.5, horizon)
                for x0 in model.initial_states:
                    expected = brute_force_max_violation(est, x0, horizon)
                    got = verdict.per_initial[x0]
                    assert got == pytest.approx(expected, abs=ORACLE_TOL), (
                        f"{kind} {x0} horizon {horizon}")
                    checked += 1
        assert checked >= 20


def test_criterion_4_monte_carlo_consistency(five_state):
    with criterion(4, "Monte-Carlo consistency", budget_seconds=5.0):
        samples = 100_000
        config = SimulationConfig(samples=samples, horizon=3, seed=2024)
        report = estimate_violation(five_state, "initial", 0.0, "A", config)
        p = 0.1
        half_width = Z_999 * math.sqrt(p * (1.0 - p) / samples)
        assert abs(report.p_hat - p) <= half_width
        assert report.ci_lo <= report.p_hat <= report.ci_hi

        no_secret = five_state.__class__(
            states=five_state.states, inputs=five_state.inputs,
            initial_states=five_state.initial_states,
            secret_states=frozenset(), output_dim=five_state.output_dim,
            outputs=five_state.outputs, kernel=five_state.kernel)
        empty = estimate_violation(no_secret, "initial", 0.0, "A", config)
        assert empty.p_hat == 0.0


def test_criterion_5_coupling_against_lp_oracle(pair_concrete, pair_abstract,
                                                pair_relation):
    with criterion(5, "max-coupling correctness", budget_seconds=10.0):
        pairs = list(pair_relation.pairs)
        compared = 0
        for (_, _), phi in pair_concrete.kernel.items():
            for (_, _), theta in pair_abstract.kernel.items():
                if len(phi) > 4 or len(theta) > 4:
                    continue
                got = max_coupling_mass(phi, theta, pairs)
                expected = max_coupling_lp(phi, theta, pairs)
                assert got == pytest.approx(expected, abs=ORACLE_TOL)
                compared += 1
        for name in ("five_state.gmdp", "road_abstraction.gmdp"):
            model = read_gmdp(fixture_path(name))
            identity = [(s, s) for s in model.states]
            rows = list(model.kernel.values())
            for phi in rows:
                for theta in rows:
                    if len(phi) > 4 or len(theta) > 4:
                        continue
                    got = max_coupling_mass(phi, theta, identity)
                    expected = max_coupling_lp(phi, theta, identity)
                    assert got == pytest.approx(expected, abs=ORACLE_TOL)
                    compared += 1
        assert compared >= 20

        # 500 seeded monotonicity instances over growing relations
        suite = test_properties.TestCouplingMonotonicity()
        suite.test_growing_the_relation_never_drops_mass()
        assert test_properties.N_COUPLING == 500


def test_criterion_6_simulation_relation_golden(pair_concrete, pair_abstract,
                                                pair_relation):
    with criterion(6, "opacity-preserving relation golden model"):
        report = check_initsop(pair_concrete, pair_abstract, pair_relation,
                               eps=0.1, delta=0.1)
        assert report.holds, report.failures

        for name in ("five_state.gmdp", "pair_concrete.gmdp",
                     "pair_abstract.gmdp", "road_abstraction.gmdp"):
            model = read_gmdp(fixture_path(name))
            identity = StateRelation(
                pairs=tuple((s, s) for s in model.states))
            self_check = check_initsop(model, model, identity,
                                       eps=0.0, delta=0.0)
            assert self_check.holds, (name, self_check.failures)


def test_criterion_7_road_traffic_end_to_end(road_system, tmp_path):
    with criterion(7, "road-traffic end to end", budget_seconds=10.0):
        params = AbstractionParams(eta=0.5, theta=0.0, mu=0.0,
                                   eps_rel=1.0, delta=0.15)
        feasibility = check_initsop_params(road_system.certificate, params)
        assert feasibility.passes
        assert feasibility.eta_max == 0.5

        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            model, meta = build_abstraction(road_system, params)
        assert len(model.states) == 6
        for row in model.kernel.values():
            assert abs(sum(row.values()) - 1.0) <= ORACLE_TOL

        model_path = tmp_path / "abstraction.gmdp"
        from opaquemdp.fileio import write_gmdp
        write_gmdp(model, str(model_path))

        for horizon in range(1, 21):
            verdict = verify_opacity(model, "initial", 0.05, 1.0, horizon)
            assert verdict.opaque, f"horizon {horizon}"

        for horizon in (1, 5, 20):
            verdict_path = tmp_path / f"verdict_{horizon}.json"
            transfer_path = tmp_path / f"transfer_{horizon}.json"
            code = cli_main(["verify", str(model_path),
                             "--kind", "initial", "--eps", "0.05",
                             "--lambda", "1.0",
                             "--horizon", str(horizon),
                             "--out", str(verdict_path)])
            assert code == 0
            code = cli_main(["transfer", str(verdict_path),
                             "--eps-rel", "1.0", "--delta", "0.15",
                             "--out", str(transfer_path)])
            assert code == 0
            doc = json.loads(transfer_path.read_text())
            assert doc["eps_concrete"] == 2.05
            assert doc["lambda_concrete"] == pytest.approx(
                0.7225 ** horizon, rel=1e-12)


def test_criterion_8_property_suites(capsys):
    with criterion(8, "generated-case property suites"):
        assert test_properties.TOTAL_GENERATED_CASES >= 1000
        suites = [
            test_properties.TestBallGeometry()
            .test_reflexive_symmetric_and_monotone,
            test_properties.TestEstimatorAbsorption()
            .test_revealing_states_are_absorbing,
            test_properties.TestValueIteration()
            .test_values_grow_with_horizon_inside_unit_interval,
            test_properties.TestVerdictMonotonicity()
            .test_threshold_sweep_flips_at_most_once,
            test_properties.TestVerdictMonotonicity()
            .test_margin_never_shrinks_as_precision_coarsens,
            test_properties.TestTransferAlgebra()
            .test_guarantees_only_weaken,
            test_properties.TestAbstractionMassConservation()
            .test_refined_grids_redistribute_without_loss,
            test_properties.TestAbstractionMassConservation()
            .test_random_builds_are_valid_models,
            test_properties.TestCouplingMonotonicity()
            .test_growing_the_relation_never_drops_mass,
        ]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            for run in suites:
                run()
