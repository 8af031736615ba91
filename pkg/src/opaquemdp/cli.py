"""Command-line interface.

One binary, seven subcommands mirroring the verification workflow:
validate a model file, build an estimator, verify opacity, check a
simulation relation between two models, build a finite abstraction of a
continuous system, transfer an abstract verdict to the concrete system,
and cross-check probabilities by sampling.

Exit codes: 0 when the requested property holds (or the command simply
succeeded), 1 when it fails (model invalid, not opaque, relation does
not hold, quantization infeasible, transfer inapplicable), 2 for input
errors (unreadable or malformed files, bad parameters).

Human-readable summaries go to standard output; machine reports are
written to --out as JSON and carry the tool version and invocation.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import asdict

from opaquemdp import __version__, fileio
from opaquemdp.abstraction import AbstractionParams, build_abstraction
from opaquemdp.estimators import build_current_estimator, build_initial_estimator
from opaquemdp.model import validate
from opaquemdp.montecarlo import SimulationConfig, estimate_violation
from opaquemdp.reachability import OpacityVerdict, verify_opacity
from opaquemdp.relations import (
    TransferHypothesisError,
    check_cursop,
    check_initsop,
    transfer_guarantee,
)

__all__ = ["build_parser", "main", "entrypoint"]


def _fmt(x: float) -> str:
    return repr(float(x))


def _read_valid_model(path: str):
    """Load a model and insist it passes validation (exit 1 otherwise)."""
    model = fileio.read_gmdp(path)
    report = validate(model)
    if not report.valid:
        for failure in report.failures:
            print(f"invalid model {path}: {failure}", file=sys.stderr)
        return None
    return model


def _verdict_payload(verdict: OpacityVerdict) -> dict:
    return {
        "kind": verdict.kind,
        "eps": verdict.eps,
        "lambda": verdict.lam,
        "horizon": verdict.horizon,
        "opaque": verdict.opaque,
        "witness": verdict.witness,
        "margin": verdict.margin,
        "per_initial": verdict.per_initial,
        "p": verdict.p,
        "estimator_states": verdict.estimator_states,
    }


def cmd_validate(args) -> int:
    model = fileio.read_gmdp(args.model)
    report = validate(model)
    print(
        f"model: {len(model.states)} states, {len(model.inputs)} inputs, "
        f"{len(model.initial_states)} initial, {len(model.secret_states)} secret"
    )
    if report.valid:
        print("valid: yes")
    else:
        print("valid: no")
        for failure in report.failures:
            print(f"  - {failure}")
    if args.out:
        fileio.write_report(
            {"valid": report.valid, "failures": report.failures},
            args.out,
            _invocation(),
        )
    return 0 if report.valid else 1


def cmd_estimator(args) -> int:
    model = _read_valid_model(args.model)
    if model is None:
        return 1
    build = build_initial_estimator if args.kind == "initial" else build_current_estimator
    est = build(model, args.eps)
    print(
        f"{args.kind}-state estimator at eps={_fmt(args.eps)}: "
        f"{len(est.states)} states, {len(est.bad_states)} revealing"
    )
    for x0, idx in est.base_initial_index.items():
        print(f"  start {x0}: {est.ids[idx]}")
    if args.out:
        fileio.write_estimator(est, args.out)
        print(f"estimator written to {args.out}")
    return 0


def cmd_verify(args) -> int:
    model = _read_valid_model(args.model)
    if model is None:
        return 1
    verdict = verify_opacity(model, args.kind, args.eps, args.lam, args.horizon)
    print(
        f"kind: {verdict.kind}   eps: {_fmt(verdict.eps)}   "
        f"lambda: {_fmt(verdict.lam)}   horizon: {verdict.horizon}"
    )
    print(f"estimator: {verdict.estimator_states} states")
    print("worst-case revealing probability per initial state:")
    for x0, p in verdict.per_initial.items():
        print(f"  {x0}: {_fmt(p)}")
    if verdict.opaque:
        print(f"verdict: opaque (margin {_fmt(verdict.margin)})")
    else:
        print(
            f"verdict: NOT opaque (witness {verdict.witness}, "
            f"margin {_fmt(verdict.margin)})"
        )
    if args.out:
        fileio.write_report(_verdict_payload(verdict), args.out, _invocation())
    return 0 if verdict.opaque else 1


def cmd_relate(args) -> int:
    model_a = _read_valid_model(args.model_a)
    model_b = _read_valid_model(args.model_b)
    if model_a is None or model_b is None:
        return 1
    relation = fileio.read_relation(args.relation)
    check = check_initsop if args.kind == "initial" else check_cursop
    report = check(model_a, model_b, relation, args.eps, args.delta)
    print(
        f"{report.kind} check at eps={_fmt(args.eps)}, delta={_fmt(args.delta)}: "
        f"{len(relation.pairs)} pairs"
    )
    if report.holds:
        print("relation holds")
    else:
        print(f"relation FAILS ({len(report.failures)} failures)")
        for failure in report.failures:
            print(f"  [{failure.condition}] {failure.detail}")
    if report.interpreted:
        print(
            "note: conditions "
            + ", ".join(report.interpreted)
            + " follow an interpreted reading of secret-landing matching"
        )
    if args.out:
        payload = {
            "kind": report.kind,
            "eps": report.eps,
            "delta": report.delta,
            "holds": report.holds,
            "failures": [asdict(f) for f in report.failures],
            "interpreted": list(report.interpreted),
        }
        fileio.write_report(payload, args.out, _invocation())
    return 0 if report.holds else 1


def cmd_abstract(args) -> int:
    system = fileio.read_continuous_system(args.system)
    params = AbstractionParams(
        eta=args.eta,
        theta=args.theta,
        mu=args.mu,
        eps_rel=args.eps,
        delta=args.delta,
    )
    model, meta = build_abstraction(system, params)
    feas = meta["feasibility"]["initial" if args.kind == "initial" else "current"]
    print(
        f"abstraction: {len(model.states)} states, {len(model.inputs)} inputs, "
        f"{len(model.initial_states)} initial, {len(model.secret_states)} secret"
    )
    bound = feas["eta_max"]
    print(
        f"{args.kind}-state feasibility: "
        + ("infeasible" if not feas["feasible"] else f"eta_max {_fmt(bound)}")
        + (f", theta_min {_fmt(feas['theta_min'])}" if feas["theta_min"] is not None else "")
    )
    print(f"quantization {'passes' if feas['passes'] else 'FAILS'} the check")
    total_clamp = sum(v for row in meta["clamped_mass"].values() for v in row.values())
    print(f"total clamped boundary mass: {_fmt(total_clamp)}")
    if args.out:
        fileio.write_gmdp(model, args.out, meta=meta)
        print(f"abstraction written to {args.out}")
    return 0 if feas["passes"] else 1


def cmd_transfer(args) -> int:
    verdict = fileio.read_verdict(args.verdict)
    try:
        transfer = transfer_guarantee(verdict, args.eps_rel, args.delta)
    except TransferHypothesisError as exc:
        print(f"transfer inapplicable: {exc}", file=sys.stderr)
        return 1
    print(
        f"abstract verdict: {transfer.kind} opaque at "
        f"(eps {_fmt(transfer.eps_abstract)}, lambda {_fmt(transfer.lambda_abstract)}), "
        f"horizon {transfer.horizon}"
    )
    print(
        f"relation: eps {_fmt(transfer.eps_rel)}, delta {_fmt(transfer.delta)} "
        f"-> degradation gamma {_fmt(transfer.gamma_delta)}"
    )
    print(
        f"concrete guarantee: ({_fmt(transfer.eps_concrete)}, "
        f"{_fmt(transfer.lambda_concrete)})-{transfer.kind} opaque, "
        f"horizon {transfer.horizon}"
    )
    if args.out:
        fileio.write_report(asdict(transfer), args.out, _invocation())
    return 0


def cmd_simulate(args) -> int:
    model = _read_valid_model(args.model)
    if model is None:
        return 1
    inputs = tuple(args.inputs.split(",")) if args.inputs else None
    config = SimulationConfig(
        samples=args.samples,
        horizon=args.horizon,
        seed=args.seed,
        inputs=inputs,
        confidence=args.confidence,
    )
    report = estimate_violation(model, args.kind, args.eps, args.x0, config)
    mode = "worst-case policy" if report.worst_case else "fixed input sequence"
    print(
        f"sampled {report.samples} runs from {report.x0} ({mode}), "
        f"horizon {report.horizon}, seed {report.seed}"
    )
    print(
        f"p_hat: {_fmt(report.p_hat)}   "
        f"{int(report.confidence * 100)}% interval: "
        f"[{_fmt(report.ci_lo)}, {_fmt(report.ci_hi)}]"
    )
    if args.out:
        payload = {
            "p_hat": report.p_hat,
            "ci_lo": report.ci_lo,
            "ci_hi": report.ci_hi,
            "N": report.samples,
            "seed": report.seed,
            "kind": report.kind,
            "eps": report.eps,
            "x0": report.x0,
            "horizon": report.horizon,
            "confidence": report.confidence,
            "worst_case": report.worst_case,
            "first_hit_counts": report.first_hit_counts,
        }
        fileio.write_report(payload, args.out, _invocation())
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write("step,first_hits\n")
            for step, count in enumerate(report.first_hit_counts):
                fh.write(f"{step},{count}\n")
        print(f"histogram written to {args.csv}")
    if args.plot:
        _plot_histogram(report, args.plot)
        print(f"figure written to {args.plot}")
    return 0


def _plot_histogram(report, path: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    steps = list(range(len(report.first_hit_counts)))
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(steps, report.first_hit_counts, color="tab:blue", width=0.8)
    ax.set_xlabel("step of first revealing observation")
    ax.set_ylabel("runs")
    ax.set_title(
        f"{report.kind} from {report.x0}: "
        f"p_hat={report.p_hat:.4g} "
        f"[{report.ci_lo:.4g}, {report.ci_hi:.4g}]"
    )
    ax.set_xticks(steps)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _invocation() -> list[str]:
    return sys.argv[1:] if sys.argv else []


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="opaquemdp",
        description="Approximate opacity verification for finite stochastic systems.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a model file's structural invariants")
    p.add_argument("model", help="model document (.gmdp JSON)")
    p.add_argument("--out", help="write a JSON report here")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("estimator", help="build an observer estimator")
    p.add_argument("model")
    p.add_argument("--kind", choices=["initial", "current"], default="initial")
    p.add_argument("--eps", type=float, default=0.0, help="observation precision")
    p.add_argument("--out", help="write the estimator document here")
    p.set_defaults(func=cmd_estimator)

    p = sub.add_parser("verify", help="decide approximate opacity")
    p.add_argument("model")
    p.add_argument("--kind", choices=["initial", "current"], default="initial")
    p.add_argument("--eps", type=float, default=0.0)
    p.add_argument("--lambda", dest="lam", type=float, required=True,
                   help="required per-run security probability")
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument("--out", help="write the verdict report here")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("relate", help="check a simulation relation between two models")
    p.add_argument("model_a", help="concrete model")
    p.add_argument("model_b", help="abstract model")
    p.add_argument("relation", help="relation document")
    p.add_argument("--kind", choices=["initial", "current"], default="initial")
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_relate)

    p = sub.add_parser("abstract", help="grid a continuous system into a finite model")
    p.add_argument("system", help="continuous-system document")
    p.add_argument("--eta", type=float, required=True, help="state cell width")
    p.add_argument("--theta", type=float, default=0.0, help="secret inflation radius")
    p.add_argument("--mu", type=float, default=0.0, help="input quantization bound")
    p.add_argument("--eps", type=float, required=True, help="relation output precision")
    p.add_argument("--delta", type=float, required=True, help="relation coupling defect")
    p.add_argument("--kind", choices=["initial", "current"], default="initial",
                   help="which feasibility check gates the exit code")
    p.add_argument("--out", help="write the abstraction (model + meta) here")
    p.set_defaults(func=cmd_abstract)

    p = sub.add_parser("transfer", help="transfer an abstract verdict to the concrete system")
    p.add_argument("verdict", help="verdict report from 'verify --out'")
    p.add_argument("--eps-rel", type=float, required=True,
                   help="output precision of the simulation relation")
    p.add_argument("--delta", type=float, required=True,
                   help="coupling defect of the simulation relation")
    p.add_argument("--out")
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("simulate", help="estimate violation probability by sampling")
    p.add_argument("model")
    p.add_argument("--kind", choices=["initial", "current"], default="initial")
    p.add_argument("--eps", type=float, default=0.0)
    p.add_argument("--x0", required=True, help="initial state to sample from")
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument("--samples", type=int, default=100000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--inputs", help="comma-separated input sequence; omit for worst-case")
    p.add_argument("--confidence", type=float, default=0.99)
    p.add_argument("--out", help="write the JSON estimate report here")
    p.add_argument("--csv", help="write the first-hit histogram here (CSV)")
    p.add_argument("--plot", help="render the first-hit histogram here (PNG)")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TransferHypothesisError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (fileio.FormatError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
