"""Reading and writing the tool's JSON file formats.

Formats
-------
Model document (extension .gmdp by convention, plain JSON):
    states, inputs: arrays of identifiers (order is significant)
    initial: array of state ids; secret: array of state ids
    output_dim: int; outputs: {state: [floats]}
    kernel: array of {"from", "input", "to", "p"} entries

Estimator document: like a model, but with `bad` instead of
`secret`/`outputs` (estimator states are their own observations) plus
`kind` and `eps`.

Relation document: {"pairs": [[left, right], ...]}.

Continuous-system document: a, b, c, d, state_domain, initial_domain,
secret_domain (array of intervals), input_domain (either
{"values": [...]} or {"interval": [lo, hi]}), certificate (the six
slopes).

Writers emit a canonical form: fixed key order, two-space indent,
kernel entries sorted by declaration indices, floats through repr
(shortest round-trip), trailing newline.  Reading a canonical file and
writing it back is byte-identical.
"""

from __future__ import annotations

import json
from typing import Any

from opaquemdp.abstraction import ContinuousAffineSystem, DeltaIssCertificate
from opaquemdp.estimators import EstimatorGmdp
from opaquemdp.model import FiniteGmdp
from opaquemdp.reachability import OpacityVerdict
from opaquemdp.relations import StateRelation

__all__ = [
    "FormatError",
    "read_gmdp",
    "write_gmdp",
    "gmdp_document",
    "write_estimator",
    "read_relation",
    "write_relation",
    "read_continuous_system",
    "read_verdict",
    "write_report",
]

# Reader-side floor mirroring the model convention: entries at or below
# this are structural zeros and are not stored.
_PROB_FLOOR = 1e-12


class FormatError(ValueError):
    """The document cannot be parsed as the expected format."""


def _load(path: str) -> Any:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON: {exc}") from exc


def _need(doc: dict, key: str, kind, path: str):
    if key not in doc:
        raise FormatError(f"{path}: missing key {key!r}")
    value = doc[key]
    if kind is not None and not isinstance(value, kind):
        raise FormatError(
            f"{path}: key {key!r} has type {type(value).__name__}, "
            f"expected {kind.__name__}"
        )
    return value


def _string_list(doc: dict, key: str, path: str) -> list[str]:
    raw = _need(doc, key, list, path)
    for v in raw:
        if not isinstance(v, str):
            raise FormatError(f"{path}: {key!r} must contain strings, got {v!r}")
    return raw


def read_gmdp(path: str) -> FiniteGmdp:
    """Parse a model document.

    Shape problems (missing keys, wrong types, duplicate kernel entries)
    raise FormatError; semantic problems (row sums, dangling state
    references) are left for `validate` so they can be reported as a
    batch.  Kernel entries with p <= 1e-12 are dropped on read.
    """
    doc = _load(path)
    if not isinstance(doc, dict):
        raise FormatError(f"{path}: top level must be an object")
    states = _string_list(doc, "states", path)
    inputs = _string_list(doc, "inputs", path)
    initial = _string_list(doc, "initial", path)
    secret = _string_list(doc, "secret", path)
    output_dim = _need(doc, "output_dim", int, path)
    outputs_raw = _need(doc, "outputs", dict, path)
    outputs: dict[str, tuple[float, ...]] = {}
    for s, y in outputs_raw.items():
        if not isinstance(y, list) or not all(
            isinstance(v, (int, float)) for v in y
        ):
            raise FormatError(f"{path}: output of {s!r} must be an array of numbers")
        outputs[s] = tuple(float(v) for v in y)

    kernel: dict[tuple[str, str], dict[str, float]] = {}
    for entry in _need(doc, "kernel", list, path):
        if not isinstance(entry, dict):
            raise FormatError(f"{path}: kernel entries must be objects")
        try:
            src = entry["from"]
            inp = entry["input"]
            dst = entry["to"]
            p = entry["p"]
        except KeyError as exc:
            raise FormatError(
                f"{path}: kernel entry {entry!r} missing key {exc}"
            ) from None
        if not isinstance(p, (int, float)):
            raise FormatError(f"{path}: probability {p!r} is not a number")
        row = kernel.setdefault((src, inp), {})
        if dst in row:
            raise FormatError(
                f"{path}: duplicate kernel entry {src!r} -{inp!r}-> {dst!r}"
            )
        if 0 <= p <= _PROB_FLOOR:
            continue
        row[dst] = float(p)
    kernel = {k: v for k, v in kernel.items() if v}

    return FiniteGmdp(
        states=tuple(states),
        inputs=tuple(inputs),
        initial_states=tuple(initial),
        secret_states=frozenset(secret),
        output_dim=output_dim,
        outputs=outputs,
        kernel=kernel,
    )


def _sorted_kernel_entries(states, inputs, kernel):
    sidx = {s: i for i, s in enumerate(states)}
    uidx = {u: i for i, u in enumerate(inputs)}
    flat = []
    for (s, u), row in kernel.items():
        for t, p in row.items():
            flat.append((s, u, t, p))
    flat.sort(
        key=lambda e: (
            sidx.get(e[0], len(sidx)),
            uidx.get(e[1], len(uidx)),
            sidx.get(e[2], len(sidx)),
        )
    )
    return [{"from": s, "input": u, "to": t, "p": p} for s, u, t, p in flat]


def gmdp_document(model: FiniteGmdp) -> dict:
    """The canonical JSON-ready form of a model."""
    sidx = model.state_index
    return {
        "states": list(model.states),
        "inputs": list(model.inputs),
        "initial": list(model.initial_states),
        "secret": sorted(model.secret_states, key=lambda s: sidx.get(s, len(sidx))),
        "output_dim": model.output_dim,
        "outputs": {s: list(model.outputs[s]) for s in model.states if s in model.outputs},
        "kernel": _sorted_kernel_entries(model.states, model.inputs, model.kernel),
    }


def _dump(doc: dict, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def write_gmdp(model: FiniteGmdp, path: str, meta: dict | None = None) -> None:
    doc = gmdp_document(model)
    if meta is not None:
        doc["meta"] = meta
    _dump(doc, path)


def write_estimator(est: EstimatorGmdp, path: str) -> None:
    """Serialize an estimator as a model-shaped document with a `bad` set."""
    ids = est.ids
    kernel_named = {
        (ids[i], u): {ids[j]: p for j, p in row.items()}
        for (i, u), row in est.kernel.items()
    }
    doc = {
        "kind": est.kind,
        "eps": est.eps,
        "states": list(ids),
        "inputs": list(est.inputs),
        "initial": [ids[i] for i in est.initial_states],
        "bad": [ids[i] for i in sorted(est.bad_states)],
        "kernel": _sorted_kernel_entries(ids, est.inputs, kernel_named),
    }
    _dump(doc, path)


def read_relation(path: str) -> StateRelation:
    doc = _load(path)
    if not isinstance(doc, dict):
        raise FormatError(f"{path}: top level must be an object")
    pairs = _need(doc, "pairs", list, path)
    out = []
    for pair in pairs:
        if (
            not isinstance(pair, list)
            or len(pair) != 2
            or not all(isinstance(v, str) for v in pair)
        ):
            raise FormatError(
                f"{path}: relation pairs must be [left, right] string pairs, "
                f"got {pair!r}"
            )
        out.append((pair[0], pair[1]))
    return StateRelation.from_pairs(out)


def write_relation(relation: StateRelation, path: str) -> None:
    doc = {"pairs": [[a, b] for a, b in sorted(relation.pairs)]}
    _dump(doc, path)


def _interval(raw, what: str, path: str) -> tuple[float, float]:
    if (
        not isinstance(raw, list)
        or len(raw) != 2
        or not all(isinstance(v, (int, float)) for v in raw)
    ):
        raise FormatError(f"{path}: {what} must be [lo, hi], got {raw!r}")
    return float(raw[0]), float(raw[1])


def read_continuous_system(path: str) -> ContinuousAffineSystem:
    doc = _load(path)
    if not isinstance(doc, dict):
        raise FormatError(f"{path}: top level must be an object")
    coeffs = {}
    for key in ("a", "b", "c", "d"):
        value = _need(doc, key, None, path)
        if not isinstance(value, (int, float)):
            raise FormatError(f"{path}: coefficient {key!r} must be a number")
        coeffs[key] = float(value)
    state_domain = _interval(_need(doc, "state_domain", list, path), "state_domain", path)
    initial_domain = _interval(
        _need(doc, "initial_domain", list, path), "initial_domain", path
    )
    secret_raw = _need(doc, "secret_domain", list, path)
    secret_domain = tuple(
        _interval(piece, "secret_domain interval", path) for piece in secret_raw
    )
    input_raw = _need(doc, "input_domain", dict, path)
    values = None
    interval = None
    if "values" in input_raw:
        raw = input_raw["values"]
        if not isinstance(raw, list) or not all(
            isinstance(v, (int, float)) for v in raw
        ):
            raise FormatError(f"{path}: input_domain values must be numbers")
        values = tuple(float(v) for v in raw)
    elif "interval" in input_raw:
        interval = _interval(input_raw["interval"], "input_domain interval", path)
    else:
        raise FormatError(
            f"{path}: input_domain needs either 'values' or 'interval'"
        )
    cert_raw = _need(doc, "certificate", dict, path)
    slopes = {}
    for key in ("alpha_lo", "alpha_hi", "kappa", "rho", "gamma", "ell"):
        value = _need(cert_raw, key, None, f"{path}: certificate")
        if not isinstance(value, (int, float)):
            raise FormatError(f"{path}: certificate slope {key!r} must be a number")
        slopes[key] = float(value)
    try:
        certificate = DeltaIssCertificate(**slopes)
        return ContinuousAffineSystem(
            a=coeffs["a"],
            b=coeffs["b"],
            c=coeffs["c"],
            d=coeffs["d"],
            state_domain=state_domain,
            initial_domain=initial_domain,
            secret_domain=secret_domain,
            certificate=certificate,
            input_values=values,
            input_interval=interval,
        )
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def read_verdict(path: str) -> OpacityVerdict:
    doc = _load(path)
    if not isinstance(doc, dict):
        raise FormatError(f"{path}: top level must be an object")
    try:
        return OpacityVerdict(
            kind=doc["kind"],
            eps=float(doc["eps"]),
            lam=float(doc["lambda"]),
            horizon=int(doc["horizon"]),
            opaque=bool(doc["opaque"]),
            witness=doc.get("witness"),
            margin=float(doc.get("margin", 0.0)),
            per_initial={k: float(v) for k, v in doc.get("per_initial", {}).items()},
            p={k: float(v) for k, v in doc.get("p", {}).items()},
            estimator_states=int(doc.get("estimator_states", 0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: not a verdict report: {exc}") from exc


def write_report(payload: dict, path: str, invocation: list[str] | None = None) -> None:
    """Write a machine report, stamped with tool name/version/invocation."""
    from opaquemdp import __version__

    doc = {
        "tool": {
            "name": "opaquemdp",
            "version": __version__,
            "invocation": list(invocation) if invocation else [],
        }
    }
    doc.update(payload)
    _dump(doc, path)
