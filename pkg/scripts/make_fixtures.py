"""Regenerate the shipped fixtures from their in-code definitions.

Run from the repository root:

    python3 scripts/make_fixtures.py

Every file under fixtures/ is produced by the canonical writers in
opaquemdp.fileio, so a read/write round trip of a shipped fixture is
byte-identical.  The road abstraction is rebuilt from road_traffic.json
with the quantization used throughout the docs (eta=0.5, theta=0, mu=0,
relation precision 1, deviation bound 0.15).
"""

from __future__ import annotations

import json
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from opaquemdp import (
    AbstractionParams,
    FiniteGmdp,
    StateRelation,
    build_abstraction,
)
from opaquemdp.fileio import (
    read_continuous_system,
    write_gmdp,
    write_relation,
)

FIXTURES = os.path.join(os.path.dirname(__file__), "..", "fixtures")


def five_state() -> FiniteGmdp:
    """Five-state single-input chain with two indistinguishable starts."""
    return FiniteGmdp(
        states=("A", "B", "C", "D", "E"),
        inputs=("u",),
        initial_states=("A", "B"),
        secret_states=frozenset({"A", "D"}),
        output_dim=1,
        outputs={
            "A": (0.1,),
            "B": (0.1,),
            "C": (0.25,),
            "D": (0.2,),
            "E": (0.3,),
        },
        kernel={
            ("A", "u"): {"A": 0.1, "C": 0.9},
            ("B", "u"): {"C": 0.8, "D": 0.2},
            ("C", "u"): {"E": 1.0},
            ("D", "u"): {"D": 0.5, "E": 0.5},
            ("E", "u"): {"E": 1.0},
        },
    )


def pair_concrete() -> FiniteGmdp:
    """Reconstructed six-state system for the relation-check examples.

    Only the 0.9/0.1 split out of A and the output values (pairwise within
    0.1 of their abstract partners, with the F/H gap exactly on the 0.1
    boundary) are load-bearing; the rest of the kernel is the simplest
    deterministic completion.
    """
    return FiniteGmdp(
        states=("A", "B", "C", "D", "E", "F"),
        inputs=("u",),
        initial_states=("A", "D"),
        secret_states=frozenset({"A"}),
        output_dim=1,
        outputs={
            "A": (0.05,),
            "B": (0.35,),
            "C": (0.45,),
            "D": (0.25,),
            "E": (0.4,),
            "F": (0.5,),
        },
        kernel={
            ("A", "u"): {"A": 0.1, "B": 0.9},
            ("B", "u"): {"C": 1.0},
            ("C", "u"): {"E": 1.0},
            ("D", "u"): {"C": 1.0},
            ("E", "u"): {"F": 1.0},
            ("F", "u"): {"F": 1.0},
        },
    )


def pair_abstract() -> FiniteGmdp:
    """Three-state abstraction related to pair_concrete by pair_relation."""
    return FiniteGmdp(
        states=("G", "H", "I"),
        inputs=("u",),
        initial_states=("G", "I"),
        secret_states=frozenset({"G"}),
        output_dim=1,
        outputs={"G": (0.0,), "H": (0.4,), "I": (0.2,)},
        kernel={
            ("G", "u"): {"H": 1.0},
            ("H", "u"): {"H": 1.0},
            ("I", "u"): {"H": 1.0},
        },
    )


def pair_relation() -> StateRelation:
    return StateRelation.from_pairs(
        [("A", "G"), ("B", "H"), ("C", "H"), ("E", "H"), ("F", "H"), ("D", "I")]
    )


def road_traffic_doc() -> dict:
    """One cell of a road network: density dynamics with Gaussian noise."""
    return {
        "a": 0.1,
        "b": 0.5,
        "c": 0.1,
        "d": 0.1,
        "state_domain": [0.0, 3.0],
        "initial_domain": [2.0, 3.0],
        "secret_domain": [[0.0, 0.5], [2.5, 3.0]],
        "input_domain": {"values": [0.0, 1.0]},
        "certificate": {
            "alpha_lo": 1.0,
            "alpha_hi": 1.0,
            "kappa": 0.9,
            "rho": 0.5,
            "gamma": 1.0,
            "ell": 0.1,
        },
    }


def main() -> None:
    os.makedirs(FIXTURES, exist_ok=True)

    write_gmdp(five_state(), os.path.join(FIXTURES, "five_state.gmdp"))
    write_gmdp(pair_concrete(), os.path.join(FIXTURES, "pair_concrete.gmdp"))
    write_gmdp(pair_abstract(), os.path.join(FIXTURES, "pair_abstract.gmdp"))
    write_relation(pair_relation(), os.path.join(FIXTURES, "pair_relation.json"))

    road_path = os.path.join(FIXTURES, "road_traffic.json")
    with open(road_path, "w", encoding="utf-8") as fh:
        json.dump(road_traffic_doc(), fh, indent=2)
        fh.write("\n")

    system = read_continuous_system(road_path)
    params = AbstractionParams(eta=0.5, theta=0.0, mu=0.0, eps_rel=1.0, delta=0.15)
    abstract, _meta = build_abstraction(system, params)
    write_gmdp(abstract, os.path.join(FIXTURES, "road_abstraction.gmdp"))

    for name in sorted(os.listdir(FIXTURES)):
        print("wrote", name)


if __name__ == "__main__":
    main()
