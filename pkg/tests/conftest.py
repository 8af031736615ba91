"""Shared fixture loaders for the test suite."""

from __future__ import annotations

import os

import pytest

from opaquemdp import FiniteGmdp, StateRelation
from opaquemdp.fileio import read_gmdp, read_relation

FIXTURE_DIR = os.path.join(os.path.dirname(__file__), "..", "fixtures")


def fixture_path(name: str) -> str:
    return os.path.join(FIXTURE_DIR, name)


@pytest.fixture(scope="session")
def five_state() -> FiniteGmdp:
    return read_gmdp(fixture_path("five_state.gmdp"))


@pytest.fixture(scope="session")
def pair_concrete() -> FiniteGmdp:
    return read_gmdp(fixture_path("pair_concrete.gmdp"))


@pytest.fixture(scope="session")
def pair_abstract() -> FiniteGmdp:
    return read_gmdp(fixture_path("pair_abstract.gmdp"))


@pytest.fixture(scope="session")
def pair_relation() -> StateRelation:
    return read_relation(fixture_path("pair_relation.json"))


@pytest.fixture(scope="session")
def road_system():
    from opaquemdp.fileio import read_continuous_system

    return read_continuous_system(fixture_path("road_traffic.json"))


@pytest.fixture(scope="session")
def road_abstraction() -> FiniteGmdp:
    return read_gmdp(fixture_path("road_abstraction.gmdp"))


def toy_two_input() -> FiniteGmdp:
    """Two-input model whose only real decision is at the start state.

    L and M share an output, so an intruder cannot tell them apart until
    the trajectory visits R (reachable only from L).  Revealing mass is
    0.6 under input a versus 0.3 under b, giving the value iteration a
    genuine argmax while keeping the open-loop maximum equal to it.
    """
    return FiniteGmdp(
        states=("L", "M", "R", "T"),
        inputs=("a", "b"),
        initial_states=("L", "M"),
        secret_states=frozenset({"L"}),
        output_dim=1,
        outputs={"L": (0.0,), "M": (0.0,), "R": (1.0,), "T": (2.0,)},
        kernel={
            ("L", "a"): {"R": 0.6, "T": 0.4},
            ("L", "b"): {"R": 0.3, "T": 0.7},
            ("M", "a"): {"T": 1.0},
            ("M", "b"): {"T": 1.0},
            ("R", "a"): {"R": 1.0},
            ("R", "b"): {"R": 1.0},
            ("T", "a"): {"T": 1.0},
            ("T", "b"): {"T": 1.0},
        },
    )


def feedback_gap_model() -> FiniteGmdp:
    """Model where feedback strictly beats every open-loop sequence.

    At horizon 2 with eps=0.5 the intruder-revealing probability is 1.0
    under a state-dependent input choice (u1 after C, u2 after D) but
    only 0.5 under the best fixed input sequence, because C and D each
    need a different second input to separate the shadow run through S.
    """
    return FiniteGmdp(
        states=("A", "B", "C", "D", "S", "E"),
        inputs=("u1", "u2"),
        initial_states=("A", "B"),
        secret_states=frozenset({"A"}),
        output_dim=1,
        outputs={
            "A": (0.0,),
            "B": (0.0,),
            "C": (1.0,),
            "D": (2.0,),
            "S": (1.5,),
            "E": (5.0,),
        },
        kernel={
            ("A", "u1"): {"C": 0.5, "D": 0.5},
            ("A", "u2"): {"C": 0.5, "D": 0.5},
            ("B", "u1"): {"S": 1.0},
            ("B", "u2"): {"S": 1.0},
            ("S", "u1"): {"S": 1.0},
            ("S", "u2"): {"S": 1.0},
            ("C", "u1"): {"E": 1.0},
            ("C", "u2"): {"C": 1.0},
            ("D", "u1"): {"D": 1.0},
            ("D", "u2"): {"E": 1.0},
            ("E", "u1"): {"E": 1.0},
            ("E", "u2"): {"E": 1.0},
        },
    )
