import json
from pathlib import Path

import pytest

from geosolver.cli import load_corpus

CORPUS_DIR = Path(__file__).resolve().parent.parent / "corpus" / "mini"

# a self-contained two-predicate system used by unit tests: the parallel
# transitivity rule over a four-symmetry Parallel plus one plain shape
TINY_SYSTEM = {
    "predicates": [
        {"name": "Parallel",
         "slots": [{"kind": "line", "points": 2}, {"kind": "line", "points": 2}],
         "symmetries": [
             [[0, False], [1, False]],
             [[1, False], [0, False]],
             [[0, True], [1, True]],
             [[1, True], [0, True]],
         ]},
        {"name": "RightTriangle",
         "slots": [{"kind": "polygon", "points": 3}],
         "symmetries": [[[0, False]]]},
        {"name": "LengthOfLine", "kind": "attribute",
         "slots": [{"kind": "line", "points": 2}],
         "symmetries": [[[0, False]], [[0, True]]]},
        {"name": "MeasureOfAngle", "kind": "attribute",
         "slots": [{"kind": "angle", "points": 3}],
         "symmetries": [[[0, False]], [[0, True]]]},
    ],
    "theorems": [
        {"name": "parallel_transitivity",
         "vars": ["A", "B", "C", "D", "E", "F"],
         "premises": ["Parallel(AB,CD)", "Parallel(CD,EF)"],
         "conclusions": ["Parallel(AB,EF)"]},
    ],
}

TINY_PROBLEM = {
    "id": "t1",
    "conditions": ["Parallel(AB,CD)", "Parallel(CD,EF)"],
    "goal": {"kind": "Relation", "target": "Parallel(AB,EF)"},
    "theorem_seq": [{"name": "parallel_transitivity",
                     "binding": {c: c for c in "ABCDEF"}}],
}


@pytest.fixture(scope="session")
def corpus():
    return load_corpus(CORPUS_DIR)


@pytest.fixture(scope="session")
def system(corpus):
    return corpus[0]


@pytest.fixture(scope="session")
def problems(corpus):
    return corpus[1]


@pytest.fixture()
def tiny_system():
    from geosolver.formal import parse_system
    return parse_system(json.dumps(TINY_SYSTEM))


@pytest.fixture()
def tiny_problem(tiny_system):
    from geosolver.formal import parse_problem
    return parse_problem(json.dumps(TINY_PROBLEM), tiny_system)
