import random

import pytest

from mucos.kg import from_labeled

G0_ROWS = [
    ("A", "r1", "B"),
    ("A", "r1", "C"),
    ("B", "r2", "C"),
    ("C", "r2", "A"),
    ("D", "r1", "A"),
]


@pytest.fixture
def g0():
    graph, splits = from_labeled(G0_ROWS)
    return graph, splits


@pytest.fixture
def g0_graph(g0):
    return g0[0]


def ids(graph, *labels):
    """Resolve entity labels, or ``rX`` relation labels, to ids."""
    out = []
    for lbl in labels:
        vocab = graph.relations if lbl in graph.relations else graph.entities
        out.append(vocab.id(lbl))
    return out


def random_rows(seed, max_triples=500):
    """Small random labelled multigraph with self-loops and duplicates allowed."""
    rnd = random.Random(seed)
    n_ent = rnd.randint(1, 40)
    n_rel = rnd.randint(1, 6)
    n_tr = rnd.randint(1, max_triples)
    return [
        (f"e{rnd.randrange(n_ent)}", f"r{rnd.randrange(n_rel)}", f"e{rnd.randrange(n_ent)}")
        for _ in range(n_tr)
    ]
