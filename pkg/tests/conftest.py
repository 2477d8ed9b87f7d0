import numpy as np
import pytest

from rulex.core import Document, build_vocab


@pytest.fixture
def pair_vocab():
    """Two base relations plus their inverses: ids 0..3."""
    return build_vocab(["a", "b"])


@pytest.fixture
def rng():
    return np.random.default_rng(42)


def make_doc(atoms, num_relations, n_entities=None, doc_id="d", gold=()):
    if n_entities is None:
        n_entities = 1 + max((max(h, t) for h, _, t in atoms), default=0)
    return Document(doc_id, [f"e{i}" for i in range(n_entities)], dict(atoms), gold,
                    num_relations=num_relations)


def random_doc(rng, num_relations, max_entities=6, density=0.25):
    n = int(rng.integers(2, max_entities + 1))
    atoms = {}
    for h in range(n):
        for t in range(n):
            for r in range(num_relations):
                if rng.random() < density:
                    atoms[(h, r, t)] = float(rng.random())
    return Document("rand", [f"e{i}" for i in range(n)], atoms, num_relations=num_relations)
