import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from hhrgnn.graphstore import Graph  # noqa: E402


def undirected(pairs, n, num_classes=2, dim=3, seed=0, labels=None):
    """Homogeneous graph from unordered pairs, stored in both directions."""
    rng = np.random.default_rng(seed)
    edges = sorted({(a, b, 0) for a, b in pairs} | {(b, a, 0) for a, b in pairs})
    if labels is None:
        labels = {i: i % num_classes for i in range(n)}
    return Graph(num_nodes=n, node_type=np.zeros(n, dtype=int),
                 edges=np.array(edges, dtype=int).reshape(-1, 3),
                 features=rng.standard_normal((n, dim)), labels=labels,
                 num_classes=num_classes)


@pytest.fixture
def triangle():
    return undirected([(0, 1), (1, 2), (0, 2)], 3)


@pytest.fixture
def path3():
    return undirected([(0, 1), (1, 2)], 3)


@pytest.fixture
def star():
    # centre 0 with leaves 1..4
    return undirected([(0, i) for i in range(1, 5)], 5)
