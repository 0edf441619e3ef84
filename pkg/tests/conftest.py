from __future__ import annotations

import math

import pytest

from ckmgraphrag.ingest import SyntheticCkmConfig, generate_synthetic_ckm, label_stations
from ckmgraphrag.pipeline import graph_from_pairs


def synthetic_pairs(n_pairs: int, seed: int = 0, **kw):
    cfg = SyntheticCkmConfig(n_pairs=n_pairs, seed=seed, **kw)
    return label_stations(generate_synthetic_ckm(cfg))[2]


def quadratic_labels(positions, tol=1e-6):
    """Reference labeling: compare each position with every canonical one seen so far."""
    canon, labels = [], []
    for p in positions:
        for i, c in enumerate(canon):
            if math.dist(c, p) <= tol:
                labels.append(i + 1)
                break
        else:
            canon.append(p)
            labels.append(len(canon))
    return labels


@pytest.fixture(scope="session")
def pairs_500():
    return synthetic_pairs(500, seed=11)


@pytest.fixture(scope="session")
def graph_500(pairs_500):
    return graph_from_pairs(pairs_500, seed=3)
