import numpy as np
import pytest
import scipy.sparse as sp

from rinstance.data import Dataset, Tweet
from rinstance.graph import TweetGraph


def random_dataset(rng, m=20, k=8, n_range=(1, 6), unlabeled=0.0):
    tweets = []
    for i in range(m):
        n = int(rng.integers(n_range[0], n_range[1] + 1))
        label = int(rng.choice([-1, 1]))
        if rng.random() < unlabeled:
            label = None
        tweets.append(Tweet(f't{i}', label, rng.standard_normal((n, k))))
    return Dataset(tweets, k)


def random_graph(rng, m, p=0.3, directed=False, weighted=True):
    mask = rng.random((m, m)) < p
    np.fill_diagonal(mask, False)
    w = rng.uniform(0.5, 2.0, (m, m)) if weighted else np.ones((m, m))
    a = np.where(mask, w, 0.0)
    if not directed:
        a = np.triu(a, 1)
        a = a + a.T
    return TweetGraph(tuple(f't{i}' for i in range(m)), sp.csr_matrix(a),
                      directed)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance summary ------------------------------------------------------

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section('acceptance criteria')
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
