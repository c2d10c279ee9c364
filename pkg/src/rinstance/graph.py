"""Tweet graphs built from user behavior, and their Laplacians.

The user graph holds behavior edges ``(src_user, dst_user, tweet_id)``: a
retweet or reply of ``tweet_id``. Two tweets are linked when edges carrying
them share an endpoint user.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

__all__ = ['UserGraph', 'TweetGraph', 'LaplacianOperator', 'CategoryMixing',
           'GraphError', 'ConvergenceError',
           'load_user_graph', 'save_user_graph', 'line_graph_convert',
           'transition_matrix', 'stationary_distribution', 'laplacian',
           'network_penalty', 'category_mixing', 'assortativity',
           'modularity', 'degree_stats', 'save_laplacian',
           'generate_behavior_graph', 'DegreeStats']


class GraphError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    def __init__(self, msg, residual):
        super().__init__(f'{msg} (last residual {residual:.3e})')
        self.residual = residual


@dataclass(frozen=True)
class UserGraph:
    edges: tuple

    def __post_init__(self):
        object.__setattr__(self, 'edges',
                           tuple((str(a), str(b), str(t))
                                 for a, b, t in self.edges))

    @property
    def nodes(self):
        seen = {}
        for a, b, _ in self.edges:
            seen.setdefault(a, None)
            seen.setdefault(b, None)
        return list(seen)

    @property
    def tweet_ids(self):
        """Distinct tweet ids in order of first appearance."""
        return list(dict.fromkeys(t for _, _, t in self.edges))


@dataclass(frozen=True, eq=False)
class TweetGraph:
    ids: tuple
    adjacency: sp.csr_matrix
    directed: bool = False

    def __post_init__(self):
        a = sp.csr_matrix(self.adjacency, dtype=np.float64)
        a.eliminate_zeros()
        if a.shape != (len(self.ids), len(self.ids)):
            raise GraphError('adjacency shape does not match vertex count')
        if a.nnz and a.data.min() < 0:
            raise GraphError('negative edge weight')
        object.__setattr__(self, 'ids', tuple(self.ids))
        object.__setattr__(self, 'adjacency', a)

    @property
    def m(self):
        return len(self.ids)

    @classmethod
    def from_edges(cls, ids, edges, directed=False):
        """Build from ``(i, j, weight)`` index triples; undirected edges are
        mirrored."""
        m = len(ids)
        rows, cols, vals = [], [], []
        for i, j, w in edges:
            rows.append(i)
            cols.append(j)
            vals.append(w)
            if not directed and i != j:
                rows.append(j)
                cols.append(i)
                vals.append(w)
        a = sp.coo_matrix((vals, (rows, cols)), shape=(m, m)).tocsr()
        return cls(tuple(ids), a, directed)

    def reindex(self, ids):
        """Re-express the graph on vertex list ``ids``; vertices unknown to
        the graph become isolated, graph vertices not in ``ids`` are
        dropped."""
        pos = {t: i for i, t in enumerate(self.ids)}
        src = np.array([pos.get(t, -1) for t in ids])
        have = np.flatnonzero(src >= 0)
        sel = sp.csr_matrix((np.ones(len(have)), (have, src[have])),
                            shape=(len(ids), self.m))
        return TweetGraph(tuple(ids), sel @ self.adjacency @ sel.T,
                          self.directed)

    def n_edges(self):
        a = self.adjacency
        if self.directed:
            return a.nnz
        return (a.nnz + a.diagonal().astype(bool).sum()) // 2


@dataclass(frozen=True, eq=False)
class LaplacianOperator:
    matrix: sp.csr_matrix
    kind: str

    @property
    def m(self):
        return self.matrix.shape[0]


@dataclass(frozen=True)
class CategoryMixing:
    categories: tuple
    e: np.ndarray

    @property
    def a(self):
        return self.e.sum(axis=1)

    @property
    def b(self):
        return self.e.sum(axis=0)


# ---------------------------------------------------------------------------
# I/O

def load_user_graph(path):
    """Read tab-separated ``src_user, dst_user, tweet_id`` lines."""
    path = Path(path)
    edges = []
    with path.open(encoding='utf-8') as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip('\n')
            if not line.strip() or line.startswith('#'):
                continue
            parts = line.split('\t')
            if len(parts) != 3 or not all(p.strip() for p in parts):
                raise GraphError(f'{path}: line {lineno}: malformed edge '
                                 f'(expected 3 tab-separated fields)')
            edges.append(tuple(p.strip() for p in parts))
    return UserGraph(tuple(edges))


def save_user_graph(g, path, header=None):
    with Path(path).open('w', encoding='utf-8') as fh:
        if header:
            fh.write(f'# {header}\n')
        for a, b, t in g.edges:
            fh.write(f'{a}\t{b}\t{t}\n')


def save_laplacian(lap, path, ids=None, header=None):
    """Coordinate-format export: one ``row,col,value`` line per stored
    entry."""
    coo = sp.coo_matrix(lap.matrix)
    order = np.lexsort((coo.col, coo.row))
    with Path(path).open('w', encoding='utf-8') as fh:
        if header:
            fh.write(f'# {header}\n')
        fh.write('row,col,value\n')
        for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            if ids is not None:
                r, c = ids[r], ids[c]
            fh.write(f'{r},{c},{float(v)!r}\n')


# ---------------------------------------------------------------------------
# Construction

def line_graph_convert(g):
    """Collapse behavior edges into an undirected tweet-tweet graph.

    Tweets ``i != j`` are linked with weight equal to the number of edge
    pairs (one carrying ``i``, one carrying ``j``) that share any endpoint
    user, start or end.
    """
    if not g.edges:
        raise GraphError('user graph has no edges')
    users = {u: i for i, u in enumerate(g.nodes)}
    tweets = g.tweet_ids
    tpos = {t: i for i, t in enumerate(tweets)}
    n_e = len(g.edges)
    rows = np.repeat(np.arange(n_e), 2)
    cols = np.array([users[x] for a, b, _ in g.edges for x in (a, b)])
    # edge-user incidence; binarized so a self-loop edge counts once
    inc = sp.csr_matrix((np.ones(2 * n_e), (rows, cols)),
                        shape=(n_e, len(users)))
    inc.data[:] = 1.0
    share = inc @ inc.T
    share.data[:] = 1.0
    share.setdiag(0)
    share.eliminate_zeros()
    carry = sp.csr_matrix((np.ones(n_e),
                           (np.arange(n_e), [tpos[t] for *_, t in g.edges])),
                          shape=(n_e, len(tweets)))
    adj = sp.csr_matrix(carry.T @ share @ carry)
    adj.setdiag(0)
    return TweetGraph(tuple(tweets), adj, directed=False)


def _with_dangling_fix(a):
    out = np.asarray(a.sum(axis=1)).ravel()
    dangling = np.flatnonzero(out == 0)
    if len(dangling):
        a = (a + sp.csr_matrix((np.ones(len(dangling)), (dangling, dangling)),
                               shape=a.shape)).tocsr()
    return a


def transition_matrix(h, teleport=0.0, fix_dangling=True):
    """Row-stochastic random-walk matrix ``P(u, v) = H(u, v) / d_out(u)``.

    Vertices with zero out-degree get a unit self-loop first (when
    ``fix_dangling``). With ``teleport > 0`` the dense mixture
    ``(1 - teleport) P + teleport / m`` is returned.
    """
    if not 0 <= teleport < 1:
        raise ValueError('teleport must lie in [0, 1)')
    a = h.adjacency if h.directed else (h.adjacency + h.adjacency.T) / 2
    a = sp.csr_matrix(a)
    if fix_dangling:
        a = _with_dangling_fix(a)
    out = np.asarray(a.sum(axis=1)).ravel()
    if np.any(out == 0):
        raise GraphError('vertex with zero out-degree and no dangling fix')
    p = sp.diags(1.0 / out) @ a
    if teleport > 0:
        return (1 - teleport) * p.toarray() + teleport / h.m
    return sp.csr_matrix(p)


def stationary_distribution(p, tol=1e-12, max_iter=100_000,
                            return_history=False, check_every=10):
    """Power iteration ``pi <- pi P`` from the uniform vector.

    Stops once ``||pi P - pi||_1 <= tol``; raises :class:`ConvergenceError`
    otherwise. With ``return_history`` the residual recorded every
    ``check_every`` iterations is returned as well.
    """
    pi, history = _power_iteration(p, tol, max_iter, check_every)
    return (pi, history) if return_history else pi


def _power_iteration(p, tol, max_iter, check_every):
    m = p.shape[0]
    pt = p.T.tocsr() if sp.issparse(p) else np.ascontiguousarray(p.T)
    pi = np.full(m, 1.0 / m)
    history = []
    res = np.inf
    for it in range(1, max_iter + 1):
        nxt = pt @ pi
        nxt /= nxt.sum()
        res = np.abs(pt @ nxt - nxt).sum()
        pi = nxt
        if it % check_every == 0:
            history.append(res)
        if res <= tol:
            return pi, history
    raise ConvergenceError(f'power iteration did not converge in {max_iter} '
                           'iterations', res)


def laplacian(h, teleport=0.01, tol=1e-12, kind='auto'):
    """Smoothness operator over the tweets of ``h``.

    ``kind='undirected'`` gives ``D - A`` (on the symmetrized adjacency);
    ``kind='directed'`` gives ``I - (Pi^1/2 P Pi^-1/2 + Pi^-1/2 P^T Pi^1/2)/2``
    for the random walk with teleportation. ``'auto'`` picks by
    ``h.directed``. Isolated vertices get zero rows and columns either way.
    """
    if kind == 'auto':
        kind = 'directed' if h.directed else 'undirected'
    a = sp.csr_matrix(h.adjacency)
    if kind == 'undirected':
        a = (a + a.T) / 2 if h.directed else a
        a = a - sp.diags(a.diagonal())
        deg = np.asarray(a.sum(axis=1)).ravel()
        mat = sp.diags(deg) - a
        return LaplacianOperator(_symmetrize(mat), 'undirected-DA')
    if kind != 'directed':
        raise ValueError(f'unknown Laplacian kind {kind!r}')
    touched = (np.asarray(a.sum(axis=1)).ravel()
               + np.asarray(a.sum(axis=0)).ravel()) > 0
    keep = np.flatnonzero(touched)
    sub = TweetGraph(tuple(h.ids[i] for i in keep), a[keep][:, keep],
                     directed=True)
    theta_lap = _theta_laplacian(sub, teleport, tol)
    sel = sp.csr_matrix((np.ones(len(keep)), (keep, np.arange(len(keep)))),
                        shape=(h.m, len(keep)))
    mat = sel @ sp.csr_matrix(theta_lap) @ sel.T
    return LaplacianOperator(_symmetrize(mat), 'directed-theta')


def _theta_laplacian(h, teleport, tol):
    if h.m == 0:
        return np.zeros((0, 0))
    p = transition_matrix(h, teleport)
    pi = stationary_distribution(p, tol=tol)
    p = p.toarray() if sp.issparse(p) else p
    s = np.sqrt(pi)
    fwd = s[:, None] * p / s[None, :]
    theta = (fwd + fwd.T) / 2
    return np.eye(h.m) - theta


def _symmetrize(mat):
    mat = sp.csr_matrix(mat)
    mat = ((mat + mat.T) / 2).tocsr()
    mat.eliminate_zeros()
    mat.sort_indices()
    return mat


def network_penalty(lap, z, beta):
    """``1/2 s^T L s`` with tweet scores ``s = Z beta``."""
    z = np.asarray(z, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] != lap.m or z.shape[1] != beta.shape[0]:
        raise ValueError(f'shape mismatch: Z {z.shape}, beta {beta.shape}, '
                         f'L {lap.matrix.shape}')
    s = z @ beta
    return 0.5 * float(s @ (lap.matrix @ s))


# ---------------------------------------------------------------------------
# Diagnostics

def category_mixing(h, labels):
    """Fractions of edge weight by endpoint categories.

    Undirected edges contribute to both ``e[ci, cj]`` and ``e[cj, ci]``.
    """
    labels = list(labels)
    if len(labels) != h.m:
        raise ValueError('one category per tweet required')
    cats = tuple(sorted(set(labels), key=str))
    idx = {c: i for i, c in enumerate(cats)}
    code = np.array([idx[c] for c in labels])
    coo = sp.coo_matrix(h.adjacency if h.directed
                        else (h.adjacency + h.adjacency.T) / 2)
    e = np.zeros((len(cats), len(cats)))
    np.add.at(e, (code[coo.row], code[coo.col]), coo.data)
    total = e.sum()
    if total <= 0:
        raise GraphError('graph has no edges')
    return CategoryMixing(cats, e / total)


def assortativity_from_mixing(e):
    e = np.asarray(e, dtype=np.float64)
    e2 = float((e @ e).sum())
    denom = 1.0 - e2
    if abs(denom) < 1e-12:
        raise GraphError('degenerate mixing: 1 - ||e^2|| is zero')
    return (float(np.trace(e)) - e2) / denom


def assortativity(h, labels):
    """Nominal assortativity ``(Tr e - ||e^2||) / (1 - ||e^2||)``."""
    mix = category_mixing(h, labels)
    if len(mix.categories) < 2:
        raise GraphError('degenerate mixing: fewer than two categories')
    return assortativity_from_mixing(mix.e)


def modularity(h, partition):
    """Newman modularity of a supplied partition on the undirected view."""
    a = sp.csr_matrix(h.adjacency)
    if h.directed:
        a = (a + a.T) / 2
    if a.sum() <= 0:
        raise GraphError('empty graph')
    partition = list(partition)
    if len(partition) != h.m:
        raise ValueError('one community id per tweet required')
    comms = {c: i for i, c in enumerate(dict.fromkeys(partition))}
    code = np.array([comms[c] for c in partition])
    coo = sp.coo_matrix(a)
    cross = coo.data[code[coo.row] != code[coo.col]].sum()
    tot = np.zeros(len(comms))
    np.add.at(tot, code, np.asarray(a.sum(axis=1)).ravel())
    two_w = tot.sum()
    # the within-community share is written as 1 - cross share so that the
    # trivial partition gives exactly 0
    return float(1.0 - cross / two_w - np.sum((tot / two_w) ** 2))


@dataclass(frozen=True)
class DegreeStats:
    in_degree: np.ndarray
    out_degree: np.ndarray
    degree: np.ndarray
    histogram: dict
    n_isolated: int
    mean: float


def degree_stats(h):
    """Neighbor-count degrees. On undirected graphs every degree variant
    agrees; on directed ones the total is in-degree plus out-degree."""
    a = sp.csr_matrix(h.adjacency)
    a = a - sp.diags(a.diagonal())
    a.eliminate_zeros()
    b = (a != 0).astype(np.int64)
    out = np.asarray(b.sum(axis=1)).ravel()
    inn = np.asarray(b.sum(axis=0)).ravel()
    total = out + inn if h.directed else out
    hist = dict(sorted(Counter(total.tolist()).items()))
    return DegreeStats(inn, out, total, hist, int(np.sum(total == 0)),
                       float(total.mean()) if h.m else 0.0)


# ---------------------------------------------------------------------------
# Synthetic behavior graphs

def generate_behavior_graph(tweet_ids, labels, homophily=0.9,
                            users_per_tweet=1.0, edges_per_tweet=(1, 3),
                            popularity=0.5, seed=0):
    """Homophilous retweet/reply edges for labeled tweets.

    Users are split into one pool per label. Each tweet gets an author and
    ``edges_per_tweet`` retweeting users; every endpoint is drawn from the
    tweet's own pool with probability ``homophily`` and from another pool
    otherwise. Inside a pool user ``j`` is chosen with weight
    ``(j + 1) ** -popularity``; a pool holds ``users_per_tweet`` users per
    tweet of its label. With ``homophily=1`` tweets of different labels never
    share a user.
    """
    if not 0 <= homophily <= 1:
        raise ValueError('homophily must lie in [0, 1]')
    rng = np.random.default_rng(seed)
    classes = sorted(set(labels), key=str)
    counts = Counter(labels)
    pools = {}
    for ci, c in enumerate(classes):
        n = max(2, int(round(users_per_tweet * counts[c])))
        names = [f'u{ci}_{j}' for j in range(n)]
        w = 1.0 / np.arange(1, n + 1) ** popularity
        pools[c] = (names, w / w.sum())
    lo, hi = edges_per_tweet

    def draw(c):
        if len(classes) > 1 and rng.random() >= homophily:
            others = [x for x in classes if x != c]
            c = others[rng.integers(len(others))]
        names, w = pools[c]
        return names[rng.choice(len(names), p=w)]

    edges = []
    for tid, own in zip(tweet_ids, labels):
        author = draw(own)
        for _ in range(int(rng.integers(lo, hi + 1))):
            fan = draw(own)
            while fan == author and len(pools[own][0]) > 1:
                fan = draw(own)
            edges.append((fan, author, tid))
    return UserGraph(tuple(edges))
