"""The r-instance objective: instance-weighted logistic loss, elastic net on
the feature weights, and a graph smoothness penalty on the tweet scores.

For tweet ``i`` with word matrix ``X_i`` (``n_i x k``) and instance weights
``u_i`` the aggregated feature is ``z_i = X_i^T u_i`` and its score is
``s_i = <beta, z_i>``. The smooth part of the objective is::

    sum_i log(1 + exp(-y_i s_i)) + lambda1/2 ||beta||^2 + lambda3/2 s^T L s

and the full objective adds ``lambda2 ||beta||_1``; each ``u_i`` is
constrained to at most ``r`` nonzeros. Unlabeled tweets contribute only
through the graph term.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

from .data import aggregate_all

__all__ = ['Hyper', 'ModelParams', 'tweet_scores', 'smooth_loss',
           'full_objective', 'grad_beta', 'grad_u', 'prox_beta',
           'project_l0', 'word_relevance', 'predict_tweet', 'save_model',
           'load_model', 'initial_params']


@dataclass(frozen=True)
class Hyper:
    lambda1: float = 0.002
    lambda2: float = 0.1
    lambda3: float = 0.2
    r: int = 50
    tau_word: float = 0.9
    tau_tweet: float = 0.6
    u_lower: float = -1.0
    u_upper: float = 1.0

    def __post_init__(self):
        if min(self.lambda1, self.lambda2, self.lambda3) < 0:
            raise ValueError('penalty weights must be nonnegative')
        if self.r < 1:
            raise ValueError('r must be at least 1')
        if not (np.isfinite(self.tau_word) and np.isfinite(self.tau_tweet)):
            raise ValueError('thresholds must be finite')
        if not self.u_lower <= 0 <= self.u_upper:
            raise ValueError('instance-weight box must contain 0')


@dataclass
class ModelParams:
    """Feature weights ``beta`` (length k) and per-tweet instance weights
    ``u`` (list of length-``n_i`` arrays)."""
    beta: np.ndarray
    u: list

    def flat_u(self):
        return np.concatenate(self.u) if self.u else np.zeros(0)

    def nnz_u(self):
        return int(sum(np.count_nonzero(x) for x in self.u))

    def copy(self):
        return ModelParams(self.beta.copy(), [x.copy() for x in self.u])


def initial_params(d, h, seed=0):
    """``beta ~ U(-0.01, 0.01)``; ``u_i = 1/n_i`` projected to ``r`` entries."""
    rng = np.random.default_rng(seed)
    beta = rng.uniform(-0.01, 0.01, size=d.k)
    u = [project_l0(np.full(n, 1.0 / n), h.r, h.u_lower, h.u_upper)
         for n in d.lengths]
    return ModelParams(beta, u)


# ---------------------------------------------------------------------------
# Objective and gradients

def _log1pexp(x):
    return np.logaddexp(0.0, x)


def tweet_scores(d, p):
    """Return ``(Z, s)``: aggregated features and scores ``s = Z beta``."""
    z = aggregate_all(d, p.flat_u())
    return z, z @ p.beta


def _lap_term(lap, s):
    if lap is None:
        return 0.0, np.zeros_like(s)
    ls = lap.matrix @ s
    return 0.5 * float(s @ ls), ls


def smooth_loss(d, lap, p, h):
    """Logistic loss + ridge + network penalty; excludes the l1 term."""
    _, s = tweet_scores(d, p)
    y = d.labels
    loss = float(np.sum(_log1pexp(-y[y != 0] * s[y != 0])))
    net, _ = _lap_term(lap, s)
    return loss + 0.5 * h.lambda1 * float(p.beta @ p.beta) + h.lambda3 * net


def full_objective(d, lap, p, h):
    return smooth_loss(d, lap, p, h) + h.lambda2 * float(np.abs(p.beta).sum())


def _dloss_ds(y, s):
    # derivative of log(1 + exp(-y s)) in s; zero for unlabeled (y = 0)
    return -y * expit(-y * s)


def grad_beta(d, lap, p, h):
    """Gradient of :func:`smooth_loss` in ``beta``."""
    z, s = tweet_scores(d, p)
    _, ls = _lap_term(lap, s)
    coef = _dloss_ds(d.labels, s) + h.lambda3 * ls
    return z.T @ coef + h.lambda1 * p.beta


def grad_u(d, lap, p, h, i):
    """Gradient of :func:`smooth_loss` in ``u_i``.

    ``(-y_i sigma(-y_i s_i) + lambda3 (L s)_i) * X_i beta``.
    """
    _, s = tweet_scores(d, p)
    _, ls = _lap_term(lap, s)
    scores = d.tweets[i].words @ p.beta
    return (_dloss_ds(d.labels[i], s[i]) + h.lambda3 * ls[i]) * scores


# ---------------------------------------------------------------------------
# Proximal maps

def prox_beta(v, alpha, h):
    """Soft threshold: prox of ``alpha * lambda2 * ||.||_1``."""
    if alpha <= 0:
        raise ValueError('alpha must be positive')
    v = np.asarray(v, dtype=np.float64)
    return np.sign(v) * np.maximum(np.abs(v) - alpha * h.lambda2, 0.0)


def project_l0(v, r, lower=-np.inf, upper=np.inf):
    """Euclidean projection onto ``{x : ||x||_0 <= r, lower <= x <= upper}``.

    Without bounds this keeps the ``r`` largest-magnitude entries. With a box
    (``lower <= 0 <= upper``) each entry is clipped and the ``r`` entries
    whose clipping saves the most squared distance over zeroing are kept.
    Ties go to the lower index.
    """
    if r < 1:
        raise ValueError('r must be at least 1')
    if not lower <= 0 <= upper:
        raise ValueError('the box must contain 0')
    v = np.asarray(v, dtype=np.float64)
    if lower == -np.inf and upper == np.inf:
        if v.size <= r:
            return v.copy()
        c, gain = v, v * v
    else:
        c = np.clip(v, lower, upper)
        gain = v * v - (v - c) ** 2
    if np.count_nonzero(c) <= r:
        return c.copy()
    keep = np.argsort(-gain, kind='stable')[:r]
    out = np.zeros_like(v)
    out[keep] = c[keep]
    return out


# ---------------------------------------------------------------------------
# Prediction

def word_relevance(beta, word, tau_word=0.9):
    return bool(np.dot(beta, word) >= tau_word)


def predict_tweet(beta, t, h):
    """Return ``(label, proportion)``; the proportion is the share of words
    with score at least ``tau_word``."""
    relevant = t.words @ np.asarray(beta) >= h.tau_word
    proportion = float(np.count_nonzero(relevant)) / t.n_words
    return (1 if proportion >= h.tau_tweet else -1), proportion


# ---------------------------------------------------------------------------
# Persistence

def save_model(path, p, h, config=None, include_u=True, ids=None):
    rec = {'config': config or {}, 'hyper': asdict(h),
           'beta': [float(x) for x in p.beta]}
    if include_u:
        ids = ids if ids is not None else [str(i) for i in range(len(p.u))]
        rec['u'] = {tid: {'n': len(ui),
                          'index': np.flatnonzero(ui).tolist(),
                          'value': ui[ui != 0].tolist()}
                    for tid, ui in zip(ids, p.u)}
    Path(path).write_text(json.dumps(rec, indent=1, sort_keys=True) + '\n',
                          encoding='utf-8')


def load_model(path):
    """Return ``(beta, hyper, u_or_None, config)``.

    ``u`` is a dict from tweet id to a dense weight vector.
    """
    rec = json.loads(Path(path).read_text(encoding='utf-8'))
    beta = np.asarray(rec['beta'], dtype=np.float64)
    h = Hyper(**rec['hyper'])
    u = None
    if 'u' in rec:
        u = {}
        for tid, sparse in rec['u'].items():
            vec = np.zeros(sparse['n'])
            vec[sparse['index']] = sparse['value']
            u[tid] = vec
    return beta, h, u, rec.get('config', {})
