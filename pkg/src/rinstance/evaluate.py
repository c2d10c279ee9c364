"""Classification metrics and significance testing.

Also holds a standalone elastic-net logistic solver that cross-checks the
main optimizer."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np
from scipy import stats

from .model import load_model, predict_tweet

__all__ = ['MetricsReport', 'precision_recall_f1', 'f1_score', 't_test',
           'reference_elastic_net_lr', 'reference_objective', 'evaluate_run',
           'save_report', 'save_scores', 'EvalError']


class EvalError(ValueError):
    pass


@dataclass(frozen=True)
class MetricsReport:
    tp: int
    fp: int
    fn: int
    tn: int
    precision: float
    recall: float
    f1: float


def f1_score(precision, recall):
    """Harmonic mean; 0 when both inputs are 0."""
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def precision_recall_f1(pred, truth):
    """Confusion counts and metrics with +1 as the positive class.

    An empty denominator yields 0 rather than NaN.
    """
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape or pred.ndim != 1:
        raise EvalError('pred and truth must be 1-D and of equal length')
    for name, arr in (('pred', pred), ('truth', truth)):
        if not np.isin(arr, (1, -1)).all():
            raise EvalError(f'{name} labels must be +1 or -1')
    tp = int(np.sum((pred == 1) & (truth == 1)))
    fp = int(np.sum((pred == 1) & (truth == -1)))
    fn = int(np.sum((pred == -1) & (truth == 1)))
    tn = int(np.sum((pred == -1) & (truth == -1)))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return MetricsReport(tp, fp, fn, tn, precision, recall,
                         f1_score(precision, recall))


def t_test(group_a, group_b, alpha=0.05):
    """One-sided Welch test of ``mean(a) > mean(b)``.

    Returns ``(t, p, reject)``.
    """
    a = np.asarray(group_a, dtype=np.float64)
    b = np.asarray(group_b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise EvalError('each group needs at least 2 values')
    va, vb = a.var(ddof=1) / a.size, b.var(ddof=1) / b.size
    diff = a.mean() - b.mean()
    se2 = va + vb
    if se2 == 0:
        if diff == 0:
            raise EvalError('t statistic undefined: both groups constant '
                            'with equal means')
        t = math.copysign(math.inf, diff)
        p = 0.0 if diff > 0 else 1.0
        return t, p, p < alpha
    t = diff / math.sqrt(se2)
    df = se2 ** 2 / (va ** 2 / (a.size - 1) + vb ** 2 / (b.size - 1))
    p = float(stats.t.sf(t, df))
    return float(t), p, p < alpha


# ---------------------------------------------------------------------------
# Reference solver

def _bag_sums(d):
    return np.add.reduceat(d.words, d.offsets[:-1], axis=0)


def reference_objective(d, beta, lambda1, lambda2):
    """Elastic-net logistic objective on bag-sum features."""
    z = _bag_sums(d)
    y = d.labels
    mask = y != 0
    margins = -y[mask] * (z[mask] @ beta)
    return float(np.logaddexp(0.0, margins).sum()
                 + 0.5 * lambda1 * beta @ beta
                 + lambda2 * np.abs(beta).sum())


def reference_elastic_net_lr(d, lambda1, lambda2, tol=1e-10, max_iter=10_000):
    """Accelerated proximal gradient with a fixed step ``1/L``,
    ``L = ||Z||_2^2 / 4 + lambda1``, and function-value restarts.

    Stops when the gradient-mapping norm falls below
    ``tol * max(1, ||beta||)``.
    """
    z = _bag_sums(d)
    y = d.labels
    mask = y != 0
    zl, yl = z[mask], y[mask]
    step = 1.0 / (np.linalg.norm(zl, 2) ** 2 / 4.0 + lambda1 + 1e-12)

    def value(b):
        return (np.logaddexp(0.0, -yl * (zl @ b)).sum()
                + 0.5 * lambda1 * b @ b + lambda2 * np.abs(b).sum())

    def prox_step(b):
        m = -yl * (zl @ b)
        g = zl.T @ (-yl / (1.0 + np.exp(-m))) + lambda1 * b
        v = b - step * g
        return np.sign(v) * np.maximum(np.abs(v) - step * lambda2, 0.0)

    beta = np.zeros(d.k)
    mom = beta.copy()
    t = 1.0
    f_prev = value(beta)
    for _ in range(max_iter):
        nxt = prox_step(mom)
        f_nxt = value(nxt)
        if f_nxt > f_prev:
            # restart from the last iterate without momentum
            t, mom = 1.0, beta
            nxt = prox_step(beta)
            f_nxt = value(nxt)
        gap = np.linalg.norm(nxt - mom) / step
        t_next = (1.0 + math.sqrt(1.0 + 4.0 * t * t)) / 2.0
        mom = nxt + ((t - 1.0) / t_next) * (nxt - beta)
        beta, t, f_prev = nxt, t_next, f_nxt
        if gap < tol * max(1.0, np.linalg.norm(beta)):
            return beta
    raise EvalError(f'reference solver did not converge in {max_iter} '
                    'iterations')


# ---------------------------------------------------------------------------
# Runs

def evaluate_run(model_path, d, tau_word=None, tau_tweet=None):
    """Score every tweet of ``d`` with a saved model.

    Returns ``(report, scores)``; ``scores`` holds ``(id, proportion,
    label)`` rows and ``report`` is None when some tweet has no label.
    """
    beta, h, _, _ = load_model(model_path)
    if beta.shape != (d.k,):
        raise EvalError(f'model has {beta.size} feature weights, dataset has '
                        f'k={d.k}')
    if d.m == 0:
        raise EvalError('nothing to evaluate')
    if tau_word is not None:
        h = replace(h, tau_word=tau_word)
    if tau_tweet is not None:
        h = replace(h, tau_tweet=tau_tweet)
    scores = []
    for t in d.tweets:
        label, proportion = predict_tweet(beta, t, h)
        scores.append((t.id, proportion, label))
    if not d.labeled_mask.all():
        return None, scores
    pred = np.array([row[2] for row in scores])
    return precision_recall_f1(pred, d.labels.astype(int)), scores


def save_report(report, path, header=None):
    rec = {'config': header or {}, 'metrics': asdict(report)}
    Path(path).write_text(json.dumps(rec, indent=1, sort_keys=True) + '\n',
                          encoding='utf-8')


def save_scores(scores, path, header=None):
    with Path(path).open('w', encoding='utf-8') as fh:
        if header:
            fh.write(f'# {header}\n')
        fh.write('tweet_id,proportion,label\n')
        for tid, prop, label in scores:
            fh.write(f'{tid},{prop!r},{label}\n')
