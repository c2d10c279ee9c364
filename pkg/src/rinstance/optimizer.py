"""Block coordinate descent with prox-linear updates.

Each outer iteration updates ``beta`` (soft-threshold prox step) and then
every ``u_i`` in index order (l0 projection step). Every block step
extrapolates from the last two iterates, picks its step by backtracking on
the quadratic upper-bound criterion, and is committed only if it does not
increase the full objective; a rejected extrapolated step is retried from
the current iterate with zero momentum.
"""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from .data import aggregate_all
from .model import ModelParams, initial_params, project_l0

__all__ = ['BCDConfig', 'IterationRecord', 'OptimizerTrace', 'LineSearchError',
           'NumericalError', 'LineSearchResult', 'fit', 'extrapolate',
           'eta_schedule', 'line_search', 'converged', 'save_trace']


# largest objective increase a committed block step may cause
GUARD = 1e-8


class LineSearchError(RuntimeError):
    """Backtracking exhausted its budget without meeting the criterion."""


class NumericalError(RuntimeError):
    """The objective became non-finite."""


@dataclass(frozen=True)
class BCDConfig:
    max_iter: int = 200
    tol: float = 1e-6
    xi: float = 1.0
    ls_growth: float = 2.0
    L_init: float = 1e-3
    eta_mode: str = 'nesterov'
    seed: int = 0
    freeze_u: bool = False
    max_doublings: int = 60

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError('max_iter must be at least 1')
        if self.tol <= 0:
            raise ValueError('tol must be positive')
        if not 0 < self.xi <= 1:
            raise ValueError('xi must lie in (0, 1]')
        if self.ls_growth <= 1:
            raise ValueError('ls_growth must exceed 1')
        if self.L_init <= 0:
            raise ValueError('L_init must be positive')
        if self.eta_mode not in ('nesterov', 'zero'):
            raise ValueError(f'unknown eta_mode {self.eta_mode!r}')


@dataclass
class IterationRecord:
    iteration: int
    objective: float
    alpha_beta: float
    mean_alpha_u: float
    eta: float
    nnz_u: int
    millis: float
    rejected: int = 0


@dataclass
class OptimizerTrace:
    initial_objective: float
    initial_nnz: int = 0
    records: list = field(default_factory=list)
    converged: bool = False

    @property
    def objectives(self):
        return [r.objective for r in self.records]

    def append(self, rec):
        self.records.append(rec)

    def __len__(self):
        return len(self.records)


# ---------------------------------------------------------------------------
# Building blocks

def extrapolate(current, previous, eta):
    return current + eta * (current - previous)


def eta_schedule(k, mode='nesterov'):
    """Momentum weight for outer iteration ``k >= 1``.

    ``(t_{k-1} - 1) / t_k`` with ``t_0 = 1`` and
    ``t_k = (1 + sqrt(1 + 4 t_{k-1}^2)) / 2``.
    """
    if k < 1:
        raise ValueError('k must be at least 1')
    if mode == 'zero':
        return 0.0
    t_prev = 1.0
    t = (1 + math.sqrt(5.0)) / 2
    for _ in range(k - 1):
        t_prev, t = t, (1 + math.sqrt(1 + 4 * t * t)) / 2
    return (t_prev - 1) / t


@dataclass
class LineSearchResult:
    point: np.ndarray
    value: float
    alpha: float
    L: float


def line_search(f, p_hat, g, prox=None, *, f_hat=None, L_start=1.0, xi=1.0,
                growth=2.0, max_doublings=60):
    """Backtrack on ``L`` until the prox-gradient candidate satisfies

        f(p) <= f(p_hat) + <g, p - p_hat> + L/2 ||p - p_hat||^2

    with ``p = prox(p_hat - alpha g, alpha)`` and ``alpha = xi / L``.

    A relative slack of 1e-13 absorbs rounding in ``f``.
    """
    if f_hat is None:
        f_hat = f(p_hat)
    slack = 1e-13 * (1.0 + abs(f_hat))
    L = L_start
    for _ in range(max_doublings + 1):
        alpha = xi / L
        cand = p_hat - alpha * g
        if prox is not None:
            cand = prox(cand, alpha)
        diff = cand - p_hat
        f_c = f(cand)
        if f_c <= f_hat + float(g @ diff) + 0.5 * L * float(diff @ diff) + slack:
            return LineSearchResult(cand, f_c, alpha, L)
        L *= growth
    raise LineSearchError(f'criterion not met after {max_doublings} '
                          f'increases of L (last L={L / growth:.3e})')


def converged(objectives, tol):
    """Relative change of the last two objective values below ``tol``."""
    if len(objectives) < 2:
        return False
    prev, cur = objectives[-2], objectives[-1]
    return abs(cur - prev) / max(1.0, abs(prev)) < tol


# ---------------------------------------------------------------------------
# Solver

def _log1pexp(x):
    if x > 0:
        return x + math.log1p(math.exp(-x))
    return math.log1p(math.exp(x))


def _sigmoid(x):
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def _u_line_search(f_t, qi, u_hat, f_hat, g, proj, L, cfg):
    # line_search specialised to a block whose value depends on q_i . u only
    slack = 1e-13 * (1.0 + abs(f_hat))
    for _ in range(cfg.max_doublings + 1):
        cand = proj(u_hat - (cfg.xi / L) * g)
        diff = cand - u_hat
        t = float(qi @ cand)
        f_c = f_t(t)
        if f_c <= f_hat + float(g @ diff) + 0.5 * L * float(diff @ diff) + slack:
            return cand, f_c, t, L
        L *= cfg.ls_growth
    raise LineSearchError(f'criterion not met after {cfg.max_doublings} '
                          f'increases of L (last L={L / cfg.ls_growth:.3e})')


def fit(d, lap, h, cfg=BCDConfig(), init=None, callback=None):
    """Minimize the full objective over ``beta`` and the ``u_i``.

    ``lap`` may be None (no graph term). With ``cfg.freeze_u`` only ``beta``
    is updated and, absent ``init``, every ``u_i`` is all ones. ``callback``
    is called as ``callback(iteration, params)`` after each outer iteration.
    Returns ``(params, trace)``.
    """
    if lap is not None and lap.m != d.m:
        raise ValueError(f'Laplacian is {lap.m}x{lap.m}, dataset has {d.m} '
                         'tweets')
    if init is not None:
        p = init.copy()
    elif cfg.freeze_u:
        p = initial_params(d, h, cfg.seed)
        p.u = [np.ones(n) for n in d.lengths]
    else:
        p = initial_params(d, h, cfg.seed)
    if p.beta.shape != (d.k,) or [len(x) for x in p.u] != d.lengths.tolist():
        raise ValueError('initial parameters do not match the dataset shape')
    if any(np.count_nonzero(x) > h.r for x in p.u) and not cfg.freeze_u:
        raise ValueError('initial u violates the l0 constraint')

    y = d.labels
    labeled = y != 0
    lam1, lam2 = h.lambda1, h.lambda2
    lam3 = h.lambda3 if lap is not None else 0.0
    lmat = lap.matrix if lap is not None else None
    diag = lmat.diagonal() if lmat is not None else np.zeros(d.m)
    off = d.offsets
    words = d.words

    beta = p.beta.astype(np.float64).copy()
    beta_prev = beta.copy()
    u = np.concatenate(p.u).astype(np.float64)
    u_prev = u.copy()
    L_beta = cfg.L_init
    L_u = np.full(d.m, cfg.L_init)

    def lap_mv(s):
        return lmat @ s if lmat is not None else np.zeros_like(s)

    def objective():
        z = aggregate_all(d, u)
        s = z @ beta
        val = (float(np.sum(np.logaddexp(0.0, -y[labeled] * s[labeled])))
               + 0.5 * lam1 * float(beta @ beta)
               + 0.5 * lam3 * float(s @ lap_mv(s))
               + lam2 * float(np.abs(beta).sum()))
        return val

    def soft(v, alpha):
        return np.sign(v) * np.maximum(np.abs(v) - alpha * lam2, 0.0)

    def proj(v):
        return project_l0(v, h.r, h.u_lower, h.u_upper)

    J = objective()
    if not math.isfinite(J):
        raise NumericalError('initial objective is not finite')
    trace = OptimizerTrace(J, int(np.count_nonzero(u)))
    ls_kw = dict(xi=cfg.xi, growth=cfg.ls_growth, max_doublings=cfg.max_doublings)
    t0 = time.perf_counter()

    for k in range(1, cfg.max_iter + 1):
        eta = eta_schedule(k, cfg.eta_mode)
        rejected = 0

        # -- beta block
        z = aggregate_all(d, u)

        def f_beta(b):
            s = z @ b
            return (float(np.sum(np.logaddexp(0.0, -y[labeled] * s[labeled])))
                    + 0.5 * lam1 * float(b @ b) + 0.5 * lam3 * float(s @ lap_mv(s)))

        def g_beta(b):
            s = z @ b
            coef = -y * expit(-y * s) + lam3 * lap_mv(s)
            return z.T @ coef + lam1 * b

        f_cur = f_beta(beta)
        F_cur = f_cur + lam2 * float(np.abs(beta).sum())
        res = None
        for e in ((eta, 0.0) if eta > 0 else (0.0,)):
            b_hat = extrapolate(beta, beta_prev, e)
            f_hat = f_beta(b_hat) if e > 0 else f_cur
            res = line_search(f_beta, b_hat, g_beta(b_hat), soft, f_hat=f_hat,
                              L_start=max(cfg.L_init, L_beta / cfg.ls_growth),
                              **ls_kw)
            L_beta = res.L
            if res.value + lam2 * float(np.abs(res.point).sum()) <= F_cur + GUARD:
                break
            rejected += 1
            res = None
        alpha_beta = 0.0
        if res is not None:
            beta_prev, beta = beta, res.point
            alpha_beta = res.alpha
        else:
            beta_prev = beta.copy()

        # -- u blocks: each is a scalar function of t = q_i . u_i
        alphas = []
        if not cfg.freeze_u:
            s = z @ beta
            ls_vec = lap_mv(s)
            q = words @ beta
            for i in range(d.m):
                a, b = off[i], off[i + 1]
                qi = q[a:b]
                yi = float(y[i])
                lii = float(diag[i])
                ci = float(ls_vec[i]) - lii * float(s[i])

                def f_t(t, yi=yi, lii=lii, ci=ci):
                    return _log1pexp(-yi * t) + lam3 * (ci * t + 0.5 * lii * t * t)

                ui = u[a:b].copy()
                f_i = f_t(float(s[i]))
                step = None
                for e in ((eta, 0.0) if eta > 0 else (0.0,)):
                    if e > 0:
                        u_hat = ui + e * (ui - u_prev[a:b])
                        t_hat = float(qi @ u_hat)
                        f_hat = f_t(t_hat)
                    else:
                        u_hat, t_hat, f_hat = ui, float(s[i]), f_i
                    dl = -yi * _sigmoid(-yi * t_hat) if yi else 0.0
                    g = (dl + lam3 * (ci + lii * t_hat)) * qi
                    step = _u_line_search(f_t, qi, u_hat, f_hat, g, proj,
                                          max(cfg.L_init, L_u[i] / cfg.ls_growth),
                                          cfg)
                    L_u[i] = step[3]
                    if step[1] <= f_i + GUARD:
                        break
                    rejected += 1
                    step = None
                u_prev[a:b] = ui
                if step is None:
                    continue
                cand, _, t_new, L_i = step
                u[a:b] = cand
                alphas.append(cfg.xi / L_i)
                delta = t_new - s[i]
                if delta != 0.0:
                    s[i] = t_new
                    if lmat is not None:
                        row = slice(lmat.indptr[i], lmat.indptr[i + 1])
                        ls_vec[lmat.indices[row]] += delta * lmat.data[row]

        J = objective()
        if not math.isfinite(J):
            raise NumericalError(f'objective became non-finite at iteration {k}')
        trace.append(IterationRecord(
            iteration=k, objective=J, alpha_beta=alpha_beta,
            mean_alpha_u=float(np.mean(alphas)) if alphas else 0.0,
            eta=eta, nnz_u=int(np.count_nonzero(u)),
            millis=1000.0 * (time.perf_counter() - t0), rejected=rejected))
        if callback is not None:
            callback(k, ModelParams(beta.copy(), d.split_u(u)))
        if converged([trace.initial_objective] + trace.objectives, cfg.tol):
            trace.converged = True
            break

    return ModelParams(beta, d.split_u(u)), trace


TRACE_COLUMNS = ('iteration', 'objective', 'alpha_beta', 'mean_alpha_u', 'eta',
                 'nnz_u', 'millis')


def save_trace(trace, path, header=None, timings=False):
    """Comma-separated trace table. Wall-clock ``millis`` is written only
    with ``timings`` so that default output is reproducible."""
    cols = TRACE_COLUMNS if timings else TRACE_COLUMNS[:-1]
    with Path(path).open('w', encoding='utf-8') as fh:
        if header:
            fh.write(f'# {header}\n')
        fh.write(','.join(cols) + '\n')
        fh.write(','.join(['0', repr(trace.initial_objective), '0.0', '0.0',
                           '0.0', str(trace.initial_nnz), '0.0'][:len(cols)])
                 + '\n')
        for r in trace.records:
            row = asdict(r)
            fh.write(','.join(repr(row[c]) if isinstance(row[c], float)
                              else str(row[c]) for c in cols) + '\n')
