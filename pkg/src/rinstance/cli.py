"""Command-line workflows: synth, train, predict, eval, graph.

Exit status: 0 on success, 1 when the solver aborts numerically, 2 on I/O or
validation errors.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict

import numpy as np

from . import __version__
from .data import (DataError, PlantedSpec, generate_planted, load_dataset,
                   save_dataset, save_flags, split_dataset, undersample)
from .evaluate import EvalError, evaluate_run, save_report, save_scores
from .graph import (ConvergenceError, GraphError, assortativity,
                    degree_stats, generate_behavior_graph, laplacian,
                    line_graph_convert, load_user_graph, modularity,
                    save_user_graph)
from .model import Hyper, save_model
from .optimizer import (BCDConfig, LineSearchError, NumericalError, fit,
                        save_trace)

EXIT_OK, EXIT_NUMERIC, EXIT_INPUT = 0, 1, 2


class UsageError(ValueError):
    pass


def _header(command, cfg):
    """One-line provenance record embedded in every output file."""
    return json.dumps({'command': command, 'version': __version__, **cfg},
                      sort_keys=True)


def _child_seeds(seed, n):
    # independent streams for each consumer of randomness
    return [int(s.generate_state(1)[0])
            for s in np.random.SeedSequence(seed).spawn(n)]


# ---------------------------------------------------------------------------
# synth

def synth_benchmark(seed=0, m=400, k=16, n_range=(8, 16), pos_ratio=0.3,
                    signal_fraction=0.7, noise=0.3, homophily=0.9,
                    users_per_tweet=1.0, popularity=0.5):
    """Planted dataset plus a homophilous behavior graph, as written by
    ``synth``. Returns ``(dataset, flags, user_graph, split_seed)``."""
    data_seed, graph_seed, split_seed = _child_seeds(seed, 3)
    spec = PlantedSpec(m=m, n_range=tuple(n_range), k=k,
                       positive_ratio=pos_ratio,
                       signal_words_fraction=signal_fraction,
                       noise_scale=noise, seed=data_seed)
    d, flags = generate_planted(spec)
    g = generate_behavior_graph(d.ids, [t.label for t in d.tweets],
                                homophily=homophily,
                                users_per_tweet=users_per_tweet,
                                popularity=popularity, seed=graph_seed)
    return d, flags, g, split_seed


def cmd_synth(args):
    d, flags, g, split_seed = synth_benchmark(
        args.seed, args.m, args.k, (args.n_min, args.n_max), args.pos_ratio,
        args.signal_fraction, args.noise, args.homophily,
        args.users_per_tweet, args.popularity)
    labels = [t.label for t in d.tweets]
    cfg = {'m': args.m, 'k': args.k, 'n_range': [args.n_min, args.n_max],
           'pos_ratio': args.pos_ratio, 'signal_fraction': args.signal_fraction,
           'noise': args.noise, 'homophily': args.homophily,
           'users_per_tweet': args.users_per_tweet,
           'popularity': args.popularity, 'seed': args.seed,
           'test_fraction': args.test_fraction}
    header = _header('synth', cfg)
    if args.test_fraction:
        train, test = split_dataset(d, args.test_fraction, split_seed)
        save_dataset(train, args.data, meta={'config': header})
        save_dataset(test, args.holdout, meta={'config': header})
    else:
        save_dataset(d, args.data, meta={'config': header})
    save_user_graph(g, args.graph, header=header)
    if args.truth:
        save_flags(flags, args.truth)
    ratio = float(np.mean(d.labels > 0))
    tg = line_graph_convert(g).reindex(d.ids)
    print(f'positive ratio: {ratio:.4f}')
    try:
        print(f'assortativity: {assortativity(tg, labels):.4f}')
    except GraphError as exc:
        print(f'assortativity: undefined ({exc})')
    return EXIT_OK


# ---------------------------------------------------------------------------
# train

def _hyper(args):
    return Hyper(lambda1=args.lambda1, lambda2=args.lambda2,
                 lambda3=args.lambda3, r=args.r, tau_word=args.tau_word,
                 tau_tweet=args.tau_tweet, u_lower=args.u_lower,
                 u_upper=args.u_upper)


def cmd_train(args):
    h = _hyper(args)
    cfg = BCDConfig(max_iter=args.max_iter, tol=args.tol, xi=args.xi,
                    eta_mode=args.eta_mode, seed=args.seed)
    d = load_dataset(args.data, bias=args.bias, normalize=args.normalize)
    if args.undersample is not None:
        d, _ = undersample(d, args.undersample, _child_seeds(args.seed, 1)[0])
    if args.no_graph or args.graph is None:
        if h.lambda3 > 0:
            raise UsageError('lambda3 > 0 needs --graph (or pass --lambda3 0 '
                             '--no-graph)')
        lap = None
    else:
        tg = line_graph_convert(load_user_graph(args.graph)).reindex(d.ids)
        lap = laplacian(tg, teleport=args.teleport)
    params, trace = fit(d, lap, h, cfg)
    resolved = {'data': args.data, 'graph': None if lap is None else args.graph,
                'bias': args.bias, 'normalize': args.normalize,
                'undersample': args.undersample, 'teleport': args.teleport,
                'hyper': asdict(h), 'optimizer': asdict(cfg)}
    header = _header('train', resolved)
    save_model(args.model, params, h, config=json.loads(header), ids=d.ids)
    if args.trace:
        save_trace(trace, args.trace, header=header, timings=args.timings)
    status = 'converged' if trace.converged else 'stopped at max_iter'
    print(f'{status} after {len(trace)} iterations; objective '
          f'{trace.initial_objective:.6f} -> {trace.records[-1].objective:.6f}')
    return EXIT_OK


# ---------------------------------------------------------------------------
# predict / eval

def _score_header(command, args):
    return _header(command, {'data': args.data, 'model': args.model,
                             'bias': args.bias, 'normalize': args.normalize,
                             'tau_word': args.tau_word,
                             'tau_tweet': args.tau_tweet})


def cmd_predict(args):
    d = load_dataset(args.data, bias=args.bias, normalize=args.normalize)
    _, scores = evaluate_run(args.model, d, args.tau_word, args.tau_tweet)
    header = _score_header('predict', args)
    if args.out:
        save_scores(scores, args.out, header=header)
    else:
        print('tweet_id,proportion,label')
        for tid, prop, label in scores:
            print(f'{tid},{prop!r},{label}')
    return EXIT_OK


def cmd_eval(args):
    d = load_dataset(args.data, bias=args.bias, normalize=args.normalize)
    report, scores = evaluate_run(args.model, d, args.tau_word, args.tau_tweet)
    header = _score_header('eval', args)
    if args.scores:
        save_scores(scores, args.scores, header=header)
    if report is None:
        print('some tweets are unlabeled; metrics suppressed')
        return EXIT_OK
    if args.report:
        save_report(report, args.report, header=json.loads(header))
    print(f'precision {report.precision:.6f}  recall {report.recall:.6f}  '
          f'f1 {report.f1:.6f}  (tp={report.tp} fp={report.fp} '
          f'fn={report.fn} tn={report.tn})')
    return EXIT_OK


# ---------------------------------------------------------------------------
# graph

def _tweet_graph(args):
    tg = line_graph_convert(load_user_graph(args.graph))
    if getattr(args, 'data', None):
        d = load_dataset(args.data)
        return tg.reindex(d.ids), d
    return tg, None


def cmd_graph(args):
    tg, d = _tweet_graph(args)
    if args.action == 'convert':
        a = tg.adjacency.tocoo()
        rows = sorted((tg.ids[i], tg.ids[j], float(w))
                      for i, j, w in zip(a.row, a.col, a.data) if i < j)
        isolated = [tg.ids[i] for i in np.flatnonzero(degree_stats(tg).degree == 0)]
        lines = ['tweet_a,tweet_b,weight'] + [f'{x},{y},{w!r}' for x, y, w in rows]
        if args.out:
            with open(args.out, 'w', encoding='utf-8') as fh:
                fh.write(f'# {_header("graph convert", {"graph": args.graph})}\n')
                fh.write('\n'.join(lines) + '\n')
        else:
            print('\n'.join(lines))
        print(f'{len(rows)} links, {len(isolated)} isolated: '
              f'{" ".join(isolated)}', file=sys.stderr)
        return EXIT_OK
    if args.action == 'stats':
        st = degree_stats(tg)
        print(f'tweets {tg.m}  links {tg.n_edges()}  mean degree {st.mean:.4f}  '
              f'max degree {int(st.degree.max()) if tg.m else 0}  '
              f'isolated {st.n_isolated}')
        print('degree,count')
        for deg, cnt in st.histogram.items():
            print(f'{deg},{cnt}')
        return EXIT_OK
    if d is None:
        raise UsageError(f'graph {args.action} needs --data for tweet labels')
    labels = [t.label for t in d.tweets]
    if args.action == 'assortativity':
        print(f'assortativity {assortativity(tg, labels):.6f}')
    else:
        print(f'modularity {modularity(tg, labels):.6f}')
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing

def _add_data_flags(p):
    p.add_argument('--data', required=True, help='JSON-lines dataset')
    p.add_argument('--bias', action=argparse.BooleanOptionalAction,
                   default=False,
                   help='append a constant-1 feature to every word vector')
    p.add_argument('--normalize', action='store_true',
                   help='scale word vectors to unit length')


def _add_threshold_flags(p, defaults=True):
    d = Hyper()
    p.add_argument('--tau-word', type=float,
                   default=d.tau_word if defaults else None)
    p.add_argument('--tau-tweet', type=float,
                   default=d.tau_tweet if defaults else None)


def build_parser():
    parser = argparse.ArgumentParser(prog='rinstance', description=__doc__.split('\n')[0])
    parser.add_argument('--version', action='version', version=__version__)
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('synth', help='write a planted dataset and behavior graph')
    p.add_argument('--data', required=True)
    p.add_argument('--graph', required=True)
    p.add_argument('--truth')
    p.add_argument('--holdout', help='held-out split path (with --test-fraction)')
    p.add_argument('--test-fraction', type=float, default=0.0)
    p.add_argument('--m', type=int, default=400)
    p.add_argument('--k', type=int, default=16)
    p.add_argument('--n-min', type=int, default=8)
    p.add_argument('--n-max', type=int, default=16)
    p.add_argument('--pos-ratio', type=float, default=0.3)
    p.add_argument('--signal-fraction', type=float, default=0.7)
    p.add_argument('--noise', type=float, default=0.3)
    p.add_argument('--homophily', type=float, default=0.9)
    p.add_argument('--users-per-tweet', type=float, default=1.0)
    p.add_argument('--popularity', type=float, default=0.5)
    p.add_argument('--seed', type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser('train', help='fit a model')
    _add_data_flags(p)
    p.add_argument('--graph', help='tab-separated user behavior edges')
    p.add_argument('--no-graph', action='store_true')
    p.add_argument('--model', required=True)
    p.add_argument('--trace')
    p.add_argument('--timings', action='store_true',
                   help='add wall-clock millis to the trace')
    h, c = Hyper(), BCDConfig()
    p.add_argument('--lambda1', type=float, default=h.lambda1)
    p.add_argument('--lambda2', type=float, default=h.lambda2)
    p.add_argument('--lambda3', type=float, default=h.lambda3)
    p.add_argument('--r', type=int, default=h.r)
    p.add_argument('--u-lower', type=float, default=h.u_lower)
    p.add_argument('--u-upper', type=float, default=h.u_upper)
    _add_threshold_flags(p)
    p.add_argument('--max-iter', type=int, default=c.max_iter)
    p.add_argument('--tol', type=float, default=c.tol)
    p.add_argument('--xi', type=float, default=c.xi)
    p.add_argument('--eta-mode', choices=('nesterov', 'zero'), default=c.eta_mode)
    p.add_argument('--teleport', type=float, default=0.01)
    p.add_argument('--undersample', type=float,
                   help='drop negatives until this positive ratio')
    p.add_argument('--seed', type=int, default=c.seed)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser('predict', help='score tweets with a saved model')
    _add_data_flags(p)
    p.add_argument('--model', required=True)
    p.add_argument('--out', help='score table path (default: stdout)')
    _add_threshold_flags(p, defaults=False)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser('eval', help='score a saved model against labeled tweets')
    _add_data_flags(p)
    p.add_argument('--model', required=True)
    p.add_argument('--report')
    p.add_argument('--scores')
    _add_threshold_flags(p, defaults=False)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser('graph', help='tweet-graph utilities')
    p.add_argument('action', choices=('convert', 'stats', 'assortativity',
                                      'modularity'))
    p.add_argument('--graph', required=True)
    p.add_argument('--data', help='dataset supplying tweet ids and labels')
    p.add_argument('--out')
    p.set_defaults(func=cmd_graph)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (LineSearchError, NumericalError, ConvergenceError) as exc:
        print(f'error: {exc}', file=sys.stderr)
        return EXIT_NUMERIC
    except FileNotFoundError as exc:
        print(f'error: no such file: {exc.filename}', file=sys.stderr)
        return EXIT_INPUT
    except (OSError, DataError, GraphError, EvalError, UsageError,
            ValueError) as exc:
        print(f'error: {exc}', file=sys.stderr)
        return EXIT_INPUT


if __name__ == '__main__':
    sys.exit(main())
