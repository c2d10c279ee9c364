"""Ragged tweet/word/embedding datasets.

A dataset is a list of tweets; each tweet is a bag of ``n_i`` word vectors of
a shared dimension ``k``. Files are newline-delimited JSON records::

    {"id": "t1", "label": 1, "words": [[0.1, 0.2], [0.3, -0.1]]}

An optional first record ``{"meta": {...}}`` carries provenance and tells the
loader whether the bias column is already present.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

__all__ = ['Tweet', 'Dataset', 'PlantedSpec', 'DataError',
           'load_dataset', 'save_dataset', 'load_flags', 'save_flags',
           'add_bias', 'undersample', 'generate_planted', 'split_dataset',
           'aggregate', 'aggregate_all']


class DataError(ValueError):
    """Raised on malformed or inconsistent dataset input."""


def _frozen(a):
    a = np.array(a, dtype=np.float64)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Tweet:
    """One tweet: an id, a label in {+1, -1} or ``None`` (unlabeled), and an
    ``(n_i, k)`` array of word vectors."""
    id: str
    label: int | None
    words: np.ndarray

    def __post_init__(self):
        w = _frozen(self.words)
        if w.ndim != 2 or w.shape[0] < 1:
            raise DataError(f'tweet {self.id!r}: needs at least one word')
        if not np.all(np.isfinite(w)):
            raise DataError(f'tweet {self.id!r}: non-finite word vector')
        if self.label not in (1, -1, None):
            raise DataError(f'tweet {self.id!r}: label {self.label!r} '
                            'outside {+1, -1, unlabeled}')
        object.__setattr__(self, 'words', w)

    @property
    def n_words(self):
        return self.words.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Tweet):
            return NotImplemented
        return (self.id == other.id and self.label == other.label
                and self.words.shape == other.words.shape
                and np.array_equal(self.words, other.words))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Dataset:
    tweets: tuple
    k: int
    bias_enabled: bool = False

    def __post_init__(self):
        tweets = tuple(self.tweets)
        object.__setattr__(self, 'tweets', tweets)
        if not tweets:
            raise DataError('dataset needs at least one tweet')
        ids = set()
        for t in tweets:
            if t.words.shape[1] != self.k:
                raise DataError(f'tweet {t.id!r}: inconsistent dimension '
                                f'{t.words.shape[1]} (expected k={self.k})')
            if t.id in ids:
                raise DataError(f'duplicate tweet id {t.id!r}')
            ids.add(t.id)
        if self.bias_enabled and not all(np.all(t.words[:, -1] == 1.0)
                                         for t in tweets):
            raise DataError('bias enabled but last coordinate is not 1')

    def __len__(self):
        return len(self.tweets)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.k == other.k and self.bias_enabled == other.bias_enabled
                and self.tweets == other.tweets)

    __hash__ = None

    @property
    def m(self):
        return len(self.tweets)

    @cached_property
    def ids(self):
        return [t.id for t in self.tweets]

    @cached_property
    def lengths(self):
        return np.array([t.n_words for t in self.tweets], dtype=np.int64)

    @cached_property
    def offsets(self):
        """Start index of each tweet in :attr:`words`, plus a final sentinel."""
        return np.concatenate([[0], np.cumsum(self.lengths)])

    @cached_property
    def words(self):
        """All word vectors stacked into one ``(sum n_i, k)`` array."""
        return _frozen(np.vstack([t.words for t in self.tweets]))

    @cached_property
    def labels(self):
        """Labels as floats; unlabeled tweets are 0."""
        return _frozen([t.label or 0 for t in self.tweets])

    @property
    def labeled_mask(self):
        return self.labels != 0

    def index_of(self, tweet_id):
        return self._index[tweet_id]

    @cached_property
    def _index(self):
        return {tid: i for i, tid in enumerate(self.ids)}

    def subset(self, indices):
        return Dataset([self.tweets[i] for i in indices], self.k,
                       self.bias_enabled)

    def split_u(self, u_flat):
        """Split a flat instance-weight vector into per-tweet pieces."""
        return [np.array(u_flat[a:b]) for a, b in
                zip(self.offsets[:-1], self.offsets[1:])]


@dataclass(frozen=True)
class PlantedSpec:
    """Parameters of the planted-signal surrogate corpus.

    Positive tweets carry ``ceil(signal_words_fraction * n_i)`` words drawn
    around ``signal_direction``; every other word is isotropic noise.
    """
    m: int = 200
    n_range: tuple = (8, 16)
    k: int = 10
    positive_ratio: float = 0.5
    signal_words_fraction: float = 0.7
    signal_direction: tuple | None = None
    noise_scale: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.positive_ratio < 1:
            raise ValueError('positive_ratio must lie in (0, 1)')
        if not 0 < self.signal_words_fraction <= 1:
            raise ValueError('signal_words_fraction must lie in (0, 1]')
        lo, hi = self.n_range
        if not 1 <= lo <= hi:
            raise ValueError('n_range must satisfy 1 <= min <= max')
        if self.m < 1 or self.k < 1 or self.noise_scale < 0:
            raise ValueError('m, k must be positive and noise_scale >= 0')
        if self.signal_direction is not None:
            d = np.asarray(self.signal_direction, dtype=float)
            if d.shape != (self.k,) or not np.isclose(np.linalg.norm(d), 1):
                raise ValueError('signal_direction must be a unit k-vector')

    def direction(self):
        if self.signal_direction is not None:
            return np.asarray(self.signal_direction, dtype=float)
        d = np.zeros(self.k)
        d[0] = 1.0
        return d


# ---------------------------------------------------------------------------
# File I/O

def _parse_label(raw, lineno):
    if raw is None:
        return None
    if raw in (1, 1.0, '1', '+1'):
        return 1
    if raw in (-1, -1.0, '-1', 0, 0.0, '0'):
        return -1
    raise DataError(f'line {lineno}: label {raw!r} outside {{+1, -1, unlabeled}}')


def add_bias(d):
    """Append a constant-1 coordinate to every word vector."""
    if d.bias_enabled:
        return d
    tweets = [Tweet(t.id, t.label,
                    np.hstack([t.words, np.ones((t.n_words, 1))]))
              for t in d.tweets]
    return Dataset(tweets, d.k + 1, True)


def load_dataset(path, bias=False, normalize=False):
    """Read a JSON-lines dataset.

    Labels 0/1 are remapped to -1/+1; ``null`` marks an unlabeled tweet.
    With ``normalize`` every raw word vector is scaled to unit length before
    the bias column is appended.
    """
    path = Path(path)
    tweets = []
    k = None
    has_bias = False
    with path.open(encoding='utf-8') as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f'{path}: line {lineno}: malformed record '
                                f'({exc.msg})') from None
            if not isinstance(rec, dict):
                raise DataError(f'{path}: line {lineno}: malformed record')
            if 'meta' in rec and 'id' not in rec:
                has_bias = bool(rec['meta'].get('bias', False))
                continue
            try:
                tid, raw_label, words = str(rec['id']), rec['label'], rec['words']
            except KeyError as exc:
                raise DataError(f'{path}: line {lineno}: malformed record '
                                f'(missing field {exc.args[0]!r})') from None
            if not isinstance(words, list) or not words:
                raise DataError(f'{path}: line {lineno}: empty tweet {tid!r}')
            if k is None:
                k = len(words[0]) if isinstance(words[0], list) else -1
            for w in words:
                if not isinstance(w, list) or len(w) != k:
                    got = len(w) if isinstance(w, list) else 'scalar'
                    raise DataError(f'{path}: line {lineno}: inconsistent '
                                    f'dimension {got} (expected k={k})')
            label = _parse_label(raw_label, lineno)
            try:
                arr = np.asarray(words, dtype=np.float64)
            except (TypeError, ValueError):
                raise DataError(f'{path}: line {lineno}: malformed record '
                                '(non-numeric word vector)') from None
            if normalize:
                raw = arr[:, :-1] if has_bias else arr
                norms = np.linalg.norm(raw, axis=1, keepdims=True)
                raw = raw / np.where(norms > 0, norms, 1.0)
                arr = np.hstack([raw, arr[:, -1:]]) if has_bias else raw
            try:
                tweets.append(Tweet(tid, label, arr))
            except DataError as exc:
                raise DataError(f'{path}: line {lineno}: {exc}') from None
    if not tweets:
        raise DataError(f'{path}: no tweet records')
    d = Dataset(tweets, k, has_bias)
    return add_bias(d) if bias else d


def save_dataset(d, path, meta=None):
    """Write ``d`` as JSON lines; ``meta`` is merged into the header record."""
    header = dict(meta or {})
    header['bias'] = d.bias_enabled
    header['k'] = d.k
    with Path(path).open('w', encoding='utf-8') as fh:
        fh.write(json.dumps({'meta': header}, sort_keys=True) + '\n')
        for t in d.tweets:
            rec = {'id': t.id, 'label': t.label, 'words': t.words.tolist()}
            fh.write(json.dumps(rec) + '\n')


def save_flags(flags, path):
    with Path(path).open('w', encoding='utf-8') as fh:
        for row in flags:
            fh.write(json.dumps([bool(x) for x in row]) + '\n')


def load_flags(path):
    with Path(path).open(encoding='utf-8') as fh:
        return [np.array(json.loads(line), dtype=bool)
                for line in fh if line.strip()]


# ---------------------------------------------------------------------------
# Sampling

def undersample(d, target_positive_ratio, seed=0):
    """Drop negatives uniformly at random until the positive ratio reaches
    the target.

    Returns ``(dataset, unchanged)``; ``unchanged`` is True when the ratio
    already exceeds the target and nothing was removed. Unlabeled tweets are
    kept.
    """
    if not 0 < target_positive_ratio <= 1:
        raise ValueError('target_positive_ratio must lie in (0, 1]')
    y = d.labels
    pos = np.flatnonzero(y > 0)
    neg = np.flatnonzero(y < 0)
    if len(pos) == 0 or len(neg) == 0:
        raise DataError('undersample needs both positive and negative tweets')
    ratio = len(pos) / (len(pos) + len(neg))
    if ratio > target_positive_ratio:
        return d, True
    # largest negative count with pos / (pos + neg) >= target
    n_keep = math.floor(len(pos) * (1 - target_positive_ratio)
                        / target_positive_ratio + 1e-9)
    n_keep = min(n_keep, len(neg))
    rng = np.random.default_rng(seed)
    kept_neg = rng.choice(neg, size=n_keep, replace=False)
    keep = np.zeros(d.m, dtype=bool)
    keep[y == 0] = True
    keep[pos] = True
    keep[kept_neg] = True
    return d.subset(np.flatnonzero(keep)), False


def split_dataset(d, test_fraction, seed=0):
    """Stratified random split into ``(train, test)``."""
    rng = np.random.default_rng(seed)
    test = []
    for cls in (1.0, -1.0, 0.0):
        idx = np.flatnonzero(d.labels == cls)
        n_test = int(round(test_fraction * len(idx)))
        test.extend(rng.permutation(idx)[:n_test].tolist())
    mask = np.zeros(d.m, dtype=bool)
    mask[test] = True
    return d.subset(np.flatnonzero(~mask)), d.subset(np.flatnonzero(mask))


def generate_planted(spec):
    """Draw a planted dataset and the per-word signal flags.

    Returns ``(dataset, flags)`` where ``flags[i][j]`` marks the planted
    signal words. No bias column is added here.
    """
    rng = np.random.default_rng(spec.seed)
    direction = spec.direction()
    n_pos = int(round(spec.positive_ratio * spec.m))
    labels = np.full(spec.m, -1)
    labels[rng.permutation(spec.m)[:n_pos]] = 1
    lo, hi = spec.n_range
    tweets, flags = [], []
    width = len(str(spec.m - 1))
    for i in range(spec.m):
        n = int(rng.integers(lo, hi + 1))
        words = spec.noise_scale * rng.standard_normal((n, spec.k))
        flag = np.zeros(n, dtype=bool)
        if labels[i] == 1:
            n_sig = math.ceil(spec.signal_words_fraction * n)
            flag[rng.permutation(n)[:n_sig]] = True
            words[flag] += direction
        tweets.append(Tweet(f't{i:0{width}d}', int(labels[i]), words))
        flags.append(flag)
    return Dataset(tweets, spec.k, False), flags


# ---------------------------------------------------------------------------
# Aggregation

def aggregate(t, u_i):
    """Instance-weighted sum of a tweet's word vectors, ``x_i^T u_i``."""
    u_i = np.asarray(u_i, dtype=np.float64)
    if u_i.shape != (t.n_words,):
        raise ValueError(f'u_i has length {u_i.size}, tweet {t.id!r} has '
                         f'{t.n_words} words')
    return t.words.T @ u_i


def aggregate_all(d, u_flat):
    """Stack :func:`aggregate` over all tweets; ``u_flat`` is the
    concatenation of the per-tweet weight vectors. Returns an ``(m, k)``
    array."""
    return np.add.reduceat(d.words * u_flat[:, None], d.offsets[:-1], axis=0)
