import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rinstance.data import (DataError, Dataset, PlantedSpec, Tweet, add_bias,
                            aggregate, aggregate_all, generate_planted,
                            load_dataset, load_flags, save_dataset,
                            save_flags, split_dataset, undersample)
from conftest import random_dataset


def write_lines(path, records):
    path.write_text('\n'.join(json.dumps(r) for r in records) + '\n')
    return path


def test_tweet_rejects_empty_and_nonfinite():
    with pytest.raises(DataError):
        Tweet('a', 1, np.zeros((0, 3)))
    with pytest.raises(DataError):
        Tweet('a', 1, np.array([[1.0, np.nan]]))
    with pytest.raises(DataError):
        Tweet('a', 2, np.ones((1, 2)))


def test_dataset_rejects_duplicate_ids_and_mixed_k():
    t = Tweet('a', 1, np.ones((2, 3)))
    with pytest.raises(DataError):
        Dataset([t, t], 3)
    with pytest.raises(DataError):
        Dataset([t, Tweet('b', -1, np.ones((1, 4)))], 3)


def test_load_two_tweets_with_bias(tmp_path):
    p = write_lines(tmp_path / 'd.jsonl', [
        {'id': 'a', 'label': 1, 'words': [[1, 2, 3], [4, 5, 6]]},
        {'id': 'b', 'label': 0, 'words': [[0, 0, 1]]}])
    d = load_dataset(p, bias=True)
    assert d.k == 4 and d.bias_enabled
    assert np.all(d.words[:, -1] == 1)
    assert d.tweets[1].label == -1


def test_load_without_bias_is_default(tmp_path):
    p = write_lines(tmp_path / 'd.jsonl',
                    [{'id': 'a', 'label': 1, 'words': [[1, 2]]}])
    assert load_dataset(p).k == 2


def test_load_null_label_is_unlabeled(tmp_path):
    p = write_lines(tmp_path / 'd.jsonl',
                    [{'id': 'a', 'label': None, 'words': [[1, 2]]},
                     {'id': 'b', 'label': 1, 'words': [[1, 2]]}])
    d = load_dataset(p)
    assert d.tweets[0].label is None
    assert list(d.labels) == [0.0, 1.0]
    assert list(d.labeled_mask) == [False, True]


@pytest.mark.parametrize('records, needle', [
    ([{'id': 'a', 'label': 1, 'words': [[1, 2, 3]]},
      {'id': 'b', 'label': 1, 'words': [[1, 2]]}], 'line 2: inconsistent dimension'),
    ([{'id': 'a', 'label': 1, 'words': []}], 'line 1: empty tweet'),
    ([{'id': 'a', 'label': 5, 'words': [[1]]}], 'line 1: label'),
    ([{'id': 'a', 'words': [[1]]}], 'line 1: malformed record'),
])
def test_load_errors_name_the_line(tmp_path, records, needle):
    p = write_lines(tmp_path / 'd.jsonl', records)
    with pytest.raises(DataError, match=needle):
        load_dataset(p)


def test_load_malformed_json(tmp_path):
    p = tmp_path / 'd.jsonl'
    p.write_text('{"id": "a", "label": 1, "words": [[1]]}\n{oops\n')
    with pytest.raises(DataError, match='line 2: malformed record'):
        load_dataset(p)


def test_normalize_scales_raw_part_only(tmp_path):
    p = write_lines(tmp_path / 'd.jsonl',
                    [{'id': 'a', 'label': 1, 'words': [[3, 4], [0, 2]]}])
    d = load_dataset(p, bias=True, normalize=True)
    np.testing.assert_allclose(np.linalg.norm(d.words[:, :2], axis=1), 1.0)
    assert np.all(d.words[:, 2] == 1)


def test_planted_roundtrip(tmp_path):
    d, flags = generate_planted(PlantedSpec(m=30, k=5, seed=3))
    save_dataset(d, tmp_path / 'p.jsonl')
    save_flags(flags, tmp_path / 'f.jsonl')
    assert load_dataset(tmp_path / 'p.jsonl') == d
    back = load_flags(tmp_path / 'f.jsonl')
    assert all(np.array_equal(a, b) for a, b in zip(back, flags))


def test_saved_bias_column_is_not_added_twice(tmp_path):
    d = add_bias(generate_planted(PlantedSpec(m=5, k=3))[0])
    save_dataset(d, tmp_path / 'p.jsonl')
    again = load_dataset(tmp_path / 'p.jsonl', bias=True)
    assert again.k == 4


def test_planted_is_deterministic():
    spec = PlantedSpec(m=40, k=6, seed=11)
    a, fa = generate_planted(spec)
    b, fb = generate_planted(spec)
    assert a == b
    assert all(np.array_equal(x, y) for x, y in zip(fa, fb))


def test_planted_structure():
    spec = PlantedSpec(m=300, n_range=(5, 9), k=6, positive_ratio=0.3,
                       signal_words_fraction=0.6, noise_scale=0.2, seed=1)
    d, flags = generate_planted(spec)
    assert np.sum(d.labels > 0) == round(0.3 * 300)
    for t, f in zip(d.tweets, flags):
        if t.label == 1:
            assert f.sum() == math.ceil(0.6 * t.n_words)
        else:
            assert not f.any()


def test_planted_signal_mean_within_lln_bound():
    spec = PlantedSpec(m=400, k=6, noise_scale=0.4, seed=7)
    d, flags = generate_planted(spec)
    sig = np.vstack([t.words[f] for t, f in zip(d.tweets, flags) if f.any()])
    err = np.abs(sig.mean(axis=0) - spec.direction())
    assert np.all(err <= 3 * spec.noise_scale / math.sqrt(len(sig)))


def test_undersample_reaches_exact_ratio():
    d, _ = generate_planted(PlantedSpec(m=300, positive_ratio=0.1, seed=2))
    out, unchanged = undersample(d, 0.25, seed=0)
    assert not unchanged
    pos = np.sum(out.labels > 0)
    assert pos == 30 and pos / out.m == pytest.approx(0.25)
    # every positive survives
    assert {t.id for t in d.tweets if t.label == 1} <= set(out.ids)


def test_undersample_noop_when_ratio_already_high():
    d, _ = generate_planted(PlantedSpec(m=50, positive_ratio=0.6, seed=2))
    out, unchanged = undersample(d, 0.3)
    assert unchanged and out is d


def test_undersample_heavy_imbalance():
    # 3.48% positives raised to a balanced set
    tweets = [Tweet(f'p{i}', 1, np.ones((1, 2))) for i in range(348)]
    tweets += [Tweet(f'n{i}', -1, np.ones((1, 2))) for i in range(9652)]
    out, _ = undersample(Dataset(tweets, 2), 0.5, seed=4)
    assert np.sum(out.labels > 0) == 348 and np.sum(out.labels < 0) == 348


def test_split_is_stratified_and_disjoint():
    d, _ = generate_planted(PlantedSpec(m=100, positive_ratio=0.3, seed=0))
    tr, te = split_dataset(d, 0.3, seed=1)
    assert set(tr.ids).isdisjoint(te.ids) and tr.m + te.m == 100
    assert np.sum(te.labels > 0) == 9


def test_aggregate_matches_loop(rng):
    d = random_dataset(rng, m=15, k=4)
    u = rng.standard_normal(int(d.lengths.sum()))
    z = aggregate_all(d, u)
    for i, t in enumerate(d.tweets):
        a, b = d.offsets[i], d.offsets[i + 1]
        expect = sum(u[j] * t.words[j - a] for j in range(a, b))
        np.testing.assert_allclose(z[i], expect, atol=1e-12)
        np.testing.assert_allclose(aggregate(t, u[a:b]), expect, atol=1e-12)


def test_aggregate_length_check():
    t = Tweet('a', 1, np.ones((3, 2)))
    with pytest.raises(ValueError):
        aggregate(t, np.ones(2))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(1, 5), st.integers(0, 10**6))
def test_aggregate_all_ones_is_bag_sum(n, k, seed):
    rng = np.random.default_rng(seed)
    d = random_dataset(rng, m=4, k=k, n_range=(1, n))
    z = aggregate_all(d, np.ones(int(d.lengths.sum())))
    np.testing.assert_allclose(z, [t.words.sum(0) for t in d.tweets],
                               atol=1e-12)
