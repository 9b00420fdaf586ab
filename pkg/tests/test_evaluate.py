import itertools

import numpy as np
import pytest

from moirekit.errors import EmptyMetrics, InsufficientSamples, MissingLabel, SingleClassOnly
from moirekit.evaluate import (
    ThresholdMetrics,
    build_scoreset,
    candidate_thresholds,
    evaluate_reports,
    roc_auc,
    select_threshold,
    summary_stats,
    sweep_thresholds,
)


def _set(pos, neg):
    reports, labels = {}, {}
    for i, s in enumerate(pos):
        reports[f"p{i:03d}"] = {"best_correlation": s}
        labels[f"p{i:03d}"] = 1
    for i, s in enumerate(neg):
        reports[f"n{i:03d}"] = {"best_correlation": s}
        labels[f"n{i:03d}"] = 0
    return build_scoreset(reports, labels)


def _pairwise(pos, neg):
    wins = [1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg]
    return float(np.mean(wins))


def test_exclusions():
    ss = build_scoreset(
        {"a": {"best_correlation": None}, "b": {"best_correlation": 0.0}, "c": {"best_correlation": 0.93},
         "d": {"best_correlation": 0.7, "excluded": True}},
        {"a": 1, "b": 0, "c": 1, "d": 0},
    )
    assert [e.excluded for e in ss.entries] == [True, True, False, True]
    assert ss.n_pos == 1 and ss.n_neg == 0
    with pytest.raises(MissingLabel):
        build_scoreset({"x": {"best_correlation": 0.5}}, {})


def test_sweep_example():
    ss = _set([0.95, 0.9, 0.88], [0.5, 0.6])
    best = select_threshold(sweep_thresholds(ss))
    assert best.tau == pytest.approx(0.74)
    assert best.accuracy == 1.0 and best.balanced_accuracy == 1.0


def test_sweep_identical_scores():
    ss = _set([0.8, 0.8, 0.8], [0.8, 0.8])
    ms = sweep_thresholds(ss)
    assert len(ms) == 2
    assert select_threshold(ms).accuracy == pytest.approx(3 / 5)


def test_sweep_below_min():
    ms = sweep_thresholds(_set([0.9, 0.7], [0.2, 0.5]))
    assert ms[0].tpr == 1 and ms[0].tnr == 0


def test_single_class():
    with pytest.raises(SingleClassOnly):
        sweep_thresholds(_set([0.9, 0.8], []))
    with pytest.raises(SingleClassOnly):
        roc_auc(_set([], [0.3]))


def test_auc_examples():
    assert roc_auc(_set([0.9, 0.8], [0.3, 0.4]))[1] == 1.0
    assert roc_auc(_set([0.9, 0.4], [0.5, 0.3]))[1] == pytest.approx(0.75)
    roc, _ = roc_auc(_set([0.9, 0.4], [0.5, 0.3]))
    assert roc[0] == (0.0, 0.0) and roc[-1] == (1.0, 1.0) and roc == sorted(roc)


def test_auc_shuffled_labels_near_half():
    rng = np.random.default_rng(2)
    aucs = []
    for _ in range(200):
        s = rng.random(60)
        y = rng.permutation(np.r_[np.ones(30), np.zeros(30)])
        aucs.append(roc_auc(_set(s[y == 1], s[y == 0]))[1])
    assert abs(np.mean(aucs) - 0.5) < 0.05


def test_select_threshold_tiebreaks():
    # same accuracy, different balanced accuracy
    a = ThresholdMetrics(0.3, tp=4, fn=0, tn=1, fp=1)   # acc 5/6, bal 0.75
    b = ThresholdMetrics(0.6, tp=3, fn=1, tn=2, fp=0)   # acc 5/6, bal 0.875
    assert select_threshold([a, b]).tau == 0.6
    c = ThresholdMetrics(0.2, tp=3, fn=1, tn=2, fp=0)
    assert select_threshold([b, c]).tau == 0.2
    with pytest.raises(EmptyMetrics):
        select_threshold([])


def test_select_threshold_fixture_brute_force():
    ss = _set([0.9, 0.55], [0.6, 0.2])
    ms = sweep_thresholds(ss)
    s, y = ss.arrays()
    grid = np.linspace(0, 1, 10001)
    acc = [np.mean((s >= t) == (y == 1)) for t in grid]
    best = select_threshold(ms)
    assert best.accuracy == pytest.approx(max(acc))
    ties = [m for m in ms if m.accuracy == best.accuracy]
    assert len(ties) > 1 and best.balanced_accuracy == max(m.balanced_accuracy for m in ties)


def test_rates_monotone():
    rng = np.random.default_rng(8)
    ss = _set(rng.random(25), rng.random(20) * 0.8)
    ms = sweep_thresholds(ss)
    assert all(a.tpr >= b.tpr and a.fpr >= b.fpr for a, b in zip(ms, ms[1:]))
    assert all(m.tp + m.fn == ss.n_pos and m.tn + m.fp == ss.n_neg for m in ms)


def test_monotone_relabel_invariance():
    rng = np.random.default_rng(4)
    pos, neg = rng.random(15), rng.random(12) * 0.9
    base = _set(pos, neg)
    warped = _set(np.exp(3 * pos), np.exp(3 * neg))
    assert roc_auc(base)[1] == pytest.approx(roc_auc(warped)[1], abs=1e-15)
    assert select_threshold(sweep_thresholds(base)).accuracy == select_threshold(sweep_thresholds(warped)).accuracy


@pytest.mark.parametrize("seed", range(5))
def test_auc_equals_pairwise(seed):
    rng = np.random.default_rng(seed)
    # coarse rounding forces ties; the offset keeps scores off the excluded value 0
    pos = np.round(rng.random(rng.integers(2, 20)), 1) + 0.05
    neg = np.round(rng.random(rng.integers(2, 20)) * 0.8, 1) + 0.05
    assert roc_auc(_set(pos, neg))[1] == pytest.approx(_pairwise(pos, neg), abs=1e-12)


def test_summary_stats_identical():
    x = [0.5, 0.7, 0.9, 0.6]
    st = summary_stats(x, x)
    assert st.welch_t == 0 and st.cohens_d == 0
    with pytest.raises(InsufficientSamples):
        summary_stats([1.0], [1.0, 2.0])


def _with_moments(mu, sd, n):
    z = np.random.default_rng(n).normal(size=n)
    z = (z - z.mean()) / z.std(ddof=1)
    return mu + sd * z


def test_summary_stats_rounded_moments():
    st = summary_stats(_with_moments(0.87, 0.14, 86), _with_moments(0.57, 0.21, 92))
    assert st.welch_t == pytest.approx(11.28, abs=0.01)
    assert st.cohens_d == pytest.approx(1.670, abs=0.005)
    assert st.welch_df == pytest.approx(159.5, abs=0.1)


def test_summary_stats_scaling():
    a, b = _with_moments(0.9, 0.05, 20), _with_moments(0.6, 0.2, 30)
    s1 = summary_stats(a, b)
    s2 = summary_stats(np.r_[a, a], np.r_[b, b])
    # duplicating samples nudges the sample SDs; use the same moments instead
    a2, b2 = _with_moments(0.9, 0.05, 40), _with_moments(0.6, 0.2, 60)
    s3 = summary_stats(a2, b2)
    assert s3.cohens_d == pytest.approx(s1.cohens_d, rel=0.02)
    assert s3.welch_t / s1.welch_t == pytest.approx(np.sqrt(2), rel=1e-12)
    assert s2.welch_t > s1.welch_t


def test_evaluate_bundle():
    reports = {"a": {"best_correlation": 0.99}, "b": {"best_correlation": 0.98},
               "c": {"best_correlation": 0.4}, "d": {"best_correlation": 0.6}, "e": {"best_correlation": None}}
    labels = {"a": 1, "b": "real", "c": 0, "d": "fake", "e": 1}
    m = evaluate_reports(reports, labels)
    assert m["n_included"] == 4 and m["n_excluded"] == 1 and m["excluded_ids"] == ["e"]
    assert m["auc"] == 1.0 and m["accuracy_at_tau_star"] == 1.0
    assert m["welch_t"] > 0 and m["per_class"]["real"]["n"] == 2


def test_candidates_structure():
    c = candidate_thresholds(np.array([0.2, 0.5, 0.5, 0.9]))
    assert np.allclose(c, [0.19, 0.35, 0.7, 0.91])
    assert list(itertools.accumulate(np.diff(c) > 0, lambda x, y: x and y))[-1]
