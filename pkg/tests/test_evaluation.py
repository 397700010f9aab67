import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from sparsevae.data.dataset import BINARY, CONTINUOUS
from sparsevae.data.preprocessing import WindowBatch
from sparsevae.errors import DataError, UsageError
from sparsevae.evaluation.combine import (
    barycentric_certainty,
    barycentric_measure,
    combine_avg,
    combine_max,
    rescale_deviation,
    sweep_combined,
)
from sparsevae.evaluation.metrics import (
    MetricsReport,
    auc_from_points,
    best_report_index,
    confusion_metrics,
    rank_auc,
    select_threshold,
    single_point_report,
    sweep_percentiles,
    truncate2,
)
from sparsevae.evaluation.scoring import deviation_score
from sparsevae.evaluation.stats import friedman_test, two_sample_ttest
from sparsevae.models import VAE, VaeArchitecture
from sparsevae.nn.layers import make_rng


def _percentile_oracle(values, p):
    """Linear interpolation between order statistics, written out by hand."""
    v = sorted(values)
    pos = (len(v) - 1) * p / 100.0
    lo = math.floor(pos)
    hi = min(lo + 1, len(v) - 1)
    return v[lo] + (v[hi] - v[lo]) * (pos - lo)


class TestThreshold:
    def test_examples(self):
        s = [1, 2, 3, 4]
        r = select_threshold(s, 100)
        assert r.threshold == 4 and r.decide(s).sum() == 0
        r = select_threshold(s, 0)
        assert r.threshold == 1 and r.decide(s).tolist() == [0, 1, 1, 1]
        r = select_threshold(np.arange(100), 50)
        assert r.threshold == 49.5
        assert int(np.sum(np.arange(100) < r.threshold)) == 50

    def test_matches_oracle(self, rng):
        v = rng.normal(size=37)
        for p in range(101):
            assert select_threshold(v, p).threshold == pytest.approx(_percentile_oracle(v, p), abs=1e-12)

    def test_errors(self):
        with pytest.raises(UsageError):
            select_threshold([], 50)
        with pytest.raises(UsageError):
            select_threshold([1.0], 101)


class TestConfusion:
    def test_examples(self):
        assert confusion_metrics(5, 0, 5, 0) == {"accuracy": 1.0, "precision": 1.0, "recall": 1.0, "f1": 1.0}
        m = confusion_metrics(1, 1, 7, 1)
        assert (m["precision"], m["recall"], m["f1"], m["accuracy"]) == (0.5, 0.5, 0.5, 0.8)
        m = confusion_metrics(0, 0, 10, 0)
        assert m["precision"] == m["recall"] == m["f1"] == 0.0

    def test_truncate2(self):
        assert truncate2(0.8799) == 0.87
        assert truncate2(0.29) == 0.29
        assert truncate2(1.0) == 1.0


def _brute_sweep(test, truth, val):
    rows = []
    for p in range(101):
        thr = _percentile_oracle(val, p)
        tp = fp = tn = fn = 0
        for s, y in zip(test, truth):
            flag = s > thr
            tp += flag and y
            fp += flag and not y
            tn += (not flag) and (not y)
            fn += (not flag) and y
        rows.append((tp, fp, tn, fn))
    return rows


class TestSweep:
    def test_matches_brute_force(self, rng):
        test, truth, val = rng.normal(size=60), rng.integers(0, 2, 60), rng.normal(size=40)
        rep = sweep_percentiles(test, truth, val)
        for row, (tp, fp, tn, fn) in zip(rep.rows, _brute_sweep(test, truth, val)):
            assert (row["tp"], row["fp"], row["tn"], row["fn"]) == (tp, fp, tn, fn)
            assert tp + fp + tn + fn == 60

    def test_perfect_separation(self, rng):
        truth = np.r_[np.zeros(50, int), np.ones(10, int)]
        normal = rng.uniform(0, 1, 50)
        scores = np.r_[normal, rng.uniform(2, 3, 10)]
        rep = sweep_percentiles(scores, truth, normal)
        assert rep.auc == 1.0 and rep.best_f1 == 1.0

    def test_random_ranker(self):
        r = np.random.default_rng(11)
        rep = sweep_percentiles(r.normal(size=10_000), r.integers(0, 2, 10_000), r.normal(size=1000))
        assert 0.45 <= rep.auc <= 0.55

    def test_single_anomaly(self):
        scores = np.r_[np.arange(9.0), 20.0]
        truth = np.r_[np.zeros(9, int), 1]
        rep = sweep_percentiles(scores, truth, scores)
        assert rep.best_f1 == 1.0
        # brute force: the lowest percentile whose threshold isolates the top score
        isolating = [p for p in range(101) if 8.0 <= _percentile_oracle(scores, p) < 20.0]
        assert rep.selected_percentile == isolating[0]

    def test_tie_break_lowest_percentile(self):
        rep = sweep_percentiles(np.array([0.0, 1.0]), np.array([0, 1]), np.array([0.0, 0.5]))
        f1s = [truncate2(r["f1"]) for r in rep.rows]
        assert rep.selected_percentile == f1s.index(max(f1s))

    def test_degenerate(self, rng):
        rep = sweep_percentiles(rng.normal(size=5), np.zeros(5, int), rng.normal(size=5))
        assert rep.degenerate and rep.auc != rep.auc

    def test_validation_selected_point(self, rng):
        rep = sweep_percentiles(rng.normal(size=20), rng.integers(0, 2, 20), rng.normal(size=20))
        assert rep.validation_selected["percentile"] == 99

    def test_auc_rank_invariant(self, rng):
        test, truth, val = rng.normal(size=80), rng.integers(0, 2, 80), rng.normal(size=50)
        # interpolated thresholds commute with increasing affine maps only
        a = sweep_percentiles(test, truth, val).auc
        b = sweep_percentiles(4.0 * test + 2.0, truth, 4.0 * val + 2.0).auc
        assert a == pytest.approx(b, abs=1e-12)
        assert 0.0 <= a <= 1.0
        assert rank_auc(np.exp(3 * test), truth) == rank_auc(test, truth)

    def test_auc_from_points(self):
        assert auc_from_points([0.5], [0.5]) == pytest.approx(0.5)
        assert auc_from_points([0.0], [1.0]) == 1.0

    def test_rank_auc_pairwise_oracle(self, rng):
        s, y = rng.integers(0, 5, 40).astype(float), rng.integers(0, 2, 40)
        pos, neg = s[y == 1], s[y == 0]
        pairs = [(a > b) + 0.5 * (a == b) for a in pos for b in neg]
        assert rank_auc(s, y) == pytest.approx(np.mean(pairs), abs=1e-14)

    def test_round_trip(self, rng):
        rep = sweep_percentiles(rng.normal(size=10), rng.integers(0, 2, 10), rng.normal(size=10))
        back = MetricsReport.from_dict(rep.to_dict())
        assert back.rows == rep.rows and back.auc == rep.auc and back.selected_index == rep.selected_index

    def test_single_point(self):
        rep = single_point_report(np.array([1, 0, 1, 0]), np.array([1, 0, 0, 0]))
        assert rep.kind == "single" and rep.best_f1 == pytest.approx(2 / 3)
        # one operating point (1/3, 1) joined to the corners
        assert rep.auc == pytest.approx(1 - 1 / 3 / 2)
        scored = single_point_report(np.array([1, 0]), np.array([1, 0]), scores=np.array([0.9, 0.1]))
        assert scored.auc == 1.0

    def test_best_report_index(self):
        mk = lambda f1, auc: MetricsReport(rows=[{"f1": f1}], auc=auc, selected_index=0)
        reps = [mk(0.871, 0.6), mk(0.879, 0.7), None, mk(0.88, 0.5)]
        assert best_report_index(reps) == 3
        assert best_report_index(reps[:2]) == 1  # same 0.87 cut, higher AUC
        assert best_report_index([mk(0.5, 0.5), mk(0.5, 0.5)]) == 0


class TestCombine:
    def test_max_truth_table(self):
        for a, b in itertools.product((0, 1), repeat=2):
            assert combine_max([a], [b])[0] == max(a, b)

    def test_max_recall(self, rng):
        for _ in range(50):
            y = rng.integers(0, 2, 30)
            d1, d2 = rng.integers(0, 2, 30), rng.integers(0, 2, 30)
            rec = lambda d: (d & y).sum() / max(y.sum(), 1)
            assert rec(combine_max(d1, d2)) >= max(rec(d1), rec(d2))

    def test_rescale_examples(self):
        assert rescale_deviation(2.0, 2.0, 0.0, 6.0) == 0.5
        assert rescale_deviation(6.0, 2.0, 0.0, 6.0) == 1.0
        assert rescale_deviation(0.0, 2.0, 0.0, 6.0) == 0.0
        assert rescale_deviation(4.0, 2.0, 0.0, 6.0) == 0.75
        np.testing.assert_array_equal(rescale_deviation([-1.0, 9.0], 2.0, 0.0, 6.0), [0.0, 1.0])
        assert rescale_deviation(3.0, 1.0, 1.0, 1.0) == 0.5

    @given(st.lists(st.floats(-10, 10), min_size=2, max_size=30), st.floats(0, 1))
    @settings(max_examples=60, deadline=None)
    def test_rescale_monotone(self, devs, frac):
        lo, hi = -5.0, 5.0
        thr = lo + frac * (hi - lo)
        d = np.sort(np.asarray(devs))
        out = rescale_deviation(d, thr, lo, hi)
        assert np.all(np.diff(out) >= 0)
        assert rescale_deviation(thr, thr, lo, hi) == 0.5

    def test_avg_examples(self):
        c = combine_avg([0.9], [0.9])
        assert c.combined[0] == pytest.approx(0.9) and c.decisions[0] == 1
        c = combine_avg([0.4], [0.6])
        assert c.combined[0] == 0.5 and c.decisions[0] == 0
        c = combine_avg([0.9], [0.0], [0.9])
        assert c.combined[0] == pytest.approx(0.6) and c.decisions[0] == 1
        with pytest.raises(DataError):
            combine_avg([1.2], [0.5])

    def test_barycentric(self):
        assert barycentric_measure([1 / 3, 1 / 3, 1 / 3]) == pytest.approx(1.0, abs=1e-15)
        assert barycentric_measure([1.0, 0.0, 0.0]) == pytest.approx(0.0, abs=1e-15)
        num = math.sqrt((0.5 - 1 / 3) ** 2 * 2 + (1 / 3) ** 2)
        den = math.sqrt((2 / 3) ** 2 + 2 * (1 / 3) ** 2)
        assert num / den == pytest.approx(0.5, abs=1e-12)
        assert barycentric_measure([0.5, 0.5, 0.0]) == pytest.approx(1 - num / den, abs=1e-12)
        assert barycentric_certainty([0.5, 0.5, 0.0]) == pytest.approx(num / den, abs=1e-12)
        with pytest.raises(DataError):
            barycentric_measure([0.5, 0.6, 0.0])

    def test_barycentric_permutation(self, rng):
        p = rng.dirichlet(np.ones(3), size=20)
        for perm in itertools.permutations(range(3)):
            np.testing.assert_allclose(barycentric_measure(p[:, perm]), barycentric_measure(p), atol=1e-14)

    def test_sweep_combined(self, rng):
        val = rng.uniform(0, 1, 100)
        test = np.r_[rng.uniform(0, 1, 40), rng.uniform(3, 4, 10)]
        truth = np.r_[np.zeros(40, int), np.ones(10, int)]
        pi = np.r_[np.full(40, 0.1), np.full(10, 0.9)]
        for mode in ("avg", "max"):
            rep = sweep_combined(val, test, pi, truth, mode=mode)
            assert rep.best_f1 == 1.0 and len(rep.rows) == 101
        with pytest.raises(ValueError):
            sweep_combined(val, test, pi, truth, mode="min")
        with pytest.raises(ValueError):
            sweep_combined(val, test, pi, truth, bounds="test")

    def test_sweep_combined_max_matches_or(self, rng):
        val, test = rng.normal(size=30), rng.normal(size=25)
        pi, truth = rng.uniform(size=25), rng.integers(0, 2, 25)
        rep = sweep_combined(val, test, pi, truth, mode="max")
        for p in (0, 50, 99):
            d = (test > _percentile_oracle(val, p)) | (pi > 0.5)
            row = rep.rows[p]
            assert row["tp"] == int((d & (truth == 1)).sum())
            assert row["fp"] == int((d & (truth == 0)).sum())


def _friedman_oracle(m):
    """Rank within each column by counting, then the tie-corrected chi-square."""
    k, n = m.shape
    ranks = np.zeros_like(m, dtype=float)
    for j in range(n):
        for i in range(k):
            below = sum(m[r, j] < m[i, j] for r in range(k))
            equal = sum(m[r, j] == m[i, j] for r in range(k))
            ranks[i, j] = below + (equal + 1) / 2.0
    r = ranks.sum(axis=1)
    stat = 12.0 / (n * k * (k + 1)) * (r ** 2).sum() - 3 * n * (k + 1)
    ties = sum(c ** 3 - c for j in range(n) for c in np.unique(m[:, j], return_counts=True)[1])
    return stat / (1 - ties / (n * k * (k * k - 1)))


class TestStats:
    def test_friedman_textbook(self):
        # 3 treatments x 4 blocks
        m = np.array([[9.0, 9.5, 5.0, 7.5], [7.0, 6.5, 7.0, 7.5], [6.0, 8.0, 4.0, 6.0]])
        stat, p = friedman_test(m)
        assert stat == pytest.approx(_friedman_oracle(m), abs=1e-12)
        ref = sps.friedmanchisquare(*m)
        assert stat == pytest.approx(ref.statistic, abs=1e-6)
        assert p == pytest.approx(ref.pvalue, abs=1e-6)

    def test_friedman_identical(self):
        stat, p = friedman_test(np.ones((4, 5)))
        assert stat == 0.0 and p == 1.0

    def test_friedman_dominant(self, rng):
        m = rng.uniform(0, 0.5, size=(5, 7))
        m[2] = 0.9
        stat, p = friedman_test(m)
        assert p < 0.01
        assert stat == pytest.approx(_friedman_oracle(m), abs=1e-9)

    def test_friedman_groups(self):
        with pytest.raises(UsageError):
            friedman_test(np.ones((2, 5)))
        with pytest.raises(UsageError):
            friedman_test(np.ones((3, 1)))

    def test_ttest_matches_scipy(self, rng):
        a, b = rng.normal(size=12), rng.normal(loc=0.5, scale=2.0, size=9)
        t, p = two_sample_ttest(a, b)
        ref = sps.ttest_ind(a, b, equal_var=False)
        assert t == pytest.approx(ref.statistic, abs=1e-6)
        assert p == pytest.approx(ref.pvalue, abs=1e-6)

    def test_ttest_examples(self):
        r = np.random.default_rng(0)
        a = r.normal(size=30)
        assert two_sample_ttest(a, a) == (0.0, 1.0)
        t, p = two_sample_ttest(a, a + 10)
        assert p < 1e-6
        t2, p2 = two_sample_ttest(a + 10, a)
        assert t2 == -t and p2 == p
        assert two_sample_ttest([1.0, 1.0], [1.0, 1.0]) == (0.0, 1.0)
        with pytest.raises(UsageError):
            two_sample_ttest([1.0], [1.0, 2.0])


class TestScoring:
    def test_perfect_err_reconstruction(self):
        from sparsevae.baselines.pca import pca_fit

        x = np.random.default_rng(0).normal(size=(4, 3, 2))
        model = pca_fit(x.reshape(-1, 2), 2)
        s = deviation_score(model, WindowBatch(x, (CONTINUOUS,) * 2, np.zeros(4, int)))
        np.testing.assert_allclose(s.scores, 0.0, atol=1e-24)

    def test_prob_score_identity(self):
        kinds = (CONTINUOUS, CONTINUOUS)
        m = VAE(VaeArchitecture(input_width=2, bottleneck_width=2, lstm_layers=[3], window_size=3),
                kinds, "prob", seed=0)
        m.out_logvar.weights.data[:] = 0.0
        m.out_logvar.bias.data[:] = 0.0
        x = np.random.default_rng(1).normal(size=(3, 3, 2))
        s = deviation_score(m, WindowBatch(x, kinds), n_samples=1, seed=4)
        out = m.forward(x, rng=make_rng(4))
        mse = ((x - out.heads.cont_mean.data) ** 2).mean(axis=(1, 2))
        np.testing.assert_allclose(s.scores, 0.5 * math.log(2 * math.pi) + 0.5 * mse, rtol=1e-12)

    def test_identical_windows(self):
        kinds = (CONTINUOUS, BINARY)
        m = VAE(VaeArchitecture(input_width=2, bottleneck_width=2, lstm_layers=[3], window_size=3),
                kinds, "sl", seed=0)
        w = np.random.default_rng(2).normal(size=(1, 3, 2))
        w[..., 1] = 1.0
        s = deviation_score(m, WindowBatch(np.repeat(w, 3, axis=0), kinds), n_samples=1, seed=0)
        again = deviation_score(m, WindowBatch(np.repeat(w, 3, axis=0), kinds), n_samples=1, seed=0)
        np.testing.assert_array_equal(s.scores, again.scores)
        assert "pi_anomalous" in s.extras

    def test_rejects_unscorable(self):
        with pytest.raises(UsageError):
            deviation_score(object(), WindowBatch(np.zeros((1, 1, 1)), (CONTINUOUS,)))
