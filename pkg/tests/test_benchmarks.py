import csv

import numpy as np
import pytest

from hetero_esn.benchmarks import (
    ComparisonReport,
    MCResult,
    compare_variants,
    delay_line_model,
    generate_mc_task,
    generate_synthetic_frames,
    memory_capacity,
)
from hetero_esn.config import ExperimentConfig
from hetero_esn.errors import ConfigError


def small_mc_cfg(delays):
    return ExperimentConfig(variant="hetero_shallow", size=60, delays=delays)


class TestMemoryCapacity:
    def test_task_validation(self):
        with pytest.raises(ConfigError):
            generate_mc_task(99, 10)
        with pytest.raises(ConfigError):
            generate_mc_task(100, 0)
        t = generate_mc_task(500, 5, seed=3)
        assert t.inputs.shape == (500,) and np.abs(t.inputs).max() <= 0.8
        np.testing.assert_array_equal(t.inputs, generate_mc_task(500, 5, seed=3).inputs)

    def test_delay_line_recalls_every_lag(self):
        K = 8
        res = memory_capacity(delay_line_model(K), generate_mc_task(2000, K, seed=0))
        assert res.per_lag.min() >= 0.99

    def test_shuffled_targets_are_null(self):
        model = small_mc_cfg((0, 0)).build_reservoir(0, n_in=1)
        res = memory_capacity(model, generate_mc_task(3000, 10, seed=1), shuffle_seed=7)
        assert res.per_lag.max() <= 0.05

    @pytest.mark.parametrize("delays", [(0,), (0, 2, 4), (1, 3, 5)])
    def test_bounded_by_state_size(self, delays):
        model = small_mc_cfg(delays).build_reservoir(0, n_in=1)
        res = memory_capacity(model, generate_mc_task(2000, 40, seed=2))
        assert np.all((res.per_lag >= 0) & (res.per_lag <= 1))
        assert res.total <= 60 * 1.05

    def test_prefix_sums_monotone_in_k(self):
        model = small_mc_cfg((0,)).build_reservoir(1, n_in=1)
        task = generate_mc_task(2000, 20, seed=0)
        res = memory_capacity(model, task)
        totals = [res.window(1, k) for k in range(1, 21)]
        assert all(b >= a for a, b in zip(totals, totals[1:]))

    def test_needs_single_input(self):
        with pytest.raises(ConfigError):
            memory_capacity(small_mc_cfg((0,)).build_reservoir(0, n_in=2), generate_mc_task(200, 5))

    def test_curve_csv(self, tmp_path):
        MCResult(np.array([0.9, 0.5])).write_curve(tmp_path / "c.csv")
        rows = list(csv.reader(open(tmp_path / "c.csv")))
        assert rows[0] == ["lag", "mc"] and rows[1][0] == "1" and float(rows[2][1]) == 0.5


class TestSynthetic:
    def test_frozen_seed_and_balance(self):
        task = generate_synthetic_frames(5, 1000, seed=0)
        again = generate_synthetic_frames(5, 1000, seed=0)
        np.testing.assert_array_equal(task.features, again.features)
        assert task.n_frames == 5000
        np.testing.assert_array_equal(np.bincount(task.labels), [1000] * 5)
        assert task.features.shape[1] == 18

    def test_segments_have_bounded_length(self):
        task = generate_synthetic_frames(3, 400, seed=1)
        for utt in task.utterances:
            change = np.flatnonzero(np.diff(utt.labels)) + 1
            bounds = np.concatenate([[0], change, [utt.n_frames]])
            # adjacent same-class segments merge, so only the lower bound is strict
            assert np.diff(bounds).min() >= 20

    def test_classes_distinguishable(self):
        task = generate_synthetic_frames(5, 1000, seed=0)
        X, y = task.features, task.labels
        means = np.array([X[y == c].mean(axis=0) for c in range(5)])
        dists = np.linalg.norm(means[:, None] - means[None], axis=-1)
        assert dists[~np.eye(5, dtype=bool)].min() > 1.0

    def test_split_frames(self):
        task = generate_synthetic_frames(5, 1000, seed=0)
        train, test = task.split_frames(4000)
        assert sum(u.n_frames for u in train) == 4000
        assert sum(u.n_frames for u in test) == 1000
        with pytest.raises(ConfigError):
            task.split_frames(5000)

    def test_validation(self):
        with pytest.raises(ConfigError):
            generate_synthetic_frames(1, 10)


def test_paired_self_comparison_is_zero():
    cfg = small_mc_cfg((0, 2))
    rep = compare_variants(generate_mc_task(600, 5, seed=0), {"a": cfg, "b": cfg}, n_seeds=3)
    np.testing.assert_array_equal(rep.differences, 0.0)
    assert rep.wins == {"a": 0, "b": 0}
    assert rep.seeds == (0, 1, 2)


def test_report_rows():
    rep = ComparisonReport(("base", "x"), (0, 1), np.array([[1.0, 2.0], [1.5, 1.0]]))
    assert rep.wins == {"base": 0, "x": 1}
    assert rep.means == {"base": 1.5, "x": 1.25}
    rows = rep.rows()
    assert rows[1]["mean_diff"] == repr(-0.25) and rows[1]["seed_1"] == repr(1.0)


def test_compare_on_synthetic_task():
    task = generate_synthetic_frames(3, 200, seed=0)
    cfg = ExperimentConfig(size=30, n_classes=3, context_width=3)
    rep = compare_variants(task, {"s": cfg, "h": cfg.replace(variant="hetero_shallow", delays=(0, 2))},
                           n_seeds=2, n_train=480)
    assert rep.scores.shape == (2, 2) and np.all((rep.scores > 0) & (rep.scores <= 100))


def test_compare_needs_two_variants():
    with pytest.raises(ConfigError):
        compare_variants(generate_mc_task(200, 5), {"a": small_mc_cfg((0,))})
