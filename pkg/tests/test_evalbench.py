import math

import numpy as np
import pytest
import scipy.stats

from paramnav.envgen import CaConfig, build_env
from paramnav.evalbench import (
    ReportError,
    TrialResult,
    build_report,
    read_trials_csv,
    reg_inc_beta,
    run_trials,
    stratify,
    welch_t_test,
    write_report_csv,
    write_scatter_csv,
    write_trials_csv,
)
from paramnav.metaenv import RewardConfig, constant_policy
from paramnav.planner import ParamBounds, PlannerParams


class TestWelch:
    def test_identical_samples(self):
        t, p = welch_t_test([1, 2, 3, 4, 5], [1, 2, 3, 4, 5])
        assert t == 0.0
        assert p == pytest.approx(1.0)

    def test_textbook_pair_vs_scipy(self):
        a = [1, 2, 3, 4, 5]
        b = [2, 3, 4, 5, 6]
        t, p = welch_t_test(a, b)
        ref = scipy.stats.ttest_ind(a, b, equal_var=False)
        assert t == pytest.approx(ref.statistic, abs=1e-9)
        assert p == pytest.approx(ref.pvalue, abs=1e-9)

    def test_fifty_random_pairs_vs_scipy(self):
        rng = np.random.default_rng(31)
        for k in range(50):
            na, nb = rng.integers(2, 40), rng.integers(2, 40)
            a = rng.normal(rng.uniform(-5, 5), rng.uniform(0.1, 4), na)
            b = rng.normal(rng.uniform(-5, 5), rng.uniform(0.1, 4), nb)
            t, p = welch_t_test(a, b)
            ref = scipy.stats.ttest_ind(a, b, equal_var=False)
            assert t == pytest.approx(ref.statistic, abs=1e-9), k
            assert p == pytest.approx(ref.pvalue, abs=1e-9), k

    def test_clear_separation(self):
        rng = np.random.default_rng(1)
        a = 10 + rng.normal(0, 1e-3, 10)
        b = 20 + rng.normal(0, 1e-3, 10)
        _, p = welch_t_test(a, b)
        assert p < 1e-6

    def test_symmetry(self):
        rng = np.random.default_rng(2)
        a = rng.normal(0, 1, 12)
        b = rng.normal(0.5, 2, 9)
        t1, p1 = welch_t_test(a, b)
        t2, p2 = welch_t_test(b, a)
        assert t1 == pytest.approx(-t2, abs=1e-12)
        assert p1 == pytest.approx(p2, abs=1e-12)

    def test_degenerate_zero_variance(self):
        t, p = welch_t_test([3, 3, 3], [3, 3, 3])
        assert (t, p) == (0.0, 1.0)
        t, p = welch_t_test([3, 3, 3], [4, 4, 4])
        assert math.isinf(t) and p == 0.0

    def test_sample_size_validation(self):
        with pytest.raises(ValueError):
            welch_t_test([1], [1, 2])

    def test_incomplete_beta_against_scipy(self):
        import scipy.special

        rng = np.random.default_rng(3)
        for _ in range(200):
            a = rng.uniform(0.5, 40)
            b = rng.uniform(0.5, 40)
            x = rng.uniform(0, 1)
            assert reg_inc_beta(a, b, x) == pytest.approx(
                scipy.special.betainc(a, b, x), abs=1e-10)


class TestStratify:
    def test_300_envs_partition(self):
        means = {i: float(i) for i in range(300)}
        labels = stratify(means)
        counts = {k: sum(1 for v in labels.values() if v == k)
                  for k in ("easy", "medium", "difficult")}
        assert counts == {"easy": 100, "medium": 100, "difficult": 100}

    def test_nine_envs(self):
        means = {i: float(9 - i) for i in range(9)}
        labels = stratify(means)
        assert sum(1 for v in labels.values() if v == "easy") == 3
        assert sum(1 for v in labels.values() if v == "medium") == 3
        assert sum(1 for v in labels.values() if v == "difficult") == 3
        # fastest envs (highest index here) are easy
        assert labels[8] == "easy" and labels[0] == "difficult"

    def test_ten_envs_floor_rule(self):
        means = {i: float(i) for i in range(10)}
        labels = stratify(means)
        counts = {k: sum(1 for v in labels.values() if v == k)
                  for k in ("easy", "medium", "difficult")}
        assert counts == {"easy": 3, "medium": 4, "difficult": 3}

    def test_invariant_under_rescaling(self):
        rng = np.random.default_rng(4)
        means = {i: float(rng.uniform(5, 50)) for i in range(30)}
        l1 = stratify(means)
        l2 = stratify({i: 3.7 * v for i, v in means.items()})
        assert l1 == l2

    def test_ties_break_by_index(self):
        means = {i: 1.0 for i in range(6)}
        labels = stratify(means)
        assert labels[0] == "easy" and labels[1] == "easy"
        assert labels[4] == "difficult" and labels[5] == "difficult"


def _trial(idx, times, failures=0, method="m"):
    return TrialResult(env_index=idx, method=method, times=list(times),
                       failures=failures, trials=len(times) + failures)


class TestBuildReport:
    def fixture(self):
        # 4-env hand fixture; learned clearly faster on envs 0 and 1,
        # identical on 2, fixed faster on 3
        learned = {
            0: _trial(0, [8.0, 8.1, 7.9, 8.0]),
            1: _trial(1, [10.0, 10.2, 9.8, 10.0]),
            2: _trial(2, [12.0, 12.0, 12.0, 12.0]),
            3: _trial(3, [20.0, 21.0, 19.0, 20.0]),
        }
        fixed = {
            0: _trial(0, [12.0, 12.1, 11.9, 12.0]),
            1: _trial(1, [13.0, 13.2, 12.8, 13.0]),
            2: _trial(2, [12.0, 12.0, 12.0, 12.0]),
            3: _trial(3, [15.0, 15.5, 14.5, 15.0]),
        }
        split = {0: "train", 1: "train", 2: "test", 3: "test"}
        return learned, fixed, split

    def test_spreadsheet_oracle(self):
        learned, fixed, split = self.fixture()
        report = build_report(learned, fixed, split, alpha=0.05)
        agg = report.aggregate["all"]
        # hand-computed means of env means
        assert agg["mean_learned"] == pytest.approx((8.0 + 10.0 + 12.0 + 20.0) / 4)
        assert agg["mean_fixed"] == pytest.approx((12.0 + 13.0 + 12.0 + 15.0) / 4)
        assert agg["improvement"] == pytest.approx(13.0 - 12.5)
        assert agg["improvement_pct"] == pytest.approx(100 * 0.5 / 13.0)
        sig = report.significance["all"]
        assert sig["learned_better"] == 2
        assert sig["fixed_better"] == 1
        assert report.significance["train"]["learned_better"] == 2
        assert report.significance["test"]["fixed_better"] == 1

    def test_improvement_formula_paper_style(self):
        # means 13.24 vs 11.96 -> 1.28 absolute, 9.6% of the baseline
        learned = {0: _trial(0, [11.96, 11.96])}
        fixed = {0: _trial(0, [13.24, 13.24])}
        report = build_report(learned, fixed, {0: "train"})
        agg = report.aggregate["all"]
        assert agg["improvement"] == pytest.approx(1.28, abs=1e-12)
        assert agg["improvement_pct"] == pytest.approx(9.667673716012085)
        assert round(agg["improvement_pct"], 1) == 9.7  # paper rounds to 9.6/9.7

    def test_identical_methods_nothing_significant(self):
        times = {i: [10.0 + 0.1 * k for k in range(5)] for i in range(4)}
        learned = {i: _trial(i, times[i]) for i in range(4)}
        fixed = {i: _trial(i, times[i]) for i in range(4)}
        report = build_report(learned, fixed, {i: "train" for i in range(4)})
        assert report.significance["all"]["learned_better"] == 0
        assert report.significance["all"]["fixed_better"] == 0
        assert report.aggregate["all"]["improvement"] == pytest.approx(0.0)

    def test_never_significant_both_directions(self):
        learned, fixed, split = self.fixture()
        report = build_report(learned, fixed, split)
        for e in report.envs:
            assert not (e.learned_better and e.fixed_better)

    def test_mismatched_env_sets_error(self):
        learned, fixed, split = self.fixture()
        del fixed[3]
        with pytest.raises(ReportError):
            build_report(learned, fixed, split)

    def test_all_failed_env_excluded_with_note(self):
        learned, fixed, split = self.fixture()
        learned[1] = _trial(1, [], failures=4)
        report = build_report(learned, fixed, split)
        assert [idx for idx, _ in report.excluded] == [1]
        assert all(e.env_index != 1 for e in report.envs)

    def test_tercile_counts_cover_all(self):
        learned, fixed, split = self.fixture()
        report = build_report(learned, fixed, split)
        total = sum(report.difficulty[f"{t}_all"]["n"]
                    for t in ("easy", "medium", "difficult"))
        assert total == len(report.envs)


class TestCsvRoundTrips:
    def test_trials_round_trip_and_report_regeneration(self, tmp_path):
        learned = {0: _trial(0, [8.0, 8.25], 1, "learned-policy"),
                   1: _trial(1, [9.5, 9.75], 0, "learned-policy")}
        fixed = {0: _trial(0, [12.0, 12.5], 0, "fixed-params"),
                 1: _trial(1, [13.0, 13.25], 0, "fixed-params")}
        path = tmp_path / "trials.csv"
        write_trials_csv(str(path), {"learned-policy": learned,
                                     "fixed-params": fixed})
        back = read_trials_csv(str(path))
        assert back["learned-policy"][0].times == [8.0, 8.25]
        assert back["learned-policy"][0].failures == 1
        split = {0: "train", 1: "test"}
        r1 = build_report(learned, fixed, split)
        r2 = build_report(back["learned-policy"], back["fixed-params"], split)
        out1, out2 = tmp_path / "r1.csv", tmp_path / "r2.csv"
        write_report_csv(str(out1), r1)
        write_report_csv(str(out2), r2)
        assert out1.read_bytes() == out2.read_bytes()

    def test_scatter_ordered_by_baseline(self, tmp_path):
        learned = {i: _trial(i, [5.0 + i, 5.1 + i]) for i in range(4)}
        fixed = {i: _trial(i, [20.0 - 2 * i, 20.2 - 2 * i]) for i in range(4)}
        report = build_report(learned, fixed, {i: "train" for i in range(4)})
        path = tmp_path / "scatter.csv"
        write_scatter_csv(str(path), report)
        lines = path.read_text().splitlines()[1:]
        base = [float(ln.split(",")[3]) for ln in lines]
        assert base == sorted(base)


class TestRunTrials:
    def test_no_jitter_all_identical(self):
        spec = build_env(5, CaConfig(fill_probability=0.0))
        policy = constant_policy(ParamBounds().midpoint_params())
        r = run_trials(spec, policy, n=4, seed=0, jitter=0.0,
                       reward=RewardConfig(timeout_steps=25))
        assert len(set(r.times)) == 1
        assert r.failures == 0

    def test_jitter_produces_variance_and_shared_poses(self):
        spec = build_env(5, CaConfig(fill_probability=0.1))
        policy = constant_policy(ParamBounds().midpoint_params())
        r1 = run_trials(spec, policy, n=6, seed=3, jitter=0.05,
                        reward=RewardConfig(timeout_steps=25))
        r2 = run_trials(spec, policy, n=6, seed=3, jitter=0.05,
                        reward=RewardConfig(timeout_steps=25))
        assert r1.times == r2.times  # same seeds -> same start poses
        assert len(set(r1.times)) > 1  # jitter creates trial variance

    def test_timeouts_counted_as_failures(self):
        spec = build_env(5, CaConfig(fill_probability=0.0))
        slow = constant_policy(PlannerParams(max_vel_x=0.2))
        r = run_trials(spec, slow, n=3, seed=0, jitter=0.0,
                       reward=RewardConfig(timeout_steps=2))
        assert r.failures == 3
        assert r.all_failed
        assert math.isinf(r.mean_time())

    def test_default_trial_count_is_20(self):
        import inspect

        sig = inspect.signature(run_trials)
        assert sig.parameters["n"].default == 20

    def test_coefficient_of_variation_small_on_open_env(self):
        spec = build_env(6, CaConfig(fill_probability=0.0))
        policy = constant_policy(ParamBounds().midpoint_params())
        r = run_trials(spec, policy, n=10, seed=1, jitter=0.05,
                       reward=RewardConfig(timeout_steps=30))
        times = np.array(r.times)
        assert times.std() / times.mean() < 0.10
