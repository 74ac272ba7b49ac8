"""Benchmark harness: per-environment trials, Welch t-tests, difficulty
terciles, and the comparison report with its CSV outputs.

Trial randomness is a small uniform start-pose jitter (the simulator is
otherwise deterministic); jitter seeds derive from (seed, env, trial) only,
so both methods see identical start poses.  Timed-out trials count as
failures and are excluded from means.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from .envgen import EnvSpec
from .metaenv import (
    MetaEnv,
    NavConfig,
    RewardConfig,
    run_deployment,
    write_trajectory_csv,
)
from .planner import ParamBounds
from .world import Pose2D, RobotSpec, check_collision


# ---------------------------------------------------------------------------
# Welch's t-test (self-contained; scipy appears only in tests as the oracle)
# ---------------------------------------------------------------------------

def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the regularized incomplete beta (Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 400):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-15:
            return h
    raise RuntimeError("incomplete beta continued fraction did not converge")


def reg_inc_beta(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b), accurate to ~1e-13."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_sf_two_sided(t: float, df: float) -> float:
    """Two-sided tail probability of Student's t via the incomplete beta."""
    if df <= 0:
        raise ValueError("df must be positive")
    if math.isinf(t):
        return 0.0
    x = df / (df + t * t)
    return reg_inc_beta(df / 2.0, 0.5, x)


def welch_t_test(a, b) -> tuple[float, float]:
    """Welch's unequal-variance t statistic and two-sided p-value.

    Degrees of freedom via Welch-Satterthwaite.  When both samples have
    zero variance: p = 1 if the means agree (no evidence either way),
    otherwise t = +-inf with p = 0.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if len(a) < 2 or len(b) < 2:
        raise ValueError("each sample needs at least 2 observations")
    ma, mb = float(np.mean(a)), float(np.mean(b))
    va, vb = float(np.var(a, ddof=1)), float(np.var(b, ddof=1))
    na, nb = len(a), len(b)
    se2 = va / na + vb / nb
    if se2 == 0.0:
        if ma == mb:
            return 0.0, 1.0
        return math.copysign(math.inf, ma - mb), 0.0
    t = (ma - mb) / math.sqrt(se2)
    df = se2 ** 2 / ((va / na) ** 2 / (na - 1) + (vb / nb) ** 2 / (nb - 1))
    return t, t_sf_two_sided(t, df)


# ---------------------------------------------------------------------------
# trials
# ---------------------------------------------------------------------------

@dataclass
class TrialResult:
    env_index: int
    method: str
    times: list  # successful traversal times, seconds
    failures: int
    trials: int

    def mean_time(self) -> float:
        if not self.times:
            return math.inf
        return float(np.mean(self.times))

    @property
    def all_failed(self) -> bool:
        return len(self.times) == 0


def _jittered_start(spec: EnvSpec, robot: RobotSpec, rng,
                    jitter: float) -> Pose2D:
    if jitter <= 0.0:
        return spec.start
    for _ in range(20):
        dx, dy = rng.uniform(-jitter, jitter, size=2)
        pose = Pose2D(spec.start.x + dx, spec.start.y + dy, spec.start.heading)
        if not check_collision(spec.grid, pose, robot):
            return pose
    return spec.start


def run_trials(spec: EnvSpec, policy, n: int = 20, seed: int = 0,
               jitter: float = 0.05, method: str = "",
               robot: RobotSpec = RobotSpec(),
               reward: RewardConfig = RewardConfig(),
               nav: NavConfig = NavConfig(),
               bounds: ParamBounds = ParamBounds(),
               profile_path: str | None = None) -> TrialResult:
    """n jittered deployments of one policy on one environment.

    Jitter streams depend only on (seed, env index, trial), so different
    methods replay identical start poses.  Timeouts are recorded as
    failures and excluded from the mean.
    """
    times = []
    failures = 0
    for trial in range(n):
        rng = np.random.default_rng(
            (seed, spec.index, trial))  # order-independent trial stream
        start = _jittered_start(spec, robot, rng, jitter)
        env = MetaEnv(spec, robot, reward, nav, bounds, start_pose=start)
        result = run_deployment(env, policy)
        if result.reached:
            times.append(result.traversal_time)
        else:
            failures += 1
        if profile_path is not None and trial == 0:
            write_trajectory_csv(profile_path, result.rows)
    return TrialResult(env_index=spec.index, method=method, times=times,
                       failures=failures, trials=n)


# ---------------------------------------------------------------------------
# stratification and report
# ---------------------------------------------------------------------------

def stratify(baseline_means: dict) -> dict:
    """Tercile labels from baseline mean times: fastest third Easy, slowest
    third Difficult, the rest Medium (floor rule on the outer terciles,
    ties broken by env index)."""
    order = sorted(baseline_means, key=lambda i: (baseline_means[i], i))
    n = len(order)
    k = n // 3
    labels = {}
    for pos, idx in enumerate(order):
        if pos < k:
            labels[idx] = "easy"
        elif pos >= n - k:
            labels[idx] = "difficult"
        else:
            labels[idx] = "medium"
    return labels


@dataclass
class EnvComparison:
    env_index: int
    split: str
    tercile: str
    mean_fixed: float
    mean_learned: float
    t: float
    p: float
    learned_better: bool
    fixed_better: bool


@dataclass
class ComparisonReport:
    envs: list
    aggregate: dict
    significance: dict
    difficulty: dict
    excluded: list
    alpha: float
    notes: list = field(default_factory=list)


class ReportError(ValueError):
    pass


def build_report(learned: dict, fixed: dict, split_map: dict,
                 alpha: float = 0.05) -> ComparisonReport:
    """Compare per-env trials of the learned policy against the fixed
    baseline: per-env Welch tests, aggregate means and improvement,
    significance counts, and tercile breakdowns.

    ``learned``/``fixed`` map env index -> TrialResult on identical env
    sets; ``split_map`` maps env index -> "train" | "test".
    """
    if set(learned) != set(fixed):
        raise ReportError("learned and fixed results cover different env sets")
    excluded = []
    usable = []
    for idx in sorted(learned):
        if learned[idx].all_failed or fixed[idx].all_failed:
            excluded.append((idx, "all trials failed for at least one method"))
        else:
            usable.append(idx)

    baseline_means = {i: fixed[i].mean_time() for i in usable}
    terciles = stratify(baseline_means)

    envs = []
    for idx in usable:
        lt, ft = learned[idx].times, fixed[idx].times
        if len(lt) >= 2 and len(ft) >= 2:
            t, p = welch_t_test(lt, ft)
        else:  # too few successes for a test; never significant
            t, p = 0.0, 1.0
        ml, mf = learned[idx].mean_time(), fixed[idx].mean_time()
        envs.append(EnvComparison(
            env_index=idx, split=split_map.get(idx, "train"),
            tercile=terciles[idx], mean_fixed=mf, mean_learned=ml, t=t, p=p,
            learned_better=bool(p < alpha and ml < mf),
            fixed_better=bool(p < alpha and mf < ml)))

    def agg(split=None):
        rows = [e for e in envs if split is None or e.split == split]
        if not rows:
            return {"n": 0}
        mf = float(np.mean([e.mean_fixed for e in rows]))
        ml = float(np.mean([e.mean_learned for e in rows]))
        impr = mf - ml
        return {"n": len(rows), "mean_fixed": mf, "mean_learned": ml,
                "improvement": impr,
                "improvement_pct": (100.0 * impr / mf) if mf > 0 else 0.0}

    aggregate = {"all": agg(), "train": agg("train"), "test": agg("test")}

    def counts(rows):
        return {"n": len(rows),
                "learned_better": sum(e.learned_better for e in rows),
                "fixed_better": sum(e.fixed_better for e in rows)}

    significance = {"all": counts(envs),
                    "train": counts([e for e in envs if e.split == "train"]),
                    "test": counts([e for e in envs if e.split == "test"])}
    difficulty = {}
    for terc in ("easy", "medium", "difficult"):
        for split in ("all", "train", "test"):
            rows = [e for e in envs if e.tercile == terc
                    and (split == "all" or e.split == split)]
            difficulty[f"{terc}_{split}"] = counts(rows)

    return ComparisonReport(envs=envs, aggregate=aggregate,
                            significance=significance, difficulty=difficulty,
                            excluded=excluded, alpha=alpha)


# ---------------------------------------------------------------------------
# CSV I/O
# ---------------------------------------------------------------------------

def write_trials_csv(path: str, by_method: dict) -> None:
    """``by_method`` maps a method tag to {env index -> TrialResult}."""
    with open(path, "w") as f:
        f.write("env_index,method,trial,time_s,failed\n")
        for method in sorted(by_method):
            results = by_method[method]
            for idx in sorted(results):
                r = results[idx]
                trial = 0
                for t in r.times:
                    f.write(f"{idx},{method},{trial},{t!r},0\n")
                    trial += 1
                for _ in range(r.failures):
                    f.write(f"{idx},{method},{trial},inf,1\n")
                    trial += 1


def read_trials_csv(path: str) -> dict:
    out: dict = {}
    with open(path) as f:
        header = f.readline().strip()
        if header != "env_index,method,trial,time_s,failed":
            raise ValueError("unrecognized trials header")
        for line in f:
            idx_s, method, _trial, time_s, failed = line.strip().split(",")
            idx = int(idx_s)
            per = out.setdefault(method, {})
            r = per.setdefault(idx, TrialResult(env_index=idx, method=method,
                                                times=[], failures=0, trials=0))
            r.trials += 1
            if failed == "1":
                r.failures += 1
            else:
                r.times.append(float(time_s))
    return out


def write_report_csv(path: str, report: ComparisonReport) -> None:
    with open(path, "w") as f:
        f.write("row_type,key,split,tercile,n,mean_fixed,mean_learned,"
                "t,p,learned_better,fixed_better,improvement,improvement_pct\n")
        for e in report.envs:
            f.write(f"env,{e.env_index},{e.split},{e.tercile},,"
                    f"{e.mean_fixed!r},{e.mean_learned!r},{e.t!r},{e.p!r},"
                    f"{int(e.learned_better)},{int(e.fixed_better)},,\n")
        for split, a in report.aggregate.items():
            if a["n"] == 0:
                continue
            f.write(f"aggregate,,{split},,{a['n']},{a['mean_fixed']!r},"
                    f"{a['mean_learned']!r},,,,,"
                    f"{a['improvement']!r},{a['improvement_pct']!r}\n")
        for split, c in report.significance.items():
            f.write(f"significance,,{split},,{c['n']},,,,,"
                    f"{c['learned_better']},{c['fixed_better']},,\n")
        for key, c in report.difficulty.items():
            terc, split = key.rsplit("_", 1)
            f.write(f"difficulty,,{split},{terc},{c['n']},,,,,"
                    f"{c['learned_better']},{c['fixed_better']},,\n")
        for idx, why in report.excluded:
            f.write(f"excluded,{idx},,,,,,,,,,,\n")


def write_scatter_csv(path: str, report: ComparisonReport) -> None:
    """Per-env rows ordered by baseline time (difficulty order)."""
    rows = sorted(report.envs, key=lambda e: (e.mean_fixed, e.env_index))
    with open(path, "w") as f:
        f.write("order,env_index,split,mean_fixed,mean_learned\n")
        for k, e in enumerate(rows):
            f.write(f"{k},{e.env_index},{e.split},"
                    f"{e.mean_fixed!r},{e.mean_learned!r}\n")


def evaluate_suite(envs_by_index: dict, split_map: dict, learned_policy,
                   fixed_policy, out_dir: str, n_trials: int = 20,
                   seed: int = 0, jitter: float = 0.05, alpha: float = 0.05,
                   robot: RobotSpec = RobotSpec(),
                   reward: RewardConfig = RewardConfig(),
                   nav: NavConfig = NavConfig(),
                   bounds: ParamBounds = ParamBounds()) -> ComparisonReport:
    """Full evaluation: trials for both methods on every env, then the
    report and its CSV outputs under ``out_dir``."""
    os.makedirs(out_dir, exist_ok=True)
    profiles_dir = os.path.join(out_dir, "profiles")
    os.makedirs(profiles_dir, exist_ok=True)
    learned, fixed = {}, {}
    for idx in sorted(envs_by_index):
        spec = envs_by_index[idx]
        learned[idx] = run_trials(
            spec, learned_policy, n_trials, seed, jitter, "learned-policy",
            robot, reward, nav, bounds,
            profile_path=os.path.join(profiles_dir, f"{idx:03d}.csv"))
        fixed[idx] = run_trials(
            spec, fixed_policy, n_trials, seed, jitter, "fixed-params",
            robot, reward, nav, bounds)
    write_trials_csv(os.path.join(out_dir, "trials.csv"),
                     {"learned-policy": learned, "fixed-params": fixed})
    report = build_report(learned, fixed, split_map, alpha)
    write_report_csv(os.path.join(out_dir, "report.csv"), report)
    write_scatter_csv(os.path.join(out_dir, "scatter.csv"), report)
    return report
