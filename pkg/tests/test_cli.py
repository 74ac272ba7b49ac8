import json
import os

import pytest

from paramnav.cli import main
from paramnav.config import Config, ConfigError, parse_params_file
from paramnav.envgen import load_suite


class TestConfig:
    def test_defaults_complete_and_typed(self):
        cfg = Config()
        assert cfg["reward.c_c"] == 0.05
        assert cfg["td3.hidden_sizes"] == (512, 512, 512)
        assert cfg["train.mode"] == "async"

    def test_parse_overrides_and_comments(self):
        cfg = Config.parse(
            "# comment line\n"
            "reward.c_c = 0.1   # inline comment\n"
            "td3.batch_size = 64\n"
            "reward.use_y_axis_progress = false\n"
            "td3.hidden_sizes = 32,32\n")
        assert cfg["reward.c_c"] == 0.1
        assert cfg["td3.batch_size"] == 64
        assert cfg["reward.use_y_axis_progress"] is False
        assert cfg.td3_config().hidden_sizes == (32, 32)

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            Config.parse("dwa.warp_speed = 11\n")

    def test_bad_value_rejected(self):
        with pytest.raises(ConfigError):
            Config.parse("td3.batch_size = many\n")
        with pytest.raises(ConfigError):
            Config.parse("reward.use_y_axis_progress = maybe\n")

    def test_text_round_trip(self):
        cfg = Config.parse("reward.c_c = 0.125\ntrain.workers = 2\n")
        again = Config.parse(cfg.to_text())
        assert again.values == cfg.values

    def test_typed_views_reflect_overrides(self):
        cfg = Config.parse("sim.footprint_radius = 0.25\n"
                           "dwa.max_vel_x_hi = 1.5\n")
        assert cfg.robot_spec().footprint_radius == 0.25
        assert cfg.bounds().max_vel_x == (0.2, 1.5)

    def test_params_file(self, tmp_path):
        p = tmp_path / "params.txt"
        p.write_text("max_vel_x = 0.9\nvx_samples = 6\n# rest default\n")
        params = parse_params_file(str(p))
        assert params.max_vel_x == 0.9
        assert params.vx_samples == 6
        bad = tmp_path / "bad.txt"
        bad.write_text("warp = 1\n")
        with pytest.raises(ConfigError):
            parse_params_file(str(bad))


class TestCliDispatch:
    def test_no_arguments_usage_exit_1(self, capsys):
        assert main([]) == 1
        assert "usage" in capsys.readouterr().err.lower()

    def test_unknown_subcommand_exit_1(self, capsys):
        assert main(["warp-drive"]) == 1

    def test_missing_required_flag_named(self, capsys):
        code = main(["evaluate", "--suite", "x", "--out", "y"])
        assert code == 1
        assert "--checkpoint" in capsys.readouterr().err

    def test_help_exits_zero(self):
        assert main(["--help"]) == 0


@pytest.fixture(scope="module")
def small_suite(tmp_path_factory):
    out = str(tmp_path_factory.mktemp("suite"))
    code = main(["gen-envs", "--seed", "7", "--n", "6", "--out", out])
    assert code == 0
    return out


class TestGenEnvs:
    def test_layout_and_split(self, small_suite, capsys):
        suite = load_suite(small_suite)
        assert len(suite.train_indices) == 5
        assert len(suite.test_indices) == 1
        assert os.path.exists(os.path.join(small_suite, "config.txt"))
        assert os.path.exists(os.path.join(small_suite, "seed.txt"))

    def test_deterministic_across_runs(self, small_suite, tmp_path):
        out2 = str(tmp_path / "again")
        assert main(["gen-envs", "--seed", "7", "--n", "6", "--out", out2]) == 0
        with open(os.path.join(small_suite, "suite.json")) as f:
            h1 = json.load(f)["hash"]
        with open(os.path.join(out2, "suite.json")) as f:
            h2 = json.load(f)["hash"]
        assert h1 == h2


class TestPlanOnce:
    def test_prints_json_decision(self, small_suite, capsys, tmp_path):
        suite = load_suite(small_suite)
        env = suite.envs[0]
        grid_path = str(tmp_path / "g.grid")
        env.grid.save(grid_path)
        code = main(["plan-once", "--grid", grid_path,
                     "--pose", f"{env.start.x},{env.start.y},{env.start.heading}",
                     "--goal", f"{env.goal[0]},{env.goal[1]}"])
        assert code == 0
        out = capsys.readouterr().out.strip()
        decision = json.loads(out)
        assert set(decision) == {"linear", "angular", "feasible",
                                 "candidate_count", "best_cost"}
        assert decision["feasible"] is True

    def test_unreachable_goal_runtime_error(self, small_suite, capsys, tmp_path):
        suite = load_suite(small_suite)
        env = suite.envs[0]
        grid_path = str(tmp_path / "g.grid")
        env.grid.save(grid_path)
        # goal inside the border wall: no path
        code = main(["plan-once", "--grid", grid_path,
                     "--pose", f"{env.start.x},{env.start.y},0",
                     "--goal", "0.01,0.01"])
        assert code == 2


class TestTrainEvalReplay:
    def test_end_to_end_small(self, small_suite, tmp_path, capsys):
        run_dir = str(tmp_path / "run")
        cfg_path = str(tmp_path / "cfg.txt")
        with open(cfg_path, "w") as f:
            f.write("td3.hidden_sizes = 16,16\n"
                    "td3.batch_size = 8\n"
                    "td3.warmup_steps = 10\n"
                    "td3.buffer_capacity = 2048\n"
                    "reward.timeout_steps = 8\n"
                    "train.total_env_steps = 40\n"
                    "train.mode = sync\n"
                    "train.workers = 1\n")
        code = main(["train", "--suite", small_suite, "--out", run_dir,
                     "--config", cfg_path, "--seed", "3"])
        assert code == 0
        assert os.path.exists(os.path.join(run_dir, "metrics.csv"))
        assert os.path.exists(os.path.join(run_dir, "config.txt"))
        ckpt = os.path.join(run_dir, "checkpoint_final.npz")
        assert os.path.exists(ckpt)

        eval_dir = str(tmp_path / "eval")
        code = main(["evaluate", "--suite", small_suite, "--checkpoint", ckpt,
                     "--out", eval_dir, "--config", cfg_path,
                     "--trials", "2", "--jitter", "0.0", "--split", "test"])
        assert code == 0
        for name in ("trials.csv", "report.csv", "scatter.csv", "config.txt"):
            assert os.path.exists(os.path.join(eval_dir, name)), name
        assert os.path.isdir(os.path.join(eval_dir, "profiles"))

        # replay the first profile onto its grid
        suite = load_suite(small_suite)
        test_idx = suite.test_indices[0]
        profile = os.path.join(eval_dir, "profiles", f"{test_idx:03d}.csv")
        assert os.path.exists(profile)
        grid_path = str(tmp_path / "replay.grid")
        suite.envs[test_idx].grid.save(grid_path)
        out_map = str(tmp_path / "replay.txt")
        code = main(["replay", "--grid", grid_path, "--trajectory", profile,
                     "--out", out_map])
        assert code == 0
        text = open(out_map).read()
        assert text.splitlines()[0].startswith("#")
        assert "S" in text or "E" in text
