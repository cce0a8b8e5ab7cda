import json

import pytest
import yaml

from src import main as cli
from src.errors import (EXIT_CONFIG, EXIT_GRADCHECK, EXIT_MISSING_CHECKPOINT, EXIT_NO_HOLDOUT,
                        EXIT_OK, ConfigError)
from src.utils.config import RunConfig, config_from_dict, load_config, save_config
from src.utils.run_dir import RunDirectory

TINY_CONFIG = {
    "seed": 3,
    "data": {
        "n_classes": 4, "latent_dim": 6, "n_parts": 4, "train_per_class": 20, "val_per_class": 6,
        "anchor": "natural",
        "modalities": [
            {"name": "natural", "rendered_dim": 12, "distractor_dims": 2, "nonlinearity": "tanh"},
            {"name": "sketch", "rendered_dim": 12, "distractor_dims": 2, "nonlinearity": "relu"},
            {"name": "text", "rendered_dim": 8, "distractor_dims": 2, "nonlinearity": "sign",
             "noise_std": 0.2},
        ],
    },
    "arch": {"shared_dim": 8, "hidden_dim": 8, "encoder_width": 10},
    "train": {"total_iters": 20, "freeze_iters": 10, "batch_size": 16, "anchor_iters": 100,
              "log_every": 5},
    "reg": {"K": 2, "max_samples": 200},
    "eval": {"n_queries": 50, "export_cap": 10, "purity_k": 5, "chance_trials": 3,
             "n_permutations": 3, "gradcheck_seeds": 1},
}


@pytest.fixture(autouse=True)
def keep_test_logging(monkeypatch):
    """fileConfig would replace the handlers pytest installs"""
    monkeypatch.setattr(cli, "setup_logging", lambda **kwargs: None)


@pytest.fixture
def tiny_config_path(tmp_path):
    path = tmp_path / "tiny.yml"
    path.write_text(yaml.safe_dump(TINY_CONFIG), encoding="utf-8")
    return path


def test_default_file_matches_dataclass_defaults(no_thread_env):
    """config/config.yml spells out every default"""
    assert load_config() == RunConfig()


def test_env_selects_config(monkeypatch, tiny_config_path):
    monkeypatch.setenv("XMODAL_CONFIG", str(tiny_config_path))
    assert load_config().data.n_classes == 4


class TestConfigValidation:
    def test_unknown_section(self):
        with pytest.raises(ConfigError, match="unknown sections"):
            config_from_dict({"optimizer": {}})

    def test_unknown_key(self):
        with pytest.raises(ConfigError) as excinfo:
            config_from_dict({"reg": {"lambda_pool": 1.0}})
        assert excinfo.value.key == "reg"
        assert excinfo.value.exit_code == EXIT_CONFIG

    def test_wrong_types(self):
        with pytest.raises(ConfigError):
            config_from_dict({"train": {"total_iters": "many"}})
        with pytest.raises(ConfigError):
            config_from_dict({"train": {"replay_anchor": 1}})
        with pytest.raises(ConfigError):
            config_from_dict({"seed": -1})

    def test_exponent_strings_are_numbers(self):
        config = config_from_dict({"train": {"lr": "1e-3"}})
        assert config.train.lr == pytest.approx(1e-3)

    def test_holdout_fraction_range(self):
        with pytest.raises(ConfigError, match="holdout_frac"):
            config_from_dict({"zeroshot": {"holdout_frac": 1.0}})

    def test_acceptance_section(self, no_thread_env):
        assert load_config().acceptance.seeds == 5
        with pytest.raises(ConfigError) as excinfo:
            config_from_dict({"acceptance": {"seeds": 0}})
        assert excinfo.value.key == "acceptance.seeds"
        with pytest.raises(ConfigError, match="holdout_frac"):
            config_from_dict({"acceptance": {"holdout_frac": 0.0}})

    def test_partial_sections_keep_defaults(self):
        config = config_from_dict({"reg": {"K": 3}})
        assert config.reg.K == 3
        assert config.reg.variance_floor == RunConfig().reg.variance_floor
        assert config.reg.em_config().n_components == 3


class TestSaveAndFingerprint:
    def test_round_trip(self, tmp_path):
        config = config_from_dict(TINY_CONFIG)
        save_config(config, tmp_path / "run" / "config.yml")
        assert load_config(tmp_path / "run" / "config.yml") == config

    def test_fingerprint_tracks_selected_sections(self):
        config = RunConfig()
        data_only = config.fingerprint(["data"])
        train_print = config.fingerprint(["train"])
        config.train.lr = 0.01
        assert config.fingerprint(["data"]) == data_only
        assert config.fingerprint(["train"]) != train_print
        assert config.fingerprint(["data"], extra={"kind": "gmm"}) != data_only


class TestRunDirectory:
    def test_stage_bookkeeping(self, tmp_path):
        run = RunDirectory(tmp_path / "run").ensure()
        assert not run.is_complete("data", "abc")
        run.mark_complete("data", "abc")
        run.mark_complete("densities/gmm", "def")

        reopened = RunDirectory(tmp_path / "run")
        assert reopened.is_complete("data", "abc")
        assert not reopened.is_complete("data", "xyz")
        assert not reopened.is_complete("data", "abc", [run.dataset_path])

        reopened.invalidate("densities/")
        assert "densities/gmm" not in RunDirectory(tmp_path / "run").stages
        assert reopened.is_complete("data", "abc")

    def test_unreadable_state_is_ignored(self, tmp_path):
        (tmp_path / "state.json").write_text("{not json", encoding="utf-8")
        assert RunDirectory(tmp_path).stages == {}

    def test_trained_strategies(self, tmp_path):
        run = RunDirectory(tmp_path).ensure()
        run.checkpoint_path("b_gmm").write_bytes(b"")
        run.checkpoint_path("a_tune_free").write_bytes(b"")
        assert run.trained_strategies() == ["a_tune_free", "b_gmm"]


class TestCli:
    def test_gradcheck_passes(self, no_thread_env, capsys):
        assert cli.main(["gradcheck", "--seeds", "1"]) == EXIT_OK
        assert "PASS" in capsys.readouterr().out

    def test_gradcheck_detects_corruption(self, no_thread_env):
        assert cli.main(["gradcheck", "--seeds", "1", "--corrupt", "1e-3"]) == EXIT_GRADCHECK

    def test_bad_config(self, tmp_path):
        path = tmp_path / "bad.yml"
        path.write_text("reg:\n  bogus: 1\n", encoding="utf-8")
        code = cli.main(["gen-data", "--run-dir", str(tmp_path / "run"), "--config", str(path)])
        assert code == EXIT_CONFIG

    def test_missing_checkpoint_and_holdout(self, tmp_path, tiny_config_path):
        run_dir = str(tmp_path / "run")
        assert cli.main(["gen-data", "--run-dir", run_dir, "--config", str(tiny_config_path)]) == EXIT_OK
        assert cli.main(["eval", "--run-dir", run_dir]) == EXIT_MISSING_CHECKPOINT
        assert cli.main(["zeroshot", "--run-dir", run_dir]) == EXIT_NO_HOLDOUT

    def test_gen_data_is_reused(self, tmp_path, tiny_config_path, capsys):
        run_dir = tmp_path / "run"
        args = ["gen-data", "--run-dir", str(run_dir), "--config", str(tiny_config_path)]
        assert cli.main(args) == EXIT_OK
        first = (run_dir / "dataset.xmds").read_bytes()
        assert cli.main(args) == EXIT_OK
        assert (run_dir / "dataset.xmds").read_bytes() == first
        assert load_config(run_dir / "config.yml").seed == 3
        assert "val examples per modality and class" in capsys.readouterr().out

    @pytest.mark.slow
    def test_pipeline(self, tmp_path, tiny_config_path, capsys):
        run_dir = tmp_path / "run"
        run = str(run_dir)
        assert cli.main(["gen-data", "--run-dir", run, "--config", str(tiny_config_path),
                         "--holdout-frac", "0.5"]) == EXIT_OK
        for strategy in ("b_gmm", "bl_shared_scratch"):
            assert cli.main(["train", "--run-dir", run, "--strategy", strategy]) == EXIT_OK
        state = json.loads((run_dir / "state.json").read_text())["stages"]
        assert {"data", "anchor", "densities/gmm", "train/b_gmm"} <= set(state)

        log_lines = (run_dir / "logs" / "train_b_gmm.jsonl").read_text().splitlines()
        assert json.loads(log_lines[0])["iteration"] == 0

        assert cli.main(["eval", "--run-dir", run]) == EXIT_OK
        report = json.loads((run_dir / "reports" / "retrieval_b_gmm_fc7.json").read_text())
        assert len(report["pairs"]) == 6
        assert set(report["layers"]) == {"shared_in", "fc6", "fc7"}

        assert cli.main(["zeroshot", "--run-dir", run]) == EXIT_OK
        zeroshot = json.loads((run_dir / "reports" / "zeroshot_bl_placesnet.json").read_text())
        assert set(zeroshot["accuracy"]) == {"sketch", "text"}
        assert len(zeroshot["held_out"]) == 2

        assert cli.main(["units", "--run-dir", run, "--strategy", "b_gmm"]) == EXIT_OK
        units = json.loads((run_dir / "reports" / "units_b_gmm_shared_in.json").read_text())
        assert set(units["rates"]) == {"majority", "anchor_support m>=1", "anchor_support m>=2"}

        assert cli.main(["export", "--run-dir", run, "--strategy", "b_gmm"]) == EXIT_OK
        assert (run_dir / "reports" / "embeddings_b_gmm_fc7.csv").exists()

        capsys.readouterr()
        assert cli.main(["compare", "--run-dir", run, "--run-dir", run]) == EXIT_OK
        out = capsys.readouterr().out
        assert "b_gmm: retrieval at fc7" in out
        assert "bl_placesnet: zero-shot" in out
