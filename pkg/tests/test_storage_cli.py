import hashlib
import json

import numpy as np
import pytest
import yaml

from laserfail import cli
from laserfail.baselines import knn_fit, logreg_fit, rf_fit
from laserfail.config import DEFAULT_SEED, RunConfig, derive_seed, from_mapping, load_config
from laserfail.degradation import ConfigError, GenerationConfig, generate_dataset
from laserfail.neural import LstmNetwork, NetworkConfig
from laserfail.pipeline import PartialFailureSpec, prepare
from laserfail.storage import (
    CheckpointVersionError,
    DatasetFormatError,
    load_checkpoint,
    read_dataset,
    read_splits,
    save_checkpoint,
    write_dataset,
    write_splits,
)

FAST = {
    "generation": {"samples_per_mode": 6},
    "network": {"hidden_dim": 4},
    "training": {"epochs": 2, "batch_size": 8},
    "baselines": {"rf_trees": 3, "logreg_max_iter": 200},
}


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture
def fast_config(tmp_path):
    path = tmp_path / "fast.yaml"
    path.write_text(yaml.safe_dump(FAST))
    return path


def run(*argv):
    return cli.run([str(a) for a in argv])


class TestSeeds:
    def test_derivation_is_stable(self):
        digest = hashlib.sha256(b"20200712:generation").digest()
        assert derive_seed(DEFAULT_SEED, "generation") == int.from_bytes(digest[:8], "little")

    def test_purposes_differ(self):
        cfg = RunConfig()
        seeds = {cfg.sub_seed(p) for p in ("generation", "split", "mutation", "init", "shuffle")}
        assert len(seeds) == 5

    def test_seeded_injects(self):
        cfg = RunConfig(seed=3).seeded()
        assert cfg.generation.rng_seed == derive_seed(3, "generation")
        assert cfg.training.init_seed == derive_seed(3, "init")
        assert cfg.partial_failure.rng_seed == derive_seed(3, "mutation")


class TestConfig:
    def test_defaults(self):
        cfg = load_config(None)
        assert cfg.generation.samples_per_mode == 1500 and cfg.split_fractions == (0.6, 0.2, 0.2)

    def test_yaml(self, fast_config):
        cfg = load_config(fast_config)
        assert cfg.network.hidden_dim == 4 and cfg.baselines.rf_trees == 3

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown"):
            from_mapping({"network": {"hiden_dim": 3}})
        with pytest.raises(ConfigError, match="unknown"):
            from_mapping({"netwrok": {}})

    def test_bad_values(self):
        with pytest.raises(ConfigError):
            from_mapping({"split_fractions": [0.5, 0.5, 0.5]})
        with pytest.raises(ConfigError):
            from_mapping({"seed": -1})
        with pytest.raises(ConfigError):
            from_mapping({"generation": {"samples_per_mode": 0}})

    def test_not_a_mapping(self, tmp_path):
        p = tmp_path / "c.yaml"
        p.write_text("- 1\n- 2\n")
        with pytest.raises(ConfigError):
            load_config(p)

    def test_round_trip(self):
        cfg = from_mapping(FAST)
        assert from_mapping({k: v for k, v in cfg.to_dict().items()}).to_dict() == cfg.to_dict()


class TestStorage:
    def test_dataset_round_trip(self, tmp_path):
        cfg = GenerationConfig(samples_per_mode=3)
        samples = generate_dataset(cfg)
        write_dataset(samples, cfg, tmp_path)
        back, back_cfg = read_dataset(tmp_path)
        assert back_cfg.to_dict() == cfg.to_dict()
        for a, b in zip(samples, back):
            assert np.array_equal(a.series, b.series) and np.array_equal(a.times, b.times)
            assert a.mode == b.mode and a.laser == b.laser and a.fault_onset == b.fault_onset
            assert a.coefficients == b.coefficients

    def test_splits_round_trip(self, tmp_path):
        cfg = GenerationConfig(samples_per_mode=5)
        split = prepare(generate_dataset(cfg), cfg, split_seed=1, partial=PartialFailureSpec(rng_seed=2))
        write_splits(split, cfg, tmp_path, (0.6, 0.2, 0.2), PartialFailureSpec(rng_seed=2))
        back = read_splits(tmp_path)
        for part in ("train", "validation", "test"):
            assert np.array_equal(back.features(part), split.features(part))
            assert [w.mutated for w in getattr(back, part)] == [w.mutated for w in getattr(split, part)]
            assert [w.fault_fraction for w in getattr(back, part)] == [w.fault_fraction for w in getattr(split, part)]

    def test_split_csv_flags(self, tmp_path):
        cfg = GenerationConfig(samples_per_mode=5)
        split = prepare(generate_dataset(cfg), cfg, split_seed=1)
        write_splits(split, cfg, tmp_path, (0.6, 0.2, 0.2), PartialFailureSpec())
        lines = (tmp_path / "splits.csv").read_text().splitlines()
        assert lines[0].endswith("split_assignment,mutated")
        tags = {line.split(",")[8] for line in lines[1:]}
        assert tags == {"train", "val", "test"}

    def test_missing_and_empty(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="dataset.csv"):
            read_dataset(tmp_path)
        (tmp_path / "dataset.csv").write_text("")
        with pytest.raises(DatasetFormatError, match="empty"):
            read_dataset(tmp_path)

    @pytest.mark.parametrize("kind", ["lstm", "knn", "logreg", "rf"])
    def test_checkpoint_round_trip(self, tmp_path, kind):
        cfg = GenerationConfig(samples_per_mode=5)
        split = prepare(generate_dataset(cfg), cfg)
        from laserfail.baselines import flatten_features

        X, y = flatten_features(split.features("train")), split.labels("train")
        model = {
            "lstm": lambda: LstmNetwork.initialize(NetworkConfig(hidden_dim=3), 0),
            "knn": lambda: knn_fit(X, y),
            "logreg": lambda: logreg_fit(X, y),
            "rf": lambda: rf_fit(X, y, n_trees=2),
        }[kind]()
        path = save_checkpoint(tmp_path / f"{kind}.json", kind, model, split.scaler, {"note": 1})
        k, back, scaler, meta = load_checkpoint(path)
        assert k == kind and meta == {"note": 1}
        feats = split.features("test")
        inputs = feats if kind == "lstm" else flatten_features(feats)
        assert np.array_equal(back.predict(inputs), model.predict(inputs))
        assert np.array_equal(scaler.minimum, split.scaler.minimum)

    def test_version_refused(self, tmp_path):
        cfg = GenerationConfig(samples_per_mode=5)
        split = prepare(generate_dataset(cfg), cfg)
        path = save_checkpoint(tmp_path / "m.json", "lstm", LstmNetwork.zeros(NetworkConfig(hidden_dim=2)), split.scaler)
        doc = json.loads(path.read_text())
        doc["version"] = 99
        path.write_text(json.dumps(doc))
        with pytest.raises(CheckpointVersionError, match="99"):
            load_checkpoint(path)


class TestCli:
    def test_generate(self, tmp_path, capsys):
        assert run("generate", "--samples-per-mode", 2, "--out", tmp_path) == 0
        out = capsys.readouterr().out
        assert "wrote 8 samples" in out and "normal=2" in out
        assert (tmp_path / "dataset" / "dataset.csv").exists()

    def test_generate_deterministic(self, tmp_path):
        run("generate", "--samples-per-mode", 2, "--out", tmp_path / "a", "--seed", 5)
        run("--seed", 5, "generate", "--samples-per-mode", 2, "--out", tmp_path / "b")
        assert sha(tmp_path / "a/dataset/dataset.csv") == sha(tmp_path / "b/dataset/dataset.csv")
        run("generate", "--samples-per-mode", 2, "--out", tmp_path / "c", "--seed", 6)
        assert sha(tmp_path / "a/dataset/dataset.csv") != sha(tmp_path / "c/dataset/dataset.csv")

    def test_usage_errors(self, tmp_path, capsys):
        assert run() == 1
        assert run("frobnicate") == 1
        assert run("train", "--out", tmp_path) == 1
        assert run("train", "--model", "svm", "--out", tmp_path) == 1
        assert run("generate", "--seed", "abc") == 1

    def test_config_errors_touch_nothing(self, tmp_path):
        bad = tmp_path / "bad.yaml"
        bad.write_text("generation: {samples_per_mode: -3}\n")
        assert run("generate", "--config", bad, "--out", tmp_path / "o") == 1
        assert run("generate", "--config", tmp_path / "missing.yaml", "--out", tmp_path / "o") == 1
        assert not (tmp_path / "o").exists()

    def test_preprocess_without_dataset(self, tmp_path, capsys):
        assert run("preprocess", "--out", tmp_path) == 2
        assert "dataset.csv" in capsys.readouterr().err

    def test_preprocess_empty_file(self, tmp_path, capsys):
        (tmp_path / "dataset").mkdir()
        (tmp_path / "dataset" / "dataset.csv").write_text("")
        assert run("preprocess", "--out", tmp_path) == 2
        assert "empty" in capsys.readouterr().err

    def test_pipeline_steps(self, tmp_path, fast_config, capsys):
        common = ("--config", fast_config, "--out", tmp_path)
        assert run("generate", *common) == 0
        assert run("preprocess", *common) == 0
        out = capsys.readouterr().out
        assert "train=16 val=4 test=4" in out
        lines = (tmp_path / "dataset" / "splits.csv").read_text().splitlines()[1:]
        mutated = {line.split(",")[0] for line in lines if line.endswith(",1")}
        faulty_test = {line.split(",")[0] for line in lines if ",test," in line and line.split(",")[1] != "0"}
        assert mutated == faulty_test

        assert run("train", "--model", "knn", *common) == 0
        models = tmp_path / "models"
        assert (models / "knn.json").exists() and not (models / "knn_history.csv").exists()
        assert run("train", "--model", "lstm", "--epochs", 1, *common) == 0
        assert len((models / "lstm_history.csv").read_text().splitlines()) == 2
        first = sha(models / "lstm.json")
        assert run("train", "--model", "lstm", "--epochs", 1, *common) == 0
        assert sha(models / "lstm.json") == first

        capsys.readouterr()
        assert run("evaluate", models / "knn.json", *common) == 0
        csv_lines = (tmp_path / "reports" / "comparison.csv").read_text().splitlines()
        assert len(csv_lines) == 2 and csv_lines[1].startswith("knn,")
        assert run("evaluate", "--threshold-baseline", *common) == 0
        rows = {line.split(",")[0] for line in (tmp_path / "reports" / "comparison.csv").read_text().splitlines()[1:]}
        assert rows == {"knn", "lstm", "threshold"}
        assert "macro" in capsys.readouterr().out

    def test_evaluate_refuses_version(self, tmp_path, fast_config, capsys):
        common = ("--config", fast_config, "--out", tmp_path)
        run("generate", *common)
        run("preprocess", *common)
        run("train", "--model", "knn", *common)
        path = tmp_path / "models" / "knn.json"
        doc = json.loads(path.read_text())
        doc["version"] = 2
        path.write_text(json.dumps(doc))
        assert run("evaluate", path, *common) == 2
        assert "version 2" in capsys.readouterr().err

    def test_compare_is_deterministic(self, tmp_path, fast_config, capsys):
        assert run("compare", "--config", fast_config, "--out", tmp_path / "a") == 0
        assert run("compare", "--config", fast_config, "--out", tmp_path / "b") == 0
        out = capsys.readouterr().out
        assert "threshold" in out and "lstm" in out
        for name in ("comparison.csv", "confusion_lstm.csv", "roc_logreg.csv"):
            assert sha(tmp_path / "a/reports" / name) == sha(tmp_path / "b/reports" / name)

    def test_main_exits(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            cli.main(["generate", "--samples-per-mode", "1", "--out", str(tmp_path)])
        assert exc.value.code == 0
