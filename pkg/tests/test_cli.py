import json

import pytest

from botcensus.cli import EXIT_CONFIG, EXIT_DATA, EXIT_INFEASIBLE, main

TINY_CONFIG = {
    "forest": {"n_trees": 6, "max_depth": 3},
    "adaboost": {"rounds": 5},
    "text": {"learning_rate": 0.1, "epochs": 5},
    "graph": {"learning_rate": 0.005, "batch_size": 10000, "epochs": 6,
              "hidden_dim": 8, "dropout": 0.1},
    "distill": {"learning_rate": 0.02, "epochs": 8, "lambda": 0.7},
    "weights": {"steps": 80},
}


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg_path = root / "config.json"
    cfg_path.write_text(json.dumps(TINY_CONFIG))
    assert main(["synth-generate", "--out-dir", str(root / "data"),
                 "--n", "260", "--seed", "3"]) == 0
    return root


def data_file(workdir, name):
    return str(workdir / "data" / name)


@pytest.fixture(scope="module")
def bundle_dir(workdir):
    out = workdir / "bundle"
    code = main([
        "train",
        "--users", data_file(workdir, "users.jsonl"),
        "--edges", data_file(workdir, "edges.csv"),
        "--out", str(out),
        "--config", str(workdir / "config.json"),
        "--seed", "3",
    ])
    assert code == 0
    assert (out / "manifest.json").exists()
    return out


class TestFullFlow:
    def test_calibrate_and_fit_weights(self, workdir, bundle_dir):
        assert main([
            "calibrate", "--bundle", str(bundle_dir),
            "--users", data_file(workdir, "users.jsonl"),
            "--seed", "3",
        ]) == 0
        assert main([
            "fit-weights", "--bundle", str(bundle_dir),
            "--users", data_file(workdir, "users.jsonl"),
            "--seed", "3",
        ]) == 0
        manifest = json.loads((bundle_dir / "manifest.json").read_text())
        assert set(manifest["alpha"]) == set(manifest["temperatures"])

    def test_estimate(self, workdir, bundle_dir, capsys):
        assert main([
            "estimate", "--bundle", str(bundle_dir),
            "--users", data_file(workdir, "users.jsonl"),
            "--out", str(workdir / "estimate.csv"),
        ]) == 0
        out = capsys.readouterr().out
        assert "p_hat" in out
        assert (workdir / "estimate.csv").exists()

    def test_eval_balanced_deterministic(self, workdir, bundle_dir):
        args = [
            "eval-balanced", "--bundle", str(bundle_dir),
            "--communities", "2", "--size", "150", "--seed", "17",
        ]
        assert main(args + ["--out-dir", str(workdir / "bal1")]) == 0
        assert main(args + ["--out-dir", str(workdir / "bal2")]) == 0
        a = (workdir / "bal1" / "balanced.csv").read_bytes()
        b = (workdir / "bal2" / "balanced.csv").read_bytes()
        assert a == b
        assert (workdir / "bal1" / "balanced.svg").exists()
        assert (workdir / "bal1" / "balanced_summary.csv").exists()

    def test_eval_sweep(self, workdir, bundle_dir):
        assert main([
            "eval-sweep", "--bundle", str(bundle_dir),
            "--pool-users", data_file(workdir, "users.jsonl"),
            "--pool-edges", data_file(workdir, "edges.csv"),
            "--pool-labels", data_file(workdir, "labels.csv"),
            "--fractions", "0.4,0.6", "--size", "80", "--seeds", "2",
            "--out-dir", str(workdir / "sweep"),
        ]) == 0
        rows = (workdir / "sweep" / "sweep.csv").read_text().strip().splitlines()
        assert len(rows) == 1 + 4  # header + 2 fractions x 2 seeds

    def test_perturb_eval(self, workdir, bundle_dir):
        assert main([
            "perturb-eval", "--bundle", str(bundle_dir),
            "--users", data_file(workdir, "users.jsonl"),
            "--train-users", data_file(workdir, "users.jsonl"),
            "--seed", "5",
            "--out", str(workdir / "perturb.csv"),
        ]) == 0
        lines = (workdir / "perturb.csv").read_text().strip().splitlines()
        assert len(lines) == 4
        assert lines[0].startswith("mode,")

    def test_report_command(self, workdir, bundle_dir):
        assert main([
            "report", "--rows", str(workdir / "bal1" / "balanced.csv"),
            "--chart", str(workdir / "rechart.svg"),
        ]) == 0
        assert (workdir / "rechart.svg").exists()

    def test_init_config(self, workdir):
        path = workdir / "default_config.json"
        assert main(["init-config", "--out", str(path)]) == 0
        cfg = json.loads(path.read_text())
        assert cfg["graph"]["learning_rate"] == 1e-3
        assert cfg["text"]["learning_rate"] == 1e-4
        assert cfg["distill"]["learning_rate"] == 5e-4
        assert cfg["graph"]["batch_size"] == 128
        assert cfg["text"]["batch_size"] == 64
        assert cfg["distill"]["batch_size"] == 2048
        assert cfg["graph"]["epochs"] == cfg["text"]["epochs"] == 50
        assert cfg["graph"]["l2"] == cfg["text"]["l2"] == cfg["distill"]["l2"] == 1e-5
        assert cfg["graph"]["hidden_dim"] == cfg["text"]["hidden_dim"] == 128
        assert cfg["distill"]["hidden_dim"] == 1024
        assert cfg["graph"]["dropout"] == cfg["text"]["dropout"] == 0.5
        assert cfg["distill"]["dropout"] == 0.3
        assert cfg["graph"]["layers"] == 2
        assert cfg["distill"]["lambda"] == 0.7


class TestExitCodes:
    def test_bad_config_is_2(self, workdir, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        code = main([
            "train", "--users", data_file(workdir, "users.jsonl"),
            "--edges", data_file(workdir, "edges.csv"),
            "--out", str(tmp_path / "b"), "--config", str(bad),
        ])
        assert code == EXIT_CONFIG

    def test_unknown_config_key_is_2(self, workdir, tmp_path):
        bad = tmp_path / "bad2.json"
        bad.write_text(json.dumps({"graph": {"warp_speed": 9}}))
        code = main([
            "train", "--users", data_file(workdir, "users.jsonl"),
            "--edges", data_file(workdir, "edges.csv"),
            "--out", str(tmp_path / "b"), "--config", str(bad),
        ])
        assert code == EXIT_CONFIG

    def test_missing_users_file_is_3(self, bundle_dir, tmp_path):
        code = main([
            "estimate", "--bundle", str(bundle_dir),
            "--users", str(tmp_path / "missing.jsonl"),
        ])
        assert code == EXIT_DATA

    def test_malformed_users_file_is_3(self, bundle_dir, tmp_path):
        bad = tmp_path / "bad.jsonl"
        bad.write_text('{"id": "u1"}\n')  # missing timestamps
        code = main(["estimate", "--bundle", str(bundle_dir), "--users", str(bad)])
        assert code == EXIT_DATA

    def test_fully_infeasible_sweep_is_4(self, workdir, bundle_dir):
        code = main([
            "eval-sweep", "--bundle", str(bundle_dir),
            "--pool-users", data_file(workdir, "users.jsonl"),
            "--pool-edges", data_file(workdir, "edges.csv"),
            "--pool-labels", data_file(workdir, "labels.csv"),
            "--fractions", "0.99", "--size", "200", "--seeds", "1",
            "--out-dir", str(workdir / "sweep_bad"),
        ])
        assert code == EXIT_INFEASIBLE


class TestPrecedence:
    def test_flag_beats_environment(self, tmp_path, monkeypatch):
        monkeypatch.setenv("BOTCENSUS_SEED", "99")
        assert main(["synth-generate", "--out-dir", str(tmp_path / "flag"),
                     "--n", "40", "--seed", "8"]) == 0
        monkeypatch.delenv("BOTCENSUS_SEED")
        assert main(["synth-generate", "--out-dir", str(tmp_path / "plain"),
                     "--n", "40", "--seed", "8"]) == 0
        assert (tmp_path / "flag" / "users.jsonl").read_bytes() == (
            tmp_path / "plain" / "users.jsonl"
        ).read_bytes()

    def test_environment_beats_default(self, tmp_path, monkeypatch):
        monkeypatch.setenv("BOTCENSUS_SEED", "8")
        assert main(["synth-generate", "--out-dir", str(tmp_path / "env"),
                     "--n", "40"]) == 0
        monkeypatch.delenv("BOTCENSUS_SEED")
        assert main(["synth-generate", "--out-dir", str(tmp_path / "flagged"),
                     "--n", "40", "--seed", "8"]) == 0
        assert (tmp_path / "env" / "users.jsonl").read_bytes() == (
            tmp_path / "flagged" / "users.jsonl"
        ).read_bytes()

    def test_config_beats_environment(self, workdir, tmp_path, monkeypatch):
        cfg = dict(TINY_CONFIG)
        cfg["seed"] = 12
        cfg_path = tmp_path / "seeded.json"
        cfg_path.write_text(json.dumps(cfg))
        common = [
            "train",
            "--users", data_file(workdir, "users.jsonl"),
            "--edges", data_file(workdir, "edges.csv"),
        ]
        monkeypatch.setenv("BOTCENSUS_SEED", "77")
        assert main(common + ["--out", str(tmp_path / "via_config"),
                              "--config", str(cfg_path)]) == 0
        monkeypatch.delenv("BOTCENSUS_SEED")
        assert main(common + ["--out", str(tmp_path / "via_flag"),
                              "--config", str(cfg_path), "--seed", "12"]) == 0
        a = json.loads((tmp_path / "via_config" / "manifest.json").read_text())
        b = json.loads((tmp_path / "via_flag" / "manifest.json").read_text())
        assert a == b
