"""Command-line interface: argument wiring, config files, artifacts and
error reporting."""

import json

import numpy as np
import pytest

from adaptrx.cli import build_parser, main
from adaptrx.rnn import RnnReceiver, load_checkpoint, save_checkpoint


def test_parser_requires_subcommand():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])
    with pytest.raises(SystemExit):
        build_parser().parse_args(["run-scenario"])   # --out-dir missing


def test_parser_rejects_unknown_preset():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["run-scenario", "--out-dir", "x",
                                   "--preset", "deep-space"])


def test_train_initial_writes_checkpoint(tmp_path, capsys):
    out = tmp_path / "weights.npz"
    rc = main(["train-initial", "--out", str(out),
               "--epochs", "1", "--iters-per-epoch", "2",
               "--batch-size", "2", "--n-units", "4", "--n-dense", "3",
               "--net-seed", "1", "--seed", "5", "--log-every", "0"])
    assert rc == 0
    assert out.exists()
    stdout = capsys.readouterr().out
    assert "training" in stdout and "saved" in stdout

    receiver, state = load_checkpoint(out)
    assert receiver.n_units == 4 and receiver.n_dense == 3
    assert state is not None and state.step == 2
    with np.load(out, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
    assert meta["extra"]["schedule"]["epochs"] == 1
    assert "final_loss" in meta["extra"]


def test_run_scenario_from_config_file(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"scenario": {
        "name": "clitest", "num_taps": 4, "velocity_kmh": 0.0,
        "ebn0_points_db": [10.0], "frames_per_point": 2, "eval_chunk": 2}}))
    out_dir = tmp_path / "results"
    rc = main(["run-scenario", "--config", str(cfg),
               "--out-dir", str(out_dir)])
    assert rc == 0
    assert (out_dir / "clitest.csv").exists()
    assert (out_dir / "clitest.manifest.json").exists()
    stdout = capsys.readouterr().out
    assert "lmmse-iedd" in stdout and "perfect-idd" in stdout
    assert "wrote" in stdout


def test_run_scenario_preset_with_flag_overrides(tmp_path):
    out_dir = tmp_path / "res"
    rc = main(["run-scenario", "--preset", "static-multipath",
               "--out-dir", str(out_dir), "--points", "10",
               "--frames", "2", "--eval-chunk", "2"])
    assert rc == 0
    rows = (out_dir / "static-multipath.csv").read_text().splitlines()
    assert len(rows) == 3                      # header + 2 receivers x 1 point
    manifest = json.loads(
        (out_dir / "static-multipath.manifest.json").read_text())
    assert manifest["scenario"]["frames_per_point"] == 2
    assert manifest["scenario"]["ebn0_points_db"] == [10.0]


def test_adapt_below_gate_saves_unchanged_weights(tmp_path, capsys):
    src = tmp_path / "universal.npz"
    save_checkpoint(src, RnnReceiver(n_units=4, n_dense=3, rng_seed=7))
    out = tmp_path / "adapted.npz"
    rc = main(["adapt", "--checkpoint", str(src), "--out", str(out),
               "--ebn0", "5", "--num-taps", "4"])
    assert rc == 0
    report = json.loads(capsys.readouterr().out.split("saved")[0])
    assert report["updates_applied"] == 0

    original, _ = load_checkpoint(src)
    adapted, state = load_checkpoint(out)
    assert state is None                       # deployment copy, no optimizer
    for k, v in original.parameters().items():
        np.testing.assert_array_equal(v, adapted.parameters()[k])
    with np.load(out, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
    assert meta["extra"]["adapted_from"] == "universal.npz"
    assert meta["extra"]["ebn0_db"] == 5.0
    assert meta["extra"]["adaptation"]["batches_accepted"] == 0


def test_export_checkpoint_strips_optimizer(tmp_path, capsys):
    src = tmp_path / "trained.npz"
    rc = main(["train-initial", "--out", str(src),
               "--epochs", "1", "--iters-per-epoch", "1",
               "--batch-size", "2", "--n-units", "4", "--n-dense", "3",
               "--log-every", "0"])
    assert rc == 0
    capsys.readouterr()

    slim = tmp_path / "slim.npz"
    assert main(["export-checkpoint", "--checkpoint", str(src),
                 "--out", str(slim)]) == 0
    assert "without optimizer state" in capsys.readouterr().out
    rx_src, _ = load_checkpoint(src)
    rx_slim, state = load_checkpoint(slim)
    assert state is None
    for k, v in rx_src.parameters().items():
        np.testing.assert_array_equal(v, rx_slim.parameters()[k])
    with np.load(slim, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
    assert meta["extra"]["exported_from"] == "trained.npz"
    assert "schedule" in meta["extra"]        # original extras preserved

    fat = tmp_path / "fat.npz"
    assert main(["export-checkpoint", "--checkpoint", str(src),
                 "--out", str(fat), "--keep-optimizer"]) == 0
    _, state = load_checkpoint(fat)
    assert state is not None and state.step == 1


def test_cli_error_reporting(tmp_path, capsys):
    src = tmp_path / "w.npz"
    save_checkpoint(src, RnnReceiver(n_units=4, n_dense=3))

    # adapt without an operating point
    rc = main(["adapt", "--checkpoint", str(src),
               "--out", str(tmp_path / "o.npz"), "--num-taps", "4"])
    assert rc == 2
    assert capsys.readouterr().err.startswith("error:")

    # config with keys that no section accepts
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"receiver": {"hidden_layers": 9}}))
    rc = main(["train-initial", "--config", str(bad),
               "--out", str(tmp_path / "x.npz")])
    assert rc == 2
    assert "unknown keys" in capsys.readouterr().err

    # malformed JSON
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    rc = main(["run-scenario", "--config", str(broken),
               "--out-dir", str(tmp_path)])
    assert rc == 2

    # scenario config missing required fields
    sparse = tmp_path / "sparse.json"
    sparse.write_text(json.dumps({"scenario": {"num_taps": 8}}))
    rc = main(["run-scenario", "--config", str(sparse),
               "--out-dir", str(tmp_path)])
    assert rc == 2
    assert "incomplete scenario config" in capsys.readouterr().err
