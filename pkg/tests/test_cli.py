import json
import subprocess
import sys
from importlib import resources

import numpy as np
import pytest

from biped_imitation.angles import JOINT_INDEX, AngleTrajectory, read_angle_csv, write_angle_csv
from biped_imitation.checkpoint import load_checkpoint, save_checkpoint
from biped_imitation.cli import build_parser, main
from biped_imitation.dqn import substream_seed
from biped_imitation.env import DEFAULT_LIMITS, EnvConfig
from biped_imitation.keypoints import write_keypoint_file
from biped_imitation.metrics import read_table
from biped_imitation.nn import NetworkParams, NetworkSpec, init_network
from biped_imitation.synthetic import constant_trajectory, gait_trajectory, render_keypoints, write_bundled_data

DATA = resources.files("biped_imitation") / "data"
SMALL = ["--hidden", "8", "--epochs", "2", "--batch-size", "8"]


@pytest.fixture
def keypoints(tmp_path):
    p = tmp_path / "kp.json"
    write_keypoint_file(render_keypoints(gait_trajectory(30), noise_px=0.3, dropout=0.02, seed=1), p)
    return p


def test_bundled_data_regenerates(tmp_path):
    write_bundled_data(tmp_path)
    for f in tmp_path.iterdir():
        assert f.read_bytes() == (DATA / f.name).read_bytes(), f.name


def test_help_documents_defaults(capsys):
    parser = build_parser()
    for cmd in ("extract", "smooth", "train", "evaluate", "pipeline"):
        with pytest.raises(SystemExit) as ex:
            parser.parse_args([cmd, "--help"])
        assert ex.value.code == 0
        out = capsys.readouterr().out
        for flag in ("--config", "--seed", "--out-dir"):
            assert flag in out
        assert "default" in out
    with pytest.raises(SystemExit):
        parser.parse_args(["smooth", "--help"])
    out = " ".join(capsys.readouterr().out.split())
    assert "(default: 7)" in out and "(default: 2)" in out and "(default: copy)" in out


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "biped_imitation", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "pipeline" in r.stdout
    r = subprocess.run([sys.executable, "-m", "biped_imitation", "frobnicate"], capture_output=True, text=True)
    assert r.returncode == 1


def test_extract(tmp_path, keypoints, capsys):
    assert main(["extract", str(keypoints), "--out-dir", str(tmp_path / "o"), "--degrees"]) == 0
    traj = read_angle_csv(tmp_path / "o" / "angles.csv")
    assert len(traj) == 30
    np.testing.assert_allclose(np.degrees(traj.angles), np.degrees(gait_trajectory(30).angles), atol=3.0)


def test_extract_missing_file(tmp_path, capsys):
    assert main(["extract", str(tmp_path / "nowhere.json")]) == 2
    err = capsys.readouterr().err
    assert "nowhere.json" in err and "parse" in err


def test_extract_structural_error(tmp_path, capsys):
    p = tmp_path / "k.json"
    p.write_text(json.dumps({"frame_rate": 30, "frames": [[[0, 0, 1]] * 17]}))
    assert main(["extract", str(p), "-o", str(tmp_path / "a.csv")]) == 2
    assert "frame 0" in capsys.readouterr().err


def test_smooth_constant_is_identity(tmp_path):
    src = tmp_path / "c.csv"
    write_angle_csv(constant_trajectory(15, {"r-knee": 12.5, "l-hip": -3.0}), src)
    assert main(["smooth", str(src), "-o", str(tmp_path / "s.csv")]) == 0
    assert (tmp_path / "s.csv").read_bytes() == src.read_bytes()


def test_smooth_defaults_equal_explicit(tmp_path):
    src = DATA / "gait_demo.csv"
    main(["smooth", str(src), "-o", str(tmp_path / "a.csv")])
    main(["smooth", str(src), "-o", str(tmp_path / "b.csv"), "--sg-window", "7", "--sg-order", "2",
          "--sg-edge", "copy"])
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    main(["smooth", str(src), "-o", str(tmp_path / "c.csv"), "--sg-window", "9"])
    assert (tmp_path / "c.csv").read_bytes() != (tmp_path / "a.csv").read_bytes()


def test_smooth_even_window_is_usage_error(tmp_path, capsys):
    assert main(["smooth", str(DATA / "gait_demo.csv"), "--sg-window", "4", "--out-dir", str(tmp_path)]) == 1
    assert "window" in capsys.readouterr().err
    assert not (tmp_path / "smoothed.csv").exists()


def test_smooth_short_channel_names_joint(tmp_path, capsys):
    src = tmp_path / "short.csv"
    valid = np.ones((10, 8), dtype=bool)
    valid[4:, JOINT_INDEX["l-elbow"]] = False
    write_angle_csv(AngleTrajectory(np.zeros((10, 8)), valid), src)
    assert main(["smooth", str(src), "-o", str(tmp_path / "s.csv")]) == 2
    err = capsys.readouterr().err
    assert "l-elbow" in err and "smooth" in err


def test_argparse_errors_exit_1(capsys):
    with pytest.raises(SystemExit) as ex:
        main(["smooth"])
    assert ex.value.code == 1
    with pytest.raises(SystemExit) as ex:
        main(["train", "x.csv", "--epochs", "many"])
    assert ex.value.code == 1


def test_train_zero_epochs_is_init(tmp_path):
    out = tmp_path / "t"
    assert main(["train", str(DATA / "toy_demo.csv"), "--out-dir", str(out), "--seed", "5",
                 "--hidden", "8,8", "--epochs", "0"]) == 0
    params, adam, meta = load_checkpoint(out / "checkpoint.ckpt")
    assert params.equals(init_network(params.spec, substream_seed(5, "init")))
    assert adam.t == 0
    assert (out / "train_log.csv").read_text() == "epoch,mse,rmse,epsilon,total_reward\n"
    assert meta["epochs_done"] == 0 and meta["env"] == EnvConfig().to_dict()


def test_train_twice_identical(tmp_path):
    for name in ("a", "b"):
        assert main(["train", str(DATA / "toy_demo.csv"), "--config", str(DATA / "toy_config.json"),
                     "--out-dir", str(tmp_path / name), *SMALL, "--checkpoint-every", "1"]) == 0
    for f in ("checkpoint.ckpt", "train_log.csv", "checkpoint_epoch0001.ckpt", "checkpoint_epoch0002.ckpt"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    rows = (tmp_path / "a" / "train_log.csv").read_text().splitlines()
    assert len(rows) == 3 and rows[0] == "epoch,mse,rmse,epsilon,total_reward"
    final, _, _ = load_checkpoint(tmp_path / "a" / "checkpoint.ckpt")
    last, _, meta = load_checkpoint(tmp_path / "a" / "checkpoint_epoch0002.ckpt")
    assert final.equals(last) and meta["epochs_done"] == 2


def test_train_config_errors_all_at_once(tmp_path, capsys):
    code = main(["train", str(DATA / "toy_demo.csv"), "--out-dir", str(tmp_path), "--gamma", "3",
                 "--batch-size", "0", "--joints", "r-knee,r-toe"])
    assert code == 1
    err = capsys.readouterr().err
    assert "gamma" in err and "batch_size" in err and "r-toe" in err and "config" in err


def test_train_missing_demo(tmp_path, capsys):
    assert main(["train", str(tmp_path / "none.csv"), "--out-dir", str(tmp_path)]) == 2
    assert "none.csv" in capsys.readouterr().err


def _perfect_checkpoint(path):
    """Zero-weight network that always picks 'r-elbow up'; exact for a demo held at the elbow's upper limit."""
    spec = NetworkSpec((28, 4, 25))
    bias = np.zeros(25)
    bias[2 * JOINT_INDEX["r-elbow"]] = 1.0
    params = NetworkParams(spec, (np.zeros((28, 4)), np.zeros(4), np.zeros((4, 25)), bias), seed=0)
    save_checkpoint(path, params, metadata={"env": EnvConfig().to_dict()})


def test_evaluate_perfect_policy(tmp_path, capsys):
    upper = DEFAULT_LIMITS.to_degrees()["r-elbow"][1]
    demo = tmp_path / "demo.csv"
    write_angle_csv(constant_trajectory(12, {"r-elbow": upper}), demo)
    _perfect_checkpoint(tmp_path / "p.ckpt")
    assert main(["evaluate", str(demo), str(tmp_path / "p.ckpt"), "--out-dir", str(tmp_path / "r")]) == 0
    for name in ("mean_angle_error.csv", "euclidean.csv"):
        row = read_table(tmp_path / "r" / name)["demo"]
        assert all(row[f"F.{g}"] == 0.0 for g in ("Shoulder", "Elbow", "Thigh", "Knee"))
    assert (tmp_path / "r" / "loss_curve.csv").exists()
    summary = json.loads((tmp_path / "r" / "summary.json").read_text())
    assert summary["demo/F"]["limits_ok"] is True
    assert "limits_ok=True" in capsys.readouterr().out


def test_evaluate_spec_mismatch(tmp_path, capsys):
    spec = NetworkSpec((10, 4, 25))
    save_checkpoint(tmp_path / "bad.ckpt", init_network(spec, 0), metadata={"env": EnvConfig().to_dict()})
    assert main(["evaluate", str(DATA / "gait_demo.csv"), str(tmp_path / "bad.ckpt"),
                 "--out-dir", str(tmp_path)]) == 2
    assert "does not fit" in capsys.readouterr().err
    (tmp_path / "junk.ckpt").write_bytes(b"junk")
    assert main(["evaluate", str(DATA / "gait_demo.csv"), str(tmp_path / "junk.ckpt"),
                 "--out-dir", str(tmp_path)]) == 2


def test_evaluate_two_variants_and_logs(tmp_path):
    demo = str(DATA / "toy_demo.csv")
    cfg = ["--config", str(DATA / "toy_config.json"), *SMALL]
    main(["train", demo, *cfg, "--out-dir", str(tmp_path / "f")])
    main(["train", demo, *cfg, "--variant", "conv1d", "--out-dir", str(tmp_path / "c")])
    code = main(["evaluate", demo, str(tmp_path / "f" / "checkpoint.ckpt"), str(tmp_path / "c" / "checkpoint.ckpt"),
                 "--logs", str(tmp_path / "f" / "train_log.csv"), str(tmp_path / "c" / "train_log.csv"),
                 "--with-untrained", "--case", "toy", "--out-dir", str(tmp_path / "r")])
    assert code == 0
    table = read_table(tmp_path / "r" / "euclidean.csv")
    assert set(table) == {"toy", "toy_untrained"}
    assert table["toy"]["C.Knee"] is not None and table["toy"]["F.Knee"] is not None
    assert len((tmp_path / "r" / "loss_curve.csv").read_text().splitlines()) == 3
    assert (tmp_path / "r" / "loss_curve_C.csv").exists()
    # same variant twice is refused
    assert main(["evaluate", demo, str(tmp_path / "f" / "checkpoint.ckpt"), str(tmp_path / "f" / "checkpoint.ckpt"),
                 "--out-dir", str(tmp_path / "r2")]) == 1


def test_numeric_error_exit_code(tmp_path, capsys):
    code = main(["train", str(DATA / "toy_demo.csv"), "--config", str(DATA / "toy_config.json"), *SMALL,
                 "--lr", "1e300", "--reward-scale", "1e300", "--out-dir", str(tmp_path)])
    assert code == 3
    assert "train" in capsys.readouterr().err


def test_pipeline_layout(tmp_path, keypoints):
    out = tmp_path / "p"
    assert main(["pipeline", str(keypoints), "--out-dir", str(out), *SMALL, "--with-untrained"]) == 0
    for f in ("angles.csv", "smoothed.csv", "config.json", "checkpoint.ckpt", "train_log.csv",
              "report/mean_angle_error.csv", "report/euclidean.csv", "report/loss_curve.csv",
              "report/summary.json", "report/series_demo_F.csv"):
        assert (out / f).exists(), f
    cfg = json.loads((out / "config.json").read_text())
    assert cfg["network"]["hidden"] == [8] and cfg["trainer"]["epochs"] == 2
