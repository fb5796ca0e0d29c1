import numpy as np
import pytest

from sitswin.cli import main
from sitswin.data import DatasetIndex, load_tile, temporal_resample
from sitswin.data.tile import batch_tiles
from sitswin.metrics import ConfusionMatrix
from sitswin.render import read_ppm
from sitswin.train import load_checkpoint

SMALL = ["--classes", "3", "--bands", "3", "--timesteps", "16", "--height", "16", "--width", "16"]


def _synth(path, *extra):
    return main(["-q", "synth", "--out", str(path), "--tiles", "10", "--seed", "7", *SMALL, *extra])


def test_synth_writes_sixty_twenty_twenty(tmp_path, capsys):
    assert _synth(tmp_path / "data") == 0
    assert "train=6, val=2, test=2" in capsys.readouterr().out
    assert DatasetIndex.load(tmp_path / "data").counts() == {"train": 6, "val": 2, "test": 2}


def test_synth_is_deterministic(tmp_path):
    assert _synth(tmp_path / "a") == 0
    assert _synth(tmp_path / "b") == 0
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_synth_rejects_timesteps_off_the_multiple(tmp_path, capsys):
    code = main(["-q", "synth", "--out", str(tmp_path / "d"), "--timesteps", "17"])
    assert code == 2
    assert "multiple of 16" in capsys.readouterr().err


def test_config_echoes_training_defaults(tmp_path, capsys):
    assert main(["-q", "config", "--preset", "munich-like"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("preset = munich-like\n")
    assert "momentum = 0.9\n" in out
    assert "batch_size = 2\n" in out
    assert "epochs = 200\n" in out


def test_train_with_missing_data_dir(tmp_path, capsys):
    code = main(["-q", "train", "--data", str(tmp_path / "absent"), "--out", str(tmp_path / "run")])
    assert code == 2
    captured = capsys.readouterr()
    assert "momentum = 0.9" in captured.out
    assert "does not exist" in captured.err


def test_train_rejects_unknown_config_key(tmp_path, capsys):
    config = tmp_path / "run.txt"
    config.write_text("preset = tiny\nepochs = 3\nwarmup = 5\n", encoding="utf-8")
    code = main(["-q", "train", "--config", str(config), "--data", str(tmp_path), "--out", str(tmp_path / "run")])
    assert code == 2
    err = capsys.readouterr().err
    assert "warmup" in err
    assert f"{config}:3" in err


def test_unknown_command_and_suite_are_usage_errors(capsys):
    assert main(["frobnicate"]) == 2
    assert main(["verify", "--suite", "everything"]) == 2
    assert main(["--help"]) == 0
    capsys.readouterr()


def test_predict_diff_requires_actual(tmp_path, capsys):
    code = main(["-q", "predict", "--checkpoint", "x.ckpt", "--tile", "t.sit", "--out", str(tmp_path / "p.ppm"), "--diff", "d.ppm"])
    assert code == 2
    assert "--diff requires --actual" in capsys.readouterr().err


def test_verify_metrics_suite_passes(capsys):
    assert main(["-q", "verify", "--suite", "metrics"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out
    assert "PASS metrics/" in out


@pytest.fixture
def trained(tmp_path):
    data, run = tmp_path / "data", tmp_path / "run"
    assert _synth(data) == 0
    config = tmp_path / "run.txt"
    config.write_text(f"preset = gradcheck\nepochs = 2\nbatch_size = 3\ndata_dir = {data}\n", encoding="utf-8")
    assert main(["-q", "train", "--config", str(config), "--out", str(run)]) == 0
    return data, run


def test_train_writes_log_config_and_checkpoints(trained):
    _, run = trained
    lines = (run / "train.log").read_text(encoding="utf-8").splitlines()
    assert lines[0].startswith("epoch=1 step=2 ")
    assert lines[1].startswith("epoch=2 step=4 ")
    assert "val_oa=" in lines[0]
    assert lines[2].startswith("best val_oa=")
    assert lines[3].startswith("final train_oa=")
    assert "epochs = 2\n" in (run / "config.txt").read_text(encoding="utf-8")
    final = load_checkpoint(run / "final.ckpt")
    assert (final.step, final.epoch) == (4, 2)
    assert (run / "best.ckpt").is_file()


def test_eval_report_has_one_row_per_class(trained, capsys):
    data, run = trained
    capsys.readouterr()
    report_path = run / "report.txt"
    code = main(["-q", "eval", "--checkpoint", str(run / "final.ckpt"), "--data", str(data), "--split", "val", "--split", "test", "--report", str(report_path)])
    assert code == 0
    report = capsys.readouterr().out
    assert report == report_path.read_text(encoding="utf-8")
    lines = report.splitlines()
    assert lines[0].split() == ["val", "test"]
    assert [line.split()[0] for line in lines[2:5]] == ["crop_00", "crop_01", "crop_02"]
    assert lines[5].startswith("weighted avg.")
    oa = [float(v.rstrip("%")) for v in lines[7].split()[2:]]
    kappa = [float(v.rstrip("%")) if v != "undefined" else -100.0 for v in lines[8].split()[2:]]
    assert all(k <= a for k, a in zip(kappa, oa))


def test_eval_unknown_split(trained):
    data, run = trained
    assert main(["-q", "eval", "--checkpoint", str(run / "final.ckpt"), "--data", str(data), "--split", "holdout"]) == 2


def test_predict_diff_matches_disagreements(trained, tmp_path, capsys):
    data, run = trained
    tile_path = DatasetIndex.load(data).files("test")[0]
    capsys.readouterr()
    outputs = {name: tmp_path / f"{name}.ppm" for name in ("pred", "actual", "diff")}
    code = main([
        "-q", "predict", "--checkpoint", str(run / "final.ckpt"), "--tile", str(tile_path),
        "--out", str(outputs["pred"]), "--actual", str(outputs["actual"]), "--diff", str(outputs["diff"]),
        "--classes", str(data),
    ])
    assert code == 0
    for path in outputs.values():
        assert read_ppm(path).shape == (16, 16, 3)

    ckpt = load_checkpoint(run / "final.ckpt")
    tile = temporal_resample(load_tile(tile_path), ckpt.config.model.time_steps)
    values, labels = batch_tiles([tile])
    pred = ckpt.build_model().predict(values)[0]
    expected = ConfusionMatrix(3).accumulate(pred, labels[0]).disagreements
    assert capsys.readouterr().out.strip() == f"{expected} disagreeing pixels"
    assert int((read_ppm(outputs["diff"])[..., 0] == 255).sum()) == expected


def test_predict_rejects_band_mismatch(trained, tmp_path):
    _, run = trained
    other = tmp_path / "other"
    assert main(["-q", "synth", "--out", str(other), "--tiles", "1", "--classes", "3", "--bands", "5", "--height", "16", "--width", "16",
                 "--val-fraction", "0", "--test-fraction", "0"]) == 0
    code = main(["-q", "predict", "--checkpoint", str(run / "final.ckpt"), "--tile", str(other / "tile_00000.sit"), "--out", str(tmp_path / "p.ppm")])
    assert code == 2


def test_mosaic_stitches_the_test_split(trained, tmp_path):
    data, run = trained
    out = tmp_path / "mosaic"
    assert main(["-q", "mosaic", "--checkpoint", str(run / "final.ckpt"), "--data", str(data), "--out", str(out), "--threads", "2"]) == 0
    for name in ("pred.ppm", "actual.ppm", "diff.ppm"):
        assert read_ppm(out / name).shape == (16, 32, 3)
    actual = read_ppm(out / "actual.ppm")
    assert np.any(actual)


def test_resume_appends_to_the_log(trained, tmp_path):
    data, run = trained
    config = tmp_path / "longer.txt"
    config.write_text(f"preset = gradcheck\nepochs = 2\nbatch_size = 3\ndata_dir = {data}\n", encoding="utf-8")
    half = tmp_path / "half"
    assert main(["-q", "train", "--config", str(config), "--out", str(half), "--stop-epoch", "1"]) == 0
    assert main(["-q", "train", "--config", str(config), "--out", str(half), "--resume", str(half / "final.ckpt")]) == 0
    assert (half / "final.ckpt").read_bytes() == (run / "final.ckpt").read_bytes()
    epochs = [line.split()[0] for line in (half / "train.log").read_text(encoding="utf-8").splitlines() if line.startswith("epoch=")]
    assert epochs == ["epoch=1", "epoch=2"]
