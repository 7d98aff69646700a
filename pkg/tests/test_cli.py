import json
import struct

import numpy as np
import pytest
from PIL import Image

from vgan import cli, data


@pytest.fixture
def workspace(tmp_path):
    refs = tmp_path / "refs"
    refs.mkdir()
    for s in range(2):
        data.write_png(data.make_scene(40, seed=s), refs / f"s{s}.png")
    assert cli.main(["synth", "--rgb", str(refs / "s0.png"), "--bands", "6", "--seed", "1",
                     "--out", str(tmp_path / "c.spc")]) == 0
    return tmp_path


def run(*argv):
    return cli.main([str(a) for a in argv])


TRAIN = ["--preset", "desk", "--epoch-size", "4", "--epochs", "2", "--patch-size", "16", "--seed", "7"]


@pytest.fixture
def trained(workspace):
    assert run("train", "--cube", workspace / "c.spc", "--rgb", workspace / "refs",
               "--out", workspace / "run", *TRAIN) == 0
    return workspace


def test_train_outputs(trained):
    assert (trained / "run/ckpt_epoch2").exists() and (trained / "run/report.csv").exists()


def test_train_missing_cube_exit_2_no_outputs(workspace):
    assert run("train", "--cube", workspace / "nope.spc", "--rgb", workspace / "refs",
               "--out", workspace / "out") == 2
    assert not (workspace / "out").exists()


def test_train_divergence_exit_3(workspace):
    rc = run("train", "--cube", workspace / "c.spc", "--rgb", workspace / "refs", "--out", workspace / "d",
             *TRAIN, "--lr-d", "1e30", "--lr-g", "1e30")
    assert rc == 3
    assert not (workspace / "d").exists()


def test_train_resume(trained):
    rc = run("train", "--cube", trained / "c.spc", "--rgb", trained / "refs", "--out", trained / "run",
             *TRAIN, "--epochs", "3", "--resume", trained / "run/ckpt_epoch2")
    assert rc == 0 and (trained / "run/ckpt_epoch3").exists()


def test_config_file_and_flag_precedence(workspace):
    cfg = workspace / "cfg.txt"
    cfg.write_text("# desk run\npreset=desk\nepoch_size=3\nepochs=1\npatch_size=16\nseed=2\n")
    assert run("train", "--cube", workspace / "c.spc", "--rgb", workspace / "refs", "--out", workspace / "r",
               "--config", cfg, "--seed", "9") == 0
    from vgan.networks import load_checkpoint
    meta = load_checkpoint(workspace / "r/ckpt_epoch1").meta
    assert meta["train_config"]["seed"] == 9 and meta["train_config"]["epoch_size"] == 3
    cfg.write_text("bogus=1\n")
    assert run("train", "--cube", workspace / "c.spc", "--rgb", workspace / "refs", "--out", workspace / "r",
               "--config", cfg) == 1


def test_visualize(trained):
    args = ["visualize", "--ckpt", trained / "run/ckpt_epoch2", "--cube", trained / "c.spc"]
    assert run(*args, "--out", trained / "a.png") == 0
    first = (trained / "a.png").read_bytes()
    assert run(*args, "--out", trained / "a.png") == 0
    assert (trained / "a.png").read_bytes() == first
    with Image.open(trained / "a.png") as im:
        assert im.size == (40, 40)
        assert json.loads(im.text["vgan"])["tile"] == 16


def test_visualize_odd_size(trained):
    cube = data.SpectralCube(np.random.default_rng(0).uniform(0, 1, size=(130, 260, 6)))
    data.save_cube(cube, trained / "odd.spc")
    assert run("visualize", "--ckpt", trained / "run/ckpt_epoch2", "--cube", trained / "odd.spc",
               "--tile", 128, "--out", trained / "odd.png") == 0
    assert data.read_png(trained / "odd.png").pixels.shape == (130, 260, 3)


def test_visualize_band_mismatch_exit_4(trained):
    data.save_cube(data.SpectralCube(np.zeros((8, 8, 5))), trained / "five.spc")
    assert run("visualize", "--ckpt", trained / "run/ckpt_epoch2", "--cube", trained / "five.spc",
               "--out", trained / "x.png") == 4
    assert not (trained / "x.png").exists()


def test_evaluate(workspace, capsys):
    png = workspace / "refs/s0.png"
    assert run("evaluate", png, "--truth", png, "--mode", "sampled", "--samples", 500, "--seed", 3,
               "--out", workspace / "e.json") == 0
    rep = json.loads((workspace / "e.json").read_text())
    assert rep["rmse"] == 0
    assert rep["estimator"]["seed"] == 3 and rep["config"]["seed"] == 3


def test_evaluate_table_for_several_images(workspace, capsys):
    assert run("evaluate", workspace / "refs/s0.png", workspace / "refs/s1.png") == 0
    err = capsys.readouterr().err
    assert "Method" in err and "s1" in err


def test_evaluate_size_mismatch_exit_4(workspace):
    data.write_png(data.make_scene(20), workspace / "small.png")
    assert run("evaluate", workspace / "refs/s0.png", "--truth", workspace / "small.png") == 4


def test_baseline(workspace, capsys):
    assert run("baseline", "--cube", workspace / "c.spc", "--method", "lp", "--k", 3,
               "--out", workspace / "b") == 0
    assert "selected bands" in capsys.readouterr().out
    assert data.read_png(workspace / "b/lp.png").pixels.shape == (40, 40, 3)


def test_baseline_cmf_zero_cube_black(workspace):
    data.save_cube(data.SpectralCube(np.zeros((6, 6, 8))), workspace / "zero.spc")
    assert run("baseline", "--cube", workspace / "zero.spc", "--method", "cmf", "--out", workspace / "z") == 0
    assert not data.read_png(workspace / "z/cmf.png").pixels.any()


def test_baseline_unknown_method_exit_1(workspace, capsys):
    assert run("baseline", "--cube", workspace / "c.spc", "--method", "ica", "--out", workspace / "u") == 1
    assert "lp" in capsys.readouterr().err
    assert not (workspace / "u").exists()


def test_baseline_failure_writes_nothing(workspace):
    rank1 = np.ones((6, 6, 1)) * np.arange(1, 9)
    rank1 = rank1 * np.random.default_rng(0).uniform(1, 2, size=(6, 6, 1))
    data.save_cube(data.SpectralCube(rank1), workspace / "r1.spc")
    rc = run("baseline", "--cube", workspace / "r1.spc", "--method", "cmf,pca", "--out", workspace / "p")
    assert rc == 1 and not (workspace / "p").exists()


def test_synth(workspace):
    again = workspace / "again.spc"
    assert run("synth", "--rgb", workspace / "refs/s0.png", "--bands", 6, "--seed", 1, "--out", again) == 0
    assert again.read_bytes() == (workspace / "c.spc").read_bytes()
    assert struct.unpack("<4sIII", again.read_bytes()[:16]) == (b"SPC1", 40, 40, 6)
    side = json.loads((workspace / "again.spc.lift.json").read_text())
    lift = data.SyntheticLift.from_dict(side)
    assert side["config"]["bands"] == 6
    rgb = data.read_png(workspace / "refs/s0.png").pixels / 255.0
    err = data.recover_rgb(data.load_cube(again), lift) - rgb
    assert np.abs(err).std() < 0.1


def test_synth_too_few_bands_exit_1(workspace):
    assert run("synth", "--rgb", workspace / "refs/s0.png", "--bands", 3, "--out", workspace / "x.spc") == 1
    assert not (workspace / "x.spc").exists()


def test_usage_errors_exit_1():
    with pytest.raises(SystemExit) as info:
        cli.main(["frobnicate"])
    assert info.value.code == 1
    assert cli.main(["visualize", "--cube", "x"]) == 1
