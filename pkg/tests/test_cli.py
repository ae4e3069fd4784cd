import json

import numpy as np
import pytest

from asymvid.cli import main
from asymvid.config import smoke_config
from asymvid.data import SceneSampler, render_video, scene_for
from asymvid.frames_io import read_pgm, read_sequence, write_pgm, write_sequence
from asymvid.train import sha256_file


@pytest.fixture(scope="module")
def ckpt(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg_path = root / "smoke.json"
    smoke_config(str(root / "run")).save(cfg_path)
    assert main(["train", "--config", str(cfg_path), "--print-every", "100"]) == 0
    return root / "run" / "final.ckpt"


@pytest.fixture
def clip(tmp_path):
    video = render_video(scene_for(5, 0, 9, SceneSampler()))
    write_sequence(tmp_path / "clip", video)
    return tmp_path / "clip", video


def _outputs(d):
    return [json.loads(l) for l in (d / "outputs.jsonl").read_text().splitlines()]


def test_interpolate_writes_every_frame_and_keeps_the_ends(ckpt, clip, tmp_path):
    d, video = clip
    out = tmp_path / "interp"
    assert main(["interpolate", "--ckpt", str(ckpt), "--first", str(d / "frame_000.pgm"),
                 "--last", str(d / "frame_008.pgm"), "--steps", "3", "--out", str(out)]) == 0
    frames = read_sequence(out)
    assert frames.shape == (9, 32, 32, 1)
    assert np.array_equal(frames[0], read_pgm(d / "frame_000.pgm"))
    assert np.array_equal(frames[-1], read_pgm(d / "frame_008.pgm"))
    recs = _outputs(out)
    assert len(recs) == 9 and all(r["sha256"] == sha256_file(out / r["path"]) for r in recs)


def test_generation_is_seeded(ckpt, clip, tmp_path):
    d, _ = clip
    args = ["animate", "--ckpt", str(ckpt), "--first", str(d / "frame_000.pgm"), "--steps", "2"]
    main(args + ["--out", str(tmp_path / "a")])
    main(args + ["--out", str(tmp_path / "b")])
    main(args + ["--out", str(tmp_path / "c"), "--seed", "3"])
    ha = [r["sha256"] for r in _outputs(tmp_path / "a")]
    assert ha == [r["sha256"] for r in _outputs(tmp_path / "b")]
    assert ha != [r["sha256"] for r in _outputs(tmp_path / "c")]
    assert len(ha) == 8 and not (tmp_path / "a" / "frame_000.pgm").exists()


def test_expand_continues_a_prefix(ckpt, clip, tmp_path):
    _, video = clip
    write_sequence(tmp_path / "prefix", video[:4])
    assert main(["expand", "--ckpt", str(ckpt), "--frames", str(tmp_path / "prefix"), "--steps", "2",
                 "--out", str(tmp_path / "x")]) == 0
    assert [p.name for p in sorted((tmp_path / "x").glob("*.pgm"))][0] == "frame_004.pgm"
    assert len(list((tmp_path / "x").glob("*.pgm"))) == 5


def test_slowmo_reaches_128_frames_and_keeps_inputs(ckpt, clip, tmp_path):
    _, video = clip
    write_sequence(tmp_path / "seed", video[::2][:4])
    assert main(["slowmo", "--ckpt", str(ckpt), "--frames", str(tmp_path / "seed"), "--levels", "2",
                 "--strides", "4,8", "--steps", "1", "--out", str(tmp_path / "s")]) == 0
    frames = read_sequence(tmp_path / "s")
    assert frames.shape[0] == 128
    seeds = read_sequence(tmp_path / "seed")
    for i in range(4):
        assert np.array_equal(frames[32 * i], seeds[i])


def test_eval_report(ckpt, tmp_path, capsys):
    assert main(["eval", "--ckpt", str(ckpt), "--n", "2", "--steps", "2", "--out", str(tmp_path / "e")]) == 0
    report = json.loads((tmp_path / "e" / "eval_interp.json").read_text())
    assert report["n"] == 2 and set(report) >= {"model", "copy_nearest_ref", "linear_interp"}
    assert "psnr" in report["model"] and "mid_psnr" in report["model"]


def test_flops_table(capsys):
    assert main(["flops", "--frames", "13"]) == 0
    out = capsys.readouterr().out
    assert "asym-both" in out and "out of budget" in out


def test_errors_exit_with_code_two(ckpt, tmp_path, capsys):
    bad = tmp_path / "small.pgm"
    write_pgm(bad, np.zeros((8, 8)))
    assert main(["animate", "--ckpt", str(ckpt), "--first", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "error:" in capsys.readouterr().err
    assert main(["animate", "--ckpt", str(tmp_path / "none.ckpt"), "--first", str(bad)]) == 2
    cfg = tmp_path / "c.json"
    cfg.write_text('{"nope": 1}')
    assert main(["train", "--config", str(cfg)]) == 2


def test_relative_outputs_use_the_environment_root(ckpt, clip, tmp_path, monkeypatch):
    d, _ = clip
    monkeypatch.setenv("ASYMVID_OUT", str(tmp_path / "root"))
    main(["animate", "--ckpt", str(ckpt), "--first", str(d / "frame_000.pgm"), "--steps", "1", "--out", "rel"])
    assert (tmp_path / "root" / "rel" / "outputs.jsonl").exists()
