"""CLI behavior: exit codes, determinism, and end-to-end command flows."""
import json
from pathlib import Path

import numpy as np
import pytest

from gencomp.cli import main
from gencomp.synth import SceneSpec, generate_sample
from gencomp.video import write_frames


def _read_tree_bytes(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file()}


def _tiny_model_dict():
    return {"d_model": 32, "n_heads": 2, "fusion_depth": 1, "bp_depth": 1,
            "T_diffusion": 10, "fg_crop": [8, 8]}


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "corpus"
    assert main(["gen-data", "--n", "2", "--seed", "3", "--out", str(out)]) == 0
    return out


@pytest.fixture(scope="module")
def ckpt_path(tmp_path_factory, corpus_dir):
    root = tmp_path_factory.mktemp("cli_train")
    cfg = {"steps": 3, "batch_size": 1, "seed": 0, "model": _tiny_model_dict()}
    cfg_path = root / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    out = root / "model.gcmp"
    assert main(["train", "--config", str(cfg_path), "--corpus", str(corpus_dir),
                 "--out", str(out)]) == 0
    return out


def test_gen_data_deterministic(tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    assert main(["gen-data", "--n", "2", "--seed", "7", "--out", str(a)]) == 0
    assert main(["gen-data", "--n", "2", "--seed", "7", "--out", str(b)]) == 0
    ta, tb = _read_tree_bytes(a), _read_tree_bytes(b)
    assert ta.keys() == tb.keys()
    for k in ta:
        if k.endswith("manifest.jsonl"):
            # manifests embed absolute paths; compare with roots stripped
            assert (ta[k].decode().replace(str(a), "") ==
                    tb[k].decode().replace(str(b), ""))
        else:
            assert ta[k] == tb[k], f"{k} differs between identical runs"


def test_unknown_flag_exits_1(capsys):
    assert main(["gen-data", "--n", "2", "--seed", "0", "--frobnicate"]) == 1
    err = capsys.readouterr().err
    assert "usage" in err and "error" in err


def test_missing_required_flag_exits_1(capsys):
    assert main(["gen-data", "--n", "2"]) == 1
    assert "seed" in capsys.readouterr().err


def test_unknown_command_exits_1():
    assert main(["transmogrify"]) == 1


def test_train_writes_checkpoint_and_curve(ckpt_path, capsys):
    assert ckpt_path.exists()
    assert ckpt_path.with_suffix(".curve.csv").exists()
    lines = ckpt_path.with_suffix(".curve.csv").read_text().splitlines()
    assert lines[0] == "step,loss,ema"
    assert len(lines) == 1 + 3


def test_train_bad_config_exits_1(tmp_path, corpus_dir, capsys):
    cfg_path = tmp_path / "bad.json"
    cfg_path.write_text(json.dumps({"steps": 0, "model": _tiny_model_dict()}))
    assert main(["train", "--config", str(cfg_path), "--corpus", str(corpus_dir),
                 "--out", str(tmp_path / "m.gcmp")]) == 1
    assert "error" in capsys.readouterr().err


def test_eval_report_schema(ckpt_path, corpus_dir, tmp_path, capsys):
    report_path = tmp_path / "report.json"
    assert main(["eval", "--ckpt", str(ckpt_path), "--corpus", str(corpus_dir),
                 "--report", str(report_path), "--steps", "2"]) == 0
    report = json.loads(report_path.read_text())
    assert report["n"] == 2
    assert set(report) >= {"n", "psnr", "ssim", "adherence", "per_sample"}
    out = capsys.readouterr().out
    assert "psnr" in out and "per_sample" not in out


def test_eval_missing_corpus_exits_1(ckpt_path, tmp_path, capsys):
    assert main(["eval", "--ckpt", str(ckpt_path), "--corpus",
                 str(tmp_path / "nothing"), "--steps", "1"]) == 1


def test_compose_and_remove_flow(ckpt_path, tmp_path):
    scene = generate_sample(SceneSpec(
        n_frames=4, height=16, width=16, radius=2,
        path_start=(4.0, 8.0), path_end=(12.0, 8.0)))
    write_frames(scene.background, tmp_path / "bg")
    write_frames(scene.fg_centered, tmp_path / "fg")
    write_frames(scene.mask, tmp_path / "mask")
    control = {"mode": "drag", "scale": 1.0,
               "points": [{"frame": 0, "x": 4.0, "y": 8.0},
                          {"frame": 3, "x": 12.0, "y": 8.0}]}
    (tmp_path / "control.json").write_text(json.dumps(control))

    out = tmp_path / "composed"
    assert main(["compose", "--bg", str(tmp_path / "bg"), "--fg", str(tmp_path / "fg"),
                 "--control", str(tmp_path / "control.json"), "--ckpt", str(ckpt_path),
                 "--steps", "2", "--out", str(out)]) == 0
    assert (out / "frame_00000.png").exists()
    assert len(list(out.glob("frame_*.png"))) == 4

    removed = tmp_path / "removed"
    assert main(["remove", "--bg", str(tmp_path / "bg"), "--mask", str(tmp_path / "mask"),
                 "--ckpt", str(ckpt_path), "--steps", "2", "--out", str(removed)]) == 0
    assert len(list(removed.glob("frame_*.png"))) == 4


def test_compose_corrupt_control_exits_1(ckpt_path, tmp_path, capsys):
    scene = generate_sample(SceneSpec(
        n_frames=2, height=16, width=16, radius=2,
        path_start=(5.0, 8.0), path_end=(10.0, 8.0)))
    write_frames(scene.background, tmp_path / "bg")
    write_frames(scene.fg_centered, tmp_path / "fg")
    (tmp_path / "control.json").write_text("{broken")
    assert main(["compose", "--bg", str(tmp_path / "bg"), "--fg", str(tmp_path / "fg"),
                 "--control", str(tmp_path / "control.json"), "--ckpt", str(ckpt_path),
                 "--out", str(tmp_path / "out")]) == 1
    assert "error" in capsys.readouterr().err


def test_missing_checkpoint_exits_1(corpus_dir, tmp_path, capsys):
    assert main(["eval", "--ckpt", str(tmp_path / "none.gcmp"),
                 "--corpus", str(corpus_dir)]) == 1
