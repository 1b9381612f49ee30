"""Command-line entry points: data generation, training, compositing,
removal, evaluation, and the HTTP service.

Exit codes: 0 success, 1 user error (bad arguments or inputs), 2 internal.
"""
from __future__ import annotations

import argparse
import json
import sys
import traceback
from pathlib import Path

import numpy as np

from . import pipeline, service, video
from .checkpoint import load_checkpoint, save_checkpoint
from .control import ControlSpec
from .errors import (
    ConfigError,
    EmptyRegionError,
    EmptyVideoError,
    InvalidInputError,
    NothingToInsertError,
    SpecViolationError,
)
from .synth import build_corpus, load_corpus, write_corpus
from .train import TrainConfig, evaluate, train

_USER_ERRORS = (
    InvalidInputError,
    EmptyVideoError,
    EmptyRegionError,
    SpecViolationError,
    ConfigError,
    NothingToInsertError,
    FileNotFoundError,
    NotADirectoryError,
    json.JSONDecodeError,
)


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad flags; the contract wants 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _build_parser() -> _Parser:
    p = _Parser(prog="gencomp", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-data", help="generate a synthetic training corpus")
    g.add_argument("--n", type=int, required=True, help="number of samples")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", default=None, help="corpus directory (default: data root / corpus)")

    t = sub.add_parser("train", help="train a model on a generated corpus")
    t.add_argument("--config", required=True, help="JSON training config")
    t.add_argument("--corpus", required=True, help="corpus directory from gen-data")
    t.add_argument("--out", default=None, help="checkpoint path (default: data root / model.gcmp)")

    c = sub.add_parser("compose", help="composite a foreground into a background")
    c.add_argument("--bg", required=True, help="background video (PNG dir or .gctv)")
    c.add_argument("--fg", required=True, help="foreground video (PNG dir or .gctv)")
    c.add_argument("--control", required=True, help="trajectory/scale ControlSpec JSON file")
    c.add_argument("--ckpt", required=True, help="model checkpoint (.gcmp)")
    c.add_argument("--steps", type=int, default=pipeline.DEFAULT_STEPS)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--fg-mask", default=None, help="optional foreground mask video")
    c.add_argument("--out", default=None, help="output directory (default: data root / compose_out)")

    r = sub.add_parser("remove", help="erase the region under a mask")
    r.add_argument("--bg", required=True, help="background video (PNG dir or .gctv)")
    r.add_argument("--mask", required=True, help="region mask video (PNG dir or .gctv)")
    r.add_argument("--ckpt", required=True, help="model checkpoint (.gcmp)")
    r.add_argument("--steps", type=int, default=pipeline.DEFAULT_STEPS)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out", default=None, help="output directory (default: data root / remove_out)")

    e = sub.add_parser("eval", help="reconstruction metrics on a corpus")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--corpus", required=True)
    e.add_argument("--report", default=None, help="JSON report path (default: data root / eval.json)")
    e.add_argument("--steps", type=int, default=pipeline.DEFAULT_STEPS)
    e.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("serve", help="run the HTTP job service")
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=8000)
    s.add_argument("--ckpt", default=None, help="default checkpoint for submitted jobs")
    s.add_argument("--data-dir", default=None)

    return p


def _cmd_gen_data(args) -> int:
    out = Path(args.out) if args.out else service.data_root() / "corpus"
    samples = build_corpus(args.n, seed=args.seed)
    write_corpus(samples, out)
    print(f"wrote {len(samples)} samples to {out}")
    return 0


def _cmd_train(args) -> int:
    with open(args.config) as fh:
        cfg = TrainConfig.from_dict(json.load(fh))
    corpus = load_corpus(args.corpus)
    out = Path(args.out) if args.out else service.data_root() / "model.gcmp"
    out.parent.mkdir(parents=True, exist_ok=True)

    def progress(step, loss, ema):
        if step % 100 == 0 or step == cfg.steps - 1:
            print(f"step {step:5d}  loss {loss:.5f}  ema {ema:.5f}", flush=True)

    model, curve = train(cfg, corpus, progress=progress)
    save_checkpoint(out, model, schedule_kind=cfg.schedule_kind, seed=cfg.seed, step=cfg.steps)
    curve_path = out.with_suffix(".curve.csv")
    curve.save_csv(curve_path)
    print(f"checkpoint: {out}\nloss curve: {curve_path}\nfinal ema: {curve.final_ema:.5f}")
    return 0


def _cmd_compose(args) -> int:
    bg = video.load_video(args.bg)
    fg = video.load_video(args.fg)
    with open(args.control) as fh:
        control = ControlSpec.from_json(fh.read())
    fg_mask = video.load_video(args.fg_mask, as_mask=True) if args.fg_mask else None
    model, meta = load_checkpoint(args.ckpt)
    result = pipeline.compose(bg, fg, control, model, steps=args.steps, seed=args.seed,
                              fg_mask=fg_mask, schedule_kind=meta.get("schedule_kind", "linear"))
    out = Path(args.out) if args.out else service.data_root() / "compose_out"
    video.write_frames(result.output, out)
    print(f"wrote {result.output.shape[0]} frames to {out}")
    return 0


def _cmd_remove(args) -> int:
    bg = video.load_video(args.bg)
    region = video.load_video(args.mask, as_mask=True)
    model, meta = load_checkpoint(args.ckpt)
    result = pipeline.remove(bg, region, model, steps=args.steps, seed=args.seed,
                             schedule_kind=meta.get("schedule_kind", "linear"))
    out = Path(args.out) if args.out else service.data_root() / "remove_out"
    video.write_frames(result.output, out)
    print(f"wrote {result.output.shape[0]} frames to {out}")
    return 0


def _cmd_eval(args) -> int:
    model, meta = load_checkpoint(args.ckpt)
    corpus = load_corpus(args.corpus)
    report = evaluate(model, corpus, steps=args.steps, seed=args.seed,
                      schedule_kind=meta.get("schedule_kind", "linear"))
    out = Path(args.report) if args.report else service.data_root() / "eval.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    print(f"report: {out}")
    print(json.dumps({k: v for k, v in report.items() if k != "per_sample"},
                     indent=2, sort_keys=True))
    return 0


def _cmd_serve(args) -> int:
    service.serve(port=args.port, checkpoint=args.ckpt, data_dir=args.data_dir,
                  host=args.host)
    return 0


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "train": _cmd_train,
    "compose": _cmd_compose,
    "remove": _cmd_remove,
    "eval": _cmd_eval,
    "serve": _cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except _USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
