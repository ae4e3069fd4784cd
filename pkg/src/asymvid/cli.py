"""Command-line entry point: train, interpolate, animate, expand, slowmo, eval, flops.

Relative output paths are resolved against $ASYMVID_OUT (default: the
current directory).  Every file a command writes is listed with its sha256 in
``outputs.jsonl`` next to it.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig
from .costs import cost_table, format_table
from .errors import ConfigError
from .evaluate import evaluate
from .frames_io import read_pgm, read_sequence, write_sequence
from .masking import Task, hierarchical_expand, sample_mask
from .pipeline import generate
from .rng import STREAM_SAMPLE, Rng
from .train import load_weights, sha256_file, train

OUT_ENV = "ASYMVID_OUT"


def out_path(p: str | Path) -> Path:
    p = Path(p)
    if p.is_absolute():
        return p
    return Path(os.environ.get(OUT_ENV, ".")) / p


def _record_outputs(out_dir: Path, paths: list[Path], command: str, extra: dict | None = None) -> None:
    with (out_dir / "outputs.jsonl").open("a") as f:
        for p in paths:
            rec = {"command": command, "path": p.name, "sha256": sha256_file(p), **(extra or {})}
            f.write(json.dumps(rec, sort_keys=True) + "\n")


def _model(args):
    w, cfg = load_weights(args.ckpt)
    return w, cfg


def _check_frame(frame: np.ndarray, cfg: RunConfig) -> None:
    res = cfg.plan.res_high[-1]
    if frame.shape != (res, res, 1):
        raise ConfigError(f"frame of shape {frame.shape[:2]} but the checkpoint generates {res}x{res}")


def _window(cfg: RunConfig, given: dict[int, np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    K = cfg.plan.frames[-1]
    res = cfg.plan.res_high[-1]
    pixels = np.zeros((1, K, res, res, 1), dtype=np.float32)
    ref = np.zeros((1, K), dtype=bool)
    for k, f in given.items():
        _check_frame(f, cfg)
        pixels[0, k] = f
        ref[0, k] = True
    return pixels, ref


def cmd_train(args) -> int:
    cfg = RunConfig.load(args.config)
    cfg.check_asymmetry()
    out = out_path(args.out or cfg.output_dir)

    def progress(rec):
        if rec["step"] % args.print_every == 0:
            print(f"step {rec['step']:6d} {rec['stage']:>4} loss {rec['loss']:.4f} lr {rec['lr']:.2e}", flush=True)

    res = train(cfg, out, resume=args.resume, force=args.force, progress=progress)
    print(f"finished in {res.seconds:.1f}s; final checkpoint {res.final_checkpoint}")
    return 0


def cmd_interpolate(args) -> int:
    w, cfg = _model(args)
    K = cfg.plan.frames[-1]
    pixels, ref = _window(cfg, {0: read_pgm(args.first), K - 1: read_pgm(args.last)})
    gen = generate(w, cfg, pixels, ref, steps=args.steps, cfg_scale=1.0, rng=Rng(args.seed, STREAM_SAMPLE))
    out = out_path(args.out)
    paths = write_sequence(out, gen[0])
    _record_outputs(out, paths, "interpolate", {"steps": args.steps, "seed": args.seed})
    print(f"wrote {len(paths)} frames ({K - 2} generated) to {out}")
    return 0


def cmd_animate(args) -> int:
    w, cfg = _model(args)
    pixels, ref = _window(cfg, {0: read_pgm(args.first)})
    gen = generate(w, cfg, pixels, ref, steps=args.steps, cfg_scale=args.cfg, rng=Rng(args.seed, STREAM_SAMPLE))
    out = out_path(args.out)
    paths = write_sequence(out, gen[0, 1:], start=1)
    _record_outputs(out, paths, "animate", {"steps": args.steps, "seed": args.seed, "cfg": args.cfg})
    print(f"wrote {len(paths)} generated frames to {out}")
    return 0


def cmd_expand(args) -> int:
    w, cfg = _model(args)
    K = cfg.plan.frames[-1]
    given = read_sequence(args.frames)
    p = len(given)
    sample_mask(Task.expansion(p), K)  # validates the prefix length
    pixels, ref = _window(cfg, {i: f for i, f in enumerate(given)})
    gen = generate(w, cfg, pixels, ref, steps=args.steps, cfg_scale=1.0, rng=Rng(args.seed, STREAM_SAMPLE))
    out = out_path(args.out)
    paths = write_sequence(out, gen[0, p:], start=p)
    _record_outputs(out, paths, "expand", {"steps": args.steps, "seed": args.seed})
    print(f"wrote {len(paths)} continuation frames to {out}")
    return 0


def model_engine(w, cfg: RunConfig, steps: int, seed: int):
    """Window filler for hierarchical expansion backed by the trained model."""
    calls = [0]

    def engine(window, ref):
        shape = next(f for f in window if f is not None).shape
        pixels = np.stack([f if f is not None else np.zeros(shape, np.float32) for f in window])[None]
        gen = generate(w, cfg, pixels, np.asarray(ref)[None], steps=steps, cfg_scale=1.0,
                       rng=Rng(seed, STREAM_SAMPLE).child(calls[0]))
        calls[0] += 1
        return list(gen[0])

    return engine


def cmd_slowmo(args) -> int:
    w, cfg = _model(args)
    frames = list(read_sequence(args.frames))
    for f in frames:
        _check_frame(f, cfg)
    K = cfg.plan.frames[-1]
    strides = [int(s) for s in args.strides.split(",")] if args.strides else None
    seq = hierarchical_expand(frames, K, args.levels, model_engine(w, cfg, args.steps, args.seed), strides)
    out = out_path(args.out)
    paths = write_sequence(out, np.stack(seq))
    _record_outputs(out, paths, "slowmo", {"levels": args.levels, "steps": args.steps, "seed": args.seed})
    print(f"expanded {len(frames)} -> {len(seq)} frames in {out}")
    return 0


def cmd_eval(args) -> int:
    w, cfg = _model(args)
    report = evaluate(w, cfg, task=args.task, n=args.n, steps=args.steps, cfg_scale=args.cfg)
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        out = out_path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"eval_{args.task}.json"
        path.write_text(text + "\n")
        _record_outputs(out, [path], "eval", {"task": args.task})
    print(text)
    return 0


def cmd_flops(args) -> int:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    res = args.res or 2 * cfg.data.canvas
    budget = int(args.budget_mib * 2 ** 20)
    for frames in args.frames:
        print(format_table(cost_table(cfg, frames, res, steps=args.steps, budget_bytes=budget)))
        print()
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="asymvid", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run a training plan")
    p.add_argument("--config", required=True)
    p.add_argument("--resume")
    p.add_argument("--force", action="store_true", help="accept a checkpoint written for another config")
    p.add_argument("--out", help="output directory (default: config output_dir)")
    p.add_argument("--print-every", type=int, default=100)
    p.set_defaults(fn=cmd_train)

    def gen_args(p, cfg_default=None):
        p.add_argument("--ckpt", required=True)
        p.add_argument("--steps", type=int, default=25)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default="generated")
        if cfg_default is not None:
            p.add_argument("--cfg", type=float, default=cfg_default)

    p = sub.add_parser("interpolate", help="generate the frames between a first and a last frame")
    gen_args(p)
    p.add_argument("--first", required=True)
    p.add_argument("--last", required=True)
    p.set_defaults(fn=cmd_interpolate)

    p = sub.add_parser("animate", help="generate a clip from its first frame")
    gen_args(p, cfg_default=2.5)
    p.add_argument("--first", required=True)
    p.set_defaults(fn=cmd_animate)

    p = sub.add_parser("expand", help="continue a clip from its leading frames")
    gen_args(p)
    p.add_argument("--frames", required=True, help="directory of .pgm prefix frames")
    p.set_defaults(fn=cmd_expand)

    p = sub.add_parser("slowmo", help="recursive frame densification")
    gen_args(p)
    p.add_argument("--frames", required=True, help="directory of .pgm frames")
    p.add_argument("--levels", type=int, required=True)
    p.add_argument("--strides", help="comma-separated per-level strides for segment mode")
    p.set_defaults(fn=cmd_slowmo)

    p = sub.add_parser("eval", help="masked-frame PSNR/SSIM against baselines")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--task", choices=("interp", "i2v", "expand"), default="interp")
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--steps", type=int, default=25)
    p.add_argument("--cfg", type=float, default=None)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("flops", help="analytic cost table of the design variants")
    p.add_argument("--config")
    p.add_argument("--frames", type=int, nargs="+", default=[9, 13])
    p.add_argument("--res", type=int, default=None, help="high resolution in pixels (default 2x canvas)")
    p.add_argument("--steps", type=int, default=25)
    p.add_argument("--budget-mib", type=float, default=192.0)
    p.set_defaults(fn=cmd_flops)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, FileNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
