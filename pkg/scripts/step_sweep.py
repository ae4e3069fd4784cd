"""Masked-frame PSNR of a checkpoint against the number of DDIM steps.

    python scripts/step_sweep.py --ckpt runs/default/final.ckpt [--steps 5 10 25 50] [--task interp]
"""

import argparse

from asymvid.evaluate import evaluate
from asymvid.train import load_weights


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--ckpt", required=True)
    ap.add_argument("--steps", type=int, nargs="+", default=[5, 10, 25, 50])
    ap.add_argument("--task", default="interp", choices=("interp", "i2v", "expand"))
    ap.add_argument("--n", type=int, default=64)
    args = ap.parse_args()
    w, cfg = load_weights(args.ckpt)
    print(f"{'steps':>5} {'PSNR dB':>8} {'SSIM':>7}")
    for s in args.steps:
        r = evaluate(w, cfg, task=args.task, n=args.n, steps=s)
        print(f"{s:>5} {r['model']['psnr']['mean']:8.3f} {r['model']['ssim']['mean']:7.4f}", flush=True)


if __name__ == "__main__":
    main()
