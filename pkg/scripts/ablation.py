"""Planning signal versus unconditional token: train both (or reuse finished runs) and
compare masked-frame interpolation PSNR/SSIM with the model-free baselines.

    python scripts/ablation.py --root runs/ablation [--n 64] [--steps 25]
"""

import argparse
import json
from pathlib import Path

from asymvid.config import RunConfig
from asymvid.evaluate import evaluate
from asymvid.train import load_weights, train


def trained(cfg: RunConfig, out: Path) -> Path:
    final = out / "final.ckpt"
    if final.exists():
        print(f"reusing {final}")
    else:
        res = train(cfg, out)
        print(f"trained {out} in {res.seconds / 60:.1f} min")
    return final


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--root", default="runs/ablation")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--n", type=int, default=64)
    ap.add_argument("--steps", type=int, default=25)
    args = ap.parse_args()
    root = Path(args.root)
    rows = {}
    for mode in ("planner", "uncond"):
        ckpt = trained(RunConfig(seed=args.seed, cond_mode=mode), root / mode)
        w, cfg = load_weights(ckpt)
        rows[mode] = evaluate(w, cfg, task="interp", n=args.n, steps=args.steps)
    base = rows["planner"]
    table = {
        "planning signal": base["model"],
        "unconditional token": rows["uncond"]["model"],
        "copy nearest REF": base["copy_nearest_ref"],
        "linear blend": base["linear_interp"],
    }
    print(f"{'method':<22} {'PSNR dB':>14} {'SSIM':>8}")
    for name, s in table.items():
        print(f"{name:<22} {s['psnr']['mean']:7.2f} +- {s['psnr']['std']:4.2f} {s['ssim']['mean']:8.4f}")
    gap = base["model"]["psnr"]["mean"] - rows["uncond"]["model"]["psnr"]["mean"]
    print(f"gap planner - uncond: {gap:+.3f} dB")
    (root / "ablation.json").write_text(json.dumps({"gap_db": gap, **rows}, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
