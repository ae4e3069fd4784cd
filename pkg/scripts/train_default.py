"""Train the default plan and print the time spent in each stage.

    python scripts/train_default.py --out runs/default [--config scripts/default_config.json]
"""

import argparse
import json
from pathlib import Path

from asymvid.config import RunConfig
from asymvid.train import train


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="JSON run config (default: built-in defaults)")
    ap.add_argument("--out", default="runs/default")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--print-every", type=int, default=250)
    args = ap.parse_args()
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg = RunConfig.from_dict({**json.loads(cfg.dumps()), "seed": args.seed})
    cfg.check_asymmetry()

    def progress(rec):
        if rec["step"] % args.print_every == 0:
            print(f"step {rec['step']:6d}  {rec['stage']:>3}  loss {rec['loss']:.4f}  lr {rec['lr']:.2e}", flush=True)

    res = train(cfg, Path(args.out), progress=progress)
    print(f"{cfg.training_plan().total_steps} steps in {res.seconds / 60:.1f} min -> {res.final_checkpoint}")


if __name__ == "__main__":
    main()
