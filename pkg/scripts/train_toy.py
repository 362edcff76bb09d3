"""Train the toy field once and report held-out PSNR and training time.

    python scripts/train_toy.py --set train.iterations=2000
"""

import argparse
import logging
from pathlib import Path

from nerfstream.config import load_config
from nerfstream.field import save_checkpoint
from nerfstream.pipeline import prepare, run_anchor


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", type=Path, default=Path(__file__).parents[1] / "configs" / "default.cfg")
    ap.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    ap.add_argument("--checkpoint", type=Path, help="write the trained model here")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s: %(message)s")

    cfg = load_config(args.config, args.overrides)
    res, model = run_anchor(cfg, prepare(cfg))
    print(f"{model.num_params()} parameters, {cfg.train.iterations} iterations in {res.timings['train']:.0f} s")
    print("held-out PSNR per view:", " ".join(f"{p:.2f}" for p in res.psnr))
    print(f"mean {res.mean_psnr:.2f} dB")
    if args.checkpoint:
        save_checkpoint(model, args.checkpoint)


if __name__ == "__main__":
    main()
