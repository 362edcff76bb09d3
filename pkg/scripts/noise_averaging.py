"""Train on captures corrupted by uniform noise and compare the rendered
held-out views with the corrupted captures themselves.

    python scripts/noise_averaging.py --amplitudes 4 8 16
"""

import argparse
import logging
from pathlib import Path

from nerfstream.config import load_config
from nerfstream.eval import mean_psnr, psnr
from nerfstream.pipeline import prepare, run_anchor


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", type=Path, default=Path(__file__).parents[1] / "configs" / "default.cfg")
    ap.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    ap.add_argument("--amplitudes", type=float, nargs="+", default=[8.0], help="noise half-widths in 8-bit levels")
    args = ap.parse_args()
    logging.basicConfig(level=logging.WARNING)

    base = load_config(args.config, args.overrides)
    clean = prepare(base).train_set.images
    print(f"{'amplitude':>9s} {'captures dB':>11s} {'rendered dB':>11s} {'gain dB':>8s}")
    for a in args.amplitudes:
        cfg = load_config(args.config, args.overrides + [f"strategy.noise_amplitude={a / 255!r}"])
        prep = prepare(cfg)
        captured = mean_psnr([psnr(n, c) for n, c in zip(prep.train_set.images, clean)])
        res, _ = run_anchor(cfg, prep)
        print(f"{a:9.1f} {captured:11.2f} {res.mean_psnr:11.2f} {res.mean_psnr - captured:+8.2f}")


if __name__ == "__main__":
    main()
