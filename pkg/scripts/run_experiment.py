"""Full sweep: anchor plus both strategies over their qp ladders.

    python scripts/run_experiment.py --config configs/default.cfg --out runs/default
"""

import argparse
import logging
from pathlib import Path

from nerfstream.config import load_config
from nerfstream.eval import compare_curves, export_plot, spearman
from nerfstream.pipeline import run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", type=Path, default=Path(__file__).parents[1] / "configs" / "default.cfg")
    ap.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    ap.add_argument("--out", type=Path, default=Path("runs/default"))
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s: %(message)s")

    cfg = load_config(args.config, args.overrides)
    exp = run_experiment(cfg, args.out, workers=args.workers)
    curves = {c.strategy: c for c in exp.curves()}
    export_plot(list(curves.values()), args.out / "rd.svg")

    print(f"anchor {exp.anchor.mean_psnr:.2f} dB ({exp.anchor.total_bits} bits, not streamable)")
    for tag, c in sorted(curves.items()):
        pts = "  ".join(f"qp{p.qp}: {p.rate:.4f} bpp {p.psnr:.2f} dB" for p in c.points)
        print(f"{tag:20s} rho {spearman(c.rates, c.psnrs):+.2f}  {pts}")
    names = sorted(curves)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            r = compare_curves(curves[a], curves[b])
            print(f"{a} vs {b}: {r.status}" + (f", {r.gap_db:+.2f} dB" if r.comparable else ""))
    for tag, qp, msg in exp.failures:
        print(f"FAILED {tag} qp {qp}: {msg}")


if __name__ == "__main__":
    main()
