"""Codec-only rate sweeps, no training of the pixel strategy.

Image codec: bits and reconstruction PSNR of the captured training views,
intra and inter, over a qp range. Parameter codec: bits and weight error of a
model (trained briefly, or loaded from --checkpoint) over a qp range.

    python scripts/codec_rd.py --image-qps 20 25 30 39 51 --param-qps -32 -28 -24 -20 -16
"""

import argparse
from dataclasses import replace
from pathlib import Path

import numpy as np

from nerfstream import image_codec, param_codec
from nerfstream.config import load_config
from nerfstream.eval import mean_psnr, psnr, rate_bpp
from nerfstream.field import load_checkpoint
from nerfstream.pipeline import prepare, template_model, train_model


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", type=Path, default=Path(__file__).parents[1] / "configs" / "default.cfg")
    ap.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    ap.add_argument("--image-qps", type=int, nargs="+", default=[25, 30, 39, 51])
    ap.add_argument("--param-qps", type=int, nargs="+", default=[-28, -24, -20, -16])
    ap.add_argument("--checkpoint", type=Path)
    ap.add_argument("--train-iterations", type=int, default=500, help="used when no checkpoint is given")
    args = ap.parse_args()

    cfg = load_config(args.config, args.overrides)
    prep = prepare(cfg)
    images, poses = prep.train_set.images, prep.train_set.poses
    n = len(images)
    print(f"image codec, {n} views {cfg.width}x{cfg.height}")
    for mode in image_codec.MODES:
        for qp in args.image_qps:
            bs = image_codec.encode_sequence(images, poses, mode, qp)
            out, _ = image_codec.decode_sequence(bs.data)
            q = mean_psnr([psnr(a, b) for a, b in zip(out, images)])
            print(f"  {mode:5s} qp {qp:3d}: {bs.bit_length:8d} bits {rate_bpp(bs.bit_length, n, cfg.width, cfg.height):.4f} bpp {q:6.2f} dB")

    if args.checkpoint:
        model = load_checkpoint(args.checkpoint, template_model(cfg))
    else:
        model = train_model(replace(cfg, train=replace(cfg.train, iterations=args.train_iterations)), prep)
    print(f"parameter codec, {model.num_params()} parameters")
    for kind in param_codec.KINDS:
        for qp in args.param_qps:
            bs = param_codec.encode_model(model, qp, kind)
            back = param_codec.decode_model(bs.data, template=model)
            err = max(float(np.abs(a - b).max()) for a, b in zip(model.tensors(), back.tensors()))
            mse = np.mean(np.concatenate([(a - b).ravel() ** 2 for a, b in zip(model.tensors(), back.tensors())]))
            print(f"  {kind:9s} qp {qp:3d}: {bs.bit_length:8d} bits, weight mse {mse:.2e}, max error {err:.2e}")


if __name__ == "__main__":
    main()
