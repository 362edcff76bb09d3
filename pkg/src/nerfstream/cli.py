"""Command-line entry point.

Exit codes: 0 success, 1 runtime failure (the failing stage is named), 2 usage error.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import __version__

log = logging.getLogger("nerfstream")

COMMANDS = ("capture", "train", "encode-params", "decode-params", "encode-images", "decode-images", "run", "plot")


class UsageError(Exception):
    pass


class StageError(Exception):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {type(cause).__name__}: {cause}")
        self.stage = stage


@dataclass
class Command:
    name: str
    config: Path | None = None
    overrides: list[str] = field(default_factory=list)
    out: Path = Path("out")
    workers: int = 1
    seed: int | None = None
    options: dict = field(default_factory=dict)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key = value experiment file")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: out)")
    common.add_argument("--workers", type=int, default=1, help="parallel qp points for `run`")
    common.add_argument("--seed", type=int, help="training seed (overrides train.seed)")

    p = _Parser(prog="nerfstream", description="Radiance-field streaming experiments.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("capture", parents=[common], help="render training and test views of the scene")
    s = sub.add_parser("train", parents=[common], help="train a model on a captured dataset")
    s.add_argument("--data", type=Path, required=True, help="dataset directory (from capture)")
    s = sub.add_parser("encode-params", parents=[common], help="compress a checkpoint")
    s.add_argument("--checkpoint", type=Path, required=True)
    s.add_argument("--qp", type=int, required=True)
    s.add_argument("--quantizer", choices=("uniform", "dependent"))
    s = sub.add_parser("decode-params", parents=[common], help="decode a parameter bitstream to a checkpoint")
    s.add_argument("--bitstream", type=Path, required=True)
    s = sub.add_parser("encode-images", parents=[common], help="compress a captured dataset")
    s.add_argument("--data", type=Path, required=True)
    s.add_argument("--qp", type=int, required=True)
    s.add_argument("--mode", choices=("intra", "inter"), default="inter")
    s = sub.add_parser("decode-images", parents=[common], help="decode an image bitstream to a dataset")
    s.add_argument("--bitstream", type=Path, required=True)
    sub.add_parser("run", parents=[common], help="anchor plus every strategy over the qp ladders")
    s = sub.add_parser("plot", parents=[common], help="plot rd.csv from a run directory")
    s.add_argument("--results", type=Path, required=True, help="run directory or CSV file")
    return p


def parse_args(argv) -> Command:
    ns = _build_parser().parse_args(list(argv))
    if ns.config is not None and not ns.config.is_file():
        raise UsageError(f"config file not found: {ns.config}")
    if ns.workers < 1:
        raise UsageError("--workers must be >= 1")
    opts = {k: v for k, v in vars(ns).items() if k not in ("command", "config", "overrides", "out", "workers", "seed")}
    return Command(ns.command, ns.config, ns.overrides, ns.out, ns.workers, ns.seed, opts)


def resolve_config(cmd: Command):
    from .config import ConfigError, load_config

    try:
        cfg = load_config(cmd.config, cmd.overrides)
    except ConfigError as e:
        raise UsageError(str(e)) from None
    except ValueError as e:
        raise UsageError(f"invalid configuration: {e}") from None
    if cmd.seed is not None:
        cfg = replace(cfg, train=replace(cfg.train, seed=cmd.seed))
    return cfg


def write_manifest(cmd: Command, cfg, argv) -> Path:
    from .config import dump_config

    cmd.out.mkdir(parents=True, exist_ok=True)
    path = cmd.out / "manifest.cfg"
    head = [
        f"# nerfstream {__version__}",
        f"# command: nerfstream {' '.join(argv)}",
        "# resolved configuration; rerun with --config on this file",
    ]
    path.write_text("\n".join(head) + "\n" + dump_config(cfg))
    return path


class _Stage:
    def __init__(self, name):
        self.name = name

    def __enter__(self):
        log.info("stage %s", self.name)
        self.t0 = time.perf_counter()

    def __exit__(self, et, ev, tb):
        if ev is not None and not isinstance(ev, (UsageError, StageError)):
            raise StageError(self.name, ev) from ev
        log.info("stage %s done in %.1fs", self.name, time.perf_counter() - self.t0)


def execute(cmd: Command, argv=()) -> int:
    from . import image_codec, param_codec, pipeline
    from .eval import export_plot, import_csv
    from .field import load_checkpoint, save_checkpoint
    from .scene import CapturedDataset, load_dataset, save_dataset, write_image

    cfg = resolve_config(cmd)
    write_manifest(cmd, cfg, argv)
    out = cmd.out
    o = cmd.options

    if cmd.name == "capture":
        with _Stage("capture"):
            prep = pipeline.prepare(cfg)
            save_dataset(prep.train_set, out / "train")
            save_dataset(CapturedDataset(prep.test_truth, prep.test_poses, cfg.width, cfg.height), out / "test")
    elif cmd.name == "train":
        with _Stage("load"):
            data = load_dataset(o["data"])
        with _Stage("train"):
            model = pipeline.train(pipeline.template_model(cfg), data, cfg.train)
            save_checkpoint(model, out / "model.nrf")
    elif cmd.name == "encode-params":
        with _Stage("encode-params"):
            model = load_checkpoint(o["checkpoint"], pipeline.template_model(cfg))
            bs = param_codec.encode_model(model, o["qp"], o["quantizer"] or cfg.quantizer)
            (out / "params.nncb").write_bytes(bs.data)
            log.info("%d bits", bs.bit_length)
    elif cmd.name == "decode-params":
        with _Stage("decode-params"):
            model = param_codec.decode_model(o["bitstream"].read_bytes(), pipeline.template_model(cfg))
            save_checkpoint(model, out / "model.nrf")
    elif cmd.name == "encode-images":
        with _Stage("encode-images"):
            data = load_dataset(o["data"])
            bs = image_codec.encode_sequence(data.images, data.poses, o["mode"], o["qp"])
            (out / "images.ivsb").write_bytes(bs.data)
            log.info("%d bits", bs.bit_length)
    elif cmd.name == "decode-images":
        with _Stage("decode-images"):
            images, poses = image_codec.decode_sequence(o["bitstream"].read_bytes())
            h, w = images[0].shape[:2]
            save_dataset(CapturedDataset(images, poses, w, h), out / "decoded")
    elif cmd.name == "run":
        with _Stage("run"):
            exp = pipeline.run_experiment(cfg, out, workers=cmd.workers)
        with _Stage("plot"):
            export_plot(exp.curves(), out / "rd.svg")
        if exp.failures:
            for tag, qp, msg in exp.failures:
                log.error("%s qp %s: %s", tag, qp, msg)
            raise StageError("run", RuntimeError(f"{len(exp.failures)} qp point(s) failed"))
    elif cmd.name == "plot":
        with _Stage("plot"):
            src = o["results"]
            csv_path = src / "rd.csv" if src.is_dir() else src
            export_plot(import_csv(csv_path), out / "rd.svg")
    return 0


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    logging.basicConfig(level=logging.INFO if "-v" in argv or "--verbose" in argv else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cmd = parse_args(argv)
        return execute(cmd, argv)
    except UsageError as e:
        print(f"nerfstream: error: {e}", file=sys.stderr)
        return 2
    except StageError as e:
        print(f"nerfstream: {e}", file=sys.stderr)
        return 1
    except SystemExit as e:  # --help / --version
        return int(e.code or 0)


if __name__ == "__main__":
    sys.exit(main())
