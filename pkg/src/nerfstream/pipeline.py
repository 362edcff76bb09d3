"""End-to-end streaming strategies: parameter streaming, pixel streaming, and the anchor."""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import image_codec, param_codec
from .eval import RDCurve, build_curve, export_csv, mean_psnr, psnr
from .field import (
    EncodingConfig,
    RadianceFieldModel,
    RenderConfig,
    TrainConfig,
    camera_rays,
    init_model,
    synthesize_view,
    train,
    write_checkpoint,
)
from .scene import (
    AnalyticScene,
    CameraPose,
    CapturedDataset,
    TrajectorySpec,
    capture_dataset,
    generate_trajectory,
    make_scene,
    render_ground_truth,
    write_image,
)

log = logging.getLogger(__name__)

STRATEGIES = ("param_based", "pixel_based", "anchor")
DEFAULT_PARAM_LADDER = (-28, -24, -20, -16)
DEFAULT_PIXEL_LADDER = (25, 30, 39, 51)


@dataclass(frozen=True)
class SceneConfig:
    seed: int = 7
    primitive_count: int = 5
    background: tuple[float, float, float] = (1.0, 1.0, 1.0)


@dataclass(frozen=True)
class ModelConfig:
    L_pos: int = 6
    L_dir: int = 0
    main_width: int = 64
    main_depth: int = 4
    proposal_width: int = 32
    proposal_depth: int = 2
    # encoding box = 1.05 x the largest frustum extent seen from the scene centroid
    encoding_margin: float = 1.05


def _check_ladder(ladder: Sequence[int], name: str) -> tuple[int, ...]:
    ladder = tuple(int(q) for q in ladder)
    if not ladder:
        raise ValueError(f"{name} must not be empty")
    steps = np.diff(ladder)
    if len(ladder) > 1 and not (np.all(steps > 0) or np.all(steps < 0)):
        raise ValueError(f"{name} must be strictly monotone, got {ladder}")
    return ladder


@dataclass(frozen=True)
class ExperimentConfig:
    scene: SceneConfig = field(default_factory=SceneConfig)
    train_trajectory: TrajectorySpec = field(default_factory=lambda: TrajectorySpec("orbit360", 40))
    test_trajectory: TrajectorySpec = field(default_factory=lambda: TrajectorySpec("test_path", 12))
    width: int = 64
    height: int = 64
    train: TrainConfig = field(default_factory=TrainConfig)
    render: RenderConfig = field(default_factory=RenderConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    strategies: tuple[str, ...] = ("param_based", "pixel_based")
    codec_modes: tuple[str, ...] = ("inter", "intra")
    param_qp_ladder: tuple[int, ...] = DEFAULT_PARAM_LADDER
    pixel_qp_ladder: tuple[int, ...] = DEFAULT_PIXEL_LADDER
    quantizer: str = "dependent"
    # half-width of uniform noise added to captured training images (0 = pristine)
    noise_amplitude: float = 0.0
    gt_samples: int = 256

    def __post_init__(self):
        for s in self.strategies:
            if s not in STRATEGIES:
                raise ValueError(f"unknown strategy {s!r}")
        for m in self.codec_modes:
            if m not in image_codec.MODES:
                raise ValueError(f"unknown codec mode {m!r}")
        if self.quantizer not in param_codec.KINDS:
            raise ValueError(f"unknown quantizer {self.quantizer!r}")
        object.__setattr__(self, "param_qp_ladder", _check_ladder(self.param_qp_ladder, "param_qp_ladder"))
        object.__setattr__(self, "pixel_qp_ladder", _check_ladder(self.pixel_qp_ladder, "pixel_qp_ladder"))
        for q in self.param_qp_ladder:
            param_codec.check_qp(q)
        for q in self.pixel_qp_ladder:
            image_codec.qp_to_qstep(q)
        if self.noise_amplitude < 0:
            raise ValueError("noise_amplitude must be nonnegative")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class StrategyResult:
    strategy: str  # "anchor", "param_based", "pixel_based/inter", ...
    qp: int | None
    total_bits: int
    rendered: list[np.ndarray]
    psnr: list[float]
    timings: dict[str, float] = field(default_factory=dict)
    streamable: bool = True
    bitstream: bytes = field(default=b"", repr=False)

    @property
    def mean_psnr(self) -> float:
        return mean_psnr(self.psnr)

    def metrics(self) -> dict:
        return {
            "strategy": self.strategy,
            "qp": self.qp,
            "total_bits": self.total_bits,
            "mean_psnr_db": self.mean_psnr,
            "psnr_db": self.psnr,
            "view_count": len(self.rendered),
            "streamable": self.streamable,
            "timings_s": self.timings,
        }


@dataclass
class Prepared:
    """Everything shared by every strategy and qp point."""

    scene: AnalyticScene
    train_set: CapturedDataset
    test_poses: list[CameraPose]
    test_truth: list[np.ndarray]
    encoding: EncodingConfig
    capture_seconds: float = 0.0


def encoding_for(cfg: ExperimentConfig, scene: AnalyticScene, poses: Sequence[CameraPose]) -> EncodingConfig:
    """Center the encoding on the scene and scale it so every sample lands in the unit cube."""
    c = scene.centroid
    extent = 0.0
    for p in poses:
        o, d = camera_rays(p, cfg.width, cfg.height)
        for t in (cfg.render.t_near, cfg.render.t_far):
            extent = max(extent, float(np.abs(o + t * d - c).max()))
    return EncodingConfig(cfg.model.L_pos, cfg.model.L_dir, tuple(float(v) for v in c), extent * cfg.model.encoding_margin)


def add_noise(images: Sequence[np.ndarray], amplitude: float, seed: int) -> list[np.ndarray]:
    """Uniform noise in [-amplitude, amplitude], clipped back to [0, 1]."""
    rng = np.random.default_rng(seed)
    return [np.clip(im + rng.uniform(-amplitude, amplitude, im.shape), 0.0, 1.0) for im in images]


def prepare(cfg: ExperimentConfig) -> Prepared:
    t0 = time.perf_counter()
    scene = make_scene(cfg.scene.seed, cfg.scene.primitive_count, cfg.scene.background)
    render = replace(cfg.render, background=cfg.scene.background)
    train_poses = generate_trajectory(cfg.train_trajectory, scene, cfg.width, cfg.height)
    test_poses = generate_trajectory(cfg.test_trajectory, scene, cfg.width, cfg.height)
    train_set = capture_dataset(scene, train_poses, cfg.width, cfg.height, render)
    if cfg.noise_amplitude > 0:
        train_set = CapturedDataset(
            add_noise(train_set.images, cfg.noise_amplitude, cfg.scene.seed + 1), train_set.poses, cfg.width, cfg.height
        )
    truth = [render_ground_truth(scene, p, cfg.width, cfg.height, render, cfg.gt_samples) for p in test_poses]
    enc = encoding_for(cfg, scene, train_poses + test_poses)
    return Prepared(scene, train_set, test_poses, truth, enc, time.perf_counter() - t0)


def _fresh_model(cfg: ExperimentConfig, prep: Prepared) -> RadianceFieldModel:
    m = cfg.model
    render = replace(cfg.render, background=cfg.scene.background)
    return init_model(cfg.train.seed, prep.encoding, render, m.main_width, m.main_depth, m.proposal_width, m.proposal_depth)


def template_model(cfg: ExperimentConfig) -> RadianceFieldModel:
    """Untrained model with the architecture and encoding implied by ``cfg``
    (no images are rendered; used to read checkpoints and parameter streams)."""
    scene = make_scene(cfg.scene.seed, cfg.scene.primitive_count, cfg.scene.background)
    poses = generate_trajectory(cfg.train_trajectory, scene, cfg.width, cfg.height)
    poses += generate_trajectory(cfg.test_trajectory, scene, cfg.width, cfg.height)
    prep = Prepared(scene, None, [], [], encoding_for(cfg, scene, poses))
    return _fresh_model(cfg, prep)


def train_model(cfg: ExperimentConfig, prep: Prepared, dataset: CapturedDataset | None = None) -> RadianceFieldModel:
    return train(_fresh_model(cfg, prep), dataset or prep.train_set, cfg.train)


def render_test(cfg: ExperimentConfig, prep: Prepared, model: RadianceFieldModel) -> tuple[list[np.ndarray], list[float]]:
    views = [synthesize_view(model, p, cfg.width, cfg.height) for p in prep.test_poses]
    return views, [psnr(v, t) for v, t in zip(views, prep.test_truth)]


def run_anchor(cfg: ExperimentConfig, prep: Prepared | None = None) -> tuple[StrategyResult, RadianceFieldModel]:
    """Train on pristine captures and render with unquantized parameters.

    The recorded bit count is the raw float64 checkpoint; the result is marked
    non-streamable. The trained model is returned too so the parameter strategy
    can reuse it.
    """
    prep = prep or prepare(cfg)
    t0 = time.perf_counter()
    model = train_model(cfg, prep)
    t1 = time.perf_counter()
    views, scores = render_test(cfg, prep, model)
    t2 = time.perf_counter()
    ckpt = write_checkpoint(model)
    res = StrategyResult(
        "anchor", None, 8 * len(ckpt), views, scores,
        {"capture": prep.capture_seconds, "train": t1 - t0, "render": t2 - t1}, streamable=False, bitstream=ckpt,
    )
    return res, model


def run_param_strategy(
    cfg: ExperimentConfig, qp: int, prep: Prepared | None = None, trained: RadianceFieldModel | None = None
) -> StrategyResult:
    """Train on the captures, code the parameters at ``qp``, decode and render.

    Only the parameter bitstream counts towards the rate; the uplink of the
    captures to the server is not part of the downlink budget. ``trained``
    skips training when the pristine model is already available (it is a pure
    function of the config, so the result is identical).
    """
    prep = prep or prepare(cfg)
    timings = {}
    t0 = time.perf_counter()
    model = trained if trained is not None else train_model(cfg, prep)
    timings["train"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    bs = param_codec.encode_model(model, qp, cfg.quantizer)
    timings["encode"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    decoded = param_codec.decode_model(bs.data, template=model)
    timings["decode"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    views, scores = render_test(cfg, prep, decoded)
    timings["render"] = time.perf_counter() - t0
    return StrategyResult("param_based", int(qp), bs.bit_length, views, scores, timings, bitstream=bs.data)


def run_pixel_strategy(cfg: ExperimentConfig, qp: int, mode: str = "inter", prep: Prepared | None = None) -> StrategyResult:
    """Code the captured images at ``qp``, train on the decoded frames with the
    transmitted poses, render. The rate is the whole image bitstream, pose
    metadata included."""
    prep = prep or prepare(cfg)
    timings = {}
    t0 = time.perf_counter()
    bs = image_codec.encode_sequence(prep.train_set.images, prep.train_set.poses, mode, qp)
    timings["encode"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    images, poses = image_codec.decode_sequence(bs.data)
    timings["decode"] = time.perf_counter() - t0
    decoded_set = CapturedDataset(images, poses, cfg.width, cfg.height)
    t0 = time.perf_counter()
    model = train_model(cfg, prep, decoded_set)
    timings["train"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    views, scores = render_test(cfg, prep, model)
    timings["render"] = time.perf_counter() - t0
    return StrategyResult(f"pixel_based/{mode}", int(qp), bs.bit_length, views, scores, timings, bitstream=bs.data)


# --- experiment sweep ------------------------------------------------------------


@dataclass
class ExperimentResults:
    anchor: StrategyResult
    results: list[StrategyResult]
    failures: list[tuple[str, int, str]] = field(default_factory=list)

    def by_strategy(self) -> dict[str, list[StrategyResult]]:
        out: dict[str, list[StrategyResult]] = {}
        for r in self.results:
            out.setdefault(r.strategy, []).append(r)
        return out

    def curves(self) -> list[RDCurve]:
        return [build_curve(rs, self.anchor) for rs in self.by_strategy().values() if len(rs) >= 2]


def _job(args):
    kind, cfg, qp, mode, prep, trained = args
    try:
        if kind == "param_based":
            return run_param_strategy(cfg, qp, prep, trained), None
        return run_pixel_strategy(cfg, qp, mode, prep), None
    except Exception as e:  # one bad point must not sink the sweep
        tag = kind if kind == "param_based" else f"pixel_based/{mode}"
        log.exception("%s qp %s failed", tag, qp)
        return None, (tag, qp, f"{type(e).__name__}: {e}")


def run_experiment(cfg: ExperimentConfig, out_dir=None, workers: int = 1) -> ExperimentResults:
    """Anchor once, then every strategy at every ladder qp.

    All points share the scene, trajectories and training seed. Each point is a
    pure function of (cfg, qp), so ``workers > 1`` gives identical results.
    """
    prep = prepare(cfg)
    log.info("captured %d training and %d test views in %.1fs", len(prep.train_set), len(prep.test_poses), prep.capture_seconds)
    anchor, anchor_model = run_anchor(cfg, prep)
    log.info("anchor: %.2f dB", anchor.mean_psnr)
    jobs = []
    if "param_based" in cfg.strategies:
        jobs += [("param_based", cfg, q, None, prep, anchor_model) for q in cfg.param_qp_ladder]
    if "pixel_based" in cfg.strategies:
        jobs += [("pixel_based", cfg, q, m, prep, None) for m in cfg.codec_modes for q in cfg.pixel_qp_ladder]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            outcomes = list(ex.map(_job, jobs))
    else:
        outcomes = [_job(j) for j in jobs]
    results = [r for r, _ in outcomes if r is not None]
    failures = [f for _, f in outcomes if f is not None]
    for r in results:
        log.info("%s qp %s: %d bits, %.2f dB", r.strategy, r.qp, r.total_bits, r.mean_psnr)
    exp = ExperimentResults(anchor, results, failures)
    if out_dir is not None:
        save_results(exp, cfg, out_dir)
    return exp


def _dir_name(r: StrategyResult) -> str:
    name = r.strategy.replace("/", "_")
    return name if r.qp is None else f"{name}_qp{r.qp}"


def save_results(exp: ExperimentResults, cfg: ExperimentConfig, out_dir) -> Path:
    """One sub-directory per (strategy, qp) with bitstream, rendered views and
    metrics; ``rd.csv`` with every curve at the top level."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for r in [exp.anchor] + exp.results:
        d = out / _dir_name(r)
        d.mkdir(exist_ok=True)
        ext = {"anchor": "nrf", "param_based": "nncb"}.get(r.strategy, "ivsb")
        (d / f"bitstream.{ext}").write_bytes(r.bitstream)
        for k, im in enumerate(r.rendered):
            write_image(d / f"test_{k:04d}.nsb", im)
        (d / "metrics.json").write_text(json.dumps(r.metrics(), indent=2, sort_keys=True) + "\n")
    export_csv(exp.curves(), out / "rd.csv")
    if exp.failures:
        (out / "failures.json").write_text(json.dumps(exp.failures, indent=2) + "\n")
    return out
