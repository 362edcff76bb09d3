"""Photometric training with Adam and view synthesis."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .model import RadianceFieldModel, backward_rays, render_rays
from .rays import camera_rays

log = logging.getLogger(__name__)


class TrainingDivergence(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 5000
    batch_rays: int = 256
    learning_rate: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    # learning rate decays exponentially to learning_rate * lr_final_factor
    lr_final_factor: float = 0.1

    def __post_init__(self):
        if self.iterations < 0 or self.batch_rays < 1:
            raise ValueError("iterations must be >= 0 and batch_rays >= 1")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("Adam betas must lie in (0, 1)")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")


def loss_and_grad(model: RadianceFieldModel, origins, dirs, targets, rng=None, coarse_ts=None):
    """Mean squared color error of the main render and gradients for every tensor.

    Proposal tensors receive the gradient of the same error measured on the
    proposal's own render. Returns ``(mse, grads)`` with ``grads`` ordered like
    :meth:`RadianceFieldModel.tensors`.
    """
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape[0] == 0:
        raise ValueError("empty ray batch")
    out = render_rays(model, np.asarray(origins, float), np.asarray(dirs, float), rng, keep_cache=True, coarse_ts=coarse_ts)
    n = targets.size
    resid = out.color - targets
    resid_p = out.proposal_color - targets
    mse = float(np.mean(resid * resid))
    grads = backward_rays(model, out, 2.0 * resid / n, 2.0 * resid_p / n)
    return mse, grads


def dataset_rays(dataset) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    os_, ds, cs = [], [], []
    for im, pose in zip(dataset.images, dataset.poses):
        o, d = camera_rays(pose, dataset.width, dataset.height)
        os_.append(o)
        ds.append(d)
        cs.append(np.asarray(im, dtype=np.float64).reshape(-1, 3))
    return np.concatenate(os_), np.concatenate(ds), np.concatenate(cs)


def train(model: RadianceFieldModel, dataset, cfg: TrainConfig, callback=None) -> RadianceFieldModel:
    """Adam on random ray batches drawn from ``dataset``; returns a new model."""
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    origins, dirs, colors = dataset_rays(dataset)
    rng = np.random.default_rng(cfg.seed)
    params = [t.copy() for t in model.tensors()]
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    # current shares storage with params, so in-place Adam steps update it
    current = model.with_tensors(params)
    decay = cfg.lr_final_factor ** (1.0 / max(cfg.iterations, 1))
    for it in range(1, cfg.iterations + 1):
        idx = rng.integers(0, origins.shape[0], size=cfg.batch_rays)
        mse, grads = loss_and_grad(current, origins[idx], dirs[idx], colors[idx], rng)
        if not math.isfinite(mse) or not all(np.all(np.isfinite(g)) for g in grads):
            raise TrainingDivergence(
                f"non-finite loss at iteration {it} (lr={cfg.learning_rate}); lower the learning rate"
            )
        lr = cfg.learning_rate * decay ** (it - 1)
        b1c = 1.0 - cfg.beta1**it
        b2c = 1.0 - cfg.beta2**it
        for p, g, mk, vk in zip(params, grads, m, v):
            mk *= cfg.beta1
            mk += (1.0 - cfg.beta1) * g
            vk *= cfg.beta2
            vk += (1.0 - cfg.beta2) * g * g
            p -= lr * (mk / b1c) / (np.sqrt(vk / b2c) + cfg.eps)
        if callback is not None:
            callback(it, mse)
        if it % 500 == 0:
            log.info("iter %d  mse %.6f  psnr %.2f", it, mse, -10 * math.log10(max(mse, 1e-20)))
    return current


def synthesize_view(model: RadianceFieldModel, pose, width: int, height: int, chunk: int = 2048) -> np.ndarray:
    """Deterministic render (midpoint coarse depths, quantile fine depths); shape (H, W, 3)."""
    o, d = camera_rays(pose, width, height)
    out = np.empty_like(o)
    for s in range(0, o.shape[0], chunk):
        out[s : s + chunk] = render_rays(model, o[s : s + chunk], d[s : s + chunk]).color
    return np.clip(out, 0.0, 1.0).reshape(height, width, 3)
