"""Sampling along rays and alpha compositing (forward and reverse mode)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class RenderConfig:
    n_coarse: int = 16
    n_fine: int = 16
    t_near: float = 2.0
    t_far: float = 6.0
    background: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if not 0 <= self.t_near < self.t_far:
            raise ValueError("need 0 <= t_near < t_far")
        if self.n_coarse < 2:
            raise ValueError("n_coarse must be >= 2")
        if self.n_fine < 0:
            raise ValueError("n_fine must be >= 0")


@dataclass(frozen=True)
class RadianceSample:
    sigma: float
    c: tuple[float, float, float]
    delta: float

    def __post_init__(self):
        if self.sigma < 0 or self.delta < 0:
            raise ValueError("sigma and delta must be nonnegative")


def midpoint_samples(t_near: float, t_far: float, n: int) -> np.ndarray:
    edges = np.linspace(t_near, t_far, n + 1)
    return 0.5 * (edges[:-1] + edges[1:])


def sample_coarse(ray_count: int, cfg: RenderConfig, rng=None) -> np.ndarray:
    """Stratified depths, one uniform draw per equal-width bin; shape (ray_count, n_coarse).

    ``rng=None`` gives bin midpoints, which is what view synthesis uses.
    """
    n = cfg.n_coarse
    edges = np.linspace(cfg.t_near, cfg.t_far, n + 1)
    lo, width = edges[:-1], edges[1:] - edges[:-1]
    if rng is None:
        u = np.full((ray_count, n), 0.5)
    else:
        u = rng.random((ray_count, n))
    return lo + width * u


def deltas(t: np.ndarray, t_far: float) -> np.ndarray:
    """Distance from each sample to the next; the last sample extends to ``t_far``."""
    d = np.empty_like(t)
    d[..., :-1] = t[..., 1:] - t[..., :-1]
    d[..., -1] = t_far - t[..., -1]
    return np.maximum(d, 0.0)


def fine_draws(ts: np.ndarray, weights: np.ndarray, n_fine: int, t_far: float, rng=None) -> np.ndarray:
    """Inverse-transform draws from the piecewise-constant PDF over bins ``[t_i, t_{i+1})``.

    The last bin ends at ``t_far``. Rays whose weights sum below 1e-12 fall back
    to a uniform PDF. ``rng=None`` uses evenly spaced quantiles.
    """
    ts = np.atleast_2d(ts)
    weights = np.atleast_2d(np.asarray(weights, dtype=np.float64))
    rays, n = ts.shape
    far = np.broadcast_to(np.asarray(t_far, dtype=np.float64).reshape(-1, 1), (rays, 1))
    edges = np.concatenate([ts, far], axis=1)
    w = np.maximum(weights, 0.0)
    total = w.sum(axis=1, keepdims=True)
    empty = total[:, 0] < 1e-12
    w = np.where(empty[:, None], edges[:, 1:] - edges[:, :-1], w)
    total = w.sum(axis=1, keepdims=True)
    total = np.where(total > 0, total, 1.0)
    cdf = np.concatenate([np.zeros((rays, 1)), np.cumsum(w / total, axis=1)], axis=1)
    cdf[:, -1] = 1.0
    if rng is None:
        u = np.broadcast_to((np.arange(n_fine) + 0.5) / n_fine, (rays, n_fine))
    else:
        u = rng.random((rays, n_fine))
    # bin index k with cdf[k] <= u < cdf[k+1]
    idx = np.clip(_batched_searchsorted(cdf, u) - 1, 0, n - 1)
    c0 = np.take_along_axis(cdf, idx, axis=1)
    c1 = np.take_along_axis(cdf, idx + 1, axis=1)
    e0 = np.take_along_axis(edges, idx, axis=1)
    e1 = np.take_along_axis(edges, idx + 1, axis=1)
    span = c1 - c0
    frac = np.where(span > 0, (u - c0) / np.where(span > 0, span, 1.0), 0.0)
    return e0 + np.clip(frac, 0.0, 1.0) * (e1 - e0)


def _batched_searchsorted(cdf: np.ndarray, u: np.ndarray) -> np.ndarray:
    # shift each row's CDF into its own disjoint interval so one flat search serves all rays
    rays = cdf.shape[0]
    offset = np.arange(rays)[:, None] * 2.0
    flat = (cdf + offset).ravel()
    hits = np.searchsorted(flat, (u + offset).ravel(), side="right").reshape(u.shape)
    return hits - np.arange(rays)[:, None] * cdf.shape[1]


def sample_fine(coarse_ts, coarse_weights, n_fine: int, rng=None, t_far: float | None = None) -> np.ndarray:
    """Fine draws merged with the coarse depths, sorted ascending."""
    coarse_ts = np.atleast_2d(np.asarray(coarse_ts, dtype=np.float64))
    if t_far is None:
        # without an explicit far plane the last bin is as wide as the one before it
        t_far = 2.0 * coarse_ts[:, -1] - coarse_ts[:, -2]
    fine = fine_draws(coarse_ts, coarse_weights, n_fine, t_far, rng)
    return np.sort(np.concatenate([coarse_ts, fine], axis=1), axis=1)


def composite(sigma: np.ndarray, rgb: np.ndarray, delta: np.ndarray, background) -> tuple[np.ndarray, np.ndarray]:
    """Alpha-composite samples along the last axis.

    Returns (color, weights) where color has shape (..., 3) and weights (..., n).
    """
    tau = sigma * delta
    # exclusive cumulative optical depth gives the transmittance T_i
    acc = np.cumsum(tau, axis=-1)
    trans = np.exp(-(acc - tau))
    t_end = np.exp(-acc[..., -1]) if tau.shape[-1] else np.ones(tau.shape[:-1])
    weights = trans * -np.expm1(-tau)
    color = np.einsum("...n,...nc->...c", weights, rgb) + t_end[..., None] * np.asarray(background)
    return color, weights


def composite_backward(sigma, rgb, delta, background, weights, color, grad_color):
    """Reverse-mode pass of :func:`composite`.

    Returns gradients with respect to ``sigma`` (..., n) and ``rgb`` (..., n, 3).
    """
    tau = sigma * delta
    acc = np.cumsum(tau, axis=-1)
    trans_next = np.exp(-acc)
    partial = np.cumsum(weights[..., None] * rgb, axis=-2)
    # dC/dtau_k = T_{k+1} c_k - (C - sum_{i<=k} w_i c_i)
    dc_dtau = trans_next[..., None] * rgb - (color[..., None, :] - partial)
    g_tau = np.einsum("...nc,...c->...n", dc_dtau, grad_color)
    g_sigma = g_tau * delta
    g_rgb = weights[..., None] * grad_color[..., None, :]
    return g_sigma, g_rgb


def volume_render(samples: Sequence[RadianceSample], background) -> np.ndarray:
    """Composite a single ray given as a sequence of samples."""
    bg = np.asarray(background, dtype=np.float64)
    if not samples:
        return bg.copy()
    sigma = np.array([s.sigma for s in samples], dtype=np.float64)
    rgb = np.array([s.c for s in samples], dtype=np.float64)
    delta = np.array([s.delta for s in samples], dtype=np.float64)
    color, _ = composite(sigma, rgb, delta, bg)
    return color
