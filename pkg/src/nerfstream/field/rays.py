"""Pinhole ray generation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        if abs(np.linalg.norm(self.direction) - 1.0) > 1e-9:
            raise ValueError("ray direction must be unit length")


def trace_ray(pose, pixel: tuple[int, int], width: int, height: int) -> Ray:
    """Ray through the center of pixel ``(i, j)``; ``i`` is the column, ``j`` the row."""
    i, j = pixel
    if not (0 <= i < width and 0 <= j < height):
        raise ValueError(f"pixel {pixel} outside {width}x{height}")
    cx, cy = pose.principal
    d_cam = np.array([(i + 0.5 - cx) / pose.focal, (j + 0.5 - cy) / pose.focal, 1.0])
    d = pose.rotation @ d_cam
    return Ray(pose.position.copy(), d / np.linalg.norm(d))


def camera_rays(pose, width: int, height: int) -> tuple[np.ndarray, np.ndarray]:
    """All rays of an image in row-major pixel order: origins and unit directions, each (H*W, 3)."""
    cx, cy = pose.principal
    jj, ii = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    d_cam = np.stack(
        [(ii + 0.5 - cx) / pose.focal, (jj + 0.5 - cy) / pose.focal, np.ones_like(ii, dtype=np.float64)],
        axis=-1,
    ).reshape(-1, 3)
    d = d_cam @ pose.rotation.T
    d /= np.linalg.norm(d, axis=-1, keepdims=True)
    o = np.broadcast_to(pose.position, d.shape).copy()
    return o, d
