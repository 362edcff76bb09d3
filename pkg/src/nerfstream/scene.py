"""Procedural Gaussian-blob scenes, camera trajectories and ground-truth renders."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .field.rays import camera_rays
from .field.render import composite, deltas, midpoint_samples

__all__ = [
    "Primitive",
    "AnalyticScene",
    "CameraPose",
    "TrajectorySpec",
    "CapturedDataset",
    "make_scene",
    "scene_field",
    "look_at",
    "generate_trajectory",
    "render_ground_truth",
    "capture_dataset",
    "save_dataset",
    "load_dataset",
]

_EMPTY_SIGMA = 1e-8


@dataclass(frozen=True)
class Primitive:
    center: tuple[float, float, float]
    radius: float
    peak_density: float
    albedo: tuple[float, float, float]

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"radius must be positive, got {self.radius}")
        if not self.peak_density > 0:
            raise ValueError(f"peak_density must be positive, got {self.peak_density}")
        if any(not 0.0 <= a <= 1.0 for a in self.albedo):
            raise ValueError(f"albedo channels must lie in [0, 1], got {self.albedo}")


@dataclass(frozen=True)
class AnalyticScene:
    """A sum of isotropic Gaussian density blobs with density-weighted color.

    An empty primitive list is accepted so the background-only case can be
    rendered; :func:`make_scene` always produces at least one primitive.
    """

    primitives: tuple[Primitive, ...]
    background: tuple[float, float, float] = (1.0, 1.0, 1.0)
    bounds: tuple[tuple[float, float, float], tuple[float, float, float]] = (
        (-1.0, -1.0, -1.0),
        (1.0, 1.0, 1.0),
    )

    def __post_init__(self):
        lo, hi = np.asarray(self.bounds[0]), np.asarray(self.bounds[1])
        for p in self.primitives:
            c = np.asarray(p.center)
            if np.any(c < lo) or np.any(c > hi):
                raise ValueError(f"primitive center {p.center} outside bounds")

    @property
    def centroid(self) -> np.ndarray:
        if not self.primitives:
            lo, hi = np.asarray(self.bounds[0]), np.asarray(self.bounds[1])
            return 0.5 * (lo + hi)
        return np.mean([p.center for p in self.primitives], axis=0)


@dataclass(frozen=True)
class CameraPose:
    """Pinhole camera. ``rotation`` maps camera axes to world axes.

    Camera frame: +x right, +y down, +z forward (the viewing direction).
    """

    position: np.ndarray
    rotation: np.ndarray
    focal: float
    principal: tuple[float, float]

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=np.float64))
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=np.float64))
        r = self.rotation
        if r.shape != (3, 3):
            raise ValueError("rotation must be 3x3")
        if not np.allclose(r.T @ r, np.eye(3), atol=1e-9, rtol=0) or abs(np.linalg.det(r) - 1) > 1e-9:
            raise ValueError("rotation must be orthonormal with determinant +1")
        if not self.focal > 0:
            raise ValueError("focal must be positive")

    @property
    def forward(self) -> np.ndarray:
        return self.rotation[:, 2]

    def __eq__(self, other):
        if not isinstance(other, CameraPose):
            return NotImplemented
        return (
            np.array_equal(self.position, other.position)
            and np.array_equal(self.rotation, other.rotation)
            and self.focal == other.focal
            and tuple(self.principal) == tuple(other.principal)
        )

    __hash__ = None


@dataclass(frozen=True)
class TrajectorySpec:
    """Camera path description.

    ``radius`` is the orbit radius (orbit360, test_path) or the distance of the
    capture plane from the centroid (front_facing). ``extent`` is the half-size
    of the front-facing grid, and the elevation wobble of test_path.
    """

    kind: str
    view_count: int
    radius: float = 4.0
    elevation_deg: float = 25.0
    extent: float = 0.5
    fov_deg: float = 40.0

    def __post_init__(self):
        if self.kind not in ("orbit360", "front_facing", "test_path"):
            raise ValueError(f"unknown trajectory kind {self.kind!r}")
        if self.view_count < 2:
            raise ValueError("view_count must be >= 2")
        if not self.radius > 0:
            raise ValueError("radius must be positive")


@dataclass
class CapturedDataset:
    images: list[np.ndarray]
    poses: list[CameraPose]
    width: int
    height: int

    def __post_init__(self):
        if len(self.images) != len(self.poses):
            raise ValueError("image and pose counts differ")
        for im in self.images:
            if im.shape != (self.height, self.width, 3):
                raise ValueError(f"image shape {im.shape} != {(self.height, self.width, 3)}")

    def __len__(self):
        return len(self.images)


def make_scene(seed: int, primitive_count: int, background=(1.0, 1.0, 1.0)) -> AnalyticScene:
    if primitive_count < 1:
        raise ValueError("primitive_count must be >= 1")
    rng = np.random.default_rng(seed)
    prims = []
    for _ in range(primitive_count):
        center = rng.uniform(-0.55, 0.55, size=3)
        radius = rng.uniform(0.35, 0.6)
        peak = rng.uniform(4.0, 14.0)
        albedo = rng.uniform(0.05, 0.95, size=3)
        prims.append(
            Primitive(
                center=tuple(float(v) for v in center),
                radius=float(radius),
                peak_density=float(peak),
                albedo=tuple(float(v) for v in albedo),
            )
        )
    return AnalyticScene(primitives=tuple(prims), background=tuple(float(b) for b in background))


def scene_field(scene: AnalyticScene, x) -> tuple[np.ndarray, np.ndarray]:
    """Density and color of the analytic field at points ``x`` of shape (..., 3)."""
    x = np.asarray(x, dtype=np.float64)
    lead = x.shape[:-1]
    sigma = np.zeros(lead)
    weighted = np.zeros(lead + (3,))
    for p in scene.primitives:
        d2 = np.sum((x - np.asarray(p.center)) ** 2, axis=-1)
        s = p.peak_density * np.exp(-d2 / (2.0 * (p.radius / 2.0) ** 2))
        sigma += s
        weighted += s[..., None] * np.asarray(p.albedo)
    color = np.broadcast_to(np.asarray(scene.background, dtype=np.float64), lead + (3,)).copy()
    live = sigma >= _EMPTY_SIGMA
    color[live] = weighted[live] / sigma[live][:, None]
    return sigma, color


def look_at(position, target, focal: float, principal, up=(0.0, 0.0, 1.0)) -> CameraPose:
    position = np.asarray(position, dtype=np.float64)
    fwd = np.asarray(target, dtype=np.float64) - position
    fwd /= np.linalg.norm(fwd)
    right = np.cross(fwd, np.asarray(up, dtype=np.float64))
    right /= np.linalg.norm(right)
    down = np.cross(fwd, right)
    rot = np.stack([right, down, fwd], axis=1)
    return CameraPose(position, rot, float(focal), (float(principal[0]), float(principal[1])))


def generate_trajectory(
    spec: TrajectorySpec, scene: AnalyticScene, width: int = 64, height: int = 64
) -> list[CameraPose]:
    focal = 0.5 * width / math.tan(math.radians(spec.fov_deg) / 2.0)
    principal = (width / 2.0, height / 2.0)
    c = scene.centroid
    n = spec.view_count
    poses = []
    if spec.kind in ("orbit360", "test_path"):
        phase = 0.5 if spec.kind == "test_path" else 0.0
        for k in range(n):
            az = 2.0 * math.pi * (k + phase) / n
            el = math.radians(spec.elevation_deg)
            if spec.kind == "test_path":
                # gentle vertical wobble keeps held-out views off the training ring
                el += math.radians(spec.extent * 10.0) * math.sin(az * 2.0)
            offset = spec.radius * np.array(
                [math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el)]
            )
            poses.append(look_at(c + offset, c, focal, principal))
    else:
        side = math.ceil(math.sqrt(n))
        grid = np.linspace(-spec.extent, spec.extent, side) if side > 1 else np.zeros(1)
        fwd = np.array([0.0, 1.0, 0.0])
        for k in range(n):
            gx, gz = grid[k % side], grid[k // side]
            pos = c - spec.radius * fwd + np.array([gx, 0.0, gz])
            poses.append(look_at(pos, pos + fwd, focal, principal))
    return poses


def render_ground_truth(
    scene: AnalyticScene, pose: CameraPose, width: int, height: int, render_cfg, samples: int = 256
) -> np.ndarray:
    """Dense deterministic volume render of the analytic field, shape (H, W, 3)."""
    if width < 8 or height < 8:
        raise ValueError("width and height must be >= 8")
    origins, dirs = camera_rays(pose, width, height)
    t = midpoint_samples(render_cfg.t_near, render_cfg.t_far, samples)
    t = np.broadcast_to(t, (origins.shape[0], samples))
    pts = origins[:, None, :] + t[..., None] * dirs[:, None, :]
    sigma, color = scene_field(scene, pts)
    delta = deltas(t, render_cfg.t_far)
    rgb, _ = composite(sigma, color, delta, np.asarray(render_cfg.background, dtype=np.float64))
    return rgb.reshape(height, width, 3)


def capture_dataset(
    scene: AnalyticScene, trajectory: Sequence[CameraPose], width: int, height: int, render_cfg
) -> CapturedDataset:
    images = [render_ground_truth(scene, p, width, height, render_cfg) for p in trajectory]
    return CapturedDataset(images, list(trajectory), width, height)


# --- on-disk dataset -------------------------------------------------------

_IMAGE_MAGIC = b"NSB1"


def write_image(path, image: np.ndarray) -> None:
    h, w, _ = image.shape
    with open(path, "wb") as f:
        f.write(_IMAGE_MAGIC)
        f.write(struct.pack("<II", w, h))
        f.write(np.ascontiguousarray(image, dtype="<f4").tobytes())


def read_image(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:4] != _IMAGE_MAGIC:
        raise ValueError(f"{path}: bad magic {data[:4]!r}")
    w, h = struct.unpack_from("<II", data, 4)
    arr = np.frombuffer(data, dtype="<f4", offset=12, count=w * h * 3)
    return arr.reshape(h, w, 3).astype(np.float64)


def pose_to_record(pose: CameraPose) -> list[float]:
    return [*pose.position, *pose.rotation.reshape(-1), pose.focal, *pose.principal]


def pose_from_record(rec) -> CameraPose:
    rec = [float(v) for v in rec]
    return CameraPose(np.array(rec[0:3]), np.array(rec[3:12]).reshape(3, 3), rec[12], (rec[13], rec[14]))


def write_poses(path, poses: Sequence[CameraPose]) -> None:
    recs = np.array([pose_to_record(p) for p in poses], dtype="<f8")
    Path(path).write_bytes(recs.tobytes())


def read_poses(path) -> list[CameraPose]:
    recs = np.frombuffer(Path(path).read_bytes(), dtype="<f8").reshape(-1, 15)
    return [pose_from_record(r) for r in recs]


def save_dataset(dataset: CapturedDataset, directory) -> None:
    """Images are stored as 32-bit floats, so a reload is exact only to float32."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for k, im in enumerate(dataset.images):
        write_image(d / f"view_{k:04d}.nsb", im)
    write_poses(d / "poses.bin", dataset.poses)


def load_dataset(directory) -> CapturedDataset:
    d = Path(directory)
    images = [read_image(p) for p in sorted(d.glob("view_*.nsb"))]
    poses = read_poses(d / "poses.bin")
    h, w, _ = images[0].shape
    return CapturedDataset(images, poses, w, h)
