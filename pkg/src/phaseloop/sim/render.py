"""Deterministic rasterization of the world onto small grayscale cameras.

Rendering is a pure function of world state: every primitive (arm links, loop
segments, peg capsule, gripper pads) contributes a shaded distance field and
pixels take the maximum contribution. Values are floats in [0, 1]; the sensor
suite quantizes to 8 bits so training and runtime observations match exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import geometry as geo
from .world import World

SHADE_ARM = 0.5
SHADE_LOOP = 1.0
SHADE_PEG = 0.7
SHADE_GRIPPER = 0.9
WIDTH_ARM = 0.018
WIDTH_LOOP = 0.010
WIDTH_GRIPPER = 0.022


@dataclass(frozen=True)
class Camera:
    center: tuple
    half_extent: float
    size: int = 48
    rot90: bool = False

    def pixel_grid(self) -> np.ndarray:
        n = self.size
        # pixel centers in world units, rows top-down
        span = np.linspace(-self.half_extent, self.half_extent, n, endpoint=False)
        span = span + self.half_extent / n
        xs = self.center[0] + span
        ys = self.center[1] - span
        gx, gy = np.meshgrid(xs, ys)
        return np.stack([gx.ravel(), gy.ravel()], axis=1)

    def view_transform(self, pts: np.ndarray) -> np.ndarray:
        """World points into view coordinates (inverse of the rot90, if set)."""
        if not self.rot90:
            return pts
        c = np.asarray(self.center)
        rel = pts - c
        return c + np.stack([rel[..., 1], -rel[..., 0]], axis=-1)


def default_cameras() -> tuple[Camera, Camera]:
    """A wide scene view and a peg-centered detail view rotated 90 degrees."""
    return (
        Camera(center=(0.0, 0.85), half_extent=0.85),
        Camera(center=(0.0, 1.0), half_extent=0.2, rot90=True),
    )


def _segment_distance(points: np.ndarray, seg_a: np.ndarray, seg_b: np.ndarray) -> np.ndarray:
    """Distances from P points to S segments: (P, S)."""
    ab = seg_b - seg_a  # (S, 2)
    denom = np.einsum("ij,ij->i", ab, ab)
    denom = np.maximum(denom, 1e-12)
    ap = points[:, None, :] - seg_a[None, :, :]  # (P, S, 2)
    t = np.clip(np.einsum("psj,sj->ps", ap, ab) / denom, 0.0, 1.0)
    closest = seg_a[None, :, :] + t[:, :, None] * ab[None, :, :]
    return np.linalg.norm(points[:, None, :] - closest, axis=2)


def _collect_primitives(world: World):
    """(segments a, segments b, half-widths, shades) for all drawables."""
    a_list, b_list, widths, shades = [], [], [], []

    for side in (0, 1):
        pts = geo.joint_positions(world.arms[side], world.q[side])
        for i in range(len(pts) - 1):
            a_list.append(pts[i])
            b_list.append(pts[i + 1])
            widths.append(WIDTH_ARM)
            shades.append(SHADE_ARM)
        ee = pts[-1]
        a_list.append(ee)
        b_list.append(ee)
        widths.append(WIDTH_GRIPPER)
        shades.append(SHADE_GRIPPER)

    n = world.cfg.n_nodes
    for i in range(n):
        a_list.append(world.nodes[i])
        b_list.append(world.nodes[(i + 1) % n])
        widths.append(WIDTH_LOOP)
        shades.append(SHADE_LOOP)

    a_list.append(world.peg_a)
    b_list.append(world.peg_b)
    widths.append(world.cfg.peg_radius)
    shades.append(SHADE_PEG)

    return (np.asarray(a_list), np.asarray(b_list),
            np.asarray(widths), np.asarray(shades))


def render(world: World, camera: Camera) -> np.ndarray:
    """Rasterize to a (size, size) float image in [0, 1]."""
    pts = camera.pixel_grid()
    if camera.rot90:
        c = np.asarray(camera.center)
        rel = pts - c
        pts = c + np.stack([-rel[:, 1], rel[:, 0]], axis=1)
    seg_a, seg_b, widths, shades = _collect_primitives(world)
    dist = _segment_distance(pts, seg_a, seg_b)
    aa = 2.0 * camera.half_extent / camera.size  # one pixel in world units
    coverage = np.clip(1.0 - (dist - widths[None, :]) / aa, 0.0, 1.0)
    img = (coverage * shades[None, :]).max(axis=1)
    return img.reshape(camera.size, camera.size)


@dataclass
class Observation:
    """Per-timestep sensor bundle (images already quantized to 8 bits)."""

    images: np.ndarray   # (K, H, W) uint8
    poses: np.ndarray    # (10,) [x, y, cos, sin, grip] per arm
    wrenches: np.ndarray  # (4,) sensor-frame fx, fy per arm
    task: int
    t: float


class SensorSuite:
    def __init__(self, cameras: tuple[Camera, ...] | None = None):
        self.cameras = cameras if cameras is not None else default_cameras()

    def observe(self, world: World) -> Observation:
        imgs = np.stack([
            (render(world, cam) * 255.0).round().astype(np.uint8)
            for cam in self.cameras
        ])
        poses = []
        for side in (0, 1):
            x, y, theta = world.ee_pose(side)
            grip = 1.0 if world.gripper_cmd[side] else 0.0
            poses += [x, y, np.cos(theta), np.sin(theta), grip]
        wl = world.wrench_sensor(0)
        wr = world.wrench_sensor(1)
        wrenches = np.array([wl[0], wl[1], wr[0], wr[1]])
        return Observation(
            images=imgs,
            poses=np.asarray(poses),
            wrenches=wrenches,
            task=world.task,
            t=world.t,
        )
