"""Shared fixtures and scene builders for the test suite."""

from __future__ import annotations

import math

import numpy as np
import pytest

from trirast.scenecore import Camera, Mesh, SceneNode
from trirast.scenecore import projection_vector


def mesh_from_soup(positions, indices=None, name="soup") -> Mesh:
    """Mesh straight from vertex/triangle arrays (identity index buffer by
    default)."""
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    if indices is None:
        indices = np.arange(len(positions), dtype=np.uint32)
    indices = np.asarray(indices, dtype=np.uint32).ravel()
    aabb = np.stack([positions.min(axis=0), positions.max(axis=0)])
    return Mesh(positions=positions, indices=indices,
                triangle_count=len(indices) // 3, aabb=aabb, name=name)


def identity_camera(width=128, height=96, fovy=math.radians(60.0), near=0.1,
                    supersampling=1) -> Camera:
    """Camera at the origin looking down -z with an identity view transform."""
    return Camera(position=np.zeros(3), view_transform=np.eye(4),
                  fovy=fovy, aspect=width / height, near=near,
                  image_width=width, image_height=height,
                  supersampling=supersampling)


def view_point_for_pixel(px, py, depth, camera) -> np.ndarray:
    """View-space point that projects exactly to pixel (px, py) at ``depth``."""
    p = projection_vector(camera)
    w, h = camera.internal_width, camera.internal_height
    ndc_x = 2.0 * px / w - 1.0
    ndc_y = 1.0 - 2.0 * py / h
    return np.array([ndc_x * depth / p[0], ndc_y * depth / p[1], -depth])


def pixel_triangle_scene(pixels, depths, camera, extra=()):
    """One front-facing triangle whose vertices land on the given pixel
    coordinates at the given depths (identity-view camera required)."""
    assert np.allclose(camera.view_transform, np.eye(4))
    pts = [view_point_for_pixel(px, py, d, camera)
           for (px, py), d in zip(pixels, depths)]
    verts = list(pts) + [np.asarray(v, dtype=np.float64) for v in extra]
    return [SceneNode(mesh=mesh_from_soup(verts), transforms=[np.eye(4)])]


def _soup_triangles(rng, count, centers_lo, centers_hi, size_lo, size_hi):
    centers = rng.uniform(centers_lo, centers_hi, size=(count, 3))
    sizes = np.exp(rng.uniform(np.log(size_lo), np.log(size_hi), size=(count, 1, 1)))
    offsets = rng.normal(size=(count, 3, 3)) * sizes
    return (centers[:, None, :] + offsets).reshape(-1, 3)


def random_scene(rng) -> tuple[list[SceneNode], Camera]:
    """Randomized scene exercising all three stages.

    Triangle counts are log-uniform in [1, 10^4); triangle scales are mixed
    so that small, medium, and huge screen bboxes all occur; at least 10%
    of the triangles cross the near plane; cameras are random.
    """
    cam_pos = rng.uniform(-4.0, 4.0, 3)
    cam_pos += np.sign(cam_pos) * 1.5                    # keep off the origin
    target = rng.uniform(-1.0, 1.0, 3)
    near = float(rng.uniform(0.05, 0.4))
    camera = Camera.look_at(cam_pos, target, width=96, height=64, near=near,
                            fovy=float(rng.uniform(0.6, 1.8)))

    total = max(1, int(round(10.0 ** rng.uniform(0.0, 4.0))))
    n_near = max(1, -(-total // 10))                     # >= 10% crossers
    n_large = min(int(rng.integers(0, 6)), total)
    n_medium = min(int(rng.integers(0, 30)), total)
    n_small = max(0, total - n_near - n_large - n_medium)

    radius = max(1.0, float(np.linalg.norm(cam_pos - target)))
    parts = []
    if n_small:
        parts.append(_soup_triangles(rng, n_small, target - radius,
                                     target + radius,
                                     0.004 * radius, 0.06 * radius))
    if n_medium:
        parts.append(_soup_triangles(rng, n_medium, target - radius,
                                     target + radius,
                                     0.1 * radius, 0.35 * radius))
    if n_large:
        parts.append(_soup_triangles(rng, n_large, target - 0.3 * radius,
                                     target + 0.3 * radius,
                                     0.8 * radius, 2.0 * radius))
    if n_near:
        # triangles straddling the camera position cross the near plane
        centers = cam_pos + rng.normal(size=(n_near, 3)) * 0.2
        offsets = rng.normal(size=(n_near, 3, 3)) * rng.uniform(
            0.5, 2.0, size=(n_near, 1, 1))
        parts.append((centers[:, None, :] + offsets).reshape(-1, 3))
    soup = np.concatenate(parts)
    nodes = [SceneNode(mesh=mesh_from_soup(soup), transforms=[np.eye(4)])]

    if rng.random() < 0.3:
        # an instanced node with a handful of copies of a small soup
        inst = _soup_triangles(rng, int(rng.integers(1, 20)),
                               target - 0.5 * radius, target + 0.5 * radius,
                               0.01 * radius, 0.2 * radius)
        transforms = []
        for _ in range(int(rng.integers(2, 5))):
            m = np.eye(4)
            m[:3, 3] = rng.uniform(-0.5, 0.5, 3) * radius
            transforms.append(m)
        nodes.append(SceneNode(mesh=mesh_from_soup(inst, name="inst"),
                               transforms=transforms))
    return nodes, camera


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(0xC0FFEE)


# acceptance-criterion result lines, echoed after the test run (capturing
# would otherwise swallow them for passing tests)
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
