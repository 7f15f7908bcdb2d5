"""Core scene types: camera, meshes, draw lists, and 64-bit fragment packing.

A fragment is a single 64-bit word: the 28 most significant bits hold the
truncated IEEE-754 bit pattern of the (positive) view-space depth, the low
36 bits hold the global triangle ID.  Because positive floats sort the same
as their bit patterns, taking the unsigned minimum of packed words per pixel
is a combined depth test + payload store.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

CLEAR = np.uint64(0xFFFFFFFFFFFFFFFF)
TRIANGLE_ID_BITS = 36
MAX_TRIANGLE_ID = 1 << TRIANGLE_ID_BITS
TRIANGLE_ID_MASK = np.uint64(MAX_TRIANGLE_ID - 1)


class CapacityError(RuntimeError):
    """A hard capacity limit (triangle IDs, queue sizes) was exceeded."""


def pack_fragment(depth: float, triangle_id: int) -> np.uint64:
    """Pack a positive depth and a global triangle ID into one 64-bit word.

    The float32 bit pattern of ``depth`` is shifted right by 3 (dropping the
    three lowest mantissa bits; the sign bit of a positive float is zero, so
    28 bits remain) and placed in the high bits, above the 36-bit ID.
    """
    if not (depth > 0.0 and math.isfinite(depth)):
        raise ValueError(f"depth must be positive and finite, got {depth}")
    if not 0 <= triangle_id < MAX_TRIANGLE_ID:
        raise ValueError(f"triangle_id must be < 2^36, got {triangle_id}")
    bits = np.float32(depth).view(np.uint32)
    depth28 = np.uint64(bits >> np.uint32(3))
    return (depth28 << np.uint64(TRIANGLE_ID_BITS)) | np.uint64(triangle_id)


def unpack_fragment(word: np.uint64) -> tuple[int, float, int]:
    """Split a packed word into (depth28, truncated depth, triangle ID).

    ``word`` must not be the CLEAR sentinel; callers check for background
    pixels first.
    """
    word = np.uint64(word)
    if word == CLEAR:
        raise ValueError("cannot unpack the CLEAR sentinel (background pixel)")
    triangle_id = int(word & TRIANGLE_ID_MASK)
    depth28 = int(word >> np.uint64(TRIANGLE_ID_BITS))
    depth = float(np.uint32(depth28 << 3).view(np.float32))
    return depth28, depth, triangle_id


@dataclass
class Camera:
    """Pinhole camera; depth is measured as positive view-space distance
    along -z starting at the camera position."""

    position: np.ndarray                # world-space, shape (3,)
    view_transform: np.ndarray          # rigid 4x4 world -> view
    fovy: float                         # vertical field of view, radians
    aspect: float                       # width / height
    near: float                         # near-plane distance, > 0
    image_width: int
    image_height: int
    supersampling: int = 1

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64)
        self.view_transform = np.asarray(self.view_transform, dtype=np.float64)
        if not 0.0 < self.fovy < math.pi:
            raise ValueError(f"fovy must be in (0, pi), got {self.fovy}")
        if self.aspect <= 0.0:
            raise ValueError("aspect must be positive")
        if self.near <= 0.0:
            raise ValueError("near must be positive")
        if self.supersampling not in (1, 2, 4):
            raise ValueError("supersampling must be 1, 2 or 4")

    @property
    def internal_width(self) -> int:
        return self.image_width * self.supersampling

    @property
    def internal_height(self) -> int:
        return self.image_height * self.supersampling

    @classmethod
    def look_at(cls, position, target, up=(0.0, 1.0, 0.0), *, fovy=math.radians(60.0),
                width=640, height=480, near=0.1, supersampling=1) -> "Camera":
        position = np.asarray(position, dtype=np.float64)
        target = np.asarray(target, dtype=np.float64)
        up = np.asarray(up, dtype=np.float64)
        forward = target - position
        norm = np.linalg.norm(forward)
        if norm == 0.0:
            raise ValueError("camera position and target coincide")
        forward = forward / norm
        right = np.cross(forward, up)
        rnorm = np.linalg.norm(right)
        if rnorm == 0.0:
            raise ValueError("up vector is parallel to the view direction")
        right = right / rnorm
        true_up = np.cross(right, forward)
        rot = np.stack([right, true_up, -forward])   # world -> view rotation
        view = np.eye(4)
        view[:3, :3] = rot
        view[:3, 3] = -rot @ position
        return cls(position=position, view_transform=view, fovy=fovy,
                   aspect=width / height, near=near,
                   image_width=width, image_height=height,
                   supersampling=supersampling)


def projection_vector(camera: Camera) -> np.ndarray:
    """Per-axis projection factors (f/aspect, f, -1) with f = 1/tan(fovy/2).

    Multiplying a view-space point elementwise by this vector and dividing
    x, y by the (positive) depth yields NDC in [-1, 1] with z carrying the
    linear depth.
    """
    f = 1.0 / math.tan(camera.fovy / 2.0)
    return np.array([f / camera.aspect, f, -1.0], dtype=np.float64)


@dataclass
class Mesh:
    """Triangle mesh; positions/indices may be stored compressed.

    ``positions`` is either a float array of shape (n, 3) or a
    geomcodec.QuantizedPositions; ``indices`` either a uint32 array of
    length 3 * triangle_count or a geomcodec.PackedIndexBuffer.
    """

    positions: object
    indices: object
    triangle_count: int
    aabb: np.ndarray                         # shape (2, 3): [min, max]
    uvs: np.ndarray | None = None            # (n, 2) float
    vertex_colors: np.ndarray | None = None  # (n, 4) uint8
    texture: object | None = None            # geomcodec.MipChain
    name: str = ""
    _positions_cache: np.ndarray | None = field(default=None, repr=False, compare=False)
    _indices_cache: np.ndarray | None = field(default=None, repr=False, compare=False)

    def positions_f64(self) -> np.ndarray:
        """Decoded positions as float64, cached."""
        if self._positions_cache is None:
            if isinstance(self.positions, np.ndarray):
                self._positions_cache = np.ascontiguousarray(self.positions, dtype=np.float64)
            else:
                self._positions_cache = self.positions.dequantize_all()
        return self._positions_cache

    def indices_u32(self) -> np.ndarray:
        """Decoded index buffer as uint32, cached."""
        if self._indices_cache is None:
            if isinstance(self.indices, np.ndarray):
                self._indices_cache = np.ascontiguousarray(self.indices, dtype=np.uint32)
            else:
                self._indices_cache = self.indices.decode_all()
        return self._indices_cache

    def vertex_count(self) -> int:
        if isinstance(self.positions, np.ndarray):
            return len(self.positions)
        return self.positions.count


@dataclass
class SceneNode:
    mesh: Mesh
    transforms: list[np.ndarray]    # one object->world 4x4 per instance

    def __post_init__(self):
        if not self.transforms:
            raise ValueError("a scene node needs at least one instance transform")
        self.transforms = [np.asarray(t, dtype=np.float64) for t in self.transforms]


@dataclass
class DrawItem:
    mesh: Mesh
    instance_transform: np.ndarray
    first_global_triangle: int
    triangle_count: int
    node_index: int = 0


@dataclass
class DrawList:
    items: list[DrawItem]
    prefix_sums: np.ndarray       # uint64, length len(items) + 1
    total_triangles: int


def frustum_planes(camera: Camera) -> np.ndarray:
    """World-space frustum half-spaces as rows (nx, ny, nz, d).

    A point w is inside the frustum iff n . w + d <= 0 for every row.
    Five planes: near plus the four side planes through the camera position
    (the camera carries no far distance, so there is no far plane).
    """
    p = projection_vector(camera)
    # view-space half-spaces n_v . v + d <= 0
    view_planes = np.array([
        [0.0, 0.0, 1.0, camera.near],     # in front of near: z <= -near
        [p[0], 0.0, 1.0, 0.0],            # right:  px*x + z <= 0
        [-p[0], 0.0, 1.0, 0.0],           # left
        [0.0, p[1], 1.0, 0.0],            # top
        [0.0, -p[1], 1.0, 0.0],           # bottom
    ])
    rot = camera.view_transform[:3, :3]
    trans = camera.view_transform[:3, 3]
    world = np.empty_like(view_planes)
    world[:, :3] = view_planes[:, :3] @ rot
    world[:, 3] = view_planes[:, :3] @ trans + view_planes[:, 3]
    return world


def _transformed_aabb(aabb: np.ndarray, transform: np.ndarray) -> np.ndarray:
    corners = np.array([[aabb[i, 0], aabb[j, 1], aabb[k, 2], 1.0]
                        for i in (0, 1) for j in (0, 1) for k in (0, 1)])
    world = corners @ transform.T
    pts = world[:, :3]
    return np.stack([pts.min(axis=0), pts.max(axis=0)])


def aabb_outside_plane(aabb: np.ndarray, plane: np.ndarray) -> bool:
    """True when the whole box lies strictly outside the half-space."""
    # the box corner minimizing n . w picks per-axis min/max by sign of n
    corner = np.where(plane[:3] < 0.0, aabb[1], aabb[0])
    return float(plane[:3] @ corner + plane[3]) > 0.0


def build_draw_list(scene: list[SceneNode], camera: Camera) -> DrawList:
    """Flatten (node, instance) pairs that survive frustum culling and
    compute the exclusive prefix sum of their triangle counts."""
    if not scene:
        raise ValueError("scene must not be empty")
    planes = frustum_planes(camera)
    items: list[DrawItem] = []
    total = 0
    for node_index, node in enumerate(scene):
        for transform in node.transforms:
            box = _transformed_aabb(node.mesh.aabb, transform)
            if any(aabb_outside_plane(box, pl) for pl in planes):
                continue
            items.append(DrawItem(mesh=node.mesh, instance_transform=transform,
                                  first_global_triangle=total,
                                  triangle_count=node.mesh.triangle_count,
                                  node_index=node_index))
            total += node.mesh.triangle_count
    if total >= MAX_TRIANGLE_ID:
        raise CapacityError(
            f"scene has {total} visible triangles; the 36-bit global triangle "
            f"ID field addresses at most {MAX_TRIANGLE_ID - 1}")
    prefix = np.zeros(len(items) + 1, dtype=np.uint64)
    for k, item in enumerate(items):
        prefix[k + 1] = prefix[k] + np.uint64(item.triangle_count)
    return DrawList(items=items, prefix_sums=prefix, total_triangles=total)


class Framebuffer:
    """width x height row-major array of packed 64-bit fragment words."""

    def __init__(self, width: int, height: int):
        self.width = width
        self.height = height
        self.words = np.full(width * height, CLEAR, dtype=np.uint64)

    def clear(self):
        self.words.fill(CLEAR)

    def word_at(self, x: int, y: int) -> np.uint64:
        return self.words[y * self.width + x]

    def grid(self) -> np.ndarray:
        return self.words.reshape(self.height, self.width)
