"""Scene descriptions (JSON) and procedural test geometry.

A scene file declares meshes by path, nodes with per-instance transforms
(optionally replicated over a grid), a camera, and raster/shading settings.
The generators build desk-scale stand-ins for the dense-mesh workloads:
tessellated quads, sphere fields, a stage-classifier scene, and an
instanced grid.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .config import RasterConfig, ShadingConfig
from .geomcodec import MipChain, build_mip_chain, load_mesh_asset, load_texture
from .scenecore import Camera, Mesh, SceneNode


class SceneError(ValueError):
    """Malformed scene description."""


# ---------------------------------------------------------------------------
# description <-> JSON

@dataclass
class SceneDescription:
    meshes: list = field(default_factory=list)   # {"name", "path", "texture"?}
    nodes: list = field(default_factory=list)    # {"mesh", "transforms"?, "grid"?}
    camera: dict = field(default_factory=dict)
    raster: dict = field(default_factory=dict)
    shading: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def parse_scene_description(data) -> SceneDescription:
    if isinstance(data, (str, bytes)):
        try:
            data = json.loads(data)
        except json.JSONDecodeError as exc:
            raise SceneError(f"scene is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise SceneError("scene root must be a JSON object")
    desc = SceneDescription(
        meshes=list(data.get("meshes", [])),
        nodes=list(data.get("nodes", [])),
        camera=dict(data.get("camera", {})),
        raster=dict(data.get("raster", {})),
        shading=dict(data.get("shading", {})),
    )
    names = set()
    for entry in desc.meshes:
        if not isinstance(entry, dict) or "name" not in entry or "path" not in entry:
            raise SceneError("each mesh entry needs 'name' and 'path'")
        names.add(entry["name"])
    for node in desc.nodes:
        if not isinstance(node, dict) or "mesh" not in node:
            raise SceneError("each node needs a 'mesh' reference")
        if node["mesh"] not in names:
            raise SceneError(f"node references undeclared mesh {node['mesh']!r}")
    return desc


def serialize_scene_description(desc: SceneDescription) -> str:
    return json.dumps(desc.to_dict(), indent=2) + "\n"


def load_scene_file(path) -> SceneDescription:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise SceneError(f"cannot read scene file {path}: {exc}") from exc
    return parse_scene_description(text)


def _transform_from_entry(entry) -> np.ndarray:
    """A transform is a 4x4 row-major nested list or a TRS object."""
    if isinstance(entry, (list, tuple)):
        m = np.asarray(entry, dtype=np.float64)
        if m.shape != (4, 4):
            raise SceneError(f"matrix transform must be 4x4, got shape {m.shape}")
        return m
    if not isinstance(entry, dict):
        raise SceneError("transform must be a 4x4 matrix or a TRS object")
    m = np.eye(4)
    scale = entry.get("scale", 1.0)
    scale = np.asarray(scale, dtype=np.float64) * np.ones(3)
    rot = np.eye(3)
    rx, ry, rz = (math.radians(a) for a in entry.get("rotate", (0.0, 0.0, 0.0)))
    for axis, ang in ((0, rx), (1, ry), (2, rz)):
        c, s = math.cos(ang), math.sin(ang)
        r = np.eye(3)
        i, j = [(1, 2), (2, 0), (0, 1)][axis]
        r[i, i] = c
        r[j, j] = c
        r[i, j] = -s
        r[j, i] = s
        rot = r @ rot
    m[:3, :3] = rot * scale
    m[:3, 3] = np.asarray(entry.get("translate", (0.0, 0.0, 0.0)), dtype=np.float64)
    return m


def _expand_node_transforms(node) -> list[np.ndarray]:
    base = [_transform_from_entry(t) for t in node.get("transforms", [])]
    if not base:
        base = [np.eye(4)]
    grid = node.get("grid")
    if not grid:
        return base
    cx = int(grid.get("countX", 1))
    cy = int(grid.get("countY", 1))
    spacing = float(grid.get("spacing", 1.0))
    out = []
    for t in base:
        for iy in range(cy):
            for ix in range(cx):
                m = t.copy()
                m[0, 3] += (ix - (cx - 1) / 2.0) * spacing
                m[2, 3] += (iy - (cy - 1) / 2.0) * spacing
                out.append(m)
    return out


def camera_from_description(desc: SceneDescription) -> Camera:
    c = desc.camera
    return Camera.look_at(
        position=c.get("position", (0.0, 0.0, 5.0)),
        target=c.get("lookAt", (0.0, 0.0, 0.0)),
        up=c.get("up", (0.0, 1.0, 0.0)),
        fovy=math.radians(float(c.get("fovyDegrees", 60.0))),
        width=int(c.get("width", 640)),
        height=int(c.get("height", 480)),
        near=float(c.get("near", 0.1)),
        supersampling=int(c.get("superSampling", 1)),
    )


def raster_config_from_description(desc: SceneDescription) -> RasterConfig:
    cfg = RasterConfig()
    for key, value in desc.raster.items():
        if not hasattr(cfg, key):
            raise SceneError(f"unknown raster config key {key!r}")
        setattr(cfg, key, value)
    return cfg


def shading_config_from_description(desc: SceneDescription) -> ShadingConfig:
    cfg = ShadingConfig()
    for key, value in desc.shading.items():
        if not hasattr(cfg, key):
            raise SceneError(f"unknown shading config key {key!r}")
        if key in ("background", "base_color"):
            value = tuple(value)
        setattr(cfg, key, value)
    return cfg


def instantiate_scene(desc: SceneDescription, base_dir) -> list[SceneNode]:
    """Load the referenced meshes and expand nodes into SceneNodes."""
    base_dir = Path(base_dir)
    meshes = {}
    for entry in desc.meshes:
        mesh = load_mesh_asset(base_dir / entry["path"])
        mesh.name = entry["name"]
        tex = entry.get("texture")
        if tex:
            mesh.texture = build_mip_chain(load_texture(base_dir / tex))
        meshes[entry["name"]] = mesh
    return [SceneNode(mesh=meshes[node["mesh"]],
                      transforms=_expand_node_transforms(node))
            for node in desc.nodes]


# ---------------------------------------------------------------------------
# procedural geometry

def _mesh_from_arrays(positions, indices, uvs=None, colors=None, name="") -> Mesh:
    positions = np.asarray(positions, dtype=np.float64)
    indices = np.asarray(indices, dtype=np.uint32).ravel()
    aabb = np.stack([positions.min(axis=0), positions.max(axis=0)])
    return Mesh(positions=positions, indices=indices,
                triangle_count=len(indices) // 3, aabb=aabb,
                uvs=None if uvs is None else np.asarray(uvs, dtype=np.float64),
                vertex_colors=None if colors is None
                else np.asarray(colors, dtype=np.uint8),
                name=name)


def make_tessellated_quad(n: int) -> Mesh:
    """Unit quad in the XY plane split into an n x n grid: 2n^2 triangles,
    UVs spanning [0,1]^2, front faces toward +z."""
    if n < 1:
        raise ValueError("tessellation factor must be >= 1")
    axis = np.linspace(-0.5, 0.5, n + 1)
    xs, ys = np.meshgrid(axis, axis)
    positions = np.stack([xs.ravel(), ys.ravel(), np.zeros((n + 1) ** 2)], axis=1)
    uvs = np.stack([xs.ravel() + 0.5, ys.ravel() + 0.5], axis=1)
    tris = []
    for j in range(n):
        for i in range(n):
            a = j * (n + 1) + i
            b = a + 1
            c = a + n + 1
            d = c + 1
            tris.append((a, c, b))
            tris.append((b, c, d))
    return _mesh_from_arrays(positions, tris, uvs=uvs, name=f"quad{n}")


def make_sphere(rings: int, segments: int, radius: float = 1.0,
                name: str = "sphere") -> Mesh:
    """UV sphere with per-vertex colors encoding the normal direction."""
    if rings < 2 or segments < 3:
        raise ValueError("need rings >= 2 and segments >= 3")
    verts = []
    for r in range(rings + 1):
        theta = math.pi * r / rings
        for s in range(segments):
            phi = 2.0 * math.pi * s / segments
            verts.append((radius * math.sin(theta) * math.cos(phi),
                          radius * math.cos(theta),
                          radius * math.sin(theta) * math.sin(phi)))
    verts = np.asarray(verts)
    colors = np.clip((verts / radius * 0.5 + 0.5) * 255, 0, 255)
    colors = np.concatenate([colors, np.full((len(verts), 1), 255)], axis=1)
    tris = []
    for r in range(rings):
        for s in range(segments):
            a = r * segments + s
            b = r * segments + (s + 1) % segments
            c = a + segments
            d = b + segments
            if r > 0:
                tris.append((a, b, c))
            if r < rings - 1:
                tris.append((b, d, c))
    return _mesh_from_arrays(verts, tris, colors=colors, name=name)


def sphere_dims_for(tris: int) -> tuple[int, int]:
    """rings/segments whose UV sphere has roughly ``tris`` triangles."""
    segments = max(3, int(round(math.sqrt(tris / 2.0))))
    rings = max(2, int(round(tris / (2.0 * segments))) + 1)
    return rings, segments


def make_sphere_field(count: int, tris_per_sphere: int, seed: int = 0
                      ) -> list[SceneNode]:
    """``count`` spheres scattered in a cube in front of the origin."""
    rng = np.random.default_rng(seed)
    rings, segments = sphere_dims_for(tris_per_sphere)
    mesh = make_sphere(rings, segments, name="sphere")
    side = max(1.0, count ** (1.0 / 3.0)) * 2.2
    transforms = []
    for _ in range(count):
        m = np.eye(4)
        m[:3, :3] *= rng.uniform(0.4, 1.0)
        m[:3, 3] = rng.uniform(-side / 2, side / 2, size=3)
        transforms.append(m)
    return [SceneNode(mesh=mesh, transforms=transforms)]


def default_camera(width: int = 640, height: int = 480,
                   supersampling: int = 1) -> Camera:
    return Camera.look_at(position=(0.0, 0.0, 5.0), target=(0.0, 0.0, 0.0),
                          width=width, height=height,
                          supersampling=supersampling)


def make_classifier_scene() -> tuple[list[SceneNode], Camera]:
    """Triangles straddling the 128 px / 4096 px bbox thresholds for the
    default camera, so a render exercises all three stages."""
    camera = default_camera()
    # at depth 5 with fovy 60 and 480 px, one world unit spans ~83 px
    quads = [(0.08, -1.6, 1.2), (0.08, -1.3, 1.2),     # stage 1: tiny
             (0.5, 0.0, 1.4), (0.55, 0.8, 1.2),        # stage 2: medium
             (2.2, 0.0, -0.6), (2.6, -0.9, -1.0)]      # stage 3: large
    positions = []
    tris = []
    for size, cx, cy in quads:
        base = len(positions)
        h = size / 2.0
        positions += [(cx - h, cy - h, 0.0), (cx + h, cy - h, 0.0),
                      (cx - h, cy + h, 0.0), (cx + h, cy + h, 0.0)]
        tris.append((base + 0, base + 2, base + 1))
        tris.append((base + 1, base + 2, base + 3))
    # one near-plane crosser to hit the clipping path
    base = len(positions)
    positions += [(-0.2, -0.2, 5.5), (0.2, -0.2, 5.5), (0.0, 0.2, 3.0)]
    tris.append((base + 0, base + 2, base + 1))
    mesh = _mesh_from_arrays(positions, tris, name="classifier")
    return [SceneNode(mesh=mesh, transforms=[np.eye(4)])], camera


def make_lantern_grid(count_x: int, count_y: int, tris_per_mesh: int = 2000,
                      spacing: float = 2.0) -> list[SceneNode]:
    """A count_x x count_y grid of one moderately detailed mesh; the
    instancing stress pattern."""
    rings, segments = sphere_dims_for(tris_per_mesh)
    mesh = make_sphere(rings, segments, radius=0.7, name="lantern")
    transforms = []
    for iy in range(count_y):
        for ix in range(count_x):
            m = np.eye(4)
            m[0, 3] = (ix - (count_x - 1) / 2.0) * spacing
            m[2, 3] = (iy - (count_y - 1) / 2.0) * spacing
            transforms.append(m)
    return [SceneNode(mesh=mesh, transforms=transforms)]


def make_checker_texture(size: int = 256, cells: int = 8) -> MipChain:
    """Checkerboard RGBA texture with a full mip chain."""
    ys, xs = np.mgrid[0:size, 0:size]
    cell = size // cells
    checker = ((xs // cell + ys // cell) % 2).astype(np.uint8)
    img = np.empty((size, size, 4), dtype=np.uint8)
    img[..., 0] = np.where(checker == 1, 230, 40)
    img[..., 1] = np.where(checker == 1, 225, 45)
    img[..., 2] = np.where(checker == 1, 215, 60)
    img[..., 3] = 255
    return build_mip_chain(img)
