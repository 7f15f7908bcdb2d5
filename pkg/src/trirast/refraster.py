"""Sequential reference renderer.

Runs the exact same compiled kernels as the parallel pipeline, but strictly
single-threaded with in-order triangle processing and effectively unbounded
queues.  Comparing its framebuffer bit-for-bit against the pipeline's
verifies the scheduling machinery (batching, queues, barriers, merging)
rather than floating-point behavior, which is shared by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .config import RasterConfig
from .pipeline import build_context
from .scenecore import Camera, Framebuffer, build_draw_list, projection_vector

_UNBOUNDED = 1 << 40


@dataclass
class OracleConfig:
    raster: RasterConfig = field(default_factory=RasterConfig)
    # honor_stages=False rasterizes every projectable triangle with the
    # stage-1 small-triangle math regardless of bbox size; near-plane
    # crossers still go through the tile ray-cast path, which is the only
    # mechanism that can handle them.
    honor_stages: bool = True


def render_reference(scene, camera: Camera,
                     config: OracleConfig | None = None) -> Framebuffer:
    config = config or OracleConfig()
    cfg = config.raster
    draw_list = build_draw_list(scene, camera)
    ctx = build_context(draw_list, camera)
    width, height = camera.internal_width, camera.internal_height
    fb = Framebuffer(width, height)
    total = draw_list.total_triangles
    if total == 0:
        return fb
    p = projection_vector(camera)
    p0, p1 = float(p[0]), float(p[1])

    small_max = cfg.small_max_px if config.honor_stages else _UNBOUNDED
    medium_max = cfg.medium_max_px if config.honor_stages else _UNBOUNDED

    q2_item = np.empty(total, dtype=np.int64)
    q2_tri = np.empty(total, dtype=np.int64)
    s1_stats = np.zeros(kernels.STAGE1_STAT_SLOTS, dtype=np.int64)
    n2 = kernels.stage1_range(
        0, total, ctx.prefix,
        ctx.item_mv, ctx.item_vtx_off, ctx.item_idx_off,
        ctx.positions, ctx.indices,
        p0, p1, width, height, camera.near,
        cfg.tiny_cull, cfg.force_stage, small_max,
        fb.words, q2_item, q2_tri, 0, total, s1_stats)

    tiles_per_screen = (-(-width // cfg.tile_px)) * (-(-height // cfg.tile_px))
    s3_cap = max(1, n2 * tiles_per_screen)
    s3 = [np.empty(s3_cap, dtype=np.int64) for _ in range(4)]
    s2_stats = np.zeros(kernels.STAGE2_STAT_SLOTS, dtype=np.int64)
    n3 = 0
    if n2:
        n3 = kernels.stage2_range(
            0, n2, q2_item, q2_tri,
            ctx.prefix, ctx.item_mv, ctx.item_vtx_off, ctx.item_idx_off,
            ctx.positions, ctx.indices,
            p0, p1, width, height, camera.near,
            cfg.force_stage, medium_max, cfg.tile_px,
            fb.words, s3[0], s3[1], s3[2], s3[3], 0, s3_cap, s2_stats)

    if n3:
        rot_t = np.ascontiguousarray(camera.view_transform[:3, :3].T)
        cam = np.ascontiguousarray(camera.position)
        view_r2 = np.ascontiguousarray(camera.view_transform[2, :3])
        view_t2 = float(camera.view_transform[2, 3])
        s3_stats = np.zeros(1, dtype=np.int64)
        kernels.stage3_range(
            0, n3, s3[0], s3[1], s3[2], s3[3],
            ctx.prefix, ctx.item_mw, ctx.item_vtx_off, ctx.item_idx_off,
            ctx.positions, ctx.indices,
            rot_t, cam, view_r2, view_t2,
            p0, p1, width, height, camera.near, cfg.tile_px,
            fb.words, s3_stats)
    return fb
