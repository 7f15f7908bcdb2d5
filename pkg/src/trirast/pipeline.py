"""Three-stage rasterization pipeline.

Stage 1 claims batches of triangles from a shared work counter and
rasterizes the small ones; stage 2 handles forwarded triangles (medium ones
directly, huge or near-plane-crossing ones split into 64x64 tiles); stage 3
ray-casts each tile in world space.  Stages are separated by barriers.

Workers are Python threads driving nogil compiled kernels.  Each worker
owns a private framebuffer; after the last stage the buffers are reduced
with an elementwise unsigned minimum, which is associative and commutative
and therefore bit-identical to per-pixel atomic min merging at any worker
count.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass

import numpy as np

from . import kernels
from .config import FrameStats, RasterConfig, Stage1Stats, Stage2Stats, Stage3Stats
from .scenecore import (CLEAR, Camera, CapacityError, DrawList, Framebuffer,
                        build_draw_list, projection_vector)


def project_vertex(view_pos, p) -> tuple[np.ndarray, float]:
    """Elementwise projection: returns (ndc_xy, depth).

    depth is the positive linear view-space distance; for points at or
    behind the camera (depth <= 0) the NDC is returned as NaN and callers
    must treat it as invalid.
    """
    view_pos = np.asarray(view_pos, dtype=np.float64)
    scaled = view_pos * np.asarray(p, dtype=np.float64)
    depth = float(scaled[2])
    if depth > 0.0:
        ndc = scaled[:2] / depth
    else:
        ndc = np.array([np.nan, np.nan])
    return ndc, depth


def ndc_to_pixel(ndc, width: int, height: int) -> np.ndarray:
    """Viewport transform to continuous y-down pixel coordinates; pixel
    (i, j) has its sample at (i + 0.5, j + 0.5)."""
    ndc = np.asarray(ndc, dtype=np.float64)
    return np.array([(ndc[0] + 1.0) * 0.5 * width,
                     (1.0 - ndc[1]) * 0.5 * height])


def clip_triangle_near_plane(view_verts, near: float) -> np.ndarray:
    """Sutherland-Hodgman clip against z = -near; returns 0, 3 or 4
    view-space vertices (used only for bbox computation, triangles are
    never actually split)."""
    v = np.asarray(view_verts, dtype=np.float64)
    ox = np.empty(4)
    oy = np.empty(4)
    oz = np.empty(4)
    n = kernels.clip_near(v[0, 0], v[0, 1], v[0, 2],
                          v[1, 0], v[1, 1], v[1, 2],
                          v[2, 0], v[2, 1], v[2, 2], near, ox, oy, oz)
    return np.stack([ox[:n], oy[:n], oz[:n]], axis=1)


@dataclass
class RenderContext:
    """Flattened geometry arrays shared read-only by all kernels."""

    prefix: np.ndarray          # int64, n_items + 1
    item_mv: np.ndarray         # (n, 3, 4) object -> view
    item_mw: np.ndarray         # (n, 3, 4) object -> world
    item_vtx_off: np.ndarray    # int64
    item_idx_off: np.ndarray    # int64
    positions: np.ndarray       # (nv, 3) float64
    indices: np.ndarray         # uint32
    # instancing groups (nodes with their surviving instances)
    group_prefix: np.ndarray | None = None
    group_item_off: np.ndarray | None = None
    group_item_count: np.ndarray | None = None
    group_items: np.ndarray | None = None
    max_instances: int = 1


def build_context(draw_list: DrawList, camera: Camera) -> RenderContext:
    items = draw_list.items
    n = len(items)
    view = camera.view_transform
    item_mv = np.empty((n, 3, 4))
    item_mw = np.empty((n, 3, 4))
    item_vtx_off = np.empty(n, dtype=np.int64)
    item_idx_off = np.empty(n, dtype=np.int64)
    mesh_offsets: dict[int, tuple[int, int]] = {}
    pos_chunks: list[np.ndarray] = []
    idx_chunks: list[np.ndarray] = []
    nv = 0
    ni = 0
    for k, item in enumerate(items):
        item_mw[k] = item.instance_transform[:3]
        item_mv[k] = (view @ item.instance_transform)[:3]
        key = id(item.mesh)
        if key not in mesh_offsets:
            pos = item.mesh.positions_f64()
            idx = item.mesh.indices_u32()
            mesh_offsets[key] = (nv, ni)
            pos_chunks.append(pos)
            idx_chunks.append(idx)
            nv += len(pos)
            ni += len(idx)
        item_vtx_off[k], item_idx_off[k] = mesh_offsets[key]

    # group consecutive items of the same node for the instanced stage 1
    group_counts: list[int] = []
    group_tris: list[int] = []
    flat_items: list[int] = []
    k = 0
    max_instances = 1
    while k < n:
        node = items[k].node_index
        j = k
        while j < n and items[j].node_index == node:
            flat_items.append(j)
            j += 1
        group_counts.append(j - k)
        group_tris.append(items[k].triangle_count)
        max_instances = max(max_instances, j - k)
        k = j
    group_prefix = np.zeros(len(group_counts) + 1, dtype=np.int64)
    np.cumsum(group_tris, out=group_prefix[1:])
    group_item_count = np.array(group_counts, dtype=np.int64)
    group_item_off = np.zeros(len(group_counts), dtype=np.int64)
    if len(group_counts) > 1:
        np.cumsum(group_item_count[:-1], out=group_item_off[1:])

    return RenderContext(
        prefix=draw_list.prefix_sums.astype(np.int64),
        item_mv=item_mv, item_mw=item_mw,
        item_vtx_off=item_vtx_off, item_idx_off=item_idx_off,
        positions=np.ascontiguousarray(np.concatenate(pos_chunks))
            if pos_chunks else np.zeros((0, 3)),
        indices=np.ascontiguousarray(np.concatenate(idx_chunks))
            if idx_chunks else np.zeros(0, dtype=np.uint32),
        group_prefix=group_prefix, group_item_off=group_item_off,
        group_item_count=group_item_count,
        group_items=np.array(flat_items, dtype=np.int64),
        max_instances=max_instances)


def _claim_loop(total: int, chunk: int, fn, workers: int):
    """Shared dynamic work distribution: each worker atomically claims
    [b, b+chunk) ranges until the space is exhausted."""
    counter = [0]
    lock = threading.Lock()
    errors: list[BaseException] = []

    def run(wid):
        try:
            while True:
                with lock:
                    b = counter[0]
                    counter[0] += chunk
                if b >= total:
                    return
                fn(wid, b, min(b + chunk, total))
        except BaseException as exc:   # re-raised on the caller thread
            errors.append(exc)

    if workers <= 1:
        run(0)
    else:
        threads = [threading.Thread(target=run, args=(w,))
                   for w in range(workers)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
    if errors:
        raise errors[0]


def _merge_framebuffers(bufs: list[np.ndarray], workers: int) -> np.ndarray:
    out = bufs[0]
    if len(bufs) == 1:
        return out
    if workers <= 1 or out.size < 1 << 16:
        for b in bufs[1:]:
            np.minimum(out, b, out=out)
        return out
    # numpy ufuncs drop the GIL; split rows across threads
    bounds = np.linspace(0, out.size, workers + 1, dtype=np.int64)

    def run(w):
        lo, hi = bounds[w], bounds[w + 1]
        for b in bufs[1:]:
            np.minimum(out[lo:hi], b[lo:hi], out=out[lo:hi])

    threads = [threading.Thread(target=run, args=(w,)) for w in range(workers)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    return out


def render_draw_list(draw_list: DrawList, camera: Camera,
                     cfg: RasterConfig | None = None,
                     ctx: RenderContext | None = None
                     ) -> tuple[Framebuffer, FrameStats]:
    """Run the three rasterization stages over a prebuilt draw list."""
    cfg = cfg or RasterConfig()
    workers = cfg.resolved_workers()
    width = camera.internal_width
    height = camera.internal_height
    total = draw_list.total_triangles
    if ctx is None:
        ctx = build_context(draw_list, camera)
    p = projection_vector(camera)
    p0, p1 = float(p[0]), float(p[1])
    near = camera.near
    s2_cap = cfg.resolved_stage2_capacity(total)
    s3_cap = cfg.resolved_stage3_capacity(total)

    stats = FrameStats(total_triangles=total, items=len(draw_list.items))
    fb = Framebuffer(width, height)
    if total == 0:
        return fb, stats

    instanced = (cfg.instancing == "on"
                 or (cfg.instancing == "auto" and ctx.max_instances >= 2))
    stats.instanced = instanced

    worker_fbs = [fb.words] + [np.full(width * height, CLEAR, dtype=np.uint64)
                               for _ in range(workers - 1)]
    q2_item = [np.empty(s2_cap, dtype=np.int64) for _ in range(workers)]
    q2_tri = [np.empty(s2_cap, dtype=np.int64) for _ in range(workers)]
    q2_counts = [0] * workers
    s1_stats = [np.zeros(kernels.STAGE1_STAT_SLOTS, dtype=np.int64)
                for _ in range(workers)]

    # ---- stage 1 ----
    t0 = time.perf_counter()
    work_total = int(ctx.group_prefix[-1]) if instanced else total

    def stage1_work(wid, b, e):
        if instanced:
            q2_counts[wid] = kernels.stage1_instanced_range(
                b, e, ctx.group_prefix, ctx.group_item_off,
                ctx.group_item_count, ctx.group_items,
                ctx.prefix, ctx.item_mv, ctx.item_vtx_off, ctx.item_idx_off,
                ctx.positions, ctx.indices,
                p0, p1, width, height, near,
                cfg.tiny_cull, cfg.force_stage, cfg.small_max_px,
                worker_fbs[wid], q2_item[wid], q2_tri[wid],
                q2_counts[wid], s2_cap, s1_stats[wid])
        else:
            q2_counts[wid] = kernels.stage1_range(
                b, e, ctx.prefix,
                ctx.item_mv, ctx.item_vtx_off, ctx.item_idx_off,
                ctx.positions, ctx.indices,
                p0, p1, width, height, near,
                cfg.tiny_cull, cfg.force_stage, cfg.small_max_px,
                worker_fbs[wid], q2_item[wid], q2_tri[wid],
                q2_counts[wid], s2_cap, s1_stats[wid])

    _claim_loop(work_total, cfg.batch_size, stage1_work, workers)
    stats.stage1_s = time.perf_counter() - t0

    s1 = np.sum(s1_stats, axis=0)
    stats.stage1 = Stage1Stats(
        rasterized=int(s1[kernels.ST_RASTERIZED]),
        forwarded=int(s1[kernels.ST_FORWARD]),
        culled_frustum=int(s1[kernels.CULL_FRUSTUM]),
        culled_offscreen=int(s1[kernels.CULL_OFFSCREEN]),
        culled_tiny=int(s1[kernels.CULL_TINY]),
        culled_backface=int(s1[kernels.CULL_BACKFACE]),
        culled_degenerate=int(s1[kernels.CULL_DEGENERATE]),
        fragments=int(s1[kernels.STAT_FRAGMENTS]))

    needed = sum(q2_counts)
    if needed > s2_cap:
        raise CapacityError(
            f"stage-2 queue overflow: {needed} entries forwarded, "
            f"capacity {s2_cap}; raise stage2_capacity to at least {needed}")

    # ---- barrier: seal stage-2 queue ----
    n2 = needed
    e2_item = np.concatenate([q2_item[w][:q2_counts[w]] for w in range(workers)]) \
        if n2 else np.zeros(0, dtype=np.int64)
    e2_tri = np.concatenate([q2_tri[w][:q2_counts[w]] for w in range(workers)]) \
        if n2 else np.zeros(0, dtype=np.int64)

    # ---- stage 2 ----
    t0 = time.perf_counter()
    q3 = [(np.empty(s3_cap, dtype=np.int64), np.empty(s3_cap, dtype=np.int64),
           np.empty(s3_cap, dtype=np.int64), np.empty(s3_cap, dtype=np.int64))
          for _ in range(workers)]
    q3_counts = [0] * workers
    s2_stats = [np.zeros(kernels.STAGE2_STAT_SLOTS, dtype=np.int64)
                for _ in range(workers)]

    def stage2_work(wid, b, e):
        si, st, sx, sy = q3[wid]
        q3_counts[wid] = kernels.stage2_range(
            b, e, e2_item, e2_tri,
            ctx.prefix, ctx.item_mv, ctx.item_vtx_off, ctx.item_idx_off,
            ctx.positions, ctx.indices,
            p0, p1, width, height, near,
            cfg.force_stage, cfg.medium_max_px, cfg.tile_px,
            worker_fbs[wid], si, st, sx, sy,
            q3_counts[wid], s3_cap, s2_stats[wid])

    if n2:
        _claim_loop(n2, 64, stage2_work, workers)
    stats.stage2_s = time.perf_counter() - t0
    s2 = np.sum(s2_stats, axis=0)
    stats.stage2 = Stage2Stats(
        direct=int(s2[kernels.S2_DIRECT]), tiled=int(s2[kernels.S2_TILED]),
        dropped=int(s2[kernels.S2_DROPPED]), tiles=int(s2[kernels.S2_TILES]),
        fragments=int(s2[kernels.S2_FRAGMENTS]))

    needed3 = sum(q3_counts)
    if needed3 > s3_cap:
        raise CapacityError(
            f"stage-3 queue overflow: {needed3} tile entries, capacity "
            f"{s3_cap}; raise stage3_capacity to at least {needed3}")

    # ---- barrier: seal stage-3 queue ----
    n3 = needed3
    if n3:
        e3 = [np.concatenate([q3[w][j][:q3_counts[w]] for w in range(workers)])
              for j in range(4)]
    else:
        e3 = [np.zeros(0, dtype=np.int64)] * 4

    # ---- stage 3 ----
    t0 = time.perf_counter()
    rot = camera.view_transform[:3, :3]
    rot_t = np.ascontiguousarray(rot.T)
    cam = np.ascontiguousarray(camera.position)
    view_r2 = np.ascontiguousarray(camera.view_transform[2, :3])
    view_t2 = float(camera.view_transform[2, 3])
    s3_stats = [np.zeros(1, dtype=np.int64) for _ in range(workers)]

    def stage3_work(wid, b, e):
        kernels.stage3_range(
            b, e, e3[0], e3[1], e3[2], e3[3],
            ctx.prefix, ctx.item_mw, ctx.item_vtx_off, ctx.item_idx_off,
            ctx.positions, ctx.indices,
            rot_t, cam, view_r2, view_t2,
            p0, p1, width, height, near, cfg.tile_px,
            worker_fbs[wid], s3_stats[wid])

    if n3:
        _claim_loop(n3, 4, stage3_work, workers)
    stats.stage3_s = time.perf_counter() - t0
    stats.stage3 = Stage3Stats(entries=n3,
                               fragments=int(np.sum([s[0] for s in s3_stats])))

    # ---- final merge of the per-worker buffers ----
    t0 = time.perf_counter()
    _merge_framebuffers(worker_fbs, workers)
    stats.merge_s = time.perf_counter() - t0
    return fb, stats


def render_frame(scene, camera: Camera, cfg: RasterConfig | None = None
                 ) -> tuple[Framebuffer, FrameStats]:
    """Frustum-cull, assemble the draw list, and run all three stages."""
    draw_list = build_draw_list(scene, camera)
    return render_draw_list(draw_list, camera, cfg)


# ---------------------------------------------------------------------------
# Python-side classification mirror (debug views, routing inspection)

STAGE1 = 1
STAGE2_DIRECT = 2
STAGE3_TILED = 3


def classify_route(view_verts, camera: Camera, cfg: RasterConfig | None = None):
    """Which mechanism rasterizes a triangle with these view-space vertices?

    Returns (route, bbox_pixel_count) with route in {STAGE1, STAGE2_DIRECT,
    STAGE3_TILED} or None if the triangle is culled.  Mirrors the kernel
    classification rules; used for debug views, not by the pipeline itself.
    """
    cfg = cfg or RasterConfig()
    v = np.asarray(view_verts, dtype=np.float64)
    width, height = camera.internal_width, camera.internal_height
    p = projection_vector(camera)
    depths = -v[:, 2]
    if np.all(depths < camera.near):
        return None, 0
    near_cross = bool(np.any(depths < camera.near))
    if near_cross:
        poly = clip_triangle_near_plane(v, camera.near)
        if len(poly) == 0:
            return None, 0
    else:
        poly = v
    d = np.maximum(-poly[:, 2], camera.near)
    px = (poly[:, 0] * p[0] / d + 1.0) * 0.5 * width
    py = (1.0 - poly[:, 1] * p[1] / d) * 0.5 * height
    ix0 = max(int(np.floor(px.min())), 0)
    ix1 = min(int(np.ceil(px.max())), width)
    iy0 = max(int(np.floor(py.min())), 0)
    iy1 = min(int(np.ceil(py.max())), height)
    if ix0 >= ix1 or iy0 >= iy1:
        return None, 0
    area = (ix1 - ix0) * (iy1 - iy0)
    if near_cross or area >= cfg.medium_max_px:
        return STAGE3_TILED, area
    if area >= cfg.small_max_px:
        return STAGE2_DIRECT, area
    return STAGE1, area
