"""Full-screen resolve: turn the visibility buffer into a shaded image.

Each non-background pixel holds a global triangle ID; a binary search over
the draw list's prefix sums finds the owning draw item, a world-space ray
through the pixel reconstructs barycentrics, and shading interpolates
attributes (texture with mip selection, vertex colors, or a flat color).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import ShadingConfig, RasterConfig
from .pipeline import STAGE1, STAGE2_DIRECT, STAGE3_TILED, classify_route
from .scenecore import (CLEAR, Camera, DrawList, Framebuffer,
                        TRIANGLE_ID_MASK, projection_vector)

_MISS_COLOR = np.array([255, 0, 255, 255], dtype=np.uint8)


@dataclass
class ResolvedPixel:
    color: np.ndarray
    linear_depth: float
    global_triangle_id: int
    draw_item_index: int
    barycentrics: tuple[float, float, float]   # (s, t, v)


@dataclass
class ResolveStats:
    shaded: int = 0
    background: int = 0
    degenerate: int = 0


def find_mesh_for_triangle(prefix_sums, global_triangle_id: int) -> int:
    index, _ = binary_search_prefix(prefix_sums, global_triangle_id)
    return index


def binary_search_prefix(prefix_sums, global_triangle_id: int) -> tuple[int, int]:
    """Largest m with prefix[m] <= id; returns (m, probe count)."""
    n = len(prefix_sums) - 1
    if not 0 <= global_triangle_id < int(prefix_sums[n]):
        raise ValueError(f"triangle id {global_triangle_id} out of range")
    lo, hi = 0, n - 1
    probes = 0
    while lo < hi:
        mid = (lo + hi + 1) // 2
        probes += 1
        if int(prefix_sums[mid]) <= global_triangle_id:
            lo = mid
        else:
            hi = mid - 1
    return lo, probes


def _ray_through_pixel(x: int, y: int, camera: Camera) -> tuple[np.ndarray, np.ndarray]:
    """World-space ray through sample (x + 0.5, y + 0.5)."""
    p = projection_vector(camera)
    w, h = camera.internal_width, camera.internal_height
    ndx = 2.0 * (x + 0.5) / w - 1.0
    ndy = 1.0 - 2.0 * (y + 0.5) / h
    d_view = np.array([ndx / p[0], ndy / p[1], -1.0])
    rot = camera.view_transform[:3, :3]
    return camera.position.copy(), rot.T @ d_view


def _clamp_bary(s: float, t: float) -> tuple[float, float, float]:
    s = max(s, 0.0)
    t = max(t, 0.0)
    total = s + t
    if total > 1.0:
        s /= total
        t /= total
    return s, t, 1.0 - s - t


def reconstruct_hit(pixel, draw_item, local_triangle_index: int, camera: Camera):
    """Intersect the pixel's world-space ray with the triangle's plane.

    Returns (world_point, (s, t, v)) with barycentrics clamped into the
    simplex, or None when the ray is parallel to the plane.
    """
    mesh = draw_item.mesh
    idx = mesh.indices_u32()
    pos = mesh.positions_f64()
    tri = idx[3 * local_triangle_index:3 * local_triangle_index + 3]
    obj = pos[tri]
    m = draw_item.instance_transform
    world = obj @ m[:3, :3].T + m[:3, 3]
    origin, direction = _ray_through_pixel(pixel[0], pixel[1], camera)
    e1 = world[1] - world[0]
    e2 = world[2] - world[0]
    normal = np.cross(e1, e2)
    denom = float(direction @ normal)
    if denom == 0.0:
        return None
    t_ray = float((world[0] - origin) @ normal) / denom
    hit = origin + t_ray * direction
    w = hit - world[0]
    d00 = float(e1 @ e1)
    d01 = float(e1 @ e2)
    d11 = float(e2 @ e2)
    den = d00 * d11 - d01 * d01
    if den == 0.0:
        return None
    we1 = float(w @ e1)
    we2 = float(w @ e2)
    s = (d11 * we1 - d01 * we2) / den
    t = (d00 * we2 - d01 * we1) / den
    return hit, _clamp_bary(s, t)


def resolve_pixel(framebuffer: Framebuffer, draw_list: DrawList,
                  camera: Camera, x: int, y: int) -> ResolvedPixel | None:
    """Scalar resolve of one pixel; None for background."""
    word = framebuffer.word_at(x, y)
    if word == CLEAR:
        return None
    gid = int(word & TRIANGLE_ID_MASK)
    depth28 = int(word >> np.uint64(36))
    depth = float(np.uint32(depth28 << 3).view(np.float32))
    item_index = find_mesh_for_triangle(draw_list.prefix_sums, gid)
    item = draw_list.items[item_index]
    local = gid - int(draw_list.prefix_sums[item_index])
    hit = reconstruct_hit((x, y), item, local, camera)
    bary = hit[1] if hit is not None else (0.0, 0.0, 1.0)
    return ResolvedPixel(color=_MISS_COLOR.copy(), linear_depth=depth,
                         global_triangle_id=gid, draw_item_index=item_index,
                         barycentrics=bary)


def estimate_mip_level(pixel, world_verts, uvs, tex_width: int, tex_height: int,
                       camera: Camera, chain_length: int) -> float:
    """Mip level from the pixel footprint in texel space.

    Rays through the pixel and its right/top/top-right neighbors hit the
    triangle's plane (possibly outside the triangle); UVs are inter- or
    extrapolated from the plane barycentrics and the larger per-axis texel
    delta to the right and top samples sets the level.
    """
    world_verts = np.asarray(world_verts, dtype=np.float64)
    uvs = np.asarray(uvs, dtype=np.float64)
    x, y = pixel
    e1 = world_verts[1] - world_verts[0]
    e2 = world_verts[2] - world_verts[0]
    normal = np.cross(e1, e2)
    d00 = float(e1 @ e1)
    d01 = float(e1 @ e2)
    d11 = float(e2 @ e2)
    den = d00 * d11 - d01 * d01
    if den == 0.0:
        return 0.0
    samples = []
    for px, py in ((x, y), (x + 1, y), (x, y - 1)):
        origin, direction = _ray_through_pixel(px, py, camera)
        denom = float(direction @ normal)
        if denom == 0.0:
            return 0.0
        t_ray = float((world_verts[0] - origin) @ normal) / denom
        w = origin + t_ray * direction - world_verts[0]
        we1 = float(w @ e1)
        we2 = float(w @ e2)
        s = (d11 * we1 - d01 * we2) / den
        t = (d00 * we2 - d01 * we1) / den
        samples.append((1.0 - s - t) * uvs[0] + s * uvs[1] + t * uvs[2])
    scale = np.array([tex_width, tex_height], dtype=np.float64)
    d_right = np.abs(samples[1] - samples[0]) * scale
    d_top = np.abs(samples[2] - samples[0]) * scale
    extent = max(d_right.max(), d_top.max())
    if extent <= 0.0:
        return 0.0
    return min(max(math.log2(extent), 0.0), float(chain_length - 1))


# ---------------------------------------------------------------------------
# vectorized full-frame resolve

def _moller_trumbore_bulk(origin, dirs, w0, w1, w2):
    """Vectorized ray/plane barycentrics; returns (s, t, hit_mask, hits)."""
    e1 = w1 - w0
    e2 = w2 - w0
    normal = np.cross(e1, e2)
    denom = np.einsum("ij,ij->i", dirs, normal)
    ok = denom != 0.0
    safe = np.where(ok, denom, 1.0)
    t_ray = np.einsum("ij,ij->i", w0 - origin, normal) / safe
    hits = origin + t_ray[:, None] * dirs
    w = hits - w0
    d00 = np.einsum("ij,ij->i", e1, e1)
    d01 = np.einsum("ij,ij->i", e1, e2)
    d11 = np.einsum("ij,ij->i", e2, e2)
    den = d00 * d11 - d01 * d01
    ok &= den != 0.0
    den = np.where(ok, den, 1.0)
    we1 = np.einsum("ij,ij->i", w, e1)
    we2 = np.einsum("ij,ij->i", w, e2)
    s = (d11 * we1 - d01 * we2) / den
    t = (d00 * we2 - d01 * we1) / den
    return s, t, ok, hits


def _pixel_dirs(xs, ys, camera: Camera):
    p = projection_vector(camera)
    w, h = camera.internal_width, camera.internal_height
    ndx = 2.0 * (xs + 0.5) / w - 1.0
    ndy = 1.0 - 2.0 * (ys + 0.5) / h
    d_view = np.stack([ndx / p[0], ndy / p[1], -np.ones_like(ndx)], axis=1)
    return d_view @ camera.view_transform[:3, :3]


def _sample_bilinear(level_img, u, v):
    h, w = level_img.shape[:2]
    x = u * w - 0.5
    y = (1.0 - v) * h - 0.5
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    fx = (x - x0)[:, None]
    fy = (y - y0)[:, None]
    x0m = np.mod(x0, w)
    x1m = np.mod(x0 + 1, w)
    y0m = np.mod(y0, h)
    y1m = np.mod(y0 + 1, h)
    c00 = level_img[y0m, x0m].astype(np.float64)
    c10 = level_img[y0m, x1m].astype(np.float64)
    c01 = level_img[y1m, x0m].astype(np.float64)
    c11 = level_img[y1m, x1m].astype(np.float64)
    top = c00 * (1 - fx) + c10 * fx
    bot = c01 * (1 - fx) + c11 * fx
    return top * (1 - fy) + bot * fy


def _sample_texture(chain, u, v, levels, mip_filter: str):
    u = np.mod(u, 1.0)
    v = np.mod(v, 1.0)
    out = np.empty((len(u), 4), dtype=np.float64)
    if mip_filter == "trilinear":
        lo = np.floor(levels).astype(np.int64)
        hi = np.minimum(lo + 1, len(chain.levels) - 1)
        frac = (levels - lo)[:, None]
        for lv in np.unique(lo):
            sel = lo == lv
            a = _sample_bilinear(chain.levels[lv], u[sel], v[sel])
            b = np.empty_like(a)
            for lv2 in np.unique(hi[sel]):
                sub = hi[sel] == lv2
                b[sub] = _sample_bilinear(chain.levels[lv2], u[sel][sub], v[sel][sub])
            out[sel] = a * (1 - frac[sel]) + b * frac[sel]
    else:
        nearest = np.rint(levels).astype(np.int64)
        for lv in np.unique(nearest):
            sel = nearest == lv
            out[sel] = _sample_bilinear(chain.levels[lv], u[sel], v[sel])
    return out


def _estimate_levels_bulk(xs, ys, w0, w1, w2, uv0, uv1, uv2, tex_w, tex_h,
                          camera: Camera, chain_length: int):
    e1 = w1 - w0
    e2 = w2 - w0
    normal = np.cross(e1, e2)
    d00 = np.einsum("ij,ij->i", e1, e1)
    d01 = np.einsum("ij,ij->i", e1, e2)
    d11 = np.einsum("ij,ij->i", e2, e2)
    den = d00 * d11 - d01 * d01
    ok = den != 0.0
    den = np.where(ok, den, 1.0)
    origin = camera.position
    uvs = []
    for dx, dy in ((0, 0), (1, 0), (0, -1)):
        dirs = _pixel_dirs(xs + dx, ys + dy, camera)
        denom = np.einsum("ij,ij->i", dirs, normal)
        ok &= denom != 0.0
        denom = np.where(denom != 0.0, denom, 1.0)
        t_ray = np.einsum("ij,ij->i", w0 - origin, normal) / denom
        w = origin + t_ray[:, None] * dirs - w0
        we1 = np.einsum("ij,ij->i", w, e1)
        we2 = np.einsum("ij,ij->i", w, e2)
        s = (d11 * we1 - d01 * we2) / den
        t = (d00 * we2 - d01 * we1) / den
        uvs.append((1.0 - s - t)[:, None] * uv0 + s[:, None] * uv1
                   + t[:, None] * uv2)
    scale = np.array([tex_w, tex_h], dtype=np.float64)
    d_right = np.abs(uvs[1] - uvs[0]) * scale
    d_top = np.abs(uvs[2] - uvs[0]) * scale
    extent = np.maximum(d_right.max(axis=1), d_top.max(axis=1))
    levels = np.where(extent > 0.0, np.log2(np.maximum(extent, 1e-300)), 0.0)
    levels = np.clip(levels, 0.0, chain_length - 1)
    return np.where(ok, levels, 0.0)


def resolve_frame(framebuffer: Framebuffer, draw_list: DrawList, camera: Camera,
                  shading: ShadingConfig | None = None
                  ) -> tuple[np.ndarray, ResolveStats]:
    """Shade every visibility-buffer pixel; returns an RGBA8 image at the
    internal (supersampled) resolution plus resolve statistics."""
    shading = shading or ShadingConfig()
    w, h = framebuffer.width, framebuffer.height
    words = framebuffer.words
    stats = ResolveStats()
    image = np.empty((h * w, 4), dtype=np.uint8)
    image[:] = np.array(shading.background, dtype=np.uint8)
    mask = words != CLEAR
    stats.background = int(words.size - mask.sum())
    if not mask.any():
        return image.reshape(h, w, 4), stats

    pix = np.nonzero(mask)[0]
    gids = (words[pix] & TRIANGLE_ID_MASK).astype(np.int64)
    prefix = draw_list.prefix_sums.astype(np.int64)
    item_of = np.searchsorted(prefix, gids, side="right") - 1
    xs = pix % w
    ys = pix // w

    for k in np.unique(item_of):
        sel = item_of == k
        item = draw_list.items[k]
        mesh = item.mesh
        idx = mesh.indices_u32()
        pos = mesh.positions_f64()
        local = gids[sel] - prefix[k]
        tri = idx[(3 * local[:, None] + np.arange(3)).ravel()].reshape(-1, 3)
        m = item.instance_transform
        obj0 = pos[tri[:, 0]]
        obj1 = pos[tri[:, 1]]
        obj2 = pos[tri[:, 2]]
        rot = m[:3, :3].T
        off = m[:3, 3]
        w0 = obj0 @ rot + off
        w1 = obj1 @ rot + off
        w2 = obj2 @ rot + off
        dirs = _pixel_dirs(xs[sel], ys[sel], camera)
        s, t, ok, _hits = _moller_trumbore_bulk(camera.position, dirs, w0, w1, w2)
        stats.degenerate += int((~ok).sum())
        # clamp into the simplex: resolve math can land marginally outside
        # the rasterizer's inside set
        s = np.maximum(s, 0.0)
        t = np.maximum(t, 0.0)
        tot = s + t
        over = tot > 1.0
        s = np.where(over, s / np.where(over, tot, 1.0), s)
        t = np.where(over, t / np.where(over, tot, 1.0), t)
        v = 1.0 - s - t

        mode = shading.mode
        if mode == "auto":
            if mesh.uvs is not None and mesh.texture is not None:
                mode = "textured"
            elif mesh.vertex_colors is not None:
                mode = "vertexColor"
            else:
                mode = "flat"
        if mode == "textured" and mesh.uvs is not None and mesh.texture is not None:
            uv0 = mesh.uvs[tri[:, 0]]
            uv1 = mesh.uvs[tri[:, 1]]
            uv2 = mesh.uvs[tri[:, 2]]
            chain = mesh.texture
            tex_h, tex_w = chain.base.shape[:2]
            levels = _estimate_levels_bulk(xs[sel], ys[sel], w0, w1, w2,
                                           uv0, uv1, uv2, tex_w, tex_h,
                                           camera, len(chain.levels))
            u = v * uv0[:, 0] + s * uv1[:, 0] + t * uv2[:, 0]
            vv = v * uv0[:, 1] + s * uv1[:, 1] + t * uv2[:, 1]
            colors = _sample_texture(chain, u, vv, levels, shading.mip_filter)
        elif mode == "vertexColor" and mesh.vertex_colors is not None:
            c0 = mesh.vertex_colors[tri[:, 0]].astype(np.float64)
            c1 = mesh.vertex_colors[tri[:, 1]].astype(np.float64)
            c2 = mesh.vertex_colors[tri[:, 2]].astype(np.float64)
            colors = v[:, None] * c0 + s[:, None] * c1 + t[:, None] * c2
        else:
            colors = np.broadcast_to(
                np.asarray(shading.base_color, dtype=np.float64),
                (sel.sum(), 4)).copy()

        if shading.headlight:
            normal = np.cross(w1 - w0, w2 - w0)
            nlen = np.linalg.norm(normal, axis=1)
            dlen = np.linalg.norm(dirs, axis=1)
            ndl = np.abs(np.einsum("ij,ij->i", normal, dirs)) / \
                np.maximum(nlen * dlen, 1e-300)
            shade = 0.2 + 0.8 * ndl
            colors = colors.copy()
            colors[:, :3] *= shade[:, None]

        colors = np.clip(np.rint(colors), 0, 255).astype(np.uint8)
        if (~ok).any():
            colors[~ok] = _MISS_COLOR
        image[pix[sel]] = colors
        stats.shaded += int(sel.sum())
    return image.reshape(h, w, 4), stats


def downsample(image: np.ndarray, factor: int) -> np.ndarray:
    """Box-average factor x factor blocks per channel with floor rounding."""
    if factor == 1:
        return image
    h, w = image.shape[:2]
    if h % factor or w % factor:
        raise ValueError("internal resolution must be a multiple of the factor")
    blocks = image.reshape(h // factor, factor, w // factor, factor, 4)
    total = blocks.astype(np.uint32).sum(axis=(1, 3))
    return (total // (factor * factor)).astype(np.uint8)


_STAGE_COLORS = {
    STAGE1: (80, 190, 90, 255),
    STAGE2_DIRECT: (235, 205, 60, 255),
    STAGE3_TILED: (225, 70, 70, 255),
}


def debug_view(framebuffer: Framebuffer, draw_list: DrawList, camera: Camera,
               mode: str, cfg: RasterConfig | None = None,
               background=(40, 40, 44, 255)) -> np.ndarray:
    """Diagnostic views of the visibility buffer.

    Modes: 'depth' (log-scaled grayscale), 'stageID' (color by the stage
    whose classification the winning triangle satisfies), 'bboxSize'
    (green/yellow/red by the bbox-size thresholds), 'meshID'.
    """
    if mode not in ("depth", "stageID", "bboxSize", "meshID"):
        raise ValueError(f"unknown debug view mode {mode!r}")
    cfg = cfg or RasterConfig()
    w, h = framebuffer.width, framebuffer.height
    words = framebuffer.words
    image = np.empty((h * w, 4), dtype=np.uint8)
    image[:] = np.array(background, dtype=np.uint8)
    mask = words != CLEAR
    if not mask.any():
        return image.reshape(h, w, 4)
    pix = np.nonzero(mask)[0]

    if mode == "depth":
        depth28 = (words[pix] >> np.uint64(36)).astype(np.uint64)
        depths = (depth28.astype(np.uint32) << np.uint32(3)).view(np.float32)
        depths = depths.astype(np.float64)
        lo, hi = depths.min(), depths.max()
        span = math.log(hi / lo) if hi > lo else 1.0
        shade = np.log(depths / lo) / span if hi > lo else np.zeros_like(depths)
        gray = np.clip(np.rint(255 * (1.0 - shade)), 0, 255).astype(np.uint8)
        image[pix, 0] = gray
        image[pix, 1] = gray
        image[pix, 2] = gray
        image[pix, 3] = 255
        return image.reshape(h, w, 4)

    gids = (words[pix] & TRIANGLE_ID_MASK).astype(np.int64)
    prefix = draw_list.prefix_sums.astype(np.int64)
    item_of = np.searchsorted(prefix, gids, side="right") - 1

    if mode == "meshID":
        palette = np.stack([(53 + 97 * np.arange(256)) % 256,
                            (131 + 61 * np.arange(256)) % 256,
                            (197 + 151 * np.arange(256)) % 256,
                            np.full(256, 255)], axis=1).astype(np.uint8)
        image[pix] = palette[item_of % 256]
        return image.reshape(h, w, 4)

    # stageID / bboxSize: classify each unique winning triangle once
    view = camera.view_transform
    uniq, inverse = np.unique(gids, return_inverse=True)
    colors = np.empty((len(uniq), 4), dtype=np.uint8)
    for j, gid in enumerate(uniq):
        k = int(np.searchsorted(prefix, gid, side="right") - 1)
        item = draw_list.items[k]
        local = int(gid - prefix[k])
        idx = item.mesh.indices_u32()
        pos = item.mesh.positions_f64()
        tri = idx[3 * local:3 * local + 3]
        obj = np.concatenate([pos[tri], np.ones((3, 1))], axis=1)
        vv = (obj @ item.instance_transform.T @ view.T)[:, :3]
        route, area = classify_route(vv, camera, cfg)
        if route is None:
            colors[j] = _MISS_COLOR
        elif mode == "stageID":
            colors[j] = _STAGE_COLORS[route]
        else:
            if area < cfg.small_max_px:
                colors[j] = _STAGE_COLORS[STAGE1]
            elif area < cfg.medium_max_px:
                colors[j] = _STAGE_COLORS[STAGE2_DIRECT]
            else:
                colors[j] = _STAGE_COLORS[STAGE3_TILED]
    image[pix] = colors[inverse]
    return image.reshape(h, w, 4)
