"""Compiled per-triangle and per-pixel kernels.

Every rasterization code path (the three pipeline stages and the sequential
reference renderer) funnels through the functions in this module, so the
floating-point math is identical by construction; schedulers only decide
*who* runs a kernel over *which* range.  All kernels are nogil so Python
threads achieve real parallelism, and fastmath stays off to keep IEEE
semantics reproducible.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# result codes from triangle classification; the first seven double as
# stats-array slots, slot 7 counts fragments
ST_RASTERIZED = 0
ST_FORWARD = 1
CULL_FRUSTUM = 2
CULL_OFFSCREEN = 3
CULL_TINY = 4
CULL_BACKFACE = 5
CULL_DEGENERATE = 6
STAT_FRAGMENTS = 7
STAGE1_STAT_SLOTS = 8

# stage-2 stats slots
S2_DIRECT = 0
S2_TILED = 1
S2_DROPPED = 2
S2_FRAGMENTS = 3
S2_TILES = 4
STAGE2_STAT_SLOTS = 5

_U3 = np.uint32(3)
_U36 = np.uint64(36)


@njit(nogil=True, cache=True)
def _merge(fb, pix, depth, gid_u, scratch_f, scratch_u):
    # float64 -> float32 assignment rounds to nearest, matching np.float32()
    scratch_f[0] = depth
    word = (np.uint64(scratch_u[0] >> _U3) << _U36) | gid_u
    if word < fb[pix]:
        fb[pix] = word


@njit(nogil=True, cache=True)
def _process_tri(x0, y0, z0, x1, y1, z1, x2, y2, z2,
                 m, gid,
                 p0, p1, width, height, near,
                 tiny_cull, force_stage, small_max,
                 fb, scratch_f, scratch_u):
    """Classify one triangle and rasterize it if it is small.

    Returns (code, fragments).  ST_FORWARD means the caller must queue the
    triangle for stage 2 (too large, or crossing the near plane).
    """
    vx0 = m[0, 0] * x0 + m[0, 1] * y0 + m[0, 2] * z0 + m[0, 3]
    vy0 = m[1, 0] * x0 + m[1, 1] * y0 + m[1, 2] * z0 + m[1, 3]
    vz0 = m[2, 0] * x0 + m[2, 1] * y0 + m[2, 2] * z0 + m[2, 3]
    vx1 = m[0, 0] * x1 + m[0, 1] * y1 + m[0, 2] * z1 + m[0, 3]
    vy1 = m[1, 0] * x1 + m[1, 1] * y1 + m[1, 2] * z1 + m[1, 3]
    vz1 = m[2, 0] * x1 + m[2, 1] * y1 + m[2, 2] * z1 + m[2, 3]
    vx2 = m[0, 0] * x2 + m[0, 1] * y2 + m[0, 2] * z2 + m[0, 3]
    vy2 = m[1, 0] * x2 + m[1, 1] * y2 + m[1, 2] * z2 + m[1, 3]
    vz2 = m[2, 0] * x2 + m[2, 1] * y2 + m[2, 2] * z2 + m[2, 3]
    d0 = -vz0
    d1 = -vz1
    d2 = -vz2

    if d0 < near and d1 < near and d2 < near:
        return CULL_FRUSTUM, 0
    if force_stage >= 2 or d0 < near or d1 < near or d2 < near:
        return ST_FORWARD, 0

    nx0 = vx0 * p0 / d0
    ny0 = vy0 * p1 / d0
    nx1 = vx1 * p0 / d1
    ny1 = vy1 * p1 / d1
    nx2 = vx2 * p0 / d2
    ny2 = vy2 * p1 / d2

    if ((nx0 < -1.0 and nx1 < -1.0 and nx2 < -1.0) or
            (nx0 > 1.0 and nx1 > 1.0 and nx2 > 1.0) or
            (ny0 < -1.0 and ny1 < -1.0 and ny2 < -1.0) or
            (ny0 > 1.0 and ny1 > 1.0 and ny2 > 1.0)):
        return CULL_FRUSTUM, 0

    px0 = (nx0 + 1.0) * 0.5 * width
    py0 = (1.0 - ny0) * 0.5 * height
    px1 = (nx1 + 1.0) * 0.5 * width
    py1 = (1.0 - ny1) * 0.5 * height
    px2 = (nx2 + 1.0) * 0.5 * width
    py2 = (1.0 - ny2) * 0.5 * height

    minx = min(px0, px1, px2)
    maxx = max(px0, px1, px2)
    miny = min(py0, py1, py2)
    maxy = max(py0, py1, py2)

    ix0 = max(int(np.floor(minx)), 0)
    ix1 = min(int(np.ceil(maxx)), width)
    iy0 = max(int(np.floor(miny)), 0)
    iy1 = min(int(np.ceil(maxy)), height)
    if ix0 >= ix1 or iy0 >= iy1:
        return CULL_OFFSCREEN, 0

    if tiny_cull:
        # does any sample (i + 0.5, j + 0.5) fall inside the float bbox?
        fx = np.ceil(minx - 0.5)
        fy = np.ceil(miny - 0.5)
        if fx + 0.5 > maxx or fy + 0.5 > maxy:
            return CULL_TINY, 0

    e1x = px1 - px0
    e1y = py1 - py0
    e2x = px2 - px0
    e2y = py2 - py0
    denom = e1x * e2y - e1y * e2x
    if denom == 0.0:
        return CULL_DEGENERATE, 0
    if denom < 0.0:
        return CULL_BACKFACE, 0

    if force_stage != 1 and (ix1 - ix0) * (iy1 - iy0) >= small_max:
        return ST_FORWARD, 0

    inv = 1.0 / denom
    s_dx = e2y * inv
    s_dy = -e2x * inv
    t_dx = -e1y * inv
    t_dy = e1x * inv
    s_00 = (-px0 * e2y + py0 * e2x) * inv
    t_00 = (-e1x * py0 + e1y * px0) * inv
    z0i = 1.0 / d0
    z1i = 1.0 / d1
    z2i = 1.0 / d2
    gid_u = np.uint64(gid)

    frags = 0
    for iy in range(iy0, iy1):
        sy = iy + 0.5
        sx = ix0 + 0.5
        s = s_00 + sx * s_dx + sy * s_dy
        t = t_00 + sx * t_dx + sy * t_dy
        rowbase = iy * width
        for ix in range(ix0, ix1):
            if s >= 0.0 and t >= 0.0 and s + t <= 1.0:
                depth_i = (1.0 - s - t) * z0i + s * z1i + t * z2i
                _merge(fb, rowbase + ix, 1.0 / depth_i, gid_u,
                       scratch_f, scratch_u)
                frags += 1
            s += s_dx
            t += t_dx
    return ST_RASTERIZED, frags


@njit(nogil=True, cache=True)
def stage1_range(start, end, prefix,
                 item_mv, item_vtx_off, item_idx_off,
                 positions, indices,
                 p0, p1, width, height, near,
                 tiny_cull, force_stage, small_max,
                 fb, q_item, q_tri, q_count, q_cap, stats):
    """Process global triangle IDs [start, end); small triangles rasterize
    in place, the rest go to the stage-2 queue buffers.

    Returns the updated queue count, which keeps growing past ``q_cap`` (so
    the caller can report the required capacity) while writes stop at the
    capacity.
    """
    scratch_f = np.empty(1, np.float32)
    scratch_u = scratch_f.view(np.uint32)
    item = np.searchsorted(prefix, start, side="right") - 1
    count = q_count
    for gid in range(start, end):
        while gid >= prefix[item + 1]:
            item += 1
        local = gid - prefix[item]
        io = item_idx_off[item] + 3 * local
        vo = item_vtx_off[item]
        ia = vo + np.int64(indices[io])
        ib = vo + np.int64(indices[io + 1])
        ic = vo + np.int64(indices[io + 2])
        code, frags = _process_tri(
            positions[ia, 0], positions[ia, 1], positions[ia, 2],
            positions[ib, 0], positions[ib, 1], positions[ib, 2],
            positions[ic, 0], positions[ic, 1], positions[ic, 2],
            item_mv[item], gid,
            p0, p1, width, height, near,
            tiny_cull, force_stage, small_max,
            fb, scratch_f, scratch_u)
        if code == ST_FORWARD:
            if count < q_cap:
                q_item[count] = item
                q_tri[count] = local
            count += 1
        stats[code] += 1
        stats[STAT_FRAGMENTS] += frags
    return count


@njit(nogil=True, cache=True)
def stage1_instanced_range(start, end, group_prefix,
                           group_item_off, group_item_count, group_items,
                           prefix, item_mv, item_vtx_off, item_idx_off,
                           positions, indices,
                           p0, p1, width, height, near,
                           tiny_cull, force_stage, small_max,
                           fb, q_item, q_tri, q_count, q_cap, stats):
    """Instanced variant: iterate unique triangles, fetch each once, then
    draw it under every surviving instance transform of its node."""
    scratch_f = np.empty(1, np.float32)
    scratch_u = scratch_f.view(np.uint32)
    g = np.searchsorted(group_prefix, start, side="right") - 1
    count = q_count
    for ut in range(start, end):
        while ut >= group_prefix[g + 1]:
            g += 1
        local = ut - group_prefix[g]
        first_item = group_items[group_item_off[g]]
        io = item_idx_off[first_item] + 3 * local
        vo = item_vtx_off[first_item]
        ia = vo + np.int64(indices[io])
        ib = vo + np.int64(indices[io + 1])
        ic = vo + np.int64(indices[io + 2])
        x0 = positions[ia, 0]
        y0 = positions[ia, 1]
        z0 = positions[ia, 2]
        x1 = positions[ib, 0]
        y1 = positions[ib, 1]
        z1 = positions[ib, 2]
        x2 = positions[ic, 0]
        y2 = positions[ic, 1]
        z2 = positions[ic, 2]
        for k in range(group_item_count[g]):
            item = group_items[group_item_off[g] + k]
            gid = prefix[item] + local
            code, frags = _process_tri(
                x0, y0, z0, x1, y1, z1, x2, y2, z2,
                item_mv[item], gid,
                p0, p1, width, height, near,
                tiny_cull, force_stage, small_max,
                fb, scratch_f, scratch_u)
            if code == ST_FORWARD:
                if count < q_cap:
                    q_item[count] = item
                    q_tri[count] = local
                count += 1
            stats[code] += 1
            stats[STAT_FRAGMENTS] += frags
    return count


@njit(nogil=True, cache=True)
def clip_near(vx0, vy0, vz0, vx1, vy1, vz1, vx2, vy2, vz2, near,
              out_x, out_y, out_z):
    """Sutherland-Hodgman clip of a view-space triangle against the near
    plane (keep z <= -near).  Writes up to 4 vertices, returns the count."""
    in_x = (vx0, vx1, vx2)
    in_y = (vy0, vy1, vy2)
    in_z = (vz0, vz1, vz2)
    n = 0
    for i in range(3):
        j = (i + 1) % 3
        da = -in_z[i] - near
        db = -in_z[j] - near
        if da >= 0.0:
            out_x[n] = in_x[i]
            out_y[n] = in_y[i]
            out_z[n] = in_z[i]
            n += 1
        if (da >= 0.0) != (db >= 0.0):
            u = da / (da - db)
            out_x[n] = in_x[i] + u * (in_x[j] - in_x[i])
            out_y[n] = in_y[i] + u * (in_y[j] - in_y[i])
            out_z[n] = in_z[i] + u * (in_z[j] - in_z[i])
            n += 1
    return n


@njit(nogil=True, cache=True)
def stage2_range(k0, k1, q_item, q_tri,
                 prefix, item_mv, item_vtx_off, item_idx_off,
                 positions, indices,
                 p0, p1, width, height, near,
                 force_stage, medium_max, tile_px,
                 fb, s3_item, s3_tri, s3_tx, s3_ty, s3_count, s3_cap, stats):
    """Process stage-2 queue entries [k0, k1): rasterize medium triangles
    directly, split near-plane crossers and huge triangles into 64x64 tiles.

    Returns the updated stage-3 queue count (keeps counting past capacity)."""
    scratch_f = np.empty(1, np.float32)
    scratch_u = scratch_f.view(np.uint32)
    cx = np.empty(4, np.float64)
    cy = np.empty(4, np.float64)
    cz = np.empty(4, np.float64)
    count = s3_count
    for k in range(k0, k1):
        item = q_item[k]
        local = q_tri[k]
        io = item_idx_off[item] + 3 * local
        vo = item_vtx_off[item]
        ia = vo + np.int64(indices[io])
        ib = vo + np.int64(indices[io + 1])
        ic = vo + np.int64(indices[io + 2])
        m = item_mv[item]
        x0 = positions[ia, 0]
        y0 = positions[ia, 1]
        z0 = positions[ia, 2]
        x1 = positions[ib, 0]
        y1 = positions[ib, 1]
        z1 = positions[ib, 2]
        x2 = positions[ic, 0]
        y2 = positions[ic, 1]
        z2 = positions[ic, 2]
        vx0 = m[0, 0] * x0 + m[0, 1] * y0 + m[0, 2] * z0 + m[0, 3]
        vy0 = m[1, 0] * x0 + m[1, 1] * y0 + m[1, 2] * z0 + m[1, 3]
        vz0 = m[2, 0] * x0 + m[2, 1] * y0 + m[2, 2] * z0 + m[2, 3]
        vx1 = m[0, 0] * x1 + m[0, 1] * y1 + m[0, 2] * z1 + m[0, 3]
        vy1 = m[1, 0] * x1 + m[1, 1] * y1 + m[1, 2] * z1 + m[1, 3]
        vz1 = m[2, 0] * x1 + m[2, 1] * y1 + m[2, 2] * z1 + m[2, 3]
        vx2 = m[0, 0] * x2 + m[0, 1] * y2 + m[0, 2] * z2 + m[0, 3]
        vy2 = m[1, 0] * x2 + m[1, 1] * y2 + m[1, 2] * z2 + m[1, 3]
        vz2 = m[2, 0] * x2 + m[2, 1] * y2 + m[2, 2] * z2 + m[2, 3]
        near_cross = (-vz0 < near) or (-vz1 < near) or (-vz2 < near)

        nclip = clip_near(vx0, vy0, vz0, vx1, vy1, vz1, vx2, vy2, vz2, near,
                          cx, cy, cz)
        if nclip == 0:
            stats[S2_DROPPED] += 1
            continue
        minx = 1e300
        maxx = -1e300
        miny = 1e300
        maxy = -1e300
        for i in range(nclip):
            d = -cz[i]
            if d < near:
                d = near       # clipped verts sit on the plane up to rounding
            px = (cx[i] * p0 / d + 1.0) * 0.5 * width
            py = (1.0 - cy[i] * p1 / d) * 0.5 * height
            minx = min(minx, px)
            maxx = max(maxx, px)
            miny = min(miny, py)
            maxy = max(maxy, py)
        ix0 = max(int(np.floor(minx)), 0)
        ix1 = min(int(np.ceil(maxx)), width)
        iy0 = max(int(np.floor(miny)), 0)
        iy1 = min(int(np.ceil(maxy)), height)
        if ix0 >= ix1 or iy0 >= iy1:
            stats[S2_DROPPED] += 1
            continue
        area = (ix1 - ix0) * (iy1 - iy0)

        if force_stage == 3 or near_cross or area >= medium_max:
            tx0 = ix0 // tile_px
            tx1 = (ix1 - 1) // tile_px
            ty0 = iy0 // tile_px
            ty1 = (iy1 - 1) // tile_px
            for ty in range(ty0, ty1 + 1):
                for tx in range(tx0, tx1 + 1):
                    if count < s3_cap:
                        s3_item[count] = item
                        s3_tri[count] = local
                        s3_tx[count] = tx
                        s3_ty[count] = ty
                    count += 1
                    stats[S2_TILES] += 1
            stats[S2_TILED] += 1
            continue

        # direct rasterization; projection of the original vertices is valid
        # because the triangle does not cross the near plane
        d0 = -vz0
        d1 = -vz1
        d2 = -vz2
        px0 = (vx0 * p0 / d0 + 1.0) * 0.5 * width
        py0 = (1.0 - vy0 * p1 / d0) * 0.5 * height
        px1 = (vx1 * p0 / d1 + 1.0) * 0.5 * width
        py1 = (1.0 - vy1 * p1 / d1) * 0.5 * height
        px2 = (vx2 * p0 / d2 + 1.0) * 0.5 * width
        py2 = (1.0 - vy2 * p1 / d2) * 0.5 * height
        e1x = px1 - px0
        e1y = py1 - py0
        e2x = px2 - px0
        e2y = py2 - py0
        denom = e1x * e2y - e1y * e2x
        if denom <= 0.0:
            stats[S2_DROPPED] += 1
            continue
        inv = 1.0 / denom
        s_dx = e2y * inv
        s_dy = -e2x * inv
        t_dx = -e1y * inv
        t_dy = e1x * inv
        s_00 = (-px0 * e2y + py0 * e2x) * inv
        t_00 = (-e1x * py0 + e1y * px0) * inv
        z0i = 1.0 / d0
        z1i = 1.0 / d1
        z2i = 1.0 / d2
        gid_u = np.uint64(prefix[item] + local)
        w = ix1 - ix0
        npx = w * (iy1 - iy0)
        frags = 0
        for i in range(npx):
            x = ix0 + i % w
            y = iy0 + i // w
            sx = x + 0.5
            sy = y + 0.5
            s = s_00 + sx * s_dx + sy * s_dy
            t = t_00 + sx * t_dx + sy * t_dy
            if s >= 0.0 and t >= 0.0 and s + t <= 1.0:
                depth_i = (1.0 - s - t) * z0i + s * z1i + t * z2i
                _merge(fb, y * width + x, 1.0 / depth_i, gid_u,
                       scratch_f, scratch_u)
                frags += 1
        stats[S2_DIRECT] += 1
        stats[S2_FRAGMENTS] += frags
    return count


@njit(nogil=True, cache=True)
def stage3_range(k0, k1, s3_item, s3_tri, s3_tx, s3_ty,
                 prefix, item_mw, item_vtx_off, item_idx_off,
                 positions, indices,
                 rot_t, cam, view_r2, view_t2,
                 p0, p1, width, height, near, tile_px,
                 fb, stats):
    """Ray-cast one 64x64 tile per queue entry in world space.

    ``rot_t`` is the view->world rotation, ``view_r2``/``view_t2`` the third
    row of the world->view transform (for the depth of a hit point).
    Returns the number of fragments produced."""
    scratch_f = np.empty(1, np.float32)
    scratch_u = scratch_f.view(np.uint32)
    frags = 0
    for k in range(k0, k1):
        item = s3_item[k]
        local = s3_tri[k]
        io = item_idx_off[item] + 3 * local
        vo = item_vtx_off[item]
        ia = vo + np.int64(indices[io])
        ib = vo + np.int64(indices[io + 1])
        ic = vo + np.int64(indices[io + 2])
        m = item_mw[item]
        gid_u = np.uint64(prefix[item] + local)
        # world-space triangle
        ax = m[0, 0] * positions[ia, 0] + m[0, 1] * positions[ia, 1] + m[0, 2] * positions[ia, 2] + m[0, 3]
        ay = m[1, 0] * positions[ia, 0] + m[1, 1] * positions[ia, 1] + m[1, 2] * positions[ia, 2] + m[1, 3]
        az = m[2, 0] * positions[ia, 0] + m[2, 1] * positions[ia, 1] + m[2, 2] * positions[ia, 2] + m[2, 3]
        bx = m[0, 0] * positions[ib, 0] + m[0, 1] * positions[ib, 1] + m[0, 2] * positions[ib, 2] + m[0, 3]
        by = m[1, 0] * positions[ib, 0] + m[1, 1] * positions[ib, 1] + m[1, 2] * positions[ib, 2] + m[1, 3]
        bz = m[2, 0] * positions[ib, 0] + m[2, 1] * positions[ib, 1] + m[2, 2] * positions[ib, 2] + m[2, 3]
        cx = m[0, 0] * positions[ic, 0] + m[0, 1] * positions[ic, 1] + m[0, 2] * positions[ic, 2] + m[0, 3]
        cy = m[1, 0] * positions[ic, 0] + m[1, 1] * positions[ic, 1] + m[1, 2] * positions[ic, 2] + m[1, 3]
        cz = m[2, 0] * positions[ic, 0] + m[2, 1] * positions[ic, 1] + m[2, 2] * positions[ic, 2] + m[2, 3]
        e1x = bx - ax
        e1y = by - ay
        e1z = bz - az
        e2x = cx - ax
        e2y = cy - ay
        e2z = cz - az

        x_lo = s3_tx[k] * tile_px
        x_hi = min(x_lo + tile_px, width)
        y_lo = s3_ty[k] * tile_px
        y_hi = min(y_lo + tile_px, height)
        for y in range(y_lo, y_hi):
            rowbase = y * width
            ndy = 1.0 - 2.0 * (y + 0.5) / height
            dvy = ndy / p1
            for x in range(x_lo, x_hi):
                ndx = 2.0 * (x + 0.5) / width - 1.0
                dvx = ndx / p0
                # view-space direction (dvx, dvy, -1) rotated into the world
                dx = rot_t[0, 0] * dvx + rot_t[0, 1] * dvy - rot_t[0, 2]
                dy = rot_t[1, 0] * dvx + rot_t[1, 1] * dvy - rot_t[1, 2]
                dz = rot_t[2, 0] * dvx + rot_t[2, 1] * dvy - rot_t[2, 2]
                hx = dy * e2z - dz * e2y
                hy = dz * e2x - dx * e2z
                hz = dx * e2y - dy * e2x
                a = e1x * hx + e1y * hy + e1z * hz
                if a == 0.0:
                    continue
                f = 1.0 / a
                sx = cam[0] - ax
                sy = cam[1] - ay
                sz = cam[2] - az
                s = f * (sx * hx + sy * hy + sz * hz)
                if s < 0.0:
                    continue
                qx = sy * e1z - sz * e1y
                qy = sz * e1x - sx * e1z
                qz = sx * e1y - sy * e1x
                t = f * (dx * qx + dy * qy + dz * qz)
                if t < 0.0 or s + t > 1.0:
                    continue
                tray = f * (e2x * qx + e2y * qy + e2z * qz)
                if tray <= 0.0:
                    continue
                wx = cam[0] + tray * dx
                wy = cam[1] + tray * dy
                wz = cam[2] + tray * dz
                depth = -(view_r2[0] * wx + view_r2[1] * wy
                          + view_r2[2] * wz + view_t2)
                if depth < near:
                    continue
                _merge(fb, rowbase + x, depth, gid_u, scratch_f, scratch_u)
                frags += 1
    stats[0] += frags
    return frags
