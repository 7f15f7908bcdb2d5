#!/usr/bin/env python3
"""Worker scaling on a dense generated scene; reports per-worker-count frame
times and triangle throughput."""

import argparse
import sys
import time

import numpy as np

from trirast.config import RasterConfig
from trirast.pipeline import render_draw_list
from trirast.scenecore import Camera, SceneNode, build_draw_list
from trirast.scenedesc import make_tessellated_quad


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=708, help="quad tessellation (2n^2 tris)")
    ap.add_argument("--width", type=int, default=1920)
    ap.add_argument("--height", type=int, default=1080)
    ap.add_argument("--frames", type=int, default=5)
    ap.add_argument("--workers", default="1,2,4,8")
    args = ap.parse_args()

    mesh = make_tessellated_quad(args.n)
    scene = [SceneNode(mesh=mesh, transforms=[np.eye(4)])]
    camera = Camera.look_at(position=(0.0, 0.0, 1.2), target=(0.0, 0.0, 0.0),
                            width=args.width, height=args.height)
    draw_list = build_draw_list(scene, camera)
    print(f"{draw_list.total_triangles} triangles at {args.width}x{args.height}")

    base = None
    for workers in (int(w) for w in args.workers.split(",")):
        cfg = RasterConfig(workers=workers)
        render_draw_list(draw_list, camera, cfg)   # warmup / JIT
        best = min(_timed(draw_list, camera, cfg) for _ in range(args.frames))
        mtris = draw_list.total_triangles / best / 1e6
        speedup = "" if base is None else f"  speedup {base / best:.2f}x"
        base = base or best
        print(f"workers={workers}: {best * 1e3:8.2f} ms  {mtris:7.2f} Mtri/s{speedup}")
    return 0


def _timed(draw_list, camera, cfg) -> float:
    t0 = time.perf_counter()
    render_draw_list(draw_list, camera, cfg)
    return time.perf_counter() - t0


if __name__ == "__main__":
    sys.exit(main())
