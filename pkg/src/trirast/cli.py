"""Command-line front end: render, bench, gen, compress, inspect."""

from __future__ import annotations

import argparse
import csv
import hashlib
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import geomcodec, scenedesc
from .config import RasterConfig, ShadingConfig, WORKERS_ENV
from .pipeline import render_draw_list
from .refraster import OracleConfig, render_reference
from .resolvepass import debug_view, downsample, resolve_frame
from .scenecore import Camera, CapacityError, build_draw_list
from .scenedesc import SceneError

EXIT_OK = 0
EXIT_PARSE = 1
EXIT_CAPACITY = 2
EXIT_IO = 3


def _err(msg: str) -> None:
    print(f"trirast: {msg}", file=sys.stderr)


def write_image(path, image: np.ndarray) -> None:
    """Write RGBA8 as PNG or binary PPM (P6, alpha dropped) by extension."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".ppm":
        header = f"P6\n{image.shape[1]} {image.shape[0]}\n255\n".encode()
        path.write_bytes(header + image[..., :3].tobytes())
    elif suffix == ".png":
        from PIL import Image
        Image.fromarray(image, mode="RGBA").save(path)
    else:
        raise ValueError(f"unsupported image extension {suffix!r} (use .png or .ppm)")


def _apply_render_flags(args, camera: Camera, cfg: RasterConfig) -> tuple[Camera, RasterConfig]:
    if args.workers is not None:
        cfg.workers = args.workers
    if args.tiny_cull is not None:
        cfg.tiny_cull = args.tiny_cull == "on"
    if args.force_stage is not None:
        cfg.force_stage = args.force_stage
    if args.supersampling is not None and args.supersampling != camera.supersampling:
        camera = Camera(position=camera.position,
                        view_transform=camera.view_transform,
                        fovy=camera.fovy, aspect=camera.aspect,
                        near=camera.near, image_width=camera.image_width,
                        image_height=camera.image_height,
                        supersampling=args.supersampling)
    return camera, cfg


def _load_scene(scene_file):
    desc = scenedesc.load_scene_file(scene_file)
    scene = scenedesc.instantiate_scene(desc, Path(scene_file).parent)
    camera = scenedesc.camera_from_description(desc)
    cfg = scenedesc.raster_config_from_description(desc)
    shading = scenedesc.shading_config_from_description(desc)
    return scene, camera, cfg, shading


def cmd_render(args) -> int:
    try:
        scene, camera, cfg, shading = _load_scene(args.scene)
    except (SceneError, geomcodec.ParseError) as exc:
        _err(str(exc))
        return EXIT_PARSE
    except OSError as exc:
        _err(str(exc))
        return EXIT_IO
    camera, cfg = _apply_render_flags(args, camera, cfg)
    try:
        draw_list = build_draw_list(scene, camera)
        if args.reference:
            fb = render_reference(scene, camera, OracleConfig(raster=cfg))
            stats = None
        else:
            fb, stats = render_draw_list(draw_list, camera, cfg)
    except CapacityError as exc:
        _err(str(exc))
        return EXIT_CAPACITY
    t0 = time.perf_counter()
    if args.debug_view:
        image = debug_view(fb, draw_list, camera, args.debug_view, cfg,
                           background=shading.background)
    else:
        image, _ = resolve_frame(fb, draw_list, camera, shading)
    image = downsample(image, camera.supersampling)
    if stats is not None:
        stats.resolve_s = time.perf_counter() - t0
        print(stats.summary())
    try:
        write_image(args.output, image)
    except (OSError, ValueError) as exc:
        _err(str(exc))
        return EXIT_IO
    print(f"wrote {args.output} ({image.shape[1]}x{image.shape[0]})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# bench

def _bench_configs(args, camera, cfg):
    """Expand requested toggles into (label, camera, cfg, timing_only) rows."""
    rows = [("base", camera, cfg, True)]
    for toggle in args.toggle or []:
        if toggle == "tinyCull":
            on = RasterConfig(**{**cfg.__dict__, "tiny_cull": True})
            off = RasterConfig(**{**cfg.__dict__, "tiny_cull": False})
            rows = [("tinyCull=on", camera, on, True),
                    ("tinyCull=off", camera, off, True)]
        elif toggle == "workers":
            rows = [(f"workers={n}", camera,
                     RasterConfig(**{**cfg.__dict__, "workers": n}), True)
                    for n in (1, 2, 4, 8)]
        elif toggle == "instancing":
            rows = [(f"instancing={m}", camera,
                     RasterConfig(**{**cfg.__dict__, "instancing": m}), True)
                    for m in ("on", "off")]
        elif toggle == "superSampling":
            rows = []
            for ss in (1, 2, 4):
                cam = Camera(position=camera.position,
                             view_transform=camera.view_transform,
                             fovy=camera.fovy, aspect=camera.aspect,
                             near=camera.near, image_width=camera.image_width,
                             image_height=camera.image_height, supersampling=ss)
                rows.append((f"superSampling={ss}", cam, cfg, False))
    return rows


def cmd_bench(args) -> int:
    try:
        scene, camera, cfg, shading = _load_scene(args.scene)
    except (SceneError, geomcodec.ParseError) as exc:
        _err(str(exc))
        return EXIT_PARSE
    except OSError as exc:
        _err(str(exc))
        return EXIT_IO
    camera, cfg = _apply_render_flags(args, camera, cfg)
    scene_name = Path(args.scene).stem
    frames = args.frames
    reports = []
    hashes = {}
    try:
        for label, cam, row_cfg, timing_only in _bench_configs(args, camera, cfg):
            draw_list = build_draw_list(scene, cam)
            for _ in range(5):   # warmup (includes JIT)
                fb, stats = render_draw_list(draw_list, cam, row_cfg)
            digest = hashlib.sha256(fb.words.tobytes()).hexdigest()
            if timing_only:
                # timing-only toggles must not change the image
                prev = hashes.setdefault("timing", digest)
                if prev != digest:
                    _err(f"framebuffer hash changed under timing-only "
                         f"toggle {label!r}")
                    return EXIT_PARSE
            sums = {"stage1": 0.0, "stage2": 0.0, "stage3": 0.0,
                    "resolve": 0.0, "total": 0.0}
            fragments = 0
            culls = 0
            for _ in range(frames):
                t0 = time.perf_counter()
                fb, stats = render_draw_list(draw_list, cam, row_cfg)
                image, _ = resolve_frame(fb, draw_list, cam, shading)
                downsample(image, cam.supersampling)
                total = time.perf_counter() - t0
                sums["stage1"] += stats.stage1_s
                sums["stage2"] += stats.stage2_s
                sums["stage3"] += stats.stage3_s
                sums["resolve"] += total - stats.raster_s
                sums["total"] += total
                fragments = stats.fragments
                s1 = stats.stage1
                culls = (s1.culled_frustum + s1.culled_offscreen + s1.culled_tiny
                         + s1.culled_backface + s1.culled_degenerate)
            reports.append({
                "scene": scene_name, "config": label,
                "visibleTriangles": draw_list.total_triangles,
                "stage1Ms": 1e3 * sums["stage1"] / frames,
                "stage2Ms": 1e3 * sums["stage2"] / frames,
                "stage3Ms": 1e3 * sums["stage3"] / frames,
                "resolveMs": 1e3 * sums["resolve"] / frames,
                "totalMs": 1e3 * sums["total"] / frames,
                "fragments": fragments, "culled": culls,
            })
    except CapacityError as exc:
        _err(str(exc))
        return EXIT_CAPACITY

    cols = ["scene", "config", "visibleTriangles", "stage1Ms", "stage2Ms",
            "stage3Ms", "resolveMs", "totalMs", "fragments", "culled"]
    fmt = {float: "{:.2f}".format, int: "{:d}".format}
    table = [[fmt.get(type(r[c]), str)(r[c]) for c in cols] for r in reports]
    widths = [max(len(c), *(len(row[i]) for row in table))
              for i, c in enumerate(cols)]
    print("  ".join(c.ljust(w) for c, w in zip(cols, widths)))
    for row in table:
        print("  ".join(v.rjust(w) for v, w in zip(row, widths)))
    if args.output:
        try:
            with open(args.output, "w", newline="") as fh:
                writer = csv.DictWriter(fh, fieldnames=cols)
                writer.writeheader()
                writer.writerows(reports)
        except OSError as exc:
            _err(str(exc))
            return EXIT_IO
        print(f"wrote {args.output}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# gen

def _write_scene(out_dir: Path, name: str, desc: scenedesc.SceneDescription) -> Path:
    path = out_dir / f"{name}.scene.json"
    path.write_text(scenedesc.serialize_scene_description(desc))
    return path


def _camera_dict(position, look_at, width=640, height=480):
    return {"position": list(position), "lookAt": list(look_at),
            "up": [0.0, 1.0, 0.0], "fovyDegrees": 60.0, "near": 0.1,
            "width": width, "height": height, "superSampling": 1}


def cmd_gen(args) -> int:
    out_dir = Path(args.out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        if args.kind == "tessellatedQuad":
            mesh = scenedesc.make_tessellated_quad(args.n)
            geomcodec.save_mesh(out_dir / "quad.mesh", mesh)
            from PIL import Image
            chain = scenedesc.make_checker_texture()
            Image.fromarray(chain.base, mode="RGBA").save(out_dir / "checker.png")
            desc = scenedesc.SceneDescription(
                meshes=[{"name": "quad", "path": "quad.mesh",
                         "texture": "checker.png"}],
                nodes=[{"mesh": "quad", "transforms": [np.eye(4).tolist()]}],
                camera=_camera_dict((0, 0, 2.2), (0, 0, 0)))
            path = _write_scene(out_dir, "quad", desc)
            print(f"wrote {path} ({mesh.triangle_count} triangles)")
        elif args.kind == "spheres":
            nodes = scenedesc.make_sphere_field(args.count, args.tris, seed=args.seed)
            mesh = nodes[0].mesh
            geomcodec.save_mesh(out_dir / "sphere.mesh", mesh)
            desc = scenedesc.SceneDescription(
                meshes=[{"name": "sphere", "path": "sphere.mesh"}],
                nodes=[{"mesh": "sphere",
                        "transforms": [t.tolist() for t in nodes[0].transforms]}],
                camera=_camera_dict((0, 2, 10), (0, 0, 0)))
            path = _write_scene(out_dir, "spheres", desc)
            total = mesh.triangle_count * len(nodes[0].transforms)
            print(f"wrote {path} ({total} triangles over {args.count} spheres)")
        elif args.kind == "classifierScene":
            nodes, camera = scenedesc.make_classifier_scene()
            geomcodec.save_mesh(out_dir / "classifier.mesh", nodes[0].mesh)
            desc = scenedesc.SceneDescription(
                meshes=[{"name": "classifier", "path": "classifier.mesh"}],
                nodes=[{"mesh": "classifier"}],
                camera=_camera_dict(camera.position, (0, 0, 0),
                                    camera.image_width, camera.image_height))
            path = _write_scene(out_dir, "classifier", desc)
            print(f"wrote {path}")
        elif args.kind == "lanternGrid":
            nodes = scenedesc.make_lantern_grid(args.count_x, args.count_y,
                                                tris_per_mesh=args.tris,
                                                spacing=args.spacing)
            mesh = nodes[0].mesh
            geomcodec.save_mesh(out_dir / "lantern.mesh", mesh)
            desc = scenedesc.SceneDescription(
                meshes=[{"name": "lantern", "path": "lantern.mesh"}],
                nodes=[{"mesh": "lantern",
                        "grid": {"countX": args.count_x, "countY": args.count_y,
                                 "spacing": args.spacing}}],
                camera=_camera_dict((0, args.count_x * 0.8,
                                     args.count_y * args.spacing * 0.9), (0, 0, 0)))
            path = _write_scene(out_dir, "lantern", desc)
            total = mesh.triangle_count * args.count_x * args.count_y
            print(f"wrote {path} ({total} triangles instanced)")
    except OSError as exc:
        _err(str(exc))
        return EXIT_IO
    return EXIT_OK


# ---------------------------------------------------------------------------
# compress / inspect

def cmd_compress(args) -> int:
    try:
        mesh = geomcodec.load_mesh_asset(args.input)
    except geomcodec.ParseError as exc:
        _err(str(exc))
        return EXIT_PARSE
    except OSError as exc:
        _err(str(exc))
        return EXIT_IO
    before = os.path.getsize(args.input)
    if args.indices:
        mesh.indices = geomcodec.compress_indices(mesh.indices_u32())
        print(f"bitsPerIndex={mesh.indices.bits_per_index}")
    if args.positions:
        mesh.positions = geomcodec.quantize_positions(mesh.positions_f64(),
                                                      mesh.aabb)
    mesh._positions_cache = None
    mesh._indices_cache = None
    try:
        geomcodec.save_mesh(args.output, mesh)
    except OSError as exc:
        _err(str(exc))
        return EXIT_IO
    after = os.path.getsize(args.output)
    print(f"{args.input}: {before} bytes -> {args.output}: {after} bytes")
    return EXIT_OK


def cmd_inspect(args) -> int:
    try:
        t0 = time.perf_counter()
        mesh = geomcodec.load_mesh_asset(args.input)
        mesh.positions_f64()
        mesh.indices_u32()
        load_s = time.perf_counter() - t0
    except geomcodec.ParseError as exc:
        _err(str(exc))
        return EXIT_PARSE
    except OSError as exc:
        _err(str(exc))
        return EXIT_IO
    quantized = not isinstance(mesh.positions, np.ndarray)
    packed = not isinstance(mesh.indices, np.ndarray)
    print(f"name: {mesh.name or Path(args.input).stem}")
    print(f"triangles: {mesh.triangle_count}")
    print(f"vertices: {mesh.vertex_count()}")
    print(f"positions: {'quantized uint16' if quantized else 'raw float'}")
    if packed:
        print(f"indices: packed, {mesh.indices.bits_per_index} bits/index, "
              f"minIndex={mesh.indices.min_index}")
    else:
        print("indices: raw uint32")
    print(f"uvs: {'yes' if mesh.uvs is not None else 'no'}"
          f"  vertexColors: {'yes' if mesh.vertex_colors is not None else 'no'}")
    lo, hi = mesh.aabb
    print(f"aabb: min=({lo[0]:.4g}, {lo[1]:.4g}, {lo[2]:.4g})"
          f" max=({hi[0]:.4g}, {hi[1]:.4g}, {hi[2]:.4g})")
    print(f"fileBytes: {os.path.getsize(args.input)}")
    print(f"loadDecodeMs: {load_s * 1e3:.2f}")
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trirast",
        description="data-parallel software rasterizer for dense triangle meshes")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_render_flags(p):
        p.add_argument("--workers", type=int, default=None,
                       help=f"worker thread count (default: ${WORKERS_ENV} or 1)")
        p.add_argument("--supersampling", type=int, choices=(1, 2, 4), default=None)
        p.add_argument("--tiny-cull", choices=("on", "off"), default=None)
        p.add_argument("--force-stage", type=int, choices=(1, 2, 3), default=None)
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("render", help="render one frame of a scene file")
    p.add_argument("scene")
    p.add_argument("--output", "-o", required=True, help="output .png or .ppm")
    p.add_argument("--debug-view",
                   choices=("depth", "stageID", "bboxSize", "meshID"), default=None)
    p.add_argument("--reference", action="store_true",
                   help="use the sequential reference renderer")
    p.add_argument("--frames", type=int, default=1)
    add_render_flags(p)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("bench", help="benchmark a scene")
    p.add_argument("scene")
    p.add_argument("--frames", type=int, default=60)
    p.add_argument("--output", "-o", default=None, help="CSV report path")
    p.add_argument("--toggle", action="append",
                   choices=("tinyCull", "workers", "instancing", "superSampling"),
                   help="benchmark a toggle sweep instead of the base config")
    add_render_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("gen", help="generate procedural test scenes")
    p.add_argument("kind", choices=("spheres", "tessellatedQuad",
                                    "classifierScene", "lanternGrid"))
    p.add_argument("out_dir")
    p.add_argument("--n", type=int, default=64, help="quad tessellation factor")
    p.add_argument("--count", type=int, default=50, help="sphere count")
    p.add_argument("--tris", type=int, default=2000, help="triangles per mesh")
    p.add_argument("--count-x", type=int, default=10)
    p.add_argument("--count-y", type=int, default=10)
    p.add_argument("--spacing", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("compress", help="recompress a mesh file")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--indices", action="store_true", help="bit-pack indices")
    p.add_argument("--positions", action="store_true",
                   help="quantize positions to a 16-bit grid")
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("inspect", help="print mesh header and stats")
    p.add_argument("input")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
