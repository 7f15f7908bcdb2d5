"""Runtime configuration for the rasterization pipeline and the resolve pass."""

from __future__ import annotations

import os
from dataclasses import dataclass, field

WORKERS_ENV = "TRIRAST_WORKERS"


@dataclass
class RasterConfig:
    small_max_px: int = 128        # bbox pixel count below which stage 1 rasterizes
    medium_max_px: int = 4096      # below which stage 2 rasterizes directly
    tile_px: int = 64              # stage-3 tile edge length
    batch_size: int = 256          # triangles claimed per work-counter increment
    workers: int = 0               # 0 -> TRIRAST_WORKERS env var, else 1
    stage2_capacity: int | None = None
    stage3_capacity: int | None = None
    tiny_cull: bool = True
    force_stage: int = 0           # debug: 0 = auto, 1/2/3 = route everything there
    instancing: str = "auto"       # "auto" | "on" | "off"

    def resolved_workers(self) -> int:
        if self.workers > 0:
            return self.workers
        env = os.environ.get(WORKERS_ENV, "")
        if env.isdigit() and int(env) > 0:
            return int(env)
        return 1

    def resolved_stage2_capacity(self, total_triangles: int) -> int:
        if self.stage2_capacity is not None:
            return self.stage2_capacity
        # every triangle could be forwarded; the buffers are allocated with
        # np.empty, so unused capacity never touches physical pages
        return max(4096, total_triangles)

    def resolved_stage3_capacity(self, total_triangles: int) -> int:
        if self.stage3_capacity is not None:
            return self.stage3_capacity
        return max(4096, 64 * self.resolved_stage2_capacity(total_triangles))


@dataclass
class ShadingConfig:
    mode: str = "auto"             # "auto" | "flat" | "vertexColor" | "textured"
    headlight: bool = False
    background: tuple = (40, 40, 44, 255)
    mip_filter: str = "nearest"    # "nearest" | "trilinear"
    base_color: tuple = (200, 200, 200, 255)


@dataclass
class Stage1Stats:
    rasterized: int = 0
    forwarded: int = 0
    culled_frustum: int = 0
    culled_offscreen: int = 0
    culled_tiny: int = 0
    culled_backface: int = 0
    culled_degenerate: int = 0
    fragments: int = 0


@dataclass
class Stage2Stats:
    direct: int = 0
    tiled: int = 0
    dropped: int = 0
    tiles: int = 0
    fragments: int = 0


@dataclass
class Stage3Stats:
    entries: int = 0
    fragments: int = 0


@dataclass
class FrameStats:
    total_triangles: int = 0
    items: int = 0
    instanced: bool = False
    stage1: Stage1Stats = field(default_factory=Stage1Stats)
    stage2: Stage2Stats = field(default_factory=Stage2Stats)
    stage3: Stage3Stats = field(default_factory=Stage3Stats)
    stage1_s: float = 0.0
    stage2_s: float = 0.0
    stage3_s: float = 0.0
    merge_s: float = 0.0
    resolve_s: float = 0.0

    @property
    def raster_s(self) -> float:
        return self.stage1_s + self.stage2_s + self.stage3_s + self.merge_s

    @property
    def fragments(self) -> int:
        return (self.stage1.fragments + self.stage2.fragments
                + self.stage3.fragments)

    def summary(self) -> str:
        s1, s2, s3 = self.stage1, self.stage2, self.stage3
        return (
            f"triangles={self.total_triangles} items={self.items}"
            f" instanced={self.instanced}\n"
            f"stage1: rasterized={s1.rasterized} forwarded={s1.forwarded}"
            f" culled(frustum={s1.culled_frustum} offscreen={s1.culled_offscreen}"
            f" tiny={s1.culled_tiny} backface={s1.culled_backface}"
            f" degenerate={s1.culled_degenerate}) fragments={s1.fragments}"
            f" [{self.stage1_s * 1e3:.2f} ms]\n"
            f"stage2: direct={s2.direct} tiled={s2.tiled} tiles={s2.tiles}"
            f" dropped={s2.dropped} fragments={s2.fragments}"
            f" [{self.stage2_s * 1e3:.2f} ms]\n"
            f"stage3: entries={s3.entries} fragments={s3.fragments}"
            f" [{self.stage3_s * 1e3:.2f} ms]\n"
            f"merge: {self.merge_s * 1e3:.2f} ms"
            f"  resolve: {self.resolve_s * 1e3:.2f} ms"
        )
