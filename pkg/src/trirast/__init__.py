"""trirast: a data-parallel software rasterizer built around a visibility
buffer — per-pixel 64-bit words packing 28 bits of depth above a 36-bit
global triangle ID, merged with an unsigned minimum."""

from .config import RasterConfig, ShadingConfig
from .scenecore import (CLEAR, Camera, CapacityError, DrawItem, DrawList,
                        Framebuffer, Mesh, SceneNode, build_draw_list,
                        pack_fragment, unpack_fragment)
from .pipeline import render_draw_list, render_frame
from .resolvepass import debug_view, downsample, resolve_frame

__version__ = "0.1.0"

__all__ = [
    "CLEAR", "Camera", "CapacityError", "DrawItem", "DrawList", "Framebuffer",
    "Mesh", "RasterConfig", "SceneNode", "ShadingConfig", "build_draw_list",
    "debug_view", "downsample", "pack_fragment", "render_draw_list",
    "render_frame", "resolve_frame", "unpack_fragment",
]
