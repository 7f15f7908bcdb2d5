"""Geometry compression, mesh asset I/O, and texture mip chains.

Index buffers are rebased to their minimum value and bit-packed at the
smallest width that covers the span; positions can be stored as 16-bit
fixed-point coordinates on the mesh bounding-box grid.  The native binary
mesh format ("TRIMESH1") round-trips both compressed and raw payloads.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .scenecore import Mesh

MAGIC = b"TRIMESH1"

FLAG_QUANTIZED_POSITIONS = 1 << 0
FLAG_PACKED_INDICES = 1 << 1
FLAG_UVS = 1 << 2
FLAG_VERTEX_COLORS = 1 << 3


class ParseError(RuntimeError):
    """Malformed mesh/scene/texture input."""


@dataclass
class PackedIndexBuffer:
    """Bit-packed index buffer.

    Values are stored as (index - min_index) in ``bits_per_index`` bits each,
    packed contiguously with little-endian bit order within bytes and no
    per-element alignment.
    """

    min_index: int
    bits_per_index: int
    count: int                 # number of stored elements (3 * triangles)
    data: np.ndarray           # uint8 bitstream

    def decode(self, i: int) -> int:
        """Decode element ``i`` without unpacking the whole stream."""
        if not 0 <= i < self.count:
            raise IndexError(f"element {i} out of range [0, {self.count})")
        bit = i * self.bits_per_index
        byte0 = bit >> 3
        nbytes = (self.bits_per_index + (bit & 7) + 7) >> 3
        chunk = int.from_bytes(self.data[byte0:byte0 + nbytes].tobytes(), "little")
        rel = (chunk >> (bit & 7)) & ((1 << self.bits_per_index) - 1)
        return self.min_index + rel

    def decode_all(self) -> np.ndarray:
        bits = np.unpackbits(self.data, count=self.count * self.bits_per_index,
                             bitorder="little")
        bits = bits.reshape(self.count, self.bits_per_index).astype(np.uint64)
        weights = np.uint64(1) << np.arange(self.bits_per_index, dtype=np.uint64)
        rel = (bits * weights).sum(axis=1, dtype=np.uint64)
        return (rel + np.uint64(self.min_index)).astype(np.uint32)


def compress_indices(indices: np.ndarray) -> PackedIndexBuffer:
    """Bit-pack an index array at the minimal width covering its span.

    The width is ceil(log2(span + 1)) with a floor of one bit, so that a
    span that is an exact power of two still encodes span + 1 distinct
    values.
    """
    indices = np.asarray(indices, dtype=np.uint32)
    if indices.size == 0:
        raise ValueError("indices must be non-empty")
    lo = int(indices.min())
    hi = int(indices.max())
    span = hi - lo
    bits_per_index = max(1, span.bit_length())
    rel = (indices.astype(np.uint64) - np.uint64(lo))
    exploded = ((rel[:, None] >> np.arange(bits_per_index, dtype=np.uint64))
                & np.uint64(1)).astype(np.uint8)
    data = np.packbits(exploded.ravel(), bitorder="little")
    return PackedIndexBuffer(min_index=lo, bits_per_index=bits_per_index,
                             count=indices.size, data=data)


@dataclass
class QuantizedPositions:
    """16-bit fixed-point coordinates on a bounding-box grid."""

    grid_min: np.ndarray       # (3,) float
    grid_size: np.ndarray      # (3,) float, each component > 0
    coords: np.ndarray         # (n, 3) uint16

    @property
    def count(self) -> int:
        return len(self.coords)

    def dequantize_all(self) -> np.ndarray:
        q = self.coords.astype(np.float64)
        return self.grid_min + (q + 0.5) / 65536.0 * self.grid_size


def quantize_positions(positions: np.ndarray, aabb: np.ndarray) -> QuantizedPositions:
    """Map positions inside ``aabb`` to 65536 grid cells per axis.

    Raw cell index is floor(65536 * (p - min) / size), clamped to 65535 so
    the exact upper corner stays representable.  A degenerate axis
    (size 0) falls back to a unit extent; everything on it quantizes to 0.
    """
    positions = np.asarray(positions, dtype=np.float64)
    aabb = np.asarray(aabb, dtype=np.float64)
    grid_min = aabb[0].copy()
    grid_size = aabb[1] - aabb[0]
    if np.any(positions < aabb[0]) or np.any(positions > aabb[1]):
        raise ValueError("position outside the quantization bounding box")
    grid_size = np.where(grid_size > 0.0, grid_size, 1.0)
    q = np.floor(65536.0 * (positions - grid_min) / grid_size)
    q = np.clip(q, 0, 65535).astype(np.uint16)
    return QuantizedPositions(grid_min=grid_min, grid_size=grid_size, coords=q)


def dequantize_position(q, grid: QuantizedPositions) -> np.ndarray:
    """Reconstruct one coordinate triple at its cell center."""
    q = np.asarray(q, dtype=np.float64)
    return grid.grid_min + (q + 0.5) / 65536.0 * grid.grid_size


@dataclass
class MipChain:
    """Power-of-two image pyramid down to 1x1, level 0 = full resolution."""

    levels: list[np.ndarray]   # each (h, w, 4) uint8

    @property
    def base(self) -> np.ndarray:
        return self.levels[0]


def _halve(img: np.ndarray) -> np.ndarray:
    h, w = img.shape[:2]
    nh, nw = max(1, h // 2), max(1, w // 2)
    ys = (0, 1) if h > 1 else (0,)
    xs = (0, 1) if w > 1 else (0,)
    total = np.zeros((nh, nw, img.shape[2]), dtype=np.uint32)
    for dy in ys:
        for dx in xs:
            total += img[dy::2, dx::2][:nh, :nw]
    return (total // (len(ys) * len(xs))).astype(np.uint8)


def build_mip_chain(image: np.ndarray) -> MipChain:
    """Box-filtered pyramid; each level averages <= 4 parent texels with
    integer floor rounding."""
    image = np.asarray(image, dtype=np.uint8)
    if image.ndim != 3 or image.shape[2] != 4:
        raise ValueError("expected an RGBA8 image of shape (h, w, 4)")
    h, w = image.shape[:2]
    if h < 1 or w < 1:
        raise ValueError("image must be at least 1x1")
    levels = [image]
    length = 1 + int(math.floor(math.log2(max(w, h))))
    for _ in range(length - 1):
        levels.append(_halve(levels[-1]))
    return MipChain(levels=levels)


# ---------------------------------------------------------------------------
# Wavefront OBJ

def _parse_obj(text: str, name: str) -> Mesh:
    positions: list[tuple] = []
    colors: list[tuple] = []
    texcoords: list[tuple] = []
    # corner -> output vertex index; corners are (v, vt) pairs
    remap: dict[tuple, int] = {}
    out_pos: list = []
    out_uv: list = []
    out_col: list = []
    tris: list[int] = []
    has_uv = False
    has_col = False

    def corner_index(v_idx, vt_idx, lineno):
        nonlocal has_uv
        key = (v_idx, vt_idx)
        existing = remap.get(key)
        if existing is not None:
            return existing
        if not 0 <= v_idx < len(positions):
            raise ParseError(f"{name}:{lineno}: vertex index {v_idx + 1} out of range")
        idx = len(out_pos)
        remap[key] = idx
        out_pos.append(positions[v_idx])
        out_col.append(colors[v_idx])
        if vt_idx is not None:
            if not 0 <= vt_idx < len(texcoords):
                raise ParseError(f"{name}:{lineno}: uv index {vt_idx + 1} out of range")
            has_uv = True
            out_uv.append(texcoords[vt_idx])
        else:
            out_uv.append((0.0, 0.0))
        return idx

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        tag = parts[0]
        try:
            if tag == "v":
                vals = [float(x) for x in parts[1:]]
                if len(vals) < 3:
                    raise ParseError(f"{name}:{lineno}: 'v' needs 3 coordinates")
                positions.append(tuple(vals[:3]))
                if len(vals) >= 6:
                    has_col = True
                    colors.append(tuple(vals[3:6]))
                else:
                    colors.append((1.0, 1.0, 1.0))
            elif tag == "vt":
                vals = [float(x) for x in parts[1:]]
                if len(vals) < 2:
                    raise ParseError(f"{name}:{lineno}: 'vt' needs 2 coordinates")
                texcoords.append((vals[0], vals[1]))
            elif tag == "f":
                if len(parts) < 4:
                    raise ParseError(f"{name}:{lineno}: face needs >= 3 vertices")
                corner_ids = []
                for ref in parts[1:]:
                    fields = ref.split("/")
                    v = int(fields[0])
                    v = v - 1 if v > 0 else len(positions) + v
                    vt = None
                    if len(fields) >= 2 and fields[1]:
                        t = int(fields[1])
                        vt = t - 1 if t > 0 else len(texcoords) + t
                    corner_ids.append(corner_index(v, vt, lineno))
                for k in range(1, len(corner_ids) - 1):   # fan triangulation
                    tris.extend((corner_ids[0], corner_ids[k], corner_ids[k + 1]))
            # vn and other records are parsed past and discarded
        except ValueError as exc:
            raise ParseError(f"{name}:{lineno}: {exc}") from None

    if not tris:
        raise ParseError(f"{name}: no faces found")
    pos = np.array(out_pos, dtype=np.float64)
    aabb = np.stack([pos.min(axis=0), pos.max(axis=0)])
    uvs = np.array(out_uv, dtype=np.float64) if has_uv else None
    vertex_colors = None
    if has_col:
        vertex_colors = np.empty((len(out_col), 4), dtype=np.uint8)
        rgb = np.clip(np.array(out_col, dtype=np.float64), 0.0, 1.0)
        vertex_colors[:, :3] = np.rint(rgb * 255.0).astype(np.uint8)
        vertex_colors[:, 3] = 255
    return Mesh(positions=pos, indices=np.array(tris, dtype=np.uint32),
                triangle_count=len(tris) // 3, aabb=aabb, uvs=uvs,
                vertex_colors=vertex_colors, name=name)


# ---------------------------------------------------------------------------
# Native binary format

_HEADER = struct.Struct("<8sQQIB3x")


def save_mesh(path, mesh: Mesh) -> None:
    """Write a mesh in the native binary format, preserving whichever
    compressed/raw payloads it carries."""
    quantized = isinstance(mesh.positions, QuantizedPositions)
    packed = isinstance(mesh.indices, PackedIndexBuffer)
    flags = 0
    flags |= FLAG_QUANTIZED_POSITIONS if quantized else 0
    flags |= FLAG_PACKED_INDICES if packed else 0
    flags |= FLAG_UVS if mesh.uvs is not None else 0
    flags |= FLAG_VERTEX_COLORS if mesh.vertex_colors is not None else 0
    bits = mesh.indices.bits_per_index if packed else 0
    chunks = [_HEADER.pack(MAGIC, mesh.vertex_count(), mesh.triangle_count,
                           flags, bits)]
    if quantized:
        chunks.append(mesh.positions.grid_min.astype("<f4").tobytes())
        chunks.append(mesh.positions.grid_size.astype("<f4").tobytes())
        chunks.append(mesh.positions.coords.astype("<u2").tobytes())
    else:
        chunks.append(np.asarray(mesh.positions).astype("<f4").tobytes())
    if packed:
        chunks.append(struct.pack("<I", mesh.indices.min_index))
        chunks.append(mesh.indices.data.tobytes())
    else:
        chunks.append(np.asarray(mesh.indices).astype("<u4").tobytes())
    if mesh.uvs is not None:
        chunks.append(np.asarray(mesh.uvs).astype("<f4").tobytes())
    if mesh.vertex_colors is not None:
        chunks.append(np.asarray(mesh.vertex_colors, dtype=np.uint8).tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def _load_native(data: bytes, name: str) -> Mesh:
    if len(data) < _HEADER.size:
        raise ParseError(f"{name}: truncated header at offset {len(data)}")
    magic, nverts, ntris, flags, bits = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise ParseError(f"{name}: bad magic {magic!r} at offset 0")
    off = _HEADER.size

    def take(n, what):
        nonlocal off
        if off + n > len(data):
            raise ParseError(f"{name}: truncated {what} at offset {off}")
        chunk = data[off:off + n]
        off += n
        return chunk

    if flags & FLAG_QUANTIZED_POSITIONS:
        grid = np.frombuffer(take(24, "grid bounds"), dtype="<f4").astype(np.float64)
        coords = np.frombuffer(take(6 * nverts, "positions"), dtype="<u2")
        positions = QuantizedPositions(grid_min=grid[:3], grid_size=grid[3:],
                                       coords=coords.reshape(nverts, 3).copy())
        aabb = np.stack([positions.grid_min,
                         positions.grid_min + positions.grid_size])
    else:
        pos = np.frombuffer(take(12 * nverts, "positions"), dtype="<f4")
        positions = pos.reshape(nverts, 3).astype(np.float64)
        aabb = np.stack([positions.min(axis=0), positions.max(axis=0)]) \
            if nverts else np.zeros((2, 3))
    if flags & FLAG_PACKED_INDICES:
        (min_index,) = struct.unpack("<I", take(4, "index header"))
        count = 3 * ntris
        nbytes = (count * bits + 7) // 8
        stream = np.frombuffer(take(nbytes, "indices"), dtype=np.uint8).copy()
        indices = PackedIndexBuffer(min_index=min_index, bits_per_index=bits,
                                    count=count, data=stream)
    else:
        idx = np.frombuffer(take(12 * ntris, "indices"), dtype="<u4")
        indices = idx.astype(np.uint32)
    uvs = None
    if flags & FLAG_UVS:
        uvs = np.frombuffer(take(8 * nverts, "uvs"), dtype="<f4")
        uvs = uvs.reshape(nverts, 2).astype(np.float64)
    vertex_colors = None
    if flags & FLAG_VERTEX_COLORS:
        vertex_colors = np.frombuffer(take(4 * nverts, "vertex colors"),
                                      dtype=np.uint8).reshape(nverts, 4).copy()
    return Mesh(positions=positions, indices=indices, triangle_count=ntris,
                aabb=aabb, uvs=uvs, vertex_colors=vertex_colors, name=name)


def load_mesh_asset(path) -> Mesh:
    """Load a mesh from a Wavefront OBJ or a native binary file."""
    path = str(path)
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] == MAGIC:
        return _load_native(data, path)
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path}: neither native format nor text OBJ "
                         f"(binary garbage at offset {exc.start})") from None
    return _parse_obj(text, path)


def load_texture(path) -> np.ndarray:
    """Load a PNG or PPM image as an RGBA8 array of shape (h, w, 4)."""
    from PIL import Image, UnidentifiedImageError
    try:
        with Image.open(path) as img:
            return np.array(img.convert("RGBA"))
    except (UnidentifiedImageError, OSError) as exc:
        raise ParseError(f"{path}: {exc}") from None
