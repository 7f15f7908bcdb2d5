import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trirast import geomcodec as gc
from trirast.scenedesc import make_tessellated_quad


class TestIndexCompression:
    def test_paper_span_example_9_bits(self):
        idx = np.random.default_rng(0).integers(2500, 3001, 300, dtype=np.uint32)
        idx[0], idx[1] = 2500, 3000   # pin the span
        packed = gc.compress_indices(idx)
        assert packed.bits_per_index == 9
        assert packed.min_index == 2500
        assert np.array_equal(packed.decode_all(), idx)

    def test_single_value_span_uses_one_bit(self):
        idx = np.full(64, 777, dtype=np.uint32)
        packed = gc.compress_indices(idx)
        assert packed.bits_per_index == 1
        assert np.array_equal(packed.decode_all(), idx)

    def test_exact_power_of_two_span(self):
        # span 255 -> 8 bits, span 256 -> 9 bits
        assert gc.compress_indices(np.array([0, 255], np.uint32)).bits_per_index == 8
        assert gc.compress_indices(np.array([0, 256], np.uint32)).bits_per_index == 9

    def test_scalar_decode_matches_bulk(self):
        idx = np.random.default_rng(1).integers(10, 5000, 97, dtype=np.uint32)
        packed = gc.compress_indices(idx)
        assert [packed.decode(i) for i in range(len(idx))] == idx.tolist()

    @given(st.data())
    @settings(max_examples=60, deadline=None)
    def test_roundtrip_random_widths(self, data):
        bits = data.draw(st.integers(min_value=1, max_value=32))
        n = data.draw(st.integers(min_value=1, max_value=200))
        lo = data.draw(st.integers(min_value=0, max_value=2**31))
        span = min(2**bits - 1, 2**32 - 1 - lo)
        idx = np.random.default_rng(data.draw(st.integers(0, 2**16))).integers(
            lo, lo + span + 1, n, dtype=np.uint64).astype(np.uint32)
        packed = gc.compress_indices(idx)
        assert np.array_equal(packed.decode_all(), idx)


class TestPositionQuantization:
    def test_roundtrip_error_half_cell(self):
        rng = np.random.default_rng(2)
        aabb = np.array([[-3.0, 0.0, 10.0], [5.0, 2.0, 11.0]])
        pts = rng.uniform(aabb[0], aabb[1], (5000, 3))
        q = gc.quantize_positions(pts, aabb)
        err = np.abs(q.dequantize_all() - pts)
        assert (err <= (aabb[1] - aabb[0]) / 131072.0 + 1e-12).all()

    def test_aabb_corners_stay_in_range(self):
        aabb = np.array([[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]])
        q = gc.quantize_positions(np.array([[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]]), aabb)
        assert q.coords.min() == 0
        assert q.coords.max() == 65535

    def test_point_outside_aabb_rejected(self):
        aabb = np.array([[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]])
        with pytest.raises(ValueError):
            gc.quantize_positions(np.array([[1.5, 0.5, 0.5]]), aabb)

    def test_millimeter_precision_at_65m(self):
        # 65.536 m grid -> 1 mm cells -> error <= 0.5 mm <= 1 mm
        aabb = np.array([[0.0, 0.0, 0.0], [65.536, 65.536, 65.536]])
        pts = np.random.default_rng(3).uniform(0.0, 65.536, (2000, 3))
        q = gc.quantize_positions(pts, aabb)
        assert np.abs(q.dequantize_all() - pts).max() <= 1.0e-3

    def test_degenerate_axis(self):
        aabb = np.array([[0.0, 0.0, 5.0], [1.0, 1.0, 5.0]])
        q = gc.quantize_positions(np.array([[0.5, 0.5, 5.0]]), aabb)
        out = q.dequantize_all()
        assert abs(out[0, 2] - 5.0) < 1e-4


class TestMipChain:
    def test_levels_down_to_one_texel(self):
        img = np.zeros((64, 64, 4), dtype=np.uint8)
        chain = gc.build_mip_chain(img)
        assert [lv.shape[:2] for lv in chain.levels] == [
            (64, 64), (32, 32), (16, 16), (8, 8), (4, 4), (2, 2), (1, 1)]

    def test_box_filter_average(self):
        img = np.zeros((2, 2, 4), dtype=np.uint8)
        img[0, 0] = (10, 0, 0, 255)
        img[0, 1] = (20, 0, 0, 255)
        img[1, 0] = (30, 0, 0, 255)
        img[1, 1] = (43, 0, 0, 255)
        chain = gc.build_mip_chain(img)
        assert chain.levels[1][0, 0, 0] == (10 + 20 + 30 + 43) // 4
        assert chain.levels[1][0, 0, 3] == 255

    def test_non_square_collapses_per_axis(self):
        chain = gc.build_mip_chain(np.zeros((4, 16, 4), dtype=np.uint8))
        assert [lv.shape[:2] for lv in chain.levels] == [
            (4, 16), (2, 8), (1, 4), (1, 2), (1, 1)]


class TestObjParser:
    def test_parses_vertices_faces_uvs(self):
        text = """# comment
v 0 0 0
v 1 0 0
v 0 1 0
vt 0 0
vt 1 0
vt 0 1
f 1/1 2/2 3/3
"""
        mesh = gc._parse_obj(text, "mem.obj")
        assert mesh.triangle_count == 1
        assert mesh.uvs is not None
        assert np.allclose(mesh.positions_f64()[mesh.indices_u32()[1]], [1, 0, 0])

    def test_fan_triangulation_and_negative_indices(self):
        text = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf -4 -3 -2 -1\n"
        mesh = gc._parse_obj(text, "mem.obj")
        assert mesh.triangle_count == 2

    def test_vertex_colors(self):
        text = "v 0 0 0 1 0 0\nv 1 0 0 0 1 0\nv 0 1 0 0 0 1\nf 1 2 3\n"
        mesh = gc._parse_obj(text, "mem.obj")
        assert mesh.vertex_colors is not None
        assert tuple(mesh.vertex_colors[0][:3]) == (255, 0, 0)

    def test_error_includes_location(self):
        with pytest.raises(gc.ParseError, match="bad.obj:2"):
            gc._parse_obj("v 0 0 0\nf 1 2\n", "bad.obj")
        with pytest.raises(gc.ParseError):
            gc._parse_obj("v 0 0 0\nf 1 2 9\n", "bad.obj")


class TestNativeFormat:
    def _roundtrip(self, tmp_path, mesh):
        path = tmp_path / "m.mesh"
        gc.save_mesh(path, mesh)
        return gc.load_mesh_asset(path)

    def test_raw_roundtrip(self, tmp_path):
        mesh = make_tessellated_quad(4)
        out = self._roundtrip(tmp_path, mesh)
        assert out.triangle_count == mesh.triangle_count
        assert np.allclose(out.positions_f64(), mesh.positions_f64())
        assert np.array_equal(out.indices_u32(), mesh.indices_u32())
        assert np.allclose(out.uvs, mesh.uvs)

    def test_compressed_roundtrip_bitexact_payload(self, tmp_path):
        mesh = make_tessellated_quad(4)
        mesh.indices = gc.compress_indices(mesh.indices_u32())
        mesh.positions = gc.quantize_positions(np.asarray(mesh.positions),
                                               mesh.aabb)
        mesh._indices_cache = None
        mesh._positions_cache = None
        out = self._roundtrip(tmp_path, mesh)
        assert isinstance(out.indices, gc.PackedIndexBuffer)
        assert isinstance(out.positions, gc.QuantizedPositions)
        assert np.array_equal(out.indices.data, mesh.indices.data)
        assert np.array_equal(out.positions.coords, mesh.positions.coords)
        # idempotence: saving again produces identical bytes
        p2 = tmp_path / "m2.mesh"
        gc.save_mesh(p2, out)
        assert p2.read_bytes() == (tmp_path / "m.mesh").read_bytes()

    def test_magic_sniffing_dispatches_to_obj(self, tmp_path):
        path = tmp_path / "tri.obj"
        path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")
        assert gc.load_mesh_asset(path).triangle_count == 1

    def test_corrupt_native_header_rejected(self, tmp_path):
        path = tmp_path / "bad.mesh"
        path.write_bytes(b"TRIMESH1" + b"\x00" * 4)   # truncated header
        with pytest.raises(gc.ParseError):
            gc.load_mesh_asset(path)
