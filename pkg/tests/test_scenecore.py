import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from trirast.scenecore import (CLEAR, Camera, CapacityError, MAX_TRIANGLE_ID,
                               Framebuffer, SceneNode, build_draw_list,
                               frustum_planes, pack_fragment, projection_vector,
                               unpack_fragment)
from conftest import identity_camera, mesh_from_soup


positive_floats = st.floats(min_value=1e-6, max_value=1e30,
                            allow_nan=False, allow_infinity=False)
tri_ids = st.integers(min_value=0, max_value=MAX_TRIANGLE_ID - 1)


class TestPacking:
    def test_worked_example(self):
        # float32(1.0) = 0x3f800000; >> 3 = 0x07f00000; << 36 | 7
        assert int(pack_fragment(1.0, 7)) == 0x7F00000000000007

    def test_roundtrip_id_exact(self):
        for tid in (0, 1, 12345, MAX_TRIANGLE_ID - 1):
            _, _, out = unpack_fragment(pack_fragment(3.25, tid))
            assert out == tid

    @given(positive_floats, tri_ids)
    def test_depth_truncation_at_most_8_ulps(self, depth, tid):
        _, trunc, _ = unpack_fragment(pack_fragment(depth, tid))
        bits = np.float32(depth).view(np.uint32)
        tbits = np.float32(trunc).view(np.uint32)
        assert tbits == bits & ~np.uint32(7)
        assert int(bits) - int(tbits) <= 8
        assert trunc <= float(np.float32(depth))

    @given(positive_floats, positive_floats, tri_ids, tri_ids)
    def test_order_isomorphism(self, d1, d2, t1, t2):
        w1 = pack_fragment(d1, t1)
        w2 = pack_fragment(d2, t2)
        k1 = (int(np.float32(d1).view(np.uint32)) >> 3, t1)
        k2 = (int(np.float32(d2).view(np.uint32)) >> 3, t2)
        assert (w1 < w2) == (k1 < k2)

    def test_tie_break_smaller_id_wins(self):
        assert pack_fragment(2.5, 3) < pack_fragment(2.5, 4)

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            pack_fragment(0.0, 0)
        with pytest.raises(ValueError):
            pack_fragment(-1.0, 0)
        with pytest.raises(ValueError):
            pack_fragment(math.inf, 0)
        with pytest.raises(ValueError):
            pack_fragment(1.0, MAX_TRIANGLE_ID)
        with pytest.raises(ValueError):
            unpack_fragment(CLEAR)

    def test_any_packed_word_below_clear(self):
        assert pack_fragment(3.0e38, MAX_TRIANGLE_ID - 1) < CLEAR


class TestCamera:
    def test_look_at_maps_target_to_axis(self):
        cam = Camera.look_at((1.0, 2.0, 3.0), (0.0, 0.0, 0.0))
        t = cam.view_transform @ np.array([0.0, 0.0, 0.0, 1.0])
        assert t[0] == pytest.approx(0.0, abs=1e-12)
        assert t[1] == pytest.approx(0.0, abs=1e-12)
        assert t[2] == pytest.approx(-np.linalg.norm([1.0, 2.0, 3.0]))

    def test_view_transform_is_rigid(self):
        cam = Camera.look_at((5.0, -2.0, 1.0), (0.0, 1.0, 0.0))
        rot = cam.view_transform[:3, :3]
        assert np.allclose(rot @ rot.T, np.eye(3), atol=1e-12)

    def test_projection_vector(self):
        cam = identity_camera(width=200, height=100, fovy=math.pi / 2)
        p = projection_vector(cam)
        assert p[1] == pytest.approx(1.0)
        assert p[0] == pytest.approx(0.5)
        assert p[2] == -1.0

    def test_supersampling_scales_internal_resolution(self):
        cam = identity_camera(width=100, height=50, supersampling=4)
        assert (cam.internal_width, cam.internal_height) == (400, 200)
        with pytest.raises(ValueError):
            identity_camera(supersampling=3)

    def test_degenerate_look_at_rejected(self):
        with pytest.raises(ValueError):
            Camera.look_at((0, 0, 0), (0, 0, 0))
        with pytest.raises(ValueError):
            Camera.look_at((0, 0, 1), (0, 0, 0), up=(0, 0, 1))


class TestDrawList:
    def test_prefix_sums_and_ids(self):
        m1 = mesh_from_soup(np.random.default_rng(1).uniform(-0.3, 0.3, (9, 3)))
        m2 = mesh_from_soup(np.random.default_rng(2).uniform(-0.3, 0.3, (6, 3)))
        cam = identity_camera()
        scene = [SceneNode(mesh=m1, transforms=[_translate(0, 0, -3)]),
                 SceneNode(mesh=m2, transforms=[_translate(0.2, 0, -3),
                                                _translate(-0.2, 0, -3)])]
        dl = build_draw_list(scene, cam)
        assert [it.first_global_triangle for it in dl.items] == [0, 3, 5]
        assert dl.total_triangles == 7
        assert list(dl.prefix_sums) == [0, 3, 5, 7]

    def test_frustum_culling_drops_offscreen_instances(self):
        mesh = mesh_from_soup(np.random.default_rng(3).uniform(-0.2, 0.2, (3, 3)))
        cam = identity_camera()
        scene = [SceneNode(mesh=mesh, transforms=[
            _translate(0, 0, -5),       # visible
            _translate(0, 0, 5),        # behind the camera
            _translate(100, 0, -5),     # far off to the side
        ])]
        dl = build_draw_list(scene, cam)
        assert len(dl.items) == 1

    def test_frustum_planes_sign_convention(self):
        cam = identity_camera()
        planes = frustum_planes(cam)
        inside = np.array([0.0, 0.0, -5.0])
        behind = np.array([0.0, 0.0, 1.0])
        assert all(pl[:3] @ inside + pl[3] <= 0 for pl in planes)
        assert any(pl[:3] @ behind + pl[3] > 0 for pl in planes)

    def test_capacity_error_past_36_bits(self):
        mesh = mesh_from_soup(np.random.default_rng(4).uniform(-9, 9, (3, 3)))
        mesh.triangle_count = MAX_TRIANGLE_ID // 2 + 1   # declared, not stored
        scene = [SceneNode(mesh=mesh, transforms=[_translate(0, 0, -3),
                                                  _translate(0, 0, -4)])]
        with pytest.raises(CapacityError):
            build_draw_list(scene, identity_camera())


class TestFramebuffer:
    def test_starts_clear(self):
        fb = Framebuffer(8, 4)
        assert fb.words.shape == (32,)
        assert (fb.words == CLEAR).all()
        fb.words[9] = np.uint64(1)
        assert fb.word_at(1, 1) == 1
        assert fb.grid()[1, 1] == 1
        fb.clear()
        assert (fb.words == CLEAR).all()


def _translate(x, y, z):
    m = np.eye(4)
    m[:3, 3] = (x, y, z)
    return m
