import json
import os

import numpy as np
import pytest

from trirast import cli
from trirast.cli import EXIT_CAPACITY, EXIT_IO, EXIT_OK, EXIT_PARSE, write_image


@pytest.fixture(scope="module")
def quad_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("gen")
    assert cli.main(["gen", "tessellatedQuad", str(out), "--n", "8"]) == EXIT_OK
    return out


class TestRender:
    def test_render_png_and_ppm(self, quad_dir, tmp_path):
        scene = str(quad_dir / "quad.scene.json")
        png = tmp_path / "out.png"
        ppm = tmp_path / "out.ppm"
        assert cli.main(["render", scene, "-o", str(png)]) == EXIT_OK
        assert cli.main(["render", scene, "-o", str(ppm)]) == EXIT_OK
        assert png.stat().st_size > 0
        header = ppm.read_bytes()
        assert header.startswith(b"P6\n640 480\n255\n")

    def test_debug_view_flag(self, quad_dir, tmp_path):
        scene = str(quad_dir / "quad.scene.json")
        out = tmp_path / "dbg.ppm"
        rc = cli.main(["render", scene, "--debug-view", "stageID",
                       "-o", str(out)])
        assert rc == EXIT_OK

    def test_reference_render_matches_pipeline(self, quad_dir, tmp_path):
        scene = str(quad_dir / "quad.scene.json")
        a = tmp_path / "a.ppm"
        b = tmp_path / "b.ppm"
        assert cli.main(["render", scene, "-o", str(a)]) == EXIT_OK
        assert cli.main(["render", scene, "--reference", "-o", str(b)]) == EXIT_OK
        assert a.read_bytes() == b.read_bytes()

    def test_worker_flag_does_not_change_image(self, quad_dir, tmp_path):
        scene = str(quad_dir / "quad.scene.json")
        outs = []
        for w in (1, 3):
            p = tmp_path / f"w{w}.ppm"
            assert cli.main(["render", scene, "--workers", str(w),
                             "-o", str(p)]) == EXIT_OK
            outs.append(p.read_bytes())
        assert outs[0] == outs[1]

    def test_parse_error_exit_code(self, tmp_path):
        bad = tmp_path / "bad.scene.json"
        bad.write_text("{nope")
        rc = cli.main(["render", str(bad), "-o", str(tmp_path / "x.png")])
        assert rc == EXIT_PARSE

    def test_missing_scene_is_io_error(self, tmp_path):
        rc = cli.main(["render", str(tmp_path / "ghost.json"),
                       "-o", str(tmp_path / "x.png")])
        assert rc in (EXIT_PARSE, EXIT_IO)

    def test_capacity_error_exit_code(self, quad_dir, tmp_path):
        scene_path = tmp_path / "over.scene.json"
        data = json.loads((quad_dir / "quad.scene.json").read_text())
        data["raster"] = {"stage2_capacity": 0, "force_stage": 2}
        scene_path.write_text(json.dumps(data))
        os.link(quad_dir / "quad.mesh", tmp_path / "quad.mesh")
        os.link(quad_dir / "checker.png", tmp_path / "checker.png")
        rc = cli.main(["render", str(scene_path), "-o", str(tmp_path / "x.png")])
        assert rc == EXIT_CAPACITY

    def test_bad_extension_is_io_error(self, quad_dir, tmp_path):
        scene = str(quad_dir / "quad.scene.json")
        rc = cli.main(["render", scene, "-o", str(tmp_path / "x.bmp")])
        assert rc == EXIT_IO


class TestBench:
    def test_bench_writes_table_and_csv(self, quad_dir, tmp_path, capsys):
        scene = str(quad_dir / "quad.scene.json")
        csv_path = tmp_path / "report.csv"
        rc = cli.main(["bench", scene, "--frames", "2", "-o", str(csv_path)])
        assert rc == EXIT_OK
        out = capsys.readouterr().out
        assert "totalMs" in out
        lines = csv_path.read_text().strip().splitlines()
        assert lines[0].startswith("scene,config,visibleTriangles")
        assert len(lines) == 2

    def test_bench_supersampling_toggle_rows(self, quad_dir, tmp_path):
        scene = str(quad_dir / "quad.scene.json")
        csv_path = tmp_path / "ss.csv"
        rc = cli.main(["bench", scene, "--frames", "1",
                       "--toggle", "superSampling", "-o", str(csv_path)])
        assert rc == EXIT_OK
        rows = csv_path.read_text().strip().splitlines()[1:]
        assert len(rows) == 3


class TestGenCompressInspect:
    def test_gen_classifier_and_render(self, tmp_path):
        assert cli.main(["gen", "classifierScene", str(tmp_path)]) == EXIT_OK
        rc = cli.main(["render", str(tmp_path / "classifier.scene.json"),
                       "-o", str(tmp_path / "c.ppm")])
        assert rc == EXIT_OK

    def test_gen_lantern_grid(self, tmp_path):
        rc = cli.main(["gen", "lanternGrid", str(tmp_path),
                       "--count-x", "3", "--count-y", "2", "--tris", "50"])
        assert rc == EXIT_OK
        desc = json.loads((tmp_path / "lantern.scene.json").read_text())
        assert desc["nodes"][0]["grid"] == {"countX": 3, "countY": 2,
                                            "spacing": 2.0}

    def test_gen_spheres(self, tmp_path):
        rc = cli.main(["gen", "spheres", str(tmp_path),
                       "--count", "4", "--tris", "60"])
        assert rc == EXIT_OK
        assert (tmp_path / "spheres.scene.json").exists()

    def test_compress_reports_bits_and_shrinks(self, quad_dir, tmp_path, capsys):
        src = str(quad_dir / "quad.mesh")
        dst = str(tmp_path / "quad.c.mesh")
        rc = cli.main(["compress", src, dst, "--indices", "--positions"])
        assert rc == EXIT_OK
        out = capsys.readouterr().out
        assert "bitsPerIndex=" in out
        assert os.path.getsize(dst) < os.path.getsize(src)

    def test_inspect(self, quad_dir, capsys):
        rc = cli.main(["inspect", str(quad_dir / "quad.mesh")])
        assert rc == EXIT_OK
        out = capsys.readouterr().out
        assert "triangles: 128" in out
        assert "uvs: yes" in out

    def test_inspect_missing_file(self, tmp_path):
        assert cli.main(["inspect", str(tmp_path / "no.mesh")]) == EXIT_IO


class TestWriteImage:
    def test_ppm_bytes(self, tmp_path):
        img = np.zeros((2, 3, 4), dtype=np.uint8)
        img[..., 0] = 9
        path = tmp_path / "t.ppm"
        write_image(path, img)
        data = path.read_bytes()
        assert data == b"P6\n3 2\n255\n" + bytes([9, 0, 0] * 6)
