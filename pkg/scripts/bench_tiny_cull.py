#!/usr/bin/env python3
"""Tiny-triangle culling ablation: a densely tessellated quad viewed from far
enough away that most triangles miss every sample point, benched with the
cull on and off."""

import argparse
import sys
import tempfile
from pathlib import Path

from trirast import cli


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=400, help="quad tessellation (2n^2 tris)")
    ap.add_argument("--frames", type=int, default=10)
    ap.add_argument("--out", default=None, help="CSV output path")
    args = ap.parse_args()
    with tempfile.TemporaryDirectory() as tmp:
        cli.main(["gen", "tessellatedQuad", tmp, "--n", str(args.n)])
        scene = str(Path(tmp) / "quad.scene.json")
        bench = ["bench", scene, "--frames", str(args.frames), "--toggle", "tinyCull"]
        if args.out:
            bench += ["-o", args.out]
        return cli.main(bench)


if __name__ == "__main__":
    sys.exit(main())
