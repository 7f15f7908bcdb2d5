#!/usr/bin/env python3
"""Supersampling cost sweep: renders the same scene at factors 1/2/4 and
reports per-stage means."""

import argparse
import sys
import tempfile
from pathlib import Path

from trirast import cli


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--scene", default=None, help="scene file (default: generated quad)")
    ap.add_argument("--frames", type=int, default=10)
    ap.add_argument("--out", default=None, help="CSV output path")
    args = ap.parse_args()
    with tempfile.TemporaryDirectory() as tmp:
        scene = args.scene
        if scene is None:
            cli.main(["gen", "tessellatedQuad", tmp, "--n", "64"])
            scene = str(Path(tmp) / "quad.scene.json")
        bench = ["bench", scene, "--frames", str(args.frames),
                 "--toggle", "superSampling"]
        if args.out:
            bench += ["-o", args.out]
        return cli.main(bench)


if __name__ == "__main__":
    sys.exit(main())
