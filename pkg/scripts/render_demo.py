#!/usr/bin/env python3
"""Render the classifier scene in all output modes into a directory."""

import argparse
import sys
import tempfile
from pathlib import Path

from trirast import cli


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("out_dir", nargs="?", default="demo_out")
    args = ap.parse_args()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        cli.main(["gen", "classifierScene", tmp])
        scene = str(Path(tmp) / "classifier.scene.json")
        rc = cli.main(["render", scene, "-o", str(out / "shaded.png")])
        for mode in ("depth", "stageID", "bboxSize", "meshID"):
            rc |= cli.main(["render", scene, "--debug-view", mode,
                            "-o", str(out / f"{mode}.png")])
    print(f"images in {out}/")
    return rc


if __name__ == "__main__":
    sys.exit(main())
