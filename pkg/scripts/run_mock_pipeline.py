#!/usr/bin/env python3
"""Run the full pipeline offline against the committed fixture city.

Good for a quick demo and for eyeballing every artifact the stages
produce. Everything lands in ./runs/mock-demo (or the directory given as
the first argument).
"""

import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from facadeatlas.cli import main

out_dir = sys.argv[1] if len(sys.argv) > 1 else os.path.join("runs", "mock-demo")
code = main(["run", "--mock", "--city", "Amsterdam", "--out", out_dir])
if code == 0:
    print(f"\nartifacts in {out_dir}:")
    for name in sorted(os.listdir(out_dir)):
        print(f"  {name}")
sys.exit(code)
