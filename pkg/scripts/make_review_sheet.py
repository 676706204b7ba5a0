#!/usr/bin/env python3
"""Draw a seeded review sample from a finished run.

Writes a CSV with the model's predictions for the four evaluated
variables and empty truth columns for a human reviewer to fill in; the
completed sheet feeds `facadeatlas evaluate` after conversion to the
benchmark format (building_id, variable_key, ground_truth).
"""

import argparse
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from facadeatlas.dataset import merge_and_dedupe
from facadeatlas.evaluation import sample_for_review, write_review_sheet
from facadeatlas.indicators import default_schema
from facadeatlas.osm import read_building_store
from facadeatlas.streetview import ImageStore

parser = argparse.ArgumentParser(description=__doc__)
parser.add_argument("run_dir", help="a run directory with buildings/ and ledger.jsonl")
parser.add_argument("-n", type=int, default=200, help="sample size (default 200)")
parser.add_argument("--seed", type=int, default=0)
parser.add_argument("--out", default=None, help="output CSV (default <run_dir>/review_sheet.csv)")
args = parser.parse_args()

schema = default_schema()
buildings = read_building_store(os.path.join(args.run_dir, "buildings"))
store = ImageStore(args.run_dir)
dataset = merge_and_dedupe([os.path.join(args.run_dir, "ledger.jsonl")], buildings,
                           schema, image_index=store.assets(), path_base=args.run_dir)
n = min(args.n, len(dataset.rows))
if n < args.n:
    print(f"dataset has only {n} rows; sampling all of them", file=sys.stderr)
sheet = sample_for_review(dataset, n=n, seed=args.seed)
out = args.out or os.path.join(args.run_dir, "review_sheet.csv")
write_review_sheet(sheet, out)
print(f"wrote {len(sheet)} rows -> {out}")
