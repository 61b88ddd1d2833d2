"""Deterministic train/validation split."""

import os
import random
import sys

import yaml


def count(stage):
    # test hook: append the stage name to $AIMP_DEMO_COUNTER
    path = os.environ.get("AIMP_DEMO_COUNTER")
    if path:
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(stage + "\n")


src, dst = sys.argv[1], sys.argv[2]
count("Prepare")
with open("params.yaml", encoding="utf-8") as fh:
    split = yaml.safe_load(fh)["split"]
cases = sorted(os.listdir(src))
random.Random(split["seed"]).shuffle(cases)
n_val = max(1, round(len(cases) * split["val_fraction"]))
os.makedirs(dst, exist_ok=True)
for part, names in (("val", cases[:n_val]), ("train", cases[n_val:])):
    with open(os.path.join(dst, part + ".txt"), "w", encoding="utf-8") as out:
        for name in sorted(names):
            with open(os.path.join(src, name), encoding="utf-8") as fh:
                out.write(f"{name} {fh.read().strip()}\n")
print(f"{len(cases) - n_val} train / {n_val} val")
