"""Resample every volume to image_size and crop around the mask."""

import os
import sys

import yaml


def count(stage):
    # test hook: append the stage name to $AIMP_DEMO_COUNTER
    path = os.environ.get("AIMP_DEMO_COUNTER")
    if path:
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(stage + "\n")


src, dst = sys.argv[1], sys.argv[2]
count("Preprocess")
with open("params.yaml", encoding="utf-8") as fh:
    params = yaml.safe_load(fh)
size, crop = params["image_size"], params["maskcrop"]
os.makedirs(dst, exist_ok=True)
for name in sorted(os.listdir(src)):
    with open(os.path.join(src, name), encoding="utf-8") as fh:
        values = [int(v) for line in fh for v in line.split()]
    scaled = [(v * size) // 256 for v in values]
    cropped = [min(v, size - crop) for v in scaled]
    with open(os.path.join(dst, name), "w", encoding="utf-8") as out:
        out.write(" ".join(map(str, cropped)) + "\n")
print(f"preprocessed at size={size} crop={crop}")
