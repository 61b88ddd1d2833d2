"""Fit a threshold "model" and report Dice on the validation split."""

import json
import os
import sys

import yaml


def count(stage):
    # test hook: append the stage name to $AIMP_DEMO_COUNTER
    path = os.environ.get("AIMP_DEMO_COUNTER")
    if path:
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(stage + "\n")


data, model_path, metrics_path = sys.argv[1:4]
count("Train")
with open("params.yaml", encoding="utf-8") as fh:
    hp = yaml.safe_load(fh)["train"]


def load(part):
    with open(os.path.join(data, part + ".txt"), encoding="utf-8") as fh:
        return [[int(v) for v in line.split()[1:]] for line in fh]


train, val = load("train"), load("val")
pixels = sorted(v for case in train for v in case)
threshold = pixels[len(pixels) // 2]
for _ in range(hp["epochs"]):
    threshold -= round(threshold * hp["learning_rate"])


def dice(case):
    truth = [v > 100 for v in case]
    pred = [v > threshold for v in case]
    inter = sum(t and p for t, p in zip(truth, pred))
    total = sum(truth) + sum(pred)
    return 1.0 if total == 0 else 2 * inter / total


os.makedirs(os.path.dirname(model_path), exist_ok=True)
with open(model_path, "wb") as fh:
    fh.write(f"{hp['architecture']} threshold={threshold}\n".encode())
scores = [dice(c) for c in val]
metrics = {"Dice": round(sum(scores) / len(scores), 4), "ValidationCases": len(val)}
with open(metrics_path, "w", encoding="utf-8") as fh:
    json.dump(metrics, fh, indent=2, sort_keys=True)
    fh.write("\n")
print(json.dumps(metrics, sort_keys=True))
