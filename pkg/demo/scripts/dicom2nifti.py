"""Pretend DICOM -> NIfTI conversion: one volume file per patient."""

import os
import sys


def count(stage):
    # test hook: append the stage name to $AIMP_DEMO_COUNTER
    path = os.environ.get("AIMP_DEMO_COUNTER")
    if path:
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(stage + "\n")


src, dst = sys.argv[1], sys.argv[2]
count("DICOM2NIFTI")
os.makedirs(dst, exist_ok=True)
for patient in sorted(os.listdir(src)):
    slices = []
    for name in sorted(os.listdir(os.path.join(src, patient))):
        with open(os.path.join(src, patient, name), encoding="utf-8") as fh:
            slices.append(fh.read().strip())
    with open(os.path.join(dst, patient + ".nii"), "w", encoding="utf-8") as out:
        out.write("\n".join(slices) + "\n")
print(f"converted {len(os.listdir(dst))} volumes")
