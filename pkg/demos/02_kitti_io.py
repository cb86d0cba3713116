"""Reading and writing KITTI labels and detections, and cropping boxes."""

# %%
import tempfile
from pathlib import Path

import numpy as np

from decade.kitti import (
    DetectionRecord,
    extract_crop,
    format_label_line,
    load_detections,
    parse_label_line,
    preprocess,
    write_detections,
)

lines = [
    "Car 0.00 0 -1.58 587.01 173.33 614.12 200.12 1.65 1.67 3.64 -0.65 1.71 46.70 -1.59",
    "Pedestrian 0.00 0 0.21 100.00 150.00 120.00 210.00 1.80 0.60 0.70 -8.00 1.60 212.00 0.10",
    "DontCare -1 -1 -10 503.89 169.71 590.61 190.13 -1 -1 -1 -1000 -1000 -1000 -10",
]
records = [parse_label_line(text, lineno=i + 1) for i, text in enumerate(lines)]
for r in records:
    print(f"{r.class_name:<11} distance {r.distance:7.2f} m  box {r.box}")

# DontCare goes, far objects are clipped at 150 m.
for r in preprocess(records):
    print("kept:", r.class_name, r.distance)

print(format_label_line(records[0]))

# Distance along the optical axis is the default; the Euclidean norm is optional.
print("euclidean:", parse_label_line(lines[0], distance_mode="euclidean").distance)

# %%
# Detections CSV round trip.
dets = [DetectionRecord("000001", "Car", 0.91, (100.0, 120.5, 180.0, 200.0))]
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "detections.csv"
    write_detections(path, dets)
    print(path.read_text())
    assert load_detections(path) == dets

# %%
# Boxes are clamped to the image and resized to 3x32x32 (bilinear).
image = np.random.default_rng(0).random((3, 375, 1242)).astype(np.float32)
crop = extract_crop(image, (-20.0, 100.0, 60.0, 180.0))
print("crop", crop.shape, crop.dtype)
