"""KITTI label files, detection CSVs, split files, images and crops."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, DegenerateBoxError, ParseError

CLASSES = ("Car", "Van", "Truck", "Pedestrian", "Person_sitting", "Cyclist", "Tram", "Misc")
LABEL_CLASSES = CLASSES + ("DontCare",)
MAX_DISTANCE = 150.0
CROP_SIZE = 32
DETECTION_HEADER = ("image_id", "class", "confidence", "left", "top", "right", "bottom")
DISTANCE_MODES = ("z_axis", "euclidean")


@dataclass(frozen=True)
class LabelRecord:
    """One object annotation. ``box`` is (left, top, right, bottom) in pixels."""

    class_name: str
    truncated: float
    occluded: int
    alpha: float
    box: tuple
    dims3d: tuple
    location: tuple
    rotation_y: float
    distance: float = float("nan")

    @property
    def is_dontcare(self):
        return self.class_name == "DontCare"


@dataclass(frozen=True)
class DetectionRecord:
    image_id: str
    class_name: str
    confidence: float
    box: tuple


@dataclass(frozen=True)
class ImageMeta:
    image_id: str
    width_px: int
    height_px: int

    def __post_init__(self):
        if self.width_px <= 0 or self.height_px <= 0:
            raise DataError(f"image {self.image_id}: non-positive size {self.width_px}x{self.height_px}")


def derive_distance(location, mode="z_axis"):
    """Object distance from its camera-frame location (no clipping)."""
    x, y, z = location
    if mode == "z_axis":
        return float(z)
    if mode == "euclidean":
        return math.sqrt(x * x + y * y + z * z)
    raise DataError(f"unknown distance mode {mode!r}; expected one of {DISTANCE_MODES}")


def parse_label_line(text, lineno=None, distance_mode="z_axis", source=None):
    """Parse one 15-field KITTI label line."""
    fields = text.split()
    if len(fields) != 15:
        raise ParseError(f"expected 15 fields, got {len(fields)}", lineno, source)
    name = fields[0]
    if name not in LABEL_CLASSES:
        raise ParseError(f"unknown class {name!r}", lineno, source)
    try:
        nums = [float(f) for f in fields[1:]]
        occluded = int(fields[2])
    except ValueError as exc:
        raise ParseError(f"unparseable number ({exc})", lineno, source) from None
    location = tuple(nums[10:13])
    box = tuple(nums[3:7])
    if name != "DontCare" and not (box[2] > box[0] and box[3] > box[1]):
        raise ParseError(f"degenerate 2-D box {box}", lineno, source)
    return LabelRecord(
        class_name=name,
        truncated=nums[0],
        occluded=occluded,
        alpha=nums[2],
        box=box,
        dims3d=tuple(nums[7:10]),
        location=location,
        rotation_y=nums[13],
        distance=derive_distance(location, distance_mode),
    )


def format_label_line(rec: LabelRecord):
    """Serialize back to the 15-field text form (KITTI print precision)."""
    vals = [rec.truncated, rec.occluded, rec.alpha, *rec.box, *rec.dims3d, *rec.location, rec.rotation_y]
    parts = [rec.class_name, f"{vals[0]:.2f}", str(int(vals[1]))]
    parts += [f"{v:.2f}" for v in vals[2:]]
    return " ".join(parts)


def read_label_file(path, distance_mode="z_axis"):
    path = Path(path)
    records = []
    with path.open() as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                records.append(parse_label_line(line, lineno, distance_mode, source=path.name))
    return records


def write_label_file(path, records: Iterable[LabelRecord]):
    Path(path).write_text("".join(format_label_line(r) + "\n" for r in records))


def preprocess(records: Sequence[LabelRecord]):
    """Drop DontCare and negative distances, clip distance at 150 m."""
    out = []
    for r in records:
        if r.is_dontcare or not r.distance >= 0:
            continue
        if r.distance > MAX_DISTANCE:
            r = replace(r, distance=MAX_DISTANCE)
        out.append(r)
    return out


def read_split(path):
    """Newline-separated image ids; blank lines ignored."""
    return [line.strip() for line in Path(path).read_text().splitlines() if line.strip()]


def write_split(path, ids):
    Path(path).write_text("".join(f"{i}\n" for i in ids))


def load_labels(labels_dir, image_ids, distance_mode="z_axis"):
    """Map image id -> preprocessed records, for every id in ``image_ids``."""
    labels_dir = Path(labels_dir)
    out = {}
    for image_id in image_ids:
        path = labels_dir / f"{image_id}.txt"
        if not path.exists():
            raise DataError(f"no label file for image id {image_id!r} ({path})")
        out[image_id] = preprocess(read_label_file(path, distance_mode))
    return out


# ---------------------------------------------------------------------------
# Detections
# ---------------------------------------------------------------------------


def _parse_detection_row(row, rowno):
    if len(row) != 7:
        raise ParseError(f"expected 7 columns, got {len(row)}", rowno)
    image_id, name = row[0].strip(), row[1].strip()
    if not image_id:
        raise ParseError("empty image_id", rowno)
    if name not in CLASSES:
        raise ParseError(f"unknown class {name!r}", rowno)
    try:
        conf, left, top, right, bottom = (float(v) for v in row[2:])
    except ValueError as exc:
        raise ParseError(f"unparseable number ({exc})", rowno) from None
    if not 0.0 <= conf <= 1.0:
        raise ParseError(f"confidence {conf} outside [0, 1]", rowno)
    if not (right > left and bottom > top):
        raise ParseError(f"degenerate box ({left}, {top}, {right}, {bottom})", rowno)
    return DetectionRecord(image_id, name, conf, (left, top, right, bottom))


def load_detections(path):
    """Read a detections CSV, grouped by image id in order of first appearance."""
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != DETECTION_HEADER:
            raise ParseError(f"header must be {','.join(DETECTION_HEADER)}", 1)
        rows = [_parse_detection_row(row, n) for n, row in enumerate(reader, 2) if row]
    order = {}
    for d in rows:
        order.setdefault(d.image_id, len(order))
    return sorted(rows, key=lambda d: order[d.image_id])


def write_detections(path, detections: Iterable[DetectionRecord]):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DETECTION_HEADER)
        for d in detections:
            w.writerow([d.image_id, d.class_name, repr(float(d.confidence)), *(repr(float(v)) for v in d.box)])


def group_by_image(records):
    out = {}
    for d in records:
        out.setdefault(d.image_id, []).append(d)
    return out


# ---------------------------------------------------------------------------
# Images and crops
# ---------------------------------------------------------------------------


def load_image(path):
    """8-bit image file -> float32 array (3, H, W) scaled into [0, 1]."""
    from PIL import Image

    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    return np.ascontiguousarray(arr.transpose(2, 0, 1))


def save_image(path, image):
    from PIL import Image

    arr = np.clip(np.rint(np.asarray(image).transpose(1, 2, 0) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr).save(path)


def image_meta(image_id, image):
    return ImageMeta(image_id, int(image.shape[2]), int(image.shape[1]))


def clamp_box(box, width, height):
    left, top, right, bottom = box
    return (
        min(max(left, 0.0), width),
        min(max(top, 0.0), height),
        min(max(right, 0.0), width),
        min(max(bottom, 0.0), height),
    )


def _resample_axis(start, stop, n_in, n_out):
    # half-pixel centres (align_corners off), clamped to the valid index range
    pos = start + (np.arange(n_out) + 0.5) * (stop - start) / n_out - 0.5
    pos = np.clip(pos, 0.0, n_in - 1)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = (pos - lo).astype(np.float32)
    return lo, hi, frac


def resize_region(image, box, size=CROP_SIZE):
    """Bilinear resample of the continuous region ``box`` of ``image`` to size x size."""
    _, h, w = image.shape
    left, top, right, bottom = box
    y0, y1, fy = _resample_axis(top, bottom, h, size)
    x0, x1, fx = _resample_axis(left, right, w, size)
    rows = image[:, y0, :] * (1 - fy)[None, :, None] + image[:, y1, :] * fy[None, :, None]
    out = rows[:, :, x0] * (1 - fx) + rows[:, :, x1] * fx
    return out.astype(np.float32)


def extract_crop(image, box, size=CROP_SIZE):
    """Clamp ``box`` to the image and resize that region to a (3, 32, 32) crop."""
    image = np.asarray(image, dtype=np.float32)
    _, h, w = image.shape
    clamped = clamp_box(box, w, h)
    if not (clamped[2] > clamped[0] and clamped[3] > clamped[1]):
        raise DegenerateBoxError(f"box {tuple(box)} has zero area inside a {w}x{h} image")
    return np.clip(resize_region(image, clamped, size), 0.0, 1.0)
