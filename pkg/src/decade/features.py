"""Feature vectors fed to the distance regressors.

``decade_v1`` (14 entries): one-hot class (8), then box width, height and
diagonal normalized by the image's, box centre x and y normalized, and the
effective orientation divided by 90.

``disnet_v1`` (6 entries): inverse normalized height, width and diagonal,
followed by the class's prior height, width and length in meters.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .errors import DataError, DegenerateBoxError, DomainError, EncodingError
from .kitti import CLASSES

DECADE_V1 = "decade_v1"
DISNET_V1 = "disnet_v1"
DECADE_WIDTH = len(CLASSES) + 6
DISNET_WIDTH = 6

DEFAULT_PRIORS = {
    "Car": (1.5, 1.8, 4.0),
    "Van": (2.0, 1.9, 5.0),
    "Truck": (3.0, 2.6, 10.0),
    "Pedestrian": (1.75, 0.6, 0.6),
    "Person_sitting": (1.2, 0.6, 0.6),
    "Cyclist": (1.75, 0.6, 1.8),
    "Tram": (3.5, 2.5, 15.0),
    "Misc": (1.5, 1.5, 3.0),
}
_CLASS_INDEX = {name: i for i, name in enumerate(CLASSES)}


def effective_orientation(alpha):
    """Fold an allocentric angle in radians onto [0, 90] degrees.

    Orientations that project to the same visible width share one value:
    ``a = |alpha| in degrees``, result ``min(a, 180 - a)``. Angles outside
    [-pi, pi] are wrapped first. Works elementwise on arrays.
    """
    a = np.mod(np.abs(np.degrees(alpha)), 360.0)
    a = np.minimum(a, 360.0 - a)
    out = np.minimum(a, 180.0 - a)
    return float(out) if np.ndim(out) == 0 else out


def one_hot(class_name):
    try:
        idx = _CLASS_INDEX[class_name]
    except KeyError:
        raise EncodingError(f"cannot encode class {class_name!r}") from None
    vec = np.zeros(len(CLASSES))
    vec[idx] = 1.0
    return vec


def _box_size(box):
    left, top, right, bottom = box
    w, h = right - left, bottom - top
    if w <= 0 or h <= 0:
        raise DegenerateBoxError(f"box {tuple(box)} has non-positive size")
    return w, h


def build_decade_features(box, class_name, theta_eff, meta):
    if not 0.0 <= theta_eff <= 90.0:
        raise DomainError(f"effective orientation {theta_eff} outside [0, 90]")
    w, h = _box_size(box)
    W, H = meta.width_px, meta.height_px
    cx = 0.5 * (box[0] + box[2])
    cy = 0.5 * (box[1] + box[3])
    geo = [w / W, h / H, math.hypot(w, h) / math.hypot(W, H), cx / W, cy / H, theta_eff / 90.0]
    return np.concatenate([one_hot(class_name), geo])


def build_disnet_features(box, class_name, meta, priors=None):
    priors = DEFAULT_PRIORS if priors is None else priors
    w, h = _box_size(box)
    W, H = meta.width_px, meta.height_px
    if class_name not in priors:
        raise EncodingError(f"no size prior for class {class_name!r}")
    ph, pw, pl = priors[class_name]
    return np.array([H / h, W / w, math.hypot(W, H) / math.hypot(w, h), ph, pw, pl])


def decade_matrix(boxes, class_names, thetas, metas):
    """Stack decade_v1 rows for parallel sequences; float32."""
    rows = [build_decade_features(b, c, t, m) for b, c, t, m in zip(boxes, class_names, thetas, metas)]
    return np.asarray(rows, dtype=np.float32).reshape(-1, DECADE_WIDTH)


def disnet_matrix(boxes, class_names, metas, priors=None):
    rows = [build_disnet_features(b, c, m, priors) for b, c, m in zip(boxes, class_names, metas)]
    return np.asarray(rows, dtype=np.float32).reshape(-1, DISNET_WIDTH)


def load_priors(path):
    """Read a ``class,height_m,width_m,length_m`` CSV over the default table."""
    priors = dict(DEFAULT_PRIORS)
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["class", "height_m", "width_m", "length_m"]:
            raise DataError("priors CSV header must be class,height_m,width_m,length_m")
        for row in reader:
            name = row["class"]
            if name not in _CLASS_INDEX:
                raise EncodingError(f"unknown class {name!r} in priors file")
            try:
                triple = tuple(float(row[k]) for k in ("height_m", "width_m", "length_m"))
            except ValueError as exc:
                raise DataError(f"bad prior for {name}: {exc}") from None
            if min(triple) <= 0:
                raise DataError(f"priors for {name} must be strictly positive")
            priors[name] = triple
    return priors
