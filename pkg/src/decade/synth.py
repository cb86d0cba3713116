"""Synthetic pinhole-camera scenes with exact ground truth.

Each sample is one object seen by a pinhole camera: box height is
``focal * H / Z`` and box width ``focal * (W |cos t| + L |sin t|) / Z``, so
height depends on distance only while width also depends on orientation.
The object's appearance is a bright bar whose in-plane angle equals the
effective orientation, which gives the pose network something learnable.

``size_std`` > 0 scales each real dimension of every instance independently
around its class prior, so height alone no longer pins down distance.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DataError, DomainError
from .features import DEFAULT_PRIORS, effective_orientation
from .kitti import (
    CROP_SIZE,
    DetectionRecord,
    ImageMeta,
    LabelRecord,
    save_image,
    write_detections,
    write_label_file,
    write_split,
)

DEFAULT_CLASS_MIX = {
    "Car": 0.55,
    "Van": 0.08,
    "Truck": 0.04,
    "Pedestrian": 0.13,
    "Person_sitting": 0.03,
    "Cyclist": 0.07,
    "Tram": 0.03,
    "Misc": 0.07,
}

BAR_HALF_LENGTH = 12.0
BAR_HALF_WIDTH = 2.5
FOREGROUND = np.array([0.95, 0.85, 0.75], dtype=np.float32)
BACKGROUND = np.array([0.10, 0.12, 0.15], dtype=np.float32)


def derive_seed(seed, tag):
    """Stable sub-seed for ``(seed, tag)``; independent of PYTHONHASHSEED."""
    digest = hashlib.sha256(f"{int(seed)}:{tag}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass
class SynthConfig:
    focal_px: float = 700.0
    image_width: int = 1242
    image_height: int = 375
    min_distance: float = 4.0
    max_distance: float = 150.0
    class_mix: dict = field(default_factory=lambda: dict(DEFAULT_CLASS_MIX))
    priors: dict = field(default_factory=lambda: dict(DEFAULT_PRIORS))
    jitter_std: float = 0.0
    noise_std: float = 0.02
    size_std: float = 0.0
    max_retries: int = 1000

    def __post_init__(self):
        if self.focal_px <= 0:
            raise ConfigurationError("focal_px must be positive")
        if not 0 <= self.size_std < 0.5:
            raise ConfigurationError("size_std must lie in [0, 0.5)")
        if self.jitter_std < 0 or self.noise_std < 0:
            raise ConfigurationError("jitter and noise standard deviations must be non-negative")
        if not 0 < self.min_distance < self.max_distance:
            raise ConfigurationError("distance range must satisfy 0 < min < max")
        missing = set(self.class_mix) - set(self.priors)
        if missing:
            raise ConfigurationError(f"no size priors for classes {sorted(missing)}")

    def meta(self, image_id):
        return ImageMeta(image_id, self.image_width, self.image_height)


@dataclass
class SynthSample:
    image_id: str
    record: LabelRecord
    theta_eff: float
    crop: np.ndarray

    @property
    def box(self):
        return self.record.box


def project_box_size(focal, dims, distance, theta):
    """Pixel (width, height) of an object with real (H, W, L) at depth ``distance``."""
    height, width, length = dims
    w = focal * (width * abs(math.cos(theta)) + length * abs(math.sin(theta))) / distance
    h = focal * height / distance
    return w, h


def wrap_angle(theta):
    return (theta + math.pi) % (2 * math.pi) - math.pi


def render_crop(theta_eff, seed=0, noise_std=0.02):
    """A 3x32x32 image of a centered bar rotated by ``theta_eff`` degrees.

    0 degrees is a horizontal bar, 90 a vertical one. Edges are
    anti-aliased so the image changes continuously with the angle.
    """
    if not 0.0 <= theta_eff <= 90.0:
        raise DomainError(f"effective orientation {theta_eff} outside [0, 90]")
    t = math.radians(theta_eff)
    c = np.arange(CROP_SIZE, dtype=np.float64) + 0.5 - CROP_SIZE / 2
    y, x = np.meshgrid(c, c, indexing="ij")
    along = x * math.cos(t) - y * math.sin(t)
    across = x * math.sin(t) + y * math.cos(t)
    cover = np.clip(BAR_HALF_WIDTH + 0.5 - np.abs(across), 0, 1) * np.clip(
        BAR_HALF_LENGTH + 0.5 - np.abs(along), 0, 1
    )
    img = BACKGROUND[:, None, None] + (FOREGROUND - BACKGROUND)[:, None, None] * cover[None]
    if noise_std:
        rng = np.random.default_rng(seed)
        img = img + rng.normal(0.0, noise_std, size=img.shape)
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def _draw_sample(rng, config, classes, weights, image_id):
    name = classes[rng.choice(len(classes), p=weights)]
    dims = tuple(config.priors[name])
    if config.size_std:
        scale = np.clip(1.0 + config.size_std * rng.standard_normal(3), 0.5, 1.5)
        dims = tuple(float(d * k) for d, k in zip(dims, scale))
    for _ in range(config.max_retries):
        z = rng.uniform(config.min_distance, config.max_distance)
        theta = rng.uniform(-math.pi, math.pi)
        w, h = project_box_size(config.focal_px, dims, z, theta)
        if w < config.image_width and h < config.image_height:
            break
    else:
        raise DataError(f"could not place a {name} inside the image after {config.max_retries} draws")
    cx = rng.uniform(w / 2, config.image_width - w / 2)
    cy = rng.uniform(h / 2, config.image_height - h / 2)
    box = (cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2)
    x = (cx - config.image_width / 2) * z / config.focal_px
    y = (cy - config.image_height / 2) * z / config.focal_px
    alpha = wrap_angle(theta)
    record = LabelRecord(
        class_name=name,
        truncated=0.0,
        occluded=0,
        alpha=alpha,
        box=box,
        dims3d=tuple(dims),
        location=(x, y, z),
        rotation_y=wrap_angle(alpha + math.atan2(x, z)),
        distance=z,
    )
    theta_eff = effective_orientation(alpha)
    crop = render_crop(theta_eff, seed=int(rng.integers(2**32)), noise_std=config.noise_std)
    return SynthSample(image_id, record, theta_eff, crop)


def generate_samples(config: SynthConfig, seed, n, start_index=0):
    """``n`` independent one-object scenes, deterministic in ``(config, seed, n)``."""
    if n < 1:
        raise ConfigurationError("n must be at least 1")
    rng = np.random.default_rng(seed)
    classes = list(config.class_mix)
    weights = np.array([config.class_mix[c] for c in classes], dtype=float)
    weights /= weights.sum()
    return [
        _draw_sample(rng, config, classes, weights, f"{start_index + i:06d}") for i in range(n)
    ]


def perturb_detections(annotations, jitter_std, seed, image_size=None, max_retries=100):
    """Simulate detector output from ground-truth annotations.

    ``annotations`` maps image id -> list of LabelRecord. Each box edge moves
    by Gaussian noise with standard deviation ``jitter_std`` times the box
    width (left/right) or height (top/bottom). With ``image_size`` =
    (width, height) boxes are clamped to the image. Degenerate results are
    redrawn.
    """
    if jitter_std < 0:
        raise ConfigurationError("jitter_std must be non-negative")
    rng = np.random.default_rng(seed)
    out = []
    for image_id, records in annotations.items():
        for rec in records:
            if rec.class_name == "DontCare":
                continue
            left, top, right, bottom = rec.box
            w, h = right - left, bottom - top
            conf = float(rng.uniform(0.5, 1.0))
            for _ in range(max_retries):
                dl, dr = rng.normal(0.0, jitter_std * w, size=2)
                dt, db = rng.normal(0.0, jitter_std * h, size=2)
                box = (left + dl, top + dt, right + dr, bottom + db)
                if image_size is not None:
                    iw, ih = image_size
                    box = (max(box[0], 0.0), max(box[1], 0.0), min(box[2], iw), min(box[3], ih))
                if box[2] > box[0] and box[3] > box[1]:
                    break
            else:
                box = rec.box
            out.append(DetectionRecord(image_id, rec.class_name, conf, tuple(float(v) for v in box)))
    return out


def render_scene(sample: SynthSample, config: SynthConfig):
    """Full image (3, H, W): flat background with the sample's crop stretched over its box."""
    img = np.empty((3, config.image_height, config.image_width), dtype=np.float32)
    img[:] = BACKGROUND[:, None, None]
    left, top, right, bottom = sample.box
    x0, x1 = max(int(math.floor(left)), 0), min(int(math.ceil(right)), config.image_width)
    y0, y1 = max(int(math.floor(top)), 0), min(int(math.ceil(bottom)), config.image_height)
    if x1 <= x0 or y1 <= y0:
        return img
    # pixel centres inside the box, mapped into crop coordinates
    ys = np.arange(y0, y1) + 0.5
    xs = np.arange(x0, x1) + 0.5
    ys, xs = ys[(ys >= top) & (ys <= bottom)], xs[(xs >= left) & (xs <= right)]
    if not len(ys) or not len(xs):
        return img
    u = np.clip((ys - top) / (bottom - top) * CROP_SIZE - 0.5, 0, CROP_SIZE - 1)
    v = np.clip((xs - left) / (right - left) * CROP_SIZE - 0.5, 0, CROP_SIZE - 1)
    u0 = np.floor(u).astype(int)
    v0 = np.floor(v).astype(int)
    u1 = np.minimum(u0 + 1, CROP_SIZE - 1)
    v1 = np.minimum(v0 + 1, CROP_SIZE - 1)
    fu = (u - u0)[None, :, None]
    fv = (v - v0)[None, None, :]
    c = sample.crop
    patch = (
        c[:, u0][:, :, v0] * (1 - fu) * (1 - fv)
        + c[:, u0][:, :, v1] * (1 - fu) * fv
        + c[:, u1][:, :, v0] * fu * (1 - fv)
        + c[:, u1][:, :, v1] * fu * fv
    )
    yi = (ys - 0.5).astype(int)
    xi = (xs - 0.5).astype(int)
    img[:, yi[0] : yi[-1] + 1, xi[0] : xi[-1] + 1] = patch
    return img


def write_dataset(samples, out_dir, config: SynthConfig, test_fraction=0.1, jitter_std=None, seed=0):
    """Write samples in the KITTI-style layout used by the pipelines.

    Produces ``labels/<id>.txt``, ``images/<id>.png``, ``train.txt``,
    ``test.txt`` and, when ``jitter_std`` is given, ``detections.csv``.
    """
    out = Path(out_dir)
    (out / "labels").mkdir(parents=True, exist_ok=True)
    (out / "images").mkdir(parents=True, exist_ok=True)
    for s in samples:
        write_label_file(out / "labels" / f"{s.image_id}.txt", [s.record])
        save_image(out / "images" / f"{s.image_id}.png", render_scene(s, config))
    ids = [s.image_id for s in samples]
    n_test = int(round(len(ids) * test_fraction))
    write_split(out / "train.txt", ids[: len(ids) - n_test])
    write_split(out / "test.txt", ids[len(ids) - n_test :])
    if jitter_std is not None:
        dets = perturb_detections(
            {s.image_id: [s.record] for s in samples},
            jitter_std,
            derive_seed(seed, "detections"),
            image_size=(config.image_width, config.image_height),
        )
        write_detections(out / "detections.csv", dets)
    return out
