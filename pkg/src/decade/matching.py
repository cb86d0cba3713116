"""Box overlap, detection-to-annotation matching and adaptation datasets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, DegenerateBoxError
from .features import decade_matrix, disnet_matrix, effective_orientation
from .kitti import DetectionRecord, LabelRecord, extract_crop, image_meta

IOU_THRESHOLD = 0.6


def _area(box):
    w, h = box[2] - box[0], box[3] - box[1]
    if w <= 0 or h <= 0:
        raise DegenerateBoxError(f"box {tuple(box)} has zero area")
    return w * h


def iou(box_a, box_b):
    """Intersection over union of two (left, top, right, bottom) boxes."""
    area_a, area_b = _area(box_a), _area(box_b)
    iw = min(box_a[2], box_b[2]) - max(box_a[0], box_b[0])
    ih = min(box_a[3], box_b[3]) - max(box_a[1], box_b[1])
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return float(min(inter / (area_a + area_b - inter), 1.0))


@dataclass(frozen=True)
class MatchedPair:
    detection: DetectionRecord
    truth: LabelRecord
    iou: float

    @property
    def class_agrees(self):
        return self.detection.class_name == self.truth.class_name


def match_detections(dets, truths, threshold=IOU_THRESHOLD, require_class_match=False):
    """Greedy one-to-one matching for a single image.

    Detections are visited by descending confidence (ties keep input
    order); each takes the unmatched truth with the highest IoU, provided it
    reaches ``threshold``. Unmatched items on either side are dropped.
    Pairs are returned in annotation order.
    """
    order = sorted(range(len(dets)), key=lambda i: -dets[i].confidence)
    taken = [False] * len(truths)
    pairs = []
    for i in order:
        det = dets[i]
        best, best_j = -1.0, -1
        for j, truth in enumerate(truths):
            if taken[j] or (require_class_match and det.class_name != truth.class_name):
                continue
            v = iou(det.box, truth.box)
            if v > best:
                best, best_j = v, j
        if best_j >= 0 and best >= threshold:
            taken[best_j] = True
            pairs.append((best_j, MatchedPair(det, truths[best_j], best)))
    # report in annotation order so downstream aggregation is order-stable
    return [pair for _, pair in sorted(pairs, key=lambda item: item[0])]


def match_all(dets_by_image, truths_by_image, threshold=IOU_THRESHOLD, require_class_match=False):
    """Match every image, concatenating pairs in sorted image-id order."""
    pairs = []
    for image_id in sorted(truths_by_image):
        pairs += match_detections(
            dets_by_image.get(image_id, []), truths_by_image[image_id], threshold, require_class_match
        )
    return pairs


@dataclass
class PoseDataset:
    crops: np.ndarray  # (n, 3, 32, 32)
    targets: np.ndarray  # effective orientation in degrees
    image_ids: list

    def __len__(self):
        return len(self.targets)


@dataclass
class DistanceDataset:
    features: np.ndarray  # (n, 14) decade_v1
    targets: np.ndarray  # meters
    classes: list
    image_ids: list
    disnet_features: np.ndarray  # (n, 6) disnet_v1 for the same boxes

    def __len__(self):
        return len(self.targets)


def _get_image(images, image_id):
    try:
        return images(image_id) if callable(images) else images[image_id]
    except (KeyError, FileNotFoundError, OSError) as exc:
        raise DataError(f"image for id {image_id!r} is not available ({exc})") from None


def predict_orientation(pose_net, crops):
    """Effective orientation in degrees, clipped to [0, 90]."""
    if len(crops) == 0:
        return np.zeros(0)
    return np.clip(pose_net.predict(np.asarray(crops)) * 90.0, 0.0, 90.0).astype(np.float64)


def build_adaptation_dataset(
    dets_by_image,
    truths_by_image,
    images,
    pose_net=None,
    metas=None,
    threshold=IOU_THRESHOLD,
    require_class_match=False,
    priors=None,
):
    """Match detections to annotations and turn the pairs into datasets.

    See :func:`datasets_from_pairs`.
    """
    unknown = sorted(set(dets_by_image) - set(truths_by_image))
    if unknown:
        raise DataError(f"detections reference image ids without annotations: {unknown[:5]}")
    pairs = match_all(dets_by_image, truths_by_image, threshold, require_class_match)
    return datasets_from_pairs(pairs, images, pose_net, metas, priors)


def datasets_from_pairs(pairs, images, pose_net=None, metas=None, priors=None):
    """Pose and distance training sets from matched pairs.

    Inputs come from the detection box (its crop and geometry); targets from
    the matched annotation. The orientation entry of each distance feature
    vector is the pose network's prediction on the detection crop, or the
    true effective orientation when ``pose_net`` is None. ``images`` is a
    mapping or a callable from image id to a (3, H, W) array.
    """
    crops, pose_targets, ids, classes, boxes, meta_list, dists = [], [], [], [], [], [], []
    for pair in pairs:
        image_id = pair.detection.image_id
        image = _get_image(images, image_id)
        meta = metas[image_id] if metas is not None else image_meta(image_id, image)
        crops.append(extract_crop(image, pair.detection.box))
        pose_targets.append(effective_orientation(pair.truth.alpha))
        ids.append(image_id)
        classes.append(pair.detection.class_name)
        boxes.append(pair.detection.box)
        meta_list.append(meta)
        dists.append(pair.truth.distance)
    crops = np.asarray(crops, dtype=np.float32).reshape(-1, 3, 32, 32)
    pose_targets = np.asarray(pose_targets, dtype=np.float64)
    thetas = pose_targets if pose_net is None else predict_orientation(pose_net, crops)
    pose = PoseDataset(crops, pose_targets, ids)
    dist = DistanceDataset(
        decade_matrix(boxes, classes, thetas, meta_list),
        np.asarray(dists, dtype=np.float64),
        classes,
        ids,
        disnet_matrix(boxes, classes, meta_list, priors),
    )
    return pose, dist
