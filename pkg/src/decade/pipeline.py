"""End-to-end flows: ground-truth training data, evaluation and adaptation.

Three evaluation settings share one code path:

* ground truth: annotation boxes stand in for detections;
* end to end: detector boxes matched to annotations at IoU >= 0.6;
* adapted: as end to end, after fine-tuning on matched detector output
  (pose network first, then the distance network on the adapted pose
  network's orientations).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, EmptyMatchError
from .evaluation import build_report
from .kitti import DetectionRecord
from .matching import IOU_THRESHOLD, MatchedPair, datasets_from_pairs, match_all, predict_orientation
from .training import ADAPT_EPOCHS, adapt, distance_config, pose_config

MODELS = ("decade", "disnet")


def truth_pairs(truths_by_image):
    """Pair each annotation with a detection identical to it (IoU 1)."""
    pairs = []
    for image_id in sorted(truths_by_image):
        for rec in truths_by_image[image_id]:
            det = DetectionRecord(image_id, rec.class_name, 1.0, tuple(rec.box))
            pairs.append(MatchedPair(det, rec, 1.0))
    return pairs


def ground_truth_datasets(truths_by_image, images, metas=None, priors=None):
    """Pose and distance datasets from annotations, orientation feature = true value."""
    return datasets_from_pairs(truth_pairs(truths_by_image), images, None, metas, priors)


def predict_pairs(pairs, images, pose_net, dist_net, model="decade", metas=None, priors=None):
    """Run the estimator on matched pairs; returns (pose_ds, dist_ds, pose_deg, dist_m)."""
    if model not in MODELS:
        raise ConfigurationError(f"unknown model {model!r}; expected one of {MODELS}")
    pose_ds, dist_ds = datasets_from_pairs(pairs, images, pose_net if model == "decade" else None, metas, priors)
    feats = dist_ds.features if model == "decade" else dist_ds.disnet_features
    dist = dist_net.predict(feats).astype(np.float64)
    pose = predict_orientation(pose_net, pose_ds.crops) if pose_net is not None else None
    return pose_ds, dist_ds, pose, dist


def evaluate_pairs(pairs, images, pose_net, dist_net, model="decade", metas=None, priors=None):
    pose_ds, dist_ds, pose, dist = predict_pairs(pairs, images, pose_net, dist_net, model, metas, priors)
    return build_report(
        dist,
        dist_ds.targets,
        dist_ds.classes,
        pose_pred=pose,
        pose_truth=pose_ds.targets if pose is not None else None,
    )


def evaluate_ground_truth(truths_by_image, images, pose_net, dist_net, model="decade", metas=None, priors=None):
    return evaluate_pairs(truth_pairs(truths_by_image), images, pose_net, dist_net, model, metas, priors)


def evaluate_end_to_end(
    dets_by_image,
    truths_by_image,
    images,
    pose_net,
    dist_net,
    model="decade",
    metas=None,
    priors=None,
    threshold=IOU_THRESHOLD,
    require_class_match=False,
):
    pairs = match_all(dets_by_image, truths_by_image, threshold, require_class_match)
    if not pairs:
        raise EmptyMatchError(f"no detection matched any annotation at IoU >= {threshold}")
    return evaluate_pairs(pairs, images, pose_net, dist_net, model, metas, priors)


@dataclass
class AdaptationResult:
    pose: object  # TrainResult
    distance: object  # TrainResult

    @property
    def pose_net(self):
        return self.pose.best_net()

    @property
    def dist_net(self):
        return self.distance.best_net()


def adapt_decade(
    pose_net,
    dist_net,
    dets_by_image,
    truths_by_image,
    images,
    metas=None,
    pose_cfg=None,
    dist_cfg=None,
    threshold=IOU_THRESHOLD,
    log=None,
):
    """Fine-tune both networks on detector output matched to annotations.

    The pose network adapts first; the distance dataset is then rebuilt
    with the adapted pose network's orientations and the distance network
    adapts to it. Both networks are updated in place; the returned result
    also holds the best held-out weights of each stage.
    """
    pose_cfg = pose_cfg or pose_config(epochs=ADAPT_EPOCHS)
    dist_cfg = dist_cfg or distance_config(epochs=ADAPT_EPOCHS)
    pairs = match_all(dets_by_image, truths_by_image, threshold)
    if not pairs:
        raise EmptyMatchError(f"no detection matched any annotation at IoU >= {threshold}")
    pose_ds, _ = datasets_from_pairs(pairs, images, None, metas)
    pose_res = adapt(pose_net, pose_ds.crops, pose_ds.targets / 90.0, pose_cfg, target_scale=90.0, log=log)
    _, dist_ds = datasets_from_pairs(pairs, images, pose_res.best_net(), metas)
    dist_res = adapt(dist_net, dist_ds.features, dist_ds.targets, dist_cfg, log=log)
    return AdaptationResult(pose_res, dist_res)
