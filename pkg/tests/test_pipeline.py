import numpy as np
import pytest

from decade.errors import ConfigurationError, EmptyMatchError
from decade.kitti import DetectionRecord, group_by_image
from decade.models import build_distmlp, build_disnet, build_posecnn
from decade.pipeline import (
    adapt_decade,
    evaluate_end_to_end,
    evaluate_ground_truth,
    ground_truth_datasets,
    truth_pairs,
)
from decade.synth import SynthConfig, generate_samples, perturb_detections, render_scene
from decade.training import distance_config, pose_config

CFG = SynthConfig()


class Constant:
    """Stand-in network returning fixed outputs in call order."""

    def __init__(self, values):
        self.values = np.asarray(values, dtype=np.float64)

    def predict(self, x):
        return np.broadcast_to(self.values, (len(x),)).copy() if self.values.ndim == 0 else self.values[: len(x)]


@pytest.fixture(scope="module")
def world():
    samples = generate_samples(CFG, 11, 40)
    by_id = {s.image_id: s for s in samples}
    truths = {s.image_id: [s.record] for s in samples}
    metas = {s.image_id: CFG.meta(s.image_id) for s in samples}
    cache = {}

    def images(image_id):
        if image_id not in cache:
            cache[image_id] = render_scene(by_id[image_id], CFG)
        return cache[image_id]

    return truths, images, metas


@pytest.fixture(scope="module")
def nets():
    return build_posecnn(seed=1), build_distmlp(seed=1), build_disnet(seed=1)


def truth_distances(truths):
    return np.array([truths[k][0].distance for k in sorted(truths)])


class TestGroundTruth:
    def test_pairs_sorted_and_exact(self, world):
        truths, _, _ = world
        pairs = truth_pairs(truths)
        assert [p.detection.image_id for p in pairs] == sorted(truths)
        assert all(p.iou == 1.0 and p.detection.box == p.truth.box for p in pairs)

    def test_perfect_predictor(self, world):
        truths, images, metas = world
        report = evaluate_ground_truth(truths, images, None, Constant(truth_distances(truths)), metas=metas)
        assert report.overall.mae_m == 0 and report.overall.mre == 0
        assert report.pose_mae_deg is None

    def test_constant_mean_predictor(self, world):
        truths, images, metas = world
        d = truth_distances(truths)
        report = evaluate_ground_truth(truths, images, None, Constant(d.mean()), metas=metas)
        assert report.overall.mae_m == pytest.approx(np.mean(np.abs(d - d.mean())), rel=1e-12)

    def test_dataset_shapes(self, world):
        truths, images, metas = world
        pose, dist = ground_truth_datasets(truths, images, metas)
        assert pose.crops.shape == (40, 3, 32, 32)
        assert dist.features.shape == (40, 14) and dist.disnet_features.shape == (40, 6)

    def test_unknown_model(self, world, nets):
        truths, images, metas = world
        with pytest.raises(ConfigurationError):
            evaluate_ground_truth(truths, images, nets[0], nets[1], model="other", metas=metas)


class TestEndToEnd:
    def test_identical_detections_reproduce_ground_truth(self, world, nets):
        truths, images, metas = world
        dets = {
            k: [DetectionRecord(k, r.class_name, 0.8, r.box) for r in recs] for k, recs in truths.items()
        }
        for model, dist in (("decade", nets[1]), ("disnet", nets[2])):
            gt = evaluate_ground_truth(truths, images, nets[0], dist, model, metas=metas)
            e2e = evaluate_end_to_end(dets, truths, images, nets[0], dist, model, metas=metas)
            assert e2e == gt
            assert e2e.to_json() == gt.to_json()

    def test_no_matches(self, world, nets):
        truths, images, metas = world
        k = sorted(truths)[0]
        dets = {k: [DetectionRecord(k, "Car", 0.9, (0, 0, 1, 1))]}
        with pytest.raises(EmptyMatchError):
            evaluate_end_to_end(dets, truths, images, nets[0], nets[1], metas=metas)

    def test_unmatched_truths_dropped(self, world, nets):
        truths, images, metas = world
        keep = sorted(truths)[:5]
        dets = {k: [DetectionRecord(k, r.class_name, 0.8, r.box) for r in truths[k]] for k in keep}
        report = evaluate_end_to_end(dets, truths, images, nets[0], nets[1], metas=metas)
        assert report.overall.count == 5


class TestAdapt:
    def test_adapt_runs_pose_then_distance(self, world, nets):
        truths, images, metas = world
        dets = group_by_image(perturb_detections(truths, 0.03, 0, (CFG.image_width, CFG.image_height)))
        pose, dist = nets[0].copy(), nets[1].copy()
        calls = []
        res = adapt_decade(
            pose, dist, dets, truths, images, metas,
            pose_cfg=pose_config(epochs=1), dist_cfg=distance_config(epochs=2),
            log=lambda epoch, loss, mae: calls.append(epoch),
        )
        assert calls == [1, 1, 2]
        assert len(res.pose.history) == 1 and len(res.distance.history) == 2
        assert not np.array_equal(pose.get_weights()[0], nets[0].get_weights()[0])
        report = evaluate_end_to_end(dets, truths, images, res.pose_net, res.dist_net, metas=metas)
        assert report.overall.count > 0

    def test_adapt_requires_matches(self, world, nets):
        truths, images, metas = world
        with pytest.raises(EmptyMatchError):
            adapt_decade(nets[0].copy(), nets[1].copy(), {}, truths, images, metas)
