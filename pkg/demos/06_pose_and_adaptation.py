"""Orientation from crops, then adapting both networks to a noisy detector.

Detector boxes are simulated by jittering each annotation's edges by 5% of
the box size. Detections are matched to annotations at IoU 0.6. The pose
network is fine-tuned on crops cut from the detector boxes. The distance
network is then fine-tuned on features built from those boxes and from the
adapted pose network's orientation.
"""

# %%
from decade.kitti import group_by_image
from decade.models import build_distmlp, build_posecnn
from decade.pipeline import adapt_decade, evaluate_end_to_end, evaluate_ground_truth, ground_truth_datasets
from decade.synth import SynthConfig, generate_samples, perturb_detections, render_scene
from decade.training import distance_config, pose_config, train

cfg = SynthConfig()
size = (cfg.image_width, cfg.image_height)


def world(seed, n, start):
    samples = generate_samples(cfg, seed, n, start_index=start)
    by_id = {s.image_id: s for s in samples}
    truths = {s.image_id: [s.record] for s in samples}
    metas = {s.image_id: cfg.meta(s.image_id) for s in samples}
    return truths, metas, lambda image_id: render_scene(by_id[image_id], cfg)


truths, metas, images = world(1, 5000, 0)
pose_ds, dist_ds = ground_truth_datasets(truths, images, metas)
pose = build_posecnn(seed=0)
train(pose, pose_ds.crops, pose_ds.targets / 90, pose_config(epochs=5), target_scale=90)
dist = build_distmlp(seed=0)
train(dist, dist_ds.features, dist_ds.targets, distance_config())

test_truths, test_metas, test_images = world(3, 500, 20000)
gt = evaluate_ground_truth(test_truths, test_images, pose, dist, metas=test_metas)
print(f"ground truth boxes: MAE {gt.overall.mae_m:.2f} m, MRE {100 * gt.overall.mre:.2f}%, pose {gt.pose_mae_deg:.2f} deg")

# %%
test_dets = group_by_image(perturb_detections(test_truths, 0.05, 4, size))
before = evaluate_end_to_end(test_dets, test_truths, test_images, pose, dist, metas=test_metas)
print(f"jittered boxes:     MAE {before.overall.mae_m:.2f} m, MRE {100 * before.overall.mre:.2f}%, pose {before.pose_mae_deg:.2f} deg")

adapt_truths, adapt_metas, adapt_images = world(2, 3000, 10000)
adapt_dets = group_by_image(perturb_detections(adapt_truths, 0.05, 2, size))
result = adapt_decade(
    pose.copy(), dist.copy(), adapt_dets, adapt_truths, adapt_images, adapt_metas,
    pose_cfg=pose_config(epochs=10), dist_cfg=distance_config(epochs=100),
)
after = evaluate_end_to_end(test_dets, test_truths, test_images, result.pose_net, result.dist_net, metas=test_metas)
print(f"after adaptation:   MAE {after.overall.mae_m:.2f} m, MRE {100 * after.overall.mre:.2f}%, pose {after.pose_mae_deg:.2f} deg")
