"""Training the distance regressors and reading the evaluation report.

With object sizes that vary around the class priors, box height alone no
longer fixes distance. The DECADE features (box geometry, position and
orientation) then beat the DisNet features (inverse box size plus priors).
"""

# %%
import numpy as np

from decade.evaluation import build_report
from decade.features import decade_matrix, disnet_matrix
from decade.models import build_disnet, build_distmlp
from decade.synth import SynthConfig, generate_samples
from decade.training import distance_config, train

cfg = SynthConfig(size_std=0.1)


def matrices(samples):
    metas = [cfg.meta(s.image_id) for s in samples]
    boxes = [s.box for s in samples]
    classes = [s.record.class_name for s in samples]
    return (
        decade_matrix(boxes, classes, [s.theta_eff for s in samples], metas),
        disnet_matrix(boxes, classes, metas),
        np.array([s.record.distance for s in samples]),
        classes,
    )


xd, xn, y, _ = matrices(generate_samples(cfg, 1, 10_000))
td, tn, ty, tclasses = matrices(generate_samples(cfg, 2, 2_000, start_index=10_000))

# %%
reports = {}
for name, builder, x, t in (("DECADE", build_distmlp, xd, td), ("DisNet", build_disnet, xn, tn)):
    result = train(builder(seed=0), x, y, distance_config())
    pred = result.best_net().predict(t)
    reports[name] = build_report(pred, ty, tclasses)
    o = reports[name].overall
    print(f"{name}: MAE {o.mae_m:.2f} m, MRE {100 * o.mre:.2f}% (best epoch {result.best_epoch})")

# %%
print("\nper range (DECADE)")
for key, agg in reports["DECADE"].per_range.items():
    if agg.count:
        print(f"  {key:>7} m  n={agg.count:4d}  MAE {agg.mae_m:6.2f}  MRE {100 * agg.mre:5.2f}%")
print()
print(reports["DECADE"].to_csv())
