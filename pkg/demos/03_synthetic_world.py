"""The synthetic pinhole world and the two feature layouts.

Objects of known real size are placed at a known distance in front of a
700 px focal-length camera. Box height then follows ``h = f * H / Z``.
Box width depends on the orientation as well, through the rotated
footprint ``W |cos t| + L |sin t|``.
"""

# %%
import math

import numpy as np

from decade.features import build_decade_features, build_disnet_features, effective_orientation
from decade.synth import SynthConfig, generate_samples, project_box_size, render_crop

cfg = SynthConfig()
for z in (10, 20, 40):
    w, h = project_box_size(cfg.focal_px, cfg.priors["Car"], z, 0.0)
    print(f"Car at {z:3d} m: {w:6.1f} x {h:5.1f} px")

for deg in (0, 30, 60, 90):
    w, _ = project_box_size(cfg.focal_px, cfg.priors["Car"], 20, math.radians(deg))
    print(f"Car at 20 m turned {deg:2d} deg: width {w:6.1f} px")

# %%
# Orientations that look alike fold onto [0, 90] degrees.
for alpha in (0.0, math.pi / 4, math.pi / 2, 3 * math.pi / 4, -math.pi):
    print(f"alpha {alpha:+.3f} rad -> {effective_orientation(alpha):5.1f} deg")

# %%
samples = generate_samples(cfg, seed=0, n=5)
for s in samples:
    meta = cfg.meta(s.image_id)
    decade = build_decade_features(s.box, s.record.class_name, s.theta_eff, meta)
    disnet = build_disnet_features(s.box, s.record.class_name, meta)
    print(s.record.class_name, f"Z={s.record.distance:6.2f}")
    print("  decade_v1", np.round(decade, 3))
    print("  disnet_v1", np.round(disnet, 3))

# %%
# The crop is a bar drawn at the effective orientation.
for theta in (0, 45, 90):
    bar = render_crop(theta, noise_std=0.0)[0] > 0.5
    print(f"theta {theta}")
    print("\n".join("".join("#" if v else "." for v in row[::2]) for row in bar[::2]))
