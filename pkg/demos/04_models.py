"""Model sizes, FLOP counts and checkpoints."""

# %%
import tempfile
from pathlib import Path

import numpy as np

from decade.models import build_disnet, build_distmlp, build_posecnn, count_flops, count_params
from decade.models import load_checkpoint, save_checkpoint

for builder in (build_posecnn, build_distmlp, build_disnet):
    net = builder(seed=0)
    print(f"{net.name:<8} params {count_params(net):>8,}  FLOPs (MACs) {count_flops(net):>10,}")

# %%
net = build_distmlp(seed=3)
x = np.random.default_rng(0).random((4, 14)).astype(np.float32)
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "dist.dcde"
    save_checkpoint(net, path, seed=3, epochs=0)
    print(path.stat().st_size, "bytes")
    loaded, meta = load_checkpoint(path)
print(meta)
print("identical outputs:", np.array_equal(net(x), loaded(x)))
