"""Network definitions, complexity accounting and checkpoint files.

Checkpoint layout (all integers unsigned 32-bit little-endian)::

    b"DCDE" | version | len(name) name | n_layers
    per layer: kind tag (1 byte) | dims | float32 LE weights then bias
    metadata: len(text) text   (JSON: input_shape, seed, epochs, ...)

Dims per kind: dense (in, out); conv2d (in_ch, out_ch, k, stride, pad);
maxpool2d (window, stride); relu and flatten carry none.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .engine import LayerSpec, Network
from .errors import (
    CheckpointShapeError,
    CheckpointTruncatedError,
    CheckpointVersionError,
    ConfigurationError,
)

POSE_INPUT_SHAPE = (3, 32, 32)
DECADE_INPUT_WIDTH = 14
DISNET_INPUT_WIDTH = 6

MAGIC = b"DCDE"
FORMAT_VERSION = 1
KIND_TAGS = {"dense": 1, "conv2d": 2, "maxpool2d": 3, "relu": 4, "flatten": 5}
_TAG_KINDS = {v: k for k, v in KIND_TAGS.items()}
_DIM_FIELDS = {
    "dense": ("in_features", "out_features"),
    "conv2d": ("in_channels", "out_channels", "kernel_size", "stride", "padding"),
    "maxpool2d": ("window", "stride"),
    "relu": (),
    "flatten": (),
}


def _dry_run(net):
    # shape conformance is checked in Network(); this also catches NaN-producing setups
    out = net.forward(np.zeros((1,) + net.input_shape, dtype=net.dtype))
    if out.shape != (1,) + net.output_shape:
        raise ConfigurationError(f"{net.name}: dry run produced shape {out.shape}")
    return net


def posecnn_specs(widths=(16, 32, 64), hidden=77, input_size=32):
    """Three conv/ReLU/pool blocks, flatten, dense-ReLU, dense to one output."""
    specs = []
    c_in = 3
    for c_out in widths:
        specs += [LayerSpec.conv2d(c_in, c_out, 3, padding=1), LayerSpec.relu(), LayerSpec.maxpool2d(2)]
        c_in = c_out
    side = input_size // 2 ** len(widths)
    specs += [
        LayerSpec.flatten(),
        LayerSpec.dense(c_in * side * side, hidden),
        LayerSpec.relu(),
        LayerSpec.dense(hidden, 1),
    ]
    return specs


def build_posecnn(seed=0, widths=(16, 32, 64), hidden=77, input_size=32, name="posecnn", dtype=np.float32):
    """Orientation regressor: 3x32x32 crop -> effective orientation / 90.

    The reduced-width arguments exist for gradient checking; the defaults
    give the deployed topology (102,587 parameters).
    """
    net = Network(
        posecnn_specs(widths, hidden, input_size), (3, input_size, input_size), name=name, seed=seed, dtype=dtype
    )
    return _dry_run(net)


def mlp_specs(in_width, hidden=(100, 100, 100)):
    specs = []
    prev = in_width
    for h in hidden:
        specs += [LayerSpec.dense(prev, h), LayerSpec.relu()]
        prev = h
    specs.append(LayerSpec.dense(prev, 1))
    return specs


def build_distmlp(seed=0, hidden=(100, 100, 100), name="distmlp", dtype=np.float32):
    """Distance regressor over the 14-entry feature vector, output in meters."""
    net = Network(mlp_specs(DECADE_INPUT_WIDTH, hidden), (DECADE_INPUT_WIDTH,), name=name, seed=seed, dtype=dtype)
    return _dry_run(net)


def build_disnet(seed=0, hidden=(100, 100, 100), name="disnet", dtype=np.float32):
    """Baseline regressor over the 6-entry inverse-size + class-prior vector."""
    net = Network(mlp_specs(DISNET_INPUT_WIDTH, hidden), (DISNET_INPUT_WIDTH,), name=name, seed=seed, dtype=dtype)
    return _dry_run(net)


BUILDERS = {"pose": build_posecnn, "dist": build_distmlp, "disnet": build_disnet}


def count_params(net):
    """Total number of weight and bias entries."""
    specs = net.specs if isinstance(net, Network) else net
    total = 0
    for s in specs:
        if s.kind == "dense":
            total += s.in_features * s.out_features + s.out_features
        elif s.kind == "conv2d":
            total += s.kernel_size**2 * s.in_channels * s.out_channels + s.out_channels
    return total


def count_flops(net, batch=1):
    """Multiply-accumulate count of dense and conv layers (1 MAC = 1 FLOP)."""
    shape = net.input_shape
    total = 0
    for s in net.specs:
        out = s.output_shape(shape)
        if s.kind == "dense":
            total += s.in_features * s.out_features
        elif s.kind == "conv2d":
            total += s.kernel_size**2 * s.in_channels * s.out_channels * out[1] * out[2]
        shape = out
    return total * batch


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(net, path, seed=None, epochs=0, **extra):
    """Write ``net`` to ``path`` in the binary checkpoint format."""
    name = net.name.encode("utf-8")
    chunks = [MAGIC, struct.pack("<I", FORMAT_VERSION), struct.pack("<I", len(name)), name]
    chunks.append(struct.pack("<I", len(net.layers)))
    for spec, layer in zip(net.specs, net.layers):
        dims = [getattr(spec, f) for f in _DIM_FIELDS[spec.kind]]
        chunks.append(struct.pack("<B", KIND_TAGS[spec.kind]))
        chunks.append(struct.pack(f"<{len(dims)}I", *dims))
        for p in layer.parameters():
            chunks.append(np.ascontiguousarray(p.data, dtype="<f4").tobytes())
    meta = {"input_shape": list(net.input_shape), "seed": seed, "epochs": epochs, **extra}
    text = json.dumps(meta, sort_keys=True).encode("utf-8")
    chunks += [struct.pack("<I", len(text)), text]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(b"".join(chunks))


class _Reader:
    def __init__(self, buf):
        self.buf = buf
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.buf):
            raise CheckpointTruncatedError(f"checkpoint truncated while reading {what}")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self, what, count=1):
        vals = struct.unpack(f"<{count}I", self.take(4 * count, what))
        return vals if count > 1 else vals[0]


def load_checkpoint(path, into=None):
    """Read a checkpoint; returns ``(network, metadata)``.

    With ``into`` the stored architecture must match that network's layer
    specs and the weights are loaded into it (it is also returned).
    """
    buf = Path(path).read_bytes()
    r = _Reader(buf)
    magic = r.take(4, "magic")
    if magic != MAGIC:
        raise CheckpointVersionError(f"bad magic {magic!r}, expected {MAGIC!r}")
    version = r.u32("format version")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(f"unsupported checkpoint version {version}")
    name = r.take(r.u32("name length"), "name").decode("utf-8")
    n_layers = r.u32("layer count")
    specs, buffers = [], []
    for idx in range(n_layers):
        where = f"layer {idx}"
        tag = r.take(1, f"{where} kind tag")[0]
        if tag not in _TAG_KINDS:
            raise CheckpointShapeError(f"{where}: unknown kind tag {tag}")
        kind = _TAG_KINDS[tag]
        where = f"layer {idx} ({kind})"
        fields = _DIM_FIELDS[kind]
        dims = r.u32(f"{where} dims", len(fields)) if fields else ()
        if len(fields) == 1:
            dims = (dims,)
        try:
            spec = LayerSpec(kind, **dict(zip(fields, dims)))
        except ConfigurationError as exc:
            raise CheckpointShapeError(f"{where}: {exc}") from None
        arrays = []
        if kind == "dense":
            shapes = [(spec.in_features, spec.out_features), (spec.out_features,)]
        elif kind == "conv2d":
            k = spec.kernel_size
            shapes = [(spec.out_channels, spec.in_channels, k, k), (spec.out_channels,)]
        else:
            shapes = []
        for shape in shapes:
            n = int(np.prod(shape))
            raw = r.take(4 * n, f"{where} parameters")
            arrays.append(np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float32))
        specs.append(spec)
        buffers.extend(arrays)
    meta_text = r.take(r.u32("metadata length"), "metadata")
    meta = json.loads(meta_text.decode("utf-8"))
    if r.pos != len(buf):
        raise CheckpointShapeError(f"{len(buf) - r.pos} trailing bytes after metadata")

    if into is not None:
        if list(into.specs) != specs or tuple(into.input_shape) != tuple(meta["input_shape"]):
            raise CheckpointShapeError(f"checkpoint architecture does not match network {into.name!r}")
        into.set_weights(buffers)
        return into, meta
    try:
        net = Network(specs, meta["input_shape"], name=name)
    except ConfigurationError as exc:
        raise CheckpointShapeError(f"stored layers do not conform: {exc}") from None
    net.set_weights(buffers)
    return net, meta
