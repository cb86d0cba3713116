"""A small neural-network engine on top of numpy.

Five fixed layer kinds (dense, conv2d, maxpool2d, relu, flatten), a
sequential container with hand-written backward passes, the mean squared
error loss, the Adam optimizer and a finite-difference gradient checker.

Image tensors are channels-first (batch, channels, height, width).
Training runs in float32; :func:`gradient_check` promotes a copy of the
network to float64.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigurationError, DimensionError, StateError

LAYER_KINDS = ("dense", "conv2d", "maxpool2d", "relu", "flatten")


class Tensor:
    """A value buffer with an optional gradient buffer of the same shape."""

    __slots__ = ("data", "grad")

    def __init__(self, data, grad=None):
        self.data = np.asarray(data)
        if grad is not None:
            grad = np.asarray(grad)
            if grad.shape != self.data.shape:
                raise DimensionError(
                    f"gradient shape {grad.shape} does not match values shape {self.data.shape}"
                )
        self.grad = grad

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype})"


# ---------------------------------------------------------------------------
# Functional forward passes
# ---------------------------------------------------------------------------


def dense_forward(x, weights, bias):
    """Affine map ``x @ weights + bias`` for x of shape (batch, in)."""
    x = np.asarray(x)
    weights = np.asarray(weights)
    bias = np.asarray(bias)
    if x.ndim != 2:
        raise DimensionError(f"dense input must be 2-D (batch, in), got shape {x.shape}")
    if weights.ndim != 2 or x.shape[1] != weights.shape[0]:
        raise DimensionError(
            f"input axis 1 has size {x.shape[1]} but weights axis 0 has size {weights.shape[0]}"
        )
    if bias.shape != (weights.shape[1],):
        raise DimensionError(
            f"bias axis 0 has size {bias.shape[0] if bias.ndim else 0} "
            f"but weights axis 1 has size {weights.shape[1]}"
        )
    return x @ weights + bias


def _conv_output_size(size, kernel, stride, padding, axis):
    span = size + 2 * padding - kernel
    if span < 0 or span % stride:
        raise ConfigurationError(
            f"conv2d output {axis} ({size}+2*{padding}-{kernel})/{stride}+1 is not a positive integer"
        )
    return span // stride + 1


def _im2col(x, kernel, stride, padding):
    """Return (cols, out_h, out_w); cols has shape (B*Ho*Wo, C*k*k)."""
    b, c, h, w = x.shape
    out_h = _conv_output_size(h, kernel, stride, padding, "height")
    out_w = _conv_output_size(w, kernel, stride, padding, "width")
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    win = sliding_window_view(x, (kernel, kernel), axis=(2, 3))[:, :, ::stride, ::stride]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(b * out_h * out_w, c * kernel * kernel)
    return cols, out_h, out_w


def conv2d_forward(x, kernels, bias, stride=1, padding=0):
    """2-D cross-correlation with zero padding.

    x: (batch, C_in, H, W); kernels: (C_out, C_in, k, k); bias: (C_out,).
    """
    x = np.asarray(x)
    kernels = np.asarray(kernels)
    if x.ndim != 4:
        raise DimensionError(f"conv2d input must be 4-D (batch, C, H, W), got shape {x.shape}")
    c_out, c_in, k, k2 = kernels.shape
    if k != k2:
        raise ConfigurationError("conv2d kernels must be square")
    if x.shape[1] != c_in:
        raise DimensionError(f"input channel axis has size {x.shape[1]}, kernels expect {c_in}")
    cols, out_h, out_w = _im2col(x, k, stride, padding)
    out = cols @ kernels.reshape(c_out, -1).T + bias
    return out.reshape(x.shape[0], out_h, out_w, c_out).transpose(0, 3, 1, 2)


def _pool_windows(x, window, stride):
    b, c, h, w = x.shape
    if window > h or window > w:
        raise ConfigurationError(f"pool window {window} larger than input {h}x{w}")
    if (h - window) % stride or (w - window) % stride:
        raise ConfigurationError(
            f"input {h}x{w} is not tiled by window {window} with stride {stride}"
        )
    win = sliding_window_view(x, (window, window), axis=(2, 3))[:, :, ::stride, ::stride]
    return win.reshape(*win.shape[:4], window * window)


def maxpool_forward(x, window, stride=None):
    """Max pooling; returns (output, argmax) where argmax indexes the flattened window."""
    x = np.asarray(x)
    if x.ndim != 4:
        raise DimensionError(f"maxpool input must be 4-D (batch, C, H, W), got shape {x.shape}")
    stride = window if stride is None else stride
    win = _pool_windows(x, window, stride)
    argmax = win.argmax(axis=-1)
    out = np.take_along_axis(win, argmax[..., None], axis=-1)[..., 0]
    return out, argmax


def relu(x):
    return np.maximum(x, 0)


def mse_loss(pred, target):
    """Mean squared error and its gradient with respect to ``pred``."""
    pred = np.asarray(pred)
    target = np.asarray(target, dtype=pred.dtype)
    if pred.size != target.size or pred.size == 0:
        raise DimensionError(
            f"prediction has {pred.size} entries but target has {target.size}"
        )
    diff = pred - target.reshape(pred.shape)
    n = diff.size
    loss = float(np.mean(diff * diff, dtype=np.float64))
    return loss, (2.0 / n) * diff


# ---------------------------------------------------------------------------
# Layer specifications and layers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LayerSpec:
    """Kind plus the sizes needed to rebuild a layer.

    Use the constructors (``LayerSpec.dense(14, 100)`` etc.) rather than
    filling the fields by hand.
    """

    kind: str
    in_features: int = 0
    out_features: int = 0
    in_channels: int = 0
    out_channels: int = 0
    kernel_size: int = 0
    stride: int = 1
    padding: int = 0
    window: int = 0

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ConfigurationError(f"unknown layer kind {self.kind!r}")
        required = {
            "dense": ("in_features", "out_features"),
            "conv2d": ("in_channels", "out_channels", "kernel_size", "stride"),
            "maxpool2d": ("window", "stride"),
        }.get(self.kind, ())
        for name in required:
            value = getattr(self, name)
            if int(value) != value or value <= 0:
                raise ConfigurationError(f"{self.kind} {name} must be a positive integer, got {value}")
        if self.padding < 0:
            raise ConfigurationError(f"padding must be non-negative, got {self.padding}")

    @classmethod
    def dense(cls, in_features, out_features):
        return cls("dense", in_features=in_features, out_features=out_features)

    @classmethod
    def conv2d(cls, in_channels, out_channels, kernel_size, stride=1, padding=0):
        return cls(
            "conv2d",
            in_channels=in_channels,
            out_channels=out_channels,
            kernel_size=kernel_size,
            stride=stride,
            padding=padding,
        )

    @classmethod
    def maxpool2d(cls, window, stride=None):
        return cls("maxpool2d", window=window, stride=window if stride is None else stride)

    @classmethod
    def relu(cls):
        return cls("relu")

    @classmethod
    def flatten(cls):
        return cls("flatten")

    def output_shape(self, input_shape):
        """Per-sample output shape for a per-sample ``input_shape``."""
        shape = tuple(input_shape)
        if self.kind == "dense":
            if shape != (self.in_features,):
                raise DimensionError(f"dense expects ({self.in_features},), got {shape}")
            return (self.out_features,)
        if self.kind == "conv2d":
            if len(shape) != 3 or shape[0] != self.in_channels:
                raise DimensionError(f"conv2d expects ({self.in_channels}, H, W), got {shape}")
            _, h, w = shape
            k, s, p = self.kernel_size, self.stride, self.padding
            return (
                self.out_channels,
                _conv_output_size(h, k, s, p, "height"),
                _conv_output_size(w, k, s, p, "width"),
            )
        if self.kind == "maxpool2d":
            if len(shape) != 3:
                raise DimensionError(f"maxpool2d expects (C, H, W), got {shape}")
            c, h, w = shape
            if self.window > h or self.window > w:
                raise ConfigurationError(f"pool window {self.window} larger than input {h}x{w}")
            if (h - self.window) % self.stride or (w - self.window) % self.stride:
                raise ConfigurationError(
                    f"input {h}x{w} is not tiled by window {self.window} with stride {self.stride}"
                )
            return (c, (h - self.window) // self.stride + 1, (w - self.window) // self.stride + 1)
        if self.kind == "flatten":
            return (int(np.prod(shape)),)
        return shape


class Layer:
    """Base class. Layers cache what they need in ``forward`` for ``backward``."""

    kind = ""

    def __init__(self, spec):
        self.spec = spec
        self._cache = None

    def parameters(self):
        return []

    def forward(self, x):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError

    def _cached(self):
        if self._cache is None:
            raise StateError(f"{self.kind} backward called before forward")
        return self._cache


def glorot_uniform(rng, shape, fan_in, fan_out, dtype):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Dense(Layer):
    kind = "dense"

    def __init__(self, spec, dtype=np.float32):
        super().__init__(spec)
        self.weight = Tensor(np.zeros((spec.in_features, spec.out_features), dtype=dtype))
        self.bias = Tensor(np.zeros(spec.out_features, dtype=dtype))

    def parameters(self):
        return [self.weight, self.bias]

    def init(self, rng):
        i, o = self.spec.in_features, self.spec.out_features
        self.weight.data = glorot_uniform(rng, (i, o), i, o, self.weight.data.dtype)
        self.bias.data = np.zeros_like(self.bias.data)

    def forward(self, x):
        self._cache = x
        return dense_forward(x, self.weight.data, self.bias.data)

    def backward(self, grad):
        x = self._cached()
        self.weight.grad = x.T @ grad
        self.bias.grad = grad.sum(axis=0)
        return grad @ self.weight.data.T


class Conv2d(Layer):
    kind = "conv2d"

    def __init__(self, spec, dtype=np.float32):
        super().__init__(spec)
        k = spec.kernel_size
        self.weight = Tensor(np.zeros((spec.out_channels, spec.in_channels, k, k), dtype=dtype))
        self.bias = Tensor(np.zeros(spec.out_channels, dtype=dtype))

    def parameters(self):
        return [self.weight, self.bias]

    def init(self, rng):
        s = self.spec
        k2 = s.kernel_size * s.kernel_size
        self.weight.data = glorot_uniform(
            rng, self.weight.shape, s.in_channels * k2, s.out_channels * k2, self.weight.data.dtype
        )
        self.bias.data = np.zeros_like(self.bias.data)

    def forward(self, x):
        s = self.spec
        if x.ndim != 4 or x.shape[1] != s.in_channels:
            raise DimensionError(f"conv2d expects (batch, {s.in_channels}, H, W), got {x.shape}")
        cols, out_h, out_w = _im2col(x, s.kernel_size, s.stride, s.padding)
        w = self.weight.data.reshape(s.out_channels, -1)
        out = cols @ w.T + self.bias.data
        self._cache = (x.shape, cols, out_h, out_w)
        return out.reshape(x.shape[0], out_h, out_w, s.out_channels).transpose(0, 3, 1, 2)

    def backward(self, grad):
        in_shape, cols, out_h, out_w = self._cached()
        s = self.spec
        b, c, h, w = in_shape
        k, st, p = s.kernel_size, s.stride, s.padding
        g = grad.transpose(0, 2, 3, 1).reshape(-1, s.out_channels)
        self.weight.grad = (g.T @ cols).reshape(self.weight.shape)
        self.bias.grad = g.sum(axis=0)
        dcols = (g @ self.weight.data.reshape(s.out_channels, -1)).reshape(b, out_h, out_w, c, k, k)
        dx = np.zeros((b, c, h + 2 * p, w + 2 * p), dtype=grad.dtype)
        for i in range(k):
            for j in range(k):
                dx[:, :, i : i + st * out_h : st, j : j + st * out_w : st] += dcols[
                    :, :, :, :, i, j
                ].transpose(0, 3, 1, 2)
        if p:
            dx = dx[:, :, p:-p, p:-p]
        return dx


class MaxPool2d(Layer):
    kind = "maxpool2d"

    def forward(self, x):
        out, argmax = maxpool_forward(x, self.spec.window, self.spec.stride)
        self._cache = (x.shape, argmax)
        return out

    def backward(self, grad):
        in_shape, argmax = self._cached()
        win, st = self.spec.window, self.spec.stride
        out_h, out_w = argmax.shape[2:]
        dx = np.zeros(in_shape, dtype=grad.dtype)
        for pos in range(win * win):
            i, j = divmod(pos, win)
            dx[:, :, i : i + st * out_h : st, j : j + st * out_w : st] += np.where(
                argmax == pos, grad, 0
            )
        return dx


class ReLU(Layer):
    kind = "relu"

    def forward(self, x):
        mask = x > 0
        self._cache = mask
        return np.where(mask, x, 0).astype(x.dtype, copy=False)

    def backward(self, grad):
        return np.where(self._cached(), grad, 0).astype(grad.dtype, copy=False)


class Flatten(Layer):
    kind = "flatten"

    def forward(self, x):
        self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._cached())


_LAYER_TYPES = {"dense": Dense, "conv2d": Conv2d, "maxpool2d": MaxPool2d, "relu": ReLU, "flatten": Flatten}


def make_layer(spec, dtype=np.float32):
    cls = _LAYER_TYPES[spec.kind]
    if cls in (Dense, Conv2d):
        return cls(spec, dtype=dtype)
    return cls(spec)


# ---------------------------------------------------------------------------
# Sequential network
# ---------------------------------------------------------------------------


class Network:
    """A sequential stack of layers with a fixed per-sample input shape.

    ``seed`` initializes the weights (Glorot uniform, zero biases). Built
    with ``seed=None`` the parameters are zero and ``initialized`` is False
    until weights are loaded.
    """

    def __init__(self, specs: Sequence[LayerSpec], input_shape, name="network", seed=None, dtype=np.float32):
        self.name = name
        self.input_shape = tuple(int(d) for d in input_shape)
        self.dtype = np.dtype(dtype)
        self.specs = list(specs)
        shape = self.input_shape
        for idx, spec in enumerate(self.specs):
            try:
                shape = spec.output_shape(shape)
            except ConfigurationError as exc:
                raise type(exc)(f"layer {idx} ({spec.kind}): {exc}") from None
        self.output_shape = shape
        self.layers = [make_layer(spec, self.dtype) for spec in self.specs]
        self.initialized = False
        self._ran_forward = False
        if seed is not None:
            self.init_weights(seed)

    def init_weights(self, seed):
        rng = np.random.default_rng(seed)
        for layer in self.layers:
            if hasattr(layer, "init"):
                layer.init(rng)
        self.initialized = True

    def parameters(self) -> list[Tensor]:
        return [p for layer in self.layers for p in layer.parameters()]

    def forward(self, x):
        x = np.asarray(x, dtype=self.dtype)
        if x.shape[1:] != self.input_shape:
            raise DimensionError(
                f"{self.name} expects per-sample input {self.input_shape}, got {x.shape[1:]}"
            )
        for layer in self.layers:
            x = layer.forward(x)
        self._ran_forward = True
        return x

    __call__ = forward

    def predict(self, x, batch_size=1024):
        """Forward pass in chunks, returning a flat array when the output is scalar."""
        x = np.asarray(x, dtype=self.dtype)
        outs = [self.forward(x[i : i + batch_size]) for i in range(0, len(x), batch_size)]
        out = np.concatenate(outs) if outs else np.zeros((0,) + self.output_shape, self.dtype)
        return out[:, 0] if self.output_shape == (1,) else out

    def backward(self, loss_grad):
        """Propagate ``loss_grad`` (d loss / d output) and fill every parameter's grad."""
        if not self._ran_forward:
            raise StateError(f"{self.name}: backward called before forward")
        grad = np.asarray(loss_grad, dtype=self.dtype)
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def get_weights(self):
        return [p.data.copy() for p in self.parameters()]

    def set_weights(self, arrays):
        params = self.parameters()
        if len(arrays) != len(params):
            raise DimensionError(f"expected {len(params)} parameter arrays, got {len(arrays)}")
        for p, a in zip(params, arrays):
            a = np.asarray(a)
            if a.shape != p.shape:
                raise DimensionError(f"parameter shape {p.shape} does not match {a.shape}")
            p.data = a.astype(self.dtype, copy=True)
        self.initialized = True

    def astype(self, dtype):
        """Deep copy with parameters cast to ``dtype``."""
        other = copy.deepcopy(self)
        other.dtype = np.dtype(dtype)
        for p in other.parameters():
            p.data = p.data.astype(dtype)
            p.grad = None
        for layer in other.layers:
            layer._cache = None
        other._ran_forward = False
        return other

    def copy(self):
        return self.astype(self.dtype)

    def __repr__(self):
        kinds = ", ".join(s.kind for s in self.specs)
        return f"Network({self.name!r}, input={self.input_shape}, layers=[{kinds}])"


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    first_moment: list = field(default_factory=list)
    second_moment: list = field(default_factory=list)
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0

    def __post_init__(self):
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ConfigurationError("Adam betas must lie strictly between 0 and 1")
        if self.epsilon <= 0:
            raise ConfigurationError("Adam epsilon must be positive")

    @classmethod
    def for_params(cls, params: Iterable[np.ndarray], **hyper):
        params = list(params)
        return cls(
            first_moment=[np.zeros_like(p) for p in params],
            second_moment=[np.zeros_like(p) for p in params],
            **hyper,
        )


def adam_step(params, grads, state: AdamState, learning_rate):
    """One bias-corrected Adam update, applied to ``params`` in place.

    A parameter array whose gradient is identically zero is left alone and
    its moments are not decayed.
    """
    if learning_rate <= 0:
        raise ConfigurationError("learning rate must be positive")
    if not (len(params) == len(grads) == len(state.first_moment) == len(state.second_moment)):
        raise DimensionError("params, grads and Adam moments differ in count")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1**t
    corr2 = 1.0 - b2**t
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        if p.shape != g.shape or m.shape != p.shape or v.shape != p.shape:
            raise DimensionError(f"Adam buffers do not match parameter shape {p.shape}")
        if not g.any():
            continue
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * (g * g)
        p -= (learning_rate * (m / corr1) / (np.sqrt(v / corr2) + state.epsilon)).astype(p.dtype)
    return state


class Adam:
    """Adam bound to a network's parameter tensors."""

    def __init__(self, params: Sequence[Tensor], learning_rate=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-8):
        self.params = list(params)
        self.learning_rate = learning_rate
        self.state = AdamState.for_params(
            (p.data for p in self.params), beta1=beta1, beta2=beta2, epsilon=epsilon
        )

    def step(self):
        grads = []
        for p in self.params:
            if p.grad is None:
                raise StateError("optimizer step before backward")
            grads.append(p.grad)
        adam_step([p.data for p in self.params], grads, self.state, self.learning_rate)


# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------


def _rel_error(analytic, numeric):
    a = float(np.linalg.norm(analytic))
    n = float(np.linalg.norm(numeric))
    return float(np.linalg.norm(analytic - numeric)) / max(a, n, 1e-12)


def gradient_check(network, x, target, epsilon=1e-6, include_input=False):
    """Largest relative error between backprop and central differences.

    The network is copied to float64 first. The error for each parameter
    array is ``|a - n| / max(|a|, |n|, 1e-12)`` with ``|.|`` the Euclidean
    norm over that array; the maximum over arrays is returned. With
    ``include_input`` the gradient with respect to ``x`` is checked too,
    which is the only way to exercise parameterless stacks.
    """
    if not 1e-6 <= epsilon <= 1e-3:
        raise ConfigurationError("epsilon must lie in [1e-6, 1e-3]")
    net = network.astype(np.float64)
    x = np.array(x, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)

    def loss_at(inp):
        return mse_loss(net.forward(inp), target)[0]

    _, grad = mse_loss(net.forward(x), target)
    input_grad = net.backward(grad)
    pairs = [(p.data, p.grad.copy()) for p in net.parameters()]
    if include_input:
        pairs.append((x, input_grad.copy()))

    worst = 0.0
    for values, analytic in pairs:
        numeric = np.zeros_like(values)
        flat = values.reshape(-1)
        num_flat = numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            up = loss_at(x)
            flat[i] = orig - epsilon
            down = loss_at(x)
            flat[i] = orig
            num_flat[i] = (up - down) / (2 * epsilon)
        worst = max(worst, _rel_error(analytic, numeric))
    return worst
