"""Mini-batch training with Adam and MSE, plus detector adaptation."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .engine import Adam, mse_loss
from .errors import ConfigurationError, DimensionError, NumericError, StateError
from .synth import derive_seed

POSE_LEARNING_RATE = 1e-3
DISTANCE_LEARNING_RATE = 1e-4
ADAPT_EPOCHS = 100


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 250
    batch_size: int = 64
    learning_rate: float = DISTANCE_LEARNING_RATE
    seed: int = 0
    holdout_fraction: float = 0.1

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size <= 0 or self.learning_rate <= 0:
            raise ConfigurationError(f"invalid training settings {self}")
        if not 0 <= self.holdout_fraction < 1:
            raise ConfigurationError("holdout_fraction must lie in [0, 1)")


def pose_config(**overrides):
    return replace(TrainConfig(learning_rate=POSE_LEARNING_RATE), **overrides)


def distance_config(**overrides):
    return replace(TrainConfig(learning_rate=DISTANCE_LEARNING_RATE), **overrides)


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    holdout_mae: list = field(default_factory=list)

    def __len__(self):
        return len(self.train_loss)

    def to_csv(self, path):
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "train_loss", "holdout_mae"])
            for i, (loss, mae) in enumerate(zip(self.train_loss, self.holdout_mae), 1):
                w.writerow([i, repr(loss), repr(mae)])

    @classmethod
    def from_csv(cls, path):
        hist = cls()
        with Path(path).open(newline="") as fh:
            for row in csv.DictReader(fh):
                hist.train_loss.append(float(row["train_loss"]))
                hist.holdout_mae.append(float(row["holdout_mae"]))
        return hist


@dataclass
class TrainResult:
    net: object
    history: TrainHistory
    best_weights: list
    best_epoch: int

    def best_net(self):
        """A copy of the network carrying the best held-out weights."""
        net = self.net.copy()
        net.set_weights(self.best_weights)
        return net


def holdout_split(n, fraction, seed):
    """Seed-deterministic (train_idx, holdout_idx)."""
    n_hold = int(round(n * fraction))
    if n_hold >= n:
        n_hold = n - 1
    perm = np.random.default_rng(derive_seed(seed, "holdout")).permutation(n)
    return np.sort(perm[n_hold:]), np.sort(perm[:n_hold])


def epoch_order(n, seed, epoch):
    """Shuffle order as a pure function of (seed, epoch)."""
    return np.random.default_rng([int(seed) & 0xFFFFFFFF, epoch]).permutation(n)


def train(net, inputs, targets, config: TrainConfig, target_scale=1.0, log=None):
    """Fit ``net`` in place and return a :class:`TrainResult`.

    ``holdout_fraction`` of the data is set aside (seed-deterministic) to
    pick the best epoch; its MAE is reported in target units times
    ``target_scale`` (e.g. 90 for pose targets stored as fractions of 90).
    """
    inputs = np.asarray(inputs, dtype=net.dtype)
    targets = np.asarray(targets, dtype=net.dtype).reshape(-1)
    if len(inputs) == 0:
        raise ConfigurationError("training dataset is empty")
    if len(inputs) != len(targets):
        raise DimensionError(f"{len(inputs)} inputs but {len(targets)} targets")
    if inputs.shape[1:] != net.input_shape:
        raise DimensionError(f"{net.name} expects inputs {net.input_shape}, dataset has {inputs.shape[1:]}")

    tr_idx, ho_idx = holdout_split(len(inputs), config.holdout_fraction, config.seed)
    x_tr, y_tr = inputs[tr_idx], targets[tr_idx]
    x_ho, y_ho = inputs[ho_idx], targets[ho_idx]

    opt = Adam(net.parameters(), learning_rate=config.learning_rate)
    history = TrainHistory()
    best_weights, best_epoch, best_mae = net.get_weights(), 0, np.inf
    for epoch in range(config.epochs):
        order = epoch_order(len(x_tr), config.seed, epoch)
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            pred = net.forward(x_tr[idx])
            loss, grad = mse_loss(pred, y_tr[idx])
            if not np.isfinite(loss):
                raise NumericError(f"{net.name}: non-finite loss at epoch {epoch + 1}")
            net.backward(grad)
            opt.step()
            total += loss * len(idx)
        history.train_loss.append(total / len(x_tr))
        if len(x_ho):
            mae = float(np.mean(np.abs(net.predict(x_ho) - y_ho), dtype=np.float64)) * target_scale
        else:
            mae = float("nan")
        history.holdout_mae.append(mae)
        if not len(x_ho) or mae < best_mae:
            best_weights, best_epoch, best_mae = net.get_weights(), epoch + 1, mae
        if log is not None:
            log(epoch + 1, history.train_loss[-1], mae)
    return TrainResult(net, history, best_weights, best_epoch)


def adapt(net, inputs, targets, config: TrainConfig, target_scale=1.0, log=None):
    """Fine-tune a pretrained network (default 100 epochs, same learning rates)."""
    if not getattr(net, "initialized", False):
        raise StateError(f"{net.name}: adaptation needs a pretrained, initialized network")
    return train(net, inputs, targets, config, target_scale=target_scale, log=log)
