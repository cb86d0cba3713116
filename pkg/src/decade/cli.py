"""Command-line entry point.

Settings come from an optional ``key = value`` config file; command-line
flags override it. Exit codes: 0 success, 2 configuration error, 3 data or
parse error, 4 numeric/training error.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import kitti, models
from .engine import LayerSpec, Network, gradient_check
from .errors import ConfigurationError, DataError, DependencyError, NumericError
from .features import load_priors
from .matching import MatchedPair, build_adaptation_dataset
from .pipeline import evaluate_end_to_end, evaluate_ground_truth, ground_truth_datasets, predict_pairs
from .synth import SynthConfig, derive_seed, generate_samples, write_dataset
from .training import ADAPT_EPOCHS, adapt, distance_config, pose_config, train

log = logging.getLogger("decade")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


@dataclass
class RunConfig:
    labels_dir: str | None = None
    images_dir: str | None = None
    train_split: str | None = None
    test_split: str | None = None
    detections: str | None = None
    out: str = "decade_out"
    seed: int = 0
    epochs: int | None = None
    batch_size: int = 64
    learning_rate: float | None = None
    holdout_fraction: float = 0.1
    distance_mode: str = "z_axis"
    priors: str | None = None
    image_ext: str = "png"
    class_strict: bool = False
    n: int = 100
    jitter: float | None = None
    size_std: float = 0.0
    test_fraction: float = 0.1

    @property
    def out_dir(self):
        return Path(self.out)

    def require(self, *keys):
        for key in keys:
            value = getattr(self, key)
            if value is None:
                raise ConfigurationError(f"missing setting {key!r} (config file or --{key.replace('_', '-')})")
            if key.endswith(("_dir", "_split")) or key in ("detections", "priors"):
                if not Path(value).exists():
                    raise ConfigurationError(f"{key} path does not exist: {value}")

    def load_priors(self):
        return load_priors(self.priors) if self.priors else None


_BOOL = {"1": True, "true": True, "yes": True, "0": False, "false": False, "no": False}


def parse_config_text(text, source="config"):
    """Parse ``key = value`` lines into a dict of typed values."""
    types = {f.name: f.type for f in fields(RunConfig)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in types:
            raise ConfigurationError(f"{source}:{lineno}: unknown setting {key!r}")
        values[key] = _coerce(key, value, types[key], f"{source}:{lineno}")
    return values


def _coerce(key, value, type_name, where):
    type_name = str(type_name)
    try:
        if type_name.startswith("bool"):
            return _BOOL[value.lower()]
        if type_name.startswith("int"):
            return int(value)
        if type_name.startswith("float"):
            return float(value)
    except (KeyError, ValueError):
        raise ConfigurationError(f"{where}: bad value {value!r} for {key}") from None
    return value


def resolve_config(args):
    values = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise ConfigurationError(f"config file not found: {path}")
        values.update(parse_config_text(path.read_text(), str(path)))
    for f in fields(RunConfig):
        if getattr(args, f.name, None) is not None:
            values[f.name] = getattr(args, f.name)
    return RunConfig(**values)


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _image_source(cfg):
    images_dir = Path(cfg.images_dir)

    def load(image_id):
        return kitti.load_image(images_dir / f"{image_id}.{cfg.image_ext}")

    return load


def _split_truths(cfg, split_key):
    cfg.require("labels_dir", "images_dir", split_key)
    ids = kitti.read_split(getattr(cfg, split_key))
    if not ids:
        raise ConfigurationError(f"{split_key} lists no image ids")
    for image_id in ids:
        if not (Path(cfg.labels_dir) / f"{image_id}.txt").exists():
            raise ConfigurationError(f"{split_key}: unknown image id {image_id!r} (no label file)")
        if not (Path(cfg.images_dir) / f"{image_id}.{cfg.image_ext}").exists():
            raise ConfigurationError(f"{split_key}: no image for id {image_id!r}")
    return kitti.load_labels(cfg.labels_dir, ids, cfg.distance_mode)


def _dataset_path(cfg, split):
    return cfg.out_dir / "datasets" / f"{split}.npz"


def _checkpoint_path(cfg, name):
    return cfg.out_dir / "checkpoints" / f"{name}.dcde"


def _load_ckpt(cfg, name, hint):
    path = _checkpoint_path(cfg, name)
    if not path.exists():
        raise DependencyError(f"checkpoint {path} not found; run '{hint}' first")
    return models.load_checkpoint(path)[0]


def _save_result(cfg, name, result, seed, epochs):
    ckpt_dir = cfg.out_dir / "checkpoints"
    models.save_checkpoint(result.net, ckpt_dir / f"{name}.dcde", seed=seed, epochs=epochs)
    models.save_checkpoint(
        result.best_net(), ckpt_dir / f"{name}_best.dcde", seed=seed, epochs=result.best_epoch
    )
    hist_dir = cfg.out_dir / "history"
    hist_dir.mkdir(parents=True, exist_ok=True)
    result.history.to_csv(hist_dir / f"{name}.csv")
    final = result.history.holdout_mae[-1] if len(result.history) else float("nan")
    print(f"{name}: {len(result.history)} epochs, best epoch {result.best_epoch}, final holdout MAE {final:.4f}")


def _train_config(cfg, which, default_epochs, tag):
    factory = pose_config if which == "pose" else distance_config
    overrides = {
        "epochs": default_epochs if cfg.epochs is None else cfg.epochs,
        "batch_size": cfg.batch_size,
        "seed": derive_seed(cfg.seed, tag) & 0x7FFFFFFF,
        "holdout_fraction": cfg.holdout_fraction,
    }
    if cfg.learning_rate is not None:
        overrides["learning_rate"] = cfg.learning_rate
    return factory(**overrides)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_prepare(cfg, args):
    priors = cfg.load_priors()
    splits = {"train": _split_truths(cfg, "train_split"), "test": _split_truths(cfg, "test_split")}
    images = _image_source(cfg)
    built = {}
    for split, truths in splits.items():
        pose_ds, dist_ds = ground_truth_datasets(truths, images, priors=priors)
        if not len(dist_ds):
            raise ConfigurationError(f"{split} split has no usable annotations")
        built[split] = (pose_ds, dist_ds)
    for split, (pose_ds, dist_ds) in built.items():
        path = _dataset_path(cfg, split)
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savez(
            path,
            crops=pose_ds.crops,
            pose_targets=pose_ds.targets,
            features=dist_ds.features,
            disnet_features=dist_ds.disnet_features,
            dist_targets=dist_ds.targets,
            classes=np.array(dist_ds.classes),
            image_ids=np.array(dist_ds.image_ids),
        )
        print(f"{split}: {len(splits[split])} images, {len(dist_ds)} objects -> {path}")
    return EXIT_OK


def _load_dataset(cfg, split):
    path = _dataset_path(cfg, split)
    if not path.exists():
        raise DependencyError(f"{path} not found; run 'prepare' first")
    with np.load(path) as data:
        return {k: data[k] for k in data.files}


def cmd_train(cfg, args):
    which = args.which
    data = _load_dataset(cfg, "train")
    cfg_train = _train_config(cfg, which, 250, f"train-{which}")
    if which == "pose":
        net = models.build_posecnn(seed=derive_seed(cfg.seed, "init-pose"))
        result = train(net, data["crops"], data["pose_targets"] / 90.0, cfg_train, target_scale=90.0)
    elif which == "dist":
        net = models.build_distmlp(seed=derive_seed(cfg.seed, "init-dist"))
        result = train(net, data["features"], data["dist_targets"], cfg_train)
    else:
        net = models.build_disnet(seed=derive_seed(cfg.seed, "init-disnet"))
        result = train(net, data["disnet_features"], data["dist_targets"], cfg_train)
    _save_result(cfg, which, result, cfg.seed, cfg_train.epochs)
    return EXIT_OK


def cmd_adapt(cfg, args):
    which = args.which
    cfg.require("detections")
    if which == "pose":
        pose = _load_ckpt(cfg, "pose_best", "train pose")
        dist = None
    else:
        pose = _load_ckpt(cfg, "pose_adapt_best", "adapt pose")
        dist = _load_ckpt(cfg, "dist_best", "train dist")
    truths = _split_truths(cfg, "train_split")
    dets = kitti.group_by_image(kitti.load_detections(cfg.detections))
    dets = {k: v for k, v in dets.items() if k in truths}
    images = _image_source(cfg)
    cfg_train = _train_config(cfg, which, ADAPT_EPOCHS, f"adapt-{which}")
    if which == "pose":
        pose_ds, _ = build_adaptation_dataset(dets, truths, images, require_class_match=cfg.class_strict)
        if not len(pose_ds):
            raise DataError("no detection matched any annotation at IoU >= 0.6")
        result = adapt(pose, pose_ds.crops, pose_ds.targets / 90.0, cfg_train, target_scale=90.0)
        _save_result(cfg, "pose_adapt", result, cfg.seed, cfg_train.epochs)
    else:
        _, dist_ds = build_adaptation_dataset(dets, truths, images, pose_net=pose, require_class_match=cfg.class_strict)
        if not len(dist_ds):
            raise DataError("no detection matched any annotation at IoU >= 0.6")
        result = adapt(dist, dist_ds.features, dist_ds.targets, cfg_train)
        _save_result(cfg, "dist_adapt", result, cfg.seed, cfg_train.epochs)
    return EXIT_OK


def _eval_networks(cfg, args):
    suffix = "_adapt_best" if args.adapted else "_best"
    hint = "adapt" if args.adapted else "train"
    pose = _load_ckpt(cfg, "pose" + suffix, f"{hint} pose")
    if args.model == "disnet":
        dist = _load_ckpt(cfg, "disnet_best", "train disnet")
    else:
        dist = _load_ckpt(cfg, "dist" + suffix, f"{hint} dist")
    return pose, dist


def cmd_eval(cfg, args):
    pose, dist = _eval_networks(cfg, args)
    truths = _split_truths(cfg, "test_split")
    images = _image_source(cfg)
    priors = cfg.load_priors()
    if args.mode == "gt":
        report = evaluate_ground_truth(truths, images, pose, dist, args.model, priors=priors)
    else:
        cfg.require("detections")
        dets = kitti.group_by_image(kitti.load_detections(cfg.detections))
        dets = {k: v for k, v in dets.items() if k in truths}
        report = evaluate_end_to_end(
            dets, truths, images, pose, dist, args.model, priors=priors, require_class_match=cfg.class_strict
        )
    stem = f"{args.mode}_{args.model}" + ("_adapted" if args.adapted else "")
    report.write(cfg.out_dir / "reports" / stem)
    o = report.overall
    pose_txt = "" if report.pose_mae_deg is None else f", pose MAE {report.pose_mae_deg:.2f} deg"
    print(f"{stem}: n={o.count}, MAE {o.mae_m:.3f} m, MRE {100 * o.mre:.2f}%{pose_txt}")
    return EXIT_OK


def cmd_predict(cfg, args):
    cfg.require("detections", "images_dir")
    pose, dist = _eval_networks(cfg, args)
    dets = kitti.load_detections(cfg.detections)
    images = _image_source(cfg)
    # detections are their own "truth" here; only inputs are used
    pairs = [
        MatchedPair(d, kitti.LabelRecord(d.class_name, 0.0, 0, 0.0, d.box, (0, 0, 0), (0, 0, 1), 0.0, 1.0), 1.0)
        for d in dets
    ]
    _, _, theta, distance = predict_pairs(pairs, images, pose, dist, args.model, priors=cfg.load_priors())
    out = cfg.out_dir / "predictions.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w") as fh:
        fh.write("image_id,class,confidence,left,top,right,bottom,orientation_deg,distance_m\n")
        for d, t, z in zip(dets, theta, distance):
            fh.write(f"{d.image_id},{d.class_name},{d.confidence},{','.join(map(str, d.box))},{t:.4f},{z:.4f}\n")
    print(f"{len(dets)} predictions -> {out}")
    return EXIT_OK


def complexity_table():
    rows = []
    for label, builder in (("PoseCNN", models.build_posecnn), ("DistMLP", models.build_distmlp), ("DisNet", models.build_disnet)):
        net = builder(seed=0)
        rows.append((label, models.count_params(net), models.count_flops(net)))
    return rows


def cmd_complexity(cfg, args):
    print(f"{'network':<10} {'params':>10} {'FLOPs':>12}")
    for label, params, flops in complexity_table():
        print(f"{label:<10} {params:>10,} {flops:>12,}")
    return EXIT_OK


def bench(net, n=1000, warmup=10, seed=0):
    """Mean wall-clock seconds of single-sample forward passes."""
    x = np.random.default_rng(seed).random((1,) + net.input_shape).astype(net.dtype)
    for _ in range(warmup):
        net.forward(x)
    times = []
    for _ in range(n):
        t0 = time.perf_counter()
        net.forward(x)
        times.append(time.perf_counter() - t0)
    return float(np.mean(times))


def cmd_bench(cfg, args):
    if args.checkpoint is None:
        raise ConfigurationError("bench needs --checkpoint")
    if not Path(args.checkpoint).exists():
        raise ConfigurationError(f"checkpoint not found: {args.checkpoint}")
    if args.n < 1:
        raise ConfigurationError("--n must be at least 1")
    net, _ = models.load_checkpoint(args.checkpoint)
    if args.n == 1:
        print("warning: a single timed run is noisy", file=sys.stderr)
    mean = bench(net, args.n)
    print(f"{net.name}: mean inference {mean * 1e3:.4f} ms over {args.n} runs")
    return EXIT_OK


def cmd_synth(cfg, args):
    if cfg.n < 1:
        raise ConfigurationError("n must be at least 1")
    config = SynthConfig(size_std=cfg.size_std)
    samples = generate_samples(config, derive_seed(cfg.seed, "synth"), cfg.n)
    out = write_dataset(samples, cfg.out_dir, config, cfg.test_fraction, cfg.jitter, cfg.seed)
    extra = " + detections.csv" if cfg.jitter is not None else ""
    print(f"{cfg.n} scenes -> {out} (labels/, images/, train.txt, test.txt{extra})")
    return EXIT_OK


def gradcheck_suite(seeds=20, epsilon=1e-6):
    """Max relative gradient error per layer kind and per reduced full stack."""
    S = LayerSpec
    stacks = {
        "dense": ([S.dense(5, 4), S.dense(4, 1)], (5,)),
        "relu": ([S.dense(5, 6), S.relu(), S.dense(6, 1)], (5,)),
        "conv2d": ([S.conv2d(2, 3, 3, stride=1, padding=1), S.conv2d(3, 2, 3, stride=2), S.flatten(), S.dense(18, 1)], (2, 7, 7)),
        "maxpool2d": ([S.conv2d(2, 2, 3, padding=1), S.maxpool2d(2), S.flatten(), S.dense(8, 1)], (2, 4, 4)),
        "flatten": ([S.flatten(), S.dense(12, 1)], (3, 2, 2)),
        "posecnn": (models.posecnn_specs(widths=(2, 3, 4), hidden=5, input_size=8), (3, 8, 8)),
        "distmlp": (models.mlp_specs(14, hidden=(8, 8, 8)), (14,)),
    }
    worst = {}
    for name, (specs, shape) in stacks.items():
        errs = []
        for seed in range(seeds):
            rng = np.random.default_rng(seed)
            net = Network(specs, shape, name=name, seed=seed, dtype=np.float64)
            x = rng.standard_normal((3,) + shape)
            y = rng.standard_normal(3)
            errs.append(gradient_check(net, x, y, epsilon, include_input=True))
        worst[name] = max(errs)
    return worst


def cmd_gradcheck(cfg, args):
    worst = gradcheck_suite(args.seeds)
    ok = True
    for name, err in worst.items():
        status = "ok" if err < 1e-4 else "FAIL"
        ok &= err < 1e-4
        print(f"{name:<10} max relative error {err:.3e}  {status}")
    if not ok:
        raise NumericError("gradient check exceeded 1e-4")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="key = value settings file")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    common.add_argument("--labels-dir", dest="labels_dir", default=argparse.SUPPRESS)
    common.add_argument("--images-dir", dest="images_dir", default=argparse.SUPPRESS)
    common.add_argument("--train-split", dest="train_split", default=argparse.SUPPRESS)
    common.add_argument("--test-split", dest="test_split", default=argparse.SUPPRESS)
    common.add_argument("--detections", default=argparse.SUPPRESS)
    common.add_argument("--priors", default=argparse.SUPPRESS, help="class,height_m,width_m,length_m CSV")
    common.add_argument("--epochs", type=int, default=argparse.SUPPRESS)
    common.add_argument("--batch-size", dest="batch_size", type=int, default=argparse.SUPPRESS)
    common.add_argument("--learning-rate", dest="learning_rate", type=float, default=argparse.SUPPRESS)
    common.add_argument("--distance-mode", dest="distance_mode", choices=kitti.DISTANCE_MODES, default=argparse.SUPPRESS)
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="decade", description=__doc__.splitlines()[0], parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("prepare", parents=[common], help="build pose/distance datasets from labels and images")
    p = sub.add_parser("train", parents=[common], help="train a network on prepared data")
    p.add_argument("which", choices=("pose", "dist", "disnet"))
    p = sub.add_parser("adapt", parents=[common], help="fine-tune on matched detector output")
    p.add_argument("which", choices=("pose", "dist"))
    for name, helptext in (("eval", "evaluate on the test split"), ("predict", "estimate distances for detections")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        if name == "eval":
            p.add_argument("mode", choices=("gt", "e2e"))
        p.add_argument("--model", choices=("decade", "disnet"), default="decade")
        p.add_argument("--adapted", action="store_true")
    sub.add_parser("complexity", parents=[common], help="parameter and FLOP table")
    p = sub.add_parser("bench", parents=[common], help="mean single-sample inference latency")
    p.add_argument("--checkpoint")
    p.add_argument("--n", type=int, default=1000)
    p = sub.add_parser("synth", parents=[common], help="write a synthetic KITTI-format dataset")
    p.add_argument("--n", type=int, default=argparse.SUPPRESS)
    p.add_argument("--jitter", type=float, default=argparse.SUPPRESS, help="also write detections with this box jitter")
    p.add_argument("--size-std", dest="size_std", type=float, default=argparse.SUPPRESS)
    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference check of every layer kind")
    p.add_argument("--seeds", type=int, default=20)
    return parser


COMMANDS = {
    "prepare": cmd_prepare,
    "train": cmd_train,
    "adapt": cmd_adapt,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "complexity": cmd_complexity,
    "bench": cmd_bench,
    "synth": cmd_synth,
    "gradcheck": cmd_gradcheck,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING)
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg, args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, FloatingPointError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
