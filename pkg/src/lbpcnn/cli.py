"""Command-line entry point: ``lbpcnn <subcommand> [flags]``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness
from .augment import channel_planes, plane_sample
from .fusion import fuse
from .imaging import read_pnm, resize_bilinear, write_pnm
from .labels import CLASSES, FUSED, LBP_STREAMS
from .metrics import METRICS, compute_metrics, confusion
from .nn import (
    TrainConfig,
    build_model,
    extract_activations,
    load_model_config,
    load_weights,
    predict_batch,
    preset,
    save_weights,
    train,
    transfer_modify,
)
from .synthetic import generate_synthetic_dataset
from .tsne import EmbeddingConfig, emit_scatter_svg, load_feature_csv, tsne_embed

log = logging.getLogger("lbpcnn")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _model_flags(p):
    p.add_argument("--preset", choices=("tiny", "alexnet"), help="built-in architecture")
    p.add_argument("--arch", help="architecture file (overrides --preset)")


def _train_flags(p):
    p.add_argument("--lr", type=float, help="learning rate")
    p.add_argument("--momentum", type=float, help="SGDM momentum coefficient")
    p.add_argument("--batch", type=int, help="mini-batch size")
    p.add_argument("--epochs", type=int, help="training epochs")
    p.add_argument("--no-lbp-aug", dest="lbp_aug", action="store_false", default=None, help="train on R, G, B only")
    p.add_argument("--freeze-before", help="freeze every layer before this label ('fc-final' = last fc)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lbpcnn", description="LBP-augmented CNN pipeline with decision-level fusion.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")

    p = sub.add_parser("synth", help="generate a synthetic two-class texture corpus")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--n-per-class", type=int, default=30)
    p.add_argument("--size", type=int, default=32, help="image side in pixels")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("augment", help="write the six augmented planes of each image as PGM files")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--size", type=int, help="output side in pixels (default: model input size)")
    _model_flags(p)

    p = sub.add_parser("train", help="train one model on one split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default="80:20")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--weights", required=True, help="where to write the trained weights")
    p.add_argument("--init-weights", help="weights to start from before swapping the final fc")
    p.add_argument("--out", help="directory for the train/test manifests and loss trace")
    _model_flags(p)
    _train_flags(p)

    p = sub.add_parser("eval", help="predict, fuse and score a manifest with saved weights")
    p.add_argument("--manifest", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--fusion", choices=("majority", "meanprob"), default="majority")
    p.add_argument("--out", help="write per-stream metrics CSV here instead of stdout")
    _model_flags(p)

    p = sub.add_parser("experiment", help="run the repeated-split protocol")
    p.add_argument("--config", help="key=value experiment file; flags override it")
    p.add_argument("--manifest")
    p.add_argument("--split", help="train:test, or a comma list such as 90:10,80:20,70:30")
    p.add_argument("--reps", type=int)
    p.add_argument("--fusion", choices=("majority", "meanprob"))
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory for report CSVs")
    p.add_argument("--weights", help="pretrained weights loaded before transfer surgery")
    p.add_argument("--jobs", type=int, help="repetitions to run in parallel")
    _model_flags(p)
    _train_flags(p)

    p = sub.add_parser("tsne", help="embed a layer's activations and write an SVG scatter plot")
    p.add_argument("--out", required=True, help="SVG path")
    p.add_argument("--manifest", help="images to embed")
    p.add_argument("--weights", help="trained weights (required with --manifest)")
    p.add_argument("--layer", default="fc-final", help="layer label whose output is embedded")
    p.add_argument("--features", help="CSV of feature rows to embed instead of a manifest")
    p.add_argument("--labels", help="one label per line for --features")
    p.add_argument("--streams", choices=("raw", "lbp", "both"), default="raw")
    p.add_argument("--perplexity", type=float, default=15.0)
    p.add_argument("--iterations", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    _model_flags(p)

    p = sub.add_parser("report", help="re-aggregate per-repetition CSVs into a report")
    p.add_argument("inputs", nargs="+", help="repetitions_*.csv files")
    p.add_argument("--out", help="report path (default: stdout)")
    return parser


def _model_config(args, default="tiny"):
    if getattr(args, "arch", None):
        return load_model_config(args.arch)
    return preset(getattr(args, "preset", None) or default)


def _read_images(manifest):
    for path, label in manifest.entries:
        image = read_pnm(manifest.resolve(path))
        if image.channels != 3:
            raise ValueError(f"{path}: expected a colour image")
        yield path, label, image


def cmd_synth(args):
    manifest = generate_synthetic_dataset(args.n_per_class, args.size, args.seed, args.out)
    print(Path(args.out) / "manifest.csv")
    log.info("wrote %d images", len(manifest.entries))


def cmd_augment(args):
    manifest = harness.load_manifest(args.manifest)
    size = args.size or _model_config(args).input_size
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = ["path,label,stream,source"]
    for path, label, image in _read_images(manifest):
        stem = Path(path).stem
        for tag, plane in channel_planes(image, lbp=True):
            name = f"{stem}_{tag}.pgm"
            write_pnm(resize_bilinear(plane, size, size), out / name)
            rows.append(f"{name},{CLASSES[label]},{tag},{path}")
    (out / "augmented.csv").write_text("\n".join(rows) + "\n")
    print(out / "augmented.csv")


def _train_config(args, seed):
    defaults = TrainConfig()
    return TrainConfig(
        args.lr if args.lr is not None else defaults.learning_rate,
        args.momentum if args.momentum is not None else defaults.momentum,
        args.batch if args.batch is not None else defaults.batch_size,
        args.epochs if args.epochs is not None else defaults.epochs,
        seed,
    )


def cmd_train(args):
    manifest = harness.load_manifest(args.manifest)
    config = _model_config(args)
    train_pct, test_pct = harness.parse_split(args.split)
    train_entries, test_entries = harness.split_dataset(manifest, test_pct / (train_pct + test_pct), args.seed)
    per_image = 3 if args.lbp_aug is False else 6
    samples = []
    for path, label in train_entries:
        image = read_pnm(manifest.resolve(path))
        for tag, plane in channel_planes(image, lbp=True)[:per_image]:
            samples.append(plane_sample(plane, label, path, tag, config.input_size))

    if args.init_weights:
        from .nn.persist import read_weight_shapes

        head = read_weight_shapes(args.init_weights).get(config.final_fc.label)
        if head:
            config = harness.preset_with_classes(config, head[0][0])
        model = load_weights(build_model(config, seed=args.seed), args.init_weights)
    else:
        model = build_model(config, seed=args.seed)
    model = transfer_modify(model, len(CLASSES), args.freeze_before, seed=harness.mix_seed(args.seed, 1))
    _, trace = train(model, samples, _train_config(args, harness.mix_seed(args.seed, 2)))
    save_weights(model, args.weights)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        base = manifest.base_dir.resolve()
        harness.write_manifest([(str(base / p), lab) for p, lab in train_entries], out / "train.csv")
        harness.write_manifest([(str(base / p), lab) for p, lab in test_entries], out / "test.csv")
        (out / "loss.csv").write_text("epoch,loss\n" + "".join(f"{i + 1},{v!r}\n" for i, v in enumerate(trace)))
    print(args.weights)


def cmd_eval(args):
    manifest = harness.load_manifest(args.manifest)
    config = _model_config(args)
    model = load_weights(build_model(config), args.weights)
    truths, preds = [], {s: [] for s in harness.STREAMS}
    for path, label, image in _read_images(manifest):
        samples = [plane_sample(p, label, path, tag, config.input_size) for tag, p in channel_planes(image, lbp=False)]
        decisions = predict_batch(model, [s.tensor for s in samples], [s.stream_tag for s in samples])
        truths.append(label)
        for d in decisions:
            preds[d.stream_tag].append(d.label)
        preds[FUSED].append(fuse(decisions, args.fusion).label)
    lines = ["stream,tp,fp,tn,fn," + ",".join(METRICS)]
    for stream in harness.STREAMS:
        c = confusion(truths, preds[stream])
        m = compute_metrics(c).as_dict()
        lines.append(f"{stream},{c.tp},{c.fp},{c.tn},{c.fn}," + ",".join(f"{m[k]:.2f}" for k in METRICS))
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


_EXPERIMENT_FLAGS = ("manifest", "reps", "lr", "momentum", "batch", "epochs", "preset", "arch", "fusion",
                     "lbp_aug", "seed", "out", "weights", "freeze_before", "jobs")


def experiment_configs(args) -> list:
    values = {}
    if args.config:
        cfg_path = Path(args.config)
        values = harness.parse_experiment_config(cfg_path.read_text(), base_dir=cfg_path.parent)
    for key in _EXPERIMENT_FLAGS:
        value = getattr(args, key, None)
        if value is not None:
            values[key] = value
    if args.split is not None:
        values["split"] = args.split
    if "manifest" not in values:
        raise UsageError("experiment: a manifest is required (--manifest or manifest= in --config)")
    splits = str(values.pop("split", "80:20")).split(",")
    return [harness.ExperimentConfig(split=s.strip(), **values) for s in splits]


def cmd_experiment(args):
    for cfg in experiment_configs(args):
        log.info("split %s: %d repetitions", cfg.split_name, cfg.reps)
        report = harness.run_experiment(cfg)
        paths = harness.save_run(report, cfg.out)
        print(paths["report"])


def _tsne_inputs(args):
    if args.features:
        X = load_feature_csv(args.features)
        labels = Path(args.labels).read_text().split() if args.labels else ["point"] * len(X)
        return X, labels
    if not (args.manifest and args.weights):
        raise UsageError("tsne: give --manifest with --weights, or --features")
    manifest = harness.load_manifest(args.manifest)
    config = _model_config(args)
    model = load_weights(build_model(config), args.weights)
    rows, labels = [], []
    for path, label, image in _read_images(manifest):
        for tag, plane in channel_planes(image, lbp=args.streams != "raw"):
            is_lbp = tag in LBP_STREAMS
            if (args.streams == "lbp" and not is_lbp) or (args.streams == "raw" and is_lbp):
                continue
            sample = plane_sample(plane, label, path, tag, config.input_size)
            rows.append(extract_activations(model, sample.tensor, args.layer).astype(np.float64))
            name = CLASSES[label]
            labels.append(f"{name}/{'lbp' if is_lbp else 'raw'}" if args.streams == "both" else name)
    return np.stack(rows), labels


def cmd_tsne(args):
    X, labels = _tsne_inputs(args)
    cfg = EmbeddingConfig(perplexity=args.perplexity, iterations=args.iterations, seed=args.seed)
    Y, trace = tsne_embed(X, cfg)
    title = f"t-SNE of {args.layer}" if not args.features else "t-SNE"
    emit_scatter_svg(Y, labels, args.out, title=title)
    log.info("KL %.4f -> %.4f over %d points", trace[0], trace[-1], len(X))
    print(args.out)


def cmd_report(args):
    text = harness.reaggregate(args.inputs)
    if args.out:
        Path(args.out).write_text(text)
        print(args.out)
    else:
        sys.stdout.write(text)


COMMANDS = {
    "synth": cmd_synth,
    "augment": cmd_augment,
    "train": cmd_train,
    "eval": cmd_eval,
    "experiment": cmd_experiment,
    "tsne": cmd_tsne,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return 1
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"error ({args.command}): {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
