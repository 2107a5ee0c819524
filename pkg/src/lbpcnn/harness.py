"""Dataset manifests, stratified splits and the repeated-split experiment protocol."""

from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .augment import Sample, augment_training_image
from .fusion import fuse
from .imaging import read_pnm
from .labels import CLASSES, FUSED, RAW_STREAMS, class_index
from .metrics import METRICS, ConfusionCounts, aggregate_max_mean_min, compute_metrics, confusion
from .nn import TrainConfig, build_model, load_model_config, load_weights, predict_batch, preset, train, transfer_modify
from .nn.persist import read_weight_shapes

log = logging.getLogger(__name__)

STREAMS = RAW_STREAMS + (FUSED,)
REPORT_HEADER = ("split", "stream", "metric", "max", "mean", "min")
REPETITION_HEADER = ("split", "repetition", "seed", "train_size", "stream", "tp", "fp", "tn", "fn") + METRICS


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetManifest:
    """(path, class index) entries; relative paths resolve against ``base_dir``."""

    entries: tuple
    base_dir: Path = Path(".")

    def __post_init__(self):
        counts = self.counts
        if any(n == 0 for n in counts):
            raise ManifestError(f"both classes need at least one image, got counts {counts}")

    @property
    def counts(self) -> tuple[int, ...]:
        return tuple(sum(1 for _, label in self.entries if label == k) for k in range(len(CLASSES)))

    def resolve(self, path) -> Path:
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p


def load_manifest(path) -> DatasetManifest:
    """Parse a ``path,label`` CSV; '#' comments and a 'path,label' header are allowed."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc.strerror}") from None
    entries, seen = [], {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.rsplit(",", 1)]
        if len(parts) != 2 or not parts[0]:
            raise ManifestError(f"{path}:{lineno}: expected 'path,label'")
        if not entries and parts == ["path", "label"]:
            continue
        try:
            label = class_index(parts[1])
        except ValueError as exc:
            raise ManifestError(f"{path}:{lineno}: {exc}") from None
        if parts[0] in seen:
            raise ManifestError(f"{path}:{lineno}: duplicate path {parts[0]!r} (first on line {seen[parts[0]]})")
        seen[parts[0]] = lineno
        entries.append((parts[0], label))
    return DatasetManifest(tuple(entries), path.parent)


def write_manifest(entries, path) -> None:
    Path(path).write_text("".join(f"{p},{CLASSES[label]}\n" for p, label in entries))


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def split_dataset(manifest: DatasetManifest, test_fraction: float, seed: int):
    """Stratified random split; returns (train entries, test entries) in manifest order."""
    if not 0 < test_fraction < 1:
        raise ValueError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    rng = np.random.default_rng(seed)
    test_idx = set()
    for k, name in enumerate(CLASSES):
        members = [i for i, (_, label) in enumerate(manifest.entries) if label == k]
        n_test = _round_half_up(len(members) * test_fraction)
        if n_test == 0 or n_test == len(members):
            raise ValueError(
                f"class {name!r} has {len(members)} images; a {test_fraction:g} test fraction leaves "
                f"{'no test' if n_test == 0 else 'no training'} images"
            )
        chosen = rng.permutation(len(members))[:n_test]
        test_idx.update(members[i] for i in chosen)
    train = [e for i, e in enumerate(manifest.entries) if i not in test_idx]
    test = [e for i, e in enumerate(manifest.entries) if i in test_idx]
    return train, test


_MASK64 = (1 << 64) - 1


def mix_seed(master: int, index: int) -> int:
    """Per-repetition seed: SplitMix64 finaliser of master + (index + 1) * golden gamma.

    The finaliser is a bijection on 64-bit words, so distinct indices below
    2**64 always give distinct seeds.
    """
    z = (master + (index + 1) * 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


@dataclass
class ExperimentConfig:
    manifest: str = "manifest.csv"
    split: tuple = (80, 20)
    reps: int = 20
    lr: float = 1e-4
    momentum: float = 0.9
    batch: int = 20
    epochs: int = 80
    preset: str = "alexnet"
    arch: str | None = None
    fusion: str = "majority"
    lbp_aug: bool = True
    seed: int = 0
    out: str = "results"
    weights: str | None = None
    freeze_before: str | None = None
    jobs: int = 1

    def __post_init__(self):
        if isinstance(self.split, str):
            self.split = parse_split(self.split)
        self.split = tuple(self.split)
        if len(self.split) != 2 or sum(self.split) != 100 or min(self.split) <= 0:
            raise ValueError(f"split must be train:test percentages summing to 100, got {self.split}")
        if self.reps < 1:
            raise ValueError("reps must be at least 1")
        if self.fusion not in ("majority", "meanprob"):
            raise ValueError(f"fusion must be majority or meanprob, got {self.fusion!r}")

    @property
    def split_name(self) -> str:
        return f"{self.split[0]}:{self.split[1]}"

    @property
    def test_fraction(self) -> float:
        return self.split[1] / 100

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(self.lr, self.momentum, self.batch, self.epochs, seed)

    def model_config(self):
        return load_model_config(self.arch) if self.arch else preset(self.preset)

    def dumps(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None:
                continue
            if f.name == "split":
                value = self.split_name
            elif isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{f.name}={value}")
        return "\n".join(lines) + "\n"


def parse_split(text: str) -> tuple[int, int]:
    a, sep, b = text.partition(":")
    try:
        return int(a), int(b)
    except ValueError:
        raise ValueError(f"split must look like 80:20, got {text!r}") from None


def _parse_bool(text: str) -> bool:
    token = text.strip().lower()
    if token in ("1", "true", "yes", "on"):
        return True
    if token in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


_CONVERTERS = {
    "split": str,
    "reps": int,
    "lr": float,
    "momentum": float,
    "batch": int,
    "epochs": int,
    "lbp_aug": _parse_bool,
    "seed": int,
    "jobs": int,
}


def parse_experiment_config(text: str, base_dir=None) -> dict:
    """Parse ``key=value`` lines into a dict of typed ExperimentConfig fields.

    Relative ``manifest``, ``arch``, ``weights`` and ``out`` paths are resolved
    against ``base_dir`` when given.
    """
    known = {f.name for f in fields(ExperimentConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = (s.strip() for s in line.partition("="))
        if not sep:
            raise ValueError(f"config line {lineno}: expected key=value")
        if key not in known:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        try:
            values[key] = _CONVERTERS.get(key, str)(raw)
        except ValueError as exc:
            raise ValueError(f"config line {lineno}: {exc}") from None
        if key in ("manifest", "arch", "weights", "out") and base_dir is not None:
            p = Path(values[key])
            values[key] = str(p if p.is_absolute() else Path(base_dir) / p)
    return values


@dataclass
class RepetitionResult:
    index: int
    seed: int
    train_size: int
    counts: dict  # stream -> ConfusionCounts

    def metrics(self, stream) -> dict:
        return compute_metrics(self.counts[stream]).as_dict()


@dataclass
class RunReport:
    config: ExperimentConfig
    repetitions: list = field(default_factory=list)

    @property
    def split_name(self):
        return self.config.split_name

    def cells(self) -> dict:
        """(stream, metric) -> (max, mean, min) over repetitions."""
        return {
            (stream, metric): aggregate_max_mean_min([rep.metrics(stream)[metric] for rep in self.repetitions])
            for stream in STREAMS
            for metric in METRICS
        }


def _image_samples(manifest: DatasetManifest, input_size: int) -> list[list[Sample]]:
    """All six samples of every manifest image, in manifest order."""
    out = []
    for path, label in manifest.entries:
        try:
            image = read_pnm(manifest.resolve(path))
        except (OSError, ValueError) as exc:
            raise ValueError(f"cannot load {path}: {exc}") from None
        if image.channels != 3:
            raise ValueError(f"{path}: expected a colour (P3/P6) image")
        out.append(augment_training_image(image, label, input_size, source_id=path))
    return out


def preset_with_classes(config, class_count: int):
    final = config.final_fc
    return config.with_layer(config.index_of(final.label), replace(final, params={"units": class_count}))


def _run_repetition(cfg: ExperimentConfig, model_config, samples, manifest, index: int) -> RepetitionResult:
    seed = mix_seed(cfg.seed, index)
    train_entries, test_entries = split_dataset(manifest, cfg.test_fraction, seed)
    position = {path: i for i, (path, _) in enumerate(manifest.entries)}
    per_image = 6 if cfg.lbp_aug else 3
    train_samples = [s for path, _ in train_entries for s in samples[position[path]][:per_image]]

    if cfg.weights:
        # build with the stored head size so the file loads, then swap the head
        head = read_weight_shapes(cfg.weights).get(model_config.final_fc.label)
        if head:
            model_config = preset_with_classes(model_config, head[0][0])
        model = build_model(model_config, seed=mix_seed(seed, 0))
        load_weights(model, cfg.weights)
    else:
        model = build_model(model_config, seed=mix_seed(seed, 0))
    model = transfer_modify(model, len(CLASSES), cfg.freeze_before, seed=mix_seed(seed, 1))
    train(model, train_samples, cfg.train_config(mix_seed(seed, 2)))

    truths = [label for _, label in test_entries]
    preds = {stream: [] for stream in STREAMS}
    for path, _ in test_entries:
        test = samples[position[path]][:3]
        decisions = predict_batch(model, [s.tensor for s in test], [s.stream_tag for s in test])
        for d in decisions:
            preds[d.stream_tag].append(d.label)
        preds[FUSED].append(fuse(decisions, cfg.fusion).label)
    counts = {stream: confusion(truths, preds[stream]) for stream in STREAMS}
    log.info(
        "repetition %d: fused accuracy %.2f%%", index, compute_metrics(counts[FUSED]).accuracy
    )
    return RepetitionResult(index, seed, len(train_samples), counts)


def _repetition_task(args):
    index = args[-1]
    try:
        return _run_repetition(*args)
    except Exception as exc:
        raise RuntimeError(f"repetition {index}: {exc}") from exc


def run_experiment(cfg: ExperimentConfig) -> RunReport:
    manifest = load_manifest(cfg.manifest)
    model_config = cfg.model_config()
    samples = _image_samples(manifest, model_config.input_size)
    tasks = [(cfg, model_config, samples, manifest, r) for r in range(cfg.reps)]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_repetition_task, tasks))
    else:
        results = [_repetition_task(t) for t in tasks]
    results.sort(key=lambda rep: rep.index)
    return RunReport(cfg, results)


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def report_csv(report: RunReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_HEADER)
    for (stream, metric), cell in report.cells().items():
        w.writerow([report.split_name, stream, metric, *map(_fmt, cell)])
    return buf.getvalue()


def repetitions_csv(report: RunReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPETITION_HEADER)
    for rep in report.repetitions:
        for stream in STREAMS:
            c = rep.counts[stream]
            m = rep.metrics(stream)
            w.writerow(
                [report.split_name, rep.index, rep.seed, rep.train_size, stream, c.tp, c.fp, c.tn, c.fn]
                + [repr(m[k]) for k in METRICS]
            )
    return buf.getvalue()


def write_report(report: RunReport, path) -> None:
    Path(path).write_text(report_csv(report))


def split_tag(split_name: str) -> str:
    return split_name.replace(":", "-")


def save_run(report: RunReport, out_dir) -> dict:
    """Write the aggregate report, per-repetition rows and a config echo; return their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tag = split_tag(report.split_name)
    paths = {
        "report": out / f"report_{tag}.csv",
        "repetitions": out / f"repetitions_{tag}.csv",
        "config": out / f"config_{tag}.txt",
    }
    write_report(report, paths["report"])
    paths["repetitions"].write_text(repetitions_csv(report))
    paths["config"].write_text(report.config.dumps())
    return paths


def read_report(path) -> dict:
    """Load a report CSV as {(split, stream, metric): (max, mean, min)}."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != REPORT_HEADER:
        raise ValueError(f"{path}: not a report file (header must be {','.join(REPORT_HEADER)})")
    return {(r[0], r[1], r[2]): tuple(float(x) for x in r[3:6]) for r in rows[1:]}


def reaggregate(repetition_paths) -> str:
    """Rebuild report CSV text from one or more per-repetition CSVs."""
    values: dict = {}
    for path in repetition_paths:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != REPETITION_HEADER:
                raise ValueError(f"{path}: not a per-repetition file")
            for row in reader:
                for metric in METRICS:
                    values.setdefault((row["split"], row["stream"], metric), []).append(float(row[metric]))
    if not values:
        raise ValueError("no repetition rows found")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_HEADER)
    splits = list(dict.fromkeys(k[0] for k in values))
    for split in splits:
        for stream in STREAMS:
            for metric in METRICS:
                key = (split, stream, metric)
                if key in values:
                    w.writerow([split, stream, metric, *map(_fmt, aggregate_max_mean_min(values[key]))])
    return buf.getvalue()
