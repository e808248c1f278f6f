"""Command-line front end: train / explain / evaluate / decay / robustness.

Configuration is an INI file with one section per concern; every key has a
default (see --help). Each run writes into a fresh timestamped directory
under --out and records a manifest.json with the resolved config, seeds, and
a sha256 per emitted artifact, sufficient to reproduce the run byte-exactly.

Exit codes: 0 success, 2 configuration error, 3 insufficient data,
1 internal error.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import os
import sys
import time
import traceback
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import attribution as attr
from . import datasets, decay, heatmap, nets, perturbation, stats, tensorfile, training

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_CONFIG = 2
EXIT_DATA = 3

METHOD_NAMES = ("gradient", "gxi", "activity:<l>", "bias:<l>",
                "fullgrad:per-feature", "fullgrad:per-layer", "agg:<l0>", "gradcam:<l>")


class ConfigError(ValueError):
    pass


class InsufficientDataError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration


@dataclass
class DataConfig:
    kind: str = "synth_patch"       # synth_patch | idx
    classes: int = 4
    image_size: int = 16
    patch_size: int = 5
    n_train: int = 2000
    n_test: int = 500
    seed: int = 7
    manifest: str = ""              # required for kind = idx
    pixel_range: float = 255.0


@dataclass
class NetworkConfig:
    arch: str = "vgg_mini"          # vgg_mini | resnet_mini | linear
    biases: bool = True
    channels: str = "8,16,32"
    init_seed: int = 1


@dataclass
class TrainSection:
    epochs: int = 6
    batch_size: int = 64
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    seed: int = 0


@dataclass
class ExplainSection:
    methods: str = "gradient,gxi,fullgrad:per-layer"
    n_images: int = 4
    split: str = "test"
    psi: str = "aggregate"          # aggregate | single-layer
    target_class: str = "predicted"  # predicted | label
    overlay: bool = True
    upscale: int = 8


@dataclass
class EvaluateSection:
    methods: str = "gradient,gxi"
    n_images: int = 40
    split: str = "test"
    step_fraction: float = 0.01
    removal_value: float = 0.0
    noise_draws: int = 10
    psi: str = "aggregate"
    seed: int = 0


@dataclass
class DecaySection:
    kind: str = "exponential"
    decay_steps: int = 10
    steps_per_rescale: int = 25
    post_zero_steps: int = 0
    ratio: float = 0.95
    temperature: float = 100.0
    learning_rate: float = 5e-6
    batch_size: int = 64
    seed: int = 0


@dataclass
class RobustnessSection:
    scales: str = "0.001,0.1,1,10,1000"
    shifts: str = "0"
    n_images: int = 200
    split: str = "test"


SECTIONS = {"data": DataConfig, "network": NetworkConfig, "train": TrainSection,
            "explain": ExplainSection, "evaluate": EvaluateSection,
            "decay": DecaySection, "robustness": RobustnessSection}


def _coerce(section: str, key: str, raw: str, target_type):
    try:
        if target_type is bool:
            lowered = raw.strip().lower()
            if lowered in ("true", "1", "yes", "on"):
                return True
            if lowered in ("false", "0", "no", "off"):
                return False
            raise ValueError(raw)
        return target_type(raw)
    except ValueError:
        raise ConfigError(f"bad value for key [{section}] {key}: {raw!r}") from None


@dataclass
class Config:
    data: DataConfig
    network: NetworkConfig
    train: TrainSection
    explain: ExplainSection
    evaluate: EvaluateSection
    decay: DecaySection
    robustness: RobustnessSection
    raw_text: str = ""


def load_config(path: str | None, overrides: dict | None = None) -> Config:
    parser = configparser.ConfigParser()
    text = ""
    if path:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {path}")
        text = p.read_text()
        try:
            parser.read_string(text)
        except configparser.Error as err:
            raise ConfigError(f"cannot parse config: {err}") from None
    loaded = {}
    for section, cls in SECTIONS.items():
        kwargs = {}
        known = {f.name: f.type for f in fields(cls)}
        types = {f.name: type(getattr(cls(), f.name)) for f in fields(cls)}
        if parser.has_section(section):
            for key, raw in parser.items(section):
                if key not in known:
                    raise ConfigError(f"unknown config key [{section}] {key}")
                kwargs[key] = _coerce(section, key, raw, types[key])
        loaded[section] = cls(**kwargs)
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
    cfg = Config(**loaded, raw_text=text)
    for section, key, value in (overrides or {}).get("set", []):
        setattr(getattr(cfg, section), key, value)
    return cfg


def _floats(csv_text: str, where: str) -> list[float]:
    try:
        return [float(tok) for tok in csv_text.split(",") if tok.strip()]
    except ValueError:
        raise ConfigError(f"bad numeric list for key {where}: {csv_text!r}") from None


def _ints(csv_text: str, where: str) -> list[int]:
    return [int(v) for v in _floats(csv_text, where)]


def config_snapshot(cfg: Config) -> dict:
    snap = {}
    for section, cls in SECTIONS.items():
        obj = getattr(cfg, section)
        snap[section] = {f.name: getattr(obj, f.name) for f in fields(cls)}
    return snap


def snapshot_to_ini(snapshot: dict) -> str:
    lines = []
    for section, kv in snapshot.items():
        lines.append(f"[{section}]")
        for key, value in kv.items():
            lines.append(f"{key} = {value}")
        lines.append("")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# data and network construction


def build_datasets(cfg: Config) -> dict[str, datasets.Dataset]:
    d = cfg.data
    if d.kind == "synth_patch":
        train = datasets.synth_patch_dataset(d.seed, d.n_train, d.image_size,
                                             d.classes, d.patch_size, "train")
        test = datasets.synth_patch_dataset(d.seed + 1, d.n_test, d.image_size,
                                            d.classes, d.patch_size, "test")
        return {"train": train, "test": test}
    if d.kind == "idx":
        if not d.manifest:
            raise ConfigError("missing required key [data] manifest (kind = idx)")
        try:
            return datasets.load_dataset_manifest(d.manifest)
        except FileNotFoundError as err:
            raise ConfigError(f"[data] manifest: cannot read {err}") from None
    raise ConfigError(f"unknown value for key [data] kind: {d.kind!r}")


def build_spec(cfg: Config, input_shape: tuple[int, int, int]) -> nets.NetworkSpec:
    n = cfg.network
    channels = tuple(_ints(n.channels, "[network] channels"))
    if n.arch == "vgg_mini":
        return nets.vgg_mini(input_shape, cfg.data.classes, n.biases, channels)
    if n.arch == "resnet_mini":
        return nets.resnet_mini(input_shape, cfg.data.classes, channels)
    if n.arch == "linear":
        return nets.linear_classifier(input_shape, cfg.data.classes, n.biases)
    raise ConfigError(f"unknown value for key [network] arch: {n.arch!r}")


# ---------------------------------------------------------------------------
# explanation methods


@dataclass(frozen=True)
class MethodSpec:
    name: str
    kind: str
    layer: int | None = None


def parse_method(token: str) -> MethodSpec:
    token = token.strip()
    base, _, arg = token.partition(":")
    try:
        if token in ("gradient", "gxi"):
            return MethodSpec(token, token)
        if base in ("activity", "bias", "gradcam", "agg") and arg:
            return MethodSpec(token, base, int(arg))
        if base == "fullgrad" and arg in ("per-feature", "per-layer"):
            return MethodSpec(token, "fullgrad")
    except ValueError:
        pass
    raise ConfigError(
        f"unknown method {token!r}; valid methods: {', '.join(METHOD_NAMES)}")


def parse_methods(text: str) -> list[MethodSpec]:
    methods = [parse_method(tok) for tok in text.split(",") if tok.strip()]
    if not methods:
        raise ConfigError("no methods given")
    return methods


def _psi_config(name: str) -> attr.PsiConfig:
    if name == "aggregate":
        return attr.PSI_AGGREGATE
    if name == "single-layer":
        return attr.PSI_SINGLE_LAYER
    raise ConfigError(f"unknown value for key psi: {name!r}")


def method_map(spec: MethodSpec, checkpoint, x, class_index,
               psi_config: attr.PsiConfig):
    """The raw map an explanation method produces (attribution or saliency)."""
    if spec.kind == "gradient":
        return attr.gradient_saliency(checkpoint, x, class_index)
    if spec.kind == "gxi":
        return attr.gradient_times_input(checkpoint, x, class_index)
    if spec.kind == "activity":
        return attr.activity_attribution(checkpoint, x, class_index, spec.layer)
    if spec.kind == "bias":
        return attr.bias_attribution(checkpoint, x, class_index, spec.layer)
    if spec.kind == "gradcam":
        return attr.gradcam_attribution(checkpoint, x, class_index, spec.layer)
    if spec.kind == "agg":
        return attr.aggregate_activity_saliency(checkpoint, x, class_index,
                                                spec.layer, psi_config)
    granularity = spec.name.split(":", 1)[1]
    return attr.fullgrad_saliency(checkpoint, x, class_index, granularity)


def method_saliency(spec: MethodSpec, checkpoint, x, class_index,
                    psi_config: attr.PsiConfig) -> np.ndarray:
    """Input-sized non-negative map used for perturbation ranking."""
    raw = method_map(spec, checkpoint, x, class_index, psi_config)
    target = checkpoint.spec.input_shape[:2]
    if isinstance(raw, attr.SaliencyMap):
        if raw.values.shape == tuple(target):
            return raw.values
        return attr.psi(raw.values, attr.PsiConfig(use_rescale=False), target).values
    return attr.psi(raw, psi_config, target).values


# ---------------------------------------------------------------------------
# run directories and manifests


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def make_run_dir(out_root: str, command: str) -> Path:
    root = Path(out_root)
    root.mkdir(parents=True, exist_ok=True)
    stamp = time.strftime("%Y%m%d-%H%M%S")
    base = f"{command}-{stamp}-{os.getpid()}"
    candidate = root / base
    counter = 1
    while candidate.exists():  # append-only: never reuse a run directory
        counter += 1
        candidate = root / f"{base}-{counter}"
    candidate.mkdir()
    return candidate


def write_manifest(run_dir: Path, command: str, cfg: Config, seed: int | None,
                   workers: int, inputs: dict[str, str], started: float) -> Path:
    artifacts = {}
    for path in sorted(run_dir.rglob("*")):
        if path.is_file() and path.name != "manifest.json":
            artifacts[str(path.relative_to(run_dir))] = _sha256(path)
    manifest = {
        "command": command,
        "config": config_snapshot(cfg),
        "seed": seed,
        "workers": workers,
        "inputs": inputs,
        "artifacts": artifacts,
        "duration_s": round(time.time() - started, 3),
        "created": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    path = run_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path


def replay_manifest(manifest_path, out_root) -> dict:
    """Re-run the manifest's command with its recorded config/seed into a new
    run directory; compare artifact checksums."""
    manifest = json.loads(Path(manifest_path).read_text())
    cfg_path = Path(out_root) / f"replay-{os.getpid()}-{time.time_ns()}.ini"
    cfg_path.parent.mkdir(parents=True, exist_ok=True)
    cfg_path.write_text(snapshot_to_ini(manifest["config"]))
    argv = [manifest["command"], "--config", str(cfg_path), "--out", str(out_root),
            "--workers", str(manifest.get("workers", 1))]
    if manifest.get("seed") is not None:
        argv += ["--seed", str(manifest["seed"])]
    checkpoint = manifest["inputs"].get("checkpoint")
    if checkpoint:
        argv += ["--checkpoint", checkpoint]
    marker = Path(out_root) / f".replay-{time.time_ns()}"
    marker.mkdir(parents=True)
    argv[argv.index("--out") + 1] = str(marker)
    code = main(argv)
    if code != EXIT_OK:
        return {"match": False, "mismatches": [f"replay exited with code {code}"]}
    new_manifests = sorted(marker.rglob("manifest.json"))
    replayed = json.loads(new_manifests[0].read_text())
    mismatches = []
    old, new = manifest["artifacts"], replayed["artifacts"]
    for name in sorted(set(old) | set(new)):
        if old.get(name) != new.get(name):
            mismatches.append(f"{name}: {old.get(name)} != {new.get(name)}")
    return {"match": not mismatches, "mismatches": mismatches,
            "replay_dir": str(new_manifests[0].parent)}


# ---------------------------------------------------------------------------
# commands


def _load_checkpoint(args) -> nets.Checkpoint:
    if not args.checkpoint:
        raise ConfigError("missing required option --checkpoint")
    path = Path(args.checkpoint)
    if not path.exists():
        raise ConfigError(f"checkpoint not found: {path}")
    return nets.Checkpoint.load(path)


def _subset(split_sets: dict, split: str, n: int) -> datasets.Dataset:
    if split not in split_sets:
        raise ConfigError(f"split {split!r} not present (have {sorted(split_sets)})")
    ds = split_sets[split]
    return ds.subset(np.arange(min(n, len(ds))))


def cmd_train(args) -> int:
    started = time.time()
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.train.seed = args.seed
    split_sets = build_datasets(cfg)
    train_set = split_sets["train"]
    spec = build_spec(cfg, train_set.images.shape[1:])
    checkpoint = nets.build_network(spec, cfg.network.init_seed)
    tcfg = training.TrainConfig(cfg.train.epochs, cfg.train.batch_size,
                                cfg.train.optimizer, cfg.train.learning_rate,
                                cfg.train.seed)
    checkpoint, history = training.train_classifier(checkpoint, train_set, tcfg)
    run_dir = make_run_dir(args.out, "train")
    ck_path = run_dir / "checkpoint.ckpt"
    checkpoint.save(ck_path)
    train_acc = nets.evaluate_topk(checkpoint, train_set, 1)
    lines = [f"steps: {len(history)}",
             f"final_loss: {history[-1] if history else float('nan')!r}",
             f"train_top1: {train_acc!r}"]
    if "test" in split_sets:
        lines.append(f"test_top1: {nets.evaluate_topk(checkpoint, split_sets['test'], 1)!r}")
    (run_dir / "metrics.txt").write_text("\n".join(lines) + "\n")
    write_manifest(run_dir, "train", cfg, args.seed, args.workers, {}, started)
    for line in lines:
        print(line)
    print(f"run_dir: {run_dir}")
    return EXIT_OK


def cmd_explain(args) -> int:
    started = time.time()
    cfg = load_config(args.config)
    checkpoint = _load_checkpoint(args)
    methods = parse_methods(cfg.explain.methods)
    psi_config = _psi_config(cfg.explain.psi)
    num_units = nets.num_units(checkpoint.spec)
    for spec in methods:
        if spec.layer is not None:
            upper = num_units
            low = 0 if spec.kind == "agg" else 1
            if not low <= spec.layer <= upper:
                raise ConfigError(
                    f"method {spec.name!r}: layer must be in [{low}, {upper}]")
    split_sets = build_datasets(cfg)
    subset = _subset(split_sets, cfg.explain.split, cfg.explain.n_images)
    run_dir = make_run_dir(args.out, "explain")
    heat_dir = run_dir / "heatmaps"
    heat_dir.mkdir()
    dumps: dict[str, np.ndarray] = {}
    report_rows = []
    warnings = []
    for i in range(len(subset)):
        x = subset.images[i]
        if cfg.explain.target_class == "label":
            target = int(subset.labels[i])
        else:
            target = int(np.argmax(nets.forward_logits(checkpoint, x)))
        for spec in methods:
            m = method_map(spec, checkpoint, x, target, psi_config)
            values = m.values
            tag = spec.name.replace(":", "_").replace("-", "_")
            overlay = x if cfg.explain.overlay else None
            heatmap.render_heatmap(m, heat_dir / f"img{i:03d}_{tag}.png",
                                   overlay=overlay, upscale=cfg.explain.upscale)
            dumps[f"img{i:03d}.{spec.name}"] = values
            if getattr(m, "warning", None):
                warnings.append(f"img{i:03d} {spec.name}: {m.warning}")
        report = attr.decomposition_report(checkpoint, x, target)
        for l in range(report.num_units + 1):
            report_rows.append({
                "image": i, "class": target, "layer": l,
                "activity_sum": report.activity_sums[l],
                "bias_sum": report.bias_sums[l - 1] if l >= 1 else "",
                "residual": report.residuals[l], "logit": report.logit})
    tensorfile.save_tensors(run_dir / "attributions.bin", dumps,
                            {"kind": "attributions"})
    import csv as _csv
    with open(run_dir / "decompositions.csv", "w", newline="") as fh:
        writer = _csv.DictWriter(fh, fieldnames=list(report_rows[0].keys()))
        writer.writeheader()
        for row in report_rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v
                             for k, v in row.items()})
    inputs = {"checkpoint": str(args.checkpoint)}
    write_manifest(run_dir, "explain", cfg, args.seed, args.workers, inputs, started)
    for w in warnings:
        print(f"warning: {w}")
    print(f"images: {len(subset)}  methods: {len(methods)}")
    print(f"run_dir: {run_dir}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    started = time.time()
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.evaluate.seed = args.seed
    checkpoint = _load_checkpoint(args)
    methods = parse_methods(cfg.evaluate.methods)
    if len(methods) < 2:
        raise ConfigError("[evaluate] methods must list at least 2 methods")
    psi_config = _psi_config(cfg.evaluate.psi)
    split_sets = build_datasets(cfg)
    subset = _subset(split_sets, cfg.evaluate.split, cfg.evaluate.n_images)
    if len(subset) < 5 or len(subset) <= cfg.evaluate.noise_draws:
        raise InsufficientDataError(
            f"evaluation needs at least max(5, noise_draws+1) images, got {len(subset)}")
    config = perturbation.PerturbConfig(step_fraction=cfg.evaluate.step_fraction,
                                        removal_value=cfg.evaluate.removal_value)
    run_dir = make_run_dir(args.out, "evaluate")
    all_records: list[perturbation.EvalRecord] = []
    by_method: dict[str, list[perturbation.EvalRecord]] = {}
    for spec in methods:
        maps = []
        for i in range(len(subset)):
            x = subset.images[i]
            target = int(np.argmax(nets.forward_logits(checkpoint, x)))
            maps.append(method_saliency(spec, checkpoint, x, target, psi_config))
        records = perturbation.evaluate_method(
            checkpoint, subset.images, None, method_name=spec.name, config=config,
            draws=cfg.evaluate.noise_draws, seed=cfg.evaluate.seed, maps=maps,
            workers=args.workers)
        by_method[spec.name] = records
        all_records.extend(records)
    perturbation.write_records_csv(run_dir / "records.csv", all_records)
    comparison_rows = []
    names = [m.name for m in methods]
    for a in range(len(names)):
        for b in range(a + 1, len(names)):
            comparison_rows.extend(perturbation.compare_methods(
                by_method[names[a]], by_method[names[b]]))
    perturbation.write_comparison_csv(run_dir / "comparisons.csv", comparison_rows)
    summary_rows = []
    for metric in ("e_minus", "e_plus", "de_minus", "de_plus", "de_delta"):
        for row in stats.summarize(all_records, ("method",), metric):
            summary_rows.append({"metric": metric, **row})
    import csv as _csv
    with open(run_dir / "summary.csv", "w", newline="") as fh:
        writer = _csv.DictWriter(fh, fieldnames=list(summary_rows[0].keys()))
        writer.writeheader()
        for row in summary_rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v
                             for k, v in row.items()})
    inputs = {"checkpoint": str(args.checkpoint)}
    write_manifest(run_dir, "evaluate", cfg, args.seed, args.workers, inputs, started)
    degenerate = [r for r in comparison_rows if r["n"] == 0 or np.isnan(r["p"])]
    for row in degenerate:
        print(f"degenerate comparison: {row['method_a']} vs {row['method_b']} "
              f"({row['metric']}): no nonzero paired differences")
    print(f"records: {len(all_records)}  comparisons: {len(comparison_rows)}")
    print(f"run_dir: {run_dir}")
    return EXIT_OK


def cmd_decay(args) -> int:
    started = time.time()
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.decay.seed = args.seed
    teacher = _load_checkpoint(args)
    split_sets = build_datasets(cfg)
    train_set = split_sets["train"]
    eval_set = split_sets.get("test", train_set)
    schedule = decay.DecaySchedule(cfg.decay.kind, cfg.decay.decay_steps,
                                   cfg.decay.steps_per_rescale,
                                   cfg.decay.post_zero_steps, cfg.decay.ratio)
    dcfg = decay.DistillConfig(cfg.decay.temperature, "adam",
                               cfg.decay.learning_rate, cfg.decay.batch_size,
                               cfg.decay.seed)
    student, trajectory = decay.run_decay(teacher.copy(), teacher, train_set,
                                          schedule, dcfg, eval_dataset=eval_set)
    run_dir = make_run_dir(args.out, "decay")
    student.save(run_dir / "checkpoint.ckpt")
    trajectory.write_csv(run_dir / "trajectory.csv")
    teacher_acc = nets.evaluate_topk(teacher, eval_set, 1)
    report = decay.recovery_report(trajectory, teacher_acc) if teacher_acc > 0 else None
    inputs = {"checkpoint": str(args.checkpoint)}
    write_manifest(run_dir, "decay", cfg, args.seed, args.workers, inputs, started)
    print(f"teacher_top1: {teacher_acc!r}")
    print(f"final_top1: {trajectory.points[-1].top1!r}")
    if report:
        print(f"recovery: {report.recovery!r}  worst_dip: {report.worst_dip!r}")
    if not trajectory.completed:
        print("warning: decay aborted on non-finite loss")
    print(f"run_dir: {run_dir}")
    return EXIT_OK


def cmd_robustness(args) -> int:
    started = time.time()
    cfg = load_config(args.config)
    checkpoint = _load_checkpoint(args)
    split_sets = build_datasets(cfg)
    subset = _subset(split_sets, cfg.robustness.split, cfg.robustness.n_images)
    scales = _floats(cfg.robustness.scales, "[robustness] scales")
    shifts = _floats(cfg.robustness.shifts, "[robustness] shifts")
    table = nets.scale_shift_sweep(checkpoint, subset, scales, shifts)
    run_dir = make_run_dir(args.out, "robustness")
    import csv as _csv
    with open(run_dir / "robustness.csv", "w", newline="") as fh:
        writer = _csv.DictWriter(fh, fieldnames=["scale", "shift", "top1"])
        writer.writeheader()
        for row in table.rows():
            writer.writerow({k: repr(v) for k, v in row.items()})
    stripped = nets.zero_bias(checkpoint)
    with open(run_dir / "regression.csv", "w", newline="") as fh:
        writer = _csv.DictWriter(fh, fieldnames=["image_id", "alpha", "beta",
                                                 "residual_norm"])
        writer.writeheader()
        alphas = []
        for i in range(len(subset)):
            vanilla = nets.forward_logits(checkpoint, subset.images[i])
            zeroed = nets.forward_logits(stripped, subset.images[i])
            fit = nets.fit_output_regression(vanilla, zeroed)
            alphas.append(fit.alpha)
            writer.writerow({"image_id": i, "alpha": repr(fit.alpha),
                             "beta": repr(fit.beta),
                             "residual_norm": repr(fit.residual_norm)})
    inputs = {"checkpoint": str(args.checkpoint)}
    write_manifest(run_dir, "robustness", cfg, args.seed, args.workers, inputs, started)
    print(f"mean_alpha: {float(np.mean(alphas))!r}")
    print(f"run_dir: {run_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def _config_epilog() -> str:
    lines = ["config keys and defaults:"]
    for section, cls in SECTIONS.items():
        defaults = cls()
        keys = ", ".join(f"{f.name}={getattr(defaults, f.name)!r}" for f in fields(cls))
        lines.append(f"  [{section}] {keys}")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="INI config file")
    common.add_argument("--seed", type=int, default=None,
                        help="override the active command's seed")
    common.add_argument("--workers", type=int, default=1,
                        help="worker processes for per-image evaluation")
    common.add_argument("--out", default="runs", help="output root directory")
    common.add_argument("--checkpoint", default=None, help="checkpoint file")
    parser = argparse.ArgumentParser(
        prog="saliencylab",
        description="attribution decompositions, saliency maps, and "
                    "perturbation-based evaluation for small ReLU networks",
        epilog=_config_epilog(),
        formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("train", parents=[common],
                   help="train a classifier and write a checkpoint")
    sub.add_parser("explain", parents=[common],
                   help="render heatmaps, attribution dumps, decomposition reports")
    sub.add_parser("evaluate", parents=[common],
                   help="perturbation metrics, pairwise tests, quantile summaries")
    sub.add_parser("decay", parents=[common],
                   help="decay biases to zero with distillation fine-tuning")
    sub.add_parser("robustness", parents=[common],
                   help="scale/shift accuracy sweep and zero-bias output regression")
    return parser


COMMANDS = {"train": cmd_train, "explain": cmd_explain, "evaluate": cmd_evaluate,
            "decay": cmd_decay, "robustness": cmd_robustness}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except InsufficientDataError as err:
        print(f"insufficient data: {err}", file=sys.stderr)
        return EXIT_DATA
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL


def entry():
    sys.exit(main())
