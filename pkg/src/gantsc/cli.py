"""Command-line driver: ``gantsc <command> --config run.json [--seed N] [--out DIR]``.

Every command writes its artifacts plus ``manifest.json`` (sha256 of each
output and input) into ``--out``. Failures exit nonzero with one JSON object
on stderr.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import container
from .compress import (GAN, CompressionError, SourceConfig, build_pooled, compare_throughput, compress_forest,
                       compress_nn, evaluate)
from .config import (BenchmarkConfig, CompressConfig, ConfigError, DataSpec, GenerateConfig, MungeConfigSpec,
                     ScoreConfig, StudentSpec, SweepConfig, TrainGANConfig, TrainTeacherConfig, load_config)
from .data import DataError, Dataset, load_csv, load_dataset, make_synthetic_benchmark, save_csv, split
from .forest import RandomForest, depth_stats, fit_classifier_forest, node_count, save_forest
from .forest import from_container as forest_from_container
from .gan import ACGAN, at_checkpoint, degrade_acgan, generate, load_acgan, save_acgan, train_acgan
from .munge import MungeConfig, munge
from .nn import MLP, init_mlp, mlp_from_container, save_mlp, train_classifier
from .score import DegenerateScore, confidence_score, tsc_scores

# ---------------------------------------------------------------------------
# output bookkeeping


def _plain(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_plain) + "\n"


class Run:
    """Collects outputs of one command and writes the manifest."""

    def __init__(self, command: str, out: Path, config_path: str, config, seed: int):
        self.command = command
        self.out = out
        self.config_path = config_path
        self.config = config
        self.seed = seed
        self.inputs: dict[str, str] = {}
        self.outputs: list[str] = []
        self.timing: list[str] = []
        out.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        p = self.out / name
        p.parent.mkdir(parents=True, exist_ok=True)
        self.outputs.append(name)
        return p

    def input(self, path) -> None:
        if path is not None:
            self.inputs[str(path)] = container.file_sha256(path)

    def json(self, name: str, obj, timing: bool = False) -> None:
        self.path(name).write_text(dumps(obj))
        if timing:
            self.timing.append(name)

    def jsonl(self, name: str, rows) -> None:
        self.path(name).write_text("".join(json.dumps(r, sort_keys=True, default=_plain) + "\n" for r in rows))

    def csv(self, name: str, rows: list[dict]) -> None:
        keys = []
        for r in rows:
            keys += [k for k in r if k not in keys]
        with open(self.path(name), "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=keys, lineterminator="\n")
            w.writeheader()
            for r in rows:
                w.writerow({k: ("" if r.get(k) is None else repr(r[k]) if isinstance(r.get(k), float) else r[k])
                            for k in keys})

    def manifest(self) -> dict:
        cfg_sha = container.file_sha256(self.config_path)
        outputs = {n: container.file_sha256(self.out / n) for n in sorted(set(self.outputs))}
        doc = {"command": self.command, "config_path": str(self.config_path), "config_sha256": cfg_sha,
               "config": asdict(self.config), "seed": self.seed, "inputs": dict(sorted(self.inputs.items())),
               "outputs": outputs, "timing_outputs": sorted(self.timing)}
        (self.out / "manifest.json").write_text(dumps(doc))
        return doc


# ---------------------------------------------------------------------------
# loading helpers


def _load_table(path, label, run: Run) -> Dataset:
    run.input(path)
    with open(path, "rb") as fh:
        head = fh.read(len(container.MAGIC))
    if head == container.MAGIC:
        return load_dataset(path)
    return load_csv(path, label)


def load_data(spec: DataSpec, run: Run) -> tuple[Dataset, Dataset | None, Dataset | None]:
    """(train, validation, test) from files or a generated benchmark."""
    if spec.benchmark is not None:
        if spec.train or spec.test or spec.validation:
            raise ConfigError("data: give either benchmark or file paths, not both")
        b = spec.benchmark
        full = make_synthetic_benchmark(b.n, b.d, b.n_classes, b.separation, b.seed)
        parts = split(full, spec.fractions, spec.split_seed)
        if len(parts) == 2:
            return parts[0], None, parts[1]
        if len(parts) == 3:
            return parts[0], parts[1], parts[2]
        raise ConfigError("data.fractions must have 2 (train, test) or 3 (train, validation, test) entries")
    if spec.train is None:
        raise ConfigError("data: train path or benchmark required")
    train = _load_table(spec.train, spec.label, run)
    val = _load_table(spec.validation, spec.label, run) if spec.validation else None
    test = _load_table(spec.test, spec.label, run) if spec.test else None
    for name, d in (("validation", val), ("test", test)):
        if d is not None and d.d != train.d:
            raise DataError(f"{name} set has {d.d} features, train has {train.d}")
    return train, val, test


def load_model(path, run: Run):
    run.input(path)
    kind, meta, arrays = container.load(path)
    if kind == "forest":
        return forest_from_container(meta, arrays)
    if kind == "mlp":
        return mlp_from_container(meta, arrays)
    raise ConfigError(f"{path}: expected a forest or mlp model, found {kind!r}")


def load_gan(path, run: Run) -> ACGAN:
    run.input(path)
    return load_acgan(path)


def _require_test(test, command):
    if test is None:
        raise ConfigError(f"{command}: data.test is required")
    return test


def _model_size(m) -> dict:
    if isinstance(m, RandomForest):
        return {"nodes": node_count(m), "trees": len(m.trees), "depth": depth_stats(m)}
    return {"parameters": m.n_parameters(), "sizes": list(m.sizes)}


def _write_model(run: Run, name: str, m) -> None:
    p = run.path(name)
    if isinstance(m, RandomForest):
        save_forest(p, m)
    else:
        save_mlp(p, m)


# ---------------------------------------------------------------------------
# commands


def cmd_train_teacher(cfg: TrainTeacherConfig, run: Run) -> dict:
    train, val, test = load_data(cfg.data, run)
    test = _require_test(test, "train-teacher")
    t = cfg.teacher
    history = []
    if t.kind == "forest":
        model = fit_classifier_forest(train, t.n_trees, cfg.seed)
    elif t.kind == "mlp":
        if t.early_stopping and val is None:
            raise ConfigError("teacher.early_stopping needs a validation set")
        init = init_mlp([train.d, *t.hidden, train.n_classes], [cfg.seed, 1], t.activation)
        model, history = train_classifier(init, train, t.epochs, t.batch_size, t.optimizer, cfg.seed, test,
                                          val if t.early_stopping else None)
    else:
        raise ConfigError(f"teacher.kind must be forest or mlp, got {t.kind!r}")
    _write_model(run, "teacher.gtsc", model)
    report = evaluate(model, test).to_dict()
    train_pred = evaluate(model, train, auc=False).accuracy
    report.update(train_accuracy=train_pred, model=_model_size(model), kind=t.kind)
    if history:
        run.jsonl("metrics.jsonl", history)
        run.csv("curves.csv", history)
    run.json("report.json", report)
    return report


def cmd_train_gan(cfg: TrainGANConfig, run: Run) -> dict:
    train, _, _ = load_data(cfg.data, run)
    gan = train_acgan(train, cfg.gan, cfg.seed)
    save_acgan(run.path("gan.gtsc"), gan)
    log = list(gan.log)
    report = {"epochs": gan.epochs_trained, "checkpoints": [e for e, _ in gan.checkpoints],
              "final": log[-1] if log else None}
    if cfg.degrade_epochs:
        bad = degrade_acgan(gan, cfg.degrade_epochs, train, cfg.seed)
        save_acgan(run.path("gan_degraded.gtsc"), bad)
        log = list(bad.log)
        report["degraded"] = {"extra_epochs": cfg.degrade_epochs, "final": log[-1]}
    run.jsonl("metrics.jsonl", log)
    run.csv("gan_log.csv", log)
    run.json("report.json", report)
    return report


def cmd_generate(cfg: GenerateConfig, run: Run) -> dict:
    if cfg.m < 1:
        raise ConfigError("m must be >= 1")
    gan = load_gan(cfg.gan, run)
    batch = generate(gan, cfg.m, cfg.seed, cfg.epoch)
    save_csv(run.path("synthetic.csv"), batch.features, batch.intended_classes if cfg.with_classes else None)
    report = {"rows": len(batch), "features": batch.features.shape[1], "epoch": cfg.epoch,
              "class_counts": np.bincount(batch.intended_classes, minlength=gan.n_classes).tolist()}
    run.json("report.json", report)
    return report


def _munge_config(spec, seed) -> MungeConfig:
    return MungeConfig(spec.p_swap, spec.local_variance, spec.multiplier, seed)


def cmd_munge(cfg: MungeConfigSpec, run: Run) -> dict:
    train, _, _ = load_data(cfg.data, run)
    batch = munge(train, _munge_config(cfg.munge, cfg.seed))
    save_csv(run.path("munge.csv"), batch.features, batch.intended_classes)
    report = {"rows": len(batch), "source_rows": train.n, **asdict(cfg.munge)}
    run.json("report.json", report)
    return report


def _student_init(spec: StudentSpec, train: Dataset, seed) -> MLP:
    return init_mlp([train.d, *spec.hidden, train.n_classes], [seed, 2], spec.activation)


def _run_compression(cfg, train, val, test, teacher, gan, munge_batch, source: SourceConfig, seed: int):
    """One student; returns (model, report dict, per-epoch curves)."""
    if cfg.student.kind == "forest":
        if source.kind == "stream":
            raise ConfigError("forest students use pooled sources; stream sources need an MLP student")
        cset = build_pooled(train, teacher, source, gan, munge_batch, seed)
        model = compress_forest(teacher, cset, cfg.student.n_trees, seed)
        curves, counts = [], cset.counts()
    elif cfg.student.kind == "mlp":
        model, curves = compress_nn(teacher, _student_init(cfg.student, train, seed), train, source, cfg.objective,
                                    cfg.epochs, cfg.batch_size, cfg.optimizer, seed, gan, munge_batch, test, val)
        counts = None
    else:
        raise ConfigError(f"student.kind must be forest or mlp, got {cfg.student.kind!r}")
    report = evaluate(model, test).to_dict()
    report["curves"] = curves
    report.update(model=_model_size(model), provenance=counts, source=asdict(source), seed=seed)
    if val is not None:
        report["validation_accuracy"] = evaluate(model, val, auc=False).accuracy
    return model, report, curves


def _sources(cfg, train, run: Run):
    gan = load_gan(cfg.gan, run) if cfg.gan else None
    if gan is not None and getattr(cfg, "gan_epoch", None) is not None:
        gan = at_checkpoint(gan, cfg.gan_epoch)
    munge_batch = munge(train, _munge_config(cfg.munge, cfg.seed)) if cfg.munge else None
    needs_gan = cfg.source.kind == "gan" or (cfg.source.kind == "pooled" and cfg.source.generator == GAN)
    if needs_gan and gan is None:
        raise ConfigError(f"source {cfg.source.kind!r} needs a gan path")
    needs_munge = cfg.source.kind == "munge" or (cfg.source.kind == "pooled" and cfg.source.generator == "munge")
    if needs_munge and munge_batch is None:
        raise ConfigError(f"source {cfg.source.kind!r} needs a munge section")
    return gan, munge_batch


def cmd_compress(cfg: CompressConfig, run: Run) -> dict:
    if isinstance(cfg.p_fake, list):
        sweep = SweepConfig(data=cfg.data, teacher=cfg.teacher, student=cfg.student,
                            source=replace(cfg.source, kind="stream"), objective=cfg.objective,
                            optimizer=cfg.optimizer, gan=cfg.gan, gan_epoch=cfg.gan_epoch, munge=cfg.munge,
                            epochs=cfg.epochs, batch_size=cfg.batch_size, p_fake=cfg.p_fake, seeds=[cfg.seed],
                            seed=cfg.seed)
        return cmd_sweep(sweep, run)
    train, val, test = load_data(cfg.data, run)
    test = _require_test(test, "compress")
    teacher = load_model(cfg.teacher, run)
    source = cfg.source if cfg.p_fake is None else replace(cfg.source, kind="stream", p_fake=float(cfg.p_fake))
    if source.kind == "stream" and source.p_fake > 0 and not cfg.gan:
        raise ConfigError("stream sources with p_fake > 0 need a gan path")
    gan, munge_batch = _sources(replace(cfg, source=source), train, run)
    model, report, curves = _run_compression(cfg, train, val, test, teacher, gan, munge_batch, source, cfg.seed)
    _write_model(run, "student.gtsc", model)
    if curves:
        run.jsonl("metrics.jsonl", curves)
        run.csv("curves.csv", curves)
    run.json("report.json", report)
    return report


def cmd_sweep(cfg: SweepConfig, run: Run) -> dict:
    """Stream-mixture compression over a p_fake grid; the validation-best value is named."""
    if cfg.student.kind != "mlp":
        raise ConfigError("sweep needs an MLP student")
    if not cfg.p_fake:
        raise ConfigError("p_fake grid is empty")
    train, val, test = load_data(cfg.data, run)
    test = _require_test(test, "sweep")
    if val is None:
        raise ConfigError("sweep needs a validation set to select p_fake")
    if any(p > 0 for p in cfg.p_fake) and not cfg.gan:
        raise ConfigError("p_fake > 0 needs a gan path")
    teacher = load_model(cfg.teacher, run)
    gan, munge_batch = _sources(replace(cfg, source=replace(cfg.source, kind="stream")), train, run)
    rows, points = [], []
    for p in cfg.p_fake:
        source = replace(cfg.source, kind="stream", p_fake=float(p))
        per_seed = []
        for s in cfg.seeds:
            _, rep, curves = _run_compression(cfg, train, val, test, teacher, gan, munge_batch, source, int(s))
            per_seed.append(rep)
            rows += [{"p_fake": float(p), "seed": int(s), **c} for c in curves]
        point = {"p_fake": float(p),
                 "validation_accuracy": float(np.mean([r["validation_accuracy"] for r in per_seed])),
                 "test_accuracy": float(np.mean([r["accuracy"] for r in per_seed]))}
        run.json(f"p_fake_{p:.2f}/report.json", {**point, "seeds": list(cfg.seeds), "runs": per_seed})
        points.append(point)
    # earliest grid value wins ties
    best = max(points, key=lambda r: (r["validation_accuracy"], -cfg.p_fake.index(r["p_fake"])))
    summary = {"grid": points, "best_p_fake": best["p_fake"], "best_validation_accuracy": best["validation_accuracy"],
               "best_test_accuracy": best["test_accuracy"]}
    run.jsonl("metrics.jsonl", rows)
    run.csv("curves.csv", rows)
    run.csv("sweep.csv", points)
    run.json("summary.json", summary)
    return summary


def _read_features(path, run: Run) -> np.ndarray:
    """Numeric CSV; a header row is skipped and a column named ``label`` is dropped."""
    run.input(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header = None
    try:
        [float(c) for c in rows[0]]
    except ValueError:
        header, rows = rows[0], rows[1:]
    keep = [i for i, h in enumerate(header or rows[0]) if header is None or h != "label"]
    try:
        X = np.array([[float(r[i]) for i in keep] for r in rows], dtype=np.float64)
    except (ValueError, IndexError) as exc:
        raise DataError(f"{path}: malformed row ({exc})") from None
    if not np.all(np.isfinite(X)):
        raise DataError(f"{path}: non-finite feature value")
    return X


def cmd_score(cfg: ScoreConfig, run: Run) -> dict:
    if not cfg.datasets:
        raise ConfigError("score: datasets is empty")
    if cfg.replicates < 1:
        raise ConfigError("replicates must be >= 1")
    train, _, test = load_data(cfg.data, run)
    test = _require_test(test, "score")
    teacher = load_model(cfg.teacher, run)
    classifier = load_model(cfg.classifier, run) if cfg.classifier else None
    synth = {}
    for name, ds in sorted(cfg.datasets.items()):
        if ds.kind == "real":
            synth[name] = train
        elif ds.kind == "csv":
            synth[name] = _read_features(ds.path, run)
        elif ds.kind == "gan":
            gan = load_gan(ds.path, run)
            synth[name] = generate(gan, ds.m or train.n, [cfg.seed, 11]).features
        else:
            raise ConfigError(f"datasets.{name}.kind must be real, csv or gan")
        X = synth[name].features if isinstance(synth[name], Dataset) else synth[name]
        if X.shape[1] != train.d:
            raise DataError(f"dataset {name!r} has {X.shape[1]} features, expected {train.d}")
    seeds = list(range(cfg.seed, cfg.seed + cfg.replicates))
    reports = tsc_scores(synth, train, teacher, cfg.student, test, seeds)
    ref_hash = hashlib.sha256(np.ascontiguousarray(train.features, dtype="<f8").tobytes()).hexdigest()
    table = []
    for name, rep in reports.items():
        doc = rep.to_dict()
        doc.update(dataset=name, reference_sha256=ref_hash, student_template=asdict(cfg.student))
        row = {"dataset": name, "tsc_score": rep.score, "stderr": rep.stderr, "acc_synth": rep.acc_synth,
               "below_baseline": rep.below_baseline}
        if classifier is not None:
            X = synth[name].features if isinstance(synth[name], Dataset) else synth[name]
            conf = confidence_score(X, classifier, Path(cfg.classifier).name)
            doc["confidence"] = conf.to_dict()
            row["confidence_score"] = conf.score
        run.json(f"score_{name}.json", doc)
        table.append(row)
    run.csv("comparison.csv", table)
    out = {"acc_real": next(iter(reports.values())).acc_real, "acc_mode": next(iter(reports.values())).acc_mode,
           "seeds": seeds, "datasets": table}
    run.json("comparison.json", out)
    return out


def cmd_benchmark(cfg: BenchmarkConfig, run: Run) -> dict:
    if cfg.n_queries < 1:
        raise ConfigError("n_queries must be >= 1")
    _, _, test = load_data(cfg.data, run)
    test = _require_test(test, "benchmark")
    teacher = load_model(cfg.teacher, run)
    student = load_model(cfg.student, run)
    X = np.resize(test.features, (cfg.n_queries, test.d))
    res = compare_throughput(teacher, student, X, cfg.repeats)
    t_size, s_size = _model_size(teacher), _model_size(student)
    key = "nodes" if "nodes" in t_size else "parameters"
    skey = "nodes" if "nodes" in s_size else "parameters"
    res.update(n_queries=cfg.n_queries, repeats=cfg.repeats, teacher_size=t_size, student_size=s_size,
               size_ratio=t_size[key] / s_size[skey])
    run.json("benchmark.json", res, timing=True)
    return res


COMMANDS = {
    "train-teacher": (TrainTeacherConfig, cmd_train_teacher),
    "train-gan": (TrainGANConfig, cmd_train_gan),
    "generate": (GenerateConfig, cmd_generate),
    "munge": (MungeConfigSpec, cmd_munge),
    "compress": (CompressConfig, cmd_compress),
    "score": (ScoreConfig, cmd_score),
    "benchmark": (BenchmarkConfig, cmd_benchmark),
    "sweep": (SweepConfig, cmd_sweep),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON experiment config")
    common.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    common.add_argument("--out", default="out", help="output directory")
    parser = argparse.ArgumentParser(prog="gantsc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def _fail(kind: str, message: str, command: str | None, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message, "command": command}, sort_keys=True) + "\n")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if exc.code == 0:
            return 0
        return _fail("UsageError", "invalid command line", None, 2)
    cls, fn = COMMANDS[args.command]
    try:
        cfg = load_config(cls, args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be non-negative")
            cfg = replace(cfg, seed=args.seed)
        run = Run(args.command, Path(args.out), args.config, cfg, cfg.seed)
        fn(cfg, run)
        run.manifest()
    except ConfigError as exc:
        return _fail("ConfigError", str(exc), args.command, 2)
    except (DataError, CompressionError, DegenerateScore, container.ContainerError, ValueError, KeyError,
            FileNotFoundError) as exc:
        return _fail(type(exc).__name__, str(exc), args.command, 1)
    except Exception as exc:  # noqa: BLE001 - surface anything else as structured output too
        return _fail(type(exc).__name__, str(exc), args.command, 1)
    sys.stdout.write(dumps({"command": args.command, "out": str(run.out),
                            "outputs": sorted(set(run.outputs)) + ["manifest.json"]}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
