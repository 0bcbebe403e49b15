"""Command-line entry point: ``ramangeo <subcommand> [options]``.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 empty result,
5 training diverged (non-finite loss).
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import logging
import os
import sys
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .eval import ReportBundle, dataset_stats, distribution_table, emit_report, emit_stats, load_report
from .geo import (
    DEFAULT_SYNTHETIC_KEYWORDS,
    CountryPolygonSet,
    GeocodeCache,
    build_manifest,
    providers_from_config,
    read_manifest,
    scan_spectra_dir,
    write_manifest,
)
from .model import CheckpointError, ConfigError, ModelConfig, load_checkpoint, predict_proba, save_checkpoint
from .spectra import (
    SpectralWindow,
    SpectrumError,
    load_dataset,
    process_corpus,
    read_spectrum,
    resample_to_grid,
    save_dataset,
)
from .train import (
    EmptyDatasetError,
    TrainConfig,
    TrainingDivergedError,
    cross_validate,
    filter_rare_classes,
    history_jsonl,
    report_for,
    stratified_split,
    train,
)

log = logging.getLogger("ramangeo")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_EMPTY, EXIT_DIVERGED = 0, 2, 3, 4, 5

DEFAULT_CONFIG: dict = {
    "seed": 0,
    "paths": {"spectra_dir": None, "polygons": None, "cache": None},
    "ingest": {
        "providers": [],
        "synthetic_keywords": list(DEFAULT_SYNTHETIC_KEYWORDS),
        "coastal_tolerance": 0.1,
        "file_pattern": "*.txt",
    },
    "spectra": {"grid_size": 4096, "window": None},
    "model": {},
    "train": {},
}


class CLIError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


@dataclass
class RunConfig:
    data: dict
    base_dir: Path
    out_dir: Path

    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    @property
    def config_hash(self) -> str:
        canon = json.dumps(self.data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def path(self, key: str, required: bool = True) -> Path | None:
        value = self.data["paths"].get(key)
        if value is None:
            if required:
                raise CLIError(EXIT_CONFIG, f"config is missing paths.{key}")
            return None
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p

    def train_config(self, **overrides) -> TrainConfig:
        d = {"seed": self.seed, **self.data["train"], **{k: v for k, v in overrides.items() if v is not None}}
        try:
            cfg = TrainConfig.from_dict(d)
            cfg.validate()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"train section: {exc}") from exc
        return cfg

    def model_config(self, num_classes: int, input_length: int) -> ModelConfig:
        d = dict(self.data["model"])
        for key, value in (("num_classes", num_classes), ("input_length", input_length)):
            if key in d and d[key] != value:
                raise ConfigError(f"model.{key}={d[key]} conflicts with the dataset ({value})")
            d[key] = value
        try:
            cfg = ModelConfig.from_dict(d)
            cfg.validate()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"model section: {exc}") from exc
        return cfg


def load_run_config(path: str | None, seed: int | None, out: str | None) -> RunConfig:
    data = copy.deepcopy(DEFAULT_CONFIG)
    base = Path.cwd()
    if path is not None:
        p = Path(path)
        try:
            user = json.loads(p.read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise CLIError(EXIT_IO, f"config file not found: {p}") from exc
        except json.JSONDecodeError as exc:
            raise CLIError(EXIT_CONFIG, f"config file {p} is not valid JSON: {exc}") from exc
        if not isinstance(user, dict):
            raise CLIError(EXIT_CONFIG, f"config file {p} must hold a JSON object")
        unknown = set(user) - set(DEFAULT_CONFIG)
        if unknown:
            raise CLIError(EXIT_CONFIG, f"unknown config sections: {sorted(unknown)}")
        data = _merge(data, user)
        base = p.resolve().parent
    if seed is not None:
        data["seed"] = seed
    return RunConfig(data, base, Path(out) if out else Path.cwd() / "ramangeo_out")


@contextmanager
def locked(out_dir: Path):
    """Hold an exclusive lock file for the duration of a run."""
    out_dir.mkdir(parents=True, exist_ok=True)
    lock = out_dir / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError as exc:
        raise CLIError(EXIT_IO, f"output directory {out_dir} is locked by another run ({lock})") from exc
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        lock.unlink(missing_ok=True)


def _write_json(path: Path, obj) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _require_file(p: Path, what: str) -> Path:
    if not p.exists():
        raise CLIError(EXIT_IO, f"{what} not found: {p}")
    return p


# ---- subcommands -----------------------------------------------------------


def cmd_ingest(rc: RunConfig, args) -> int:
    spectra_dir = _require_file(rc.path("spectra_dir"), "spectra directory")
    polygons = _require_file(rc.path("polygons"), "polygon file")
    ing = rc.data["ingest"]
    if not ing["providers"]:
        raise CLIError(EXIT_CONFIG, "ingest.providers is empty; configure at least one geocoder")
    try:
        providers = providers_from_config(ing["providers"], base_dir=rc.base_dir)
    except ValueError as exc:
        raise CLIError(EXIT_CONFIG, str(exc)) from exc
    countries = CountryPolygonSet.from_geojson(polygons)
    cache_path = rc.path("cache", required=False)
    cache = GeocodeCache(cache_path)
    samples, unreadable = scan_spectra_dir(spectra_dir, ing["file_pattern"])
    rows, stats = build_manifest(
        samples, countries, providers, cache, ing["synthetic_keywords"], float(ing["coastal_tolerance"])
    )
    if not rows:
        raise CLIError(EXIT_EMPTY, f"no usable samples under {spectra_dir}")
    write_manifest(rows, rc.out_dir / "manifest.csv")
    _write_json(
        rc.out_dir / "ingest_stats.json",
        {"config_hash": rc.config_hash, "stats": stats.to_dict(), "unreadable": unreadable},
    )
    log.info("ingest: %s", stats.to_dict())
    return EXIT_OK


def _window_override(args, rc: RunConfig) -> SpectralWindow | None:
    if getattr(args, "window", None):
        return SpectralWindow(*args.window)
    w = rc.data["spectra"].get("window")
    return SpectralWindow(*w) if w else None


def cmd_preprocess(rc: RunConfig, args) -> int:
    manifest = _require_file(Path(args.manifest) if args.manifest else rc.out_dir / "manifest.csv", "manifest")
    spectra_dir = rc.path("spectra_dir")
    grid = int(args.grid_size or rc.data["spectra"]["grid_size"])
    rows = [r for r in read_manifest(manifest) if not r.is_synthetic and r.country]
    spectra, skipped, countries = [], [], {}
    for r in rows:
        try:
            spectra.append((r.id, read_spectrum(spectra_dir / r.spectrum_path)))
            countries[r.id] = r.country
        except (SpectrumError, OSError) as exc:
            skipped.append({"id": r.id, "reason": type(exc).__name__, "detail": str(exc)})
    if not spectra:
        raise CLIError(EXIT_EMPTY, "no processable samples in the manifest")
    ds, bad = process_corpus(spectra, grid, _window_override(args, rc))
    skipped += bad
    if not ds.ids:
        raise CLIError(EXIT_EMPTY, "every spectrum was skipped during preprocessing")
    ds.labels = [countries[i] for i in ds.ids]
    ds.extra = {"config_hash": rc.config_hash}
    save_dataset(ds, rc.out_dir / "dataset.npy")
    _write_json(rc.out_dir / "preprocess_skipped.json", skipped)
    log.info("preprocess: %d spectra on a %d-point grid over [%g, %g], %d skipped",
             len(ds.ids), grid, ds.window.w_min, ds.window.w_max, len(skipped))
    return EXIT_OK


def _training_data(rc: RunConfig, args):
    path = _require_file(Path(args.dataset) if args.dataset else rc.out_dir / "dataset.npy", "dataset")
    ds = load_dataset(path)
    if not ds.labels:
        raise CLIError(EXIT_CONFIG, f"dataset {path} has no labels")
    cfg = rc.train_config(epochs=args.epochs, folds=getattr(args, "folds", None))
    try:
        keep, removed = filter_rare_classes(range(len(ds.ids)), cfg.min_class_count, key=lambda i: ds.labels[i])
    except EmptyDatasetError as exc:
        raise CLIError(EXIT_EMPTY, str(exc)) from exc
    if removed:
        log.info("dropped rare classes: %s", removed)
    keep = np.asarray(keep)
    names = [ds.labels[i] for i in keep]
    labels = sorted(set(names))
    if len(labels) < 2:
        raise CLIError(EXIT_EMPTY, "need at least two classes with enough samples to train")
    y = np.array([labels.index(n) for n in names])
    model_cfg = rc.model_config(len(labels), ds.grid_size)
    return ds, ds.X[keep].astype(np.float64), y, labels, names, model_cfg, cfg, removed


def _checkpoint_meta(rc: RunConfig, ds, mode: str, fold=None) -> dict:
    return {
        "config_hash": rc.config_hash,
        "mode": mode,
        "fold": fold,
        "grid_size": ds.grid_size,
        "window": [ds.window.w_min, ds.window.w_max],
    }


def _iso_overrides(rc: RunConfig) -> dict[str, str]:
    """ISO codes carried by the configured polygon file, if there is one."""
    p = rc.path("polygons", required=False)
    if p is None or not p.exists():
        return {}
    return CountryPolygonSet.from_geojson(p).iso_codes()


def _dataset_stats_or_none(rc: RunConfig):
    manifest = rc.out_dir / "manifest.csv"
    return dataset_stats(read_manifest(manifest)) if manifest.exists() else None


def _diverged(run_dir: Path, exc: TrainingDivergedError) -> CLIError:
    path = _write_json(run_dir / "diverged.json", exc.diagnostics())
    return CLIError(EXIT_DIVERGED, f"{exc}; diagnostics in {path}")


def cmd_train(rc: RunConfig, args) -> int:
    ds, X, y, labels, names, model_cfg, cfg, removed = _training_data(rc, args)
    run_dir = rc.out_dir / "train"
    tr, te = stratified_split(y, cfg.holdout_fraction, cfg.seed)
    if len(te) == 0:
        raise CLIError(EXIT_EMPTY, "holdout split produced an empty test set")
    try:
        res = train(model_cfg, cfg, X[tr], y[tr], labels, validation=(X[te], y[te]))
    except TrainingDivergedError as exc:
        raise _diverged(run_dir, exc) from exc
    res.model.metadata.update(_checkpoint_meta(rc, ds, "holdout"))
    save_checkpoint(res.model, run_dir / "model.cnx")
    (run_dir / "history.jsonl").write_text(history_jsonl(res.history), encoding="utf-8")
    report = report_for(res.model, X[te], y[te])
    bundle = ReportBundle(
        folds=[report],
        stats=_dataset_stats_or_none(rc),
        distribution=distribution_table(names),
        provenance={"config_hash": rc.config_hash, "mode": "holdout", "removed_rare": removed},
    )
    emit_report(bundle, run_dir, iso_overrides=_iso_overrides(rc))
    log.info("holdout accuracy %.4f on %d samples", report.accuracy, report.total)
    return EXIT_OK


def cmd_crossval(rc: RunConfig, args) -> int:
    ds, X, y, labels, names, model_cfg, cfg, removed = _training_data(rc, args)
    run_dir = rc.out_dir / "crossval"
    try:
        cv = cross_validate(model_cfg, cfg, X, y, labels)
    except TrainingDivergedError as exc:
        raise _diverged(run_dir, exc) from exc
    history = []
    for k, res in enumerate(cv.results):
        res.model.metadata.update(_checkpoint_meta(rc, ds, "crossval", k))
        save_checkpoint(res.model, run_dir / f"fold_{k}.cnx")
        history += res.history
    (run_dir / "history.jsonl").write_text(history_jsonl(history), encoding="utf-8")
    bundle = ReportBundle(
        folds=cv.reports,
        aggregate=cv.aggregate,
        stats=_dataset_stats_or_none(rc),
        distribution=distribution_table(names),
        provenance={"config_hash": rc.config_hash, "mode": "crossval", "removed_rare": removed},
    )
    emit_report(bundle, run_dir, iso_overrides=_iso_overrides(rc))
    log.info("cross-validation mean accuracy %.4f over %d folds", cv.mean_accuracy, cfg.folds)
    return EXIT_OK


def cmd_predict(rc: RunConfig, args) -> int:
    model = load_checkpoint(_require_file(Path(args.checkpoint), "checkpoint"))
    meta = model.metadata
    if "window" not in meta or "grid_size" not in meta:
        raise CLIError(EXIT_CONFIG, "checkpoint lacks window/grid metadata")
    window, grid = SpectralWindow(*meta["window"]), int(meta["grid_size"])
    want_window = _window_override(args, rc)
    want_grid = args.grid_size or (rc.data["spectra"]["grid_size"] if args.config else None)
    if want_window is not None and want_window != window:
        raise CLIError(EXIT_CONFIG, f"window mismatch: checkpoint {meta['window']} vs requested "
                                    f"[{want_window.w_min}, {want_window.w_max}]")
    if want_grid is not None and int(want_grid) != grid:
        raise CLIError(EXIT_CONFIG, f"grid mismatch: checkpoint {grid} vs requested {want_grid}")
    k = args.top_k
    if k > len(model.labels):
        log.warning("top-k %d exceeds %d classes; clamping", k, len(model.labels))
        k = len(model.labels)
    out = []
    for f in args.files:
        try:
            raw = read_spectrum(Path(f))
            values = resample_to_grid(raw, window, grid, str(f)).values
        except FileNotFoundError as exc:
            raise CLIError(EXIT_IO, f"spectrum file not found: {f}") from exc
        except SpectrumError as exc:
            raise CLIError(EXIT_IO, f"cannot process {f}: {exc}") from exc
        probs = predict_proba(model, values[None, None, :])[0]
        order = np.argsort(-probs, kind="stable")[:k]
        out.append({"file": str(f), "top": [{"label": model.labels[i], "probability": float(probs[i])} for i in order]})
    json.dump({"checkpoint": str(args.checkpoint), "predictions": out}, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return EXIT_OK


def cmd_report(rc: RunConfig, args) -> int:
    stats = _dataset_stats_or_none(rc)
    target = rc.out_dir / "report"
    if args.run:
        bundle = load_report(_require_file(Path(args.run) / "report.json", "run report"))
        if stats is not None:
            bundle.stats = stats
        emit_report(bundle, target, svg=not args.no_svg, iso_overrides=_iso_overrides(rc))
    elif stats is not None:
        emit_stats(stats, target, _iso_overrides(rc), provenance={"config_hash": rc.config_hash})
    else:
        raise CLIError(EXIT_EMPTY, f"nothing to report: no manifest in {rc.out_dir} and no --run given")
    log.info("report written to %s", target)
    return EXIT_OK


# ---- argument parsing ------------------------------------------------------


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", metavar="PATH", default=d, help="JSON run configuration")
    parser.add_argument("--seed", type=int, default=d, help="global seed (overrides the config)")
    parser.add_argument("--out", metavar="DIR", default=d, help="output directory (default ./ramangeo_out)")
    parser.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS if suppress else False,
                        help="only log warnings and errors")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ramangeo", description="Raman spectra country-of-origin pipeline")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_flags(p, suppress=False)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        sp = sub.add_parser(name, help=help_text)
        _global_flags(sp, suppress=True)
        return sp

    add("ingest", "geocode localities and build manifest.csv")
    sp = add("preprocess", "resample spectra onto a common grid")
    sp.add_argument("--manifest", help="manifest path (default OUT/manifest.csv)")
    sp.add_argument("--grid-size", type=int, help="points per resampled spectrum (overrides spectra.grid_size)")
    sp.add_argument("--window", type=float, nargs=2, metavar=("MIN", "MAX"), help="fixed wavenumber window")
    for name, text in (("train", "80/20 holdout training"), ("crossval", "stratified k-fold cross-validation")):
        sp = add(name, text)
        sp.add_argument("--dataset", help="dataset path (default OUT/dataset.npy)")
        sp.add_argument("--epochs", type=int, help="overrides train.epochs")
        if name == "crossval":
            sp.add_argument("--folds", type=int, help="overrides train.folds")
    sp = add("predict", "rank countries for spectrum files")
    sp.add_argument("checkpoint", help=".cnx checkpoint written by train or crossval")
    sp.add_argument("files", nargs="+", help="raw spectrum text files")
    sp.add_argument("--top-k", type=int, default=5, help="countries to list per file (default 5)")
    sp.add_argument("--grid-size", type=int, help="expected grid size; must match the checkpoint")
    sp.add_argument("--window", type=float, nargs=2, metavar=("MIN", "MAX"), help="expected wavenumber window")
    sp = add("report", "dataset statistics and plot tables")
    sp.add_argument("--run", help="train/ or crossval/ directory whose report.json to re-render")
    sp.add_argument("--no-svg", action="store_true")
    return p


COMMANDS = {
    "ingest": cmd_ingest,
    "preprocess": cmd_preprocess,
    "train": cmd_train,
    "crossval": cmd_crossval,
    "predict": cmd_predict,
    "report": cmd_report,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )
    try:
        rc = load_run_config(args.config, args.seed, args.out)
        if args.command == "predict":
            return cmd_predict(rc, args)
        with locked(rc.out_dir):
            return COMMANDS[args.command](rc, args)
    except CLIError as exc:
        log.error("%s", exc)
        return exc.code
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except TrainingDivergedError as exc:
        log.error("%s", exc)
        return EXIT_DIVERGED
    except EmptyDatasetError as exc:
        log.error("%s", exc)
        return EXIT_EMPTY
    except (OSError, CheckpointError, SpectrumError) as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
