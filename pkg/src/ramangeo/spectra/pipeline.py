"""RRUFF-style spectrum parsing and fixed-grid resampling."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .spline import fit_cubic_spline


class SpectrumError(ValueError):
    """Base class for unusable spectra."""


class EmptySpectrumError(SpectrumError):
    pass


class OrderingError(SpectrumError):
    pass


class SpectrumParseError(SpectrumError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class DegenerateSpectrumError(SpectrumError):
    pass


class DisjointSupportError(SpectrumError):
    pass


@dataclass
class RawSpectrum:
    wavenumbers: np.ndarray
    intensities: np.ndarray
    metadata: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        self.wavenumbers = np.asarray(self.wavenumbers, dtype=np.float64)
        self.intensities = np.asarray(self.intensities, dtype=np.float64)
        if self.wavenumbers.shape != self.intensities.shape or self.wavenumbers.ndim != 1:
            raise SpectrumError("wavenumbers and intensities must be equal-length 1-D arrays")

    def validate(self) -> None:
        if len(self.wavenumbers) < 4:
            raise SpectrumError(f"spectrum has {len(self.wavenumbers)} points, need at least 4")
        if not (np.all(np.isfinite(self.wavenumbers)) and np.all(np.isfinite(self.intensities))):
            raise SpectrumError("spectrum contains non-finite values")
        if not np.all(np.diff(self.wavenumbers) > 0):
            raise OrderingError("wavenumbers are not strictly increasing")


@dataclass(frozen=True)
class SpectralWindow:
    w_min: float
    w_max: float

    def __post_init__(self):
        if not self.w_min < self.w_max:
            raise ValueError(f"window needs w_min < w_max, got ({self.w_min}, {self.w_max})")

    def grid(self, size: int) -> np.ndarray:
        i = np.arange(size, dtype=np.float64)
        return self.w_min + i * (self.w_max - self.w_min) / (size - 1)


@dataclass
class ProcessedSpectrum:
    values: np.ndarray
    source_id: str = ""


def parse_spectrum_file(data: bytes | str) -> RawSpectrum:
    """Parse ``##KEY=VALUE`` headers and ``wavenumber, intensity`` rows.

    Rows after ``##END=`` are ignored. Rows sharing a wavenumber are merged
    into one point with the mean intensity.
    """
    if isinstance(data, bytes):
        try:
            text = data.decode("utf-8-sig")
        except UnicodeDecodeError as exc:
            raise SpectrumParseError(f"not valid UTF-8: {exc}") from exc
    else:
        text = data
    meta: dict[str, str] = {}
    xs: list[float] = []
    ys: list[float] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("##"):
            key, _, value = line[2:].partition("=")
            key = key.strip()
            if key.upper() == "END":
                break
            meta[key] = value.strip()
            continue
        parts = [p.strip() for p in (line.split(",") if "," in line else line.split())]
        parts = [p for p in parts if p]
        if len(parts) != 2:
            raise SpectrumParseError(f"expected 'wavenumber, intensity', got {line!r}", lineno)
        try:
            x, y = float(parts[0]), float(parts[1])
        except ValueError:
            raise SpectrumParseError(f"malformed numeric token in {line!r}", lineno) from None
        xs.append(x)
        ys.append(y)
    if not xs:
        raise EmptySpectrumError("no data rows")
    x = np.asarray(xs)
    y = np.asarray(ys)
    ux, inverse, counts = np.unique(x, return_inverse=True, return_counts=True)
    if len(ux) != len(x):
        sums = np.zeros(len(ux))
        np.add.at(sums, inverse, y)
        # keep first-appearance order so an unsorted file is still detected
        first = np.full(len(ux), len(x))
        np.minimum.at(first, inverse, np.arange(len(x)))
        order = np.argsort(first, kind="stable")
        x, y = ux[order], (sums / counts)[order]
    if not np.all(np.diff(x) > 0):
        raise OrderingError("wavenumbers are not increasing")
    return RawSpectrum(x, y, meta)


def read_spectrum(path) -> RawSpectrum:
    return parse_spectrum_file(Path(path).read_bytes())


def global_window(corpus: Iterable[RawSpectrum]) -> SpectralWindow:
    lo, hi = np.inf, -np.inf
    n = 0
    for s in corpus:
        lo = min(lo, float(s.wavenumbers[0]))
        hi = max(hi, float(s.wavenumbers[-1]))
        n += 1
    if n == 0:
        raise ValueError("global_window of an empty corpus")
    return SpectralWindow(lo, hi)


def minmax_normalize(intensities) -> np.ndarray:
    v = np.asarray(intensities, dtype=np.float64)
    if v.size == 0:
        raise EmptySpectrumError("cannot normalize an empty array")
    lo, hi = v.min(), v.max()
    if not hi > lo:
        raise DegenerateSpectrumError(f"constant intensity {lo}; min-max range is zero")
    return (v - lo) / (hi - lo)


def resample_to_grid(raw: RawSpectrum, window: SpectralWindow, size: int, source_id: str = "") -> ProcessedSpectrum:
    """Normalize, spline-interpolate onto the window grid, zero outside support."""
    if size < 8:
        raise ValueError(f"grid size must be >= 8, got {size}")
    raw.validate()
    y = minmax_normalize(raw.intensities)
    grid = window.grid(size)
    x0, x1 = raw.wavenumbers[0], raw.wavenumbers[-1]
    inside = (grid >= x0) & (grid <= x1)
    if not inside.any():
        raise DisjointSupportError(
            f"spectrum support [{x0}, {x1}] contains no grid point of window [{window.w_min}, {window.w_max}]"
        )
    values = np.zeros(size)
    spline = fit_cubic_spline(raw.wavenumbers, y)
    values[inside] = np.clip(spline(grid[inside]), 0.0, 1.0)
    return ProcessedSpectrum(values, source_id)


@dataclass
class ProcessedDataset:
    """Matrix of processed spectra plus the grid definition and row ids."""

    X: np.ndarray
    ids: list[str]
    window: SpectralWindow
    labels: list[str] | None = None
    extra: dict = field(default_factory=dict)

    @property
    def grid_size(self) -> int:
        return int(self.X.shape[1])

    def sidecar(self) -> dict:
        return {
            "format": "ramangeo-dataset",
            "version": 1,
            "grid_size": self.grid_size,
            "window": [self.window.w_min, self.window.w_max],
            "dtype": "float32",
            "ids": self.ids,
            "labels": self.labels,
            "matrix_sha256": hashlib.sha256(np.ascontiguousarray(self.X, dtype="<f4").tobytes()).hexdigest(),
            **self.extra,
        }


def save_dataset(ds: ProcessedDataset, matrix_path) -> tuple[Path, Path]:
    """Write ``<name>.npy`` and its ``<name>.json`` sidecar."""
    matrix_path = Path(matrix_path)
    matrix_path.parent.mkdir(parents=True, exist_ok=True)
    with open(matrix_path, "wb") as fh:
        np.save(fh, np.ascontiguousarray(ds.X, dtype="<f4"), allow_pickle=False)
    side = matrix_path.with_suffix(".json")
    side.write_text(json.dumps(ds.sidecar(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return matrix_path, side


def load_dataset(matrix_path) -> ProcessedDataset:
    matrix_path = Path(matrix_path)
    meta = json.loads(matrix_path.with_suffix(".json").read_text(encoding="utf-8"))
    X = np.load(matrix_path, allow_pickle=False)
    if X.shape != (len(meta["ids"]), meta["grid_size"]):
        raise ValueError(f"dataset matrix shape {X.shape} disagrees with sidecar")
    known = {"format", "version", "grid_size", "window", "dtype", "ids", "labels", "matrix_sha256"}
    extra = {k: v for k, v in meta.items() if k not in known}
    return ProcessedDataset(X, list(meta["ids"]), SpectralWindow(*meta["window"]), meta.get("labels"), extra)


def process_corpus(
    spectra: Sequence[tuple[str, RawSpectrum]], size: int, window: SpectralWindow | None = None
) -> tuple[ProcessedDataset, list[dict]]:
    """Resample every spectrum; returns the dataset and a skip report."""
    if window is None:
        window = global_window(s for _, s in spectra)
    rows, ids, skipped = [], [], []
    for sid, raw in spectra:
        try:
            rows.append(resample_to_grid(raw, window, size, sid).values)
            ids.append(sid)
        except SpectrumError as exc:
            skipped.append({"id": sid, "reason": type(exc).__name__, "detail": str(exc)})
    X = np.asarray(rows, dtype=np.float32).reshape(len(rows), size)
    return ProcessedDataset(X, ids, window), skipped
