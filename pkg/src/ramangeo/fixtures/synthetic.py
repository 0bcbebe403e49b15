"""Deterministic synthetic spectra for tests, demos, and the acceptance suite.

Each class has its own arrangement of Gaussian peaks (positions, widths, and
relative heights). Peak positions jitter per sample, so a classifier has to
recognise the peak shapes and spacings rather than memorise exact bins.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

# (center fraction of the window, width in grid bins, relative height)
CLASS_PEAKS = (
    ((0.20, 3.0, 1.0), (0.55, 3.0, 0.5)),
    ((0.35, 9.0, 1.0),),
    ((0.30, 4.0, 0.6), (0.45, 4.0, 1.0), (0.70, 4.0, 0.6)),
    ((0.60, 22.0, 1.0), (0.15, 2.0, 0.4)),
)
COUNTRIES = ("Testland", "Otherland", "Farland", "Isleland")


def peak_profile(grid_frac: np.ndarray, G: int, peaks, rng: np.random.Generator, jitter_bins: float) -> np.ndarray:
    y = np.zeros_like(grid_frac)
    for center, width, height in peaks:
        c = center + rng.uniform(-jitter_bins, jitter_bins) / G
        h = height * rng.uniform(0.8, 1.2)
        w = width * rng.uniform(0.9, 1.1) / G
        y += h * np.exp(-0.5 * ((grid_frac - c) / w) ** 2)
    return y


def gaussian_peak_dataset(
    n_samples: int = 128,
    grid_size: int = 512,
    n_classes: int = 4,
    seed: int = 0,
    noise: float = 0.02,
    jitter_bins: float = 6.0,
) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Balanced, min-max normalized spectra ``X (n, G)`` with labels ``y``."""
    if not 1 < n_classes <= len(CLASS_PEAKS):
        raise ValueError(f"n_classes must be in [2, {len(CLASS_PEAKS)}]")
    rng = np.random.default_rng(seed)
    frac = np.linspace(0.0, 1.0, grid_size)
    y = np.arange(n_samples) % n_classes
    X = np.empty((n_samples, grid_size))
    for i, k in enumerate(y):
        row = peak_profile(frac, grid_size, CLASS_PEAKS[k], rng, jitter_bins)
        row += 0.05 * rng.uniform() + noise * rng.standard_normal(grid_size)
        X[i] = (row - row.min()) / np.ptp(row)
    return X, y, list(COUNTRIES[:n_classes])


@dataclass
class MicroCorpus:
    root: Path
    spectra_dir: Path
    geocoder_table: Path
    polygons: Path
    config: Path


def _square(x0, y0, x1, y1):
    return [[x0, y0], [x1, y0], [x1, y1], [x0, y1], [x0, y0]]


# lon/lat boxes for the toy countries; geocodes land at the box centers.
# Their codes come from the ISO 3166 user-assigned X.. range.
_ISO = {"Testland": "XTL", "Otherland": "XOL", "Farland": "XFL", "Isleland": "XIL"}
_BOXES = {
    "Testland": (10.0, 10.0, 20.0, 20.0),
    "Otherland": (30.0, 10.0, 40.0, 20.0),
    "Farland": (-60.0, -30.0, -50.0, -20.0),
    "Isleland": (100.0, 40.0, 104.0, 44.0),
}
_MINES = ("North Pit", "Old Adit", "Ridge Quarry", "Creek Claim")


def write_micro_corpus(root, per_class: int = 16, grid_points: int = 400, seed: int = 7) -> MicroCorpus:
    """Write a small raw corpus with locality metadata plus its geodata.

    Besides ``4 * per_class`` natural samples it contains one synthetic
    sample, one sample whose locality cannot be geocoded, and one file
    lacking a mineral name.
    """
    root = Path(root)
    spec_dir = root / "spectra"
    spec_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    table: dict[str, list[float]] = {}
    features = []
    for name, (x0, y0, x1, y1) in _BOXES.items():
        table[name.lower()] = [(y0 + y1) / 2, (x0 + x1) / 2]
        features.append(
            {
                "type": "Feature",
                "properties": {"ADMIN": name, "ISO_A3": _ISO[name]},
                "geometry": {"type": "Polygon", "coordinates": [_square(x0, y0, x1, y1)]},
            }
        )
    # one locality resolves at full depth, the others only after dropping the mine name
    table["north pit, testland"] = [12.5, 12.5]

    def write(fname, names, locality, peaks, lo, hi):
        wn = np.linspace(lo, hi, grid_points) + rng.uniform(-0.2, 0.2, grid_points) * (hi - lo) / grid_points
        wn = np.sort(wn)
        frac = (wn - 100.0) / 1100.0
        inten = 1000 * peak_profile(frac, 512, peaks, rng, 6.0) + 50 + 10 * rng.standard_normal(grid_points)
        lines = [f"##NAMES={names}", f"##RRUFFID={fname}", f"##LOCALITY={locality}"]
        lines += [f"{w:.4f}, {v:.4f}" for w, v in zip(wn, inten)]
        lines.append("##END=")
        (spec_dir / f"{fname}.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")

    minerals = ("Quartz", "Calcite", "Beryl", "Zircon")
    for k, country in enumerate(COUNTRIES):
        for j in range(per_class):
            mine = _MINES[j % len(_MINES)]
            lo = 100.0 + rng.uniform(0, 20)
            hi = 1200.0 - rng.uniform(0, 20)
            write(f"R{k}{j:03d}", minerals[(k + j) % 4], f"{mine} (sample {j}), {country}", CLASS_PEAKS[k], lo, hi)
    write("RSYN01", "Ruby (synthetic)", "Laboratory", CLASS_PEAKS[0], 100.0, 1200.0)
    write("RLOST1", "Quartz", "Atlantis", CLASS_PEAKS[1], 100.0, 1200.0)
    write("RNONAME", "", "Testland", CLASS_PEAKS[2], 100.0, 1200.0)

    table_path = root / "geocoder_table.json"
    table_path.write_text(json.dumps(table, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    poly_path = root / "countries.geojson"
    poly_path.write_text(json.dumps({"type": "FeatureCollection", "features": features}, indent=1) + "\n")
    config = {
        "paths": {
            "spectra_dir": "spectra",
            "polygons": "countries.geojson",
            "cache": "geocode_cache.jsonl",
        },
        "ingest": {"providers": [{"name": "mock", "table_path": "geocoder_table.json"}]},
        "spectra": {"grid_size": 512},
        "model": {"depths": [1, 1, 1, 1], "dims": [8, 16, 32, 64], "drop_path_max": 0.0},
        "train": {
            "epochs": 60,
            "batch_size": 16,
            "folds": 2,
            "dtype": "float32",
        },
    }
    cfg_path = root / "config.json"
    cfg_path.write_text(json.dumps(config, indent=2) + "\n", encoding="utf-8")
    return MicroCorpus(root, spec_dir, table_path, poly_path, cfg_path)
