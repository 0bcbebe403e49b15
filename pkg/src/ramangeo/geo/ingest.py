"""Manifest construction: clean -> synthetic check -> geocode -> spatial join."""

from __future__ import annotations

import csv
import dataclasses
import io
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from ..spectra import SpectrumError, read_spectrum
from .clean import DEFAULT_SYNTHETIC_KEYWORDS, clean_locality, detect_synthetic
from .geocoder import GeocodeCache, Provider, geocode, partial_match_geocode
from .spatial import CountryPolygonSet, assign_country

log = logging.getLogger(__name__)

FULL_MATCH = "full_match"
PARTIAL_MATCH = "partial_match"
FAILED = "failed"
SKIPPED_SYNTHETIC = "skipped_synthetic"
GEOCODE_STATUSES = (FULL_MATCH, PARTIAL_MATCH, FAILED, SKIPPED_SYNTHETIC)

MANIFEST_COLUMNS = (
    "id",
    "mineral_name",
    "locality_raw",
    "locality_clean",
    "lat",
    "lon",
    "country",
    "is_synthetic",
    "geocode_status",
    "spectrum_path",
)


@dataclass
class SampleInput:
    """Metadata read from one spectrum file, before any cleanup."""

    id: str
    mineral_name: str
    locality: str
    spectrum_path: str


@dataclass
class SampleRecord:
    id: str
    mineral_name: str
    locality_raw: str
    locality_clean: str
    latitude: float | None
    longitude: float | None
    country: str | None
    is_synthetic: bool
    geocode_status: str
    spectrum_path: str

    def __post_init__(self):
        if self.latitude is not None and not -90 <= self.latitude <= 90:
            raise ValueError(f"{self.id}: latitude {self.latitude} out of range")
        if self.longitude is not None and not -180 <= self.longitude <= 180:
            raise ValueError(f"{self.id}: longitude {self.longitude} out of range")
        if self.country is not None and self.latitude is None:
            raise ValueError(f"{self.id}: country without coordinates")
        if self.geocode_status not in GEOCODE_STATUSES:
            raise ValueError(f"{self.id}: unknown geocode status {self.geocode_status!r}")
        has_coords = self.latitude is not None and self.longitude is not None
        if has_coords != (self.geocode_status in (FULL_MATCH, PARTIAL_MATCH)):
            raise ValueError(f"{self.id}: coordinates inconsistent with status {self.geocode_status}")
        if not self.mineral_name:
            raise ValueError(f"{self.id}: empty mineral name")


@dataclass
class IngestStats:
    total: int = 0
    natural: int = 0
    synthetic: int = 0
    geocoded: int = 0
    full_match: int = 0
    partial_match: int = 0
    failed: int = 0
    no_country: int = 0
    dropped_missing_name: int = 0

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def sample_from_spectrum_file(path: Path, root: Path | None = None) -> SampleInput:
    raw = read_spectrum(path)
    meta = {k.upper(): v for k, v in raw.metadata.items()}
    rel = path.relative_to(root).as_posix() if root is not None else path.as_posix()
    sid = meta.get("RRUFFID") or path.stem
    return SampleInput(sid, meta.get("NAMES", "").strip(), meta.get("LOCALITY", ""), rel)


def scan_spectra_dir(root, pattern: str = "*.txt") -> tuple[list[SampleInput], list[dict]]:
    """Read metadata from every spectrum file under ``root`` in sorted path order."""
    root = Path(root)
    inputs, unreadable = [], []
    for path in sorted(root.rglob(pattern)):
        try:
            inputs.append(sample_from_spectrum_file(path, root))
        except (SpectrumError, OSError) as exc:
            unreadable.append({"path": path.relative_to(root).as_posix(), "reason": str(exc)})
    return inputs, unreadable


def build_manifest(
    samples: Iterable[SampleInput],
    countries: CountryPolygonSet | None,
    providers: Sequence[Provider],
    cache: GeocodeCache | None = None,
    synthetic_keywords: Sequence[str] = DEFAULT_SYNTHETIC_KEYWORDS,
    coastal_tolerance: float = 0.1,
) -> tuple[list[SampleRecord], IngestStats]:
    """Geocode and label every sample with a mineral name.

    A provider answer only counts as valid when it falls within range and,
    if polygons are given, can be assigned to a country.
    """
    stats = IngestStats()
    rows: list[SampleRecord] = []

    def country_of(lat, lon):
        return assign_country((lon, lat), countries, coastal_tolerance) if countries is not None else None

    validate = (lambda lat, lon: country_of(lat, lon) is not None) if countries is not None else None

    for s in samples:
        stats.total += 1
        name = (s.mineral_name or "").strip()
        if not name:
            stats.dropped_missing_name += 1
            continue
        clean = clean_locality(s.locality or "")
        synthetic = detect_synthetic(s.locality, name, synthetic_keywords)
        lat = lon = country = None
        if synthetic:
            stats.synthetic += 1
            status = SKIPPED_SYNTHETIC
        else:
            stats.natural += 1
            hit = geocode(clean, providers, cache, validate) if clean else None
            status = FULL_MATCH
            if hit is None and clean:
                hit = partial_match_geocode(clean, providers, cache, validate)
                status = PARTIAL_MATCH
            if hit is None:
                status = FAILED
                stats.failed += 1
            else:
                lat, lon = hit.lat, hit.lon
                country = country_of(lat, lon)
                stats.geocoded += 1
                if status == FULL_MATCH:
                    stats.full_match += 1
                else:
                    stats.partial_match += 1
                if country is None:
                    stats.no_country += 1
        rows.append(SampleRecord(s.id, name, s.locality or "", clean, lat, lon, country, synthetic, status, s.spectrum_path))
    return rows, stats


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def manifest_to_csv(rows: Iterable[SampleRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MANIFEST_COLUMNS)
    for r in rows:
        w.writerow(
            [
                _fmt(r.id),
                _fmt(r.mineral_name),
                _fmt(r.locality_raw),
                _fmt(r.locality_clean),
                _fmt(r.latitude),
                _fmt(r.longitude),
                _fmt(r.country),
                _fmt(r.is_synthetic),
                _fmt(r.geocode_status),
                _fmt(r.spectrum_path),
            ]
        )
    return buf.getvalue()


def write_manifest(rows: Iterable[SampleRecord], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(manifest_to_csv(rows), encoding="utf-8", newline="")
    return path


def read_manifest(path) -> list[SampleRecord]:
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(MANIFEST_COLUMNS) - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"manifest {path} lacks columns {sorted(missing)}")
        for row in reader:
            out.append(
                SampleRecord(
                    id=row["id"],
                    mineral_name=row["mineral_name"],
                    locality_raw=row["locality_raw"],
                    locality_clean=row["locality_clean"],
                    latitude=float(row["lat"]) if row["lat"] else None,
                    longitude=float(row["lon"]) if row["lon"] else None,
                    country=row["country"] or None,
                    is_synthetic=row["is_synthetic"].lower() == "true",
                    geocode_status=row["geocode_status"],
                    spectrum_path=row["spectrum_path"],
                )
            )
    return out
