from .clean import DEFAULT_SYNTHETIC_KEYWORDS, clean_locality, detect_synthetic, normalize_query
from .geocoder import (
    ArcGISProvider,
    GeocodeCache,
    GeocodeResult,
    GeocoderError,
    HTTPProvider,
    MockProvider,
    NominatimProvider,
    PhotonProvider,
    Provider,
    RateLimiter,
    geocode,
    partial_match_geocode,
    providers_from_config,
    valid_coordinates,
)
from .ingest import (
    FAILED,
    FULL_MATCH,
    GEOCODE_STATUSES,
    MANIFEST_COLUMNS,
    PARTIAL_MATCH,
    SKIPPED_SYNTHETIC,
    IngestStats,
    SampleInput,
    SampleRecord,
    build_manifest,
    manifest_to_csv,
    read_manifest,
    scan_spectra_dir,
    write_manifest,
)
from .iso import bundled_iso_mapping, iso_a3
from .spatial import Country, CountryPolygonSet, assign_country, distance_to_multipolygon, point_in_polygon

__all__ = [name for name in dir() if not name.startswith("_")]
