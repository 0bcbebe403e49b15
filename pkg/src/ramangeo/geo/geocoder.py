"""Geocoder clients, rate limiting, persistent cache, and the fallback chain."""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from .clean import normalize_query

log = logging.getLogger(__name__)

PROVIDER_NAMES = ("nominatim", "photon", "arcgis", "mock")


class GeocoderError(Exception):
    """A provider could not answer (network failure, bad response, ...)."""


@dataclass(frozen=True)
class GeocodeResult:
    lat: float
    lon: float
    provider: str
    matched_query: str
    depth: int = 0


def valid_coordinates(lat, lon) -> bool:
    try:
        lat, lon = float(lat), float(lon)
    except (TypeError, ValueError):
        return False
    return -90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0


class RateLimiter:
    """Enforces a minimum interval between successive calls to ``wait``."""

    def __init__(self, min_interval: float, clock: Callable[[], float] = time.monotonic, sleep=time.sleep):
        self.min_interval = float(min_interval)
        self.clock = clock
        self.sleep = sleep
        self._last: float | None = None
        self._lock = threading.Lock()

    def wait(self) -> None:
        with self._lock:
            now = self.clock()
            if self._last is not None:
                remaining = self._last + self.min_interval - now
                if remaining > 0:
                    self.sleep(remaining)
                    now = self.clock()
            self._last = now


class Provider:
    """Base provider: ``lookup`` returns ``(lat, lon)`` or ``None`` for no match."""

    name = "provider"

    def __init__(self, min_interval: float = 0.0, clock=time.monotonic, sleep=time.sleep):
        self.limiter = RateLimiter(min_interval, clock, sleep)
        self.calls = 0

    def lookup(self, query: str) -> tuple[float, float] | None:
        self.limiter.wait()
        self.calls += 1
        return self._lookup(query)

    def _lookup(self, query: str) -> tuple[float, float] | None:
        raise NotImplementedError


class MockProvider(Provider):
    """Answers from a fixed table keyed by normalized query; misses return None.

    A table value of ``"error"`` simulates a provider failure.
    """

    name = "mock"

    def __init__(self, table: Mapping[str, object], name: str = "mock", **kw):
        super().__init__(**kw)
        self.name = name
        self.table = {normalize_query(k): v for k, v in table.items()}
        self.queries: list[str] = []

    def _lookup(self, query):
        key = normalize_query(query)
        self.queries.append(key)
        hit = self.table.get(key)
        if hit == "error":
            raise GeocoderError(f"{self.name}: simulated failure for {query!r}")
        if hit is None:
            return None
        lat, lon = hit
        return float(lat), float(lon)


class HTTPProvider(Provider):
    endpoint = ""

    def __init__(self, endpoint: str | None = None, api_key: str | None = None, timeout: float = 10.0,
                 user_agent: str = "ramangeo/0.1", session=None, min_interval: float = 1.0, **kw):
        super().__init__(min_interval=min_interval, **kw)
        self.endpoint = endpoint or self.endpoint
        self.api_key = api_key
        self.timeout = timeout
        self.user_agent = user_agent
        if session is None:
            import requests

            session = requests.Session()
        self.session = session

    def _get(self, params: dict):
        try:
            resp = self.session.get(
                self.endpoint, params=params, timeout=self.timeout, headers={"User-Agent": self.user_agent}
            )
            resp.raise_for_status()
            return resp.json()
        except Exception as exc:  # requests raises a zoo of types; all mean "provider failed"
            raise GeocoderError(f"{self.name}: {exc}") from exc


class NominatimProvider(HTTPProvider):
    name = "nominatim"
    endpoint = "https://nominatim.openstreetmap.org/search"

    def _lookup(self, query):
        data = self._get({"q": query, "format": "json", "limit": 1})
        if not data:
            return None
        try:
            return float(data[0]["lat"]), float(data[0]["lon"])
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise GeocoderError(f"nominatim: unexpected response {data!r}") from exc


class PhotonProvider(HTTPProvider):
    name = "photon"
    endpoint = "https://photon.komoot.io/api/"

    def _lookup(self, query):
        data = self._get({"q": query, "limit": 1})
        feats = (data or {}).get("features") or []
        if not feats:
            return None
        try:
            lon, lat = feats[0]["geometry"]["coordinates"][:2]
            return float(lat), float(lon)
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise GeocoderError(f"photon: unexpected response {data!r}") from exc


class ArcGISProvider(HTTPProvider):
    name = "arcgis"
    endpoint = "https://geocode.arcgis.com/arcgis/rest/services/World/GeocodeServer/findAddressCandidates"

    def _lookup(self, query):
        params = {"SingleLine": query, "f": "json", "maxLocations": 1}
        if self.api_key:
            params["token"] = self.api_key
        data = self._get(params)
        cands = (data or {}).get("candidates") or []
        if not cands:
            return None
        try:
            loc = cands[0]["location"]
            return float(loc["y"]), float(loc["x"])
        except (KeyError, TypeError, ValueError) as exc:
            raise GeocoderError(f"arcgis: unexpected response {data!r}") from exc


_HTTP = {"nominatim": NominatimProvider, "photon": PhotonProvider, "arcgis": ArcGISProvider}


def providers_from_config(entries: Sequence[Mapping], base_dir: Path | None = None, session=None) -> list[Provider]:
    """Build the ordered provider chain.

    Each entry: ``{"name": ..., "endpoint"?, "min_interval"?, "timeout"?,
    "api_key_env"?, "table"? | "table_path"?}``; ``table*`` only for mock.
    """
    out: list[Provider] = []
    for e in entries:
        name = e["name"]
        if name not in PROVIDER_NAMES:
            raise ValueError(f"unknown geocoder provider {name!r}; expected one of {PROVIDER_NAMES}")
        if name == "mock":
            table = e.get("table")
            if table is None and e.get("table_path"):
                p = Path(e["table_path"])
                if base_dir is not None and not p.is_absolute():
                    p = base_dir / p
                table = json.loads(p.read_text(encoding="utf-8"))
            out.append(MockProvider(table or {}, name=e.get("label", "mock"), min_interval=e.get("min_interval", 0.0)))
            continue
        key = os.environ.get(e["api_key_env"]) if e.get("api_key_env") else None
        out.append(
            _HTTP[name](
                endpoint=e.get("endpoint"),
                api_key=key,
                timeout=float(e.get("timeout", 10.0)),
                min_interval=float(e.get("min_interval", 1.0)),
                session=session,
            )
        )
    return out


class GeocodeCache:
    """Normalized-query -> result map, optionally persisted as append-only JSONL.

    Negative results are stored with ``lat``/``lon``/``provider`` set to null
    so that warm reruns make no provider calls at all.
    """

    def __init__(self, path=None, clock: Callable[[], float] = time.time):
        self.path = Path(path) if path is not None else None
        self.clock = clock
        self._data: dict[str, dict] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        rec = json.loads(line)
                    except json.JSONDecodeError:
                        log.warning("skipping unreadable cache line in %s", self.path)
                        continue
                    self._data[rec["query"]] = rec

    def __contains__(self, query: str) -> bool:
        return normalize_query(query) in self._data

    def __len__(self) -> int:
        return len(self._data)

    def get(self, query: str) -> dict | None:
        return self._data.get(normalize_query(query))

    def put(self, query: str, result: GeocodeResult | None) -> None:
        key = normalize_query(query)
        rec = {
            "query": key,
            "lat": None if result is None else result.lat,
            "lon": None if result is None else result.lon,
            "provider": None if result is None else result.provider,
            "timestamp": self.clock(),
        }
        with self._lock:
            self._data[key] = rec
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(rec, sort_keys=True) + "\n")


def geocode(
    query: str,
    providers: Iterable[Provider],
    cache: GeocodeCache | None = None,
    validate: Callable[[float, float], bool] | None = None,
) -> GeocodeResult | None:
    """Try providers in order; the first valid coordinate pair wins."""
    if cache is not None:
        rec = cache.get(query)
        if rec is not None:
            if rec["lat"] is None:
                return None
            return GeocodeResult(rec["lat"], rec["lon"], rec["provider"], query)
    result = None
    for p in providers:
        try:
            hit = p.lookup(query)
        except GeocoderError as exc:
            log.info("provider %s failed on %r: %s", p.name, query, exc)
            continue
        if hit is None:
            continue
        lat, lon = hit
        if not valid_coordinates(lat, lon):
            log.info("provider %s returned out-of-range (%s, %s) for %r", p.name, lat, lon, query)
            continue
        if validate is not None and not validate(lat, lon):
            continue
        result = GeocodeResult(float(lat), float(lon), p.name, query)
        break
    if cache is not None:
        cache.put(query, result)
    return result


def partial_match_geocode(
    query: str,
    providers: Sequence[Provider],
    cache: GeocodeCache | None = None,
    validate: Callable[[float, float], bool] | None = None,
) -> GeocodeResult | None:
    """Drop leading ``", "``-separated segments one at a time and retry.

    Assumes the full string already failed, so the reported ``depth`` is
    always at least 1.
    """
    segments = [s for s in query.split(", ") if s]
    for depth in range(1, len(segments)):
        sub = ", ".join(segments[depth:])
        hit = geocode(sub, providers, cache, validate)
        if hit is not None:
            return GeocodeResult(hit.lat, hit.lon, hit.provider, sub, depth)
    return None
