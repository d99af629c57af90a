"""Geospatial and hurricane domain types plus network/speed-series I/O.

All types are immutable after construction and all operations are pure, so
everything here is safe for concurrent use.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from enum import IntEnum

import numpy as np

from .errors import ParseError, ValidationError

EARTH_RADIUS_KM = 6371.0

#: Longitude splitting the coastline into a west and an east half.
DEFAULT_ZONE_MERIDIAN_LON = -91.0

DIRECTIONS = ("N", "S", "E", "W")


class LandfallZone(IntEnum):
    WEST = 0
    EAST = 1


def parse_utc(text: str) -> datetime:
    """Parse an ISO-8601 timestamp into an aware UTC datetime."""
    try:
        dt = datetime.fromisoformat(text.replace("Z", "+00:00"))
    except ValueError as exc:
        raise ParseError(f"invalid timestamp {text!r}: {exc}") from None
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def format_utc(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).isoformat().replace("+00:00", "Z")


@dataclass(frozen=True)
class GeoPoint:
    """A WGS-84 coordinate pair in degrees."""

    lat: float
    lon: float

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0:
            raise ValidationError(f"latitude {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise ValidationError(f"longitude {self.lon} outside [-180, 180]")


@dataclass(frozen=True)
class RoadLink:
    """A directed roadway segment with centroid, geometry and lane count."""

    link_id: str
    centroid: GeoPoint
    geometry: tuple[GeoPoint, ...]
    direction: str
    lanes: int

    def __post_init__(self):
        if len(self.geometry) < 2:
            raise ValidationError(f"link {self.link_id}: geometry needs >= 2 points")
        if self.direction not in DIRECTIONS:
            raise ValidationError(
                f"link {self.link_id}: direction {self.direction!r} not in {DIRECTIONS}"
            )
        if self.lanes < 1:
            raise ValidationError(f"link {self.link_id}: lanes must be >= 1")
        lats = [p.lat for p in self.geometry]
        lons = [p.lon for p in self.geometry]
        if not (min(lats) <= self.centroid.lat <= max(lats)
                and min(lons) <= self.centroid.lon <= max(lons)):
            raise ValidationError(
                f"link {self.link_id}: centroid outside geometry bounding box"
            )


@dataclass(frozen=True)
class RoadNetwork:
    """An immutable collection of uniquely-identified road links."""

    links: tuple[RoadLink, ...]
    by_id: dict[str, RoadLink] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.links:
            raise ValidationError("network must contain at least one link")
        index: dict[str, RoadLink] = {}
        dupes: list[str] = []
        for link in self.links:
            if link.link_id in index:
                dupes.append(link.link_id)
            index[link.link_id] = link
        if dupes:
            raise ValidationError(f"duplicate link_id(s): {sorted(set(dupes))}")
        object.__setattr__(self, "by_id", index)

    @property
    def bbox(self) -> tuple[float, float, float, float]:
        """(min_lat, min_lon, max_lat, max_lon) over all geometry vertices."""
        lats = [p.lat for l in self.links for p in l.geometry]
        lons = [p.lon for l in self.links for p in l.geometry]
        return (min(lats), min(lons), max(lats), max(lons))

    def __len__(self) -> int:
        return len(self.links)


@dataclass(frozen=True)
class HurricaneEvent:
    """A named hurricane with category, landfall time/point/zone."""

    name: str
    category: int
    landfall_time: datetime
    landfall_point: GeoPoint
    landfall_zone: LandfallZone

    def __post_init__(self):
        if not 1 <= self.category <= 5:
            raise ValidationError(f"category {self.category} outside [1, 5]")
        if self.landfall_time.tzinfo is None:
            raise ValidationError("landfall_time must be timezone-aware UTC")


@dataclass(frozen=True)
class SpeedRecord:
    link_id: str
    timestamp: datetime
    speed: float

    def __post_init__(self):
        if not 0.0 <= self.speed <= 120.0:
            raise ValidationError(
                f"speed {self.speed} for {self.link_id} outside [0, 120] mph"
            )


class SpeedSeries:
    """A uniformly spaced speed series; gaps are explicit NaN markers."""

    __slots__ = ("link_id", "start", "interval", "values")

    def __init__(self, link_id: str, start: datetime, interval: timedelta,
                 values: np.ndarray):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 1 or values.size == 0:
            raise ValidationError("series values must be a non-empty 1-D array")
        if interval <= timedelta(0):
            raise ValidationError("interval must be positive")
        finite = values[np.isfinite(values)]
        if finite.size and finite.min() < 0:
            raise ValidationError("series contains negative speeds")
        self.link_id = link_id
        self.start = start.astimezone(timezone.utc)
        self.interval = interval
        self.values = values
        self.values.flags.writeable = False

    def __len__(self) -> int:
        return self.values.size

    @property
    def timestamps(self) -> list[datetime]:
        return [self.start + i * self.interval for i in range(len(self))]

    def index_of(self, t: datetime) -> int:
        """Exact index of timestamp `t`; raises if off-grid or out of range."""
        offset = (t - self.start) / self.interval
        idx = round(offset)
        if abs(offset - idx) > 1e-9 or not 0 <= idx < len(self):
            raise ValidationError(f"{t} not on the grid of series {self.link_id}")
        return int(idx)

    def slice_values(self, t_start: datetime, n: int) -> np.ndarray:
        i = self.index_of(t_start)
        if i + n > len(self):
            raise ValidationError("slice extends past the end of the series")
        return self.values[i:i + n]


def haversine_km(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance between two points, in kilometres."""
    phi1, phi2 = math.radians(a.lat), math.radians(b.lat)
    dphi = phi2 - phi1
    dlmb = math.radians(b.lon - a.lon)
    h = math.sin(dphi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlmb / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * math.asin(math.sqrt(h))


def derive_landfall_zone(landfall: GeoPoint,
                         meridian_lon: float = DEFAULT_ZONE_MERIDIAN_LON) -> LandfallZone:
    """West if the landfall longitude is strictly west of the meridian, else East."""
    return LandfallZone.WEST if landfall.lon < meridian_lon else LandfallZone.EAST


def _centroid(points: tuple[GeoPoint, ...]) -> GeoPoint:
    return GeoPoint(
        lat=sum(p.lat for p in points) / len(points),
        lon=sum(p.lon for p in points) / len(points),
    )


def network_from_geojson(obj: dict) -> RoadNetwork:
    """Build a RoadNetwork from a parsed GeoJSON FeatureCollection."""
    if obj.get("type") != "FeatureCollection" or "features" not in obj:
        raise ParseError("expected a GeoJSON FeatureCollection")
    links = []
    for i, feature in enumerate(obj["features"]):
        where = f"feature {i}"
        geom = feature.get("geometry") or {}
        if geom.get("type") != "LineString":
            raise ParseError(f"{where}: geometry must be a LineString")
        coords = geom.get("coordinates") or []
        if len(coords) < 2:
            raise ParseError(f"{where}: LineString needs >= 2 coordinates")
        props = feature.get("properties") or {}
        for key in ("link_id", "lanes", "direction"):
            if key not in props:
                raise ValidationError(f"{where}: missing required property {key!r}")
        points = tuple(GeoPoint(lat=lat, lon=lon) for lon, lat in coords)
        links.append(RoadLink(
            link_id=str(props["link_id"]),
            centroid=_centroid(points),
            geometry=points,
            direction=props["direction"],
            lanes=int(props["lanes"]),
        ))
    return RoadNetwork(links=tuple(links))


def network_to_geojson(net: RoadNetwork) -> dict:
    return {
        "type": "FeatureCollection",
        "features": [
            {
                "type": "Feature",
                "geometry": {
                    "type": "LineString",
                    "coordinates": [[p.lon, p.lat] for p in link.geometry],
                },
                "properties": {
                    "link_id": link.link_id,
                    "lanes": link.lanes,
                    "direction": link.direction,
                },
            }
            for link in net.links
        ],
    }


def load_network(path) -> RoadNetwork:
    """Load a network GeoJSON file, validating structure and uniqueness."""
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    return network_from_geojson(obj)


def save_network(net: RoadNetwork, path) -> None:
    with open(path, "w") as fh:
        json.dump(network_to_geojson(net), fh)


def load_hurricane(path) -> HurricaneEvent:
    """Load a hurricane JSON file; the zone is derived when absent."""
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    for key in ("name", "category", "landfall_time", "landfall_lat", "landfall_lon"):
        if key not in obj:
            raise ValidationError(f"{path}: missing required field {key!r}")
    point = GeoPoint(lat=obj["landfall_lat"], lon=obj["landfall_lon"])
    zone = (LandfallZone(obj["landfall_zone"]) if "landfall_zone" in obj
            else derive_landfall_zone(point))
    return HurricaneEvent(
        name=obj["name"],
        category=int(obj["category"]),
        landfall_time=parse_utc(obj["landfall_time"]),
        landfall_point=point,
        landfall_zone=zone,
    )


def save_hurricane(hurricane: HurricaneEvent, path) -> None:
    with open(path, "w") as fh:
        json.dump({
            "name": hurricane.name,
            "category": hurricane.category,
            "landfall_time": format_utc(hurricane.landfall_time),
            "landfall_lat": hurricane.landfall_point.lat,
            "landfall_lon": hurricane.landfall_point.lon,
            "landfall_zone": int(hurricane.landfall_zone),
        }, fh)


def resample_series(s: SpeedSeries, target: timedelta) -> SpeedSeries:
    """Aggregate to a coarser interval by averaging, NaN-aware.

    Each output value is the mean of the covered inputs, ignoring missing
    markers; an output is missing only when all covered inputs are missing.
    """
    ratio = target / s.interval
    k = round(ratio)
    if abs(ratio - k) > 1e-9 or k < 1:
        raise ValidationError(
            f"target {target} is not an integer multiple of interval {s.interval}"
        )
    if k == 1:
        return SpeedSeries(s.link_id, s.start, s.interval, s.values.copy())
    n_out = len(s) // k
    if n_out == 0:
        raise ValidationError("series shorter than one target interval")
    block = s.values[:n_out * k].reshape(n_out, k)
    with np.errstate(invalid="ignore"):
        counts = np.sum(np.isfinite(block), axis=1)
        sums = np.nansum(block, axis=1)
    out = np.full(n_out, np.nan)
    np.divide(sums, counts, out=out, where=counts > 0)
    return SpeedSeries(s.link_id, s.start, target, out)


def read_speed_records(path) -> list[SpeedRecord]:
    """Read a `link_id,timestamp,speed_mph` CSV; empty speeds are skipped."""
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        expected = {"link_id", "timestamp", "speed_mph"}
        if reader.fieldnames is None or not expected.issubset(reader.fieldnames):
            raise ParseError(f"{path}: header must contain {sorted(expected)}")
        for row_no, row in enumerate(reader, start=2):
            raw = (row["speed_mph"] or "").strip()
            if not raw:
                continue
            try:
                speed = float(raw)
            except ValueError:
                raise ParseError(f"{path}: line {row_no}: bad speed {raw!r}") from None
            records.append(SpeedRecord(
                link_id=row["link_id"],
                timestamp=parse_utc(row["timestamp"]),
                speed=speed,
            ))
    return records


def write_speeds_csv(series_by_link: dict[str, SpeedSeries], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["link_id", "timestamp", "speed_mph"])
        for link_id in sorted(series_by_link):
            s = series_by_link[link_id]
            for i, t in enumerate(s.timestamps):
                v = s.values[i]
                writer.writerow([link_id, format_utc(t), "" if np.isnan(v) else f"{v:.3f}"])


def series_from_records(records: list[SpeedRecord], start: datetime, end: datetime,
                        interval: timedelta) -> dict[str, SpeedSeries]:
    """Place records onto a uniform [start, end) grid; gaps become NaN.

    Multiple records in one cell are averaged.
    """
    n = round((end - start) / interval)
    if n <= 0:
        raise ValidationError("end must be after start")
    sums: dict[str, np.ndarray] = {}
    counts: dict[str, np.ndarray] = {}
    for rec in records:
        offset = (rec.timestamp - start) / interval
        idx = math.floor(offset + 1e-9)
        if not 0 <= idx < n:
            continue
        if rec.link_id not in sums:
            sums[rec.link_id] = np.zeros(n)
            counts[rec.link_id] = np.zeros(n)
        sums[rec.link_id][idx] += rec.speed
        counts[rec.link_id][idx] += 1
    out = {}
    for link_id, total in sums.items():
        cnt = counts[link_id]
        values = np.full(n, np.nan)
        np.divide(total, cnt, out=values, where=cnt > 0)
        out[link_id] = SpeedSeries(link_id, start, interval, values)
    return out
