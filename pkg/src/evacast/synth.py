"""Synthetic multi-hurricane speed datasets with calibrated evacuation signatures.

The generator composes a per-link free-flow speed, a mild diurnal cycle, a
hurricane dip multiplier and Gaussian noise. The dip's functional form is
invented; its aggregate day-bucketed speed changes and congestion durations
are tuned to published evacuation statistics and locked by `calibration_check`.
"""

from __future__ import annotations

import json
import math
import zlib
from dataclasses import dataclass, field, replace
from datetime import timedelta
from pathlib import Path

import numpy as np

from .domain import (
    GeoPoint,
    HurricaneEvent,
    RoadLink,
    RoadNetwork,
    SpeedSeries,
    derive_landfall_zone,
    haversine_km,
    load_hurricane,
    load_network,
    parse_utc,
    save_hurricane,
    save_network,
    series_from_records,
    read_speed_records,
    write_speeds_csv,
)
from .errors import ValidationError
from .features import event_window_start

#: 50 miles, the nearby/distant split used by the calibration gates.
NEARBY_KM = 80.47

#: Louisiana-like extent: (min_lat, min_lon, max_lat, max_lon).
LOUISIANA_BBOX = (29.0, -93.8, 33.0, -89.5)

HURRICANE_PRESETS: dict[str, HurricaneEvent] = {
    name: HurricaneEvent(
        name=name,
        category=cat,
        landfall_time=parse_utc(when),
        landfall_point=GeoPoint(lat, lon),
        landfall_zone=derive_landfall_zone(GeoPoint(lat, lon)),
    )
    for name, cat, when, lat, lon in [
        ("ida", 4, "2021-08-29T16:55:00Z", 29.1, -90.2),
        ("delta", 4, "2020-10-09T23:00:00Z", 29.8, -93.1),
        ("laura", 4, "2020-08-27T06:00:00Z", 29.8, -93.3),
        ("zeta", 3, "2020-10-28T21:00:00Z", 29.2, -90.6),
        ("barry", 1, "2019-07-13T15:00:00Z", 29.6, -92.2),
    ]
}


@dataclass(frozen=True)
class ScenarioConfig:
    """Generator parameters; the defaults are the frozen calibrated set."""

    base_free_flow_mean: float = 65.0
    base_free_flow_sd: float = 5.0
    base_free_flow_clip: tuple[float, float] = (55.0, 75.0)
    diurnal_dip: float = 0.08
    noise_sd: float = 2.5
    dip_amplitude_by_category: dict[int, float] = field(
        default_factory=lambda: {1: 0.4, 2: 0.6, 3: 0.8, 4: 1.0, 5: 1.1})
    distance_scale_km: float = 80.0
    distance_floor: float = 0.74
    inbound_alignment: float = 0.3
    peak_offset_h: float = -33.0
    peak_sigma_left_h: float = 3.8
    peak_sigma_right_h: float = 2.8
    peak_shape_p: float = 4.0
    broad_offset_h: float = -36.0
    broad_sigma_h: float = 18.0
    broad_weight: float = 0.25
    support_h: tuple[float, float] = (-60.0, 12.0)
    urban_fraction: float = 0.22
    rush_depth_range: tuple[float, float] = (0.25, 0.65)
    evac_rush_boost: float = 0.6
    evac_rush_sigma_h: float = 12.0
    incident_rate: float = 1.0
    incident_depth_range: tuple[float, float] = (0.25, 0.6)
    incident_duration_range_h: tuple[int, int] = (2, 7)
    history_days: int = 7
    event_days: int = 7
    utc_offset_h: float = -6.0
    rng_seed: int = 1

    def __post_init__(self):
        if any(not 0.0 <= a <= 2.0 for a in self.dip_amplitude_by_category.values()):
            raise ValidationError("dip amplitudes must lie in [0, 2]")
        if self.noise_sd < 0:
            raise ValidationError("noise_sd must be >= 0")
        if not 0.0 <= self.broad_weight < 1.0:
            raise ValidationError("broad_weight must lie in [0, 1)")
        if not 0.0 <= self.urban_fraction <= 1.0:
            raise ValidationError("urban_fraction must lie in [0, 1]")


@dataclass(frozen=True)
class SyntheticDataset:
    network: RoadNetwork
    hurricanes: list[HurricaneEvent]
    series: dict[str, dict[str, SpeedSeries]]   # hurricane name -> link_id -> series
    config: ScenarioConfig


def generate_network(n_links: int, bbox=LOUISIANA_BBOX, seed: int = 1) -> RoadNetwork:
    """Random directed links with short linear geometry inside `bbox`."""
    if n_links <= 0:
        raise ValidationError("n_links must be >= 1")
    min_lat, min_lon, max_lat, max_lon = bbox
    rng = np.random.default_rng(seed)
    directions = np.array(["N", "S", "E", "W"])
    links = []
    for i in range(n_links):
        lat = float(rng.uniform(min_lat, max_lat))
        lon = float(rng.uniform(min_lon, max_lon))
        direction = str(directions[rng.integers(0, 4)])
        lanes = int(rng.integers(2, 5))
        # Segment half-length ~0.5-2.5 km oriented along the link direction.
        half_km = float(rng.uniform(0.5, 2.5))
        dlat = half_km / 111.0
        dlon = half_km / (111.0 * math.cos(math.radians(lat)))
        if direction in ("N", "S"):
            p1 = GeoPoint(max(min_lat, lat - dlat), lon)
            p2 = GeoPoint(min(max_lat, lat + dlat), lon)
        else:
            p1 = GeoPoint(lat, max(min_lon, lon - dlon))
            p2 = GeoPoint(lat, min(max_lon, lon + dlon))
        centroid = GeoPoint((p1.lat + p2.lat) / 2, (p1.lon + p2.lon) / 2)
        links.append(RoadLink(
            link_id=f"L{i:04d}",
            centroid=centroid,
            geometry=(p1, p2),
            direction=direction,
            lanes=lanes,
        ))
    return RoadNetwork(links=tuple(links))


def direction_alignment(link: RoadLink, hurricane: HurricaneEvent) -> str:
    """'outbound' when the link direction points away from the landfall point."""
    away_lat = link.centroid.lat - hurricane.landfall_point.lat
    away_lon = ((link.centroid.lon - hurricane.landfall_point.lon)
                * math.cos(math.radians(link.centroid.lat)))
    unit = {"N": (1.0, 0.0), "S": (-1.0, 0.0), "E": (0.0, 1.0), "W": (0.0, -1.0)}
    u_lat, u_lon = unit[link.direction]
    return "outbound" if u_lat * away_lat + u_lon * away_lon >= 0 else "inbound"


def _temporal_bump(delta_h: np.ndarray, cfg: ScenarioConfig) -> np.ndarray:
    """Smooth evacuation-intensity weight over hours relative to landfall.

    A narrow asymmetric peak (pre-landfall jam) mixed with a broad shoulder;
    zero outside the support window, with cosine tapers at both edges.
    """
    delta_h = np.asarray(delta_h, dtype=np.float64)
    lo, hi = cfg.support_h
    x = delta_h - cfg.peak_offset_h
    sigma = np.where(x < 0, cfg.peak_sigma_left_h, cfg.peak_sigma_right_h)
    # Flat-topped peak: deep dips hold for whole 6-hour periods.
    narrow = np.exp(-0.5 * np.abs(x / sigma) ** cfg.peak_shape_p)
    broad = np.exp(-0.5 * ((delta_h - cfg.broad_offset_h) / cfg.broad_sigma_h) ** 2)
    w = (1.0 - cfg.broad_weight) * narrow + cfg.broad_weight * broad
    taper_width = 6.0
    left = np.clip((delta_h - lo) / taper_width, 0.0, 1.0)
    right = np.clip((hi - delta_h) / taper_width, 0.0, 1.0)
    smooth = lambda s: 0.5 - 0.5 * np.cos(np.pi * s)
    w = w * smooth(left) * smooth(right)
    return np.where((delta_h >= lo) & (delta_h <= hi), w, 0.0)


def dip_multiplier(category: int, distance_km: float, direction_alignment: str,
                   hours_to_landfall, cfg: ScenarioConfig):
    """Speed multiplier in (0, 1]; `hours_to_landfall` is negative pre-landfall."""
    if category not in cfg.dip_amplitude_by_category:
        raise ValidationError(f"category {category} has no amplitude entry")
    amplitude = cfg.dip_amplitude_by_category[category]
    decay = math.exp(-distance_km / cfg.distance_scale_km)
    reach = cfg.distance_floor + (1.0 - cfg.distance_floor) * decay
    align = 1.0 if direction_alignment == "outbound" else cfg.inbound_alignment
    w = _temporal_bump(hours_to_landfall, cfg)
    mult = np.clip(1.0 - amplitude * reach * align * w, 0.05, 1.0)
    return float(mult) if np.isscalar(hours_to_landfall) else mult


def _diurnal(hours_local: np.ndarray, cfg: ScenarioConfig) -> np.ndarray:
    # Slight daytime slowdown, fastest around 03:00 local.
    return 1.0 - cfg.diurnal_dip * 0.5 * (1.0 - np.cos(2.0 * np.pi * (hours_local - 3.0) / 24.0))


def _rush_shape(hours_local: np.ndarray) -> np.ndarray:
    """Morning/evening commute bumps on the local clock, peak value 1."""
    morning = np.exp(-0.5 * ((hours_local - 8.0) / 1.6) ** 2)
    evening = np.exp(-0.5 * ((hours_local - 17.0) / 1.6) ** 2)
    return np.minimum(morning + evening, 1.0)


@dataclass(frozen=True)
class LinkProfile:
    """Per-link regular traffic character, constant across hurricanes."""

    free_flow: float
    rush_depth: float    # 0 for rural links


def link_profile(cfg: ScenarioConfig, link_index: int) -> LinkProfile:
    rng = np.random.default_rng(np.random.SeedSequence([cfg.rng_seed, 101, link_index]))
    free_flow = float(np.clip(rng.normal(cfg.base_free_flow_mean, cfg.base_free_flow_sd),
                              *cfg.base_free_flow_clip))
    is_urban = rng.random() < cfg.urban_fraction
    rush_depth = float(rng.uniform(*cfg.rush_depth_range)) if is_urban else 0.0
    return LinkProfile(free_flow=free_flow, rush_depth=rush_depth)


def _noise_rng(cfg_seed: int, hurricane: HurricaneEvent, link_index: int) -> np.random.Generator:
    name_key = zlib.crc32(hurricane.name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence([cfg_seed, 202, name_key, link_index]))


def generate_speeds(network: RoadNetwork, hurricane: HurricaneEvent,
                    cfg: ScenarioConfig) -> dict[str, SpeedSeries]:
    """Hourly 14-day series per link: 7 history days then the 7-day event window."""
    window_start = event_window_start(hurricane, cfg.utc_offset_h)
    start = window_start - timedelta(days=cfg.history_days)
    n_hours = (cfg.history_days + cfg.event_days) * 24
    hours = np.arange(n_hours)
    local_start = start + timedelta(hours=cfg.utc_offset_h)
    h0 = local_start.hour + local_start.minute / 60.0
    local_hours = (h0 + hours) % 24.0
    # hours relative to landfall (negative before)
    delta_h = (start - hurricane.landfall_time).total_seconds() / 3600.0 + hours
    diurnal = _diurnal(local_hours, cfg)
    rush = _rush_shape(local_hours)
    # Evacuation load amplifies commute congestion around landfall.
    evac_load = np.exp(-0.5 * ((delta_h - cfg.broad_offset_h) / cfg.evac_rush_sigma_h) ** 2)
    out = {}
    for idx, link in enumerate(network.links):
        profile = link_profile(cfg, idx)
        depth_t = np.minimum(
            profile.rush_depth * (1.0 + cfg.evac_rush_boost * evac_load), 0.85)
        regular = diurnal * (1.0 - depth_t * rush)
        mult = dip_multiplier(
            hurricane.category,
            _distance_km(link, hurricane),
            direction_alignment(link, hurricane),
            delta_h,
            cfg,
        )
        rng = _noise_rng(cfg.rng_seed, hurricane, idx)
        base = profile.free_flow * regular * mult
        if cfg.incident_rate > 0:
            lam = cfg.incident_rate * (0.5 + profile.rush_depth)
            for _ in range(rng.poisson(lam)):
                duration = int(rng.integers(cfg.incident_duration_range_h[0],
                                            cfg.incident_duration_range_h[1] + 1))
                at = int(rng.integers(0, n_hours - duration))
                depth = rng.uniform(*cfg.incident_depth_range)
                base[at:at + duration] *= 1.0 - depth
        noise = rng.normal(0.0, cfg.noise_sd, n_hours) if cfg.noise_sd > 0 else 0.0
        values = np.clip(base + noise, 3.0, 90.0)
        out[link.link_id] = SpeedSeries(link.link_id, start, timedelta(hours=1), values)
    return out


def _distance_km(link: RoadLink, hurricane: HurricaneEvent) -> float:
    return haversine_km(link.centroid, hurricane.landfall_point)


def generate_dataset(n_links: int = 200, hurricane_names=None, seed: int = 1,
                     cfg: ScenarioConfig | None = None,
                     bbox=LOUISIANA_BBOX) -> SyntheticDataset:
    """The standard multi-hurricane dataset used by experiments and fixtures."""
    if hurricane_names is None:
        hurricane_names = list(HURRICANE_PRESETS)
    unknown = [n for n in hurricane_names if n not in HURRICANE_PRESETS]
    if unknown:
        raise ValidationError(f"unknown hurricane preset(s): {unknown}")
    cfg = replace(cfg or ScenarioConfig(), rng_seed=seed)
    network = generate_network(n_links, bbox, seed)
    hurricanes = [HURRICANE_PRESETS[n] for n in hurricane_names]
    series = {h.name: generate_speeds(network, h, cfg) for h in hurricanes}
    return SyntheticDataset(network=network, hurricanes=hurricanes, series=series,
                            config=cfg)


@dataclass(frozen=True)
class CalibrationRow:
    distance_class: str          # "nearby" | "distant"
    days_before_landfall: int
    mean_change_pct: float
    mean_congested_hours: float


@dataclass(frozen=True)
class CalibrationReport:
    rows: list[CalibrationRow]
    passed: bool
    failures: list[str]

    def row(self, distance_class: str, day: int) -> CalibrationRow:
        for r in self.rows:
            if r.distance_class == distance_class and r.days_before_landfall == day:
                return r
        raise KeyError((distance_class, day))

    def to_jsonable(self) -> dict:
        return {
            "passed": self.passed,
            "failures": list(self.failures),
            "rows": [vars(r) for r in self.rows],
        }

    def __str__(self) -> str:
        lines = ["day  class    change%  congested_h"]
        for r in sorted(self.rows, key=lambda r: (r.days_before_landfall, r.distance_class)):
            lines.append(f"{r.days_before_landfall:>3}  {r.distance_class:<8}"
                         f"{r.mean_change_pct:>8.1f}  {r.mean_congested_hours:>11.2f}")
        lines.append("PASS" if self.passed else "FAIL: " + "; ".join(self.failures))
        return "\n".join(lines)


#: (distance_class, day) -> (target change %, tolerance, target hours, tolerance)
CALIBRATION_GATES = {
    ("nearby", 1): (-25.6, 4.0, 6.2, 1.5),
    ("distant", 1): (-21.2, 4.0, 4.7, 1.5),
    ("nearby", 2): (-5.2, 4.0, None, None),
    ("distant", 2): (-3.7, 4.0, None, None),
}


def calibration_check(ds: SyntheticDataset) -> CalibrationReport:
    """Day-bucketed aggregate speed change and congestion duration vs. the gates."""
    changes: dict[tuple[str, int], list[float]] = {}
    hours_cong: dict[tuple[str, int], list[float]] = {}
    class_seen = set()
    for hurricane in ds.hurricanes:
        for link in ds.network.links:
            series = ds.series[hurricane.name][link.link_id]
            dist = _distance_km(link, hurricane)
            klass = "nearby" if dist < NEARBY_KM else "distant"
            class_seen.add(klass)
            reg_slice = series.values[:ds.config.history_days * 24]
            reg_mean = float(np.nanmean(reg_slice))
            if reg_mean <= 0:
                continue
            for day in range(4):
                lo = hurricane.landfall_time - timedelta(hours=24 * (day + 1))
                idx = series.index_of(lo) if _on_grid(series, lo) else None
                if idx is None or idx + 24 > len(series):
                    continue
                bucket = series.values[idx:idx + 24]
                change = 100.0 * (float(np.nanmean(bucket)) - reg_mean) / reg_mean
                congested = float(np.sum(bucket < 0.75 * reg_mean))
                changes.setdefault((klass, day), []).append(change)
                hours_cong.setdefault((klass, day), []).append(congested)
    if class_seen != {"nearby", "distant"}:
        raise ValidationError(
            f"dataset must contain both distance classes, found {sorted(class_seen)}"
        )
    rows = []
    failures = []
    for (klass, day), vals in sorted(changes.items()):
        row = CalibrationRow(
            distance_class=klass,
            days_before_landfall=day,
            mean_change_pct=float(np.mean(vals)),
            mean_congested_hours=float(np.mean(hours_cong[(klass, day)])),
        )
        rows.append(row)
        gate = CALIBRATION_GATES.get((klass, day))
        if gate:
            c_target, c_tol, h_target, h_tol = gate
            if abs(row.mean_change_pct - c_target) > c_tol:
                failures.append(
                    f"{klass} day-{day} change {row.mean_change_pct:.1f}% "
                    f"outside {c_target}+-{c_tol}"
                )
            if h_target is not None and abs(row.mean_congested_hours - h_target) > h_tol:
                failures.append(
                    f"{klass} day-{day} duration {row.mean_congested_hours:.2f}h "
                    f"outside {h_target}+-{h_tol}"
                )
    return CalibrationReport(rows=rows, passed=not failures, failures=failures)


def _on_grid(series: SpeedSeries, t) -> bool:
    offset = (t - series.start) / series.interval
    return abs(offset - round(offset)) < 1e-9 and 0 <= round(offset) < len(series)


def write_dataset(ds: SyntheticDataset, out_dir) -> dict:
    """Write network/hurricanes/speeds plus a manifest; returns the manifest."""
    out = Path(out_dir)
    (out / "hurricanes").mkdir(parents=True, exist_ok=True)
    (out / "speeds").mkdir(parents=True, exist_ok=True)
    save_network(ds.network, out / "network.geojson")
    manifest = {
        "seed": ds.config.rng_seed,
        "n_links": len(ds.network),
        "network": "network.geojson",
        "hurricanes": {},
        "speeds": {},
    }
    for hurricane in ds.hurricanes:
        hpath = f"hurricanes/{hurricane.name}.json"
        spath = f"speeds/{hurricane.name}.csv"
        save_hurricane(hurricane, out / hpath)
        write_speeds_csv(ds.series[hurricane.name], out / spath)
        manifest["hurricanes"][hurricane.name] = hpath
        manifest["speeds"][hurricane.name] = spath
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return manifest


def load_dataset(data_dir) -> SyntheticDataset:
    """Load a dataset directory produced by `write_dataset`."""
    root = Path(data_dir)
    try:
        with open(root / "manifest.json") as fh:
            manifest = json.load(fh)
    except FileNotFoundError:
        raise ValidationError(f"{root}: missing manifest.json") from None
    network = load_network(root / manifest["network"])
    hurricanes = [load_hurricane(root / p) for p in manifest["hurricanes"].values()]
    cfg = replace(ScenarioConfig(), rng_seed=int(manifest.get("seed", 1)))
    series: dict[str, dict[str, SpeedSeries]] = {}
    for hurricane in hurricanes:
        window_start = event_window_start(hurricane, cfg.utc_offset_h)
        start = window_start - timedelta(days=cfg.history_days)
        end = start + timedelta(days=cfg.history_days + cfg.event_days)
        records = read_speed_records(root / manifest["speeds"][hurricane.name])
        series[hurricane.name] = series_from_records(
            records, start, end, timedelta(hours=1))
    return SyntheticDataset(network=network, hurricanes=hurricanes, series=series,
                            config=cfg)
