"""SPI computation, congestion labeling and feature-vector assembly.

Long-term samples describe one (link, 6-hour period) cell of the 7-day
event window; short-term sequences are 24-hour sliding windows paired with
a speed target 1-6 hours past the window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from enum import IntEnum

import numpy as np

from .domain import HurricaneEvent, RoadLink, SpeedSeries, haversine_km
from .errors import DegenerateBaselineError, ValidationError

#: Local-clock offset from UTC used for time-of-day features (Louisiana).
DEFAULT_UTC_OFFSET_H = -6.0

EVENT_WINDOW_DAYS = 7
PERIOD_HOURS = 6
PERIODS_PER_WINDOW = EVENT_WINDOW_DAYS * 24 // PERIOD_HOURS  # 28
REGULAR_WINDOW_HOURS = 7 * 24

HEAVY_SPI_THRESHOLD = 50.0
LIGHT_SPI_THRESHOLD = 75.0


class CongestionLabel(IntEnum):
    NO_CONGESTION = 0
    LIGHT_CONGESTION = 1
    HEAVY_CONGESTION = 2


LONGTERM_FEATURES = (
    "dir_N", "dir_S", "dir_E", "dir_W",
    "lanes", "mean_7d", "std_7d",
    "lat", "lon", "distance_to_landfall",
    "time_of_day_slot", "time_to_landfall",
    "category", "landfall_zone",
)
#: Columns left untouched by normalization (one-hot encodings).
LONGTERM_PASSTHROUGH = tuple(f.startswith("dir_") for f in LONGTERM_FEATURES)

SHORTTERM_FEATURES = (
    "speed", "hour_of_day", "hours_to_landfall",
    "category", "landfall_zone",
    "lat", "lon", "distance_to_landfall", "lanes",
    "dir_N", "dir_S", "dir_E", "dir_W",
    "mean_7d", "std_7d",
)
SHORTTERM_PASSTHROUGH = tuple(f.startswith("dir_") for f in SHORTTERM_FEATURES)


@dataclass(frozen=True)
class RegularStats:
    """Per-link mean/std of speed over the 7 days before the event window."""

    link_id: str
    mean_7d: float
    std_7d: float


@dataclass(frozen=True)
class LongTermSample:
    link_id: str
    hurricane: str
    period_index: int
    period_start: datetime
    features: np.ndarray
    label: CongestionLabel


@dataclass(frozen=True)
class ShortTermSequence:
    link_id: str
    hurricane: str
    steps: np.ndarray            # (window_len, len(SHORTTERM_FEATURES))
    horizon_h: int
    target_speed: float
    target_time: datetime


@dataclass(frozen=True)
class BuildCounts:
    """Exclusion bookkeeping from sample construction."""

    n_built: int
    n_missing_data: int
    n_degenerate_baseline: int


def compute_spi(v_mean: float, v_p: float) -> float:
    """Speed performance index: period speed over regular speed, in percent."""
    if v_p <= 0:
        raise DegenerateBaselineError(f"regular speed {v_p} is not positive")
    return 100.0 * v_mean / v_p


def label_from_spi(spi: float) -> CongestionLabel:
    """Three-way congestion state; boundaries fall to the milder class."""
    if spi < HEAVY_SPI_THRESHOLD:
        return CongestionLabel.HEAVY_CONGESTION
    if spi < LIGHT_SPI_THRESHOLD:
        return CongestionLabel.LIGHT_CONGESTION
    return CongestionLabel.NO_CONGESTION


def event_window_start(hurricane: HurricaneEvent,
                       utc_offset_h: float = DEFAULT_UTC_OFFSET_H) -> datetime:
    """UTC start of the 7-day event window (local midnight, 3 days pre-landfall)."""
    offset = timedelta(hours=utc_offset_h)
    local = (hurricane.landfall_time + offset).replace(tzinfo=None)
    midnight = datetime(local.year, local.month, local.day)
    start_local = midnight - timedelta(days=3)
    return (start_local - offset).replace(tzinfo=timezone.utc)


def period_starts(hurricane: HurricaneEvent,
                  utc_offset_h: float = DEFAULT_UTC_OFFSET_H) -> list[datetime]:
    start = event_window_start(hurricane, utc_offset_h)
    return [start + timedelta(hours=PERIOD_HOURS * i) for i in range(PERIODS_PER_WINDOW)]


def time_of_day_slot(t: datetime, utc_offset_h: float = DEFAULT_UTC_OFFSET_H) -> int:
    """6-hour slot of the local day: 1 for 0:00-6:00 up to 4 for 18:00-24:00."""
    local = t + timedelta(hours=utc_offset_h)
    return local.hour // 6 + 1


def hour_of_day(t: datetime, utc_offset_h: float = DEFAULT_UTC_OFFSET_H) -> int:
    return (t + timedelta(hours=utc_offset_h)).hour


def slots_to_landfall(period_start: datetime, landfall: datetime) -> int:
    """Signed count of 6-hour slots from `period_start` to landfall."""
    delta_h = (landfall - period_start).total_seconds() / 3600.0
    return math.floor(delta_h / PERIOD_HOURS)


def hours_to_landfall(t: datetime, landfall: datetime) -> int:
    """Signed whole-hour count from `t` to landfall."""
    return math.floor((landfall - t).total_seconds() / 3600.0)


def compute_regular_stats(series: SpeedSeries, window_end: datetime) -> RegularStats:
    """Mean/std (population) over the 7 days preceding `window_end`.

    Missing values are excluded; more than 10% missing is an error.
    """
    if series.interval != timedelta(hours=1):
        raise ValidationError(f"{series.link_id}: regular stats need an hourly series")
    window_start = window_end - timedelta(hours=REGULAR_WINDOW_HOURS)
    values = series.slice_values(window_start, REGULAR_WINDOW_HOURS)
    finite = values[np.isfinite(values)]
    n_missing = REGULAR_WINDOW_HOURS - finite.size
    if n_missing > 0.10 * REGULAR_WINDOW_HOURS:
        raise ValidationError(
            f"{series.link_id}: {n_missing}/{REGULAR_WINDOW_HOURS} hours missing "
            "in the regular-speed window"
        )
    return RegularStats(
        link_id=series.link_id,
        mean_7d=float(finite.mean()),
        std_7d=float(finite.std()),
    )


def direction_onehot(direction: str) -> tuple[float, float, float, float]:
    return tuple(1.0 if direction == d else 0.0 for d in ("N", "S", "E", "W"))


def _static_block(link: RoadLink, hurricane: HurricaneEvent,
                  stats: RegularStats) -> dict[str, float]:
    return {
        "category": float(hurricane.category),
        "landfall_zone": float(hurricane.landfall_zone),
        "lat": link.centroid.lat,
        "lon": link.centroid.lon,
        "distance_to_landfall": haversine_km(link.centroid, hurricane.landfall_point),
        "lanes": float(link.lanes),
        "mean_7d": stats.mean_7d,
        "std_7d": stats.std_7d,
    }


def build_longterm_samples(
    links: list[RoadLink],
    hurricane: HurricaneEvent,
    speeds: dict[str, SpeedSeries],
    stats: dict[str, RegularStats],
    utc_offset_h: float = DEFAULT_UTC_OFFSET_H,
) -> tuple[list[LongTermSample], BuildCounts]:
    """One labeled sample per (link, period); exclusions are counted, not imputed."""
    starts = period_starts(hurricane, utc_offset_h)
    samples: list[LongTermSample] = []
    n_missing = 0
    n_degenerate = 0
    for link in links:
        series = speeds.get(link.link_id)
        link_stats = stats.get(link.link_id)
        if series is None or link_stats is None or link_stats.mean_7d <= 0:
            n_degenerate += PERIODS_PER_WINDOW
            continue
        onehot = direction_onehot(link.direction)
        static = _static_block(link, hurricane, link_stats)
        for idx, start in enumerate(starts):
            window = series.slice_values(start, PERIOD_HOURS)
            if not np.all(np.isfinite(window)):
                n_missing += 1
                continue
            spi = compute_spi(float(window.mean()), link_stats.mean_7d)
            features = np.array(
                onehot + (
                    static["lanes"], static["mean_7d"], static["std_7d"],
                    static["lat"], static["lon"], static["distance_to_landfall"],
                    float(time_of_day_slot(start, utc_offset_h)),
                    float(slots_to_landfall(start, hurricane.landfall_time)),
                    static["category"], static["landfall_zone"],
                ),
                dtype=np.float64,
            )
            samples.append(LongTermSample(
                link_id=link.link_id,
                hurricane=hurricane.name,
                period_index=idx,
                period_start=start,
                features=features,
                label=label_from_spi(spi),
            ))
    counts = BuildCounts(len(samples), n_missing, n_degenerate)
    return samples, counts


def valid_window_targets(series: SpeedSeries, horizon_h: int,
                         window_len: int = 24) -> list[int]:
    """Indices usable as sequence targets: full gap-free history + finite target."""
    n = len(series)
    finite = np.isfinite(series.values)
    ok_history = (np.convolve(finite, np.ones(window_len), mode="valid")
                  == window_len)                      # ok_history[s]: window at s complete
    targets = []
    for start in range(n - window_len - horizon_h + 1):
        t_idx = start + window_len - 1 + horizon_h
        if ok_history[start] and finite[t_idx]:
            targets.append(t_idx)
    return targets


def materialize_sequence(
    link: RoadLink,
    hurricane: HurricaneEvent,
    series: SpeedSeries,
    stats: RegularStats,
    target_idx: int,
    horizon_h: int,
    window_len: int = 24,
    utc_offset_h: float = DEFAULT_UTC_OFFSET_H,
) -> ShortTermSequence:
    """Assemble the per-step feature matrix for one sliding-window sample."""
    start_idx = target_idx - horizon_h - window_len + 1
    steps = assemble_history_steps(link, hurricane, series, stats, start_idx,
                                   window_len, utc_offset_h)
    target_time = series.start + target_idx * series.interval
    return ShortTermSequence(
        link_id=link.link_id,
        hurricane=hurricane.name,
        steps=steps,
        horizon_h=horizon_h,
        target_speed=float(series.values[target_idx]),
        target_time=target_time,
    )


def assemble_history_steps(
    link: RoadLink,
    hurricane: HurricaneEvent,
    series: SpeedSeries,
    stats: RegularStats,
    start_idx: int,
    window_len: int = 24,
    utc_offset_h: float = DEFAULT_UTC_OFFSET_H,
) -> np.ndarray:
    """Per-hour feature rows for `window_len` steps starting at `start_idx`."""
    if start_idx < 0 or start_idx + window_len > len(series):
        raise ValidationError("history window outside the series")
    static = _static_block(link, hurricane, stats)
    onehot = direction_onehot(link.direction)
    static_row = (
        static["category"], static["landfall_zone"], static["lat"], static["lon"],
        static["distance_to_landfall"], static["lanes"],
    ) + onehot + (static["mean_7d"], static["std_7d"])
    steps = np.empty((window_len, len(SHORTTERM_FEATURES)), dtype=np.float64)
    for i in range(window_len):
        t = series.start + (start_idx + i) * series.interval
        steps[i, 0] = series.values[start_idx + i]
        steps[i, 1] = float(hour_of_day(t, utc_offset_h))
        steps[i, 2] = float(hours_to_landfall(t, hurricane.landfall_time))
        steps[i, 3:] = static_row
    return steps


def build_shortterm_samples(
    link: RoadLink,
    hurricane: HurricaneEvent,
    series: SpeedSeries,
    stats: RegularStats,
    horizon_h: int,
    window_len: int = 24,
    utc_offset_h: float = DEFAULT_UTC_OFFSET_H,
) -> list[ShortTermSequence]:
    """All stride-1 sliding-window sequences for one link.

    A series shorter than `window_len + horizon_h` yields an empty list.
    """
    if not 1 <= horizon_h <= 6:
        raise ValidationError(f"horizon {horizon_h} outside [1, 6]")
    if series.interval != timedelta(hours=1):
        raise ValidationError(f"{series.link_id}: sequences need an hourly series")
    return [
        materialize_sequence(link, hurricane, series, stats, t_idx, horizon_h,
                             window_len, utc_offset_h)
        for t_idx in valid_window_targets(series, horizon_h, window_len)
    ]


@dataclass(frozen=True)
class NormalizationStats:
    """Per-feature z-score parameters fitted on a training split."""

    mean: np.ndarray
    std: np.ndarray
    passthrough: np.ndarray      # bool mask of columns left untouched

    def to_jsonable(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "passthrough": [bool(x) for x in self.passthrough],
        }

    @classmethod
    def from_jsonable(cls, obj: dict) -> "NormalizationStats":
        return cls(
            mean=np.asarray(obj["mean"], dtype=np.float64),
            std=np.asarray(obj["std"], dtype=np.float64),
            passthrough=np.asarray(obj["passthrough"], dtype=bool),
        )


def fit_normalizer(x: np.ndarray, passthrough=None) -> NormalizationStats:
    """Fit per-feature z-score stats on the last axis of a 2-D or 3-D array.

    Constant features get std replaced by 1 so they normalize to exactly 0.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise ValidationError("cannot fit a normalizer on an empty array")
    flat = x.reshape(-1, x.shape[-1])
    mean = flat.mean(axis=0)
    std = flat.std(axis=0)
    std = np.where(std == 0.0, 1.0, std)
    n_features = x.shape[-1]
    if passthrough is None:
        mask = np.zeros(n_features, dtype=bool)
    else:
        mask = np.asarray(passthrough, dtype=bool)
    mean = np.where(mask, 0.0, mean)
    std = np.where(mask, 1.0, std)
    return NormalizationStats(mean=mean, std=std, passthrough=mask)


def apply_normalizer(stats: NormalizationStats, x: np.ndarray) -> np.ndarray:
    return (np.asarray(x, dtype=np.float64) - stats.mean) / stats.std


def denormalize(stats: NormalizationStats, x: np.ndarray) -> np.ndarray:
    return np.asarray(x, dtype=np.float64) * stats.std + stats.mean


def longterm_arrays(samples: list[LongTermSample]) -> tuple[np.ndarray, np.ndarray]:
    x = np.stack([s.features for s in samples])
    y = np.array([int(s.label) for s in samples], dtype=np.int64)
    return x, y


def shortterm_arrays(samples: list[ShortTermSequence]) -> tuple[np.ndarray, np.ndarray]:
    x = np.stack([s.steps for s in samples])
    y = np.array([s.target_speed for s in samples], dtype=np.float64)
    return x, y
