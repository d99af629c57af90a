"""End-to-end experiments, ablations and deployment-style predictions."""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timedelta, timezone

import numpy as np

from . import _kernels as kernels
from .baselines import build_knn_index, knn_classify_batch, persistence_forecast_batch
from .dataset import ExperimentPlan, RepeatRun, SplitSpec, oversample_indices, run_repeats, split_indices
from .domain import HurricaneEvent, RoadNetwork, SpeedSeries
from .errors import ValidationError
from .features import (
    DEFAULT_UTC_OFFSET_H,
    LONGTERM_FEATURES,
    LONGTERM_PASSTHROUGH,
    PERIOD_HOURS,
    PERIODS_PER_WINDOW,
    SHORTTERM_FEATURES,
    SHORTTERM_PASSTHROUGH,
    CongestionLabel,
    _static_block,
    apply_normalizer,
    assemble_history_steps,
    build_longterm_samples,
    compute_regular_stats,
    direction_onehot,
    event_window_start,
    fit_normalizer,
    longterm_arrays,
    materialize_sequence,
    period_starts,
    slots_to_landfall,
    time_of_day_slot,
    valid_window_targets,
)
from .metrics import AggregatedReport, aggregate_repeats, classification_report, regression_report
from .models import AdamConfig, init_lstm, init_mlp, init_rnn, mc_dropout_predict, mlp_forward, train_classifier, train_regressor
from .models.mlp import MlpModel
from .models.recurrent import forward_batch
from .synth import SyntheticDataset, generate_dataset

DEFAULT_HORIZONS = (1, 3, 6)


@dataclass(frozen=True)
class ExperimentResult:
    task: str                                  # "long" | "short" | "ablation"
    aggregated: dict                           # model -> AggregatedReport (or horizon map)
    per_repeat: list                           # raw per-repeat report dicts
    config_snapshot: dict
    seeds: tuple[int, ...]
    warnings: tuple[str, ...] = ()

    def to_jsonable(self) -> dict:
        def conv(node):
            if isinstance(node, AggregatedReport):
                return node.to_jsonable()
            if isinstance(node, dict):
                return {str(k): conv(v) for k, v in node.items()}
            if hasattr(node, "to_jsonable"):
                return node.to_jsonable()
            return node
        return {
            "task": self.task,
            "aggregated": conv(self.aggregated),
            "per_repeat": conv(self.per_repeat),
            "config_snapshot": self.config_snapshot,
            "seeds": list(self.seeds),
            "warnings": list(self.warnings),
        }


@dataclass(frozen=True)
class CongestionGrid:
    hurricane: str
    period_starts: list[datetime]
    labels: dict[str, list[int]]               # link_id -> 28 label codes

    def __post_init__(self):
        for link_id, row in self.labels.items():
            if len(row) != PERIODS_PER_WINDOW:
                raise ValidationError(
                    f"link {link_id}: grid needs {PERIODS_PER_WINDOW} labels")

    def to_jsonable(self) -> dict:
        return {
            "hurricane": self.hurricane,
            "period_starts": [t.isoformat() for t in self.period_starts],
            "labels": self.labels,
        }

    def to_geojson(self, network: RoadNetwork) -> dict:
        features = []
        for link in network.links:
            if link.link_id not in self.labels:
                continue
            features.append({
                "type": "Feature",
                "geometry": {
                    "type": "LineString",
                    "coordinates": [[p.lon, p.lat] for p in link.geometry],
                },
                "properties": {
                    "link_id": link.link_id,
                    "labels": self.labels[link.link_id],
                },
            })
        return {"type": "FeatureCollection", "features": features}


@dataclass(frozen=True)
class PredictionWithCI:
    link_id: str
    horizon_h: int
    mean: float
    std: float
    ci95_low: float
    ci95_high: float
    generated_at: datetime

    def to_jsonable(self) -> dict:
        return {
            "link_id": self.link_id,
            "horizon_h": self.horizon_h,
            "mean": self.mean,
            "std": self.std,
            "ci95_low": self.ci95_low,
            "ci95_high": self.ci95_high,
            "generated_at": self.generated_at.isoformat(),
        }


def regular_stats_for(ds: SyntheticDataset, hurricane: HurricaneEvent,
                      utc_offset_h: float = DEFAULT_UTC_OFFSET_H) -> dict:
    window_start = event_window_start(hurricane, utc_offset_h)
    stats = {}
    for link_id, series in ds.series[hurricane.name].items():
        stats[link_id] = compute_regular_stats(series, window_start)
    return stats


def prepare_longterm(ds: SyntheticDataset,
                     utc_offset_h: float = DEFAULT_UTC_OFFSET_H):
    """Labeled samples pooled across every hurricane in the dataset."""
    samples = []
    total_missing = 0
    total_degenerate = 0
    for hurricane in ds.hurricanes:
        stats = regular_stats_for(ds, hurricane, utc_offset_h)
        built, counts = build_longterm_samples(
            list(ds.network.links), hurricane, ds.series[hurricane.name],
            stats, utc_offset_h)
        samples.extend(built)
        total_missing += counts.n_missing_data
        total_degenerate += counts.n_degenerate_baseline
    return samples, {"missing": total_missing, "degenerate": total_degenerate}


def _feature_columns(dropped_features: frozenset[str]) -> np.ndarray:
    unknown = dropped_features - set(LONGTERM_FEATURES)
    if unknown:
        raise ValidationError(f"unknown feature name(s): {sorted(unknown)}")
    keep = [i for i, name in enumerate(LONGTERM_FEATURES)
            if name not in dropped_features]
    if not keep:
        raise ValidationError("cannot drop every feature")
    return np.array(keep, dtype=np.int64)


def run_longterm_experiment(
    ds: SyntheticDataset,
    plan: ExperimentPlan,
    adam_cfg: AdamConfig | None = None,
    knn_k: int = 5,
    dropped_features: frozenset[str] = frozenset(),
    hidden=(64, 64, 64),
    utc_offset_h: float = DEFAULT_UTC_OFFSET_H,
) -> ExperimentResult:
    """Train and evaluate the congestion classifier and the KNN baseline.

    Five stratified re-splits, training-split balancing, z-score
    normalization fitted per repeat on the balanced training split.
    """
    adam_cfg = adam_cfg or AdamConfig(batch_size=32)
    samples, exclusions = prepare_longterm(ds, utc_offset_h)
    warnings = []
    if len({s.hurricane for s in samples}) < 2:
        warnings.append("single-hurricane dataset: generalization is untested")
    columns = _feature_columns(dropped_features)
    feature_names = tuple(LONGTERM_FEATURES[i] for i in columns)
    passthrough = np.asarray(LONGTERM_PASSTHROUGH)[columns]

    def one_repeat(run: RepeatRun):
        x_tr, y_tr = longterm_arrays(run.train)
        x_va, y_va = longterm_arrays(run.val)
        x_te, y_te = longterm_arrays(run.test)
        x_tr, x_va, x_te = (x[:, columns] for x in (x_tr, x_va, x_te))
        norm = fit_normalizer(x_tr, passthrough)
        xn_tr = apply_normalizer(norm, x_tr)
        xn_va = apply_normalizer(norm, x_va)
        xn_te = apply_normalizer(norm, x_te)
        model = init_mlp(len(columns), hidden=hidden, seed=run.seed)
        model.normalization = norm
        model.feature_names = feature_names
        trained, history = train_classifier(model, (xn_tr, y_tr), (xn_va, y_va),
                                            adam_cfg, run.seed)
        mlp_preds = mlp_forward(trained, xn_te).argmax(axis=1)
        index = build_knn_index(xn_tr, y_tr, k=knn_k)
        knn_preds = knn_classify_batch(index, xn_te)
        return {
            "mlp": classification_report(y_te, mlp_preds),
            "knn": classification_report(y_te, knn_preds),
            "selected_epoch": history.selected_epoch,
        }

    per_repeat = run_repeats(samples, plan, one_repeat, stratified=True,
                             balance=True)
    aggregated = {
        name: aggregate_repeats([r[name] for r in per_repeat])
        for name in ("mlp", "knn")
    }
    snapshot = {
        "task": "long",
        "dataset": _dataset_snapshot(ds),
        "plan_seeds": list(plan.seeds),
        "adam": vars(adam_cfg),
        "hidden": list(hidden),
        "knn_k": knn_k,
        "dropped_features": sorted(dropped_features),
        "utc_offset_h": utc_offset_h,
        "kernel_backend": kernels.BACKEND,
        "exclusions": exclusions,
    }
    return ExperimentResult(
        task="long", aggregated=aggregated, per_repeat=per_repeat,
        config_snapshot=snapshot, seeds=plan.seeds, warnings=tuple(warnings))


@dataclass(frozen=True)
class AblationResult:
    full: ExperimentResult
    ablated: ExperimentResult
    accuracy_delta: float          # full minus ablated, mean over repeats

    def to_jsonable(self) -> dict:
        return {
            "full": self.full.to_jsonable(),
            "ablated": self.ablated.to_jsonable(),
            "accuracy_delta": self.accuracy_delta,
        }


def run_ablation(
    ds: SyntheticDataset,
    plan: ExperimentPlan,
    dropped_features: frozenset[str] = frozenset(
        {"distance_to_landfall", "time_to_landfall"}),
    adam_cfg: AdamConfig | None = None,
    utc_offset_h: float = DEFAULT_UTC_OFFSET_H,
) -> AblationResult:
    """Paired runs with and without the hurricane spatial-temporal features."""
    _feature_columns(frozenset(dropped_features))   # validate names up front
    full = run_longterm_experiment(ds, plan, adam_cfg=adam_cfg,
                                   utc_offset_h=utc_offset_h)
    ablated = run_longterm_experiment(ds, plan, adam_cfg=adam_cfg,
                                      dropped_features=frozenset(dropped_features),
                                      utc_offset_h=utc_offset_h)
    delta = (full.aggregated["mlp"].mean["accuracy"]
             - ablated.aggregated["mlp"].mean["accuracy"])
    return AblationResult(full=full, ablated=ablated, accuracy_delta=delta)


def _dataset_snapshot(ds: SyntheticDataset) -> dict:
    return {
        "n_links": len(ds.network),
        "hurricanes": [h.name for h in ds.hurricanes],
        "seed": ds.config.rng_seed,
    }


def _truth_label_grid(ds: SyntheticDataset, utc_offset_h: float):
    """(hurricane, link_id, period_index) -> label, from the observed speeds."""
    samples, _ = prepare_longterm(ds, utc_offset_h)
    grid = {}
    for s in samples:
        grid[(s.hurricane, s.link_id, s.period_index)] = int(s.label)
    return grid


@dataclass
class _SequencePool:
    """Reference table of candidate sequences for one horizon."""

    keys: list            # (hurricane_name, link_id, target_idx)
    states: np.ndarray    # congestion label of the target's period
    heavy_link: np.ndarray


def _collect_sequence_refs(ds: SyntheticDataset, horizon_h: int,
                           truth_grid: dict, window_len: int,
                           utc_offset_h: float) -> _SequencePool:
    keys = []
    states = []
    heavy = []
    heavy_links = {
        (h, l) for (h, l, _p), lab in truth_grid.items()
        if lab == int(CongestionLabel.HEAVY_CONGESTION)
    }
    for hurricane in ds.hurricanes:
        window_start = event_window_start(hurricane, utc_offset_h)
        window_end = window_start + timedelta(days=7)
        for link_id, series in ds.series[hurricane.name].items():
            for target_idx in valid_window_targets(series, horizon_h, window_len):
                target_time = series.start + target_idx * series.interval
                if not window_start <= target_time < window_end:
                    continue
                period = int((target_time - window_start).total_seconds()
                             // (PERIOD_HOURS * 3600))
                state = truth_grid.get((hurricane.name, link_id, period))
                if state is None:
                    continue
                keys.append((hurricane.name, link_id, target_idx))
                states.append(state)
                heavy.append((hurricane.name, link_id) in heavy_links)
    return _SequencePool(
        keys=keys,
        states=np.array(states, dtype=np.int64),
        heavy_link=np.array(heavy, dtype=bool),
    )


def _materialize(ds: SyntheticDataset, pool: _SequencePool, idx: np.ndarray,
                 horizon_h: int, stats_by_hurricane: dict, window_len: int,
                 utc_offset_h: float):
    x = np.empty((len(idx), window_len, len(SHORTTERM_FEATURES)))
    y = np.empty(len(idx))
    for row, i in enumerate(idx):
        hurr_name, link_id, target_idx = pool.keys[i]
        hurricane = next(h for h in ds.hurricanes if h.name == hurr_name)
        seq = materialize_sequence(
            ds.network.by_id[link_id], hurricane,
            ds.series[hurr_name][link_id],
            stats_by_hurricane[hurr_name][link_id],
            target_idx, horizon_h, window_len, utc_offset_h)
        x[row] = seq.steps
        y[row] = seq.target_speed
    return x, y


def _stratified_cap(states: np.ndarray, idx: np.ndarray, cap: int,
                    seed: int) -> np.ndarray:
    """Seeded subsample of `idx` to at most `cap`, proportional per state."""
    if cap is None or len(idx) <= cap:
        return idx
    rng = np.random.default_rng(seed)
    chosen = []
    frac = cap / len(idx)
    for state in np.unique(states[idx]):
        members = idx[states[idx] == state]
        take = max(1, int(round(len(members) * frac)))
        chosen.append(rng.choice(members, size=min(take, len(members)),
                                 replace=False))
    out = np.concatenate(chosen)
    return np.sort(out)


def run_shortterm_experiment(
    ds: SyntheticDataset,
    plan: ExperimentPlan,
    horizons=DEFAULT_HORIZONS,
    adam_cfg: AdamConfig | None = None,
    window_len: int = 24,
    hidden: int = 64,
    lstm_layers: int = 2,
    rnn_layers: int = 1,
    dropout: float = 0.5,
    max_train_sequences: int | None = 6000,
    max_val_sequences: int | None = 1500,
    utc_offset_h: float = DEFAULT_UTC_OFFSET_H,
) -> ExperimentResult:
    """LSTM vs vanilla RNN vs persistence, evaluated on heavy-congestion links.

    Sequences are stratified (split and balanced) by the congestion state of
    the period containing each target. Training pools are capped per repeat
    to keep desk-scale runtime; the caps are part of the config snapshot.
    """
    adam_cfg = adam_cfg or AdamConfig(batch_size=64)
    truth_grid = _truth_label_grid(ds, utc_offset_h)
    stats_by_hurricane = {
        h.name: regular_stats_for(ds, h, utc_offset_h) for h in ds.hurricanes
    }
    per_repeat = [{"seed": seed, "horizons": {}} for seed in plan.seeds]
    for horizon in horizons:
        if not 1 <= horizon <= 6:
            raise ValidationError(f"horizon {horizon} outside [1, 6]")
        pool = _collect_sequence_refs(ds, horizon, truth_grid, window_len,
                                      utc_offset_h)
        n = len(pool.keys)
        if n == 0:
            raise ValidationError(f"no usable sequences at horizon {horizon}")
        for repeat_index, seed in enumerate(plan.seeds):
            spec = SplitSpec(stratified=True, seed=seed)
            idx_tr, idx_va, idx_te = split_indices(n, spec, pool.states)
            idx_tr = _stratified_cap(pool.states, idx_tr, max_train_sequences, seed)
            idx_va = _stratified_cap(pool.states, idx_va, max_val_sequences, seed)
            balanced = idx_tr[oversample_indices(pool.states[idx_tr], seed)]
            idx_te_heavy = idx_te[pool.heavy_link[idx_te]]
            if len(idx_te_heavy) == 0:
                raise ValidationError(
                    "no heavy-congestion links in the test split")
            x_tr, y_tr = _materialize(ds, pool, balanced, horizon,
                                      stats_by_hurricane, window_len, utc_offset_h)
            x_va, y_va = _materialize(ds, pool, idx_va, horizon,
                                      stats_by_hurricane, window_len, utc_offset_h)
            x_te, y_te = _materialize(ds, pool, idx_te_heavy, horizon,
                                      stats_by_hurricane, window_len, utc_offset_h)
            norm = fit_normalizer(x_tr, SHORTTERM_PASSTHROUGH)
            y_mean = float(y_tr.mean())
            y_std = float(y_tr.std()) or 1.0
            xn_tr = apply_normalizer(norm, x_tr)
            xn_va = apply_normalizer(norm, x_va)
            xn_te = apply_normalizer(norm, x_te)
            yn_tr = (y_tr - y_mean) / y_std
            yn_va = (y_va - y_mean) / y_std
            reports = {}
            lstm = init_lstm(len(SHORTTERM_FEATURES), hidden, lstm_layers,
                             dropout, seed)
            lstm.normalization = norm
            lstm.feature_names = SHORTTERM_FEATURES
            lstm.target_mean, lstm.target_std = y_mean, y_std
            lstm.horizon_h = horizon
            trained_lstm, _ = train_regressor(lstm, (xn_tr, yn_tr),
                                              (xn_va, yn_va), adam_cfg, seed)
            preds = forward_batch(trained_lstm, xn_te) * y_std + y_mean
            reports["lstm"] = regression_report(y_te, preds)
            rnn = init_rnn(len(SHORTTERM_FEATURES), hidden, rnn_layers, seed)
            rnn.normalization = norm
            rnn.feature_names = SHORTTERM_FEATURES
            rnn.target_mean, rnn.target_std = y_mean, y_std
            rnn.horizon_h = horizon
            trained_rnn, _ = train_regressor(rnn, (xn_tr, yn_tr),
                                             (xn_va, yn_va), adam_cfg, seed)
            preds = forward_batch(trained_rnn, xn_te) * y_std + y_mean
            reports["rnn"] = regression_report(y_te, preds)
            reports["persistence"] = regression_report(
                y_te, persistence_forecast_batch(x_te))
            per_repeat[repeat_index]["horizons"][horizon] = reports
    aggregated = {
        model: {
            horizon: aggregate_repeats(
                [r["horizons"][horizon][model] for r in per_repeat])
            for horizon in horizons
        }
        for model in ("lstm", "rnn", "persistence")
    }
    snapshot = {
        "task": "short",
        "dataset": _dataset_snapshot(ds),
        "plan_seeds": list(plan.seeds),
        "adam": vars(adam_cfg),
        "horizons": list(horizons),
        "window_len": window_len,
        "hidden": hidden,
        "lstm_layers": lstm_layers,
        "rnn_layers": rnn_layers,
        "dropout": dropout,
        "max_train_sequences": max_train_sequences,
        "max_val_sequences": max_val_sequences,
        "utc_offset_h": utc_offset_h,
        "kernel_backend": kernels.BACKEND,
    }
    return ExperimentResult(
        task="short", aggregated=aggregated, per_repeat=per_repeat,
        config_snapshot=snapshot, seeds=plan.seeds)


def rerun_from_snapshot(snapshot: dict) -> ExperimentResult:
    """Re-execute an experiment from its config snapshot."""
    ds = generate_dataset(
        n_links=snapshot["dataset"]["n_links"],
        hurricane_names=snapshot["dataset"]["hurricanes"],
        seed=snapshot["dataset"]["seed"],
    )
    plan = ExperimentPlan(n_repeats=len(snapshot["plan_seeds"]),
                          seeds=tuple(snapshot["plan_seeds"]))
    adam = AdamConfig(**snapshot["adam"])
    if snapshot["task"] == "long":
        return run_longterm_experiment(
            ds, plan, adam_cfg=adam,
            knn_k=snapshot["knn_k"],
            dropped_features=frozenset(snapshot["dropped_features"]),
            hidden=tuple(snapshot["hidden"]),
            utc_offset_h=snapshot["utc_offset_h"],
        )
    if snapshot["task"] == "short":
        return run_shortterm_experiment(
            ds, plan, horizons=tuple(snapshot["horizons"]), adam_cfg=adam,
            window_len=snapshot["window_len"], hidden=snapshot["hidden"],
            lstm_layers=snapshot["lstm_layers"], rnn_layers=snapshot["rnn_layers"],
            dropout=snapshot["dropout"],
            max_train_sequences=snapshot["max_train_sequences"],
            max_val_sequences=snapshot["max_val_sequences"],
            utc_offset_h=snapshot["utc_offset_h"],
        )
    raise ValidationError(f"unknown snapshot task {snapshot['task']!r}")


def predict_congestion_grid(
    model: MlpModel,
    network: RoadNetwork,
    hurricane: HurricaneEvent,
    regular_stats: dict,
    utc_offset_h: float = DEFAULT_UTC_OFFSET_H,
) -> CongestionGrid:
    """28 argmax labels per link from link/hurricane features alone."""
    if model.normalization is None or not model.feature_names:
        raise ValidationError("model lacks normalization stats or feature schema")
    columns = []
    for name in model.feature_names:
        if name not in LONGTERM_FEATURES:
            raise ValidationError(f"model feature {name!r} is not a long-term feature")
        columns.append(LONGTERM_FEATURES.index(name))
    starts = period_starts(hurricane, utc_offset_h)
    labels: dict[str, list[int]] = {}
    rows = []
    link_ids = []
    for link in network.links:
        stats = regular_stats.get(link.link_id)
        if stats is None or stats.mean_7d <= 0:
            continue
        onehot = direction_onehot(link.direction)
        static = _static_block(link, hurricane, stats)
        for start in starts:
            rows.append(onehot + (
                static["lanes"], static["mean_7d"], static["std_7d"],
                static["lat"], static["lon"], static["distance_to_landfall"],
                float(time_of_day_slot(start, utc_offset_h)),
                float(slots_to_landfall(start, hurricane.landfall_time)),
                static["category"], static["landfall_zone"],
            ))
        link_ids.append(link.link_id)
    if not rows:
        raise ValidationError("no links with usable regular stats")
    x = np.asarray(rows, dtype=np.float64)[:, columns]
    probs = mlp_forward(model, apply_normalizer(model.normalization, x))
    preds = probs.argmax(axis=1).reshape(len(link_ids), PERIODS_PER_WINDOW)
    for i, link_id in enumerate(link_ids):
        labels[link_id] = [int(v) for v in preds[i]]
    return CongestionGrid(hurricane=hurricane.name, period_starts=starts,
                          labels=labels)


def predict_speed_with_ci(
    model,
    history: SpeedSeries,
    link,
    hurricane: HurricaneEvent,
    stats,
    horizon_h: int,
    t_passes: int = 50,
    seed: int = 0,
    utc_offset_h: float = DEFAULT_UTC_OFFSET_H,
) -> PredictionWithCI:
    """MC-dropout speed prediction from the most recent 24 h of history."""
    if model.normalization is None:
        raise ValidationError("model lacks normalization stats")
    window_len = 24
    if len(history) < window_len:
        raise ValidationError(
            f"need at least {window_len} hourly observations, got {len(history)}")
    tail = history.values[-window_len:]
    if not np.all(np.isfinite(tail)):
        raise ValidationError("history window contains missing values")
    steps = assemble_history_steps(link, hurricane, history, stats,
                                   len(history) - window_len, window_len,
                                   utc_offset_h)
    xn = apply_normalizer(model.normalization, steps)
    mc = mc_dropout_predict(model, xn, t_passes=t_passes, rng_seed=seed)
    mean = mc.mean * model.target_std + model.target_mean
    std = mc.std * model.target_std
    return PredictionWithCI(
        link_id=link.link_id,
        horizon_h=horizon_h,
        mean=mean,
        std=std,
        ci95_low=mean - 1.96 * std,
        ci95_high=mean + 1.96 * std,
        generated_at=datetime.now(timezone.utc),
    )
