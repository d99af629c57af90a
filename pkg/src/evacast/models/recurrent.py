"""LSTM and vanilla-RNN regressors with hand-rolled BPTT.

Sequences are (batch, time, features); the prediction is a dense readout of
the top layer's final hidden state. Dropout sits between stacked layers and
before the readout (inverted scaling), never inside the cell state, which
is what Monte Carlo dropout inference relies on.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .. import _kernels as kernels
from ..errors import TrainingDivergedError, ValidationError
from ..features import NormalizationStats
from .adam import AdamConfig, AdamState, TrainHistory
from .mlp import glorot_uniform


@dataclass
class RecurrentLayer:
    wx: np.ndarray   # (input_size, gates*hidden)
    wh: np.ndarray   # (hidden, gates*hidden)
    b: np.ndarray    # (gates*hidden,)


@dataclass
class _SequenceModel:
    layers: list[RecurrentLayer]
    head_w: np.ndarray           # (hidden, 1)
    head_b: np.ndarray           # (1,)
    dropout: float = 0.0
    normalization: NormalizationStats | None = None
    feature_names: tuple[str, ...] = ()
    target_mean: float = 0.0
    target_std: float = 1.0
    horizon_h: int | None = None

    @property
    def input_size(self) -> int:
        return self.layers[0].wx.shape[0]

    @property
    def hidden_size(self) -> int:
        return self.layers[0].wh.shape[0]

    def parameters(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for i, layer in enumerate(self.layers):
            out.append((f"layer{i}.wx", layer.wx))
            out.append((f"layer{i}.wh", layer.wh))
            out.append((f"layer{i}.b", layer.b))
        out.append(("head.w", self.head_w))
        out.append(("head.b", self.head_b))
        return out

    def copy(self):
        return replace(
            self,
            layers=[RecurrentLayer(l.wx.copy(), l.wh.copy(), l.b.copy())
                    for l in self.layers],
            head_w=self.head_w.copy(),
            head_b=self.head_b.copy(),
        )


@dataclass
class LstmModel(_SequenceModel):
    pass


@dataclass
class RnnModel(_SequenceModel):
    pass


def init_lstm(input_size: int, hidden: int = 64, n_layers: int = 2,
              dropout: float = 0.5, seed: int = 0) -> LstmModel:
    rng = np.random.default_rng(seed)
    layers = []
    for i in range(n_layers):
        in_size = input_size if i == 0 else hidden
        layers.append(RecurrentLayer(
            wx=glorot_uniform(rng, in_size, 4 * hidden),
            wh=glorot_uniform(rng, hidden, 4 * hidden),
            b=np.zeros(4 * hidden),
        ))
    return LstmModel(layers=layers, head_w=glorot_uniform(rng, hidden, 1),
                     head_b=np.zeros(1), dropout=dropout)


def init_rnn(input_size: int, hidden: int = 64, n_layers: int = 1,
             seed: int = 0) -> RnnModel:
    rng = np.random.default_rng(seed)
    layers = []
    for i in range(n_layers):
        in_size = input_size if i == 0 else hidden
        layers.append(RecurrentLayer(
            wx=glorot_uniform(rng, in_size, hidden),
            wh=glorot_uniform(rng, hidden, hidden),
            b=np.zeros(hidden),
        ))
    return RnnModel(layers=layers, head_w=glorot_uniform(rng, hidden, 1),
                    head_b=np.zeros(1), dropout=0.0)


def lstm_cell_step(params: RecurrentLayer, x_t: np.ndarray, h_prev: np.ndarray,
                   c_prev: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """One gated update; accepts single vectors or batches."""
    single = x_t.ndim == 1
    x2 = np.atleast_2d(np.asarray(x_t, dtype=np.float64))
    h2 = np.atleast_2d(np.asarray(h_prev, dtype=np.float64))
    c2 = np.ascontiguousarray(np.atleast_2d(np.asarray(c_prev, dtype=np.float64)))
    if x2.shape[1] != params.wx.shape[0] or h2.shape[1] != params.wh.shape[0]:
        raise ValidationError("lstm_cell_step: input/state width mismatch")
    zbar = np.ascontiguousarray(x2 @ params.wx + h2 @ params.wh + params.b)
    c = np.empty_like(c2)
    tc = np.empty_like(c2)
    h = np.empty_like(c2)
    kernels.lstm_step_forward(zbar, c2, c, tc, h)
    return (h[0], c[0]) if single else (h, c)


def _dropout_mask(rng: np.random.Generator, shape, rate: float) -> np.ndarray:
    return (rng.random(shape) >= rate) / (1.0 - rate)


def _forward(model: _SequenceModel, x: np.ndarray, dropout_active: bool,
             rng: np.random.Generator | None, want_cache: bool):
    """Run the stack over (time, batch, feature) slabs.

    Everything is preallocated per layer: the input projection doubles as
    the activated-gate cache (the step kernels work in place), so the inner
    loop is one GEMM plus one fused kernel call per timestep.
    """
    is_lstm = isinstance(model, LstmModel)
    batch, t_len, width = x.shape
    if width != model.input_size:
        raise ValidationError(
            f"sequence width {width} != model input size {model.input_size}")
    use_dropout = dropout_active and model.dropout > 0.0
    if use_dropout and rng is None:
        raise ValidationError("dropout_active requires an RNG")
    hidden = model.hidden_size
    cache = ({"inputs": [], "hs": [], "cs": [], "gates": [], "tanh_c": [],
              "masks": []} if want_cache else None)
    layer_in = np.ascontiguousarray(np.asarray(x, dtype=np.float64)
                                    .transpose(1, 0, 2))       # (T, B, F)
    zeros = np.zeros((batch, hidden))
    for li, layer in enumerate(model.layers):
        n_gates = layer.b.size
        gates = (layer_in.reshape(t_len * batch, -1) @ layer.wx)
        gates += layer.b
        gates = gates.reshape(t_len, batch, n_gates)
        hs = np.empty((t_len, batch, hidden))
        cs = np.empty((t_len, batch, hidden)) if is_lstm else None
        tanh_c = np.empty((t_len, batch, hidden)) if is_lstm else None
        recur = np.empty((batch, n_gates))
        h = zeros
        c = zeros
        for t in range(t_len):
            np.matmul(h, layer.wh, out=recur)
            g_t = gates[t]
            g_t += recur
            if is_lstm:
                kernels.lstm_step_forward(g_t, c, cs[t], tanh_c[t], hs[t])
                c = cs[t]
            else:
                kernels.rnn_step_forward(g_t, hs[t])
            h = hs[t]
        if want_cache:
            cache["inputs"].append(layer_in)
            cache["hs"].append(hs)
            cache["cs"].append(cs)
            cache["tanh_c"].append(tanh_c)
            cache["gates"].append(gates)
        if li < len(model.layers) - 1:
            mask = (_dropout_mask(rng, hs.shape, model.dropout)
                    if use_dropout else None)
            layer_in = hs * mask if mask is not None else hs
        else:
            head_mask = (_dropout_mask(rng, (batch, hidden), model.dropout)
                         if use_dropout else None)
            h_last = hs[-1] * head_mask if head_mask is not None else hs[-1]
        if want_cache:
            cache["masks"].append(mask if li < len(model.layers) - 1 else head_mask)
    preds = (h_last @ model.head_w + model.head_b)[:, 0]
    if want_cache:
        cache["h_head"] = h_last
        return preds, cache
    return preds, None


def sequence_forward(model: _SequenceModel, seq: np.ndarray,
                     dropout_active: bool = False,
                     rng: np.random.Generator | None = None) -> float:
    """Predict one scalar from a (time, features) sequence."""
    seq = np.asarray(seq, dtype=np.float64)
    if seq.ndim != 2:
        raise ValidationError("sequence must be 2-D (time, features)")
    preds, _ = _forward(model, seq[None], dropout_active, rng, want_cache=False)
    return float(preds[0])


def forward_batch(model: _SequenceModel, x: np.ndarray,
                  dropout_active: bool = False,
                  rng: np.random.Generator | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ValidationError("batch must be 3-D (batch, time, features)")
    preds, _ = _forward(model, x, dropout_active, rng, want_cache=False)
    return preds


def loss_and_grads(model: _SequenceModel, x: np.ndarray, y: np.ndarray,
                   dropout_active: bool = False,
                   rng: np.random.Generator | None = None):
    """Mean squared error and full-BPTT gradients aligned with parameters()."""
    is_lstm = isinstance(model, LstmModel)
    preds, cache = _forward(model, np.ascontiguousarray(x, dtype=np.float64),
                            dropout_active, rng, want_cache=True)
    batch, t_len, _ = x.shape
    err = preds - y
    loss = float(np.mean(err ** 2))
    dpred = (2.0 * err / batch)[:, None]            # (B, 1)
    d_head_w = cache["h_head"].T @ dpred
    d_head_b = dpred.sum(axis=0)
    dh_last = (dpred @ model.head_w.T)
    head_mask = cache["masks"][-1]
    if head_mask is not None:
        dh_last = dh_last * head_mask
    n_layers = len(model.layers)
    hidden = model.hidden_size
    zeros = np.zeros((batch, hidden))
    grads_by_layer = []
    d_above = None                                   # (T, B, H) grad on layer output
    for li in range(n_layers - 1, -1, -1):
        layer = model.layers[li]
        hs = cache["hs"][li]
        cs = cache["cs"][li]
        n_gates = layer.b.size
        dz = np.empty((t_len, batch, n_gates))
        wh_t = np.ascontiguousarray(layer.wh.T)
        dh = np.zeros((batch, hidden))
        dc = np.zeros((batch, hidden))
        for t in range(t_len - 1, -1, -1):
            if d_above is not None:
                dh += d_above[t]
            if li == n_layers - 1 and t == t_len - 1:
                dh += dh_last
            if is_lstm:
                kernels.lstm_step_backward(
                    dh, dc, cache["gates"][li][t],
                    cs[t - 1] if t > 0 else zeros,
                    cache["tanh_c"][li][t], dz[t])
            else:
                kernels.rnn_step_backward(dh, hs[t], dz[t])
            if t > 0:
                np.matmul(dz[t], wh_t, out=dh)
        flat_dz = dz.reshape(t_len * batch, -1)
        flat_in = cache["inputs"][li].reshape(t_len * batch, -1)
        h_prev = np.concatenate([zeros[None], hs[:-1]]).reshape(t_len * batch, -1)
        d_wx = flat_in.T @ flat_dz
        d_wh = h_prev.T @ flat_dz
        d_b = flat_dz.sum(axis=0)
        grads_by_layer.append((d_wx, d_wh, d_b))
        if li > 0:
            d_above = (flat_dz @ layer.wx.T).reshape(t_len, batch, -1)
            mask = cache["masks"][li - 1]
            if mask is not None:
                d_above = d_above * mask
    grads: list[np.ndarray] = []
    for d_wx, d_wh, d_b in reversed(grads_by_layer):
        grads.extend([d_wx, d_wh, d_b])
    grads.extend([d_head_w, d_head_b])
    return loss, grads


def rmse(model: _SequenceModel, x: np.ndarray, y: np.ndarray,
         batch_size: int = 512) -> float:
    errs = []
    for start in range(0, len(y), batch_size):
        preds = forward_batch(model, x[start:start + batch_size])
        errs.append((preds - y[start:start + batch_size]) ** 2)
    return float(np.sqrt(np.mean(np.concatenate(errs))))


def train_regressor(model: _SequenceModel, train, val, adam_cfg: AdamConfig,
                    seed: int):
    """Adam on MSE in normalized-speed space; keeps the best-validation-RMSE epoch."""
    x_train, y_train = train
    x_val, y_val = val
    x_train = np.ascontiguousarray(x_train, dtype=np.float64)
    rng = np.random.default_rng(seed)
    work = model.copy()
    params = [p for _, p in work.parameters()]
    opt = AdamState(params)
    history = TrainHistory()
    best = work.copy()
    best_rmse = np.inf
    n = len(y_train)
    for epoch in range(adam_cfg.epochs):
        perm = rng.permutation(n)
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, n, adam_cfg.batch_size):
            idx = perm[start:start + adam_cfg.batch_size]
            loss, grads = loss_and_grads(work, x_train[idx], y_train[idx],
                                         dropout_active=True, rng=rng)
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss {loss}", epoch=epoch, batch=n_batches)
            opt.step(params, grads, adam_cfg)
            epoch_loss += loss
            n_batches += 1
        val_rmse = rmse(work, x_val, y_val)
        history.train_loss.append(epoch_loss / max(n_batches, 1))
        history.val_loss.append(val_rmse ** 2)
        history.val_metric.append(val_rmse)
        if val_rmse < best_rmse:
            best_rmse = val_rmse
            best = work.copy()
            history.selected_epoch = epoch
    for attr in ("normalization", "feature_names", "target_mean", "target_std",
                 "horizon_h"):
        setattr(best, attr, getattr(model, attr))
    return best, history


@dataclass(frozen=True)
class MCPrediction:
    mean: float
    std: float
    ci95_low: float
    ci95_high: float


def mc_dropout_predict(model: _SequenceModel, seq: np.ndarray, t_passes: int = 50,
                       rng_seed: int = 0) -> MCPrediction:
    """Stochastic forward passes with dropout live; population std, 95% CI."""
    if t_passes < 2:
        raise ValidationError("mc_dropout_predict needs at least 2 passes")
    rng = np.random.default_rng(rng_seed)
    seq = np.asarray(seq, dtype=np.float64)
    preds = np.array([
        sequence_forward(model, seq, dropout_active=True, rng=rng)
        for _ in range(t_passes)
    ])
    mean = float(preds.mean())
    std = float(np.sqrt(np.mean((preds - mean) ** 2)))
    return MCPrediction(mean=mean, std=std,
                        ci95_low=mean - 1.96 * std,
                        ci95_high=mean + 1.96 * std)
