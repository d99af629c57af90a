"""Central-finite-difference verification of the analytic gradients."""

from __future__ import annotations

import numpy as np

from . import mlp as mlp_mod
from . import recurrent as rec_mod
from .mlp import MlpModel


def _loss_fns(model):
    if isinstance(model, MlpModel):
        return (lambda m, x, y: mlp_mod.loss_and_grads(m, x, y))
    return (lambda m, x, y: rec_mod.loss_and_grads(m, x, y, dropout_active=False))


def gradient_check(model, x: np.ndarray, y: np.ndarray, epsilon: float = 1e-5,
                   max_params: int = 200, seed: int = 0) -> float:
    """Max relative error between analytic and numeric gradients.

    A random subset of up to `max_params` scalar parameters is probed; the
    denominator is floored so exact-zero gradients compare cleanly.
    """
    loss_and_grads = _loss_fns(model)
    _, grads = loss_and_grads(model, x, y)
    params = [p for _, p in model.parameters()]
    sizes = [p.size for p in params]
    total = sum(sizes)
    rng = np.random.default_rng(seed)
    chosen = rng.choice(total, size=min(max_params, total), replace=False)
    offsets = np.cumsum([0] + sizes)
    max_rel = 0.0
    for flat_idx in chosen:
        p_idx = int(np.searchsorted(offsets, flat_idx, side="right") - 1)
        local = int(flat_idx - offsets[p_idx])
        param = params[p_idx]
        flat = param.reshape(-1)
        original = flat[local]
        flat[local] = original + epsilon
        loss_plus, _ = loss_and_grads(model, x, y)
        flat[local] = original - epsilon
        loss_minus, _ = loss_and_grads(model, x, y)
        flat[local] = original
        numeric = (loss_plus - loss_minus) / (2.0 * epsilon)
        analytic = grads[p_idx].reshape(-1)[local]
        rel = abs(analytic - numeric) / max(abs(analytic) + abs(numeric), 1e-12)
        max_rel = max(max_rel, rel)
    return max_rel
