"""Exact gradients through the unrolled cells, Adam with L2 decay, clipping, and the training loop.

Gradients are hand-derived reverse-mode adjoints of the forward recurrences
in :mod:`lnnforecast.cells`; ``tests/test_training.py`` checks them against
central finite differences for every architecture.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from lnnforecast.cells import (
    DECAY_FLOOR,
    TAU_FLOOR,
    ArchKind,
    ModelParams,
    forward_batch,
)
from lnnforecast.errors import AllBatchesSkipped, EmptyBatch, NonFiniteForward

log = logging.getLogger(__name__)

Grads = dict[str, np.ndarray]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 30
    weight_decay: float = 1e-5
    clip_norm: float = 1.0
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if not self.clip_norm > 0:
            raise ValueError("clip_norm must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")


@dataclass
class AdamState:
    m: Grads
    v: Grads
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, p: ModelParams) -> AdamState:
        return cls({k: np.zeros_like(a) for k, a in p.arrays.items()}, {k: np.zeros_like(a) for k, a in p.arrays.items()})


@dataclass
class TrainResult:
    params: ModelParams
    losses: list[float] = field(default_factory=list)
    skipped: list[int] = field(default_factory=list)
    adam: AdamState | None = None

    def write_loss_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "mean_loss", "batches_skipped"])
            for epoch, (loss, skipped) in enumerate(zip(self.losses, self.skipped)):
                w.writerow([epoch, repr(float(loss)), skipped])


def mse_loss(predictions, targets) -> float:
    predictions = np.asarray(predictions, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if predictions.shape != targets.shape:
        raise ValueError(f"shape mismatch {predictions.shape} vs {targets.shape}")
    if predictions.size == 0:
        raise EmptyBatch("mse of an empty batch")
    r = predictions - targets
    return float(np.mean(r * r))


def stack_samples(samples):
    """Stack ``SequenceSample`` objects into (X, gaps, y) arrays."""
    if len(samples) == 0:
        raise EmptyBatch("no samples")
    X = np.stack([s.window for s in samples]).astype(np.float64)
    G = np.stack([s.gaps for s in samples]).astype(np.float64)
    y = np.array([s.target for s in samples], dtype=np.float64)
    return X, G, y


# -- adjoints ---------------------------------------------------------------------


def _lstm_backward(p, tr, dh, g, d):
    a = p.arrays
    dc = np.zeros_like(dh)
    for x, h, c, f, i, o, cc, tc in reversed(tr.steps):
        do = dh * tc
        dc = dc + dh * o * (1.0 - tc * tc)
        dz = {
            "f": dc * c * f * (1.0 - f),
            "i": dc * cc * i * (1.0 - i),
            "o": do * o * (1.0 - o),
            "c": dc * i * (1.0 - cc * cc),
        }
        dc = dc * f
        dh = np.zeros_like(dh)
        for gate, dzg in dz.items():
            g[f"W_{gate}"] += dzg.T @ x
            g[f"U_{gate}"] += dzg.T @ h
            g[f"b_{gate}"] += dzg.sum(axis=0)
            dh += dzg @ a[f"U_{gate}"]


def _strict_cfc_backward(p, tr, dh, g, d):
    a = p.arrays
    for u, s, gg, f, gate in reversed(tr.steps):
        dz_gate = dh * (f - gg) * gate * (1.0 - gate)
        dz_g = dh * (1.0 - gate) * (1.0 - gg * gg)
        dz_f = dh * gate * (1.0 - f * f)
        ds = dz_g @ a["W_g"] + dz_f @ a["W_f"] + dz_gate @ (a["W_a"] + a["W_b"])
        for head, dz in (("g", dz_g), ("f", dz_f), ("a", dz_gate), ("b", dz_gate)):
            g[f"W_{head}"] += dz.T @ s
            g[f"b_{head}"] += dz.sum(axis=0)
        dz_s = ds * (1.0 - s * s)
        g["W_bb"] += dz_s.T @ u
        g["b_bb"] += dz_s.sum(axis=0)
        dh = (dz_s @ a["W_bb"])[:, d:]


def _ltc_backward(p, tr, dh, g, d):
    a = p.arrays
    A = a["A"]
    d_inv_tau = np.zeros(p.n)
    for x, dt, inv_tau, subs in reversed(tr.steps):
        d_drive = np.zeros_like(dh)
        for h, f, den, h_next in reversed(subs):
            d_num = dh / den
            d_den = -dh * h_next / den
            g["A"] += (d_num * dt * f).sum(axis=0)
            d_inv_tau += (d_den * dt).sum(axis=0)
            df = d_num * dt * A + d_den * dt
            dz = df * f * (1.0 - f)
            g["W_rec"] += dz.T @ h
            d_drive += dz
            dh = d_num + dz @ a["W_rec"]
        g["W_in"] += d_drive.T @ x
        g["b"] += d_drive.sum(axis=0)
    # inv_tau = exp(-theta)
    g["theta_tau"] += -d_inv_tau * np.exp(-a["theta_tau"])


def _hybrid_cfc_backward(p, tr, dh, g, d):
    a = p.arrays
    base = np.exp(a["theta_tau"])
    for u, h, f, s_tau, tau_raw, tau, decay, gate, target in reversed(tr.steps):
        d_gate = dh * (h - target)
        d_target = dh * (1.0 - gate)
        dh_prev = dh * gate
        d_decay = -d_gate * gate * (decay > DECAY_FLOOR) - d_target * target / decay
        df = d_target / decay + d_decay * np.sign(f)
        d_tau = -d_decay / (tau * tau) * (tau_raw > TAU_FLOOR)
        g["theta_tau"] += (d_tau * tau_raw).sum(axis=0)
        dz_tau = d_tau * base * s_tau * (1.0 - s_tau)
        dz_f = df * (1.0 - f * f)
        g["W_f"] += dz_f.T @ u
        g["b_f"] += dz_f.sum(axis=0)
        g["W_tau"] += dz_tau.T @ u
        g["b_tau"] += dz_tau.sum(axis=0)
        dh = dh_prev + (dz_f @ a["W_f"] + dz_tau @ a["W_tau"])[:, d:]


_BACKWARD = {
    ArchKind.LSTM: _lstm_backward,
    ArchKind.STRICT_CFC: _strict_cfc_backward,
    ArchKind.LTC: _ltc_backward,
    ArchKind.CTLTC: _ltc_backward,
    ArchKind.HYBRID_CFC: _hybrid_cfc_backward,
}


def loss_and_grad(p: ModelParams, X, G, y) -> tuple[float, Grads]:
    """Batch MSE and its gradient for every parameter array."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if y.size == 0:
        raise EmptyBatch("empty batch")
    if not np.all(np.isfinite(X)):
        raise NonFiniteForward("non-finite inputs")
    pred, tr = forward_batch(p, X, G, trace=True)
    resid = pred - y
    loss = float(np.mean(resid * resid))
    if not (np.all(np.isfinite(pred)) and np.isfinite(loss)):
        raise NonFiniteForward("non-finite predictions or loss")
    B = y.shape[0]
    d_pred = 2.0 * resid / B
    g = {k: np.zeros_like(v) for k, v in p.arrays.items()}
    g["w_out"] += tr.h_last.T @ d_pred
    g["b_out"] += d_pred.sum()
    dh = d_pred[:, None] * p.arrays["w_out"][None, :]
    _BACKWARD[p.arch](p, tr, dh, g, p.d)
    return loss, g


def grad(p: ModelParams, batch) -> Grads:
    """Gradient of the batch MSE for a list of ``SequenceSample``."""
    X, G, y = stack_samples(batch)
    return loss_and_grad(p, X, G, y)[1]


def global_norm(g: Grads) -> float:
    return float(np.sqrt(sum(float(np.sum(v * v)) for v in g.values())))


def clip_gradients(g: Grads, max_norm: float) -> Grads:
    if not max_norm > 0:
        raise ValueError("max_norm must be positive")
    norm = global_norm(g)
    if norm <= max_norm:
        return g
    scale = max_norm / norm
    return {k: v * scale for k, v in g.items()}


def adam_step(p: ModelParams, state: AdamState, g: Grads, cfg: TrainConfig) -> tuple[ModelParams, AdamState]:
    """One Adam update, in place.  ``g`` must already include any L2 term and clipping."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for k, theta in p.arrays.items():
        m = state.m[k]
        v = state.v[k]
        m *= b1
        m += (1.0 - b1) * g[k]
        v *= b2
        v += (1.0 - b2) * g[k] * g[k]
        theta -= cfg.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return p, state


def _with_decay(p: ModelParams, g: Grads, weight_decay: float) -> Grads:
    if weight_decay == 0.0:
        return g
    return {k: v + weight_decay * p.arrays[k] for k, v in g.items()}


def batch_order(n_samples: int, cfg: TrainConfig, epoch: int) -> list[np.ndarray]:
    if cfg.shuffle:
        idx = np.random.default_rng([cfg.seed, epoch]).permutation(n_samples)
    else:
        idx = np.arange(n_samples)
    return [idx[i : i + cfg.batch_size] for i in range(0, n_samples, cfg.batch_size)]


def train_arrays(p: ModelParams, X, G, y, cfg: TrainConfig) -> TrainResult:
    """Train on pre-stacked arrays.  ``p`` is copied, never mutated."""
    p = p.copy()
    X = np.asarray(X, dtype=np.float64)
    G = np.asarray(G, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = y.shape[0]
    if n == 0:
        raise EmptyBatch("no training samples")
    state = AdamState.zeros_like(p)
    result = TrainResult(params=p, adam=state)
    used_any = False
    for epoch in range(cfg.epochs):
        losses = []
        skipped = 0
        for idx in batch_order(n, cfg, epoch):
            try:
                loss, g = loss_and_grad(p, X[idx], G[idx], y[idx])
            except NonFiniteForward:
                skipped += 1
                continue
            g = _with_decay(p, g, cfg.weight_decay)
            g = clip_gradients(g, cfg.clip_norm)
            if not all(np.all(np.isfinite(v)) for v in g.values()):
                skipped += 1
                continue
            adam_step(p, state, g, cfg)
            losses.append(loss)
            used_any = True
        result.losses.append(float(np.mean(losses)) if losses else float("nan"))
        result.skipped.append(skipped)
        if skipped:
            log.debug("epoch %d: skipped %d batches", epoch, skipped)
    if cfg.epochs > 0 and not used_any:
        raise AllBatchesSkipped("every batch contained non-finite values")
    return result


def train(p: ModelParams, samples, cfg: TrainConfig) -> TrainResult:
    X, G, y = stack_samples(samples)
    return train_arrays(p, X, G, y, cfg)


def predict(p: ModelParams, X, G=None, chunk: int = 512) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    out = []
    for i in range(0, X.shape[0], chunk):
        out.append(forward_batch(p, X[i : i + chunk], None if G is None else G[i : i + chunk]))
    return np.concatenate(out) if out else np.zeros(0)
