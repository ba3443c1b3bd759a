"""Forward dynamics of the five recurrent cells and the linear readout.

Every step function accepts either a single vector (shape ``(d,)``/``(n,)``)
or a batch (``(B, d)``/``(B, n)``); matrices act on the last axis.  The
``*_cache`` variants additionally return the intermediates needed by the
hand-written adjoints in :mod:`lnnforecast.training`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import NamedTuple

import numpy as np

from lnnforecast.errors import NonPositiveGap, ShapeMismatch, WindowLengthMismatch

WINDOW_LENGTH = 30
ODE_UNFOLDS = 6
TAU_FLOOR = 1e-3
DECAY_FLOOR = 1e-3
GATE_TINY = np.finfo(np.float64).tiny


class ArchKind(str, Enum):
    LSTM = "LSTM"
    STRICT_CFC = "StrictCfC"
    LTC = "LTC"
    HYBRID_CFC = "HybridCfC"
    CTLTC = "CTLTC"

    @classmethod
    def parse(cls, name: str | ArchKind) -> ArchKind:
        if isinstance(name, ArchKind):
            return name
        key = str(name).replace("-", "").replace("_", "").replace(" ", "").lower()
        for arch in cls:
            if arch.value.lower() == key:
                return arch
        raise ValueError(f"unknown architecture {name!r}; choose from {[a.value for a in cls]}")


def backbone_width(n: int) -> int:
    return max(2 * n, 32)


def param_shapes(arch: ArchKind, n: int, d: int) -> dict[str, tuple[int, ...]]:
    arch = ArchKind.parse(arch)
    if arch is ArchKind.LSTM:
        shapes = {}
        for gate in "fioc":
            shapes[f"W_{gate}"] = (n, d)
            shapes[f"U_{gate}"] = (n, n)
            shapes[f"b_{gate}"] = (n,)
    elif arch is ArchKind.STRICT_CFC:
        m = backbone_width(n)
        shapes = {"W_bb": (m, d + n), "b_bb": (m,)}
        for head in "gfab":
            shapes[f"W_{head}"] = (n, m)
            shapes[f"b_{head}"] = (n,)
    elif arch in (ArchKind.LTC, ArchKind.CTLTC):
        shapes = {"W_in": (n, d), "W_rec": (n, n), "b": (n,), "theta_tau": (n,), "A": (n,)}
    else:
        shapes = {
            "W_f": (n, d + n),
            "b_f": (n,),
            "W_tau": (n, d + n),
            "b_tau": (n,),
            "theta_tau": (n,),
        }
    shapes["w_out"] = (n,)
    shapes["b_out"] = ()
    return shapes


@dataclass
class ModelParams:
    arch: ArchKind
    n: int
    d: int
    arrays: dict[str, np.ndarray]
    seed: int | None = None

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def copy(self) -> ModelParams:
        return ModelParams(self.arch, self.n, self.d, {k: v.copy() for k, v in self.arrays.items()}, self.seed)

    @property
    def tau(self) -> np.ndarray:
        return np.exp(self.arrays["theta_tau"])

    def num_parameters(self) -> int:
        return int(sum(v.size for v in self.arrays.values()))

    def check(self) -> None:
        expected = param_shapes(self.arch, self.n, self.d)
        if set(expected) != set(self.arrays):
            raise ShapeMismatch(f"{self.arch.value} expects arrays {sorted(expected)}, got {sorted(self.arrays)}")
        for name, shape in expected.items():
            if self.arrays[name].shape != shape:
                raise ShapeMismatch(f"{name}: expected {shape}, got {self.arrays[name].shape}")


class HiddenState(NamedTuple):
    h: np.ndarray
    c: np.ndarray | None = None


def init_params(arch, n: int, d: int, seed: int) -> ModelParams:
    """Xavier-uniform matrices, zero biases, unit time constants, attractors in [-1, 1]."""
    arch = ArchKind.parse(arch)
    rng = np.random.default_rng(seed)
    arrays: dict[str, np.ndarray] = {}
    for name, shape in param_shapes(arch, n, d).items():
        if name == "A":
            arrays[name] = rng.uniform(-1.0, 1.0, size=shape)
        elif len(shape) == 2:
            bound = np.sqrt(6.0 / (shape[0] + shape[1]))
            arrays[name] = rng.uniform(-bound, bound, size=shape)
        elif name == "w_out":
            bound = np.sqrt(6.0 / (n + 1))
            arrays[name] = rng.uniform(-bound, bound, size=shape)
        else:
            arrays[name] = np.zeros(shape)
    return ModelParams(arch, n, d, arrays, seed)


def zero_params(arch, n: int, d: int) -> ModelParams:
    arch = ArchKind.parse(arch)
    return ModelParams(arch, n, d, {k: np.zeros(s) for k, s in param_shapes(arch, n, d).items()})


def save_params(p: ModelParams, path) -> None:
    meta = {"arch": p.arch.value, "n": p.n, "d": p.d, "seed": p.seed, "format": "lnnforecast-params-v1"}
    path = Path(path)
    with path.open("wb") as fh:
        np.savez(fh, __meta__=np.array(json.dumps(meta)), **p.arrays)


def load_params(path) -> ModelParams:
    with np.load(Path(path), allow_pickle=False) as data:
        meta = json.loads(str(data["__meta__"]))
        arrays = {k: np.array(data[k]) for k in data.files if k != "__meta__"}
    p = ModelParams(ArchKind(meta["arch"]), int(meta["n"]), int(meta["d"]), arrays, meta["seed"])
    p.check()
    return p


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _check_input(p: ModelParams, x: np.ndarray, h: np.ndarray) -> None:
    if x.shape[-1] != p.d:
        raise ShapeMismatch(f"{p.arch.value} expects {p.d} features, got {x.shape[-1]}")
    if h.shape[-1] != p.n:
        raise ShapeMismatch(f"{p.arch.value} expects hidden size {p.n}, got {h.shape[-1]}")


def _require(p: ModelParams, *kinds: ArchKind) -> None:
    if p.arch not in kinds:
        raise ShapeMismatch(f"parameters are for {p.arch.value}, expected one of {[k.value for k in kinds]}")


# -- LSTM -------------------------------------------------------------------


def lstm_step_cache(p: ModelParams, x, h, c):
    a = p.arrays
    f = sigmoid(x @ a["W_f"].T + h @ a["U_f"].T + a["b_f"])
    i = sigmoid(x @ a["W_i"].T + h @ a["U_i"].T + a["b_i"])
    o = sigmoid(x @ a["W_o"].T + h @ a["U_o"].T + a["b_o"])
    cc = np.tanh(x @ a["W_c"].T + h @ a["U_c"].T + a["b_c"])
    c_new = f * c + i * cc
    tc = np.tanh(c_new)
    h_new = o * tc
    return h_new, c_new, (x, h, c, f, i, o, cc, tc)


def lstm_step(p: ModelParams, x, state: HiddenState) -> HiddenState:
    _require(p, ArchKind.LSTM)
    x = np.asarray(x, dtype=np.float64)
    _check_input(p, x, state.h)
    c = state.c if state.c is not None else np.zeros_like(state.h)
    h_new, c_new, _ = lstm_step_cache(p, x, state.h, c)
    return HiddenState(h_new, c_new)


# -- Strict CfC ---------------------------------------------------------------


def strict_cfc_step_cache(p: ModelParams, x, h):
    a = p.arrays
    u = np.concatenate([x, h], axis=-1)
    s = np.tanh(u @ a["W_bb"].T + a["b_bb"])
    g = np.tanh(s @ a["W_g"].T + a["b_g"])
    f = np.tanh(s @ a["W_f"].T + a["b_f"])
    t_a = s @ a["W_a"].T + a["b_a"]
    t_b = s @ a["W_b"].T + a["b_b"]
    gate = sigmoid(t_a * 1.0 + t_b)
    h_new = g * (1.0 - gate) + gate * f
    return h_new, (u, s, g, f, gate)


def strict_cfc_step(p: ModelParams, x, h) -> np.ndarray:
    _require(p, ArchKind.STRICT_CFC)
    x = np.asarray(x, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    _check_input(p, x, h)
    return strict_cfc_step_cache(p, x, h)[0]


# -- LTC / CT-LTC ---------------------------------------------------------------


def _substep_size(p: ModelParams, delta_t, batch_shape) -> np.ndarray:
    delta = np.asarray(delta_t, dtype=np.float64)
    if np.any(~(delta > 0.0)):
        raise NonPositiveGap(f"calendar gap must be positive, got {delta_t!r}")
    if p.arch is ArchKind.CTLTC:
        delta = np.maximum(delta, 1.0)
    dt = delta / ODE_UNFOLDS
    # per-sample gaps broadcast across hidden units
    return dt[..., None] if dt.ndim == len(batch_shape) and dt.ndim > 0 else dt


def ltc_step_cache(p: ModelParams, x, h, dt):
    a = p.arrays
    inv_tau = np.exp(-a["theta_tau"])
    drive = x @ a["W_in"].T + a["b"]
    subs = []
    for _ in range(ODE_UNFOLDS):
        f = sigmoid(h @ a["W_rec"].T + drive)
        den = 1.0 + dt * (inv_tau + f)
        h_next = (h + dt * f * a["A"]) / den
        subs.append((h, f, den, h_next))
        h = h_next
    return h, (x, dt, inv_tau, subs)


def ltc_step(p: ModelParams, x, h, delta_t=1.0) -> np.ndarray:
    _require(p, ArchKind.LTC, ArchKind.CTLTC)
    x = np.asarray(x, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    _check_input(p, x, h)
    dt = _substep_size(p, delta_t, h.shape[:-1])
    return ltc_step_cache(p, x, h, dt)[0]


# -- Hybrid CfC -----------------------------------------------------------------


def hybrid_cfc_step_cache(p: ModelParams, x, h):
    a = p.arrays
    u = np.concatenate([x, h], axis=-1)
    f = np.tanh(u @ a["W_f"].T + a["b_f"])
    s_tau = sigmoid(u @ a["W_tau"].T + a["b_tau"])
    tau_raw = np.exp(a["theta_tau"]) * s_tau
    tau = np.maximum(tau_raw, TAU_FLOOR)
    decay = 1.0 / tau + np.abs(f)
    # exp(-decay) underflows to 0 once decay > ~745 (tau at its floor); keep the gate positive
    gate = np.maximum(np.exp(-np.maximum(decay, DECAY_FLOOR)), GATE_TINY)
    target = f / decay
    h_new = gate * h + (1.0 - gate) * target
    return h_new, (u, h, f, s_tau, tau_raw, tau, decay, gate, target)


def hybrid_cfc_step(p: ModelParams, x, h) -> np.ndarray:
    _require(p, ArchKind.HYBRID_CFC)
    x = np.asarray(x, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    _check_input(p, x, h)
    return hybrid_cfc_step_cache(p, x, h)[0]


def hybrid_gate(p: ModelParams, x, h) -> np.ndarray:
    """The exponential gate ``g`` of one Hybrid CfC step (exposed for bound checks)."""
    _require(p, ArchKind.HYBRID_CFC)
    return hybrid_cfc_step_cache(p, np.asarray(x, float), np.asarray(h, float))[1][7]


# -- windows --------------------------------------------------------------------


@dataclass
class ForwardTrace:
    """Per-step caches of a batched forward pass, consumed by the adjoints."""

    steps: list = field(default_factory=list)
    h_last: np.ndarray | None = None


def forward_batch(p: ModelParams, X, gaps=None, trace: bool = False):
    """Run a batch of windows ``X`` (B, L, d) through the cell and readout.

    ``gaps`` (B, L) is only read by CT-LTC; every other architecture steps
    with unit spacing.  Returns predictions (B,), plus a ``ForwardTrace``
    when ``trace`` is set.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 3 or X.shape[2] != p.d:
        raise ShapeMismatch(f"expected windows of shape (B, L, {p.d}), got {X.shape}")
    B, L, _ = X.shape
    h = np.zeros((B, p.n))
    c = np.zeros((B, p.n))
    tr = ForwardTrace()
    arch = p.arch
    if arch in (ArchKind.LTC, ArchKind.CTLTC):
        if arch is ArchKind.CTLTC and gaps is not None:
            gaps = np.asarray(gaps, dtype=np.float64)
            if gaps.shape != (B, L):
                raise ShapeMismatch(f"gaps shape {gaps.shape} does not match windows {(B, L)}")
        else:
            gaps = np.ones((B, L))
    for t in range(L):
        x = X[:, t, :]
        if arch is ArchKind.LSTM:
            h, c, cache = lstm_step_cache(p, x, h, c)
        elif arch is ArchKind.STRICT_CFC:
            h, cache = strict_cfc_step_cache(p, x, h)
        elif arch is ArchKind.HYBRID_CFC:
            h, cache = hybrid_cfc_step_cache(p, x, h)
        else:
            dt = _substep_size(p, gaps[:, t], (B,))
            h, cache = ltc_step_cache(p, x, h, dt)
        if trace:
            tr.steps.append(cache)
    pred = h @ p.arrays["w_out"] + p.arrays["b_out"]
    if trace:
        tr.h_last = h
        return pred, tr
    return pred


def forward_window(p: ModelParams, window) -> float:
    """Scalar forecast for one ``SequenceSample`` (or a bare ``(L, d)`` array)."""
    X = getattr(window, "window", window)
    gaps = getattr(window, "gaps", None)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != WINDOW_LENGTH:
        raise WindowLengthMismatch(f"window must have {WINDOW_LENGTH} rows, got shape {X.shape}")
    G = None if gaps is None else np.asarray(gaps, dtype=np.float64)[None, :]
    return float(forward_batch(p, X[None], G)[0])


def hidden_trajectory(p: ModelParams, X, gaps=None) -> np.ndarray:
    """Hidden states after each step for a single window, shape (L, n)."""
    X = np.asarray(X, dtype=np.float64)[None]
    G = None if gaps is None else np.asarray(gaps, dtype=np.float64)[None]
    _, tr = forward_batch(p, X, G, trace=True)
    out = []
    for cache in tr.steps:
        if p.arch is ArchKind.LSTM:
            _, _, _, _, _, o, _, tc = cache
            out.append((o * tc)[0])
        elif p.arch is ArchKind.STRICT_CFC:
            _, _, g, f, gate = cache
            out.append((g * (1 - gate) + gate * f)[0])
        elif p.arch is ArchKind.HYBRID_CFC:
            _, h, _, _, _, _, _, gate, target = cache
            out.append((gate * h + (1 - gate) * target)[0])
        else:
            out.append(cache[3][-1][3][0])
    return np.array(out)
