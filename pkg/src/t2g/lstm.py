"""Peephole LSTM regressor in numpy with backpropagation through time.

Gate equations per layer, with ``sig`` the logistic function and
``g = h = tanh``::

    i_k = sig(W_ix x_k + W_im m_{k-1} + W_ic c_{k-1} + b_i)
    f_k = sig(W_fx x_k + W_fm m_{k-1} + W_fc c_{k-1} + b_f)
    c_k = f_k * c_{k-1} + i_k * g(W_cx x_k + W_cm m_{k-1} + b_c)
    o_k = sig(W_ox x_k + W_om m_{k-1} + W_oc c_k + b_o)
    m_k = o_k * h(c_k)

Stacked layers feed the full ``m`` sequence of the layer below as input.
The last ``m`` of the top layer goes through a ReLU dense layer
(``W_dm``, ``b_d``) and then the affine output ``y = W_ym z + b_y``.
Dropout (inverted) acts on each layer's output sequence during training
only; the recurrent path is never masked.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .features import FeatureMatrix

GATES = ("i", "f", "c", "o")
LAYER_KEYS = (
    "W_ix", "W_im", "W_ic", "b_i",
    "W_fx", "W_fm", "W_fc", "b_f",
    "W_cx", "W_cm", "b_c",
    "W_ox", "W_om", "W_oc", "b_o",
)
HEAD_KEYS = ("W_dm", "b_d", "W_ym", "b_y")


class LstmTrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class SequenceDataset:
    windows: np.ndarray      # (N, L, D)
    targets: np.ndarray      # (N,)
    cycle_index: np.ndarray  # cycle n of each window's last row

    def __len__(self) -> int:
        return len(self.targets)

    @property
    def lag(self) -> int:
        return self.windows.shape[1]

    def subset(self, idx) -> "SequenceDataset":
        return SequenceDataset(self.windows[idx], self.targets[idx], self.cycle_index[idx])


def make_sequences(matrix, lag: int, y=None, cycle_index=None) -> SequenceDataset:
    """Sliding windows of ``lag`` consecutive rows; window k targets row k+lag-1.

    ``matrix`` is a FeatureMatrix or a bare 2-D array (then pass ``y``).
    """
    if isinstance(matrix, FeatureMatrix):
        X, y, cycle_index = matrix.X, matrix.y, matrix.cycle_index
    else:
        X = np.asarray(matrix, dtype=float)
        if y is None:
            raise ValueError("y is required with a bare array")
    y = np.asarray(y, dtype=float)
    if lag < 1:
        raise ValueError("lag must be >= 1")
    n = X.shape[0]
    if n < lag:
        raise ValueError(f"too few rows: {n} < lag {lag}")
    if cycle_index is None:
        cycle_index = np.arange(1, n + 1)
    windows = np.lib.stride_tricks.sliding_window_view(X, lag, axis=0).transpose(0, 2, 1).copy()
    return SequenceDataset(windows.astype(float), y[lag - 1:].copy(),
                           np.asarray(cycle_index)[lag - 1:].copy())


@dataclass(frozen=True)
class LstmParams:
    units: int = 32
    layers: int = 1
    dropout: float = 0.0
    dense_units: int = 16
    lag: int = 7
    epochs: int = 100
    batch_size: int = 64
    validation_split: float = 0.2
    patience: int = 5
    learning_rate: float = 1e-3
    loss: str = "mae"
    seed: int = 0

    def __post_init__(self):
        if self.units < 1 or self.layers < 1 or self.dense_units < 1:
            raise ValueError("units, layers and dense_units must be >= 1")
        if not 0.0 <= self.dropout <= 0.5:
            raise ValueError("dropout must be in [0, 0.5]")
        if self.lag < 1 or self.epochs < 1 or self.batch_size < 1 or self.patience < 1:
            raise ValueError("lag, epochs, batch_size and patience must be >= 1")
        if not 0.0 <= self.validation_split < 1.0:
            raise ValueError("validation_split must be in [0, 1)")
        if self.loss not in ("mae", "mse"):
            raise ValueError("loss must be 'mae' or 'mse'")


@dataclass
class LstmModel:
    layers: list[dict]            # one dict of LAYER_KEYS arrays per LSTM layer
    head: dict                    # HEAD_KEYS arrays
    dropout: float = 0.0
    x_mean: np.ndarray | None = None
    x_std: np.ndarray | None = None
    feature_names: tuple[str, ...] | None = None
    history: list = field(default_factory=list)

    @property
    def input_dim(self) -> int:
        return self.layers[0]["W_ix"].shape[1]

    @property
    def units(self) -> list[int]:
        return [lay["W_im"].shape[0] for lay in self.layers]

    def standardize(self, windows: np.ndarray) -> np.ndarray:
        if self.x_mean is None:
            return windows
        return (windows - self.x_mean) / self.x_std

    def predict(self, windows) -> np.ndarray:
        return lstm_forward(self, windows)

    def copy(self) -> "LstmModel":
        return replace(self, layers=[{k: v.copy() for k, v in lay.items()} for lay in self.layers],
                       head={k: v.copy() for k, v in self.head.items()}, history=list(self.history))

    def tensors(self):
        """(name, array) pairs for every trainable tensor, in a fixed order."""
        out = []
        for li, lay in enumerate(self.layers):
            out.extend((f"{li}.{k}", lay[k]) for k in LAYER_KEYS)
        out.extend((k, self.head[k]) for k in HEAD_KEYS)
        return out

    def to_dict(self) -> dict:
        def enc(a):
            return {"shape": list(a.shape), "data": a.ravel().tolist()}
        return {
            "kind": "lstm",
            "dropout": self.dropout,
            "layers": [{k: enc(lay[k]) for k in LAYER_KEYS} for lay in self.layers],
            "head": {k: enc(self.head[k]) for k in HEAD_KEYS},
            "x_mean": None if self.x_mean is None else self.x_mean.tolist(),
            "x_std": None if self.x_std is None else self.x_std.tolist(),
            "feature_names": list(self.feature_names) if self.feature_names else None,
            "history": self.history,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LstmModel":
        def dec(d):
            return np.array(d["data"], dtype=float).reshape(d["shape"])
        names = data.get("feature_names")
        return cls(
            layers=[{k: dec(lay[k]) for k in LAYER_KEYS} for lay in data["layers"]],
            head={k: dec(data["head"][k]) for k in HEAD_KEYS},
            dropout=float(data.get("dropout", 0.0)),
            x_mean=None if data.get("x_mean") is None else np.array(data["x_mean"], dtype=float),
            x_std=None if data.get("x_std") is None else np.array(data["x_std"], dtype=float),
            feature_names=tuple(names) if names else None,
            history=list(data.get("history", [])),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path) -> "LstmModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def init_lstm(input_dim: int, units: int = 32, layers: int = 1, dense_units: int = 16,
              dropout: float = 0.0, seed: int = 0, output_bias: float = 0.0) -> LstmModel:
    """Glorot-uniform kernels, small peepholes, forget bias 1, He-uniform dense layer."""
    rng = np.random.Generator(np.random.PCG64(seed))

    def glorot(rows, cols):
        lim = math.sqrt(6.0 / (rows + cols))
        return rng.uniform(-lim, lim, size=(rows, cols))

    lays = []
    d_in = input_dim
    for _ in range(layers):
        H = units
        lay = {}
        for g in GATES:
            lay[f"W_{g}x"] = glorot(H, d_in)
            lay[f"W_{g}m"] = glorot(H, H)
            lay[f"b_{g}"] = np.ones(H) if g == "f" else np.zeros(H)
        for g in ("i", "f", "o"):
            lay[f"W_{g}c"] = rng.uniform(-0.1, 0.1, size=(H, H))
        lays.append(lay)
        d_in = H
    lim = math.sqrt(6.0 / d_in)
    head = {
        "W_dm": rng.uniform(-lim, lim, size=(dense_units, d_in)),
        "b_d": np.full(dense_units, 0.1),
        "W_ym": glorot(1, dense_units),
        "b_y": np.array([float(output_bias)]),
    }
    return LstmModel(lays, head, dropout)


def zero_lstm(input_dim: int, units: int = 4, layers: int = 1, dense_units: int = 4,
              output_bias: float = 0.0) -> LstmModel:
    """All weights and biases zero except ``b_y`` (test hook)."""
    m = init_lstm(input_dim, units, layers, dense_units)
    for lay in m.layers:
        for k in LAYER_KEYS:
            lay[k][...] = 0.0
    for k in HEAD_KEYS:
        m.head[k][...] = 0.0
    m.head["b_y"][0] = output_bias
    return m


def _sig(a):
    return 0.5 * (1.0 + np.tanh(0.5 * a))


def _layer_forward(lay: dict, X: np.ndarray):
    """Run one layer over X (B, L, D); returns m sequence (B, L, H) and a cache."""
    B, L, _ = X.shape
    H = lay["W_im"].shape[0]
    Wx = np.concatenate([lay[f"W_{g}x"] for g in GATES])
    Wm = np.concatenate([lay[f"W_{g}m"] for g in GATES])
    b = np.concatenate([lay[f"b_{g}"] for g in GATES])
    XW = X @ Wx.T + b
    m = np.zeros((B, H))
    c = np.zeros((B, H))
    M = np.empty((B, L, H))
    cache = {k: np.empty((B, L, H)) for k in ("i", "f", "g", "o", "c", "hc", "c_prev", "m_prev")}
    for k in range(L):
        a = XW[:, k] + m @ Wm.T
        a_i = a[:, :H] + c @ lay["W_ic"].T
        a_f = a[:, H:2 * H] + c @ lay["W_fc"].T
        i = _sig(a_i)
        f = _sig(a_f)
        g = np.tanh(a[:, 2 * H:3 * H])
        cache["c_prev"][:, k] = c
        cache["m_prev"][:, k] = m
        c = f * c + i * g
        o = _sig(a[:, 3 * H:] + c @ lay["W_oc"].T)
        hc = np.tanh(c)
        m = o * hc
        for name, v in (("i", i), ("f", f), ("g", g), ("o", o), ("c", c), ("hc", hc)):
            cache[name][:, k] = v
        M[:, k] = m
    cache["X"] = X
    return M, cache


def _layer_backward(lay: dict, cache: dict, dM: np.ndarray):
    """Backprop through time; dM (B, L, H) is the loss gradient w.r.t. the m outputs."""
    X = cache["X"]
    B, L, H = dM.shape
    Wm = np.concatenate([lay[f"W_{g}m"] for g in GATES])
    dA = np.empty((B, L, 4 * H))
    dm_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    grads = {k: np.zeros_like(lay[k]) for k in ("W_ic", "W_fc", "W_oc")}
    for k in range(L - 1, -1, -1):
        i, f, g, o = cache["i"][:, k], cache["f"][:, k], cache["g"][:, k], cache["o"][:, k]
        c, hc, c_prev = cache["c"][:, k], cache["hc"][:, k], cache["c_prev"][:, k]
        dm = dM[:, k] + dm_next
        da_o = dm * hc * o * (1.0 - o)
        dc = dc_next + dm * o * (1.0 - hc * hc) + da_o @ lay["W_oc"]
        da_c = dc * i * (1.0 - g * g)
        da_i = dc * g * i * (1.0 - i)
        da_f = dc * c_prev * f * (1.0 - f)
        dc_next = dc * f + da_i @ lay["W_ic"] + da_f @ lay["W_fc"]
        dA[:, k, :H] = da_i
        dA[:, k, H:2 * H] = da_f
        dA[:, k, 2 * H:3 * H] = da_c
        dA[:, k, 3 * H:] = da_o
        dm_next = dA[:, k] @ Wm
        grads["W_ic"] += da_i.T @ c_prev
        grads["W_fc"] += da_f.T @ c_prev
        grads["W_oc"] += da_o.T @ c
    flatA = dA.reshape(B * L, 4 * H)
    dWx = flatA.T @ X.reshape(B * L, -1)
    dWm = flatA.T @ cache["m_prev"].reshape(B * L, H)
    db = flatA.sum(axis=0)
    for j, gname in enumerate(GATES):
        sl = slice(j * H, (j + 1) * H)
        grads[f"W_{gname}x"] = dWx[sl]
        grads[f"W_{gname}m"] = dWm[sl]
        grads[f"b_{gname}"] = db[sl]
    Wx = np.concatenate([lay[f"W_{g}x"] for g in GATES])
    dX = dA @ Wx
    return grads, dX


def _forward(model: LstmModel, X: np.ndarray, masks=None):
    caches = []
    inp = X
    for li, lay in enumerate(model.layers):
        M, cache = _layer_forward(lay, inp)
        if masks is not None:
            M = M * masks[li]
        caches.append(cache)
        inp = M
    last = inp[:, -1]
    pre = last @ model.head["W_dm"].T + model.head["b_d"]
    z = np.maximum(pre, 0.0)
    y = z @ model.head["W_ym"].T + model.head["b_y"]
    return y[:, 0], (caches, last, pre, z, inp.shape)


def _backward(model: LstmModel, state, dy: np.ndarray, masks=None) -> dict:
    caches, last, pre, z, top_shape = state
    head = model.head
    grads = {
        "W_ym": dy[None, :] @ z,
        "b_y": np.array([dy.sum()]),
    }
    dz = dy[:, None] * head["W_ym"]
    dpre = dz * (pre > 0)
    grads["W_dm"] = dpre.T @ last
    grads["b_d"] = dpre.sum(axis=0)
    dM = np.zeros(top_shape)
    dM[:, -1] = dpre @ head["W_dm"]
    for li in range(len(model.layers) - 1, -1, -1):
        if masks is not None:
            dM = dM * masks[li]
        g, dX = _layer_backward(model.layers[li], caches[li], dM)
        for k, v in g.items():
            grads[f"{li}.{k}"] = v
        dM = dX
    return grads


def _as_batch(model: LstmModel, window) -> tuple[np.ndarray, bool]:
    W = np.asarray(window, dtype=float)
    single = W.ndim == 2
    if single:
        W = W[None]
    if W.ndim != 3 or W.shape[2] != model.input_dim:
        raise ValueError(f"window width must be {model.input_dim}, got shape {np.shape(window)}")
    return W, single


def lstm_forward(model: LstmModel, window):
    """Prediction for one window (L, D) or a batch (B, L, D) of raw feature rows."""
    W, single = _as_batch(model, window)
    y, _ = _forward(model, model.standardize(W))
    return float(y[0]) if single else y


def _loss_grad(pred, y, loss: str):
    r = pred - y
    if loss == "mae":
        return float(np.mean(np.abs(r))), np.sign(r) / len(r)
    return float(np.mean(r * r)), 2.0 * r / len(r)


def lstm_gradients(model: LstmModel, windows, targets, loss: str = "mse"):
    """Loss and analytic gradients (keyed like ``model.tensors()``) without dropout."""
    W, _ = _as_batch(model, windows)
    pred, state = _forward(model, model.standardize(W))
    value, dy = _loss_grad(pred, np.asarray(targets, dtype=float), loss)
    return value, _backward(model, state, dy)


def grad_check(model: LstmModel, batch, epsilon: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    Uses the MSE loss. The error for each tensor is
    ``|g_a - g_n| / max(|g_a| + |g_n|, 1e-12)`` in the Euclidean norm.
    """
    if not 1e-6 <= epsilon <= 1e-3:
        raise ValueError("epsilon must be in [1e-6, 1e-3]")
    windows, targets = batch
    _, grads = lstm_gradients(model, windows, targets, "mse")
    worst = 0.0
    for name, arr in model.tensors():
        num = np.empty_like(arr)
        flat = arr.reshape(-1)
        nflat = num.reshape(-1)
        for j in range(flat.size):
            old = flat[j]
            flat[j] = old + epsilon
            up, _ = lstm_gradients(model, windows, targets, "mse")
            flat[j] = old - epsilon
            down, _ = lstm_gradients(model, windows, targets, "mse")
            flat[j] = old
            nflat[j] = (up - down) / (2.0 * epsilon)
        ga = grads[name]
        denom = max(float(np.linalg.norm(ga) + np.linalg.norm(num)), 1e-12)
        worst = max(worst, float(np.linalg.norm(ga - num)) / denom)
    return worst


class _Adam:
    def __init__(self, tensors, lr, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = {k: np.zeros_like(v) for k, v in tensors}
        self.v = {k: np.zeros_like(v) for k, v in tensors}
        self.t = 0

    def step(self, tensors, grads):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for name, arr in tensors:
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            arr -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def lstm_fit(dataset: SequenceDataset, params: LstmParams = LstmParams(),
             feature_names=None) -> LstmModel:
    """Train with Adam on minibatches; early stopping on the trailing validation share.

    The last ``validation_split`` of the windows (in time order) is held out.
    Feature standardization uses the fitting windows only. The output bias
    starts at the mean training target, so training begins from the
    mean predictor. The returned weights are the best validation checkpoint.
    """
    n = len(dataset)
    if n == 0:
        raise ValueError("empty dataset")
    n_val = int(math.floor(params.validation_split * n))
    if n - n_val < 1:
        raise ValueError("validation split leaves no training windows")
    fit_part = dataset.subset(slice(0, n - n_val))
    val_part = dataset.subset(slice(n - n_val, n)) if n_val > 0 else fit_part

    rows = fit_part.windows.reshape(-1, fit_part.windows.shape[2])
    x_mean = rows.mean(axis=0)
    x_std = rows.std(axis=0)
    x_std[x_std == 0] = 1.0

    ss = np.random.SeedSequence(params.seed)
    init_seed, train_seed = ss.spawn(2)
    model = init_lstm(dataset.windows.shape[2], params.units, params.layers, params.dense_units,
                      params.dropout, int(init_seed.generate_state(1)[0]),
                      output_bias=float(fit_part.targets.mean()))
    model.x_mean, model.x_std = x_mean, x_std
    model.feature_names = tuple(feature_names) if feature_names is not None else None
    rng = np.random.Generator(np.random.PCG64(train_seed))

    Xf = model.standardize(fit_part.windows)
    yf = fit_part.targets
    Xv = model.standardize(val_part.windows)
    yv = val_part.targets

    def val_loss(m):
        p, _ = _forward(m, Xv)
        return _loss_grad(p, yv, params.loss)[0]

    tensors = model.tensors()
    opt = _Adam(tensors, params.learning_rate)
    best = model.copy()
    best_val = val_loss(model)
    history = [{"epoch": 0, "loss": _loss_grad(_forward(model, Xf)[0], yf, params.loss)[0],
                "val_loss": best_val}]
    wait = 0
    keep = 1.0 - params.dropout
    for epoch in range(1, params.epochs + 1):
        order = rng.permutation(len(yf))
        total = 0.0
        for start in range(0, len(order), params.batch_size):
            idx = order[start:start + params.batch_size]
            xb = Xf[idx]
            masks = None
            if params.dropout > 0:
                masks = [(rng.random((len(idx), xb.shape[1], h)) < keep) / keep for h in model.units]
            pred, state = _forward(model, xb, masks)
            value, dy = _loss_grad(pred, yf[idx], params.loss)
            if not math.isfinite(value):
                raise LstmTrainingError(f"non-finite loss at epoch {epoch}, batch starting {start}: {value}")
            grads = _backward(model, state, dy, masks)
            opt.step(tensors, grads)
            total += value * len(idx)
        v = val_loss(model)
        if not math.isfinite(v):
            raise LstmTrainingError(f"non-finite validation loss at epoch {epoch}")
        history.append({"epoch": epoch, "loss": total / len(yf), "val_loss": v})
        if v < best_val:
            best_val = v
            best = model.copy()
            wait = 0
        else:
            wait += 1
            if wait >= params.patience:
                break
    best.history = history
    return best
