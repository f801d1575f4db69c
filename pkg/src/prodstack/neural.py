"""MLP + LSTM stacking network with add-fusion, written out by hand.

Shapes, batch-first:

    x_static  (n, k)      -> MLP (tanh hidden h_s, linear out c)   -> e_s (n, c)
    x_dynamic (n, T, l)   -> LSTM, final hidden state              -> e_d (n, c)
    fused = (e_s + e_d) * kernel                                   -> (n, c)
    head: tanh hidden h_f, linear out T                            -> y_hat (n, T)

``branches`` selects "stack" (both encoders), "lstm" (dynamic only) or
"mlp" (static only). With ``fusion="scalar"`` the kernel-weighted channels
are summed to a single feature before the head.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels

FORMAT_NAME = "prodstack-model"
FORMAT_VERSION = 1

GATES = ("i", "f", "o", "g")


class ShapeMismatch(ValueError):
    pass


class StaleCache(RuntimeError):
    pass


class ModelFileError(ValueError):
    pass


class VersionMismatch(ModelFileError):
    pass


class CorruptFile(ModelFileError):
    pass


@dataclass(frozen=True)
class Dims:
    k: int = 5
    l: int = 9
    c: int = 32
    hs: int = 64
    hf: int = 64
    T: int = 60
    branches: str = "stack"
    fusion: str = "channel"

    def __post_init__(self):
        for name in ("k", "l", "c", "hs", "hf", "T"):
            if getattr(self, name) <= 0:
                raise ValueError(f"dimension {name} must be positive")
        if self.branches not in ("stack", "lstm", "mlp"):
            raise ValueError(f"unknown branches {self.branches!r}")
        if self.fusion not in ("channel", "scalar"):
            raise ValueError(f"unknown fusion {self.fusion!r}")

    @property
    def uses_static(self) -> bool:
        return self.branches in ("stack", "mlp")

    @property
    def uses_dynamic(self) -> bool:
        return self.branches in ("stack", "lstm")

    def shapes(self) -> dict[str, tuple[int, ...]]:
        """Parameter block shapes in file order."""
        out: dict[str, tuple[int, ...]] = {}
        if self.uses_static:
            out["mlp.W1"] = (self.hs, self.k)
            out["mlp.b1"] = (self.hs,)
            out["mlp.W2"] = (self.c, self.hs)
            out["mlp.b2"] = (self.c,)
        if self.uses_dynamic:
            for g in GATES:
                out[f"lstm.W{g}"] = (self.c, self.l + self.c)
            for g in GATES:
                out[f"lstm.b{g}"] = (self.c,)
        head_in = self.c if self.fusion == "channel" else 1
        out["head.kernel"] = (self.c,)
        out["head.W1"] = (self.hf, head_in)
        out["head.b1"] = (self.hf,)
        out["head.W2"] = (self.T, self.hf)
        out["head.b2"] = (self.T,)
        return out

    def n_params(self) -> int:
        return sum(math.prod(s) for s in self.shapes().values())


@dataclass
class StackNetParams:
    dims: Dims
    arrays: dict[str, np.ndarray]
    seed: int = 0

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def copy(self) -> "StackNetParams":
        return StackNetParams(self.dims, {k: v.copy() for k, v in self.arrays.items()}, self.seed)

    def n_params(self) -> int:
        return sum(a.size for a in self.arrays.values())

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays.values()])

    def lstm_stacked(self) -> tuple[np.ndarray, np.ndarray]:
        W = np.concatenate([self.arrays[f"lstm.W{g}"] for g in GATES], axis=0)
        b = np.concatenate([self.arrays[f"lstm.b{g}"] for g in GATES])
        return np.ascontiguousarray(W), b


def init_params(dims: Dims, seed: int = 0) -> StackNetParams:
    """Glorot-uniform weights, zero biases, forget bias 1, fusion kernel 1."""
    rng = np.random.default_rng(seed)
    arrays = {}
    for name, shape in dims.shapes().items():
        if name == "head.kernel":
            arrays[name] = np.ones(shape)
        elif name == "lstm.bf":
            arrays[name] = np.ones(shape)
        elif len(shape) == 1:
            arrays[name] = np.zeros(shape)
        else:
            fan_out, fan_in = shape
            s = math.sqrt(6.0 / (fan_in + fan_out))
            arrays[name] = rng.uniform(-s, s, size=shape)
    return StackNetParams(dims, arrays, seed)


# ---------------------------------------------------------------------------
# Forward pieces
# ---------------------------------------------------------------------------


def _as_batch(x, ndim):
    x = np.asarray(x, dtype=float)
    single = x.ndim == ndim - 1
    return (x[None] if single else x), single


def mlp_forward(params: StackNetParams, x_static):
    xs, single = _as_batch(x_static, 2)
    if xs.shape[1] != params.dims.k:
        raise ShapeMismatch(f"static input has {xs.shape[1]} features, model expects k={params.dims.k}")
    a1 = np.tanh(xs @ params["mlp.W1"].T + params["mlp.b1"])
    enc = a1 @ params["mlp.W2"].T + params["mlp.b2"]
    cache = {"xs": xs, "a1": a1}
    return (enc[0] if single else enc), cache


def lstm_forward(params: StackNetParams, x_dyn):
    xd, single = _as_batch(x_dyn, 3)
    if xd.shape[2] != params.dims.l:
        raise ShapeMismatch(f"dynamic input has {xd.shape[2]} features, model expects l={params.dims.l}")
    W, b = params.lstm_stacked()
    xd = np.ascontiguousarray(xd)
    H, C, G = kernels.lstm_forward(xd, W, b)
    h_last = H[:, -1, :]
    cache = {"xd": xd, "W": W, "H": H, "C": C, "G": G}
    return (h_last[0] if single else h_last), cache


def fuse_forward(params: StackNetParams, e_s, e_d):
    e_s = np.asarray(e_s, dtype=float)
    e_d = np.asarray(e_d, dtype=float)
    kernel = params["head.kernel"]
    if e_s.shape != e_d.shape or e_s.shape[-1] != kernel.shape[0]:
        raise ShapeMismatch(f"encodings {e_s.shape} / {e_d.shape} vs kernel {kernel.shape}")
    summed = e_s + e_d
    fused = summed * kernel
    if params.dims.fusion == "scalar":
        fused = fused.sum(axis=-1, keepdims=True)
    return fused, {"summed": summed}


def head_forward(params: StackNetParams, fused):
    f, single = _as_batch(fused, 2)
    a2 = np.tanh(f @ params["head.W1"].T + params["head.b1"])
    y_hat = a2 @ params["head.W2"].T + params["head.b2"]
    return (y_hat[0] if single else y_hat), {"f": f, "a2": a2}


@dataclass
class ForwardCache:
    params: StackNetParams
    n: int
    mlp: dict | None = None
    lstm: dict | None = None
    fuse: dict = field(default_factory=dict)
    head: dict = field(default_factory=dict)


def forward_batch(params: StackNetParams, x_static, x_dynamic):
    """Batched forward pass; returns (y_hat (n, T), cache)."""
    d = params.dims
    xs = np.asarray(x_static, dtype=float)
    xd = np.asarray(x_dynamic, dtype=float)
    n = xs.shape[0] if d.uses_static or xd.ndim != 3 else xd.shape[0]
    cache = ForwardCache(params, n)
    if d.uses_static:
        e_s, cache.mlp = mlp_forward(params, xs)
        n = e_s.shape[0]
    if d.uses_dynamic:
        if xd.ndim != 3:
            raise ShapeMismatch(f"dynamic input must be (n, T, l), got {xd.shape}")
        e_d, cache.lstm = lstm_forward(params, xd)
        n = e_d.shape[0]
    if not d.uses_static:
        e_s = np.zeros((n, d.c))
    if not d.uses_dynamic:
        e_d = np.zeros((n, d.c))
    if e_s.shape[0] != e_d.shape[0]:
        raise ShapeMismatch(f"batch sizes differ: static {e_s.shape[0]}, dynamic {e_d.shape[0]}")
    cache.n = n
    fused, cache.fuse = fuse_forward(params, e_s, e_d)
    y_hat, cache.head = head_forward(params, fused)
    return y_hat, cache


def forward(params: StackNetParams, sample):
    """Forward pass for one WellSample; returns (y_hat (T,), cache)."""
    y_hat, cache = forward_batch(params, sample.x_static[None], sample.x_dynamic[None])
    return y_hat[0], cache


def mse_loss(y_hat, y) -> float:
    y_hat = np.asarray(y_hat, dtype=float)
    y = np.asarray(y, dtype=float)
    if y_hat.shape != y.shape:
        raise ShapeMismatch(f"prediction {y_hat.shape} vs target {y.shape}")
    r = y_hat - y
    return float(np.mean(r * r))


# ---------------------------------------------------------------------------
# Backward
# ---------------------------------------------------------------------------


def backward(params: StackNetParams, cache: ForwardCache, y_hat, y) -> dict[str, np.ndarray]:
    """Exact gradients of ``mse_loss(y_hat, y)`` for every parameter block."""
    if cache.params is not params:
        raise StaleCache("cache was produced by a different parameter object")
    d = params.dims
    y_hat = np.asarray(y_hat, dtype=float).reshape(cache.n, d.T)
    y = np.asarray(y, dtype=float).reshape(cache.n, d.T)
    grads: dict[str, np.ndarray] = {}

    dy = 2.0 * (y_hat - y) / y_hat.size
    a2 = cache.head["a2"]
    f = cache.head["f"]
    grads["head.W2"] = dy.T @ a2
    grads["head.b2"] = dy.sum(axis=0)
    dz2 = (dy @ params["head.W2"]) * (1.0 - a2 * a2)
    grads["head.W1"] = dz2.T @ f
    grads["head.b1"] = dz2.sum(axis=0)
    df = dz2 @ params["head.W1"]

    summed = cache.fuse["summed"]
    kernel = params["head.kernel"]
    if d.fusion == "scalar":
        df = np.broadcast_to(df, summed.shape)
    grads["head.kernel"] = (df * summed).sum(axis=0)
    dsum = df * kernel

    if d.uses_static:
        xs, a1 = cache.mlp["xs"], cache.mlp["a1"]
        grads["mlp.W2"] = dsum.T @ a1
        grads["mlp.b2"] = dsum.sum(axis=0)
        dz1 = (dsum @ params["mlp.W2"]) * (1.0 - a1 * a1)
        grads["mlp.W1"] = dz1.T @ xs
        grads["mlp.b1"] = dz1.sum(axis=0)
    if d.uses_dynamic:
        lc = cache.lstm
        dW, db, _ = kernels.lstm_backward(lc["xd"], lc["W"], lc["H"], lc["C"], lc["G"], np.ascontiguousarray(dsum))
        c = d.c
        for j, g in enumerate(GATES):
            grads[f"lstm.W{g}"] = dW[j * c : (j + 1) * c]
            grads[f"lstm.b{g}"] = db[j * c : (j + 1) * c]
    return {name: grads[name] for name in params.arrays}


def loss_and_grads(params: StackNetParams, x_static, x_dynamic, y):
    y_hat, cache = forward_batch(params, x_static, x_dynamic)
    return mse_loss(y_hat, y), backward(params, cache, y_hat, y)


# ---------------------------------------------------------------------------
# Optimisers
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, params: StackNetParams) -> "AdamState":
        return cls({k: np.zeros_like(a) for k, a in params.arrays.items()}, {k: np.zeros_like(a) for k, a in params.arrays.items()})


def _check_grads(params, grads):
    for name, a in params.arrays.items():
        if name not in grads or grads[name].shape != a.shape:
            got = grads[name].shape if name in grads else None
            raise ShapeMismatch(f"gradient for {name}: expected {a.shape}, got {got}")


def adam_step(params, grads, state: AdamState, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    """Bias-corrected Adam update; returns new (params, state)."""
    _check_grads(params, grads)
    step = state.step + 1
    m, v, new = {}, {}, {}
    c1 = 1.0 - beta1**step
    c2 = 1.0 - beta2**step
    for name, p in params.arrays.items():
        g = grads[name]
        m[name] = beta1 * state.m[name] + (1.0 - beta1) * g
        v[name] = beta2 * state.v[name] + (1.0 - beta2) * g * g
        new[name] = p - lr * (m[name] / c1) / (np.sqrt(v[name] / c2) + eps)
    return StackNetParams(params.dims, new, params.seed), AdamState(m, v, step)


def sgd_step(params, grads, lr=1e-2):
    _check_grads(params, grads)
    return StackNetParams(params.dims, {k: p - lr * grads[k] for k, p in params.arrays.items()}, params.seed)


# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------


def numeric_grads(params, x_static, x_dynamic, y, eps=1e-4, richardson=True) -> dict[str, np.ndarray]:
    """Central differences of the MSE loss, optionally Richardson-extrapolated."""
    work = params.copy()

    def loss():
        y_hat, _ = forward_batch(work, x_static, x_dynamic)
        return mse_loss(y_hat, y)

    def central(a, i, h):
        old = a.flat[i]
        a.flat[i] = old + h
        up = loss()
        a.flat[i] = old - h
        down = loss()
        a.flat[i] = old
        return (up - down) / (2.0 * h)

    out = {}
    for name, a in work.arrays.items():
        g = np.empty_like(a)
        for i in range(a.size):
            d1 = central(a, i, eps)
            if richardson:
                d2 = central(a, i, eps / 2.0)
                g.flat[i] = (4.0 * d2 - d1) / 3.0
            else:
                g.flat[i] = d1
        out[name] = g
    return out


def relative_errors(analytic: dict, numeric: dict) -> dict[str, float]:
    errs = {}
    for name in analytic:
        a, n = analytic[name], numeric[name]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)
        errs[name] = float(np.max(np.abs(a - n) / denom)) if a.size else 0.0
    return errs


def grad_check_blocks(params, sample, eps=1e-4, richardson=True, grad_fn=None) -> dict[str, float]:
    """Per-block max relative error between analytic and numeric gradients.

    ``sample`` is a WellSample or an (x_static, x_dynamic, y) batch.
    ``grad_fn(params, xs, xd, y)`` replaces the analytic gradient (for
    testing the checker itself).
    """
    if isinstance(sample, tuple):
        xs, xd, y = sample
    else:
        xs, xd, y = sample.x_static[None], sample.x_dynamic[None], sample.y[None]
    if grad_fn is None:
        _, analytic = loss_and_grads(params, xs, xd, y)
    else:
        analytic = grad_fn(params, xs, xd, y)
    numeric = numeric_grads(params, xs, xd, y, eps, richardson)
    return relative_errors(analytic, numeric)


def grad_check(params, sample, eps=1e-4, richardson=True, grad_fn=None) -> float:
    return max(grad_check_blocks(params, sample, eps, richardson, grad_fn).values())


# ---------------------------------------------------------------------------
# Model files
# ---------------------------------------------------------------------------


def _header(params: StackNetParams) -> str:
    d = params.dims
    return (
        f"{FORMAT_NAME} {FORMAT_VERSION} k={d.k} l={d.l} c={d.c} hs={d.hs} hf={d.hf} T={d.T} "
        f"branches={d.branches} fusion={d.fusion} seed={params.seed}"
    )


def save_params(params: StackNetParams, path) -> None:
    lines = [_header(params)]
    for name, a in params.arrays.items():
        lines.append(f"block {name} " + " ".join(map(str, a.shape)))
        lines.extend(float(v).hex() for v in a.ravel())
    lines.append("end")
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def load_params(path) -> StackNetParams:
    try:
        text = Path(path).read_text(encoding="ascii")
    except UnicodeDecodeError:
        raise CorruptFile(f"{path}: not a model file") from None
    lines = text.splitlines()
    if not lines:
        raise CorruptFile(f"{path}: empty model file")
    head = lines[0].split()
    if len(head) < 2 or head[0] != FORMAT_NAME:
        raise CorruptFile(f"{path}: missing '{FORMAT_NAME}' header")
    if head[1] != str(FORMAT_VERSION):
        raise VersionMismatch(f"{path}: format version {head[1]}, this build reads {FORMAT_VERSION}")
    try:
        kv = dict(item.split("=", 1) for item in head[2:])
        dims = Dims(
            *(int(kv[n]) for n in ("k", "l", "c", "hs", "hf", "T")),
            branches=kv["branches"],
            fusion=kv["fusion"],
        )
        seed = int(kv["seed"])
    except (KeyError, ValueError) as exc:
        raise CorruptFile(f"{path}: bad header: {exc}") from None

    arrays = {}
    pos = 1
    for name, shape in dims.shapes().items():
        want = f"block {name} " + " ".join(map(str, shape))
        if pos >= len(lines) or lines[pos].strip() != want:
            raise CorruptFile(f"{path}: expected '{want}' at line {pos + 1}")
        size = math.prod(shape)
        chunk = lines[pos + 1 : pos + 1 + size]
        if len(chunk) != size:
            raise CorruptFile(f"{path}: block {name} truncated")
        try:
            arrays[name] = np.array([float.fromhex(v) for v in chunk]).reshape(shape)
        except ValueError:
            raise CorruptFile(f"{path}: non-numeric value in block {name}") from None
        pos += 1 + size
    if pos >= len(lines) or lines[pos].strip() != "end":
        raise CorruptFile(f"{path}: missing end marker")
    if any(not np.all(np.isfinite(a)) for a in arrays.values()):
        raise CorruptFile(f"{path}: non-finite parameter values")
    return StackNetParams(dims, arrays, seed)
