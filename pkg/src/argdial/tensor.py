"""Dense float64 tensors with reverse-mode automatic differentiation.

The compute graph is dynamic: every operation records its parents and a
closure that maps the output gradient to parent gradients. ``backward`` walks
the graph once in reverse topological order. Models at this scale are tiny,
so clarity and float64 determinism win over speed.
"""

from __future__ import annotations

import hashlib
import json
import struct
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "ShapeError",
    "ConfigError",
    "DegenerateVectorError",
    "tensor",
    "zeros",
    "uniform",
    "add",
    "sub",
    "mul",
    "div",
    "scale",
    "neg",
    "matmul",
    "transpose",
    "reshape",
    "concat",
    "narrow",
    "take_rows",
    "tanh",
    "sigmoid",
    "relu",
    "mean",
    "tsum",
    "softmax",
    "standardize",
    "dropout",
    "cross_entropy",
    "mse",
    "cosine_similarity",
    "backward",
    "zero_grads",
    "set_requires_grad",
    "parameter_hash",
    "AdamState",
    "adam_step",
    "save_checkpoint",
    "load_checkpoint",
    "gradcheck",
]


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible for an operation."""


class ConfigError(ValueError):
    """Raised on invalid configuration values (e.g. dropout rate >= 1)."""


class DegenerateVectorError(ValueError):
    """Raised when a zero-norm vector is passed to cosine similarity."""


class Tensor:
    """A dense float64 array plus an optional gradient buffer.

    ``requires_grad`` tensors accumulate gradients during ``backward``.
    Repeated ``backward`` calls without ``zero_grads`` accumulate into
    ``grad``; training loops must zero between steps (``adam_step`` does).
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_grad_fn")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._grad_fn: Callable[[np.ndarray], tuple] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}{tag}, requires_grad={self.requires_grad})"

    # operator sugar; all semantics live in the module-level functions
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __truediv__(self, other):
        return div(self, _as_tensor(other))

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return neg(self)


def tensor(data, requires_grad: bool = False, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, name=name)


def zeros(shape, requires_grad: bool = False, name: str | None = None) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=requires_grad, name=name)


def uniform(
    shape,
    low: float,
    high: float,
    rng: np.random.Generator,
    requires_grad: bool = True,
    name: str | None = None,
) -> Tensor:
    return Tensor(rng.uniform(low, high, size=shape), requires_grad=requires_grad, name=name)


def _as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


def _make(data: np.ndarray, parents: Sequence[Tensor], grad_fn) -> Tensor:
    """Build an op output; the graph is only recorded if a parent needs grads."""
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._grad_fn = grad_fn
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.data.shape, b.data.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.data.shape} and {b.data.shape} are not compatible")


# ---------------------------------------------------------------------------
# elementwise and structural ops


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b, "add")
    return _make(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)),
    )


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b, "sub")
    return _make(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)),
    )


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b, "mul")
    return _make(
        a.data * b.data,
        (a, b),
        lambda g: (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        ),
    )


def div(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b, "div")
    return _make(
        a.data / b.data,
        (a, b),
        lambda g: (
            _unbroadcast(g / b.data, a.data.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape),
        ),
    )


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _make(a.data * c, (a,), lambda g: (g * c,))


def neg(a: Tensor) -> Tensor:
    return scale(a, -1.0)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul: expects 2-D operands, got {a.data.shape} and {b.data.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul: inner dimensions disagree: {a.data.shape} x {b.data.shape}")
    return _make(
        a.data @ b.data,
        (a, b),
        lambda g: (g @ b.data.T, a.data.T @ g),
    )


def transpose(a: Tensor) -> Tensor:
    return _make(a.data.T, (a,), lambda g: (g.T,))


def reshape(a: Tensor, shape) -> Tensor:
    old = a.data.shape
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = [_as_tensor(p) for p in parts]
    if not parts:
        raise ShapeError("concat: needs at least one input")
    sizes = [p.data.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]
    return _make(
        np.concatenate([p.data for p in parts], axis=axis),
        parts,
        lambda g: tuple(np.split(g, splits, axis=axis)),
    )


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice of size ``length`` along ``axis``."""
    index = [slice(None)] * a.data.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)

    def grad_fn(g):
        full = np.zeros_like(a.data)
        full[index] = g
        return (full,)

    return _make(a.data[index], (a,), grad_fn)


def take_rows(a: Tensor, indices) -> Tensor:
    """Row gather (embedding lookup); repeated indices accumulate gradient."""
    idx = np.asarray(indices, dtype=np.intp)
    if idx.size and (idx.min() < 0 or idx.max() >= a.data.shape[0]):
        raise ShapeError(f"take_rows: index out of range for {a.data.shape[0]} rows")

    def grad_fn(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        return (full,)

    return _make(a.data[idx], (a,), grad_fn)


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    return _make(y, (a,), lambda g: (g * (1.0 - y * y),))


def sigmoid(a: Tensor) -> Tensor:
    y = 1.0 / (1.0 + np.exp(-np.clip(a.data, -500, 500)))
    return _make(y, (a,), lambda g: (g * y * (1.0 - y),))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _make(a.data * mask, (a,), lambda g: (g * mask,))


def mean(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    count = a.data.size if axis is None else a.data.shape[axis]

    def grad_fn(g):
        if axis is None:
            return (np.full_like(a.data, float(g) / count),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, a.data.shape) / count,)

    return _make(a.data.mean(axis=axis, keepdims=keepdims), (a,), grad_fn)


def tsum(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    def grad_fn(g):
        if axis is None:
            return (np.full_like(a.data, float(g)),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, a.data.shape).copy(),)

    return _make(a.data.sum(axis=axis, keepdims=keepdims), (a,), grad_fn)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    if not -a.data.ndim <= axis < a.data.ndim:
        raise ShapeError(f"softmax: axis {axis} invalid for shape {a.data.shape}")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def grad_fn(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return ((g - dot) * y,)

    return _make(y, (a,), grad_fn)


def standardize(a: Tensor, eps: float = 1e-5) -> Tensor:
    """Zero-mean unit-variance normalization over the last axis."""
    mu = a.data.mean(axis=-1, keepdims=True)
    var = a.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    y = (a.data - mu) * inv

    def grad_fn(g):
        gm = g.mean(axis=-1, keepdims=True)
        gym = (g * y).mean(axis=-1, keepdims=True)
        return (inv * (g - gm - y * gym),)

    return _make(y, (a,), grad_fn)


def dropout(a: Tensor, rate: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout: rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return a
    if rng is None:
        raise ConfigError("dropout: training mode needs an explicit rng")
    keep = (rng.random(a.data.shape) >= rate) / (1.0 - rate)
    return _make(a.data * keep, (a,), lambda g: (g * keep,))


def cross_entropy(probs: Tensor, target: int) -> Tensor:
    """Negative log-likelihood of ``target`` under an already-softmaxed row."""
    row = probs.data.reshape(-1)
    if not 0 <= target < row.size:
        raise ShapeError(f"cross_entropy: target {target} out of range for {row.size} classes")
    p = row[target]

    def grad_fn(g):
        full = np.zeros_like(probs.data)
        full.reshape(-1)[target] = -float(g) / p
        return (full,)

    return _make(np.asarray(-np.log(p)), (probs,), grad_fn)


def mse(pred: Tensor, gold: float) -> Tensor:
    diff = pred.data - gold
    return _make(np.asarray(diff * diff).reshape(()), (pred,), lambda g: (np.asarray(2.0 * diff * float(g)).reshape(pred.data.shape),))


def cosine_similarity(a: Tensor, b: Tensor) -> Tensor:
    va, vb = a.data.reshape(-1), b.data.reshape(-1)
    if va.shape != vb.shape:
        raise ShapeError(f"cosine_similarity: lengths differ: {va.size} vs {vb.size}")
    na, nb = np.linalg.norm(va), np.linalg.norm(vb)
    if na == 0.0 or nb == 0.0:
        raise DegenerateVectorError("cosine_similarity: zero-norm input vector")
    dot = float(va @ vb)
    cos = dot / (na * nb)

    def grad_fn(g):
        g = float(g)
        ga = g * (vb / (na * nb) - cos * va / (na * na))
        gb = g * (va / (na * nb) - cos * vb / (nb * nb))
        return (ga.reshape(a.data.shape), gb.reshape(b.data.shape))

    return _make(np.asarray(cos), (a, b), grad_fn)


# ---------------------------------------------------------------------------
# backward pass


def backward(loss: Tensor) -> None:
    """Populate ``grad`` on every requires_grad tensor reachable from ``loss``.

    Gradients accumulate across calls; zero them between optimizer steps.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.data.shape}")
    if not loss.requires_grad:
        return

    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    flowing: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(topo):
        g = flowing.pop(id(node), None)
        if g is None:
            continue
        node.grad = g if node.grad is None else node.grad + g
        if node._grad_fn is None:
            continue
        for parent, pg in zip(node._parents, node._grad_fn(g)):
            if pg is None or not parent.requires_grad:
                continue
            acc = flowing.get(id(parent))
            flowing[id(parent)] = pg if acc is None else acc + pg


def zero_grads(params: Iterable[Tensor] | Mapping[str, Tensor]) -> None:
    values = params.values() if isinstance(params, Mapping) else params
    for p in values:
        p.grad = None


def set_requires_grad(params: Iterable[Tensor] | Mapping[str, Tensor], flag: bool) -> None:
    values = params.values() if isinstance(params, Mapping) else params
    for p in values:
        p.requires_grad = flag


def parameter_hash(params: Mapping[str, Tensor]) -> str:
    """SHA-256 over raw little-endian bytes in name order; bit-level identity."""
    h = hashlib.sha256()
    for name in sorted(params):
        h.update(name.encode("utf-8"))
        h.update(np.ascontiguousarray(params[name].data, dtype="<f8").tobytes())
    return h.hexdigest()


# ---------------------------------------------------------------------------
# Adam optimizer


class AdamState:
    """Per-parameter moment buffers plus a shared step counter."""

    def __init__(self, beta1: float = 0.9, beta2: float = 0.99, eps: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}


def adam_step(params: Mapping[str, Tensor], state: AdamState, lr: float) -> None:
    """Bias-corrected Adam update in place; parameter grads are zeroed after.

    Parameters whose grad is absent (e.g. frozen subgraphs) are skipped.
    """
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    for name, p in params.items():
        if p.grad is None:
            continue
        g = p.grad
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            state.m[name] = m
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        p.data -= lr * m_hat / (np.sqrt(v_hat) + state.eps)
        p.grad = None


# ---------------------------------------------------------------------------
# checkpoint format: version byte, manifest length (LE uint32), JSON manifest
# (name -> shape/dtype, in order), then raw little-endian float64 buffers.

_CHECKPOINT_VERSION = 1


def save_checkpoint(params: Mapping[str, Tensor | np.ndarray], path) -> None:
    names = list(params)
    manifest = []
    for name in names:
        arr = params[name].data if isinstance(params[name], Tensor) else np.asarray(params[name])
        manifest.append({"name": name, "shape": list(arr.shape), "dtype": "float64"})
    blob = json.dumps(manifest).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(bytes([_CHECKPOINT_VERSION]))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for name in names:
            arr = params[name].data if isinstance(params[name], Tensor) else np.asarray(params[name])
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        version = fh.read(1)
        if len(version) != 1 or version[0] != _CHECKPOINT_VERSION:
            raise ConfigError(f"checkpoint: unsupported version byte {version!r}")
        (length,) = struct.unpack("<I", fh.read(4))
        manifest = json.loads(fh.read(length).decode("utf-8"))
        out: dict[str, np.ndarray] = {}
        for entry in manifest:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(count * 8)
            if len(raw) != count * 8:
                raise ConfigError(f"checkpoint: truncated buffer for {entry['name']!r}")
            out[entry["name"]] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
        if fh.read(1):
            raise ConfigError("checkpoint: trailing bytes after last buffer")
    return out


def restore_parameters(params: Mapping[str, Tensor], saved: Mapping[str, np.ndarray]) -> None:
    """Copy checkpoint arrays into an existing parameter dict, shape-checked."""
    missing = set(params) - set(saved)
    if missing:
        raise ConfigError(f"checkpoint: missing parameters {sorted(missing)}")
    for name, p in params.items():
        arr = saved[name]
        if arr.shape != p.data.shape:
            raise ConfigError(
                f"checkpoint: shape mismatch for {name!r}: {arr.shape} vs {p.data.shape}"
            )
        p.data = arr.astype(np.float64, copy=True)


# ---------------------------------------------------------------------------
# finite-difference gradient checking


def gradcheck(
    loss_fn: Callable[[], Tensor],
    tensors: Sequence[Tensor],
    h: float = 1e-5,
    rtol: float = 1e-4,
    atol: float = 1e-7,
    max_elements: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Compare analytic grads of ``loss_fn`` against central finite differences.

    ``loss_fn`` must rebuild the graph from the given tensors on every call and
    be deterministic (no dropout). Checks every element unless ``max_elements``
    caps the per-tensor sample (seeded via ``rng``). Returns the worst relative
    error; raises AssertionError past tolerance.
    """
    for t in tensors:
        t.grad = None
    loss = loss_fn()
    backward(loss)
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]

    worst = 0.0
    for t, ref in zip(tensors, analytic):
        flat = t.data.reshape(-1)
        n = flat.size
        if max_elements is not None and n > max_elements:
            picks = (rng or np.random.default_rng(0)).choice(n, size=max_elements, replace=False)
        else:
            picks = range(n)
        for i in picks:
            orig = flat[i]
            flat[i] = orig + h
            f_plus = float(loss_fn().data)
            flat[i] = orig - h
            f_minus = float(loss_fn().data)
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * h)
            a = ref.reshape(-1)[i]
            err = abs(a - numeric)
            bound = atol + rtol * max(abs(a), abs(numeric))
            if err > bound:
                raise AssertionError(
                    f"gradient mismatch on {t.name or 'tensor'}[{i}]: analytic {a!r} vs numeric {numeric!r}"
                )
            denom = max(abs(a), abs(numeric), 1e-12)
            worst = max(worst, err / denom)
    for t in tensors:
        t.grad = None
    return worst
