"""Minimal reverse-mode autodiff on dense float64 arrays.

Covers exactly what the policy networks need: linear layers, a fused GRU
cell, tanh/sigmoid, softmax with categorical sampling, entropy, and an
Adam optimizer. Grad checks against central finite differences back every
backward rule (see tests).

A Tensor wraps a numpy array plus an optional grad buffer and a closure
that pushes its output gradient to its parents. Graph construction can be
switched off with `no_grad()` for cheap rollout-time forwards.
"""

import contextlib

import numpy as np

_GRAD_ENABLED = [True]


@contextlib.contextmanager
def no_grad():
    _GRAD_ENABLED.append(False)
    try:
        yield
    finally:
        _GRAD_ENABLED.pop()


def grad_enabled() -> bool:
    return _GRAD_ENABLED[-1]


class Tensor:
    __slots__ = ("data", "grad", "_parents", "_backward")

    def __init__(self, data, parents=(), backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self._parents = parents if grad_enabled() else ()
        self._backward = backward if grad_enabled() else None

    @property
    def shape(self):
        return self.data.shape

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar output")
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # Operator sugar for the few places it reads better.
    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __sub__(self, other):
        return add(self, scale(other, -1.0))

    def __neg__(self):
        return scale(self, -1.0)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Reduce gradient g to `shape` after numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data + b.data

    def bwd(g):
        a._accumulate(_unbroadcast(g, a.data.shape))
        b._accumulate(_unbroadcast(g, b.data.shape))
    return Tensor(out_data, (a, b), bwd)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data * b.data

    def bwd(g):
        a._accumulate(_unbroadcast(g * b.data, a.data.shape))
        b._accumulate(_unbroadcast(g * a.data, b.data.shape))
    return Tensor(out_data, (a, b), bwd)


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)

    def bwd(g):
        a._accumulate(c * g)
    return Tensor(c * a.data, (a,), bwd)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data @ b.data

    def bwd(g):
        a._accumulate(g @ b.data.T)
        b._accumulate(a.data.T @ g)
    return Tensor(out_data, (a, b), bwd)


def tanh(a) -> Tensor:
    a = as_tensor(a)
    y = np.tanh(a.data)

    def bwd(g):
        a._accumulate(g * (1.0 - y * y))
    return Tensor(y, (a,), bwd)


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    y = 1.0 / (1.0 + np.exp(-a.data))

    def bwd(g):
        a._accumulate(g * y * (1.0 - y))
    return Tensor(y, (a,), bwd)


def relu(a) -> Tensor:
    a = as_tensor(a)
    y = np.maximum(a.data, 0.0)

    def bwd(g):
        a._accumulate(g * (a.data > 0.0))
    return Tensor(y, (a,), bwd)


def exp(a) -> Tensor:
    a = as_tensor(a)
    y = np.exp(a.data)

    def bwd(g):
        a._accumulate(g * y)
    return Tensor(y, (a,), bwd)


def sum_all(a) -> Tensor:
    a = as_tensor(a)

    def bwd(g):
        a._accumulate(np.broadcast_to(g, a.data.shape))
    return Tensor(a.data.sum(), (a,), bwd)


def mean_all(a) -> Tensor:
    a = as_tensor(a)
    n = a.data.size

    def bwd(g):
        a._accumulate(np.broadcast_to(g / n, a.data.shape))
    return Tensor(a.data.mean(), (a,), bwd)


def concat_rows(tensors) -> Tensor:
    """Stack single-row (1, F) tensors into (T, F)."""
    tensors = [as_tensor(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=0)
    offsets = np.cumsum([0] + [t.data.shape[0] for t in tensors])

    def bwd(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            t._accumulate(g[lo:hi])
    return Tensor(out_data, tuple(tensors), bwd)


def log_softmax(a) -> Tensor:
    """Row-wise log-softmax with max subtraction."""
    a = as_tensor(a)
    z = a.data - a.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    y = z - lse

    def bwd(g):
        sm = np.exp(y)
        a._accumulate(g - sm * g.sum(axis=-1, keepdims=True))
    return Tensor(y, (a,), bwd)


def take_per_row(a, indices) -> Tensor:
    """Pick one entry per row: out[t] = a[t, indices[t]], shape (T,)."""
    a = as_tensor(a)
    idx = np.asarray(indices, dtype=np.int64)
    rows = np.arange(a.data.shape[0])
    out_data = a.data[rows, idx]

    def bwd(g):
        ga = np.zeros_like(a.data)
        ga[rows, idx] = g
        a._accumulate(ga)
    return Tensor(out_data, (a,), bwd)


def minimum_of(a, b) -> Tensor:
    """Elementwise minimum; ties route the gradient to `a`."""
    a, b = as_tensor(a), as_tensor(b)
    take_a = a.data <= b.data
    out_data = np.where(take_a, a.data, b.data)

    def bwd(g):
        a._accumulate(_unbroadcast(g * take_a, a.data.shape))
        b._accumulate(_unbroadcast(g * ~take_a, b.data.shape))
    return Tensor(out_data, (a, b), bwd)


def entropy_from_log_probs(log_p: Tensor) -> Tensor:
    """Mean per-row entropy -sum(p log p) from a (T, A) log-prob tensor."""
    p = exp(log_p)
    per_elem = mul(p, log_p)
    return scale(mean_all(per_elem), -float(log_p.data.shape[-1]))


def entropy(dist: np.ndarray) -> float:
    """Shannon entropy (natural log) of a probability vector."""
    dist = np.asarray(dist, dtype=np.float64)
    if abs(dist.sum() - 1.0) > 1e-9:
        raise ValueError("probabilities must sum to 1")
    nz = dist > 0.0
    return float(-(dist[nz] * np.log(dist[nz])).sum())


def softmax_np(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_categorical(logits, rng: np.random.Generator):
    """Sample an index from softmax(logits); returns (idx, log_prob, probs)."""
    logits = logits.data if isinstance(logits, Tensor) else np.asarray(logits)
    probs = softmax_np(logits.ravel())
    idx = int(rng.choice(probs.size, p=probs))
    z = logits.ravel() - logits.max()
    log_probs = z - np.log(np.exp(z).sum())
    return idx, float(log_probs[idx]), probs


# -- layers ----------------------------------------------------------------


class Parameter(Tensor):
    __slots__ = ("name",)

    def __init__(self, data, name: str = ""):
        super().__init__(data)
        self.name = name
        self._parents = ()
        self._backward = None


def uniform_fan_in(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, shape)


def orthogonal(rng: np.random.Generator, n: int) -> np.ndarray:
    a = rng.standard_normal((n, n))
    q, r = np.linalg.qr(a)
    return q * np.sign(np.diag(r))


class LinearLayer:
    """y = x W + b with W stored (in, out)."""

    def __init__(self, in_size: int, out_size: int,
                 rng: np.random.Generator, name: str = "linear"):
        self.w = Parameter(uniform_fan_in(rng, in_size, (in_size, out_size)),
                           f"{name}.w")
        self.b = Parameter(np.zeros(out_size), f"{name}.b")

    def parameters(self):
        return [self.w, self.b]

    def __call__(self, x) -> Tensor:
        x = as_tensor(x)
        if x.data.shape[-1] != self.w.data.shape[0]:
            raise ValueError(
                f"linear input width {x.data.shape[-1]} != "
                f"{self.w.data.shape[0]}")
        return add(matmul(x, self.w), self.b)


class GruCell:
    """Standard update/reset-gate GRU, fused forward/backward.

    z = sig(x Wz + h Uz + bz); r = sig(x Wr + h Ur + br)
    c = tanh(x Wh + (r*h) Uh + bh); h' = (1-z)*h + z*c
    """

    def __init__(self, in_size: int, hidden_size: int,
                 rng: np.random.Generator, name: str = "gru"):
        self.in_size = in_size
        self.hidden_size = hidden_size
        p = []
        for gate in ("z", "r", "h"):
            p.append(Parameter(
                uniform_fan_in(rng, in_size, (in_size, hidden_size)),
                f"{name}.w{gate}"))
            p.append(Parameter(orthogonal(rng, hidden_size), f"{name}.u{gate}"))
            p.append(Parameter(np.zeros(hidden_size), f"{name}.b{gate}"))
        (self.wz, self.uz, self.bz,
         self.wr, self.ur, self.br,
         self.wh, self.uh, self.bh) = p

    def parameters(self):
        return [self.wz, self.uz, self.bz, self.wr, self.ur, self.br,
                self.wh, self.uh, self.bh]

    def __call__(self, x, h_prev) -> Tensor:
        x = as_tensor(x)
        h = as_tensor(h_prev)
        if x.data.shape[-1] != self.in_size:
            raise ValueError(f"gru input width {x.data.shape[-1]} != "
                             f"{self.in_size}")
        if h.data.shape[-1] != self.hidden_size:
            raise ValueError(f"gru hidden width {h.data.shape[-1]} != "
                             f"{self.hidden_size}")
        xd, hd = x.data, h.data
        z = _sigmoid_np(xd @ self.wz.data + hd @ self.uz.data + self.bz.data)
        r = _sigmoid_np(xd @ self.wr.data + hd @ self.ur.data + self.br.data)
        rh = r * hd
        c = np.tanh(xd @ self.wh.data + rh @ self.uh.data + self.bh.data)
        h_next = (1.0 - z) * hd + z * c

        cell = self

        def bwd(g):
            dc = g * z
            dz = g * (c - hd)
            dh = g * (1.0 - z)
            # candidate branch
            dac = dc * (1.0 - c * c)
            cell.wh._accumulate(xd.T @ dac)
            cell.uh._accumulate(rh.T @ dac)
            cell.bh._accumulate(dac.sum(axis=0))
            dx = dac @ cell.wh.data.T
            drh = dac @ cell.uh.data.T
            dr = drh * hd
            dh += drh * r
            # update gate
            daz = dz * z * (1.0 - z)
            cell.wz._accumulate(xd.T @ daz)
            cell.uz._accumulate(hd.T @ daz)
            cell.bz._accumulate(daz.sum(axis=0))
            dx += daz @ cell.wz.data.T
            dh += daz @ cell.uz.data.T
            # reset gate
            dar = dr * r * (1.0 - r)
            cell.wr._accumulate(xd.T @ dar)
            cell.ur._accumulate(hd.T @ dar)
            cell.br._accumulate(dar.sum(axis=0))
            dx += dar @ cell.wr.data.T
            dh += dar @ cell.ur.data.T
            x._accumulate(dx)
            h._accumulate(dh)

        parents = (x, h) + tuple(self.parameters())
        return Tensor(h_next, parents, bwd)


def _sigmoid_np(a: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-a))


# -- optimizer -------------------------------------------------------------


class Adam:
    """Adam with bias correction; optional global gradient-norm clipping."""

    def __init__(self, params, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8,
                 max_grad_norm: float = None):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.max_grad_norm = max_grad_norm
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data)
                 for p in self.params]
        if self.max_grad_norm is not None:
            total = np.sqrt(sum(float((g * g).sum()) for g in grads))
            if total > self.max_grad_norm:
                clip = self.max_grad_norm / total
                grads = [g * clip for g in grads]
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


# -- checkpoints -----------------------------------------------------------

CHECKPOINT_VERSION = 1


def save_checkpoint(path, named_params: dict, extra: dict = None):
    """Write named parameter arrays (plus optional extra arrays) as npz."""
    payload = {f"param/{k}": np.asarray(v.data if isinstance(v, Tensor) else v)
               for k, v in named_params.items()}
    for k, v in (extra or {}).items():
        payload[f"extra/{k}"] = np.asarray(v)
    payload["version"] = np.array(CHECKPOINT_VERSION)
    np.savez(path, **payload)


def load_checkpoint(path):
    """Return (params: dict, extra: dict) from a checkpoint file."""
    with np.load(path) as data:
        version = int(data["version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        params = {k[len("param/"):]: data[k] for k in data.files
                  if k.startswith("param/")}
        extra = {k[len("extra/"):]: data[k] for k in data.files
                 if k.startswith("extra/")}
    return params, extra
