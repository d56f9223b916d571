"""Dense float64 tensors with tape-based reverse-mode differentiation.

Only the operations the PANAP network needs are provided. Every op works on
vectors or on row-stacked batches (2-D arrays whose rows are independent
instances); there is no general broadcasting.

Ops record themselves on the innermost active :class:`Tape`. Outside of a
tape they are plain numpy computations, which is what inference uses.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import ArgumentError, DimensionError, NumericError, UsageError

LEAKY_SLOPE = 0.01
ZERO_NORM = 1e-12

_ACTIVE: list["Tape"] = []


class Tensor:
    """A float64 array, optionally bound to a named parameter slot."""

    __slots__ = ("value", "name")

    def __init__(self, value, name: str | None = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label})"


class _Node:
    __slots__ = ("out", "inputs", "backward")

    def __init__(self, out, inputs, backward):
        self.out = out
        self.inputs = inputs
        self.backward = backward


class Tape:
    """Ordered record of the primitive ops applied during one forward pass."""

    def __init__(self):
        self.nodes: list[_Node] = []
        self.leaves: dict[int, Tensor] = {}
        self._produced: set[int] = set()

    def __enter__(self) -> "Tape":
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE.remove(self)

    def watch(self, tensor: Tensor) -> Tensor:
        self.leaves[id(tensor)] = tensor
        return tensor

    def record(self, out: Tensor, inputs: Sequence[Tensor], backward) -> None:
        self.nodes.append(_Node(out, tuple(inputs), backward))
        self._produced.add(id(out))

    def owns(self, tensor: Tensor) -> bool:
        return id(tensor) in self._produced or id(tensor) in self.leaves


def active_tape() -> Tape | None:
    return _ACTIVE[-1] if _ACTIVE else None


def _emit(value, inputs: Sequence[Tensor], backward) -> Tensor:
    out = Tensor(value)
    tape = active_tape()
    if tape is not None:
        tape.record(out, inputs, backward)
    return out


def constant(value) -> Tensor:
    return Tensor(value)


# ---------------------------------------------------------------------------
# Parameter storage and the optimizer


class ParameterStore:
    """Named trainable tensors plus Adam moment estimates.

    ``decay`` marks the slots that receive the L2 penalty; biases are created
    with ``decay=False``.
    """

    def __init__(self):
        self.slots: dict[str, np.ndarray] = {}
        self.decay: dict[str, bool] = {}
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.step = 0

    def add(self, name: str, value, decay: bool = True) -> None:
        if name in self.slots:
            raise UsageError(f"duplicate parameter slot {name!r}")
        arr = np.array(value, dtype=np.float64)
        self.slots[name] = arr
        self.decay[name] = decay
        self.m[name] = np.zeros_like(arr)
        self.v[name] = np.zeros_like(arr)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.slots[name]

    def __contains__(self, name: str) -> bool:
        return name in self.slots

    def names(self) -> list[str]:
        return list(self.slots)

    def leaf(self, name: str) -> Tensor:
        """Wrap a slot as a tensor; under a tape its gradient will be collected."""
        t = Tensor(self.slots[name], name=name)
        tape = active_tape()
        if tape is not None:
            tape.watch(t)
        return t

    def copy(self) -> "ParameterStore":
        other = ParameterStore()
        for name, arr in self.slots.items():
            other.add(name, arr.copy(), self.decay[name])
            other.m[name] = self.m[name].copy()
            other.v[name] = self.v[name].copy()
        other.step = self.step
        return other


def reverse_accumulate(
    tape: Tape, loss: Tensor, store: ParameterStore | None = None
) -> dict[str, np.ndarray]:
    """Back-propagate ``loss`` through ``tape``.

    Returns gradients keyed by slot name. When ``store`` is given, every slot
    in it gets an entry (zeros for slots the forward pass never touched).
    """
    if not tape.owns(loss):
        raise UsageError("loss was not produced under this tape")
    if loss.value.size != 1:
        raise UsageError(f"loss must be a scalar, got shape {loss.shape}")

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.value)}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node.out), None)
        if g is None:
            continue
        in_grads = node.backward(g)
        for inp, ig in zip(node.inputs, in_grads):
            if ig is None:
                continue
            key = id(inp)
            if key in grads:
                grads[key] = grads[key] + ig
            else:
                grads[key] = ig

    out: dict[str, np.ndarray] = {}
    for key, leaf in tape.leaves.items():
        if leaf.name is None:
            continue
        g = grads.get(key)
        if g is None:
            continue
        if leaf.name in out:
            out[leaf.name] = out[leaf.name] + g
        else:
            out[leaf.name] = g
    if store is not None:
        for name in store.names():
            if name not in out:
                out[name] = np.zeros_like(store[name])
    return out


def adam_step(
    store: ParameterStore,
    grads: dict[str, np.ndarray],
    lr: float = 5e-4,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    l2: float = 1e-4,
) -> ParameterStore:
    """One bias-corrected Adam update, in place. L2 is folded into the gradient."""
    missing = [n for n in store.names() if n not in grads]
    if missing:
        raise UsageError(f"missing gradient for slot(s): {', '.join(missing)}")
    store.step += 1
    t = store.step
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for name, value in store.slots.items():
        g = grads[name]
        if g.shape != value.shape:
            raise DimensionError(
                f"gradient shape {g.shape} does not match slot {name!r} {value.shape}"
            )
        if l2 and store.decay[name]:
            g = g + l2 * value
        m = store.m[name]
        v = store.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        value -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return store


def dropout_mask(shape, rate: float, rng: np.random.Generator) -> np.ndarray:
    """Inverted-dropout mask: 0 with probability ``rate``, else ``1/(1-rate)``."""
    if not 0.0 <= rate < 1.0:
        raise ArgumentError(f"dropout rate must be in [0, 1), got {rate}")
    if rate == 0.0:
        return np.ones(shape)
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


def finite_difference_check(
    loss_fn: Callable[[ParameterStore], Tensor],
    store: ParameterStore,
    epsilon: float = 1e-5,
) -> float:
    """Max relative error between tape gradients and central differences.

    ``loss_fn`` must be deterministic (no dropout) and return a scalar tensor.
    """
    with Tape() as tape:
        loss = loss_fn(store)
        if not np.isfinite(loss.value).all():
            raise NumericError("loss is not finite")
        if tape.owns(loss):
            analytic = reverse_accumulate(tape, loss, store)
        else:  # a loss built without touching any parameter
            analytic = {n: np.zeros_like(store[n]) for n in store.names()}

    worst = 0.0
    for name in store.names():
        arr = store[name]
        flat = arr.reshape(-1)
        a_flat = analytic[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            up = float(loss_fn(store).value)
            flat[i] = orig - epsilon
            down = float(loss_fn(store).value)
            flat[i] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise NumericError(f"non-finite loss while perturbing {name}[{i}]")
            numeric = (up - down) / (2.0 * epsilon)
            a = a_flat[i]
            err = abs(a - numeric) / max(1e-8, abs(a) + abs(numeric))
            worst = max(worst, err)
    return worst


# ---------------------------------------------------------------------------
# Primitive ops


def _check_same(a: Tensor, b: Tensor, what: str) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{what}: shapes {a.shape} and {b.shape} differ")


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same(a, b, "add")
    return _emit(a.value + b.value, (a, b), lambda g: (g, g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same(a, b, "mul")
    av, bv = a.value, b.value
    return _emit(av * bv, (a, b), lambda g: (g * bv, g * av))


def mul_const(a: Tensor, c) -> Tensor:
    """Multiply by a constant array or scalar (used for masks and temperature)."""
    c = np.asarray(c, dtype=np.float64)
    return _emit(a.value * c, (a,), lambda g: (g * c,))


def sum_all(a: Tensor) -> Tensor:
    shape = a.shape
    return _emit(np.array(a.value.sum()), (a,), lambda g: (np.full(shape, float(g)),))


def mean_all(a: Tensor) -> Tensor:
    shape, n = a.shape, a.value.size
    return _emit(
        np.array(a.value.mean()), (a,), lambda g: (np.full(shape, float(g) / n),)
    )


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """``x @ weight.T + bias`` for a vector or a batch of row vectors."""
    w, b, xv = weight.value, bias.value, x.value
    if w.ndim != 2 or b.ndim != 1 or xv.ndim not in (1, 2):
        raise DimensionError(
            f"linear expects vector/matrix input, matrix weight, vector bias; "
            f"got x{x.shape}, weight{weight.shape}, bias{bias.shape}"
        )
    if xv.shape[-1] != w.shape[1] or b.shape[0] != w.shape[0]:
        raise DimensionError(
            f"shape mismatch: x{x.shape} vs weight{weight.shape} vs bias{bias.shape}"
        )
    out = xv @ w.T + b

    def backward(g):
        if xv.ndim == 1:
            return g @ w, np.outer(g, xv), g
        return g @ w, g.T @ xv, g.sum(axis=0)

    return _emit(out, (x, weight, bias), backward)


def activate(x: Tensor, kind: str, slope: float = LEAKY_SLOPE) -> Tensor:
    xv = x.value
    if kind == "identity":
        return x
    if kind == "relu":
        mask = (xv > 0).astype(np.float64)
        return _emit(xv * mask, (x,), lambda g: (g * mask,))
    if kind == "leaky_relu":
        d = np.where(xv > 0, 1.0, slope)
        return _emit(xv * d, (x,), lambda g: (g * d,))
    if kind == "tanh":
        y = np.tanh(xv)
        return _emit(y, (x,), lambda g: (g * (1.0 - y * y),))
    raise ArgumentError(f"unknown activation {kind!r}")


def dense_forward(
    x: Tensor,
    weight: Tensor,
    bias: Tensor,
    activation: str = "identity",
    slope: float = LEAKY_SLOPE,
) -> Tensor:
    return activate(linear(x, weight, bias), activation, slope)


def concat(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate along the last axis."""
    parts = [p for p in parts if p.shape[-1] > 0]
    if len(parts) == 1:
        return parts[0]
    widths = [p.shape[-1] for p in parts]
    lead = {p.shape[:-1] for p in parts}
    if len(lead) != 1:
        raise DimensionError(f"concat: leading shapes differ {[p.shape for p in parts]}")
    out = np.concatenate([p.value for p in parts], axis=-1)
    bounds = np.cumsum([0] + widths)

    def backward(g):
        return tuple(g[..., bounds[i] : bounds[i + 1]] for i in range(len(parts)))

    return _emit(out, parts, backward)


def gather_rows(matrix: Tensor, index) -> Tensor:
    """Rows of ``matrix`` at ``index``; the gradient only touches those rows."""
    idx = np.asarray(index, dtype=np.intp)
    mv = matrix.value

    def backward(g):
        full = np.zeros_like(mv)
        np.add.at(full, idx, g)
        return (full,)

    return _emit(mv[idx], (matrix,), backward)


def reshape(x: Tensor, shape) -> Tensor:
    orig = x.shape
    return _emit(x.value.reshape(shape), (x,), lambda g: (g.reshape(orig),))


def rowdot(a: Tensor, b: Tensor) -> Tensor:
    _check_same(a, b, "rowdot")
    av, bv = a.value, b.value
    out = np.einsum("ij,ij->i", av, bv)
    return _emit(out, (a, b), lambda g: (g[:, None] * bv, g[:, None] * av))


def _softmax_np(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def softmax(scores: Tensor) -> Tensor:
    """Softmax along the last axis, max-shifted for stability."""
    if scores.value.size == 0 or scores.shape[-1] == 0:
        raise ArgumentError("softmax of an empty vector")
    p = _softmax_np(scores.value)

    def backward(g):
        return (p * (g - (g * p).sum(axis=-1, keepdims=True)),)

    return _emit(p, (scores,), backward)


def segment_softmax(logits: Tensor, segments, n_segments: int) -> Tensor:
    """Softmax of a flat logit vector within each segment id."""
    seg = np.asarray(segments, dtype=np.intp)
    z = logits.value
    top = np.full(n_segments, -np.inf)
    np.maximum.at(top, seg, z)
    e = np.exp(z - top[seg])
    denom = np.zeros(n_segments)
    np.add.at(denom, seg, e)
    p = e / denom[seg]

    def backward(g):
        s = np.zeros(n_segments)
        np.add.at(s, seg, g * p)
        return (p * (g - s[seg]),)

    return _emit(p, (logits,), backward)


def scale_rows(rows: Tensor, weights: Tensor) -> Tensor:
    """Multiply each row by the matching scalar weight."""
    rv, wv = rows.value, weights.value
    if rv.ndim != 2 or wv.shape != (rv.shape[0],):
        raise DimensionError(f"scale_rows: rows{rows.shape} vs weights{weights.shape}")
    out = rv * wv[:, None]
    return _emit(
        out, (rows, weights), lambda g: (g * wv[:, None], np.einsum("ij,ij->i", g, rv))
    )


def segment_sum(rows: Tensor, segments, n_segments: int) -> Tensor:
    seg = np.asarray(segments, dtype=np.intp)
    rv = rows.value
    out = np.zeros((n_segments, rv.shape[1]))
    np.add.at(out, seg, rv)
    return _emit(out, (rows,), lambda g: (g[seg],))


def cosine(a: Tensor, b: Tensor) -> Tensor:
    """Cosine similarity of two vectors, or row-wise for two matrices.

    Rows where either norm is below 1e-12 get similarity 0 and zero gradient.
    """
    if a.shape != b.shape:
        raise DimensionError(f"cosine: lengths differ {a.shape} vs {b.shape}")
    av, bv = np.atleast_2d(a.value), np.atleast_2d(b.value)
    na = np.sqrt(np.einsum("ij,ij->i", av, av))
    nb = np.sqrt(np.einsum("ij,ij->i", bv, bv))
    ok = (na >= ZERO_NORM) & (nb >= ZERO_NORM)
    na_s = np.where(ok, na, 1.0)
    nb_s = np.where(ok, nb, 1.0)
    dot = np.einsum("ij,ij->i", av, bv)
    c = np.where(ok, dot / (na_s * nb_s), 0.0)
    vector = a.value.ndim == 1

    def backward(g):
        g = np.atleast_1d(g) * ok
        inv = 1.0 / (na_s * nb_s)
        ga = g[:, None] * (bv * inv[:, None] - (c / (na_s * na_s))[:, None] * av)
        gb = g[:, None] * (av * inv[:, None] - (c / (nb_s * nb_s))[:, None] * bv)
        if vector:
            return ga[0], gb[0]
        return ga, gb

    out = np.array(c[0]) if vector else c
    return _emit(out, (a, b), backward)


def softmax_cross_entropy(logits: Tensor, targets) -> Tensor:
    """Mean over rows of ``-log softmax(row)[target]``."""
    z = logits.value
    if z.ndim != 2:
        raise DimensionError(f"expected a (batch, candidates) matrix, got {logits.shape}")
    t = np.asarray(targets, dtype=np.intp)
    rows = np.arange(z.shape[0])
    shift = z - z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shift).sum(axis=1))
    per_row = lse - shift[rows, t]
    n = z.shape[0]

    def backward(g):
        p = _softmax_np(z)
        p[rows, t] -= 1.0
        return (p * (float(g) / n),)

    return _emit(np.array(per_row.mean()), (logits,), backward)
