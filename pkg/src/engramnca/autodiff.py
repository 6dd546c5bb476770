"""Reverse-mode automatic differentiation on numpy arrays.

A `Tape` records every operation in execution order; `Tape.backward` walks
the records in reverse and accumulates gradients. Leaf tensors (parameters,
or injected rollout states) collect gradients in `.grad`; intermediate
gradients live only in a scratch dict during the walk.

Forward arithmetic is delegated to `rawops`, the same kernels that power
no-gradient rollouts, so both modes produce bitwise-identical values. All
ops compute in the dtype of their tensor inputs: float32 in training,
float64 when the finite-difference checker drives them. Constant arrays
(masks, targets, stencil kernels) are cast to the input dtype at call time
and are never differentiated.

This module is signature-compatible with `rawops`: model step functions take
an ops namespace and run unchanged in either mode.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import rawops
from .errors import ShapeError, TapeError


class Tensor:
    """Array node. Parameter leaves have tape=None; op outputs belong to one tape."""

    __slots__ = ("data", "requires_grad", "grad", "tape", "name")

    def __init__(self, data, requires_grad: bool = False, tape: "Tape | None" = None,
                 name: str = ""):
        self.data = np.asarray(data)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.tape = tape
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        tag = self.name or "tensor"
        return f"Tensor({tag}, shape={self.data.shape}, grad={self.requires_grad})"


def parameter(data, name: str = "") -> Tensor:
    """Trainable leaf: float32 storage, gradient accumulated across backward calls."""
    return Tensor(np.asarray(data, dtype=np.float32), requires_grad=True, name=name)


def param(p: Tensor) -> Tensor:
    """Identity in tape mode; mirrors rawops.param which unwraps to the array."""
    return p


class Tape:
    """Ordered record of ops for one forward pass. Single-use: one backward."""

    def __init__(self):
        self._records: list[tuple[Tensor, Callable[[np.ndarray], list]]] = []
        self._leaf_tensors: list[Tensor] = []
        self._consumed = False

    def constant(self, data, name: str = "") -> Tensor:
        """Attach a non-differentiable input to this tape."""
        return Tensor(np.asarray(data), requires_grad=False, tape=self, name=name)

    def leaf(self, data, name: str = "") -> Tensor:
        """Attach a differentiable input; its gradient lands in `.grad`."""
        t = Tensor(np.asarray(data), requires_grad=True, tape=self, name=name)
        self._leaf_tensors.append(t)
        return t

    def record(self, out: Tensor, backward_fn: Callable[[np.ndarray], list]) -> None:
        if self._consumed:
            raise TapeError("cannot record onto a tape that has been backpropagated")
        self._records.append((out, backward_fn))

    def backward(self, root: Tensor, seed: np.ndarray | None = None) -> None:
        """Accumulate d(root)/d(leaf) into every requires_grad leaf.

        `seed` is the upstream gradient of `root`; omitted for scalar roots
        (implied 1.0). The tape is consumed afterwards.
        """
        if self._consumed:
            raise TapeError("tape already backpropagated; build a fresh forward pass")
        if root.tape is not self:
            raise TapeError("backward root does not belong to this tape")
        if seed is None:
            if root.data.size != 1:
                raise TapeError("non-scalar root requires an explicit seed gradient")
            seed = np.ones_like(root.data)
        seed = np.asarray(seed, dtype=root.data.dtype)
        if seed.shape != root.data.shape:
            raise ShapeError(f"seed shape {seed.shape} != root shape {root.data.shape}")

        self._consumed = True
        grads: dict[int, np.ndarray] = {id(root): seed}
        for out, backward_fn in reversed(self._records):
            gout = grads.pop(id(out), None)
            if gout is None:
                continue
            for tensor, contribution in backward_fn(gout):
                if tensor.tape is None:
                    if tensor.requires_grad:
                        if tensor.grad is None:
                            tensor.grad = np.zeros_like(tensor.data)
                        tensor.grad += contribution.astype(tensor.data.dtype, copy=False)
                elif id(tensor) in grads:
                    grads[id(tensor)] += contribution
                else:
                    grads[id(tensor)] = np.asarray(contribution)
        # Tape-attached leaves (injected rollout states) keep their gradient too.
        for t in self._leaf_tensors:
            g = grads.get(id(t))
            if g is not None:
                if t.grad is None:
                    t.grad = np.zeros_like(t.data)
                t.grad += g
        self._records.clear()


def _find_tape(*tensors) -> Tape:
    for t in tensors:
        if isinstance(t, Tensor) and t.tape is not None:
            return t.tape
    raise TapeError("operation has no tape; wrap an input with tape.constant/leaf first")


# ---------------------------------------------------------------------------
# Ops. Forward values come from rawops; each op records a closure mapping the
# output gradient to per-input contributions.

def depthwise_stencil(x: Tensor, kernels: np.ndarray, padding: str = "zero") -> Tensor:
    """Correlate each channel with each 3x3 kernel; see rawops.depthwise_stencil."""
    tape = _find_tape(x)
    kern = np.asarray(kernels, dtype=x.dtype)
    out = Tensor(rawops.depthwise_stencil(x.data, kern, padding),
                 requires_grad=x.requires_grad, tape=tape)
    c = x.data.shape[-1]

    def backward(gout: np.ndarray) -> list:
        if not x.requires_grad:
            return []
        return [(x, rawops.depthwise_stencil_adjoint(gout, kern, c, padding))]

    tape.record(out, backward)
    return out


def pointwise_dense(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Per-position linear map over the channel axis: out = x @ W.T (+ b)."""
    tape = _find_tape(x, weight, bias)
    out_data = rawops.pointwise_dense(
        x.data, weight.data, bias.data if bias is not None else None)
    needs = x.requires_grad or weight.requires_grad or (bias is not None and bias.requires_grad)
    out = Tensor(out_data, requires_grad=needs, tape=tape)
    w = weight.data.astype(x.dtype, copy=False)
    x_data = x.data
    cin = x_data.shape[-1]

    def backward(gout: np.ndarray) -> list:
        contribs = []
        flat_g = gout.reshape(-1, gout.shape[-1])
        if x.requires_grad:
            contribs.append((x, (flat_g @ w).reshape(x_data.shape)))
        if weight.requires_grad:
            contribs.append((weight, flat_g.T @ x_data.reshape(-1, cin)))
        if bias is not None and bias.requires_grad:
            contribs.append((bias, flat_g.sum(axis=0)))
        return contribs

    tape.record(out, backward)
    return out


def relu(x: Tensor) -> Tensor:
    tape = _find_tape(x)
    out = Tensor(rawops.relu(x.data), requires_grad=x.requires_grad, tape=tape)
    positive = x.data > 0

    def backward(gout: np.ndarray) -> list:
        return [(x, gout * positive)] if x.requires_grad else []

    tape.record(out, backward)
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    tape = _find_tape(a, b)
    out = Tensor(rawops.add(a.data, b.data),
                 requires_grad=a.requires_grad or b.requires_grad, tape=tape)

    def backward(gout: np.ndarray) -> list:
        contribs = []
        if a.requires_grad:
            contribs.append((a, gout))
        if b.requires_grad:
            contribs.append((b, gout))
        return contribs

    tape.record(out, backward)
    return out


def sum_tensors(tensors: Sequence[Tensor]) -> Tensor:
    if not tensors:
        raise ValueError("sum_tensors needs at least one tensor")
    total = tensors[0]
    for t in tensors[1:]:
        total = add(total, t)
    return total


def scale(x: Tensor, factor: float) -> Tensor:
    tape = _find_tape(x)
    out = Tensor(rawops.scale(x.data, factor), requires_grad=x.requires_grad, tape=tape)
    s = x.dtype.type(factor)

    def backward(gout: np.ndarray) -> list:
        return [(x, gout * s)] if x.requires_grad else []

    tape.record(out, backward)
    return out


def hadamard_mask(x: Tensor, mask) -> Tensor:
    """Multiply by a constant mask, broadcast against the input shape."""
    tape = _find_tape(x)
    m = np.asarray(mask, dtype=x.dtype)
    out = Tensor(rawops.hadamard_mask(x.data, m), requires_grad=x.requires_grad, tape=tape)

    def backward(gout: np.ndarray) -> list:
        return [(x, gout * m)] if x.requires_grad else []

    tape.record(out, backward)
    return out


def channel_concat(parts: Sequence[Tensor]) -> Tensor:
    if not parts:
        raise ValueError("channel_concat needs at least one part")
    lead = parts[0].data.shape[:-1]
    for p in parts[1:]:
        if p.data.shape[:-1] != lead:
            raise ShapeError("channel_concat parts disagree on leading dimensions")
    tape = _find_tape(*parts)
    out = Tensor(rawops.channel_concat([p.data for p in parts]),
                 requires_grad=any(p.requires_grad for p in parts), tape=tape)
    sizes = [p.data.shape[-1] for p in parts]

    def backward(gout: np.ndarray) -> list:
        contribs = []
        offset = 0
        for p, size in zip(parts, sizes):
            if p.requires_grad:
                contribs.append((p, gout[..., offset:offset + size]))
            offset += size
        return contribs

    tape.record(out, backward)
    return out


def channel_slice(x: Tensor, sl: slice) -> Tensor:
    start, stop, step = sl.indices(x.data.shape[-1])
    if step != 1:
        raise ShapeError("channel_slice requires a contiguous slice")
    tape = _find_tape(x)
    out = Tensor(rawops.channel_slice(x.data, sl), requires_grad=x.requires_grad, tape=tape)

    def backward(gout: np.ndarray) -> list:
        if not x.requires_grad:
            return []
        gx = np.zeros_like(x.data)
        gx[..., sl] = gout
        return [(x, gx)]

    tape.record(out, backward)
    return out


def channel_scatter(x: Tensor, n_total: int, indices: Sequence[int]) -> Tensor:
    """Place input channels at `indices` of a zero-filled wider channel axis."""
    idx = list(indices)
    if any(not 0 <= i < n_total for i in idx) or len(set(idx)) != len(idx):
        raise ShapeError(f"scatter indices {idx} invalid for width {n_total}")
    tape = _find_tape(x)
    out = Tensor(rawops.channel_scatter(x.data, n_total, idx),
                 requires_grad=x.requires_grad, tape=tape)

    def backward(gout: np.ndarray) -> list:
        return [(x, gout[..., idx])] if x.requires_grad else []

    tape.record(out, backward)
    return out


def pixelwise_mse(pred: Tensor, target, channels: slice | None = None) -> Tensor:
    """Mean squared error over every element of the selected channels."""
    tape = _find_tape(pred)
    out = Tensor(rawops.pixelwise_mse(pred.data, target, channels),
                 requires_grad=pred.requires_grad, tape=tape)
    sl = channels if channels is not None else slice(None)
    diff = pred.data[..., sl] - np.asarray(target, dtype=pred.dtype)
    count = diff.size

    def backward(gout: np.ndarray) -> list:
        if not pred.requires_grad:
            return []
        gpred = np.zeros_like(pred.data)
        gpred[..., sl] = (2.0 / count) * diff * gout
        return [(pred, gpred)]

    tape.record(out, backward)
    return out


def weighted_sum(x: Tensor, weights: np.ndarray) -> Tensor:
    """Scalar dot product with a constant array; splices an upstream gradient
    into a truncated rollout segment."""
    w = np.asarray(weights, dtype=x.dtype)
    if w.shape != x.data.shape:
        raise ShapeError(f"weights shape {w.shape} != input shape {x.data.shape}")
    tape = _find_tape(x)
    out = Tensor(np.asarray((x.data * w).sum(), dtype=x.dtype),
                 requires_grad=x.requires_grad, tape=tape)

    def backward(gout: np.ndarray) -> list:
        return [(x, gout * w)] if x.requires_grad else []

    tape.record(out, backward)
    return out


# ---------------------------------------------------------------------------
# Finite-difference gradient verification.

def gradient_check(closure: Callable[[dict[str, Tensor]], Tensor],
                   params: dict[str, Tensor],
                   samples_per_param: int = 4,
                   epsilon: float = 1e-4,
                   rng_seed: int = 0) -> dict[str, float]:
    """Compare backprop gradients against float64 central differences.

    `closure` must rebuild the forward pass (fresh tape) from the given
    parameter dict and return a scalar loss tensor. Returns the max relative
    error per parameter, where rel = |a - f| / (|a| + |f| + 1e-6).
    """
    params64 = {name: Tensor(p.data.astype(np.float64), requires_grad=True, name=name)
                for name, p in params.items()}

    loss = closure(params64)
    if loss.tape is None:
        raise TapeError("closure returned a tensor that is not on a tape")
    loss.tape.backward(loss)
    analytic = {name: (p.grad if p.grad is not None else np.zeros_like(p.data))
                for name, p in params64.items()}

    rng = np.random.default_rng(rng_seed)
    report: dict[str, float] = {}
    for name, p in params64.items():
        flat = p.data.reshape(-1)
        n = flat.size
        k = min(samples_per_param, n)
        coords = rng.choice(n, size=k, replace=False)
        worst = 0.0
        for c in coords:
            original = flat[c]
            flat[c] = original + epsilon
            up = float(closure(params64).data)
            flat[c] = original - epsilon
            down = float(closure(params64).data)
            flat[c] = original
            fd = (up - down) / (2.0 * epsilon)
            a = float(analytic[name].reshape(-1)[c])
            rel = abs(a - fd) / (abs(a) + abs(fd) + 1e-6)
            worst = max(worst, rel)
        report[name] = worst
    return report
