"""Reverse-mode automatic differentiation over dense float64 numpy arrays.

Small tape-free implementation: each op builds a child Tensor holding a
closure that routes the child's gradient to its parents. ``backward()``
topologically sorts the graph and runs the closures once. Everything is
float64; ops that can overflow (exp, log, pow, div, matmul) validate their
outputs and raise NumericError naming the primitive.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Tensor",
    "NumericError",
    "transpose",
    "concat",
    "cols",
    "zero_grads",
    "collect_grads",
    "loss_and_grads",
    "finite_diff_check",
    "FiniteDiffReport",
]


class NumericError(ArithmeticError):
    """A primitive produced a non-finite value from finite inputs."""

    def __init__(self, primitive: str):
        self.primitive = primitive
        super().__init__(f"non-finite value produced by primitive '{primitive}'")


def _checked(primitive: str, out: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(out)):
        raise NumericError(primitive)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """Array node in the autodiff graph. Data is always float64."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_backward", "_parents")

    def __init__(self, data, requires_grad: bool = False, name: str = ""):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._backward = None
        self._parents: tuple[Tensor, ...] = ()

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}{tag})"

    # -- graph construction -------------------------------------------------

    @staticmethod
    def _wrap(other) -> "Tensor":
        return other if isinstance(other, Tensor) else Tensor(other)

    def _child(self, data: np.ndarray, parents: tuple["Tensor", ...]) -> "Tensor":
        out = Tensor(data)
        out._parents = parents
        return out

    def _accumulate(self, grad: np.ndarray) -> None:
        grad = _unbroadcast(np.asarray(grad, dtype=np.float64), self.data.shape)
        if self.grad is None:
            self.grad = grad.copy()
        else:
            self.grad = self.grad + grad

    # -- arithmetic ----------------------------------------------------------

    def __add__(self, other) -> "Tensor":
        other = Tensor._wrap(other)
        out = self._child(self.data + other.data, (self, other))

        def backward(g=out):
            self._accumulate(g.grad)
            other._accumulate(g.grad)

        out._backward = backward
        return out

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        out = self._child(-self.data, (self,))

        def backward(g=out):
            self._accumulate(-g.grad)

        out._backward = backward
        return out

    def __sub__(self, other) -> "Tensor":
        return self + (-Tensor._wrap(other))

    def __rsub__(self, other) -> "Tensor":
        return Tensor._wrap(other) + (-self)

    def __mul__(self, other) -> "Tensor":
        other = Tensor._wrap(other)
        out = self._child(self.data * other.data, (self, other))

        def backward(g=out):
            self._accumulate(g.grad * other.data)
            other._accumulate(g.grad * self.data)

        out._backward = backward
        return out

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        other = Tensor._wrap(other)
        with np.errstate(divide="ignore", invalid="ignore"):
            data = self.data / other.data
        out = self._child(_checked("div", data), (self, other))

        def backward(g=out):
            self._accumulate(g.grad / other.data)
            other._accumulate(-g.grad * self.data / (other.data * other.data))

        out._backward = backward
        return out

    def __rtruediv__(self, other) -> "Tensor":
        return Tensor._wrap(other) / self

    def __pow__(self, exponent: float) -> "Tensor":
        if not isinstance(exponent, (int, float)):
            raise TypeError("only constant exponents are supported")
        e = float(exponent)
        with np.errstate(over="ignore", invalid="ignore"):
            data = self.data**e
        out = self._child(_checked("pow", data), (self,))

        def backward(g=out):
            self._accumulate(g.grad * e * self.data ** (e - 1.0))

        out._backward = backward
        return out

    def __matmul__(self, other) -> "Tensor":
        other = Tensor._wrap(other)
        with np.errstate(over="ignore", invalid="ignore"):
            data = self.data @ other.data
        out = self._child(_checked("matmul", data), (self, other))

        def backward(g=out):
            self._accumulate(g.grad @ other.data.T)
            other._accumulate(self.data.T @ g.grad)

        out._backward = backward
        return out

    # -- elementwise nonlinearities -------------------------------------------

    def exp(self) -> "Tensor":
        with np.errstate(over="ignore"):
            data = np.exp(self.data)
        out = self._child(_checked("exp", data), (self,))

        def backward(g=out):
            self._accumulate(g.grad * g.data)

        out._backward = backward
        return out

    def log(self) -> "Tensor":
        with np.errstate(divide="ignore", invalid="ignore"):
            data = np.log(self.data)
        out = self._child(_checked("log", data), (self,))

        def backward(g=out):
            self._accumulate(g.grad / self.data)

        out._backward = backward
        return out

    def tanh(self) -> "Tensor":
        out = self._child(np.tanh(self.data), (self,))

        def backward(g=out):
            self._accumulate(g.grad * (1.0 - g.data * g.data))

        out._backward = backward
        return out

    def sigmoid(self) -> "Tensor":
        # stable both tails: 1/(1+e^-x) for x>=0, e^x/(1+e^x) for x<0
        x = self.data
        data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
        out = self._child(data, (self,))

        def backward(g=out):
            self._accumulate(g.grad * g.data * (1.0 - g.data))

        out._backward = backward
        return out

    def softplus(self) -> "Tensor":
        # max(x, 0) + log1p(exp(-|x|)) never overflows
        x = self.data
        data = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
        out = self._child(data, (self,))

        def backward(g=out):
            sig = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
            self._accumulate(g.grad * sig)

        out._backward = backward
        return out

    def relu(self) -> "Tensor":
        out = self._child(np.maximum(self.data, 0.0), (self,))

        def backward(g=out):
            self._accumulate(g.grad * (self.data > 0.0))

        out._backward = backward
        return out

    def leaky_relu(self, slope: float = 0.01) -> "Tensor":
        out = self._child(np.where(self.data > 0.0, self.data, slope * self.data), (self,))

        def backward(g=out):
            self._accumulate(g.grad * np.where(self.data > 0.0, 1.0, slope))

        out._backward = backward
        return out

    def clip(self, lo: float, hi: float) -> "Tensor":
        """Clamp values to [lo, hi]; gradient is 1 inside the bounds, 0 outside."""
        out = self._child(np.clip(self.data, lo, hi), (self,))

        def backward(g=out):
            inside = (self.data >= lo) & (self.data <= hi)
            self._accumulate(g.grad * inside)

        out._backward = backward
        return out

    # -- reductions / shaping --------------------------------------------------

    def sum(self, axis: int | None = None, keepdims: bool = False) -> "Tensor":
        out = self._child(self.data.sum(axis=axis, keepdims=keepdims), (self,))

        def backward(g=out):
            grad = g.grad
            if axis is not None and not keepdims:
                grad = np.expand_dims(grad, axis)
            self._accumulate(np.broadcast_to(grad, self.data.shape))

        out._backward = backward
        return out

    def mean(self) -> "Tensor":
        return self.sum() * (1.0 / self.data.size)

    def reshape(self, *shape: int) -> "Tensor":
        out = self._child(self.data.reshape(*shape), (self,))

        def backward(g=out):
            self._accumulate(g.grad.reshape(self.data.shape))

        out._backward = backward
        return out

    # -- backward pass -----------------------------------------------------------

    def backward(self) -> None:
        """Backpropagate from a scalar; accumulates into ``.grad`` of all parents."""
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar tensor")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward()

    def item(self) -> float:
        return float(self.data.reshape(()))


def transpose(t: Tensor) -> Tensor:
    """2-D transpose."""
    out = t._child(t.data.T, (t,))

    def backward(g=out):
        t._accumulate(g.grad.T)

    out._backward = backward
    return out


def concat(tensors: list[Tensor], axis: int = 1) -> Tensor:
    """Concatenate along ``axis``; gradient splits back to the inputs."""
    tensors = [Tensor._wrap(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    out = tensors[0]._child(data, tuple(tensors))
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g=out):
        for t, start, stop in zip(tensors, offsets[:-1], offsets[1:]):
            index = [slice(None)] * g.grad.ndim
            index[axis] = slice(start, stop)
            t._accumulate(g.grad[tuple(index)])

    out._backward = backward
    return out


def cols(t: Tensor, start: int, stop: int) -> Tensor:
    """Slice columns [start, stop) of a 2-D tensor."""
    if t.data.ndim != 2:
        raise ValueError("cols() expects a 2-D tensor")
    out = t._child(t.data[:, start:stop], (t,))

    def backward(g=out):
        grad = np.zeros_like(t.data)
        grad[:, start:stop] = g.grad
        t._accumulate(grad)

    out._backward = backward
    return out


# -- parameter utilities -------------------------------------------------------


def zero_grads(params: list[Tensor]) -> None:
    for p in params:
        p.grad = None


def collect_grads(params: list[Tensor]) -> dict[str, np.ndarray]:
    """Copy out gradients keyed by parameter name; missing grads become zeros."""
    out: dict[str, np.ndarray] = {}
    for p in params:
        if not p.name:
            raise ValueError("all parameters must be named")
        if p.name in out:
            raise ValueError(f"duplicate parameter name {p.name!r}")
        out[p.name] = np.zeros_like(p.data) if p.grad is None else p.grad.copy()
    return out


def loss_and_grads(params: list[Tensor], loss_fn, *args) -> tuple[float, dict[str, np.ndarray]]:
    """Evaluate ``loss_fn(*args)`` and return (scalar loss, name->gradient).

    Gradient arrays are shape-matched copies; every returned value is finite
    or a NumericError has already been raised by the offending primitive.
    """
    zero_grads(params)
    loss = loss_fn(*args)
    if not isinstance(loss, Tensor) or loss.data.size != 1:
        raise ValueError("loss_fn must return a scalar Tensor")
    if not np.isfinite(loss.data).all():
        raise NumericError("loss")
    loss.backward()
    grads = collect_grads(params)
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"grad[{name}]")
    return loss.item(), grads


@dataclass
class FiniteDiffReport:
    """Result of comparing analytic gradients with central finite differences."""

    max_rel_err: float
    worst_param: str
    per_param: dict[str, float] = field(default_factory=dict)
    tol: float = 1e-4

    @property
    def passed(self) -> bool:
        return self.max_rel_err <= self.tol


def finite_diff_check(
    params: list[Tensor],
    loss_fn,
    *args,
    step: float = 1e-5,
    tol: float = 1e-4,
) -> FiniteDiffReport:
    """Check every element of every parameter against central differences.

    Relative error uses max(|analytic|, |numeric|, 1e-8) as denominator so
    zero gradients compare exactly.
    """
    _, grads = loss_and_grads(params, loss_fn, *args)

    def eval_loss() -> float:
        return loss_fn(*args).item()

    per_param: dict[str, float] = {}
    worst = ("", 0.0)
    for p in params:
        analytic = grads[p.name]
        max_err = 0.0
        flat = p.data.reshape(-1)
        aflat = analytic.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = eval_loss()
            flat[i] = orig - step
            down = eval_loss()
            flat[i] = orig
            numeric = (up - down) / (2.0 * step)
            a = aflat[i]
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            if err > max_err:
                max_err = err
        per_param[p.name] = max_err
        if max_err > worst[1]:
            worst = (p.name, max_err)
    return FiniteDiffReport(max_rel_err=worst[1], worst_param=worst[0], per_param=per_param, tol=tol)
