"""Dense tensors with reverse-mode differentiation.

The engine provides exactly the primitives the lexicon-enhanced tagger needs:
matrix products, two-operand einsum, softmax with masks, log-sum-exp, layer
normalization, activations, dropout, gathers and concatenation. Every value is
a float64 numpy array; every operation records a closure that maps the output
gradient to the gradients of its inputs.

Example:
    >>> w = Param(np.array([3.0]))
    >>> loss = (w * w).sum()
    >>> loss.backward()
    >>> w.grad
    array([6.])
"""

from __future__ import annotations

import contextlib
import logging
import math
import threading
import zlib
from collections.abc import Callable, Iterator, Mapping, Sequence
from typing import Any, Union

import numpy as np
from pydantic import BaseModel

from .errors import NumericalError, ShapeError, VocabularyError
from .types import ParamGroup

logger = logging.getLogger(__name__)

DTYPE = np.float64
MASK_VALUE = -1e30

BackwardFn = Callable[[np.ndarray], Sequence[Union[np.ndarray, None]]]
Operand = Union["Tensor", np.ndarray, float, int]

_grad_state = threading.local()


def is_grad_enabled() -> bool:
    """Whether operations currently record the computation graph."""
    return getattr(_grad_state, "enabled", True)


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording in the current thread."""
    previous = is_grad_enabled()
    _grad_state.enabled = False
    try:
        yield
    finally:
        _grad_state.enabled = previous


class Tensor:
    """A dense float64 array that can take part in a computation graph."""

    __array_ufunc__ = None

    def __init__(
        self,
        data: Any,
        requires_grad: bool = False,
        name: str | None = None,
    ):
        """Initialize a tensor.

        Args:
            data: Array-like values; copied.
            requires_grad: Whether gradients should be accumulated into ``grad``.
            name: Optional label used in reports.
        """
        array = np.array(data, dtype=DTYPE)
        _check_finite(array, name or "tensor")
        self.data = array
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: BackwardFn | None = None

    @classmethod
    def _from_op(
        cls, data: np.ndarray, parents: tuple[Tensor, ...], backward: BackwardFn, op: str
    ) -> Tensor:
        data = np.asarray(data, dtype=DTYPE)
        _check_finite(data, op)
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.name = None
        out.requires_grad = is_grad_enabled() and any(p.requires_grad for p in parents)
        out._parents = parents if out.requires_grad else ()
        out._backward = backward if out.requires_grad else None
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    def item(self) -> float:
        """Return the single value of a one-element tensor."""
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        """Return a copy of the values."""
        return self.data.copy()

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Accumulate gradients of this tensor into every leaf that requires them.

        Args:
            grad: Seed gradient; defaults to one for single-element tensors.
        """
        if grad is None:
            if self.data.size != 1:
                raise ShapeError(f"backward() without a seed needs a scalar, got {self.shape}")
            grad = np.ones_like(self.data)
        if not self.requires_grad:
            return

        pending: dict[int, np.ndarray] = {id(self): np.asarray(grad, dtype=DTYPE)}
        for node in reversed(_topological_order(self)):
            node_grad = pending.pop(id(node), None)
            if node_grad is None:
                continue
            if node._backward is None:
                node.grad = node_grad.copy() if node.grad is None else node.grad + node_grad
                continue
            for parent, parent_grad in zip(node._parents, node._backward(node_grad)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                pending[key] = pending[key] + parent_grad if key in pending else parent_grad

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label})"

    def __add__(self, other: Operand) -> Tensor:
        return add(self, other)

    def __radd__(self, other: Operand) -> Tensor:
        return add(other, self)

    def __sub__(self, other: Operand) -> Tensor:
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other: Operand) -> Tensor:
        return add(other, neg(self))

    def __mul__(self, other: Operand) -> Tensor:
        return mul(self, other)

    def __rmul__(self, other: Operand) -> Tensor:
        return mul(other, self)

    def __neg__(self) -> Tensor:
        return neg(self)

    def __matmul__(self, other: Tensor) -> Tensor:
        return matmul(self, other)

    def __getitem__(self, index: Any) -> Tensor:
        return take(self, index)

    def reshape(self, shape: Sequence[int]) -> Tensor:
        return reshape(self, shape)

    def sum(self, axis: int | None = None) -> Tensor:
        return tensor_sum(self, axis)


class Param(Tensor):
    """A trainable leaf tensor tagged with its learning-rate group."""

    def __init__(
        self,
        data: Any,
        group: ParamGroup = ParamGroup.BERT,
        frozen: bool = False,
        name: str | None = None,
    ):
        super().__init__(data, requires_grad=True, name=name)
        self.group = group
        self.frozen = frozen

    def __repr__(self) -> str:
        return (
            f"Param(name={self.name!r}, shape={self.shape}, group={self.group.value}, "
            f"frozen={self.frozen})"
        )


class Component:
    """A named collection of parameters and sub-components."""

    def __init__(self) -> None:
        self._params: dict[str, Param] = {}
        self._children: dict[str, Component] = {}

    def add_param(
        self, name: str, data: np.ndarray, group: ParamGroup = ParamGroup.BERT
    ) -> Param:
        param = Param(data, group=group, name=name)
        self._params[name] = param
        return param

    def add_child(self, name: str, child: Component) -> Any:
        self._children[name] = child
        return child

    def named_params(self, prefix: str = "") -> dict[str, Param]:
        """Return every parameter keyed by its dotted path."""
        result = {f"{prefix}{name}": param for name, param in self._params.items()}
        for child_name, child in self._children.items():
            result.update(child.named_params(f"{prefix}{child_name}."))
        return result

    def params(self) -> list[Param]:
        return list(self.named_params().values())

    def zero_grad(self) -> None:
        for param in self.params():
            param.zero_grad()


def _check_finite(array: np.ndarray, where: str) -> None:
    if not np.all(np.isfinite(array)):
        raise NumericalError(f"non-finite values produced by {where}")


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def as_tensor(value: Operand) -> Tensor:
    """Wrap arrays and numbers as constant tensors."""
    return value if isinstance(value, Tensor) else Tensor(value)


def component_rng(seed: int, name: str) -> np.random.Generator:
    """Derive an independent generator for a named component.

    Parameters of one component never depend on how many random numbers other
    components consumed.
    """
    return np.random.default_rng(np.random.SeedSequence([seed, zlib.crc32(name.encode("utf-8"))]))


def truncated_normal(
    rng: np.random.Generator, shape: Sequence[int], std: float, bound: float = 2.0
) -> np.ndarray:
    """Sample a normal distribution truncated at ``bound`` standard deviations."""
    values = rng.standard_normal(tuple(shape))
    outside = np.abs(values) > bound
    while outside.any():
        values[outside] = rng.standard_normal(int(outside.sum()))
        outside = np.abs(values) > bound
    return values * std


# --------------------------------------------------------------------------- #
# Elementwise
# --------------------------------------------------------------------------- #


def add(a: Operand, b: Operand) -> Tensor:
    """Elementwise sum with numpy broadcasting (used for bias adds)."""
    ta, tb = as_tensor(a), as_tensor(b)
    try:
        out = ta.data + tb.data
    except ValueError as e:
        raise ShapeError(f"cannot add shapes {ta.shape} and {tb.shape}") from e

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return _unbroadcast(g, ta.shape), _unbroadcast(g, tb.shape)

    return Tensor._from_op(out, (ta, tb), backward, "add")


def mul(a: Operand, b: Operand) -> Tensor:
    """Elementwise product with numpy broadcasting."""
    ta, tb = as_tensor(a), as_tensor(b)
    try:
        out = ta.data * tb.data
    except ValueError as e:
        raise ShapeError(f"cannot multiply shapes {ta.shape} and {tb.shape}") from e

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return _unbroadcast(g * tb.data, ta.shape), _unbroadcast(g * ta.data, tb.shape)

    return Tensor._from_op(out, (ta, tb), backward, "mul")


def neg(x: Tensor) -> Tensor:
    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (-g,)

    return Tensor._from_op(-x.data, (x,), backward, "neg")


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (g * (1.0 - out * out),)

    return Tensor._from_op(out, (x,), backward, "tanh")


def relu(x: Tensor) -> Tensor:
    positive = x.data > 0

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (g * positive,)

    return Tensor._from_op(np.where(positive, x.data, 0.0), (x,), backward, "relu")


def dropout(
    x: Tensor, rate: float, rng: np.random.Generator | None, train: bool
) -> Tensor:
    """Inverted dropout: identity in eval mode, scaled by 1/(1-rate) in train mode."""
    if not train or rate == 0.0:
        return x
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if rng is None:
        raise ValueError("dropout in train mode needs a random generator")
    keep = rng.random(x.shape) >= rate
    return mul(x, keep / (1.0 - rate))


# --------------------------------------------------------------------------- #
# Products and reductions
# --------------------------------------------------------------------------- #


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of two 2-D tensors."""
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner extents differ: {a.shape} x {b.shape}")

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return g @ b.data.T, a.data.T @ g

    return Tensor._from_op(a.data @ b.data, (a, b), backward, "matmul")


def einsum(subscripts: str, a: Tensor, b: Tensor) -> Tensor:
    """Two-operand einsum whose gradients are einsums again.

    Every index of one operand must occur in the other operand or in the
    output, and no index may repeat inside an operand.
    """
    inputs, _, output = subscripts.replace(" ", "").partition("->")
    sub_a, _, sub_b = inputs.partition(",")
    if not output or not sub_a or not sub_b:
        raise ShapeError(f"einsum needs the explicit form 'ab,bc->ac', got {subscripts!r}")
    for sub in (sub_a, sub_b, output):
        if len(set(sub)) != len(sub):
            raise ShapeError(f"repeated index in {sub!r}")
    if not set(sub_a) <= set(sub_b) | set(output) or not set(sub_b) <= set(sub_a) | set(output):
        raise ShapeError(f"einsum {subscripts!r} sums an index private to one operand")
    try:
        out = np.einsum(f"{sub_a},{sub_b}->{output}", a.data, b.data)
    except ValueError as e:
        raise ShapeError(f"einsum {subscripts!r} on shapes {a.shape} and {b.shape}: {e}") from e

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        grad_a = np.einsum(f"{output},{sub_b}->{sub_a}", g, b.data)
        grad_b = np.einsum(f"{output},{sub_a}->{sub_b}", g, a.data)
        return grad_a, grad_b

    return Tensor._from_op(out, (a, b), backward, "einsum")


def tensor_sum(x: Tensor, axis: int | None = None) -> Tensor:
    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        if axis is None:
            return (np.broadcast_to(g, x.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), x.shape).copy(),)

    return Tensor._from_op(x.data.sum(axis=axis), (x,), backward, "sum")


def softmax(x: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Softmax over the last axis.

    Masked entries (``mask`` False) get logits of ``MASK_VALUE`` and therefore
    a probability of exactly zero.

    Args:
        x: Logits.
        mask: Boolean array broadcastable to ``x``; True keeps an entry.

    Returns:
        Probabilities summing to one along the last axis.
    """
    logits = x.data
    if mask is not None:
        keep = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
        if not keep.any(axis=-1).all():
            raise ValueError("softmax row has every entry masked")
        logits = np.where(keep, logits, MASK_VALUE)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exps = np.exp(shifted)
    out = exps / exps.sum(axis=-1, keepdims=True)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return Tensor._from_op(out, (x,), backward, "softmax")


def logsumexp(x: Tensor, axis: int = -1) -> Tensor:
    """Numerically stable log(sum(exp(x))) along ``axis``."""
    peak = x.data.max(axis=axis, keepdims=True)
    exps = np.exp(x.data - peak)
    total = exps.sum(axis=axis, keepdims=True)
    out = np.squeeze(peak + np.log(total), axis=axis)
    weights = exps / total

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (np.expand_dims(g, axis) * weights,)

    return Tensor._from_op(out, (x,), backward, "logsumexp")


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-12) -> Tensor:
    """Normalize the last axis to zero mean and unit variance, then apply the affine."""
    d = x.shape[-1]
    if d < 1 or gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(f"layer_norm over {x.shape} with affine {gamma.shape}/{beta.shape}")
    centered = x.data - x.data.mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt((centered * centered).mean(axis=-1, keepdims=True) + eps)
    xhat = centered * rstd
    out = xhat * gamma.data + beta.data

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        dxhat = g * gamma.data
        grad_x = rstd * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        grad_gamma = (g * xhat).reshape(-1, d).sum(axis=0)
        grad_beta = g.reshape(-1, d).sum(axis=0)
        return grad_x, grad_gamma, grad_beta

    return Tensor._from_op(out, (x, gamma, beta), backward, "layer_norm")


# --------------------------------------------------------------------------- #
# Shape manipulation and gathers
# --------------------------------------------------------------------------- #


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        out = x.data.reshape(tuple(shape))
    except ValueError as e:
        raise ShapeError(f"cannot reshape {x.shape} to {tuple(shape)}") from e

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (g.reshape(x.shape),)

    return Tensor._from_op(out, (x,), backward, "reshape")


def take(x: Tensor, index: Any) -> Tensor:
    """Index with numpy semantics (slices or integer arrays); backward scatter-adds."""
    out = np.array(x.data[index])

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        grad = np.zeros_like(x.data)
        np.add.at(grad, index, g)
        return (grad,)

    return Tensor._from_op(out, (x,), backward, "take")


def embedding(table: Tensor, ids: Any) -> Tensor:
    """Gather rows of ``table``; repeated ids accumulate their gradients."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        bad = int(ids.max()) if ids.max() >= table.shape[0] else int(ids.min())
        raise VocabularyError(f"id {bad} outside table of {table.shape[0]} rows")
    return take(table, ids)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ShapeError("concat needs at least one tensor")
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as e:
        raise ShapeError(f"cannot concatenate shapes {[t.shape for t in tensors]}") from e
    boundaries = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g: np.ndarray) -> list[np.ndarray]:
        return list(np.split(g, boundaries, axis=axis))

    return Tensor._from_op(out, tuple(tensors), backward, "concat")


# --------------------------------------------------------------------------- #
# Gradient checking
# --------------------------------------------------------------------------- #


class GradcheckReport(BaseModel):
    """Outcome of comparing autodiff gradients with central differences."""

    max_rel_error: float
    max_abs_error: float
    worst_param: str | None = None
    worst_index: list[int] | None = None
    checked: int
    step: float
    tolerance: float
    passed: bool


def gradcheck(
    f: Callable[[], Tensor],
    params: Mapping[str, Param] | Sequence[Param],
    h: float = 1e-4,
    tol: float = 1e-4,
    min_scale: float = 1e-2,
    max_coords_per_param: int | None = None,
    rng: np.random.Generator | None = None,
) -> GradcheckReport:
    """Compare autodiff gradients with central finite differences.

    The relative error of a coordinate is ``|analytic - numeric|`` divided by
    ``max(|analytic|, |numeric|, min_scale)``.

    Args:
        f: Deterministic scalar-valued computation (dropout off).
        params: Parameters to check, optionally keyed by name.
        h: Finite-difference step.
        tol: Largest acceptable relative error.
        min_scale: Floor of the relative-error denominator.
        max_coords_per_param: Sample at most this many coordinates per
            parameter; None checks all of them.
        rng: Generator for coordinate sampling.

    Returns:
        Report with the worst coordinate.
    """
    named = dict(params) if isinstance(params, Mapping) else {
        (p.name or f"param{i}"): p for i, p in enumerate(params)
    }
    for param in named.values():
        param.zero_grad()
    loss = f()
    if loss.size != 1:
        raise ShapeError(f"gradcheck needs a scalar loss, got shape {loss.shape}")
    loss.backward()
    analytic = {
        name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
        for name, p in named.items()
    }
    sampler = rng or np.random.default_rng(0)

    def evaluate() -> float:
        with no_grad():
            value = f().item()
        if not math.isfinite(value):
            raise NumericalError("gradcheck loss is not finite")
        return value

    worst_rel, worst_abs, checked = 0.0, 0.0, 0
    worst_name: str | None = None
    worst_index: list[int] | None = None
    for name, param in named.items():
        coords = np.arange(param.size)
        if max_coords_per_param is not None and param.size > max_coords_per_param:
            coords = np.sort(sampler.choice(param.size, max_coords_per_param, replace=False))
        for flat in coords:
            index = np.unravel_index(int(flat), param.shape)
            original = param.data[index]
            try:
                param.data[index] = original + h
                plus = evaluate()
                param.data[index] = original - h
                minus = evaluate()
            finally:
                param.data[index] = original
            numeric = (plus - minus) / (2.0 * h)
            exact = float(analytic[name][index])
            abs_err = abs(exact - numeric)
            rel_err = abs_err / max(abs(exact), abs(numeric), min_scale)
            checked += 1
            worst_abs = max(worst_abs, abs_err)
            if rel_err > worst_rel:
                worst_rel = rel_err
                worst_name = name
                worst_index = [int(i) for i in index]

    for param in named.values():
        param.zero_grad()
    report = GradcheckReport(
        max_rel_error=worst_rel,
        max_abs_error=worst_abs,
        worst_param=worst_name,
        worst_index=worst_index,
        checked=checked,
        step=h,
        tolerance=tol,
        passed=worst_rel <= tol,
    )
    logger.debug(f"gradcheck: {checked} coordinates, max relative error {worst_rel:.3e}")
    return report
