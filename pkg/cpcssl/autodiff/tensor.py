"""Tensor value carrier and the tape that records operations for reverse mode.

Every op in :mod:`cpcssl.autodiff.ops` computes its forward value with numpy and,
when a tape is active and one of its inputs requires a gradient, appends a
:class:`Node` holding a vector-Jacobian closure. :func:`backward` then walks the
tape in strict reverse execution order.
"""
import threading
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from cpcssl.core.exceptions import ShapeError

VJP = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]

_local = threading.local()


class Tensor:
    """Dense float64 array with an optional name and gradient flag."""

    __slots__ = ("data", "requires_grad", "name", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.array(data, dtype=np.float64) if not isinstance(data, np.ndarray) else data.astype(np.float64, copy=False)
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single value, got shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    # Operator sugar; the implementations live in ops.
    def __add__(self, other):
        from cpcssl.autodiff import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from cpcssl.autodiff import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from cpcssl.autodiff import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from cpcssl.autodiff import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from cpcssl.autodiff import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from cpcssl.autodiff import ops
        return ops.mul(other, self)

    def __truediv__(self, other):
        from cpcssl.autodiff import ops
        return ops.div(self, other)

    def __neg__(self):
        from cpcssl.autodiff import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from cpcssl.autodiff import ops
        return ops.matmul(self, other)

    def __getitem__(self, key):
        from cpcssl.autodiff import ops
        return ops.index(self, key)


@dataclass
class Node:
    op: str
    out: Tensor
    inputs: Tuple[Tensor, ...]
    vjp: VJP


@dataclass
class Tape:
    """Ordered record of the operations executed while the tape is active."""

    nodes: List[Node] = field(default_factory=list)

    def record(self, op: str, out: Tensor, inputs: Sequence[Tensor], vjp: VJP) -> None:
        self.nodes.append(Node(op, out, tuple(inputs), vjp))

    def __len__(self) -> int:
        return len(self.nodes)

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        _stack().pop()


def _stack() -> List[Tape]:
    if not hasattr(_local, "tapes"):
        _local.tapes = []
    return _local.tapes


def active_tape() -> Optional[Tape]:
    stack = _stack()
    return stack[-1] if stack else None


def parameter(data, name: str) -> Tensor:
    """Leaf tensor that receives gradients."""
    return Tensor(data, requires_grad=True, name=name)


def backward(tape: Tape, loss: Tensor, params: Optional[Mapping[str, Tensor]] = None) -> Dict[str, np.ndarray]:
    """Reverse pass over ``tape`` from the scalar ``loss``.

    Returns a gradient for every tensor in ``params`` (zeros for parameters the
    loss does not reach). Without ``params`` the named leaves that appear on the
    tape are returned.
    """
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")

    grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        g = grads.get(id(node.out))
        if g is None:
            continue
        for inp, gi in zip(node.inputs, node.vjp(g)):
            if gi is None or not inp.requires_grad:
                continue
            key = id(inp)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = gi

    if params is None:
        params = {}
        for node in tape.nodes:
            for inp in node.inputs:
                if inp.requires_grad and inp.name is not None:
                    params.setdefault(inp.name, inp)

    return {
        name: grads[id(p)].reshape(p.shape) if id(p) in grads else np.zeros_like(p.data)
        for name, p in params.items()
    }
