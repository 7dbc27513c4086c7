"""Dense tensor with a recorded computation graph and reverse-mode gradients."""
import itertools
import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Sequence, Tuple

import numpy as np

from mstformer.exceptions import ContractError

DTYPE = np.float64

# Creation order doubles as execution order: an op's output is always created
# after its inputs.
_sequence = itertools.count()
_grad_state = threading.local()

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


def is_grad_enabled() -> bool:
    """Whether ops currently record graph nodes on this thread."""
    return getattr(_grad_state, "enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording on the current thread (evaluation, inference)."""
    previous = is_grad_enabled()
    _grad_state.enabled = False
    try:
        yield
    finally:
        _grad_state.enabled = previous


class Tensor:
    """Immutable float64 array plus an optional gradient slot.

    Values are never written after creation; only ``grad`` changes, and only
    during a backward pass (or an explicit ``zero_grad``).
    """

    __slots__ = ("data", "requires_grad", "grad", "name", "_parents", "_backward", "_op", "_seq")

    def __init__(self, values, requires_grad: bool = False, name: Optional[str] = None):
        data = np.array(values, dtype=DTYPE)
        data.setflags(write=False)
        self.data: np.ndarray = data
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._parents: Tuple["Tensor", ...] = ()
        self._backward: Optional[BackwardFn] = None
        self._op = "leaf"
        self._seq = next(_sequence)

    @classmethod
    def from_op(
        cls,
        data: np.ndarray,
        parents: Sequence["Tensor"],
        backward: BackwardFn,
        op: str,
    ) -> "Tensor":
        """Wrap an op result; the node is recorded only if a parent needs grad."""
        out = cls.__new__(cls)
        data = np.asarray(data, dtype=DTYPE)
        data.setflags(write=False)
        out.data = data
        out.grad = None
        out.name = None
        out._op = op
        out._seq = next(_sequence)
        track = is_grad_enabled() and any(p.requires_grad for p in parents)
        out.requires_grad = track
        out._parents = tuple(parents) if track else ()
        out._backward = backward if track else None
        return out

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def values(self) -> np.ndarray:
        """Flat row-major view of the values."""
        return self.data.reshape(-1)

    @property
    def op(self) -> str:
        return self._op

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False, name=self.name)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{flag}{label}, op={self._op!r})"

    # numpy defers binary operators to Tensor
    __array_ufunc__ = None


@dataclass
class Graph:
    """Nodes reachable from an output, in execution order."""

    nodes: list = field(default_factory=list)

    @classmethod
    def trace(cls, output: Tensor) -> "Graph":
        seen = {output._seq}
        stack = [output]
        nodes = []
        while stack:
            node = stack.pop()
            nodes.append(node)
            for parent in node._parents:
                if parent._seq not in seen:
                    seen.add(parent._seq)
                    stack.append(parent)
        nodes.sort(key=lambda n: n._seq)
        return cls(nodes=nodes)

    def __len__(self) -> int:
        return len(self.nodes)


def backward(loss: Tensor) -> Graph:
    """Populate ``grad`` on every grad-requiring tensor that reaches ``loss``.

    Gradients accumulate across calls until ``zero_grad`` is called.
    """
    if loss.size != 1:
        raise ContractError(f"backward() needs a scalar loss, got shape {loss.shape}")
    graph = Graph.trace(loss)
    pending = {loss._seq: np.ones_like(loss.data)}
    for node in reversed(graph.nodes):
        g = pending.pop(node._seq, None)
        if g is None:
            continue
        if node.requires_grad:
            node.grad = g.copy() if node.grad is None else node.grad + g
        if node._backward is None:
            continue
        for parent, parent_grad in zip(node._parents, node._backward(g)):
            if parent_grad is None or not parent.requires_grad:
                continue
            if parent._seq in pending:
                pending[parent._seq] = pending[parent._seq] + parent_grad
            else:
                pending[parent._seq] = parent_grad
    return graph
