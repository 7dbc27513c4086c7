"""Minimal dense-tensor engine with reverse-mode differentiation."""
from mstformer.core import ops  # noqa: F401 - binds Tensor operators
from mstformer.core.tensor import Graph, Tensor, backward, no_grad

__all__ = ["Graph", "Tensor", "backward", "no_grad", "ops"]
