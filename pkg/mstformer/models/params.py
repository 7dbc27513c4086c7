"""Learnable parameters keyed by a stable dotted naming scheme."""
from typing import Dict, Iterator, Mapping, Tuple

import numpy as np

from mstformer.core.tensor import Tensor
from mstformer.exceptions import ShapeMismatchError
from mstformer.schemas.config import ModelConfig

ATTENTION_PROJECTIONS = ("q", "k", "v", "o")


def _linear_shapes(prefix: str, fan_in: int, fan_out: int) -> Dict[str, Tuple[int, ...]]:
    return {f"{prefix}.weight": (fan_in, fan_out), f"{prefix}.bias": (fan_out,)}


def _norm_shapes(prefix: str, width: int) -> Dict[str, Tuple[int, ...]]:
    return {f"{prefix}.gamma": (width,), f"{prefix}.beta": (width,)}


def _attention_shapes(prefix: str, width: int) -> Dict[str, Tuple[int, ...]]:
    shapes: Dict[str, Tuple[int, ...]] = {}
    for proj in ATTENTION_PROJECTIONS:
        shapes.update(_linear_shapes(f"{prefix}.{proj}", width, width))
    return shapes


def _ff_shapes(prefix: str, width: int, hidden: int) -> Dict[str, Tuple[int, ...]]:
    return {**_linear_shapes(f"{prefix}.fc1", width, hidden), **_linear_shapes(f"{prefix}.fc2", hidden, width)}


def parameter_shapes(config: ModelConfig) -> Dict[str, Tuple[int, ...]]:
    """Every parameter name and shape, in initialisation order."""
    d = config.d_model
    hidden = config.ff_mult * d
    patch_dim = config.patch_size * config.patch_size * config.channels
    shapes: Dict[str, Tuple[int, ...]] = {}
    shapes.update(_linear_shapes("patch_embed", patch_dim, d))
    shapes["label_embed.table"] = (config.num_classes, d)
    for s in range(1, config.num_scales + 1):
        scale = f"scale{s}"
        if s > 1:
            shapes.update(_linear_shapes(f"{scale}.merge", config.gamma * config.gamma * d, d))
        for b in range(1, config.blocks_per_scale + 1):
            block = f"{scale}.enc{b}"
            for n in (1, 2, 3):
                shapes.update(_norm_shapes(f"{block}.norm{n}", d))
            shapes.update(_attention_shapes(f"{block}.spatial", d))
            shapes.update(_attention_shapes(f"{block}.temporal", d))
            shapes.update(_ff_shapes(f"{block}.ff", d, hidden))
        for b in range(1, config.blocks_per_scale + 1):
            block = f"{scale}.dec{b}"
            for n in (1, 2, 3):
                shapes.update(_norm_shapes(f"{block}.norm{n}", d))
            shapes.update(_attention_shapes(f"{block}.self_attn", d))
            shapes.update(_attention_shapes(f"{block}.cross_attn", d))
            shapes.update(_ff_shapes(f"{block}.ff", d, hidden))
    shapes.update(_linear_shapes("head", d, config.num_classes))
    return shapes


def param_count(config: ModelConfig) -> int:
    """Total learnable scalars implied by ``config``."""
    return int(sum(int(np.prod(shape)) for shape in parameter_shapes(config).values()))


def _initial_value(name: str, shape: Tuple[int, ...], rng: np.random.Generator) -> np.ndarray:
    if name.endswith(".gamma"):
        return np.ones(shape)
    if name.endswith((".bias", ".beta")):
        return np.zeros(shape)
    if name.endswith(".table"):
        return rng.normal(0.0, 1.0, size=shape)
    fan_in, fan_out = shape
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class ModelParams:
    """Named map from parameter path (``scale1.enc1.spatial.q.weight``) to Tensor."""

    def __init__(self, tensors: Mapping[str, Tensor]):
        self._tensors: Dict[str, Tensor] = dict(tensors)

    @classmethod
    def initialize(cls, config: ModelConfig, seed: int = 0) -> "ModelParams":
        """Xavier-uniform matrices, zero biases, unit norms; deterministic in ``seed``."""
        rng = np.random.default_rng(seed)
        tensors = {
            name: Tensor(_initial_value(name, shape, rng), requires_grad=True, name=name)
            for name, shape in parameter_shapes(config).items()
        }
        return cls(tensors)

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def items(self):
        return self._tensors.items()

    def as_dict(self) -> Dict[str, Tensor]:
        return dict(self._tensors)

    @property
    def num_parameters(self) -> int:
        return int(sum(t.size for t in self._tensors.values()))

    def replace(self, name: str, tensor: Tensor) -> "ModelParams":
        """Copy with one tensor swapped (used by finite-difference checks)."""
        tensors = dict(self._tensors)
        tensors[name] = tensor
        return ModelParams(tensors)

    def assign(self, name: str, values: np.ndarray) -> None:
        """Rebind a parameter's values in place of the old array (optimiser updates)."""
        old = self._tensors[name]
        fresh = Tensor(values, requires_grad=True, name=name)
        fresh.grad = old.grad
        self._tensors[name] = fresh

    def zero_grad(self) -> None:
        for tensor in self._tensors.values():
            tensor.zero_grad()

    def check_against(self, config: ModelConfig) -> None:
        """Raise ShapeMismatchError naming the first parameter that disagrees."""
        expected = parameter_shapes(config)
        for name, shape in expected.items():
            found = self._tensors.get(name)
            if found is None or found.shape != shape:
                raise ShapeMismatchError(name, shape, None if found is None else found.shape)
        extra = sorted(set(self._tensors) - set(expected))
        if extra:
            raise ShapeMismatchError(extra[0], None, self._tensors[extra[0]].shape)
