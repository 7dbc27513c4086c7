"""SGD with momentum and a linear-warmup cosine learning-rate schedule."""
import math
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from mstformer.exceptions import ConfigurationError, ContractError
from mstformer.models.params import ModelParams
from mstformer.schemas.config import TrainConfig


def lr_at(step: int, total_steps: int, cfg: TrainConfig) -> float:
    """Learning rate for 0-based ``step`` of ``total_steps``."""
    warmup = cfg.warmup_for(total_steps)
    if total_steps <= warmup:
        raise ConfigurationError(f"total_steps={total_steps} must exceed warmup_steps={warmup}")
    if not 0 <= step <= total_steps:
        raise ContractError(f"step {step} outside [0, {total_steps}]")
    if step < warmup:
        return cfg.lr_base * (step + 1) / warmup
    progress = (step - warmup) / (total_steps - warmup)
    return cfg.lr_base * 0.5 * (1.0 + math.cos(math.pi * progress))


@dataclass
class OptimizerState:
    """Momentum buffers keyed like the parameters."""

    velocity: Dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    @classmethod
    def zeros_like(cls, params: ModelParams) -> "OptimizerState":
        return cls({name: np.zeros(t.shape) for name, t in params.items()})


def global_norm(grads: Mapping[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_by_global_norm(grads: Mapping[str, np.ndarray], max_norm: float) -> Tuple[Dict[str, np.ndarray], float]:
    """Rescale all gradients together so their joint L2 norm is at most ``max_norm``."""
    norm = global_norm(grads)
    scale = max_norm / norm if norm > max_norm else 1.0
    return {name: g * scale for name, g in grads.items()}, norm


def collect_grads(params: ModelParams) -> Dict[str, np.ndarray]:
    """Current gradients; parameters the loss never reached get zeros."""
    return {name: np.zeros(t.shape) if t.grad is None else t.grad for name, t in params.items()}


def sgd_step(
    params: ModelParams,
    grads: Mapping[str, np.ndarray],
    state: OptimizerState,
    lr: float,
    momentum: float = 0.9,
    weight_decay: float = 0.0,
    max_norm: Optional[float] = None,
) -> OptimizerState:
    """v ← momentum·v + g; θ ← θ − lr·v.

    ``weight_decay`` adds λ·θ to g and ``max_norm`` clips g first; both off by default.
    """
    if set(grads) != set(params):
        missing = sorted(set(params) ^ set(grads))
        raise ContractError(f"gradients and parameters disagree on names: {missing[:3]}")
    if max_norm is not None:
        grads, _ = clip_by_global_norm(grads, max_norm)
    for name, tensor in params.items():
        grad = np.asarray(grads[name], dtype=np.float64)
        velocity = state.velocity.get(name)
        if grad.shape != tensor.shape or velocity is None or velocity.shape != tensor.shape:
            raise ContractError(
                f"'{name}': parameter {tensor.shape}, gradient {grad.shape}, "
                f"velocity {None if velocity is None else velocity.shape}"
            )
        if weight_decay:
            grad = grad + weight_decay * tensor.data
        velocity = momentum * velocity + grad
        state.velocity[name] = velocity
        params.assign(name, tensor.data - lr * velocity)
    state.step += 1
    return state
