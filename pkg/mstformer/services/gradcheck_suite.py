"""Finite-difference verification of every differentiable op and of the full loss."""
import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional

import numpy as np

from mstformer.core import nn, ops
from mstformer.core.gradcheck import check_gradient
from mstformer.core.tensor import Tensor
from mstformer.models.attention import time_aware_attention, time_scale_matrix
from mstformer.models.embedding import ClipBatch
from mstformer.models.mst_former import forward
from mstformer.models.params import ModelParams
from mstformer.schemas.config import ModelConfig
from mstformer.services.losses import ClassCounts, balanced_softmax_ce, cross_entropy, sequence_loss

logger = logging.getLogger(__name__)

TOLERANCE = 1e-4


@dataclass
class GradCheckResult:
    name: str
    max_rel_error: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < TOLERANCE


def toy_config() -> ModelConfig:
    """16×16 images, p=8, d_m=8, Z=2, S=2."""
    return ModelConfig(image_size=16, channels=3, num_scales=2, gamma=2, patch_size=8, d_model=8, num_heads=2)


def toy_batch(config: ModelConfig, rng: np.random.Generator, batch: int = 2, length: int = 2) -> ClipBatch:
    gaps = rng.uniform(0.25, 4.0, size=(batch, length))
    labels = rng.integers(0, config.num_classes, size=(batch, length + 1))
    return ClipBatch(
        images=rng.uniform(0.0, 1.0, size=(batch, length, config.image_size, config.image_size, config.channels)),
        timestamps=np.cumsum(gaps, axis=1),
        input_labels=labels[:, :-1],
        target_labels=labels[:, 1:],
    )


def _weighted(fn: Callable[[Tensor], Tensor], weights: np.ndarray) -> Callable[[Tensor], Tensor]:
    """Reduce an op's output to a scalar with fixed random weights."""
    return lambda x: ops.sum(ops.mul(fn(x), Tensor(weights)))


def op_cases(rng: np.random.Generator) -> Dict[str, tuple]:
    """name -> (scalar function, input point)."""
    shape = (3, 4)
    other = Tensor(rng.normal(size=shape))
    positive = Tensor(rng.uniform(0.5, 2.0, size=shape))
    square = Tensor(rng.normal(size=(4, 5)))
    mask = rng.random(shape) < 0.3
    gamma, beta = Tensor(rng.normal(size=4)), Tensor(rng.normal(size=4))
    weight, bias = Tensor(rng.normal(size=(4, 2))), Tensor(rng.normal(size=2))
    k = Tensor(rng.normal(size=(2, 5, 4)))
    v = Tensor(rng.normal(size=(2, 5, 4)))
    omega = time_scale_matrix(np.cumsum(rng.uniform(0.25, 4.0, size=5)), 0.5, 0.5).omega
    causal = np.triu(np.ones((5, 5), dtype=bool), k=1)
    targets = rng.integers(0, 4, size=3)
    counts = ClassCounts(counts=[19, 5, 3, 1], tau=2.0)
    x = Tensor(rng.normal(size=shape))
    seq = Tensor(rng.normal(size=(2, 5, 4)))

    def w(out_shape):
        return rng.normal(size=out_shape)

    return {
        "add": (_weighted(lambda a: ops.add(a, other), w(shape)), x),
        "sub": (_weighted(lambda a: ops.sub(other, a), w(shape)), x),
        "mul": (_weighted(lambda a: ops.mul(a, other), w(shape)), x),
        "div": (_weighted(lambda a: ops.div(other, a), w(shape)), positive),
        "power": (_weighted(lambda a: ops.power(a, 1.5), w(shape)), positive),
        "exp": (_weighted(ops.exp, w(shape)), x),
        "log": (_weighted(ops.log, w(shape)), positive),
        "sin": (_weighted(ops.sin, w(shape)), x),
        "cos": (_weighted(ops.cos, w(shape)), x),
        "tanh": (_weighted(ops.tanh, w(shape)), x),
        "gelu": (_weighted(ops.gelu, w(shape)), x),
        "matmul": (_weighted(lambda a: ops.matmul(a, square), w((3, 5))), x),
        "sum": (_weighted(lambda a: ops.sum(a, axis=1), w(3)), x),
        "mean": (_weighted(lambda a: ops.mean(a, axis=0, keepdims=True), w((1, 4))), x),
        "softmax": (_weighted(lambda a: ops.softmax(a, axis=-1), w(shape)), x),
        "log_softmax": (_weighted(lambda a: ops.log_softmax(a, axis=-1), w(shape)), x),
        "reshape": (_weighted(lambda a: ops.reshape(a, (2, 6)), w((2, 6))), x),
        "permute": (_weighted(lambda a: ops.transpose(a), w((4, 3))), x),
        "index": (_weighted(lambda a: ops.index(a, (np.array([0, 2, 2]), np.array([1, 3, 3]))), w(3)), x),
        "concat": (_weighted(lambda a: ops.concat([a, other, a], axis=1), w((3, 12))), x),
        "masked_fill": (_weighted(lambda a: ops.softmax(ops.masked_fill(a, mask), axis=-1), w(shape)), x),
        "layer_norm": (_weighted(lambda a: nn.layer_norm(a, gamma, beta), w(shape)), x),
        "linear": (_weighted(lambda a: nn.linear(a, weight, bias), w((3, 2))), x),
        "time_aware_attention": (
            _weighted(lambda q: time_aware_attention(q, k, v, omega, mask=causal), w((2, 5, 4))),
            seq,
        ),
        "cross_entropy": (lambda a: cross_entropy(a, targets), x),
        "balanced_softmax_ce": (lambda a: balanced_softmax_ce(a, targets, counts), x),
    }


def check_model(seed: int = 0, per_param: int = 3, names: Optional[List[str]] = None) -> List[GradCheckResult]:
    """End-to-end loss gradient on the toy config at ``per_param`` sampled entries of each parameter."""
    rng = np.random.default_rng(seed)
    config = toy_config()
    params = ModelParams.initialize(config, seed)
    batch = toy_batch(config, rng)
    counts = ClassCounts(counts=[3, 1], tau=2.0)
    results = []
    for name in names or list(params):
        tensor = params[name]

        def loss_of(x: Tensor, name=name) -> Tensor:
            logits = forward(batch, config, params.replace(name, x))
            return sequence_loss(logits, batch.target_labels, "balanced", counts)

        indices = rng.choice(tensor.size, size=min(per_param, tensor.size), replace=False)
        results.append(GradCheckResult(f"model:{name}", check_gradient(loss_of, tensor, indices=indices)))
    return results


def run_gradcheck(seed: int = 0, per_param: int = 3) -> List[GradCheckResult]:
    """Every primitive plus the end-to-end model; logs the worst error."""
    rng = np.random.default_rng(seed)
    results = [GradCheckResult(name, check_gradient(f, x)) for name, (f, x) in op_cases(rng).items()]
    results += check_model(seed, per_param)
    worst = max(results, key=lambda r: r.max_rel_error)
    failed = [r.name for r in results if not r.passed]
    logger.info(f"🔍 Checked {len(results)} gradients; worst {worst.name} = {worst.max_rel_error:.2e}")
    if failed:
        logger.error(f"❌ Gradient mismatch in: {', '.join(failed)}")
    return results
