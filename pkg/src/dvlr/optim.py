"""SGD and Adagrad updates driven by a learning rate supplied on every call.

The learning rate is never stored in the optimizer state: the DVLR scheduler
picks a different rate from batch to batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError

OPTIMIZER_KINDS = ("sgd", "adagrad")
ADAGRAD_EPSILON = 1e-10


@dataclass
class OptimizerState:
    kind: str
    accumulators: dict[str, np.ndarray] = field(default_factory=dict)
    epsilon: float = ADAGRAD_EPSILON

    def __post_init__(self):
        if self.kind not in OPTIMIZER_KINDS:
            raise ConfigError(f"unknown optimizer {self.kind!r}; expected one of {OPTIMIZER_KINDS}")
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")


def new_optimizer(kind: str, params: dict[str, np.ndarray], epsilon: float = ADAGRAD_EPSILON) -> OptimizerState:
    acc = {name: np.zeros_like(p) for name, p in params.items()} if kind == "adagrad" else {}
    return OptimizerState(kind=kind, accumulators=acc, epsilon=epsilon)


def step(state: OptimizerState, params: dict[str, np.ndarray], grads: dict[str, np.ndarray], eta: float) -> None:
    """Apply one update to ``params`` in place.

    sgd:     p -= eta * g
    adagrad: G += g**2;  p -= eta * g / (sqrt(G) + eps)
    """
    if not eta >= 0:
        raise ConfigError(f"learning rate must be non-negative, got {eta}")
    if grads.keys() != params.keys():
        raise DimensionError(f"gradient names {sorted(grads)} do not match parameters {sorted(params)}")
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise DimensionError(f"{name}: gradient shape {g.shape} does not match parameter {p.shape}")
        if state.kind == "sgd":
            p -= eta * g
        else:
            acc = state.accumulators.get(name)
            if acc is None or acc.shape != p.shape:
                raise DimensionError(f"{name}: adagrad accumulator missing or mis-shaped")
            acc += g * g
            p -= eta * g / (np.sqrt(acc) + state.epsilon)
