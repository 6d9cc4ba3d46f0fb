"""AdamW with decoupled weight decay and the linear-decay learning-rate rule.

Parameters are organized into exactly two groups during training ("lm" and
"gat"), each with its own initial learning rate; the schedule scales both by
the same decay factor.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Matrix
from .errors import DimensionError, InvariantError


@dataclass
class ParameterGroup:
    """Named set of trainable leaves sharing one learning rate."""

    name: str
    parameters: list[Matrix]
    learning_rate: float

    def __post_init__(self) -> None:
        if self.learning_rate < 0:
            raise InvariantError(f"learning rate must be >= 0, got {self.learning_rate}")
        seen: set[int] = set()
        for p in self.parameters:
            if not p.is_param:
                raise InvariantError(f"non-parameter matrix {p!r} in group {self.name!r}")
            if id(p) in seen:
                raise InvariantError(f"duplicate parameter {p.name!r} in group {self.name!r}")
            seen.add(id(p))


@dataclass
class AdamWState:
    """Per-group optimizer state; moment shapes mirror parameter shapes."""

    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 0.01
    step: int = 0
    first_moment: dict[int, np.ndarray] = field(default_factory=dict)
    second_moment: dict[int, np.ndarray] = field(default_factory=dict)


def adamw_step(
    group: ParameterGroup,
    state: AdamWState,
    grads: list[np.ndarray],
    lr: float | None = None,
) -> None:
    """One AdamW update with bias correction and decoupled weight decay.

    ``grads`` aligns with ``group.parameters``; ``lr`` overrides the group's
    learning rate (used by schedules). Parameter data is updated in place and
    ``state.step`` is incremented by exactly 1.
    """
    if len(grads) != len(group.parameters):
        raise DimensionError(
            f"got {len(grads)} gradients for {len(group.parameters)} parameters"
        )
    lr = group.learning_rate if lr is None else lr
    if lr < 0:
        raise InvariantError(f"learning rate must be >= 0, got {lr}")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    for p, g in zip(group.parameters, grads):
        g = np.asarray(g, dtype=np.float64)
        if g.shape != p.data.shape:
            raise DimensionError(
                f"gradient shape {g.shape} does not match parameter "
                f"{p.name!r} shape {p.data.shape}"
            )
        key = id(p)
        m = state.first_moment.setdefault(key, np.zeros_like(p.data))
        v = state.second_moment.setdefault(key, np.zeros_like(p.data))
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        p.data -= lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
        if state.weight_decay != 0.0:
            p.data -= lr * state.weight_decay * p.data


def linear_decay_lr(initial: float, step: int, total_steps: int) -> float:
    """initial * (1 - step/total_steps); clamps to 0 past the end."""
    if total_steps < 1:
        raise InvariantError(f"total_steps must be >= 1, got {total_steps}")
    if step < 0:
        raise InvariantError(f"step must be >= 0, got {step}")
    if step > total_steps:
        return 0.0
    return initial * (1.0 - step / total_steps)
