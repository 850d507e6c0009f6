"""AdamW with two parameter groups and a warmup + cosine schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# parameter names per group; everything else is frozen
B_GROUP = ("B", "A")
GATE_GROUP = ("W1", "W2", "gamma", "beta", "m")
NO_DECAY = ("gamma", "beta", "m")


@dataclass(frozen=True)
class OptimizerConfig:
    # desk-scale rates: 250x the large-model values, same B:gate ratio
    lr_B: float = 5e-2
    lr_gate: float = 1.25e-1
    beta1: float = 0.9
    beta2: float = 0.95
    weight_decay: float = 0.01
    warmup_ratio: float = 0.03
    total_steps: int = 0
    epsilon: float = 1e-8

    def __post_init__(self):
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if not 0.0 <= self.warmup_ratio < 1.0:
            raise ValueError("warmup_ratio must lie in [0, 1)")
        if self.lr_B < 0 or self.lr_gate < 0 or self.weight_decay < 0 or self.epsilon <= 0:
            raise ValueError("learning rates and weight decay must be >= 0, epsilon > 0")
        if self.total_steps < 0:
            raise ValueError("total_steps must be >= 0")

    def base_lr(self, name: str) -> float:
        if name in B_GROUP:
            return self.lr_B
        if name in GATE_GROUP:
            return self.lr_gate
        raise KeyError(f"{name!r} is not a trainable parameter")


def lr_at(step: float, cfg: OptimizerConfig, base_lr: float) -> float:
    """Linear warmup over ``warmup_ratio * total_steps`` steps, then cosine to 0."""
    total = cfg.total_steps
    if total <= 0:
        return base_lr
    step = min(max(step, 0), total)
    warmup = cfg.warmup_ratio * total
    if step < warmup:
        return base_lr * step / warmup
    progress = (step - warmup) / (total - warmup)
    return max(0.0, base_lr * 0.5 * (1.0 + math.cos(math.pi * progress)))


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adamw_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    cfg: OptimizerConfig,
    lrs: dict[str, float],
) -> None:
    """One in-place AdamW update.

    ``lrs`` maps parameter name to the learning rate for this step.
    Parameters listed in ``NO_DECAY`` skip weight decay.
    """
    state.t += 1
    t = state.t
    bc1 = 1.0 - cfg.beta1**t
    bc2 = 1.0 - cfg.beta2**t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape} for {name}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m, v = state.m[name], state.v[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * g * g
        m_hat = m / bc1
        v_hat = v / bc2
        update = m_hat / (np.sqrt(v_hat) + cfg.epsilon)
        if name not in NO_DECAY and cfg.weight_decay:
            update = update + cfg.weight_decay * p
        p -= lrs[name] * update
