"""Context-aware neuromodulation gate.

``m = sigmoid(W2 @ gelu(W1 @ x)) * gamma + beta``, evaluated per token.
All functions accept a single vector or a batch of row vectors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import DimensionError, Rng, gaussian_matrix, gelu, gelu_grad, sigmoid, sigmoid_grad


@dataclass
class GateParams:
    W1: np.ndarray  # (d_h, d_in)
    W2: np.ndarray  # (r, d_h)
    gamma: np.ndarray  # (r,)
    beta: np.ndarray  # (r,)

    @property
    def d_h(self) -> int:
        return self.W1.shape[0]

    @property
    def d_in(self) -> int:
        return self.W1.shape[1]

    @property
    def r(self) -> int:
        return self.W2.shape[0]

    def __post_init__(self):
        d_h, d_in = self.W1.shape
        if self.W2.shape[1] != d_h:
            raise DimensionError(f"W2 {self.W2.shape} incompatible with W1 {self.W1.shape}")
        r = self.W2.shape[0]
        if self.gamma.shape != (r,) or self.beta.shape != (r,):
            raise DimensionError(
                f"gamma {self.gamma.shape} / beta {self.beta.shape} must have shape ({r},)"
            )

    def arrays(self) -> dict[str, np.ndarray]:
        return {"W1": self.W1, "W2": self.W2, "gamma": self.gamma, "beta": self.beta}

    def copy(self) -> "GateParams":
        return GateParams(self.W1.copy(), self.W2.copy(), self.gamma.copy(), self.beta.copy())


def init_gate(rng: Rng, d_in: int, d_h: int, r: int) -> GateParams:
    """W1 ~ N(0, 1/d_in), W2 = 0, gamma = 1, beta = 0."""
    return GateParams(
        W1=gaussian_matrix(rng, d_h, d_in, std=1.0 / np.sqrt(d_in)),
        W2=np.zeros((r, d_h)),
        gamma=np.ones(r),
        beta=np.zeros(r),
    )


@dataclass
class GateTape:
    x: np.ndarray
    pre_gelu: np.ndarray
    hidden: np.ndarray
    pre_sigmoid: np.ndarray
    s: np.ndarray
    m: np.ndarray
    params_id: int


def gate_forward(p: GateParams, x: np.ndarray) -> tuple[np.ndarray, GateTape]:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != p.d_in or x.ndim > 2:
        raise DimensionError(f"gate expects last dim {p.d_in}, got shape {x.shape}")
    pre_gelu = x @ p.W1.T
    hidden = gelu(pre_gelu)
    pre_sigmoid = hidden @ p.W2.T
    s = sigmoid(pre_sigmoid)
    m = s * p.gamma + p.beta
    return m, GateTape(x, pre_gelu, hidden, pre_sigmoid, s, m, id(p))


def gate_backward(p: GateParams, tape: GateTape, grad_m: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of ``<grad_m, m>`` w.r.t. W1, W2, gamma, beta and x.

    Batched inputs have their parameter gradients summed over the batch;
    ``x`` keeps one gradient row per token.
    """
    if tape.params_id != id(p):
        raise ValueError("gate tape was recorded with different parameters")
    grad_m = np.asarray(grad_m, dtype=np.float64)
    if grad_m.shape != tape.m.shape:
        raise DimensionError(f"grad_m shape {grad_m.shape} != gate output {tape.m.shape}")
    batched = grad_m.ndim == 2
    gm = grad_m if batched else grad_m[None, :]
    s = tape.s if batched else tape.s[None, :]
    hidden = tape.hidden if batched else tape.hidden[None, :]
    pre_gelu = tape.pre_gelu if batched else tape.pre_gelu[None, :]
    x = tape.x if batched else tape.x[None, :]

    grad_beta = gm.sum(axis=0)
    grad_gamma = (gm * s).sum(axis=0)
    d_pre_sigmoid = gm * p.gamma * sigmoid_grad(s)
    grad_W2 = d_pre_sigmoid.T @ hidden
    d_pre_gelu = (d_pre_sigmoid @ p.W2) * gelu_grad(pre_gelu)
    grad_W1 = d_pre_gelu.T @ x
    grad_x = d_pre_gelu @ p.W1
    return {
        "W1": grad_W1,
        "W2": grad_W2,
        "gamma": grad_gamma,
        "beta": grad_beta,
        "x": grad_x if batched else grad_x[0],
    }
