"""The adapted linear map with rank-wise top-k expert routing.

``y = W0 x + (alpha / r) * sum_{i in active} B[:, i] * h'_i`` where
``h' = (A x) * m`` and ``active = TopK(|h'|, k)``. What ``m`` is depends on
the variant:

* ``neurolora``   -- context gate output ``m_x``
* ``flylora``     -- no modulation (``m = 1``)
* ``static_gate`` -- one learnable vector shared by every token
* ``trainable_a`` -- no modulation, A is a dense trainable matrix

Selection is treated as locally constant in the backward pass: gradient
flows through the selected coordinates only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .gate import GateParams, GateTape, gate_backward, gate_forward, init_gate
from .numerics import BASE, INIT, DimensionError, Rng, gaussian_matrix
from .projection import SparseTernaryProjection, generate_projection, project

VARIANTS = ("neurolora", "flylora", "static_gate", "trainable_a")


@dataclass(frozen=True)
class AdapterConfig:
    d_in: int = 64
    d_out: int = 64
    r: int = 16
    k: int = 4
    alpha: float = 16.0
    rho: float = 0.25
    variant: str = "neurolora"
    d_h: int = 16

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if not 1 <= self.k <= self.r:
            raise ValueError(f"need 1 <= k <= r, got k={self.k}, r={self.r}")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not (0.0 < self.rho <= 1.0):
            raise ValueError(f"rho must lie in (0, 1], got {self.rho}")
        for name in ("d_in", "d_out", "r", "d_h"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    @property
    def scale(self) -> float:
        return self.alpha / self.r


def base_weight(seed: int, d_out: int, d_in: int) -> np.ndarray:
    """Frozen base map W0 with N(0, 1/d_in) entries."""
    return gaussian_matrix(Rng(seed, BASE), d_out, d_in, std=1.0 / np.sqrt(d_in))


@dataclass
class AdapterState:
    config: AdapterConfig
    projection: SparseTernaryProjection
    B: np.ndarray
    B_init: np.ndarray
    W0: np.ndarray
    base_seed: int
    gate: GateParams | None = None
    m_static: np.ndarray | None = None
    A_dense: np.ndarray | None = None
    init_seed: int | None = None

    def __post_init__(self):
        c = self.config
        if self.B.shape != (c.d_out, c.r) or self.B_init.shape != (c.d_out, c.r):
            raise DimensionError(f"B must have shape {(c.d_out, c.r)}, got {self.B.shape}")
        if self.W0.shape != (c.d_out, c.d_in):
            raise DimensionError(f"W0 must have shape {(c.d_out, c.d_in)}, got {self.W0.shape}")
        if (self.projection.r, self.projection.d_in) != (c.r, c.d_in):
            raise DimensionError("projection dims do not match config")
        if (c.variant == "neurolora") != (self.gate is not None):
            raise ValueError(f"variant {c.variant} and gate presence disagree")
        if (c.variant == "static_gate") != (self.m_static is not None):
            raise ValueError(f"variant {c.variant} and static gate presence disagree")
        if (c.variant == "trainable_a") != (self.A_dense is not None):
            raise ValueError(f"variant {c.variant} and dense A presence disagree")

    def trainable(self) -> dict[str, np.ndarray]:
        """Trainable arrays by name. Values are live references."""
        params = {"B": self.B}
        if self.gate is not None:
            params.update(self.gate.arrays())
        if self.m_static is not None:
            params["m"] = self.m_static
        if self.A_dense is not None:
            params["A"] = self.A_dense
        return params

    def a_matrix(self) -> np.ndarray:
        return self.A_dense if self.A_dense is not None else self.projection.dense()

    def copy(self) -> "AdapterState":
        return AdapterState(
            config=self.config,
            projection=self.projection,
            B=self.B.copy(),
            B_init=self.B_init.copy(),
            W0=self.W0.copy(),
            base_seed=self.base_seed,
            gate=None if self.gate is None else self.gate.copy(),
            m_static=None if self.m_static is None else self.m_static.copy(),
            A_dense=None if self.A_dense is None else self.A_dense.copy(),
            init_seed=self.init_seed,
        )


def init_adapter(
    config: AdapterConfig,
    seed: int,
    base_seed: int | None = None,
    projection_seed: int | None = None,
) -> AdapterState:
    """Fresh adapter; every random quantity is derived from ``seed``.

    B columns are N(0, I/d_out). The INIT stream is consumed as B first,
    then gate W1, so variants with the same seed share A and B exactly.
    """
    base_seed = seed if base_seed is None else base_seed
    projection_seed = seed if projection_seed is None else projection_seed
    c = config
    proj = generate_projection(projection_seed, c.rho, c.r, c.d_in)
    rng = Rng(seed, INIT)
    B = gaussian_matrix(rng, c.d_out, c.r, std=1.0 / np.sqrt(c.d_out))
    gate = init_gate(rng, c.d_in, c.d_h, c.r) if c.variant == "neurolora" else None
    return AdapterState(
        config=c,
        projection=proj,
        B=B,
        B_init=B.copy(),
        W0=base_weight(base_seed, c.d_out, c.d_in),
        base_seed=base_seed,
        gate=gate,
        m_static=np.full(c.r, 0.5) if c.variant == "static_gate" else None,
        A_dense=proj.dense() if c.variant == "trainable_a" else None,
        init_seed=seed,
    )


def select_topk(h_prime: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` largest ``|h'|`` in ascending order.

    Ties go to the lower index. A 2-D input is handled row by row.
    """
    h_prime = np.asarray(h_prime, dtype=np.float64)
    r = h_prime.shape[-1]
    if not 1 <= k <= r:
        raise ValueError(f"need 1 <= k <= {r}, got k={k}")
    order = np.argsort(-np.abs(h_prime), axis=-1, kind="stable")
    return np.sort(order[..., :k], axis=-1)


@dataclass
class ForwardTrace:
    """Per-token intermediates of one forward call (rows = tokens)."""

    x: np.ndarray
    h: np.ndarray
    m: np.ndarray | None
    h_prime: np.ndarray
    active: np.ndarray
    mask: np.ndarray
    gate_tape: GateTape | None = field(default=None, repr=False)
    batched: bool = True

    @property
    def n_tokens(self) -> int:
        return self.x.shape[0]


def adapter_forward(s: AdapterState, x: np.ndarray) -> tuple[np.ndarray, ForwardTrace]:
    c = s.config
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != c.d_in or x.ndim > 2:
        raise DimensionError(f"adapter expects last dim {c.d_in}, got shape {x.shape}")
    batched = x.ndim == 2
    X = x if batched else x[None, :]

    if s.A_dense is not None:
        h = X @ s.A_dense.T
    else:
        h = project(s.projection, X)

    tape = None
    if c.variant == "neurolora":
        m, tape = gate_forward(s.gate, X)
        h_prime = h * m
    elif c.variant == "static_gate":
        m = np.broadcast_to(s.m_static, h.shape)
        h_prime = h * m
    else:
        m = None
        h_prime = h

    active = select_topk(h_prime, c.k)
    mask = np.zeros(h.shape, dtype=bool)
    np.put_along_axis(mask, active, True, axis=1)
    routed = np.where(mask, h_prime, 0.0)
    y = X @ s.W0.T + c.scale * (routed @ s.B.T)
    trace = ForwardTrace(X, h, m, h_prime, active, mask, tape, batched)
    return (y if batched else y[0]), trace


def adapter_backward(s: AdapterState, trace: ForwardTrace, grad_y: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of ``<grad_y, y>``; parameter grads are summed over tokens."""
    c = s.config
    grad_y = np.asarray(grad_y, dtype=np.float64)
    G = grad_y if grad_y.ndim == 2 else grad_y[None, :]
    if G.shape != (trace.n_tokens, c.d_out):
        raise DimensionError(
            f"grad_y shape {grad_y.shape} does not match trace of {trace.n_tokens} tokens"
        )
    if trace.h.shape[1] != c.r:
        raise ValueError("trace does not belong to this adapter")

    routed = np.where(trace.mask, trace.h_prime, 0.0)
    grads: dict[str, np.ndarray] = {"B": c.scale * (G.T @ routed)}
    d_hp = np.where(trace.mask, c.scale * (G @ s.B), 0.0)

    if c.variant == "neurolora":
        d_h = d_hp * trace.m
        g = gate_backward(s.gate, trace.gate_tape, d_hp * trace.h)
        grads.update({name: g[name] for name in ("W1", "W2", "gamma", "beta")})
        gx_gate = g["x"]
    elif c.variant == "static_gate":
        d_h = d_hp * s.m_static
        grads["m"] = (d_hp * trace.h).sum(axis=0)
        gx_gate = 0.0
    else:
        d_h = d_hp
        gx_gate = 0.0

    if s.A_dense is not None:
        grads["A"] = d_h.T @ trace.x
        gx_adapter = d_h @ s.A_dense
    else:
        gx_adapter = d_h @ s.projection.csr()
    gx = G @ s.W0 + gx_adapter + gx_gate
    grads["x"] = gx if trace.batched else gx[0]
    return grads


def expert_utilization(traces, r: int) -> np.ndarray:
    """Fraction of tokens that activated each expert; entries sum to k."""
    if isinstance(traces, ForwardTrace):
        traces = [traces]
    traces = list(traces)
    if not traces:
        raise ValueError("expert_utilization needs at least one trace")
    counts = np.zeros(r)
    n = 0
    for t in traces:
        counts += np.bincount(t.active.ravel(), minlength=r)[:r]
        n += t.n_tokens
    if n == 0:
        raise ValueError("expert_utilization needs at least one token")
    return counts / n
