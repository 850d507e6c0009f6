"""Task losses and the active/inactive orthogonality penalty on B."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import DimensionError

TASK_LOSS_KINDS = ("mse", "cross_entropy")


class SingularColumnError(ArithmeticError):
    """A column of B has zero norm, so its cosine is undefined."""


@dataclass(frozen=True)
class LossConfig:
    lam: float = 0.1
    task_loss_kind: str = "mse"

    def __post_init__(self):
        if not np.isfinite(self.lam) or self.lam < 0:
            raise ValueError(f"orthogonality weight must be finite and >= 0, got {self.lam}")
        if self.task_loss_kind not in TASK_LOSS_KINDS:
            raise ValueError(f"unknown task loss {self.task_loss_kind!r}")


def _unit_columns(B: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(B, axis=0)
    if np.any(norms == 0.0):
        bad = np.flatnonzero(norms == 0.0).tolist()
        raise SingularColumnError(f"B has zero-norm columns {bad}")
    return B / norms, norms


def cosine_matrix(B: np.ndarray) -> np.ndarray:
    """Pairwise column cosines of B."""
    U, _ = _unit_columns(np.asarray(B, dtype=np.float64))
    return U.T @ U


def _pair_weights(masks: np.ndarray) -> np.ndarray:
    """Weight of each (active i, inactive j) pair, averaged over tokens.

    Token t contributes ``1 / (|active_t| |inactive_t|)`` to each of its
    pairs; tokens with no inactive expert contribute nothing.
    """
    a = masks.astype(np.float64)
    n_act = a.sum(axis=1)
    n_inact = a.shape[1] - n_act
    denom = n_act * n_inact
    w = np.divide(1.0, denom, out=np.zeros_like(denom), where=denom > 0)
    return (a * w[:, None]).T @ (1.0 - a) / a.shape[0]


def _weighted_sq_cosine(B: np.ndarray, W: np.ndarray) -> tuple[float, np.ndarray]:
    """``sum_ij W_ij cos^2(B_i, B_j)`` and its gradient w.r.t. B."""
    U, norms = _unit_columns(B)
    C = U.T @ U
    value = float(np.sum(W * C * C))
    D = 2.0 * W * C  # d value / d C
    grad_U = U @ (D + D.T)
    # back through column normalisation: (g - u (u.g)) / |b|
    grad_B = (grad_U - U * np.sum(U * grad_U, axis=0)) / norms
    return value, grad_B


def orthogonality_loss(B: np.ndarray, active) -> tuple[float, np.ndarray]:
    """Mean squared cosine between active and inactive columns of B."""
    B = np.asarray(B, dtype=np.float64)
    if B.ndim != 2:
        raise DimensionError(f"B must be 2-D, got shape {B.shape}")
    r = B.shape[1]
    mask = np.zeros((1, r), dtype=bool)
    idx = np.asarray(list(active), dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= r):
        raise ValueError(f"active indices out of range for r={r}")
    mask[0, idx] = True
    return _weighted_sq_cosine(B, _pair_weights(mask))


def batch_orthogonality_loss(B: np.ndarray, traces) -> tuple[float, np.ndarray]:
    """Token-mean of :func:`orthogonality_loss` over every token in ``traces``."""
    if not isinstance(traces, (list, tuple)):
        traces = [traces]
    if not traces:
        raise ValueError("batch_orthogonality_loss needs at least one trace")
    masks = np.concatenate([t.mask for t in traces], axis=0)
    return masks_orthogonality_loss(B, masks)


def masks_orthogonality_loss(B: np.ndarray, masks: np.ndarray) -> tuple[float, np.ndarray]:
    masks = np.asarray(masks, dtype=bool)
    if masks.ndim != 2 or masks.shape[0] == 0:
        raise ValueError("need a non-empty (tokens, r) mask array")
    return _weighted_sq_cosine(np.asarray(B, dtype=np.float64), _pair_weights(masks))


def mean_offdiag_sq_cosine(B: np.ndarray) -> float:
    """Mean of cos^2 over all unordered column pairs of B."""
    C = cosine_matrix(B)
    iu = np.triu_indices(C.shape[0], k=1)
    return float(np.mean(C[iu] ** 2))


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def task_loss(pred: np.ndarray, target, kind: str = "mse") -> tuple[float, np.ndarray]:
    """Loss of one prediction vector and its gradient.

    ``mse`` averages over output coordinates. ``cross_entropy`` treats
    ``pred`` as logits and ``target`` as an integer class.
    """
    pred = np.asarray(pred, dtype=np.float64)
    if kind == "mse":
        target = np.asarray(target, dtype=np.float64)
        if target.shape != pred.shape:
            raise DimensionError(f"pred {pred.shape} vs target {target.shape}")
        diff = pred - target
        n = diff.size
        return float(np.dot(diff.ravel(), diff.ravel()) / n), 2.0 * diff / n
    if kind == "cross_entropy":
        c = int(target)
        if not 0 <= c < pred.shape[-1]:
            raise ValueError(f"class index {c} out of range for {pred.shape[-1]} classes")
        logp = _log_softmax(pred)
        grad = np.exp(logp)
        grad[c] -= 1.0
        return float(-logp[c]), grad
    raise ValueError(f"unknown task loss {kind!r}")


def batch_task_loss(pred: np.ndarray, target, kind: str = "mse") -> tuple[np.ndarray, np.ndarray]:
    """Per-token losses and per-token gradients for a batch."""
    pred = np.asarray(pred, dtype=np.float64)
    if kind == "mse":
        target = np.asarray(target, dtype=np.float64)
        if target.shape != pred.shape:
            raise DimensionError(f"pred {pred.shape} vs target {target.shape}")
        diff = pred - target
        n = pred.shape[1]
        return np.sum(diff * diff, axis=1) / n, 2.0 * diff / n
    if kind == "cross_entropy":
        labels = np.asarray(target, dtype=np.int64)
        if labels.min() < 0 or labels.max() >= pred.shape[1]:
            raise ValueError("class index out of range")
        logp = _log_softmax(pred)
        rows = np.arange(pred.shape[0])
        grad = np.exp(logp)
        grad[rows, labels] -= 1.0
        return -logp[rows, labels], grad
    raise ValueError(f"unknown task loss {kind!r}")


def total_loss(task: float, orth: float, lam: float) -> float:
    return task + lam * orth
