"""Sequential multi-task training and Backward Transfer."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .adapter import AdapterState
from .losses import LossConfig
from .numerics import SHUFFLE, Rng
from .optim import OptimizerConfig
from .train import TrainConfig, eval_task, train_epochs


class IncompleteMatrixError(ValueError):
    """A required entry of the accuracy matrix is missing."""


@dataclass
class AccuracyMatrix:
    """``R[j, i]``: score on task ``i`` after training through task ``j``.

    Only ``j >= i`` is populated; other entries are NaN.
    """

    R: np.ndarray

    @classmethod
    def empty(cls, T: int) -> "AccuracyMatrix":
        return cls(np.full((T, T), np.nan))

    @property
    def T(self) -> int:
        return self.R.shape[0]

    def to_json(self) -> list[list[float | None]]:
        return [[None if np.isnan(v) else float(v) for v in row] for row in self.R]


def backward_transfer(m: AccuracyMatrix) -> float:
    """``mean_{i < T} (R[T, i] - R[i, i])`` in 1-indexed terms; negative means forgetting."""
    R = np.asarray(m.R, dtype=np.float64)
    T = R.shape[0]
    if T < 2:
        raise ValueError(f"backward transfer needs at least 2 tasks, got {T}")
    needed = [(T - 1, i) for i in range(T - 1)] + [(i, i) for i in range(T - 1)]
    missing = [idx for idx in needed if not np.isfinite(R[idx])]
    if missing:
        raise IncompleteMatrixError(f"accuracy matrix is missing entries {missing}")
    return sum(R[T - 1, i] - R[i, i] for i in range(T - 1)) / (T - 1)


def run_sequence(
    state: AdapterState,
    tasks,
    loss_cfg: LossConfig,
    opt_cfg: OptimizerConfig,
    train_cfg: TrainConfig,
    seed: int = 0,
    on_epoch=None,
) -> tuple[AdapterState, AccuracyMatrix, list[list[dict]]]:
    """Train on each task in turn, evaluating every seen task after each stage.

    Every stage starts a fresh optimizer state and learning-rate schedule;
    one shuffle stream runs through the whole sequence.
    """
    tasks = list(tasks)
    if not tasks:
        raise ValueError("run_sequence needs at least one task")
    rng = Rng(seed, SHUFFLE)
    acc = AccuracyMatrix.empty(len(tasks))
    stage_metrics = []
    kind = loss_cfg.task_loss_kind
    for j, task in enumerate(tasks):
        callback = None if on_epoch is None else (lambda rec, j=j: on_epoch(j, rec))
        state, metrics = train_epochs(
            state, task, loss_cfg, opt_cfg, train_cfg, rng=rng, on_epoch=callback
        )
        stage_metrics.append(metrics)
        for i in range(j + 1):
            acc.R[j, i] = eval_task(state, tasks[i], kind)["score"]
    return state, acc, stage_metrics
