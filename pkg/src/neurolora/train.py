"""Mini-batch training with gradient accumulation, plus evaluation."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .adapter import AdapterState, adapter_backward, adapter_forward
from .losses import LossConfig, batch_task_loss, masks_orthogonality_loss, total_loss
from .numerics import SHUFFLE, Rng
from .optim import AdamState, OptimizerConfig, adamw_step, lr_at
from .tasks import TaskDataset


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 3
    batch_size: int = 16
    grad_accum: int = 4

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.grad_accum < 1:
            raise ValueError("epochs >= 0, batch_size >= 1 and grad_accum >= 1 required")

    @property
    def effective_batch(self) -> int:
        return self.batch_size * self.grad_accum


def steps_per_epoch(n_train: int, cfg: TrainConfig) -> int:
    return math.ceil(n_train / cfg.effective_batch)


def score_from_mse(mse: float) -> float:
    """Accuracy-like score in (0, 1]; higher is better."""
    return 1.0 / (1.0 + mse)


def evaluate(state: AdapterState, x: np.ndarray, target, kind: str = "mse") -> dict:
    """Mean task loss and score on a split.

    The score is ``1 / (1 + MSE)`` for regression and plain accuracy for
    classification.
    """
    y, _ = adapter_forward(state, x)
    losses, _ = batch_task_loss(y, target, kind)
    loss = float(np.mean(losses))
    if kind == "mse":
        return {"loss": loss, "score": score_from_mse(loss)}
    acc = float(np.mean(np.argmax(y, axis=1) == np.asarray(target)))
    return {"loss": loss, "score": acc}


def eval_task(state: AdapterState, task: TaskDataset, kind: str = "mse") -> dict:
    target = task.labels_eval if kind == "cross_entropy" else task.y_eval
    return evaluate(state, task.x_eval, target, kind)


def _targets(task: TaskDataset, kind: str):
    return task.labels_train if kind == "cross_entropy" else task.y_train


def batch_objective(state: AdapterState, x: np.ndarray, target, loss_cfg: LossConfig) -> dict:
    """Summed objective of a micro-batch and its parameter gradients.

    ``value = sum_t task_t + lam * n * orth`` where ``orth`` is the token
    mean of the orthogonality penalty, so dividing by the token count gives
    the per-token total loss.
    """
    y, trace = adapter_forward(state, x)
    losses, dy = batch_task_loss(y, target, loss_cfg.task_loss_kind)
    grads = adapter_backward(state, trace, dy)
    orth, g_orth = masks_orthogonality_loss(state.B, trace.mask)
    n = trace.n_tokens
    grads["B"] = grads["B"] + loss_cfg.lam * n * g_orth
    task_sum = float(np.sum(losses))
    return {
        "value": task_sum + loss_cfg.lam * n * orth,
        "task_sum": task_sum,
        "orth": orth,
        "grads": grads,
        "mask": trace.mask,
    }


def train_epochs(
    state: AdapterState,
    data: TaskDataset,
    loss_cfg: LossConfig,
    opt_cfg: OptimizerConfig,
    train_cfg: TrainConfig,
    rng: Rng | None = None,
    seed: int = 0,
    on_epoch=None,
) -> tuple[AdapterState, list[dict]]:
    """Train ``state`` in place and return it with one metrics record per epoch.

    Each effective batch sums per-token gradients over its micro-batches,
    divides by the number of tokens, and takes one AdamW step. If
    ``opt_cfg.total_steps`` is 0 it is set from the dataset size.
    """
    n = data.n_train
    if n == 0:
        raise ValueError("empty training set")
    if rng is None:
        rng = Rng(seed, SHUFFLE)
    kind = loss_cfg.task_loss_kind
    targets = np.asarray(_targets(data, kind))
    per_epoch = steps_per_epoch(n, train_cfg)
    if opt_cfg.total_steps == 0:
        opt_cfg = replace(opt_cfg, total_steps=per_epoch * train_cfg.epochs)
    params = state.trainable()
    adam = AdamState()
    metrics: list[dict] = []

    for epoch in range(train_cfg.epochs):
        order = rng.permutation(n)
        sums = {"task": 0.0, "orth": 0.0}
        masks_seen = []
        lr_used = {}
        for start in range(0, n, train_cfg.effective_batch):
            window = order[start : start + train_cfg.effective_batch]
            grads = {name: np.zeros_like(p) for name, p in params.items()}
            for mb in range(0, len(window), train_cfg.batch_size):
                idx = window[mb : mb + train_cfg.batch_size]
                out = batch_objective(state, data.x_train[idx], targets[idx], loss_cfg)
                for name in grads:
                    grads[name] += out["grads"][name]
                sums["task"] += out["task_sum"]
                sums["orth"] += out["orth"] * len(idx)
                masks_seen.append(out["mask"])
            for name in grads:
                grads[name] /= len(window)
            lr_used = {name: lr_at(adam.t, opt_cfg, opt_cfg.base_lr(name)) for name in params}
            adamw_step(params, grads, adam, opt_cfg, lr_used)

        task_mean = sums["task"] / n
        orth_mean = sums["orth"] / n
        util = np.concatenate(masks_seen).mean(axis=0)
        record = {
            "epoch": epoch + 1,
            "task_loss": task_mean,
            "orth_loss": orth_mean,
            "total_loss": total_loss(task_mean, orth_mean, loss_cfg.lam),
            "lr": lr_used.get("B", 0.0),
            "step": adam.t,
            "utilization": util.tolist(),
        }
        if data.x_eval.shape[0]:
            ev = eval_task(state, data, kind)
            record["eval_loss"] = ev["loss"]
            record["eval_score"] = ev["score"]
        metrics.append(record)
        if on_epoch is not None:
            on_epoch(record)
    return state, metrics

