"""Experiment protocols: single task, merging, continual, ablation sweeps."""

from __future__ import annotations

import numpy as np

from .adapter import AdapterState, init_adapter
from .config import RunConfig, TaskConfig
from .continual import backward_transfer, run_sequence
from .losses import mean_offdiag_sq_cosine
from .merging import MergeRecipe, merge
from .tasks import TaskDataset, TaskSpec, dataset_from_spec, gen_task_family
from .train import eval_task, train_epochs

SWEEPS = {
    "gate": ("adapter", "variant", ["neurolora", "flylora", "static_gate", "trainable_a"]),
    "lambda": ("loss", "lambda_orth", [0.0, 0.01, 0.05, 0.1, 0.2]),
    "k": ("adapter", "k", [4, 8, 12, 16]),
    "dh": ("adapter", "d_h", None),  # half, default and double of the config value
}


def task_family(cfg: RunConfig) -> list[TaskDataset]:
    t: TaskConfig = cfg.task
    return gen_task_family(
        cfg.seed,
        t.num_tasks,
        d_in=cfg.adapter.d_in,
        d_out=cfg.adapter.d_out,
        clusters=t.clusters,
        n_train_per_cluster=t.n_train_per_cluster,
        n_eval_per_cluster=t.n_eval_per_cluster,
        noise=t.noise,
        delta_rank=t.delta_rank,
        delta_scale=t.delta_scale,
    )


def single_task(cfg: RunConfig) -> TaskDataset:
    t = cfg.task
    spec = TaskSpec(
        seed=cfg.seed,
        task_index=t.task_index,
        num_tasks=t.num_tasks,
        clusters=t.clusters,
        d_in=cfg.adapter.d_in,
        d_out=cfg.adapter.d_out,
        n_train_per_cluster=t.n_train_per_cluster,
        n_eval_per_cluster=t.n_eval_per_cluster,
        noise=t.noise,
        delta_rank=t.delta_rank,
        delta_scale=t.delta_scale,
    )
    return dataset_from_spec(spec)


def fresh_adapter(cfg: RunConfig) -> AdapterState:
    """Adapter whose A, B_init, W1 and W0 depend only on ``cfg.seed``."""
    return init_adapter(cfg.adapter, cfg.seed)


def shuffle_seed(cfg: RunConfig) -> int:
    # distinct order per task index so sibling runs do not share batches
    return cfg.seed * 1000 + cfg.task.task_index


def run_single(cfg: RunConfig, on_epoch=None) -> tuple[AdapterState, list[dict], TaskDataset]:
    task = single_task(cfg)
    state = fresh_adapter(cfg)
    state, metrics = train_epochs(
        state,
        task,
        cfg.loss.to_loss_config(),
        cfg.optimizer,
        cfg.training,
        seed=shuffle_seed(cfg),
        on_epoch=on_epoch,
    )
    return state, metrics, task


def merge_report(
    adapters: list[AdapterState],
    tasks: list[TaskDataset],
    individual_scores: list[float],
    recipe: MergeRecipe,
) -> tuple[AdapterState, dict]:
    """Merge and score on every source task.

    Relative degradation is ``(individual - merged) / individual`` in
    percent, per task and for the averages.
    """
    merged = merge(adapters, recipe)
    per_task = []
    for task, indiv in zip(tasks, individual_scores):
        score = eval_task(merged, task)["score"]
        per_task.append(
            {
                "task": task.name,
                "individual_score": indiv,
                "merged_score": score,
                "relative_degradation_pct": 100.0 * (indiv - score) / indiv,
            }
        )
    avg_indiv = float(np.mean(individual_scores))
    avg_merged = float(np.mean([p["merged_score"] for p in per_task]))
    report = {
        "method": recipe.method,
        "scaling": recipe.scaling,
        "trim_fraction": recipe.trim_fraction,
        "per_task": per_task,
        "average_individual": avg_indiv,
        "average_merged": avg_merged,
        "relative_degradation_pct": 100.0 * (avg_indiv - avg_merged) / avg_indiv,
    }
    return merged, report


def train_for_merge(cfg: RunConfig, num_tasks: int = 2) -> tuple[list[AdapterState], list[TaskDataset], list[float]]:
    """Independently train one adapter per task of a ``num_tasks`` family."""
    adapters, tasks, scores = [], [], []
    for t in range(num_tasks):
        sub = cfg.with_updates(task={"num_tasks": num_tasks, "task_index": t})
        state, metrics, task = run_single(sub)
        adapters.append(state)
        tasks.append(task)
        scores.append(metrics[-1]["eval_score"] if metrics else eval_task(state, task)["score"])
    return adapters, tasks, scores


def run_continual(cfg: RunConfig, on_epoch=None) -> tuple[dict, AdapterState]:
    tasks = task_family(cfg)
    state = fresh_adapter(cfg)
    projection_before = state.projection.content_hash()
    W0_before = state.W0.copy()
    state, acc, stages = run_sequence(
        state,
        tasks,
        cfg.loss.to_loss_config(),
        cfg.optimizer,
        cfg.training,
        seed=cfg.seed,
        on_epoch=on_epoch,
    )
    if state.projection.content_hash() != projection_before or not np.array_equal(state.W0, W0_before):
        raise RuntimeError("frozen parameters changed during sequential training")
    bwt = backward_transfer(acc) if acc.T >= 2 else None
    final = acc.R[-1]
    return {
        "variant": cfg.adapter.variant,
        "lambda_orth": cfg.loss.lambda_orth,
        "tasks": [t.name for t in tasks],
        "accuracy_matrix": acc.to_json(),
        "bwt": bwt,
        "final_average": float(np.mean(final)),
        "metric": "score = 1 / (1 + eval MSE)",
        "stages": stages,
    }, state


def sweep_cells(cfg: RunConfig, sweep: str) -> list:
    if sweep not in SWEEPS:
        raise ValueError(f"unknown sweep {sweep!r}; expected one of {sorted(SWEEPS)}")
    section, key, values = SWEEPS[sweep]
    if values is None:
        d_h = cfg.adapter.d_h
        values = sorted({max(1, d_h // 2), d_h, 2 * d_h})
    return values


def run_ablation(cfg: RunConfig, sweep: str, n_seeds: int = 3) -> dict:
    """Final eval loss/score per cell, averaged over ``n_seeds`` consecutive seeds."""
    section, key, _ = SWEEPS.get(sweep, (None, None, None))
    cells = sweep_cells(cfg, sweep)
    seeds = [cfg.seed + i for i in range(n_seeds)]
    rows = []
    for value in cells:
        losses, scores, overlaps = [], [], []
        for seed in seeds:
            sub = cfg.with_updates(**{section: {key: value}}, seed=seed)
            state, metrics, _ = run_single(sub)
            losses.append(metrics[-1]["eval_loss"])
            scores.append(metrics[-1]["eval_score"])
            overlaps.append(mean_offdiag_sq_cosine(state.B))
        rows.append(
            {
                "cell": value,
                "eval_loss_mean": float(np.mean(losses)),
                "eval_score_mean": float(np.mean(scores)),
                "offdiag_sq_cosine_mean": float(np.mean(overlaps)),
                "eval_loss_per_seed": losses,
            }
        )
    return {"sweep": sweep, "parameter": f"{section}.{key}", "seeds": seeds, "rows": rows}


def format_table(report: dict) -> str:
    header = f"{'cell':>12}  {'eval_loss':>10}  {'eval_score':>10}  {'cos2_offdiag':>12}"
    lines = [f"sweep: {report['sweep']} ({report['parameter']}), seeds {report['seeds']}", header]
    for row in report["rows"]:
        lines.append(
            f"{str(row['cell']):>12}  {row['eval_loss_mean']:>10.5f}  "
            f"{row['eval_score_mean']:>10.5f}  {row['offdiag_sq_cosine_mean']:>12.5f}"
        )
    return "\n".join(lines) + "\n"
