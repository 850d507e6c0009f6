"""Command-line entry point.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import checkpoint as ckpt
from .config import ConfigError, RunConfig, config_from_dict, load_config, resolve_seed
from .experiments import SWEEPS, format_table, merge_report, run_ablation, run_continual, run_single
from .merging import IncompatibleAdaptersError, MergeRecipe, check_compatible
from .tasks import TaskSpec, dataset_from_spec
from .train import eval_task


class UsageError(Exception):
    pass


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


def _jsonl(records) -> str:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in records)


def _resolve(args) -> RunConfig:
    if args.config:
        cfg = load_config(args.config, seed=args.seed)
    else:
        cfg = config_from_dict({}, seed=args.seed)
    updates = {}
    if getattr(args, "variant", None):
        updates["adapter"] = {"variant": args.variant}
    if args.out_dir:
        updates["out_dir"] = args.out_dir
    if updates:
        try:
            cfg = cfg.with_updates(**updates)
        except (ConfigError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
    return cfg


def _out_dir(cfg: RunConfig) -> Path:
    path = Path(cfg.out_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _log(args, msg: str) -> None:
    if not args.quiet:
        print(msg, file=sys.stderr)


def cmd_train(args) -> int:
    cfg = _resolve(args)
    out = _out_dir(cfg)

    def on_epoch(rec):
        _log(args, f"epoch {rec['epoch']}: task_loss={rec['task_loss']:.5f} "
                   f"orth={rec['orth_loss']:.5f} eval_score={rec.get('eval_score', float('nan')):.5f}")

    state, metrics, task = run_single(cfg, on_epoch=on_epoch)
    final = metrics[-1] if metrics else eval_task(state, task)
    provenance = {
        "command": "train",
        "run_config": cfg.to_dict(),
        "config_hash": cfg.hash(),
        "task": task.spec.to_dict(),
        "final_metrics": {
            "eval_score": final.get("eval_score", final.get("score")),
            "eval_loss": final.get("eval_loss", final.get("loss")),
        },
    }
    ckpt.save_checkpoint(out / "checkpoint.json", state, provenance)
    (out / "metrics.jsonl").write_text(_jsonl(metrics), encoding="utf-8")
    (out / "config.json").write_text(_dump(cfg.to_dict()), encoding="utf-8")
    _log(args, f"wrote {out / 'checkpoint.json'} and {out / 'metrics.jsonl'}")
    return 0


def _task_of(provenance: dict):
    try:
        return dataset_from_spec(TaskSpec(**provenance["task"]))
    except (KeyError, TypeError) as exc:
        raise UsageError("checkpoint has no task provenance; cannot evaluate it") from exc


def cmd_merge(args) -> int:
    if len(args.checkpoints) < 2:
        raise UsageError("merge needs at least two checkpoints")
    loaded = [ckpt.load_checkpoint(p) for p in args.checkpoints]
    states = [s for s, _ in loaded]
    check_compatible(states)
    tasks = [_task_of(p) for _, p in loaded]
    indiv = []
    for (state, prov), task in zip(loaded, tasks):
        stored = prov.get("final_metrics", {}).get("eval_score")
        indiv.append(stored if stored is not None else eval_task(state, task)["score"])
    try:
        recipe = MergeRecipe(args.method, args.scaling, args.trim)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    merged, report = merge_report(states, tasks, indiv, recipe)
    report["sources"] = [str(p) for p in args.checkpoints]
    out = Path(args.out_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    provenance = {
        "command": "merge",
        "merge": {"method": recipe.method, "scaling": recipe.scaling, "trim_fraction": recipe.trim_fraction},
        "sources": report["sources"],
        "tasks": [t.spec.to_dict() for t in tasks],
    }
    ckpt.save_checkpoint(out / "merged.json", merged, provenance)
    (out / "merge_report.json").write_text(_dump(report), encoding="utf-8")
    if not args.quiet:
        print(_dump(report), end="")
    return 0


def cmd_continual(args) -> int:
    cfg = _resolve(args)
    if cfg.task.num_tasks < 2:
        cfg = cfg.with_updates(task={"num_tasks": 3})
    out = _out_dir(cfg)

    def on_epoch(stage, rec):
        _log(args, f"task {stage} epoch {rec['epoch']}: task_loss={rec['task_loss']:.5f}")

    report, state = run_continual(cfg, on_epoch=on_epoch)
    report["run_config"] = cfg.to_dict()
    (out / "continual_report.json").write_text(_dump(report), encoding="utf-8")
    ckpt.save_checkpoint(out / "checkpoint.json", state, {"command": "continual", "run_config": cfg.to_dict()})
    _log(args, f"BWT = {report['bwt']}")
    return 0


def cmd_ablate(args) -> int:
    if args.sweep not in SWEEPS:
        raise UsageError(f"unknown sweep {args.sweep!r}; expected one of {sorted(SWEEPS)}")
    cfg = _resolve(args)
    try:
        report = run_ablation(cfg, args.sweep, n_seeds=args.seeds)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    report["run_config"] = cfg.to_dict()
    out = _out_dir(cfg)
    table = format_table(report)
    (out / f"ablate_{args.sweep}.json").write_text(_dump(report), encoding="utf-8")
    (out / f"ablate_{args.sweep}.txt").write_text(table, encoding="utf-8")
    if not args.quiet:
        print(table, end="")
    return 0


def cmd_eval(args) -> int:
    state, prov = ckpt.load_checkpoint(args.checkpoint)
    if args.config:
        cfg = load_config(args.config, seed=args.seed)
        from .experiments import single_task

        task = single_task(cfg)
        tasks = [task]
    elif "tasks" in prov:
        tasks = [dataset_from_spec(TaskSpec(**t)) for t in prov["tasks"]]
    else:
        tasks = [_task_of(prov)]
    results = [{"task": t.name, **eval_task(state, t)} for t in tasks]
    print(_dump({"checkpoint": str(args.checkpoint), "results": results}), end="")
    return 0


def cmd_inspect(args) -> int:
    state, prov = ckpt.load_checkpoint(args.checkpoint)
    c = state.config
    summary = {
        "config": {
            "d_in": c.d_in, "d_out": c.d_out, "r": c.r, "k": c.k,
            "alpha": c.alpha, "rho": c.rho, "variant": c.variant, "d_h": c.d_h,
        },
        "projection": {**state.projection.params, "nnz": state.projection.nnz},
        "trainable": {name: list(a.shape) for name, a in state.trainable().items()},
        "delta_B_norm": float(((state.B - state.B_init) ** 2).sum() ** 0.5),
        "provenance": {k: v for k, v in prov.items() if k != "run_config"},
    }
    print(_dump(summary), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="run seed (fallback: $NEUROMOD_SEED, then 7)")
    common.add_argument("--out-dir", default=None, help="directory for output files")
    common.add_argument("--quiet", action="store_true", help="suppress progress output")

    parser = argparse.ArgumentParser(prog="neurolora", description="Neuromodulated sparse-routing LoRA experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[common], help="train one adapter on one synthetic task")
    p.add_argument("--config", help="JSON run config (defaults if omitted)")
    p.add_argument("--variant", choices=["neurolora", "flylora", "static_gate", "trainable_a"])
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("merge", parents=[common], help="merge trained checkpoints without training")
    p.add_argument("checkpoints", nargs="+")
    p.add_argument("--method", choices=["task_arithmetic", "ties"], default="task_arithmetic")
    p.add_argument("--scaling", type=float, default=None, help="task-vector scaling (default 1/T, TIES 1)")
    p.add_argument("--trim", type=float, default=0.2, help="TIES keep fraction")
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("continual", parents=[common], help="sequential training with backward transfer")
    p.add_argument("--config")
    p.add_argument("--variant", choices=["neurolora", "flylora", "static_gate", "trainable_a"])
    p.set_defaults(func=cmd_continual)

    p = sub.add_parser("ablate", parents=[common], help="hyperparameter / variant sweep")
    p.add_argument("--config")
    p.add_argument("--sweep", required=True)
    p.add_argument("--seeds", type=int, default=3, help="seed replicates per cell")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint on its task(s)")
    p.add_argument("checkpoint")
    p.add_argument("--config", help="evaluate on the task described by this config instead")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("inspect", parents=[common], help="print a checkpoint summary")
    p.add_argument("checkpoint")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        return args.func(args)
    except (ConfigError, UsageError, IncompatibleAdaptersError, ckpt.CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - mapped to the runtime-failure exit code
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
