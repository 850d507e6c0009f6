"""The twelve acceptance criteria, each at its stated tolerance.

Every test records a PASS/FAIL line (printed in the pytest summary) before
asserting. Run alone with ``pytest tests/test_acceptance.py`` or
``python3 tests/test_acceptance.py``.
"""

import json
import sys
import time

import numpy as np
import pytest

from acceptance_log import record
from fdcheck import adapter_gradcheck, random_state
from merge_oracles import oracle_task_arithmetic, oracle_ties
from neurolora import checkpoint as ckpt
from neurolora import cli
from neurolora.adapter import VARIANTS, AdapterConfig, adapter_forward, init_adapter
from neurolora.config import RunConfig
from neurolora.continual import AccuracyMatrix, backward_transfer
from neurolora.experiments import merge_report, run_continual, run_single, train_for_merge
from neurolora.losses import mean_offdiag_sq_cosine, orthogonality_loss
from neurolora.merging import MergeRecipe, ties_delta, task_arithmetic_delta
from neurolora.numerics import INIT, Rng, gaussian_matrix
from neurolora.projection import generate_projection

SEEDS = range(5)


def _cfg(seed, variant="neurolora", lam=0.1, num_tasks=1):
    return RunConfig(seed=seed).with_updates(
        adapter={"variant": variant}, loss={"lambda_orth": lam}, task={"num_tasks": num_tasks}
    )


def test_c01_gradient_correctness():
    t0 = time.perf_counter()
    worst, worst_name, skipped, total = 0.0, "", 0, 0
    for trial in range(20):
        variant = VARIANTS[trial % len(VARIANTS)]
        rng = np.random.default_rng(trial)
        s = random_state(rng, variant, d_in=12, d_out=9, r=8, k=3, d_h=5, seed=trial)
        X = rng.normal(size=(4, 12))
        target = rng.normal(size=(4, 9))
        errors, sk, tot = adapter_gradcheck(s, X, target, lam=0.1)
        skipped += sk
        total += tot
        name = max(errors, key=errors.get)
        if errors[name] > worst:
            worst, worst_name = errors[name], f"{variant}/{name}"
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-4 and elapsed < 30 and skipped < 0.05 * total
    record(1, ok, f"max rel err {worst:.2e} ({worst_name}) over 20 configs, "
                  f"{skipped}/{total} selection-flipping probes skipped, {elapsed:.1f}s")
    assert ok


def test_c02_init_routing_equivalence():
    cfg = AdapterConfig()
    neuro = init_adapter(cfg, 0)
    fly = init_adapter(AdapterConfig(variant="flylora"), 0)
    assert neuro.projection == fly.projection and np.array_equal(neuro.B, fly.B)
    X = np.random.default_rng(0).normal(size=(1000, cfg.d_in))
    same = np.all(adapter_forward(neuro, X)[1].active == adapter_forward(fly, X)[1].active, axis=1)
    ok = bool(same.all())
    record(2, ok, f"identical active sets on {int(same.sum())}/1000 inputs")
    assert ok


def test_c03_projection_statistics():
    a = generate_projection(0, 0.25, 32, 4096)
    nz = a.nnz / (32 * 4096)
    pos = float(np.mean(a.signs == 1))
    ok = abs(nz - 0.25) <= 0.01 and abs(pos - 0.5) <= 0.02
    record(3, ok, f"nonzero fraction {nz:.4f}, positive fraction {pos:.4f}")
    assert ok


def test_c04_init_cosine_statistic():
    B = gaussian_matrix(Rng(0, INIT), 1024, 150, std=1 / 32)
    U = B / np.linalg.norm(B, axis=0)
    C2 = (U.T @ U)[np.triu_indices(150, k=1)] ** 2  # 11175 pairs
    pair_mean = float(C2.mean())
    rng, pick = Rng(1, INIT), np.random.default_rng(1)
    values = [
        orthogonality_loss(gaussian_matrix(rng, 4096, 32, std=1 / 64), sorted(pick.choice(32, 8, replace=False)))[0]
        for _ in range(20)
    ]
    orth_mean = float(np.mean(values))
    ok = abs(pair_mean * 1024 - 1) <= 0.2 and abs(orth_mean / 2.44e-4 - 1) <= 0.2
    record(4, ok, f"d_out=1024 mean cos^2 {pair_mean:.3e} over {C2.size} pairs (1/1024={1/1024:.3e}); "
                  f"d_out=4096 mean L_orth {orth_mean:.3e} (target 2.44e-4)")
    assert ok


def test_c05_orthogonality_sanity():
    B = np.linalg.qr(np.random.default_rng(0).normal(size=(8, 5)))[0] * np.array([1, 2, 3, 0.5, 7])
    zero = orthogonality_loss(B, [0, 2])[0]
    one = orthogonality_loss(np.tile(np.arange(1.0, 9.0)[:, None], (1, 5)), [1, 3])[0]
    R = np.random.default_rng(1).normal(size=(8, 5))
    base = orthogonality_loss(R, [0, 1])[0]
    scaled = orthogonality_loss(R * np.array([3.0, -0.1, 8.0, 2.5, -4.0]), [0, 1])[0]
    ok = abs(zero) <= 1e-12 and abs(one - 1) <= 1e-12 and abs(scaled - base) <= 1e-12
    record(5, ok, f"orthogonal {zero:.1e}, identical {one!r}, rescaling change {abs(scaled - base):.1e}")
    assert ok


@pytest.mark.slow
def test_c06_gate_benefit():
    t0 = time.perf_counter()
    loss = {v: [] for v in ("neurolora", "flylora", "static_gate")}
    for seed in SEEDS:
        for v in loss:
            loss[v].append(run_single(_cfg(seed, v))[1][-1]["eval_loss"])
    n, f, s = (np.array(loss[v]) for v in ("neurolora", "flylora", "static_gate"))
    between = int(np.sum((np.minimum(n, f) <= s) & (s <= np.maximum(n, f))))
    elapsed = time.perf_counter() - t0
    ok = n.mean() <= f.mean() and between >= 3 and elapsed < 600
    record(6, ok, f"mean eval loss neurolora {n.mean():.4f} vs flylora {f.mean():.4f}; "
                  f"static_gate between in {between}/5 seeds; {elapsed:.0f}s")
    assert ok


@pytest.mark.slow
def test_c07_orthogonality_effect():
    wins, pairs = 0, []
    for seed in SEEDS:
        with_orth = mean_offdiag_sq_cosine(run_single(_cfg(seed, lam=0.1))[0].B)
        without = mean_offdiag_sq_cosine(run_single(_cfg(seed, lam=0.0))[0].B)
        wins += with_orth < without
        pairs.append(f"{with_orth:.4f}/{without:.4f}")
    ok = wins >= 4
    record(7, ok, f"lambda=0.1 lower off-pair cos^2 in {wins}/5 seeds ({', '.join(pairs)})")
    assert ok


def test_c08_merge_oracles():
    ok = ties_delta([np.array([[3.0]]), np.array([[-1.0]])], 1.0).tolist() == [[3.0]]
    for trial in range(20):
        rng = np.random.default_rng(trial)
        deltas = [rng.normal(size=(3, 3)) for _ in range(3)]
        for scaling in (None, 1.0, 0.5):
            ok &= np.array_equal(task_arithmetic_delta(deltas, scaling), oracle_task_arithmetic(deltas, scaling))
        for trim in (1.0, 0.5, 0.2):
            ok &= np.array_equal(ties_delta(deltas, trim), oracle_ties(deltas, trim))
    ok = bool(ok)
    record(8, ok, "TIES and task arithmetic equal the step-by-step oracles bit for bit on 20 fixtures; (+3, -1) -> 3")
    assert ok


@pytest.mark.slow
def test_c09_merge_direction():
    rows, wins = [], 0
    for seed in SEEDS:
        deg = {}
        for lam in (0.0, 0.1):
            adapters, tasks, scores = train_for_merge(_cfg(seed, lam=lam), num_tasks=2)
            for method in ("task_arithmetic", "ties"):
                deg[lam, method] = merge_report(adapters, tasks, scores, MergeRecipe(method))[1]["relative_degradation_pct"]
        both = all(deg[0.1, m] <= deg[0.0, m] for m in ("task_arithmetic", "ties"))
        wins += both
        rows.append(f"s{seed} TA {deg[0.1, 'task_arithmetic']:.1f}/{deg[0.0, 'task_arithmetic']:.1f}% "
                    f"TIES {deg[0.1, 'ties']:.1f}/{deg[0.0, 'ties']:.1f}%")
    ok = wins >= 3
    record(9, ok, f"lambda=0.1 degrades no more than lambda=0 under both methods in {wins}/5 seeds "
                  f"[{'; '.join(rows)}]")
    assert ok


def test_c10_bwt():
    rng = np.random.default_rng(0)
    ok = True
    for T in (2, 3, 5, 8):
        R = np.tril(rng.random((T, T)))
        closed = sum(R[T - 1, i] - R[i, i] for i in range(T - 1)) / (T - 1)
        ok &= abs(backward_transfer(AccuracyMatrix(R)) - closed) <= 1e-12
    flat = np.tril(np.tile(rng.random((1, 4)), (4, 1)))
    zero = float(backward_transfer(AccuracyMatrix(flat)))
    hand = AccuracyMatrix(np.array([[60.0, np.nan, np.nan], [58.0, 72.0, np.nan], [50.0, 70.0, 90.0]]))
    six = float(backward_transfer(hand))
    ok = bool(ok and zero == 0.0 and six == -6.0)
    record(10, ok, f"closed form within 1e-12; no forgetting -> {zero!r}; hand example -> {six!r}")
    assert ok


@pytest.mark.slow
def test_c11_continual_direction():
    t0 = time.perf_counter()
    wins, pairs = 0, []
    for seed in SEEDS:
        neuro = run_continual(_cfg(seed, "neurolora", lam=0.1, num_tasks=3))[0]["bwt"]
        fly = run_continual(_cfg(seed, "flylora", lam=0.0, num_tasks=3))[0]["bwt"]
        wins += neuro >= fly
        pairs.append(f"{neuro:.3f}/{fly:.3f}")
    elapsed = time.perf_counter() - t0
    ok = wins >= 3 and elapsed < 900
    record(11, ok, f"NeuroLoRA-Seq BWT >= FlyLoRA-Seq BWT in {wins}/5 seeds ({', '.join(pairs)}); {elapsed:.0f}s")
    assert ok


def test_c12_determinism_and_persistence(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": 3, "out_dir": str(tmp_path / "run")}))
    assert cli.main(["train", "--config", str(cfg), "--quiet"]) == 0
    first = (tmp_path / "run" / "metrics.jsonl").read_bytes()
    ck_first = (tmp_path / "run" / "checkpoint.json").read_bytes()
    assert cli.main(["train", "--config", str(cfg), "--quiet"]) == 0
    same_metrics = (tmp_path / "run" / "metrics.jsonl").read_bytes() == first
    same_ckpt = (tmp_path / "run" / "checkpoint.json").read_bytes() == ck_first
    state, prov = ckpt.load_checkpoint(tmp_path / "run" / "checkpoint.json")
    ckpt.save_checkpoint(tmp_path / "copy.json", state, prov)
    same_bytes = (tmp_path / "copy.json").read_bytes() == ck_first
    again, _ = ckpt.load_checkpoint(tmp_path / "copy.json")
    probe = np.random.default_rng(0).normal(size=(64, state.config.d_in))
    same_forward = np.array_equal(adapter_forward(state, probe)[0], adapter_forward(again, probe)[0])
    ok = same_metrics and same_ckpt and same_bytes and same_forward
    record(12, ok, f"rerun metrics identical={same_metrics}, checkpoint identical={same_ckpt}, "
                   f"load/save identical={same_bytes}, forward bit-identical={same_forward}")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
