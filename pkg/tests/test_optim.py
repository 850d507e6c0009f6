import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neurolora.optim import AdamState, OptimizerConfig, adamw_step, lr_at


def test_schedule_endpoints():
    cfg = OptimizerConfig(total_steps=100, warmup_ratio=0.03)
    assert lr_at(0, cfg, 0.1) == 0.0
    assert lr_at(3, cfg, 0.1) == 0.1
    assert lr_at(100, cfg, 0.1) == 0.0
    assert lr_at(1.5, cfg, 0.1) == pytest.approx(0.05)


def test_schedule_without_warmup_or_total():
    assert lr_at(0, OptimizerConfig(total_steps=10, warmup_ratio=0.0), 0.2) == 0.2
    assert lr_at(5, OptimizerConfig(total_steps=0), 0.2) == 0.2


@given(st.integers(1, 500), st.floats(0.0, 0.9))
@settings(max_examples=60, deadline=None)
def test_schedule_monotone(total, ratio):
    cfg = OptimizerConfig(total_steps=total, warmup_ratio=ratio)
    lrs = [lr_at(t, cfg, 1.0) for t in range(total + 1)]
    warm = cfg.warmup_ratio * total
    up = [v for t, v in enumerate(lrs) if t <= warm]
    down = [v for t, v in enumerate(lrs) if t >= warm]
    assert all(a <= b for a, b in zip(up, up[1:]))
    assert all(a >= b - 1e-15 for a, b in zip(down, down[1:]))
    assert all(0.0 <= v <= 1.0 for v in lrs)


def test_zero_grad_no_decay_is_identity():
    p = {"B": np.array([1.0, -2.0])}
    cfg = OptimizerConfig(weight_decay=0.0)
    adamw_step(p, {"B": np.zeros(2)}, AdamState(), cfg, {"B": 0.1})
    assert p["B"].tolist() == [1.0, -2.0]


def test_two_steps_match_hand_recursion():
    b1, b2, eps, lr, wd = 0.9, 0.95, 1e-8, 0.01, 0.01
    cfg = OptimizerConfig(beta1=b1, beta2=b2, epsilon=eps, weight_decay=wd)
    p = {"B": np.array([0.5])}
    st_ = AdamState()
    theta, m, v = 0.5, 0.0, 0.0
    for t in (1, 2):
        adamw_step(p, {"B": np.array([1.0])}, st_, cfg, {"B": lr})
        m = b1 * m + (1 - b1) * 1.0
        v = b2 * v + (1 - b2) * 1.0
        mh, vh = m / (1 - b1**t), v / (1 - b2**t)
        theta = theta - lr * (mh / (vh**0.5 + eps) + wd * theta)
        assert abs(p["B"][0] - theta) < 1e-12
    assert st_.t == 2


def test_decoupled_decay_isolation():
    cfg = OptimizerConfig(weight_decay=0.01)
    p = {"B": np.array([2.0, -4.0]), "gamma": np.array([1.0])}
    adamw_step(p, {"B": np.zeros(2), "gamma": np.zeros(1)}, AdamState(), cfg, {"B": 0.5, "gamma": 0.5})
    assert np.allclose(p["B"], np.array([2.0, -4.0]) * (1 - 0.5 * 0.01), rtol=0, atol=1e-15)
    assert p["gamma"].tolist() == [1.0]  # gamma, beta and m are exempt


def test_shape_mismatch():
    with pytest.raises(ValueError):
        adamw_step({"B": np.zeros(2)}, {"B": np.zeros(3)}, AdamState(), OptimizerConfig(), {"B": 0.1})


@pytest.mark.parametrize(
    "kwargs",
    [{"beta1": 1.0}, {"beta2": -0.1}, {"warmup_ratio": 1.0}, {"lr_B": -1.0}, {"epsilon": 0.0}, {"total_steps": -1}],
)
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        OptimizerConfig(**kwargs)


def test_group_rates():
    cfg = OptimizerConfig(lr_B=1.0, lr_gate=2.0)
    assert cfg.base_lr("B") == cfg.base_lr("A") == 1.0
    assert all(cfg.base_lr(n) == 2.0 for n in ("W1", "W2", "gamma", "beta", "m"))
    with pytest.raises(KeyError):
        cfg.base_lr("W0")
