"""Training-free merging of adapters that share A, W0 and the B initialisation.

Merging works on task deltas ``B - B_init``. Gate parameters (and the
static gate vector) are averaged. Sums over tasks are correctly rounded
(``math.fsum``, or exact rationals for means) so the result does not depend
on the order of the adapter list.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .adapter import AdapterState
from .gate import GateParams

MERGE_METHODS = ("task_arithmetic", "ties")


class IncompatibleAdaptersError(ValueError):
    """Adapters cannot be merged (different frozen parts or shapes)."""


@dataclass(frozen=True)
class MergeRecipe:
    method: str = "task_arithmetic"
    scaling: float | None = None  # None: 1/T for task arithmetic, 1 for TIES
    trim_fraction: float = 0.2

    def __post_init__(self):
        if self.method not in MERGE_METHODS:
            raise ValueError(f"unknown merge method {self.method!r}")
        if self.scaling is not None and not self.scaling > 0:
            raise ValueError("scaling must be positive")
        if not 0.0 < self.trim_fraction <= 1.0:
            raise ValueError("trim_fraction must lie in (0, 1]")


def exact_sum(stack: np.ndarray) -> np.ndarray:
    """Correctly rounded sum over axis 0."""
    stack = np.asarray(stack, dtype=np.float64)
    flat = stack.reshape(stack.shape[0], -1)
    out = np.array([math.fsum(col) for col in flat.T])
    return out.reshape(stack.shape[1:])


def exact_mean(stack: np.ndarray, counts=None) -> np.ndarray:
    """Correctly rounded mean over axis 0.

    ``counts`` (same shape as one slice) overrides the divisor per entry;
    entries with a zero count come back as 0. Averaging identical values
    returns them unchanged.
    """
    stack = np.asarray(stack, dtype=np.float64)
    flat = stack.reshape(stack.shape[0], -1)
    if counts is None:
        counts = np.full(flat.shape[1], stack.shape[0])
    counts = np.asarray(counts).reshape(-1)
    out = np.zeros(flat.shape[1])
    for p in range(flat.shape[1]):
        if counts[p]:
            total = sum(map(Fraction, flat[:, p].tolist()), Fraction(0))
            out[p] = float(total / int(counts[p]))
    return out.reshape(stack.shape[1:])


def _mean(arrays) -> np.ndarray:
    return exact_mean(np.stack(arrays))


def check_compatible(adapters) -> None:
    if not adapters:
        raise IncompatibleAdaptersError("nothing to merge")
    ref = adapters[0]
    for i, a in enumerate(adapters[1:], start=1):
        if a.config != ref.config:
            raise IncompatibleAdaptersError(
                f"adapter {i} config {a.config} differs from {ref.config}"
            )
        if a.projection != ref.projection:
            raise IncompatibleAdaptersError(
                f"adapter {i} uses projection {a.projection.params}, "
                f"adapter 0 uses {ref.projection.params}; merging needs one shared frozen A"
            )
        if not np.array_equal(a.W0, ref.W0):
            raise IncompatibleAdaptersError(f"adapter {i} has a different base weight W0")
        if not np.array_equal(a.B_init, ref.B_init):
            raise IncompatibleAdaptersError(f"adapter {i} has a different B initialisation")
    if ref.config.variant == "trainable_a":
        raise IncompatibleAdaptersError("trainable_a adapters have no shared frozen A to merge over")


def task_arithmetic_delta(deltas, scaling: float | None = None) -> np.ndarray:
    """``scaling * sum(deltas)``; ``None`` means the correctly rounded mean."""
    if scaling is None:
        return exact_mean(np.stack(deltas))
    return scaling * exact_sum(np.stack(deltas))


def ties_delta(deltas, trim_fraction: float, scaling: float = 1.0) -> np.ndarray:
    """TIES: trim each delta, elect a sign per entry, average the agreeing values.

    Trim keeps ``round(trim_fraction * size)`` entries (at least one) of
    largest magnitude per task; equal magnitudes keep the lower flat index.
    The elected sign is that of the summed trimmed values, positive on an
    exact tie. The agreeing values are averaged with one rounding; entries
    with no agreeing contribution are zero.
    """
    stack = np.stack([np.asarray(d, dtype=np.float64) for d in deltas])
    T = stack.shape[0]
    flat = stack.reshape(T, -1)
    size = flat.shape[1]
    keep = max(1, math.floor(trim_fraction * size + 0.5))
    trimmed = np.zeros_like(flat)
    for t in range(T):
        order = np.argsort(-np.abs(flat[t]), kind="stable")[:keep]
        trimmed[t, order] = flat[t, order]
    sign = np.where(exact_sum(trimmed) >= 0.0, 1.0, -1.0)
    agree = (np.sign(trimmed) == sign) & (trimmed != 0.0)
    count = agree.sum(axis=0)
    merged = exact_mean(np.where(agree, trimmed, 0.0), counts=count)
    return (scaling * merged).reshape(stack.shape[1:])


def _merged_state(adapters, delta: np.ndarray) -> AdapterState:
    ref = adapters[0]
    out = ref.copy()
    out.B = ref.B_init + delta
    if ref.gate is not None:
        out.gate = GateParams(
            W1=_mean([a.gate.W1 for a in adapters]),
            W2=_mean([a.gate.W2 for a in adapters]),
            gamma=_mean([a.gate.gamma for a in adapters]),
            beta=_mean([a.gate.beta for a in adapters]),
        )
    if ref.m_static is not None:
        out.m_static = _mean([a.m_static for a in adapters])
    return out


def task_deltas(adapters) -> list[np.ndarray]:
    return [a.B - a.B_init for a in adapters]


def merge_task_arithmetic(adapters, scaling: float | None = None) -> AdapterState:
    """``B = B_init + scaling * sum_t (B_t - B_init)``.

    The default (``None``) is the mean delta, i.e. scaling 1/T with a single
    rounding, so merging copies of one adapter reproduces it exactly.
    """
    adapters = list(adapters)
    check_compatible(adapters)
    return _merged_state(adapters, task_arithmetic_delta(task_deltas(adapters), scaling))


def merge_ties(adapters, trim_fraction: float = 0.2, scaling: float = 1.0) -> AdapterState:
    adapters = list(adapters)
    check_compatible(adapters)
    return _merged_state(adapters, ties_delta(task_deltas(adapters), trim_fraction, scaling))


def merge(adapters, recipe: MergeRecipe) -> AdapterState:
    if recipe.method == "task_arithmetic":
        return merge_task_arithmetic(adapters, recipe.scaling)
    return merge_ties(
        adapters,
        recipe.trim_fraction,
        1.0 if recipe.scaling is None else recipe.scaling,
    )


def subspace_overlap_report(adapters) -> dict[str, np.ndarray]:
    """Mean squared cosine between expert columns for every adapter pair.

    ``off_diagonal[p, q]`` averages ``cos^2(B_p[:, i], B_q[:, j])`` over
    ``i != j``; ``column_diagonal[p, q]`` averages it over ``i == j``.
    """
    units = [a.B / np.linalg.norm(a.B, axis=0) for a in adapters]
    n = len(units)
    off = np.empty((n, n))
    diag = np.empty((n, n))
    for p in range(n):
        for q in range(n):
            C2 = (units[p].T @ units[q]) ** 2
            eye = np.eye(C2.shape[0], dtype=bool)
            off[p, q] = float(np.mean(C2[~eye]))
            diag[p, q] = float(np.mean(C2[eye]))
    return {"off_diagonal": off, "column_diagonal": diag}
