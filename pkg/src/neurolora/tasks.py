"""Synthetic contextual-regression tasks.

Every task has ``C`` clusters. A sample from cluster ``c`` is
``x = s * u_c + noise`` with ``u_c`` a unit direction and ``s ~ U[0.5, 1.5]``
drawn independently of the cluster, so only the direction of ``x`` tells
clusters apart. The target is ``W0 x + D_c x`` where ``D_c`` is a
cluster-specific low-rank map whose row space contains ``u_c``.

Within a task family all ``T * C`` directions are mutually orthonormal.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .adapter import base_weight
from .numerics import DATA, DIRECTIONS, TASK_STRIDE, Rng, gaussian_matrix


@dataclass(frozen=True)
class TaskSpec:
    seed: int
    task_index: int = 0
    num_tasks: int = 1
    clusters: int = 4
    d_in: int = 64
    d_out: int = 64
    n_train_per_cluster: int = 128
    n_eval_per_cluster: int = 32
    noise: float = 0.05
    delta_rank: int = 2
    delta_scale: float = 0.5

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TaskDataset:
    name: str
    spec: TaskSpec
    directions: np.ndarray  # (C, d_in)
    deltas: np.ndarray  # (C, d_out, d_in)
    x_train: np.ndarray
    y_train: np.ndarray
    c_train: np.ndarray
    x_eval: np.ndarray
    y_eval: np.ndarray
    c_eval: np.ndarray
    labels_train: np.ndarray | None = field(default=None, repr=False)
    labels_eval: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_train(self) -> int:
        return self.x_train.shape[0]

    def to_json(self) -> dict:
        def arr(a):
            return None if a is None else a.tolist()

        return {
            "name": self.name,
            "spec": self.spec.to_dict(),
            "x_train": arr(self.x_train),
            "y_train": arr(self.y_train),
            "c_train": arr(self.c_train),
            "x_eval": arr(self.x_eval),
            "y_eval": arr(self.y_eval),
            "c_eval": arr(self.c_eval),
        }


def modified_gram_schmidt(vectors: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Orthonormalise the rows of ``vectors`` in order."""
    q = np.array(vectors, dtype=np.float64)
    for i in range(q.shape[0]):
        for j in range(i):
            q[i] -= np.dot(q[j], q[i]) * q[j]
        norm = np.linalg.norm(q[i])
        if norm < tol:
            raise ValueError(f"vector {i} is linearly dependent on the previous ones")
        q[i] /= norm
    return q


def family_directions(seed: int, n_directions: int, d_in: int) -> np.ndarray:
    if n_directions > d_in:
        raise ValueError(
            f"cannot orthonormalise {n_directions} directions in {d_in} dimensions"
        )
    raw = gaussian_matrix(Rng(seed, DIRECTIONS), n_directions, d_in)
    return modified_gram_schmidt(raw)


def _build_task(spec: TaskSpec, directions: np.ndarray, W0: np.ndarray) -> TaskDataset:
    C, d_in, d_out, q = spec.clusters, spec.d_in, spec.d_out, spec.delta_rank
    rng = Rng(spec.seed, DATA + TASK_STRIDE * spec.task_index)

    deltas = np.empty((C, d_out, d_in))
    for c in range(C):
        left = gaussian_matrix(rng, d_out, q, std=spec.delta_scale)
        right = gaussian_matrix(rng, q, d_in, std=1.0 / np.sqrt(d_in))
        right[0] = directions[c]
        deltas[c] = left @ right

    def draw(n_per_cluster):
        xs, cs = [], []
        for c in range(C):
            for _ in range(n_per_cluster):
                s = 0.5 + rng.uniform()
                xs.append(s * directions[c] + spec.noise * rng.gaussian_array(d_in))
                cs.append(c)
        x = np.array(xs).reshape(-1, d_in)
        cl = np.array(cs, dtype=np.int64)
        y = x @ W0.T + np.einsum("noi,ni->no", deltas[cl], x)
        return x, y, cl

    x_tr, y_tr, c_tr = draw(spec.n_train_per_cluster)
    x_ev, y_ev, c_ev = draw(spec.n_eval_per_cluster)
    return TaskDataset(
        name=f"task{spec.task_index}",
        spec=spec,
        directions=directions,
        deltas=deltas,
        x_train=x_tr,
        y_train=y_tr,
        c_train=c_tr,
        x_eval=x_ev,
        y_eval=y_ev,
        c_eval=c_ev,
    )


def gen_task_family(
    base_seed: int,
    T: int,
    d_in: int = 64,
    d_out: int = 64,
    clusters: int = 4,
    n_train_per_cluster: int = 128,
    n_eval_per_cluster: int = 32,
    noise: float = 0.05,
    delta_rank: int = 2,
    delta_scale: float = 0.5,
) -> list[TaskDataset]:
    """``T`` tasks sharing W0 but with mutually orthogonal cluster directions.

    Task ``t`` uses directions ``t*C .. (t+1)*C - 1`` of one Gram-Schmidt
    sweep, so task 0 does not depend on ``T``.
    """
    if T < 1:
        raise ValueError("need at least one task")
    if clusters < 2:
        raise ValueError("need at least two clusters")
    if noise < 0 or not 1 <= delta_rank <= min(d_in, d_out):
        raise ValueError("invalid noise or delta_rank")
    dirs = family_directions(base_seed, T * clusters, d_in)
    W0 = base_weight(base_seed, d_out, d_in)
    tasks = []
    for t in range(T):
        spec = TaskSpec(
            seed=base_seed,
            task_index=t,
            num_tasks=T,
            clusters=clusters,
            d_in=d_in,
            d_out=d_out,
            n_train_per_cluster=n_train_per_cluster,
            n_eval_per_cluster=n_eval_per_cluster,
            noise=noise,
            delta_rank=delta_rank,
            delta_scale=delta_scale,
        )
        tasks.append(_build_task(spec, dirs[t * clusters : (t + 1) * clusters], W0))
    return tasks


def gen_contextual_regression(
    seed: int,
    C: int = 4,
    d_in: int = 64,
    d_out: int = 64,
    n_per_cluster: int = 128,
    noise: float = 0.05,
    n_eval_per_cluster: int = 32,
    delta_rank: int = 2,
    delta_scale: float = 0.5,
) -> TaskDataset:
    return gen_task_family(
        seed,
        1,
        d_in=d_in,
        d_out=d_out,
        clusters=C,
        n_train_per_cluster=n_per_cluster,
        n_eval_per_cluster=n_eval_per_cluster,
        noise=noise,
        delta_rank=delta_rank,
        delta_scale=delta_scale,
    )[0]


def dataset_from_spec(spec: TaskSpec) -> TaskDataset:
    return gen_task_family(
        spec.seed,
        spec.num_tasks,
        d_in=spec.d_in,
        d_out=spec.d_out,
        clusters=spec.clusters,
        n_train_per_cluster=spec.n_train_per_cluster,
        n_eval_per_cluster=spec.n_eval_per_cluster,
        noise=spec.noise,
        delta_rank=spec.delta_rank,
        delta_scale=spec.delta_scale,
    )[spec.task_index]
