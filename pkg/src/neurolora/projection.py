"""Frozen sparse ternary down-projection."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .numerics import PROJECTION, DimensionError, Rng


@dataclass(frozen=True)
class SparseTernaryProjection:
    """An ``r x d_in`` matrix with entries in {0, +1, -1}.

    Only ``(seed, rho, r, d_in)`` define it; ``rows``, ``cols`` and
    ``signs`` are the materialised coordinate list sorted by (row, col).
    """

    seed: int
    rho: float
    r: int
    d_in: int
    rows: np.ndarray = field(repr=False, compare=False)
    cols: np.ndarray = field(repr=False, compare=False)
    signs: np.ndarray = field(repr=False, compare=False)

    @property
    def nnz(self) -> int:
        return int(self.signs.size)

    @property
    def params(self) -> dict:
        return {"seed": self.seed, "rho": self.rho, "r": self.r, "d_in": self.d_in}

    def entries(self) -> list[tuple[int, int, int]]:
        return list(zip(self.rows.tolist(), self.cols.tolist(), self.signs.tolist()))

    def dense(self) -> np.ndarray:
        a = np.zeros((self.r, self.d_in))
        a[self.rows, self.cols] = self.signs
        return a

    def content_hash(self) -> str:
        """sha256 of the entry list, used to verify regenerated checkpoints."""
        h = hashlib.sha256()
        h.update(f"{self.r},{self.d_in};".encode())
        for i, j, s in self.entries():
            h.update(f"{i},{j},{s};".encode())
        return h.hexdigest()

    def csr(self) -> sparse.csr_matrix:
        # cached by hand: frozen dataclass forbids attribute assignment
        cached = self.__dict__.get("_csr")
        if cached is None:
            cached = sparse.csr_matrix(
                (self.signs.astype(np.float64), (self.rows, self.cols)),
                shape=(self.r, self.d_in),
            )
            cached.sort_indices()
            object.__setattr__(self, "_csr", cached)
        return cached

    def __eq__(self, other):
        if not isinstance(other, SparseTernaryProjection):
            return NotImplemented
        return (self.seed, self.rho, self.r, self.d_in) == (
            other.seed,
            other.rho,
            other.r,
            other.d_in,
        ) and np.array_equal(self.signs, other.signs)

    __hash__ = None


def generate_projection(seed: int, rho: float, r: int, d_in: int) -> SparseTernaryProjection:
    """Sample A cell by cell in row-major order.

    Each cell draws one uniform ``u``; ``u < rho`` makes it nonzero, and a
    second uniform picks the sign (``< 0.5`` is +1). Zero cells consume a
    single draw.
    """
    if not (0.0 < rho <= 1.0):
        raise ValueError(f"rho must lie in (0, 1], got {rho}")
    if r < 1 or d_in < 1:
        raise ValueError(f"r and d_in must be >= 1, got r={r}, d_in={d_in}")
    rng = Rng(seed, PROJECTION)
    rows, cols, signs = [], [], []
    uniform = rng.uniform
    for i in range(r):
        for j in range(d_in):
            if uniform() < rho:
                rows.append(i)
                cols.append(j)
                signs.append(1 if uniform() < 0.5 else -1)
    return SparseTernaryProjection(
        seed=int(seed),
        rho=float(rho),
        r=int(r),
        d_in=int(d_in),
        rows=np.array(rows, dtype=np.int64),
        cols=np.array(cols, dtype=np.int64),
        signs=np.array(signs, dtype=np.int8),
    )


def project(a: SparseTernaryProjection, x: np.ndarray) -> np.ndarray:
    """``h = A x`` for one vector or a batch of row vectors.

    Each output coordinate accumulates its row's entries in ascending
    column order, so results are bit-reproducible.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != a.d_in or x.ndim > 2:
        raise DimensionError(f"project expects last dim {a.d_in}, got shape {x.shape}")
    if x.ndim == 1:
        return a.csr() @ x
    return np.ascontiguousarray((a.csr() @ x.T).T)
