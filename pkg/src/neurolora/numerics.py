"""Deterministic RNG, dense-array helpers and activation functions.

Matrices are plain ``numpy.float64`` arrays. Random numbers come from a
self-contained xoshiro256++ generator seeded through splitmix64 so that a
given seed reproduces the same stream everywhere, independent of numpy's
bit generators.

Streams for distinct purposes are derived from one run seed by adding a
fixed offset (``stream * STREAM_STRIDE``) before splitmix64 expansion:

=========  ======  ==========================================
stream     offset  used for
=========  ======  ==========================================
PROJECTION 1       sparse ternary matrix A
INIT       2       B and gate W1 initialisation
BASE       3       frozen base weight W0
DIRECTIONS 4       cluster directions of the task family
DATA       5       per-task maps and samples (``DATA + task``
                   is spaced by ``TASK_STRIDE``)
SHUFFLE    6       mini-batch order during training
=========  ======  ==========================================
"""

from __future__ import annotations

import math

import numpy as np

MASK64 = (1 << 64) - 1
STREAM_STRIDE = 0x9E3779B97F4A7C15

PROJECTION = 1
INIT = 2
BASE = 3
DIRECTIONS = 4
DATA = 5
SHUFFLE = 6
# per-task data streams: DATA + TASK_STRIDE * task_index
TASK_STRIDE = 16


class DimensionError(ValueError):
    """Raised when array shapes are not conformant."""


def splitmix64(state: int) -> tuple[int, int]:
    """Advance a splitmix64 state; returns ``(new_state, output)``."""
    state = (state + 0x9E3779B97F4A7C15) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


class Rng:
    """xoshiro256++ stream.

    ``Rng(seed, stream)`` seeds from ``seed + stream * STREAM_STRIDE``
    (mod 2**64) expanded through four splitmix64 outputs.
    """

    __slots__ = ("s0", "s1", "s2", "s3", "_spare")

    def __init__(self, seed: int, stream: int = 0):
        sm = (int(seed) + int(stream) * STREAM_STRIDE) & MASK64
        words = []
        for _ in range(4):
            sm, out = splitmix64(sm)
            words.append(out)
        self.s0, self.s1, self.s2, self.s3 = words
        self._spare: float | None = None

    @property
    def state(self) -> tuple:
        return (self.s0, self.s1, self.s2, self.s3, self._spare)

    def copy(self) -> "Rng":
        other = Rng.__new__(Rng)
        other.s0, other.s1, other.s2, other.s3, other._spare = self.state
        return other

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self.s0, self.s1, self.s2, self.s3
        result = (_rotl((s0 + s3) & MASK64, 23) + s0) & MASK64
        t = (s1 << 17) & MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self.s0, self.s1, self.s2, self.s3 = s0, s1, s2, s3
        return result

    def uniform(self) -> float:
        """Uniform double in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / 9007199254740992.0)

    def gaussian(self) -> float:
        """Standard normal via the polar Box-Muller method.

        Each accepted pair yields two variates; the second is cached and
        returned by the following call.
        """
        if self._spare is not None:
            z, self._spare = self._spare, None
            return z
        while True:
            u = 2.0 * self.uniform() - 1.0
            v = 2.0 * self.uniform() - 1.0
            s = u * u + v * v
            if 0.0 < s < 1.0:
                break
        f = math.sqrt(-2.0 * math.log(s) / s)
        self._spare = v * f
        return u * f

    def uniform_array(self, n: int) -> np.ndarray:
        return np.array([self.uniform() for _ in range(n)], dtype=np.float64)

    def gaussian_array(self, n: int) -> np.ndarray:
        return np.array([self.gaussian() for _ in range(n)], dtype=np.float64)

    def randbelow(self, n: int) -> int:
        return min(int(self.uniform() * n), n - 1)

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates shuffle of ``range(n)``."""
        perm = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.randbelow(i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return np.array(perm, dtype=np.int64)


def gaussian_matrix(rng: Rng, rows: int, cols: int, std: float = 1.0) -> np.ndarray:
    """Row-major fill of a ``rows x cols`` matrix with N(0, std^2) draws."""
    return rng.gaussian_array(rows * cols).reshape(rows, cols) * std


def _check_2d(name: str, a: np.ndarray) -> None:
    if a.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {a.shape}")


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_2d("a", a)
    _check_2d("b", b)
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return a @ b


def matvec(a: np.ndarray, v: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    _check_2d("a", a)
    if v.ndim != 1 or a.shape[1] != v.shape[0]:
        raise DimensionError(f"matvec shape mismatch: {a.shape} x {v.shape}")
    return a @ v


def hadamard(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise DimensionError(f"hadamard shape mismatch: {u.shape} vs {v.shape}")
    return u * v


_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


def gelu(x):
    """tanh-approximated GELU; works on scalars and arrays."""
    return 0.5 * x * (1.0 + np.tanh(_GELU_C * (x + _GELU_A * x * x * x)))


def gelu_grad(x):
    """Exact derivative of :func:`gelu`."""
    inner = _GELU_C * (x + _GELU_A * x * x * x)
    t = np.tanh(inner)
    d_inner = _GELU_C * (1.0 + 3.0 * _GELU_A * x * x)
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner


def sigmoid(x):
    """Logistic function, stable for large ``|x|``."""
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return out[()] if out.ndim == 0 else out


def sigmoid_grad(y):
    """Derivative of the sigmoid written in terms of its output ``y``."""
    return y * (1.0 - y)
