import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neurolora.numerics import (
    INIT,
    PROJECTION,
    DimensionError,
    Rng,
    gelu,
    gelu_grad,
    hadamard,
    matmul,
    matvec,
    sigmoid,
    sigmoid_grad,
    splitmix64,
)

# golden value frozen from the first run of the generator
GOLDEN_SEED42_FIRST_UNIFORM = 0.8143051451229099


def _raw(s0, s1, s2, s3):
    rng = Rng(0)
    rng.s0, rng.s1, rng.s2, rng.s3 = s0, s1, s2, s3
    return rng


def test_splitmix64_reference_vector():
    # published outputs for seed 1234567
    expected = [
        6457827717110365317,
        3203168211198807973,
        9817491932198370423,
        4593380528125082431,
        16408922859458223821,
    ]
    state, got = 1234567, []
    for _ in expected:
        state, out = splitmix64(state)
        got.append(out)
    assert got == expected


def test_xoshiro256pp_reference_vector():
    # published outputs for state (1, 2, 3, 4)
    expected = [
        41943041,
        58720359,
        3588806011781223,
        3591011842654386,
        9228616714210784205,
        9973669472204895162,
        14011001112246962877,
        12406186145184390807,
        15849039046786891736,
        10450023813501588000,
    ]
    rng = _raw(1, 2, 3, 4)
    assert [rng.next_u64() for _ in expected] == expected


def test_seed42_first_uniform_is_frozen():
    assert Rng(42).uniform() == GOLDEN_SEED42_FIRST_UNIFORM


@given(st.integers(min_value=0, max_value=2**64 - 1), st.integers(min_value=0, max_value=8))
@settings(max_examples=50, deadline=None)
def test_uniform_range_and_determinism(seed, stream):
    a, b = Rng(seed, stream), Rng(seed, stream)
    for _ in range(20):
        u = a.uniform()
        assert 0.0 <= u < 1.0
        assert u == b.uniform()


def test_streams_differ():
    a = [Rng(5, PROJECTION).uniform() for _ in range(3)]
    b = [Rng(5, INIT).uniform() for _ in range(3)]
    assert a != b


def test_copy_preserves_spare():
    rng = Rng(3)
    rng.gaussian()  # leaves a cached spare
    clone = rng.copy()
    assert [rng.gaussian() for _ in range(5)] == [clone.gaussian() for _ in range(5)]


def test_gaussian_moments():
    draws = Rng(2024).gaussian_array(1_000_000)
    assert abs(draws.mean()) < 0.01
    assert abs(draws.var() - 1.0) < 0.02


def test_equal_seeds_equal_gaussians():
    assert Rng(9).gaussian_array(50).tolist() == Rng(9).gaussian_array(50).tolist()


@given(st.integers(min_value=1, max_value=40), st.integers(min_value=0, max_value=1000))
@settings(max_examples=30, deadline=None)
def test_permutation_is_a_permutation(n, seed):
    perm = Rng(seed).permutation(n)
    assert sorted(perm.tolist()) == list(range(n))


def test_matmul_examples():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert matvec(a, np.array([1.0, 1.0])).tolist() == [3.0, 7.0]
    v = np.array([0.3, -2.0])
    assert matvec(np.eye(2), v).tolist() == v.tolist()
    assert hadamard(np.array([1.0, 2.0]), np.array([3.0, 4.0])).tolist() == [3.0, 8.0]


def test_shape_errors_name_both_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 2\)"):
        matmul(np.zeros((2, 3)), np.zeros((2, 2)))
    with pytest.raises(DimensionError):
        matvec(np.zeros((2, 3)), np.zeros(2))
    with pytest.raises(DimensionError):
        hadamard(np.zeros(2), np.zeros(3))


int_mats = st.integers(min_value=1, max_value=5).flatmap(
    lambda n: st.lists(st.integers(-50, 50), min_size=3 * n * n, max_size=3 * n * n).map(
        lambda xs: [np.array(xs[i * n * n : (i + 1) * n * n], dtype=np.float64).reshape(n, n) for i in range(3)]
    )
)


@given(int_mats)
@settings(max_examples=50, deadline=None)
def test_matmul_identity_and_distributivity_exact(mats):
    a, b, c = mats
    eye = np.eye(a.shape[0])
    assert np.array_equal(matmul(eye, a), a)
    assert np.array_equal(matmul(a, eye), a)
    assert np.array_equal(matmul(a, b + c), matmul(a, b) + matmul(a, c))


def test_gelu_values():
    assert gelu(0.0) == 0.0
    assert abs(gelu(10.0) - 10.0) < 1e-6


@pytest.mark.parametrize("x", [-2.0, -0.5, 0.3, 4.0])
def test_gelu_grad_matches_finite_difference(x):
    h = 1e-5
    fd = (gelu(x + h) - gelu(x - h)) / (2 * h)
    assert abs(gelu_grad(x) - fd) < 1e-7


def test_gelu_matches_scalar_formula():
    for x in np.linspace(-5, 5, 41):
        ref = 0.5 * x * (1 + math.tanh(math.sqrt(2 / math.pi) * (x + 0.044715 * x**3)))
        assert gelu(x) == pytest.approx(ref, abs=1e-15)


def test_sigmoid_values():
    assert sigmoid(0.0) == 0.5
    y = sigmoid(-709.0)
    assert np.isfinite(y) and y >= 0.0
    assert sigmoid(800.0) == 1.0
    assert sigmoid_grad(0.5) == 0.25


@given(st.floats(min_value=-30, max_value=30))
def test_sigmoid_symmetry(x):
    assert sigmoid(x) + sigmoid(-x) == pytest.approx(1.0, abs=1e-15)
