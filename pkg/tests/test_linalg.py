import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from paradae.linalg import (
    SingularMatrixError,
    StructureError,
    build_projectors,
    factorize,
    solve_linear,
)


def test_solve_identity():
    np.testing.assert_allclose(solve_linear(np.eye(3), [1.0, 2.0, 3.0]), [1.0, 2.0, 3.0])


def test_solve_diagonal():
    np.testing.assert_allclose(solve_linear([[2.0, 0.0], [0.0, 4.0]], [2.0, 8.0]), [1.0, 2.0])


def test_solve_2x2_hand_inverse():
    # inverse of [[2,-1],[-1,2]] is [[2,1],[1,2]] / 3
    x = solve_linear([[2.0, -1.0], [-1.0, 2.0]], [1.0, 0.0])
    np.testing.assert_allclose(x, [2.0 / 3.0, 1.0 / 3.0], rtol=1e-15)


@pytest.mark.filterwarnings("ignore::scipy.linalg.LinAlgWarning")
@pytest.mark.parametrize("a", [
    np.zeros((2, 2)),
    np.array([[1.0, 2.0], [2.0, 4.0]]),
    np.array([[1.0, 0.0, 0.0], [0.0, 1e-16, 0.0], [0.0, 0.0, 1.0]]),
])
def test_solve_singular(a):
    with pytest.raises(SingularMatrixError):
        solve_linear(a, np.ones(a.shape[0]))


def test_solve_shape_errors():
    with pytest.raises(ValueError):
        solve_linear(np.eye(3), np.ones(2))
    with pytest.raises(ValueError):
        factorize(np.ones((2, 3)))


@pytest.mark.parametrize("n", [1, 7, 50, 200, 500])
def test_solve_random_residual(rng, n):
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    a = q @ np.diag(rng.uniform(1.0, 10.0, n)) @ q.T + 0.1 * rng.standard_normal((n, n))
    b = rng.standard_normal(n)
    x = solve_linear(a, b)
    assert np.linalg.norm(a @ x - b) / np.linalg.norm(b) <= 1e-10


def check_projector_invariants(m, pp, tol=1e-12):
    n = m.shape[0]
    p, q = pp.p, pp.q
    assert np.max(np.abs(p @ p - p)) <= tol
    assert np.max(np.abs(q @ q - q)) <= tol
    assert np.max(np.abs(p @ q)) <= tol
    assert np.max(np.abs(p + q - np.eye(n))) <= tol
    assert np.max(np.abs(m @ q)) <= tol * max(np.max(np.abs(m)), 1.0)


def test_projectors_diag_singular():
    pp = build_projectors(np.diag([1.0, 0.0]))
    np.testing.assert_array_equal(pp.p, np.diag([1.0, 0.0]))
    np.testing.assert_array_equal(pp.q, np.diag([0.0, 1.0]))


def test_projectors_identity():
    pp = build_projectors(np.eye(4))
    np.testing.assert_array_equal(pp.p, np.eye(4))
    np.testing.assert_array_equal(pp.q, np.zeros((4, 4)))
    assert pp.is_ode


def test_projectors_diag_mixed():
    m = np.diag([3.0, 0.0, 5.0])
    pp = build_projectors(m)
    np.testing.assert_allclose(pp.pinv, np.diag([1 / 3, 0.0, 1 / 5]), rtol=1e-15)
    np.testing.assert_allclose(pp.pinv @ m, np.diag([1.0, 0.0, 1.0]), atol=1e-15)
    np.testing.assert_array_equal(pp.p, np.diag([1.0, 0.0, 1.0]))
    np.testing.assert_array_equal(pp.q, np.diag([0.0, 1.0, 0.0]))
    assert list(pp.differential_index_set) == [0, 2]
    assert list(pp.algebraic_index_set) == [1]


def test_projectors_consistent_mass_block(rng):
    n = 6
    idx = np.array([1, 2, 4])
    b = rng.standard_normal((3, 3))
    m = np.zeros((n, n))
    m[np.ix_(idx, idx)] = b @ b.T + 3 * np.eye(3)
    pp = build_projectors(m)
    check_projector_invariants(m, pp)
    np.testing.assert_allclose(pp.pinv, np.linalg.pinv(m), atol=1e-12)


def test_projectors_reject_indefinite_support():
    m = np.zeros((3, 3))
    m[:2, :2] = [[1.0, 2.0], [2.0, 1.0]]
    with pytest.raises(StructureError):
        build_projectors(m)


def test_projectors_reject_singular_support():
    m = np.zeros((3, 3))
    m[:2, :2] = [[1.0, 1.0], [1.0, 1.0]]
    with pytest.raises(StructureError):
        build_projectors(m)


def test_projectors_reject_negative_diagonal():
    with pytest.raises(StructureError):
        build_projectors(np.diag([1.0, -1.0, 0.0]))


@st.composite
def index1_mass(draw):
    n = draw(st.integers(1, 12))
    mask = np.array(draw(st.lists(st.booleans(), min_size=n, max_size=n)))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    idx = np.flatnonzero(mask)
    m = np.zeros((n, n))
    if idx.size:
        b = rng.standard_normal((idx.size, idx.size))
        m[np.ix_(idx, idx)] = b @ b.T + idx.size * np.eye(idx.size)
    return m, idx


@settings(max_examples=60, deadline=None)
@given(index1_mass())
def test_projector_invariants_property(case):
    m, idx = case
    pp = build_projectors(m)
    check_projector_invariants(m, pp)
    np.testing.assert_array_equal(pp.differential_index_set, idx)


def test_projector_pair_is_immutable():
    pp = build_projectors(np.diag([1.0, 0.0]))
    with pytest.raises(ValueError):
        pp.p[0, 0] = 2.0
