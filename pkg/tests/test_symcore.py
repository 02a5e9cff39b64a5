import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ebincurv.symcore import (DimensionError, ExpOverflowError, NormalFormCoords, TraceError,
                              blockdiag, check_traceless, d_of, fix_signs, frobenius_inner,
                              multiplicity_of, normal_form_embed, normal_form_extract,
                              normal_space_split, op_norm, prefix_sums, sorted_eigen,
                              sym0_orthonormal_basis, sym_exp, sym_sqrt)

finite = st.floats(-5, 5, allow_nan=False)


def traceless(draw_size=st.integers(2, 6)):
    @st.composite
    def strat(draw):
        n = draw(draw_size)
        A = draw(arrays(float, (n, n), elements=finite))
        S = 0.5 * (A + A.T)
        return S - np.trace(S) / n * np.eye(n)
    return strat()


def test_d_of_values():
    assert [d_of(k) for k in range(1, 7)] == [0, 2, 5, 9, 14, 20]
    with pytest.raises(ValueError):
        d_of(0)


def test_prefix_sums():
    assert prefix_sums((2, 1, 3)) == (0, 2, 3, 6)


@given(st.integers(1, 6).flatmap(lambda k: st.tuples(st.just(k), arrays(float, d_of(k), elements=finite))))
def test_normal_form_round_trip(args):
    k, b = args
    S = normal_form_embed(b, k)
    assert S.shape == (k, k)
    assert np.array_equal(S, S.T)
    assert abs(np.trace(S)) <= 1e-12 * (1 + np.abs(b).sum())
    back = normal_form_extract(S)
    assert back.m == k
    np.testing.assert_array_equal(back.b, b)


def test_normal_form_layout_m2():
    S = normal_form_embed([1.0, 2.0], 2)
    np.testing.assert_array_equal(S, [[1.0, 2.0], [2.0, -1.0]])


def test_normal_form_rejects_wrong_length():
    with pytest.raises(DimensionError):
        normal_form_embed([1.0, 2.0, 3.0], 2)
    with pytest.raises(DimensionError):
        NormalFormCoords(3, np.zeros(2))


def test_check_traceless_errors():
    with pytest.raises(TraceError):
        check_traceless(np.eye(2))
    with pytest.raises(ValueError):
        check_traceless(np.array([[0.0, 1.0], [2.0, 0.0]]))
    with pytest.raises(DimensionError):
        check_traceless(np.zeros((2, 3)))


@given(traceless(), st.floats(0, 5))
def test_sym_exp_unit_determinant(S, t):
    S = S / max(1.0, op_norm(S))
    P = sym_exp(S, t)
    np.testing.assert_allclose(P, P.T, atol=1e-12 * np.abs(P).max())
    assert abs(np.linalg.det(P) - 1) <= 1e-10
    assert np.all(np.linalg.eigvalsh(P) > 0)


def test_sym_exp_group_law(rng):
    A = rng.standard_normal((4, 4))
    S = A + A.T
    np.testing.assert_allclose(sym_exp(S, 0.3) @ sym_exp(S, 0.4), sym_exp(S, 0.7), rtol=1e-12, atol=1e-12)


def test_sym_exp_overflow_guard():
    with pytest.raises(ExpOverflowError):
        sym_exp(np.diag([1.0, -1.0]), 41.0)


@given(traceless())
def test_sorted_eigen_reconstructs(S):
    sp = sorted_eigen(S)
    assert np.all(np.diff(sp.eigenvalues) >= 0)
    Q = sp.eigenvectors
    np.testing.assert_allclose(Q @ np.diag(sp.eigenvalues) @ Q.T, S, atol=1e-10 * (1 + np.abs(S).max()))


def test_fix_signs_is_deterministic(rng):
    Q, _ = np.linalg.qr(rng.standard_normal((5, 5)))
    flipped = Q * np.array([1, -1, 1, -1, -1])
    np.testing.assert_array_equal(fix_signs(Q), fix_signs(flipped))


def test_multiplicity_of():
    assert multiplicity_of(np.array([-1.0, -1.0, 0.5, 0.5 + 1e-9, 1.0]), 1e-6) == (2, 2, 1)
    with pytest.raises(ValueError):
        multiplicity_of(np.zeros(2), 0.0)


@given(traceless(st.just(5)))
def test_normal_space_split_is_orthogonal(S):
    sp = normal_space_split(S, (2, 1, 2))
    scal = blockdiag([mu * np.eye(k) for mu, k in zip(sp.diag_scalars, (2, 1, 2))])
    trl = blockdiag(sp.block_traceless)
    np.testing.assert_allclose(trl + scal + sp.offdiag, S, atol=1e-12)
    scale = 1 + np.abs(S).max() ** 2
    assert abs(frobenius_inner(trl, scal)) <= 1e-10 * scale
    assert abs(frobenius_inner(trl, sp.offdiag)) <= 1e-10 * scale
    assert abs(frobenius_inner(scal, sp.offdiag)) <= 1e-10 * scale


@pytest.mark.parametrize("m", range(1, 7))
def test_sym0_basis_is_orthonormal(m):
    B = sym0_orthonormal_basis(m)
    assert B.shape == (d_of(m), m, m)
    gram = np.einsum("aij,bij->ab", B, B)
    np.testing.assert_allclose(gram, np.eye(d_of(m)), atol=1e-14)
    assert np.allclose(np.trace(B, axis1=1, axis2=2), 0)


def test_sym_sqrt(rng):
    A = rng.standard_normal((3, 3))
    G = A @ A.T + 3 * np.eye(3)
    R = sym_sqrt(G)
    np.testing.assert_allclose(R @ R, G, rtol=1e-12)
    np.testing.assert_allclose(sym_sqrt(G, inverse=True) @ R, np.eye(3), atol=1e-12)
    with pytest.raises(np.linalg.LinAlgError):
        sym_sqrt(-np.eye(2))
