import numpy as np
import pytest
from hypothesis import given, strategies as st

from fddmimo.channel import ArrayConfig, steering_matrix
from fddmimo.numerics import (BlockDiagOperator, NumericsError, block_solve,
                              extreme_eigenpair, gershgorin_bounds, is_hermitian,
                              is_psd, pinv)

from conftest import crandn, random_hermitian

seeds = st.integers(0, 2**32 - 1)


def rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


# -- pinv --------------------------------------------------------------------

def test_pinv_identity():
    assert np.allclose(pinv(np.eye(3)), np.eye(3), atol=1e-14)


def test_pinv_steering_left_inverse():
    cfg = ArrayConfig(8, 0.03, 0.025)
    A = steering_matrix(np.deg2rad([-20.0, 25.0]), cfg.lambda_ul, cfg)
    assert np.allclose(pinv(A) @ A, np.eye(2), atol=1e-8)


def test_pinv_rank_one_by_hand(rng):
    u = crandn(rng, 5)
    v = crandn(rng, 3)
    u /= np.linalg.norm(u)
    v /= np.linalg.norm(v)
    # u v^H has the single singular triplet (1, u, v), so its pinv is v u^H
    assert np.allclose(pinv(np.outer(u, v.conj())), np.outer(v, u.conj()), atol=1e-12)


def test_pinv_zero_matrix():
    Z = pinv(np.zeros((4, 2), complex))
    assert Z.shape == (2, 4) and not Z.any()


@pytest.mark.parametrize('bad', [np.nan, np.inf])
def test_pinv_rejects_nonfinite(bad):
    M = np.eye(3)
    M[1, 2] = bad
    with pytest.raises(NumericsError):
        pinv(M)


@given(seeds, st.integers(1, 6), st.integers(1, 6))
def test_pinv_moore_penrose(seed, m, n):
    rng = np.random.default_rng(seed)
    M = crandn(rng, m, n)
    X = pinv(M)
    assert rel(M @ X @ M, M) < 1e-8
    assert rel(X @ M @ X, X) < 1e-8
    assert rel((M @ X).conj().T, M @ X) < 1e-8
    assert rel((X @ M).conj().T, X @ M) < 1e-8


# -- Hermitian helpers ---------------------------------------------------------

def test_hermitian_and_psd_flags(rng):
    H = random_hermitian(rng, 5, psd=True)
    assert is_hermitian(H) and is_psd(H)
    assert not is_psd(-H)
    assert not is_hermitian(crandn(rng, 3, 3))


def test_gershgorin_encloses_spectrum(rng):
    H = random_hermitian(rng, 7)
    lo, hi = gershgorin_bounds(H)
    w = np.linalg.eigvalsh(H)
    assert lo <= w[0] and w[-1] <= hi


# -- extreme_eigenpair ---------------------------------------------------------

def test_eigen_diag_max():
    r = extreme_eigenpair(np.diag([1.0, 2.0, 3.0]), 'max')
    assert r.converged and abs(r.value - 3) < 1e-8
    assert abs(abs(r.vector[2]) - 1) < 1e-8


def test_eigen_diag_min_records_shift():
    r = extreme_eigenpair(np.diag([1.0, 2.0, 3.0]), 'min')
    assert r.converged and abs(r.value - 1) < 1e-8
    assert abs(abs(r.vector[0]) - 1) < 1e-8
    assert r.shift < 1.0


@pytest.mark.parametrize('mode', ['max', 'min'])
def test_eigen_random_matches_dense(rng, mode):
    H = random_hermitian(rng, 6)
    w = np.linalg.eigvalsh(H)
    r = extreme_eigenpair(H, mode)
    ref = w[-1] if mode == 'max' else w[0]
    assert abs(r.value - ref) < 1e-6
    lo, hi = gershgorin_bounds(H)
    assert np.linalg.norm(H @ r.vector - r.value * r.vector) <= 1e-8 * max(abs(lo), abs(hi))


def test_eigen_singular_psd_min():
    u = np.array([1.0, 1j, 0.0])
    H = np.outer(u, u.conj())
    r = extreme_eigenpair(H, 'min')
    assert r.converged and abs(r.value) < 1e-8


def test_eigen_degenerate_dominant_space():
    H = np.diag([5.0, 5.0, 1.0])
    r = extreme_eigenpair(H, 'max')
    assert abs(r.value - 5) < 1e-8
    assert abs(r.vector[2]) < 1e-6


def test_eigen_nonconvergence_reports_best():
    rng = np.random.default_rng(3)
    H = random_hermitian(rng, 30)
    r = extreme_eigenpair(H, 'max', tol=1e-30, max_iter=2)
    assert not r.converged and r.iterations == 2
    assert np.isfinite(r.value) and abs(np.linalg.norm(r.vector) - 1) < 1e-12


def test_eigen_rejects_non_hermitian(rng):
    with pytest.raises(NumericsError):
        extreme_eigenpair(crandn(rng, 3, 3))


@given(seeds)
def test_eigen_rayleigh_bounds(seed):
    rng = np.random.default_rng(seed)
    H = random_hermitian(rng, 5)
    top = extreme_eigenpair(H, 'max').value
    bottom = extreme_eigenpair(H, 'min').value
    V = crandn(rng, 5, 100)
    V /= np.linalg.norm(V, axis=0)
    q = np.real(np.einsum('ij,ik,kj->j', V.conj(), H, V))
    assert np.all(q <= top + 1e-8) and np.all(q >= bottom - 1e-8)


# -- BlockDiagOperator and block_solve -------------------------------------------

def test_block_solve_identity(rng):
    B = BlockDiagOperator(np.broadcast_to(np.eye(3), (2, 3, 3)))
    r = crandn(rng, 6)
    assert np.allclose(block_solve(B, r), r)


def test_block_solve_diagonal():
    B = BlockDiagOperator(np.stack([2 * np.eye(3), 4 * np.eye(3)]))
    x = block_solve(B, np.ones(6))
    assert np.allclose(x, [0.5] * 3 + [0.25] * 3)


def test_block_solve_singular_names_block():
    blocks = np.stack([np.eye(2), np.zeros((2, 2)), np.eye(2)])
    with pytest.raises(NumericsError, match='block 1'):
        block_solve(BlockDiagOperator(blocks), np.ones(6))


def test_block_weights_and_shift_match_dense(rng):
    blocks = np.stack([random_hermitian(rng, 3, psd=True) for _ in range(3)])
    B = BlockDiagOperator(blocks, 0.5, np.array([1.0, 0.0, 2.0]))
    v = crandn(rng, 9)
    assert np.allclose(B.apply(v), B.to_dense() @ v)
    assert np.allclose(B.scaled(3.0).to_dense(), 3.0 * B.to_dense())
    assert np.allclose((B + B).to_dense(), 2 * B.to_dense())


def test_block_operator_validation():
    with pytest.raises(NumericsError):
        BlockDiagOperator(np.zeros((2, 3, 4)))
    with pytest.raises(NumericsError):
        BlockDiagOperator(np.zeros((2, 3, 3)), -1.0)
    with pytest.raises(NumericsError):
        BlockDiagOperator(np.zeros((2, 3, 3)), 0.0, np.array([1.0, -1.0]))


@given(seeds, st.integers(1, 8), st.integers(1, 16))
def test_block_solve_matches_dense(seed, K, N):
    if K * N > 128:
        N = 128 // K
    rng = np.random.default_rng(seed)
    blocks = crandn(rng, K, N, N) + 3 * N * np.eye(N)
    B = BlockDiagOperator(blocks, 0.25)
    r = crandn(rng, K * N)
    x = block_solve(B, r)
    assert rel(B.apply(x), r) < 1e-8
    assert rel(x, np.linalg.solve(B.to_dense(), r)) < 1e-8
