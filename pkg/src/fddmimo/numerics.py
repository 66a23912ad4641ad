"""
Complex linear-algebra kernels.

Pseudo-inverse with a relative singular-value cutoff, extreme eigenpairs of
Hermitian matrices by (shifted) inverse power iteration, and a block-diagonal
operator whose solves cost K independent N x N factorizations.
"""

import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg as sla

__all__ = ['NumericsError', 'EigenResult', 'BlockDiagOperator', 'pinv',
           'is_hermitian', 'is_psd', 'gershgorin_bounds',
           'extreme_eigenpair', 'block_solve']

HERMITIAN_ATOL = 1e-12
PSD_RTOL = 1e-9


class NumericsError(ValueError):
    """Invalid input to a numerics kernel (NaN/Inf, singular block, ...)."""


def _check_finite(M, name='matrix'):
    M = np.asarray(M)
    if not np.all(np.isfinite(M)):
        raise NumericsError(f'{name} contains NaN or Inf entries')
    return M


def pinv(M, tol=1e-10):
    """
    Moore-Penrose pseudo-inverse via the SVD.

    Parameters
    ----------
    M : array_like, shape (m, n)
        Complex or real matrix.
    tol : float
        Singular values below ``tol * s_max`` are treated as zero.

    Returns
    -------
    ndarray, shape (n, m)
    """
    M = _check_finite(np.atleast_2d(M))
    if not 0.0 < tol < 1.0:
        raise NumericsError(f'tol must lie in (0, 1), got {tol}')
    m, n = M.shape
    U, s, Vh = np.linalg.svd(M, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((n, m), dtype=np.result_type(M.dtype, np.float64))
    keep = s > tol * s[0]
    # V diag(1/s) U^H restricted to the retained singular triplets
    return (Vh[keep].conj().T / s[keep]) @ U[:, keep].conj().T


def is_hermitian(H, atol=HERMITIAN_ATOL):
    H = np.asarray(H)
    return H.ndim == 2 and H.shape[0] == H.shape[1] and \
        np.allclose(H, H.conj().T, rtol=0.0, atol=atol)


def is_psd(H, rtol=PSD_RTOL):
    """True if ``H`` is Hermitian and ``v^H H v >= -rtol ||v||^2`` for all v."""
    H = np.asarray(H)
    if not is_hermitian(H, atol=max(HERMITIAN_ATOL,
                                    HERMITIAN_ATOL * np.abs(H).max(initial=0))):
        return False
    return np.linalg.eigvalsh((H + H.conj().T) / 2)[0] >= -rtol


def gershgorin_bounds(H):
    """Rigorous (lower, upper) bounds on the spectrum of a Hermitian matrix."""
    H = np.asarray(H)
    d = np.real(np.diag(H))
    radius = np.abs(H).sum(axis=1) - np.abs(np.diag(H))
    return float(np.min(d - radius)), float(np.max(d + radius))


class EigenResult(NamedTuple):
    value: float
    vector: np.ndarray
    converged: bool
    iterations: int
    residual: float
    shift: float


def extreme_eigenpair(H, mode='max', tol=1e-8, max_iter=None, v0=None):
    """
    Largest or smallest eigenpair of a Hermitian matrix.

    Uses inverse power iteration with a fixed shift placed just outside the
    Gershgorin interval, so the iteration is attracted to the extreme
    eigenvalue on the requested side. If the shifted matrix is numerically
    singular (the bound is attained, e.g. a diagonal matrix) the shift is
    pushed out by ``1e-12 * trace / dim``.

    Parameters
    ----------
    H : array_like, shape (n, n)
        Hermitian matrix.
    mode : {'max', 'min'}
    tol : float
        Convergence when ``||H v - lam v|| <= tol * ||H||_2`` (spectral norm
        bounded by the Gershgorin radius).
    max_iter : int, optional
        Defaults to ``max(10 * n, 100)``.
    v0 : array_like, optional
        Starting vector. Defaults to a fixed pseudo-random vector.

    Returns
    -------
    EigenResult
        ``converged`` is False when ``max_iter`` is exhausted; ``vector`` is
        then the best iterate seen.

    Notes
    -----
    With a degenerate extreme eigenvalue the iterate converges to some unit
    vector of the corresponding eigenspace.
    """
    H = _check_finite(np.atleast_2d(H), 'H')
    n = H.shape[0]
    if H.shape != (n, n):
        raise NumericsError(f'H must be square, got {H.shape}')
    if not is_hermitian(H, atol=max(HERMITIAN_ATOL,
                                    1e-12 * np.abs(H).max(initial=0))):
        raise NumericsError('H is not Hermitian')
    if mode not in ('max', 'min'):
        raise ValueError(f"mode must be 'max' or 'min', got {mode!r}")
    if max_iter is None:
        max_iter = max(10 * n, 100)

    lo, hi = gershgorin_bounds(H)
    scale = max(abs(lo), abs(hi))
    if scale == 0.0:
        v = np.zeros(n, dtype=complex)
        v[0] = 1.0
        return EigenResult(0.0, v, True, 0, 0.0, 0.0)

    margin = max(1e-12 * abs(np.real(np.trace(H))) / n, 1e-14 * scale)
    shift = hi + margin if mode == 'max' else lo - margin
    eye = np.eye(n)
    for _ in range(60):
        try:
            with warnings.catch_warnings():
                warnings.simplefilter('ignore', sla.LinAlgWarning)
                lu = sla.lu_factor(H - shift * eye, check_finite=False)
        except (sla.LinAlgError, ValueError):
            lu = None
        if lu is not None and np.min(np.abs(np.diag(lu[0]))) > 1e-14 * scale:
            break
        margin *= 10.0
        shift = hi + margin if mode == 'max' else lo - margin

    if v0 is None:
        v = np.array([1.0, 1j]) @ np.random.default_rng(n).standard_normal((2, n))
    else:
        v = np.asarray(v0, dtype=complex).copy()
    v = v / np.linalg.norm(v)

    best = (np.inf, 0.0, v)
    for it in range(1, max_iter + 1):
        w = sla.lu_solve(lu, v, check_finite=False)
        v = w / np.linalg.norm(w)
        Hv = H @ v
        lam = float(np.real(np.vdot(v, Hv)))
        res = float(np.linalg.norm(Hv - lam * v))
        if res < best[0]:
            best = (res, lam, v)
        if res <= tol * scale:
            return EigenResult(lam, v, True, it, res, shift)
    res, lam, v = best
    return EigenResult(lam, v, False, max_iter, res, shift)


@dataclass
class BlockDiagOperator:
    """
    ``blockdiag(w[0] blocks[0], ..., w[K-1] blocks[K-1]) + scalar_shift * I``.

    Parameters
    ----------
    blocks : ndarray, shape (K, N, N)
        May be a read-only broadcast view when every block is the same.
    scalar_shift : float
    block_weights : ndarray, shape (K,), optional
        Nonnegative per-block multipliers (default all ones). A zero weight
        removes a block without copying the stack.
    """
    blocks: np.ndarray
    scalar_shift: float = 0.0
    block_weights: np.ndarray = None

    def __post_init__(self):
        self.blocks = np.asarray(self.blocks)
        if self.blocks.ndim != 3 or self.blocks.shape[1] != self.blocks.shape[2]:
            raise NumericsError(
                f'blocks must have shape (K, N, N), got {self.blocks.shape}')
        if self.scalar_shift < 0:
            raise NumericsError('scalar_shift must be nonnegative')
        if self.block_weights is None:
            self.block_weights = np.ones(self.blocks.shape[0])
        self.block_weights = np.asarray(self.block_weights, dtype=float)
        if self.block_weights.shape != (self.blocks.shape[0],):
            raise NumericsError('block_weights must have one entry per block')
        if np.any(self.block_weights < 0):
            raise NumericsError('block_weights must be nonnegative')

    @property
    def block_count(self):
        return self.blocks.shape[0]

    @property
    def block_size(self):
        return self.blocks.shape[1]

    @property
    def dim(self):
        return self.block_count * self.block_size

    def apply(self, v):
        V = np.asarray(v).reshape(self.block_count, self.block_size)
        out = np.einsum('kij,kj->ki', self.blocks, V)
        out = self.block_weights[:, None] * out + self.scalar_shift * V
        return out.reshape(-1)

    def quadratic_form(self, v):
        """Real part of ``v^H B v``."""
        return float(np.real(np.vdot(v, self.apply(v))))

    def effective_blocks(self):
        """Weighted blocks without the scalar shift, shape (K, N, N)."""
        return self.block_weights[:, None, None] * self.blocks

    def to_dense(self):
        D = sla.block_diag(*self.effective_blocks()).astype(complex)
        D[np.diag_indices_from(D)] += self.scalar_shift
        return D

    def shifted_blocks(self):
        return self.effective_blocks() + self.scalar_shift * np.eye(self.block_size)

    def condition_numbers(self):
        return np.linalg.cond(self.shifted_blocks())

    def __add__(self, other):
        return BlockDiagOperator(self.effective_blocks() + other.effective_blocks(),
                                 self.scalar_shift + other.scalar_shift)

    def scaled(self, c):
        if c < 0:
            raise NumericsError('scale factor must be nonnegative')
        return BlockDiagOperator(self.blocks, c * self.scalar_shift,
                                 c * self.block_weights)


def block_solve(B, rhs):
    """
    Solve ``B x = rhs`` as K independent N x N systems.

    Raises
    ------
    NumericsError
        If a block (including the scalar shift) is singular; the message
        names the first offending block index.
    """
    rhs = _check_finite(rhs, 'rhs')
    if rhs.size != B.dim:
        raise NumericsError(f'rhs has length {rhs.size}, expected {B.dim}')
    blocks = B.shifted_blocks()
    R = rhs.reshape(B.block_count, B.block_size)
    out = np.empty(R.shape, dtype=np.result_type(blocks.dtype, R.dtype))
    for k in range(B.block_count):
        try:
            with warnings.catch_warnings():
                warnings.simplefilter('ignore', sla.LinAlgWarning)
                lu, piv = sla.lu_factor(blocks[k], check_finite=False)
        except (sla.LinAlgError, ValueError) as exc:
            raise NumericsError(f'block {k} is singular') from exc
        pivots = np.abs(np.diag(lu))
        if pivots.min() <= np.finfo(float).eps * max(pivots.max(), 1e-300) * B.block_size:
            raise NumericsError(f'block {k} is singular')
        out[k] = sla.lu_solve((lu, piv), R[k], check_finite=False)
    return out.reshape(-1)
