"""
Robust multi-user downlink precoding from reconstructed CSIT.

With ``M_k = h_hat_k h_hat_k^H + Phi_k`` and ``c_k = sigma_k**2 / P`` the
approximate sum-SE of a stacked precoder ``f`` (KN-vector, unit norm) is

    log2 prod_k (f^H A_k f) / (f^H B_k f),
    A_k = I_K (x) M_k + c_k I,   B_k = A_k - e_k e_k^T (x) M_k.

Generalized power iteration (GPIP) climbs this product of Rayleigh quotients
through the fixed point ``A_bar(f) f = gamma(f) B_bar(f) f``; both weighted
sums are block diagonal, so each step costs K independent N x N solves.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .numerics import (BlockDiagOperator, NumericsError, block_solve,
                       extreme_eigenpair)

__all__ = ['CsitBundle', 'PrecoderSolution', 'SecondOrderCheck',
           'build_operators', 'gamma', 'approx_sum_se', 'stationarity_residual',
           'gpip_step', 'gpip_solve', 'check_second_order', 'tangent_hessian_max',
           'tangent_positive_count',
           'zf_precoder', 'mrt_precoder', 'sum_se_true']

INITS = ('ZF', 'random', 'given')
STATIONARITY_TOL = 1e-4
DENSE_HESSIAN_MAX_DIM = 600
#: Largest realified dimension 2KN at which a rejection by the structured
#: inertia count is re-checked by dense Cholesky.
DENSE_CERTIFY_MAX_DIM = 4096
CERTIFY_RTOL = 1e-10


@dataclass
class CsitBundle:
    """
    Transmitter-side channel knowledge for K users.

    Attributes
    ----------
    h_hat : ndarray, shape (K, N)
    phi : ndarray, shape (K, N, N)
        Error covariances; zeros give the channel-only variant.
    sigma2 : ndarray, shape (K,)
    P : float
    """
    h_hat: np.ndarray
    phi: np.ndarray
    sigma2: np.ndarray
    P: float

    def __post_init__(self):
        self.h_hat = np.atleast_2d(np.asarray(self.h_hat, dtype=complex))
        K, N = self.h_hat.shape
        if K < 1:
            raise ValueError('need at least one user')
        if self.phi is None:
            self.phi = np.zeros((K, N, N), dtype=complex)
        self.phi = np.asarray(self.phi, dtype=complex)
        if self.phi.shape != (K, N, N):
            raise ValueError(f'phi must have shape {(K, N, N)}, got {self.phi.shape}')
        self.sigma2 = np.broadcast_to(np.asarray(self.sigma2, dtype=float), (K,)).copy()
        if np.any(self.sigma2 <= 0):
            raise ValueError('noise powers must be positive')
        if not self.P > 0:
            raise ValueError('transmit power must be positive')
        if not np.allclose(self.phi, np.conj(np.swapaxes(self.phi, 1, 2)),
                           atol=1e-12 * max(np.abs(self.phi).max(initial=0), 1e-300)):
            raise ValueError('every phi_k must be Hermitian')

    @classmethod
    def from_reconstructions(cls, results, sigma2, P, use_phi=True):
        """Bundle a list of :class:`ReconstructionResult`, one per user."""
        h = np.stack([r.h_hat for r in results])
        phi = np.stack([r.phi for r in results]) if use_phi else None
        return cls(h, phi, sigma2, P)

    @property
    def K(self):
        return self.h_hat.shape[0]

    @property
    def N(self):
        return self.h_hat.shape[1]

    @property
    def noise_to_power(self):
        """``c_k = sigma_k**2 / P``."""
        return self.sigma2 / self.P

    @property
    def M(self):
        """``h_hat_k h_hat_k^H + phi_k``, shape (K, N, N)."""
        M = np.einsum('kn,km->knm', self.h_hat, self.h_hat.conj()) + self.phi
        return (M + np.conj(np.swapaxes(M, 1, 2))) / 2

    def without_phi(self):
        return CsitBundle(self.h_hat, None, self.sigma2, self.P)


@dataclass
class PrecoderSolution:
    """
    Stacked unit-norm precoder ``f = [f_1; ...; f_K]``.

    ``gamma`` is the product of Rayleigh quotients at ``f`` (``nan`` when no
    CSIT bundle was available, e.g. a bare ZF precoder).
    """
    f: np.ndarray
    gamma: float
    K: int
    iterations: int = 0
    restarts: int = 0
    second_order_certified: bool = False
    stationarity_residual: float = float('nan')
    converged: bool = True
    polish_iterations: int = 0
    history: list = field(default_factory=list, repr=False)

    @property
    def per_user_f(self):
        return self.f.reshape(self.K, -1)

    @property
    def N(self):
        return self.f.size // self.K


@dataclass
class SecondOrderCheck:
    """
    Outcome of :func:`check_second_order`.

    Unpacks as ``(certified, rho_min, rho_max)``.

    Attributes
    ----------
    certified : bool
        The Riemannian Hessian of ``log gamma`` is negative definite on the
        tangent space of the sphere modulo per-user phase rotations.
    rho_min : float
        Smallest eigenvalue of ``S_A = sum_i A_i f f^H A_i / (f^H A_i f)**2``
        on the full KN-space (0 whenever K < KN).
    rho_max : float
        Largest eigenvalue of the analogous ``S_B``.
    hessian_max : float
        Largest tangent eigenvalue of the Hessian of ``log gamma``; ``nan``
        above the dense size limit, where only its sign is determined.
    diagnostic : str
    """
    certified: bool
    rho_min: float
    rho_max: float
    hessian_max: float = float('nan')
    diagnostic: str = ''

    def __iter__(self):
        return iter((self.certified, self.rho_min, self.rho_max))

    @property
    def eigen_inequality(self):
        """Whether ``rho_min(S_A) > rho_max(S_B)`` holds."""
        return self.rho_min > self.rho_max


def build_operators(bundle):
    """
    Block-diagonal ``A_k`` and ``B_k`` for every user.

    Blocks are broadcast views of ``M_k``; nothing of size (KN)^2 is formed.

    Returns
    -------
    A_ops, B_ops : list of BlockDiagOperator
    """
    K, N = bundle.K, bundle.N
    M = bundle.M
    c = bundle.noise_to_power
    A_ops, B_ops = [], []
    for k in range(K):
        blocks = np.broadcast_to(M[k], (K, N, N))
        A_ops.append(BlockDiagOperator(blocks, c[k]))
        w = np.ones(K)
        w[k] = 0.0
        B_ops.append(BlockDiagOperator(blocks, c[k], w))
    return A_ops, B_ops


def _structure(A_ops, B_ops):
    # recover (M, c) from operators laid out by build_operators
    M = np.stack([op.effective_blocks()[0] if op.block_weights[0] > 0
                  else op.effective_blocks()[-1] for op in A_ops])
    c = np.array([op.scalar_shift for op in A_ops])
    return M, c


def _quad_forms(F, M, c):
    """``a_i = f^H A_i f`` and ``b_i = f^H B_i f`` for F of shape (K, N)."""
    MF = np.einsum('inm,km->ikn', M, F)
    Q = np.einsum('kn,ikn->ik', F.conj(), MF).real
    a = Q.sum(axis=1) + c * np.vdot(F, F).real
    b = a - np.diag(Q)
    return a, b, MF


def gamma(f, A_ops, B_ops):
    """
    ``prod_k (f^H A_k f) / (f^H B_k f)``, accumulated as a sum of logs.

    Invariant under any nonzero complex scaling of ``f``.
    """
    f = np.asarray(f)
    norm = np.linalg.norm(f)
    if norm == 0:
        raise ValueError('gamma is undefined at f = 0')
    f = f / norm
    logs = [np.log(A.quadratic_form(f)) - np.log(B.quadratic_form(f))
            for A, B in zip(A_ops, B_ops)]
    return float(np.exp(np.sum(logs)))


def _log_gamma(F, M, c):
    a, b, _ = _quad_forms(F, M, c)
    return float(np.sum(np.log(a) - np.log(b)))


def approx_sum_se(f, bundle):
    """Approximate sum-SE ``sum_k log2(f^H A_k f / f^H B_k f)`` in bits/s/Hz."""
    F = np.asarray(f).reshape(bundle.K, bundle.N)
    F = F / np.linalg.norm(F)
    return _log_gamma(F, bundle.M, bundle.noise_to_power) / np.log(2)


def _weighted_sums(F, M, c):
    a, b, MF = _quad_forms(F, M, c)
    wa, wb = 1.0 / a, 1.0 / b
    SA = np.tensordot(wa, M, axes=1)
    SB = np.tensordot(wb, M, axes=1)
    return a, b, MF, SA, SB


def stationarity_residual(f, M, c):
    """
    ``||A_bar f - gamma B_bar f|| / ||A_bar f||``.

    Computed with the normalized sums ``sum_i A_i / a_i`` and
    ``sum_i B_i / b_i``, which differ from ``A_bar`` and ``gamma B_bar`` by
    the same positive factor.
    """
    K = M.shape[0]
    F = np.asarray(f).reshape(K, -1)
    a, b, MF, SA, SB = _weighted_sums(F, M, c)
    Af = F @ SA.T + np.sum(c / a) * F
    Bf = F @ SB.T - np.einsum('k,kkn->kn', 1.0 / b, MF) + np.sum(c / b) * F
    return float(np.linalg.norm(Af - Bf) / np.linalg.norm(Af))


def _gpi_image(F, M, c):
    """Unnormalized ``B_bar^{-1} A_bar f`` (up to a positive factor)."""
    a, b, _, SA, SB = _weighted_sums(F, M, c)
    rhs = F @ SA.T + np.sum(c / a) * F
    wb = 1.0 / b
    blocks = SB[None] - wb[:, None, None] * M
    shift = float(np.sum(c * wb))
    try:
        return block_solve(BlockDiagOperator(blocks, shift), rhs.reshape(-1))
    except NumericsError:
        pass
    # start at 1e-12 c and grow tenfold until every block factors, at most
    # up to the scale of the blocks themselves
    reg = 1e-12 * float(np.min(c))
    ceiling = float(np.abs(blocks).max()) + shift
    while reg <= ceiling:
        try:
            x = block_solve(BlockDiagOperator(blocks, shift + reg), rhs.reshape(-1))
        except NumericsError:
            reg *= 10.0
            continue
        warnings.warn(f'singular B_bar block regularized by {reg:.3e}',
                      RuntimeWarning, stacklevel=3)
        return x
    raise NumericsError('B_bar stays singular under regularization')


def gpip_step(f, M, c):
    """
    One generalized power iteration ``normalize(B_bar^{-1} A_bar f)``.

    Parameters
    ----------
    f : ndarray, shape (K*N,)
    M : ndarray, shape (K, N, N)
    c : ndarray, shape (K,)

    Returns
    -------
    ndarray, shape (K*N,)
    """
    K, N = M.shape[0], M.shape[1]
    f = np.asarray(f).reshape(-1)
    x = _gpi_image(f.reshape(K, N) / np.linalg.norm(f), M, c)
    return x / np.linalg.norm(x)


def _ascent_step(f, lg, M, c, safeguard=True, max_halvings=30):
    """
    GPI step with backtracking.

    With unit-norm f the image ``x = B_bar^{-1} A_bar f`` (normalized sums)
    satisfies ``x - f = B_bar^{-1} grad``, an ascent direction of log gamma.
    The full step ``x`` is kept unless it lowers gamma; then the step along
    ``x - f`` is halved until gamma does not decrease.

    Returns
    -------
    f_new, log_gamma_new, step
    """
    K, N = M.shape[0], M.shape[1]
    x = _gpi_image(f.reshape(K, N), M, c)
    d = x - f
    floor = lg - 1e-14 * max(1.0, abs(lg))
    t = 1.0
    for _ in range(max_halvings + 1):
        cand = f + t * d
        cand = cand / np.linalg.norm(cand)
        lg_new = _log_gamma(cand.reshape(K, N), M, c)
        if not safeguard or lg_new >= floor:
            return cand, lg_new, t
        t /= 2
    return f, lg, 0.0


def _init_vector(init, bundle, rng, f0):
    K, N = bundle.K, bundle.N
    if init == 'given':
        if f0 is None:
            raise ValueError("init='given' needs f0")
        f = np.asarray(f0, dtype=complex).reshape(-1)
        if f.size != K * N:
            raise ValueError(f'f0 has length {f.size}, expected {K * N}')
    elif init == 'ZF':
        try:
            f = zf_precoder(bundle.h_hat).f
        except ValueError:
            warnings.warn('ZF initialization infeasible; using matched filters',
                          RuntimeWarning, stacklevel=3)
            f = mrt_precoder(bundle.h_hat).f
    else:
        f = rng.standard_normal((K * N, 2)) @ np.array([1.0, 1j])
    norm = np.linalg.norm(f)
    if norm == 0:
        raise ValueError('initial precoder is zero')
    return f / norm


def _iterate(f, M, c, epsilon, max_iter, callback=None, safeguard=True):
    K = M.shape[0]
    lg = _log_gamma(f.reshape(K, -1), M, c)
    history = [np.exp(lg)]
    for t in range(1, max_iter + 1):
        f, lg_new, _ = _ascent_step(f, lg, M, c, safeguard)
        history.append(np.exp(lg_new))
        if callback is not None:
            callback(t, f, history[-1])
        # |gamma_prev - gamma| / gamma_prev, evaluated in the log domain
        rel = abs(np.expm1(lg_new - lg))
        lg = lg_new
        if rel < epsilon:
            return f, t, True, history
    return f, max_iter, False, history


def _newton_step(f, lg, M, c):
    """Tangent-space Newton step on log gamma; None unless it is an ascent."""
    K = M.shape[0]
    try:
        d = _TangentHessian(f, M, c).newton_direction()
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(d)):
        return None
    cand = f + d
    cand = cand / np.linalg.norm(cand)
    lg_new = _log_gamma(cand.reshape(K, -1), M, c)
    if lg_new < lg - 1e-14 * max(1.0, abs(lg)):
        return None
    return cand, lg_new


def _polish(f, M, c, tol, max_steps, safeguard=True, newton=True):
    """Drive the stationarity residual below ``tol``: Newton steps while they
    ascend, generalized power iterations otherwise."""
    K = M.shape[0]
    lg = _log_gamma(f.reshape(K, -1), M, c)
    res = stationarity_residual(f, M, c)
    steps = 0
    while res > tol and steps < max_steps:
        step = _newton_step(f, lg, M, c) if newton else None
        if step is not None:
            f_new, lg_new = step
            res_new = stationarity_residual(f_new, M, c)
            if res_new < res:
                f, lg, res = f_new, lg_new, res_new
                steps += 1
                continue
        f, lg, t = _ascent_step(f, lg, M, c, safeguard)
        res = stationarity_residual(f, M, c)
        steps += 1
        if t == 0.0:
            break
    return f, res, steps


def gpip_solve(bundle, epsilon=0.01, max_iter=100, max_restarts=5, init='ZF',
               f0=None, seed=None, certify=True, polish_tol=STATIONARITY_TOL,
               max_polish=500, safeguard=True, callback=None):
    """
    Generalized power iteration precoding.

    Iterates until the relative change of gamma drops below ``epsilon``.
    With ``certify`` the iterate is then refined until the stationarity
    residual is at most ``polish_tol`` and tested by
    :func:`check_second_order`; failures restart from a random unit vector,
    at most ``max_restarts`` times.

    Parameters
    ----------
    bundle : CsitBundle
    epsilon : float
    max_iter : int
        Cap on main iterations per start.
    max_restarts : int
    init : {'ZF', 'random', 'given'}
    f0 : array_like, optional
        Starting vector for ``init='given'``.
    seed : optional
        Seed of the random restarts (and of ``init='random'``).
    certify : bool
        Skip refinement and second-order testing when False; the solution
        then reports only the iteration count to the ``epsilon`` rule.
    polish_tol, max_polish : float, int
        Stationarity target of the refinement stage and its step cap.
    safeguard : bool
        Backtrack steps that lower gamma (see :func:`_ascent_step`). With
        False every step is the bare ``normalize(B_bar^{-1} A_bar f)``.
    callback : callable, optional
        ``callback(t, f, gamma)`` after every main iteration of every start.

    Returns
    -------
    PrecoderSolution
        The first certified solution, or the best-gamma uncertified one
        after exhausting restarts.
    """
    if not epsilon > 0:
        raise ValueError('epsilon must be positive')
    if init not in INITS:
        raise ValueError(f'init must be one of {INITS}')
    rng = np.random.default_rng(seed)
    M = bundle.M
    # work in units of the mean noise-to-power ratio
    scale = float(np.mean(bundle.noise_to_power))
    M, c = M / scale, bundle.noise_to_power / scale
    K = bundle.K

    best = None
    f = _init_vector(init, bundle, rng, f0)
    for attempt in range(max_restarts + 1):
        if attempt > 0:
            f = _init_vector('random', bundle, rng, None)
        f, iters, converged, history = _iterate(f, M, c, epsilon, max_iter,
                                                callback, safeguard)
        sol = PrecoderSolution(f, float(np.exp(_log_gamma(f.reshape(K, -1), M, c))),
                               K, iters, attempt, False, float('nan'), converged,
                               0, history)
        if not certify:
            sol.stationarity_residual = stationarity_residual(f, M, c)
            return sol
        f, res, steps = _polish(f, M, c, polish_tol, max_polish, safeguard)
        sol.f = f
        sol.gamma = float(np.exp(_log_gamma(f.reshape(K, -1), M, c)))
        sol.stationarity_residual = res
        sol.polish_iterations = steps
        if res <= polish_tol:
            sol.second_order_certified = _second_order(f, M, c).certified
        if sol.second_order_certified:
            return sol
        if best is None or sol.gamma > best.gamma:
            best = sol
    return best


def _hessian_parts(f, M, c):
    K, N = M.shape[0], M.shape[1]
    F = f.reshape(K, N)
    a, b, MF, SA, SB = _weighted_sums(F, M, c)
    AF = MF + c[:, None, None] * F[None]                 # A_i f, (K, K, N)
    BF = AF.copy()
    BF[np.arange(K), np.arange(K)] -= MF[np.arange(K), np.arange(K)]
    return F, a, b, MF, SA, SB, AF, BF


def _hessian_matvec(parts, c, M):
    """Real-linear Hessian of ``log gamma`` at f, applied to V (K, N, m)."""
    F, a, b, MF, SA, SB, AF, BF = parts

    def apply(V):
        K, N, m = V.shape
        # A_i v summed with weights 1/a_i: same operator on every block
        Av = np.matmul(SA, V) + np.sum(c / a) * V
        Bv = (np.matmul(SB, V) - np.matmul(M / b[:, None, None], V)
              + np.sum(c / b) * V)
        flat = V.reshape(K * N, m)
        alpha = (AF.reshape(K, K * N).conj() @ flat).real    # Re f^H A_i v
        beta = (BF.reshape(K, K * N).conj() @ flat).real
        low = (AF.reshape(K, K * N).T @ (alpha / a[:, None] ** 2)
               - BF.reshape(K, K * N).T @ (beta / b[:, None] ** 2))
        out = 2 * Av - 2 * Bv - 4 * low.reshape(K, N, m)
        return out
    return apply


def _tangent_basis(F):
    """Orthonormal (real inner product) directions gamma is flat along:
    the radial direction and one phase rotation per active user."""
    K, N = F.shape
    vecs = [F.reshape(-1) / np.linalg.norm(F)]
    for k in range(K):
        nk = np.linalg.norm(F[k])
        if nk > 1e-14:
            v = np.zeros((K, N), dtype=complex)
            v[k] = 1j * F[k] / nk
            vecs.append(v.reshape(-1))
    Q = np.stack(vecs, axis=1)
    return np.concatenate([Q.real, Q.imag])                # (2KN, r)


def _hessian_scale(parts, M, c):
    _, a, b, _, _, _, AF, BF = parts
    normM = np.linalg.norm(M, axis=(1, 2)) + c
    low_rank = (4 * np.sum(np.linalg.norm(AF, axis=(1, 2)) ** 2 / a ** 2)
                + 4 * np.sum(np.linalg.norm(BF, axis=(1, 2)) ** 2 / b ** 2))
    return float(2 * np.sum(normM / a) + 2 * np.sum(normM / b) + low_rank)


def _dense_tangent_hessian(f, M, c):
    """
    Realified tangent Hessian of ``log gamma`` as a dense (2KN, 2KN) matrix.
    The removed directions (scale and per-user phase) carry ``-scale``.
    Also returns the Frobenius norm of the tangent part.
    """
    K, N = M.shape[0], M.shape[1]
    n = K * N
    parts = _hessian_parts(np.asarray(f).reshape(-1), M, c)
    apply = _hessian_matvec(parts, c, M)
    Qr = _tangent_basis(parts[0])
    shift = _hessian_scale(parts, M, c)
    X = np.eye(2 * n)
    Xp = X - Qr @ (Qr.T @ X)
    HV = apply((Xp[:n] + 1j * Xp[n:]).reshape(K, N, -1)).reshape(n, -1)
    H = np.concatenate([HV.real, HV.imag])
    H = H - Qr @ (Qr.T @ H)
    tangent_norm = float(np.linalg.norm(H))
    H = H - shift * (X - Xp)
    return (H + H.T) / 2, tangent_norm


def tangent_hessian_max(f, M, c):
    """
    Largest eigenvalue of the Hessian of ``log gamma`` restricted to
    directions that change gamma to first order neither by scale nor by
    per-user phase. Dense; meant for small problems and tests.
    """
    H, _ = _dense_tangent_hessian(f, M, c)
    return float(np.linalg.eigvalsh(H)[-1])


def _dense_negative_definite(f, M, c):
    """
    Negative definiteness of the tangent Hessian by a Cholesky factorization
    of ``-H - tau I``. The margin ``tau = dim * eps * ||H_t||_F`` is the
    backward error of the factorization, so the test does not depend on a
    (possibly very loose) a priori bound of the Hessian.
    """
    H, tangent_norm = _dense_tangent_hessian(f, M, c)
    tau = H.shape[0] * np.finfo(float).eps * tangent_norm
    G = -H - tau * np.eye(H.shape[0])
    try:
        np.linalg.cholesky(G)
    except np.linalg.LinAlgError:
        return False
    return True


class _TangentHessian:
    """
    Hessian of ``log gamma`` at unit-norm f on the tangent space, kept in
    structured form: the realified Hessian is block diagonal (K Hermitian
    N x N blocks ``D``) plus a rank-2K term, and the tangent projection (with
    the removed directions sent to ``-scale``) adds rank 2r. All low-rank
    pieces are gathered as ``Y F Y^T`` with a small real ``F``.
    """

    def __init__(self, f, M, c):
        K, N = M.shape[0], M.shape[1]
        n = K * N
        self.K, self.N, self.n = K, N, n
        parts = _hessian_parts(np.asarray(f).reshape(-1), M, c)
        F, a, b, MF, SA, SB, AF, BF = parts
        eye = np.eye(N)
        self.D = (2 * (SA[None] + np.sum(c / a) * eye)
                  - 2 * (SB[None] - M / b[:, None, None] + np.sum(c / b) * eye))
        self.lam, self.U = np.linalg.eigh(self.D)
        self.scale = _hessian_scale(parts, M, c)
        # ascent direction of log gamma (real gradient as a complex vector)
        self.grad = 2 * (np.einsum('i,ikn->kn', 1 / a, AF)
                         - np.einsum('i,ikn->kn', 1 / b, BF)).reshape(-1)
        Z = np.concatenate([AF.reshape(K, n), BF.reshape(K, n)]).T
        Cd = np.concatenate([-4 / a ** 2, 4 / b ** 2])
        Qr = _tangent_basis(F)
        r = Qr.shape[1]
        Qc = Qr[:n] + 1j * Qr[n:]
        self.Z, self.Cd, self.Qc, self.r = Z, Cd, Qc, r
        HQ = self.apply_full(Qc)
        X = np.real(Qc.conj().T @ HQ) - self.scale * np.eye(r)
        self.Y = np.concatenate([Z, Qc, HQ], axis=1)
        m, k2 = self.Y.shape[1], 2 * K
        Finv = np.zeros((m, m))
        Finv[:k2, :k2] = np.diag(1 / Cd)
        Finv[k2:k2 + r, k2 + r:] = -np.eye(r)
        Finv[k2 + r:, k2:k2 + r] = -np.eye(r)
        Finv[k2 + r:, k2 + r:] = -X
        self.Finv = Finv

    def apply_full(self, V):
        """Unprojected Hessian on the columns of V (complex, shape (n, m))."""
        K, N, n = self.K, self.N, self.n
        out = np.matmul(self.D, V.reshape(K, N, -1)).reshape(n, -1)
        return out + self.Z @ (self.Cd[:, None] * np.real(self.Z.conj().T @ V))

    def _solve_blocks(self, V, tau):
        K, N, n = self.K, self.N, self.n
        W = np.einsum('knm,knj->kmj', self.U.conj(), V.reshape(K, N, -1))
        W = W / (self.lam - tau)[:, :, None]
        return np.einsum('knm,kmj->knj', self.U, W).reshape(n, -1)

    def _safe_tau(self, tau):
        for _ in range(20):
            if np.min(np.abs(self.lam - tau)) > 1e-9 * self.scale:
                break
            tau -= 1e-8 * self.scale
        return tau

    def positive_count(self, tau):
        """
        Eigenvalues above ``tau``, by inertia additivity over the bordered
        matrix ``[[D - tau, Y], [Y^T, -F^{-1}]]``:

            n_+(D - tau + Y F Y^T) = n_+(D - tau) + n_+(S) - n_+(-F^{-1}),
            S = -F^{-1} - Y^T (D - tau)^{-1} Y.
        """
        tau = self._safe_tau(tau)
        S = -self.Finv - np.real(self.Y.conj().T @ self._solve_blocks(self.Y, tau))
        n_pos_S = int(np.sum(np.linalg.eigvalsh((S + S.T) / 2) > 0))
        # -F^{-1}: K positive entries from -C^{-1}; [[0, I], [I, X]] has r
        return 2 * int(np.sum(self.lam > tau)) + n_pos_S - (self.K + self.r)

    def newton_direction(self):
        """Solve ``H_t d = -grad`` by the Woodbury identity."""
        tau = self._safe_tau(0.0)
        g = -self.grad[:, None]
        Eg = self._solve_blocks(g, tau)
        EY = self._solve_blocks(self.Y, tau)
        S = self.Finv + np.real(self.Y.conj().T @ EY)
        coef = np.linalg.solve(S, np.real(self.Y.conj().T @ Eg))
        return (Eg - EY @ coef).reshape(-1)


def tangent_positive_count(f, M, c, tau):
    """
    Number of eigenvalues above ``tau`` of the tangent Hessian of
    ``log gamma``; costs K N x N eigendecompositions and one small
    symmetric eigenproblem.
    """
    return _TangentHessian(f, M, c).positive_count(tau)


def _rayleigh_outer_extremes(U, mode):
    """Extreme eigenvalue of ``U U^H`` through the K x K Gram matrix."""
    G = U.conj().T @ U
    G = (G + G.conj().T) / 2
    res = extreme_eigenpair(G, mode)
    value = res.value
    if mode == 'min' and U.shape[0] > U.shape[1]:
        value = 0.0                                         # rank of U U^H <= K
    return max(value, 0.0) if mode == 'min' else value, res.converged


def _second_order(f, M, c):
    parts = _hessian_parts(np.asarray(f).reshape(-1), M, c)
    _, a, b, _, _, _, AF, BF = parts
    K = M.shape[0]
    UA = (AF / a[:, None, None]).reshape(K, -1).T            # columns A_i f / a_i
    UB = (BF / b[:, None, None]).reshape(K, -1).T
    rho_min, ok_a = _rayleigh_outer_extremes(UA, 'min')
    rho_max, ok_b = _rayleigh_outer_extremes(UB, 'max')
    dim = 2 * np.asarray(f).size
    notes = []
    th = _TangentHessian(f, M, c)
    n_pos = th.positive_count(-CERTIFY_RTOL * th.scale)
    certified = n_pos == 0
    if not certified and dim <= DENSE_CERTIFY_MAX_DIM:
        # the structured count loses sign accuracy on badly scaled problems;
        # a rejection is confirmed by a backward-stable dense test
        certified = _dense_negative_definite(f, M, c)
        if not certified:
            notes.append('tangent Hessian is not negative definite')
    elif n_pos:
        notes.append(f'{n_pos} ascent direction(s) in the tangent space')
    hmax = (tangent_hessian_max(f, M, c) if dim <= DENSE_HESSIAN_MAX_DIM
            else float('nan'))
    if not (ok_a and ok_b):
        notes.append('power iteration did not converge')
    return SecondOrderCheck(certified, float(rho_min), float(rho_max),
                            float(hmax), '; '.join(notes))


def check_second_order(f_star, A_ops, B_ops):
    """
    Second-order test of a stationary point of gamma.

    Certification requires the Hessian of ``log gamma`` to be negative
    definite on the tangent space of the unit sphere with the K per-user
    phase rotations (exact invariances of gamma) removed. The eigenvalue
    pair ``rho_min(S_A)``, ``rho_max(S_B)`` is reported alongside; because
    ``S_A`` has rank at most K it is singular for N >= 2, so the bare
    inequality ``rho_min > rho_max`` cannot hold there and is exposed only
    as :attr:`SecondOrderCheck.eigen_inequality`.

    Parameters
    ----------
    f_star : ndarray, shape (K*N,)
    A_ops, B_ops : list of BlockDiagOperator
        As produced by :func:`build_operators`.

    Returns
    -------
    SecondOrderCheck
    """
    f_star = np.asarray(f_star, dtype=complex).reshape(-1)
    if abs(np.linalg.norm(f_star) - 1.0) > 1e-8:
        raise ValueError('f_star must have unit norm')
    M, c = _structure(A_ops, B_ops)
    return _second_order(f_star, M, c)


def zf_precoder(h, power_alloc='equal', bundle=None):
    """
    Equal-power zero-forcing precoder.

    Parameters
    ----------
    h : ndarray, shape (K, N)
        Channels used for the design (true or reconstructed).
    power_alloc : {'equal'}
    bundle : CsitBundle, optional
        When given, ``gamma`` of the solution is evaluated on it.
    """
    if power_alloc != 'equal':
        raise ValueError("only power_alloc='equal' is supported")
    Hm = np.atleast_2d(np.asarray(h, dtype=complex)).T          # (N, K)
    N, K = Hm.shape
    if K > N:
        raise ValueError(f'ZF needs K <= N (K={K}, N={N}); drop users first')
    s = np.linalg.svd(Hm, compute_uv=False)
    if s[-1] <= 1e-10 * s[0]:
        raise ValueError('stacked channel matrix is rank deficient; drop users '
                         'with collinear channels')
    W = Hm @ np.linalg.inv(Hm.conj().T @ Hm)
    W = W / np.linalg.norm(W, axis=0) / np.sqrt(K)
    return _bare_solution(W.T.reshape(-1), K, bundle)


def mrt_precoder(h, bundle=None):
    """Equal-power matched filters ``h_k / ||h_k||``."""
    Hm = np.atleast_2d(np.asarray(h, dtype=complex))
    K = Hm.shape[0]
    W = Hm / np.linalg.norm(Hm, axis=1, keepdims=True) / np.sqrt(K)
    return _bare_solution(W.reshape(-1), K, bundle)


def _bare_solution(f, K, bundle):
    g = float('nan')
    if bundle is not None:
        g = float(np.exp(_log_gamma(f.reshape(K, -1), bundle.M,
                                    bundle.noise_to_power)))
    return PrecoderSolution(f, g, K)


def sum_se_true(f, true_h, sigma2, P):
    """
    Sum spectral efficiency (bits/s/Hz) of precoder ``f`` on the true
    channels.

    Parameters
    ----------
    f : PrecoderSolution or ndarray, shape (K*N,)
    true_h : ndarray, shape (K, N)
    sigma2 : float or ndarray, shape (K,)
    P : float
    """
    H = np.atleast_2d(np.asarray(true_h, dtype=complex))
    K = H.shape[0]
    F = (f.per_user_f if isinstance(f, PrecoderSolution)
         else np.asarray(f).reshape(K, -1))
    G = np.abs(H.conj() @ F.T) ** 2                              # |h_k^H f_i|^2
    signal = np.diag(G)
    interference = G.sum(axis=1) - signal
    noise = np.broadcast_to(np.asarray(sigma2, dtype=float), (K,)) / P
    return float(np.sum(np.log2(1 + signal / (interference + noise))))
