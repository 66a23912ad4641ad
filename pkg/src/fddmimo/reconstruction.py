"""
Downlink channel reconstruction from the uplink channel and path geometry.

The DL channel is rebuilt path by path: the UL path gains are recovered by
projecting ``h_ul`` onto the UL steering matrix, carried to the DL carrier,
and re-synthesized on the DL steering matrix. Two estimators are provided:

* ``'MMSE'``: raises each normalized UL gain to the fractional power
  ``kappa = lambda_ul / lambda_dl`` and scales by ``eta``;
* ``'L-MMSE'``: scales the UL gains by ``Re(eta)``; needs no path powers.

Their error covariances have closed forms ``(1 - q) A_dl Sigma A_dl^H`` with
``q = |eta|**2`` or ``Re(eta)**2``.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .channel import path_gains, steering_matrix
from .numerics import pinv

__all__ = ['MMSE', 'LMMSE', 'KINDS', 'RankDeficientError',
           'ReconstructionResult', 'eta', 'eta_quadrature', 'fractional_power',
           'reconstruct', 'reconstruct_mmse', 'reconstruct_lmmse',
           'error_covariance', 'asymptotic_mse', 'delta_mse',
           'outer_approx', 'delta_error', 'delta_error_theory', 'is_resolvable']

MMSE = 'MMSE'
LMMSE = 'L-MMSE'
KINDS = (MMSE, LMMSE)

KAPPA_ONE_ATOL = 1e-9
RANK_TOL = 1e-10


class RankDeficientError(ValueError):
    """UL steering matrix is (numerically) rank deficient."""


@dataclass
class ReconstructionResult:
    """
    Attributes
    ----------
    h_hat : ndarray, shape (N,)
        Reconstructed DL channel.
    phi : ndarray, shape (N, N)
        Error covariance, Hermitian PSD.
    kind : str
        ``'MMSE'`` or ``'L-MMSE'``.
    """
    h_hat: np.ndarray
    phi: np.ndarray
    kind: str


def eta(kappa):
    """
    UL/DL path-gain correlation constant for the wavelength ratio ``kappa``.

    ``(sin(2 pi k) - 2j sin(pi k)**2) / (2 pi (k - 1))``, continued by its
    limit 1 at ``k = 1``.
    """
    if kappa <= 0:
        raise ValueError(f'kappa must be positive, got {kappa}')
    if abs(kappa - 1.0) < KAPPA_ONE_ATOL:
        return 1.0 + 0.0j
    return complex(np.sin(2 * np.pi * kappa)
                   - 2j * np.sin(np.pi * kappa) ** 2) / (2 * np.pi * (kappa - 1))


def eta_quadrature(kappa, **quad_kw):
    """``(1 / 2 pi) int_0^{2 pi} exp(-j (kappa - 1) x) dx`` by adaptive
    quadrature; an independent route to :func:`eta`."""
    from scipy.integrate import quad

    w = kappa - 1.0
    re = quad(lambda x: np.cos(w * x), 0, 2 * np.pi, **quad_kw)[0]
    im = quad(lambda x: -np.sin(w * x), 0, 2 * np.pi, **quad_kw)[0]
    return complex(re, im) / (2 * np.pi)


def fractional_power(u, kappa):
    """Elementwise ``|u|**kappa * exp(1j * kappa * arg(u))`` with ``arg`` on
    the branch [0, 2 pi)."""
    u = np.asarray(u)
    arg = np.mod(np.angle(u), 2 * np.pi)
    return np.abs(u) ** kappa * np.exp(1j * kappa * arg)


def is_resolvable(geo, cfg):
    """True when the UL steering matrix of the live paths has full column
    rank (relative singular value gap above ``RANK_TOL``)."""
    theta = geo.theta[geo.b > 0]
    if theta.size > cfg.N:
        return False
    if theta.size == 0:
        return True
    s = np.linalg.svd(steering_matrix(theta, cfg.lambda_ul, cfg), compute_uv=False)
    return bool(s[-1] > RANK_TOL * s[0])


def _steering_pair(geo, cfg):
    A_ul = steering_matrix(geo.theta, cfg.lambda_ul, cfg)
    A_dl = steering_matrix(geo.theta, cfg.lambda_dl, cfg)
    s = np.linalg.svd(A_ul, compute_uv=False)
    if A_ul.shape[1] > A_ul.shape[0] or s[-1] <= RANK_TOL * s[0]:
        raise RankDeficientError(
            f'UL steering matrix ({A_ul.shape[0]}x{A_ul.shape[1]}) is rank '
            'deficient; check that the path angles are separated and L <= N')
    return A_ul, A_dl


def _drop_dead_paths(geo):
    alive = geo.b > 0
    if alive.all():
        return geo
    if not alive.any():
        raise ValueError('every path has zero attenuation')
    warnings.warn(f'dropping {np.count_nonzero(~alive)} zero-attenuation '
                  'path(s)', RuntimeWarning, stacklevel=3)
    return geo.replace(theta=geo.theta[alive], b=geo.b[alive],
                       r=geo.r[alive], phi=geo.phi[alive])


def error_covariance(geo, cfg, kind=LMMSE):
    """``(1 - q) A_dl diag(b**2) A_dl^H``."""
    if kind not in KINDS:
        raise ValueError(f'unknown estimator kind {kind!r}')
    A_dl = steering_matrix(geo.theta, cfg.lambda_dl, cfg)
    Phi = asymptotic_mse(cfg.kappa, kind) * (A_dl * geo.b ** 2) @ A_dl.conj().T
    return (Phi + Phi.conj().T) / 2


def reconstruct_mmse(h_ul, geo, cfg, renormalize=False):
    """
    Nonlinear MMSE reconstruction of the DL channel.

    ``h_hat = eta A_dl Sigma^{1/2} (Sigma^{-1/2} pinv(A_ul) h_ul)^kappa`` with
    the elementwise power of :func:`fractional_power`.

    Parameters
    ----------
    h_ul : ndarray, shape (N,)
    geo : UserGeometry
        Angles and attenuations are used; ``r`` and ``phi`` are not.
    cfg : ArrayConfig
    renormalize : bool
        Force the normalized UL gains to unit modulus before exponentiation.
        Use this when the geometry is itself an estimate.
    """
    geo = _drop_dead_paths(geo)
    A_ul, A_dl = _steering_pair(geo, cfg)
    kappa = cfg.kappa
    if abs(kappa - 1.0) < KAPPA_ONE_ATOL:
        h_hat = np.array(h_ul, dtype=complex, copy=True)
    else:
        u = (pinv(A_ul, RANK_TOL) @ h_ul) / geo.b
        if renormalize:
            mag = np.abs(u)
            u = np.where(mag > 0, u / np.where(mag > 0, mag, 1.0), 1.0)
        h_hat = eta(kappa) * A_dl @ (geo.b * fractional_power(u, kappa))
    return ReconstructionResult(h_hat, error_covariance(geo, cfg, MMSE), MMSE)


def reconstruct_lmmse(h_ul, geo, cfg):
    """
    Linear MMSE reconstruction ``Re(eta) A_dl pinv(A_ul) h_ul``.

    Only the path angles of ``geo`` enter the estimate; the attenuations are
    used for the paired error covariance.
    """
    geo = _drop_dead_paths(geo)
    A_ul, A_dl = _steering_pair(geo, cfg)
    kappa = cfg.kappa
    if abs(kappa - 1.0) < KAPPA_ONE_ATOL:
        h_hat = np.array(h_ul, dtype=complex, copy=True)
    else:
        h_hat = eta(kappa).real * A_dl @ (pinv(A_ul, RANK_TOL) @ h_ul)
    return ReconstructionResult(h_hat, error_covariance(geo, cfg, LMMSE), LMMSE)


def reconstruct(h_ul, geo, cfg, kind=LMMSE, **kw):
    if kind == MMSE:
        return reconstruct_mmse(h_ul, geo, cfg, **kw)
    if kind == LMMSE:
        return reconstruct_lmmse(h_ul, geo, cfg)
    raise ValueError(f'unknown estimator kind {kind!r}')


def asymptotic_mse(kappa, kind=MMSE):
    """Normalized MSE ``1 - |eta|**2`` (MMSE) or ``1 - Re(eta)**2`` (L-MMSE).

    Exact at every N because each steering vector has squared norm N."""
    e = eta(kappa)
    if kind == MMSE:
        return 1.0 - abs(e) ** 2
    if kind == LMMSE:
        return 1.0 - e.real ** 2
    raise ValueError(f'unknown estimator kind {kind!r}')


def delta_mse(kappa):
    """Gap between the L-MMSE and MMSE normalized errors,
    ``sin(pi k)**4 / (pi**2 (1 - k)**2)``."""
    if kappa <= 0:
        raise ValueError(f'kappa must be positive, got {kappa}')
    if abs(kappa - 1.0) < KAPPA_ONE_ATOL:
        return 0.0
    return np.sin(np.pi * kappa) ** 4 / (np.pi ** 2 * (1 - kappa) ** 2)


def outer_approx(res):
    """Surrogate for ``h_dl h_dl^H``: ``h_hat h_hat^H + Phi``."""
    R = np.outer(res.h_hat, res.h_hat.conj()) + res.phi
    return (R + R.conj().T) / 2


def delta_error_theory(g_ul, g_dl, kappa):
    """
    Large-N limit of ``||h_dl h_dl^H - (h_hat h_hat^H + Phi)||_F**2 / N**2``
    for the L-MMSE reconstruction.

    Equals ``||M||_F**2`` with ``M = g_dl g_dl^H - Re(eta)**2 g_ul g_ul^H -
    (1 - Re(eta)**2) Sigma``; the diagonal of ``M`` vanishes, leaving

    ``sum_{l != l'} (1 + Re(eta)**4) b_l**2 b_l'**2
    - 2 Re(eta)**2 Re(g_dl[l] conj(g_dl[l']) conj(g_ul[l]) g_ul[l'])``.
    """
    g_ul = np.asarray(g_ul)
    g_dl = np.asarray(g_dl)
    re2 = eta(kappa).real ** 2
    p = np.abs(g_ul) ** 2
    cross = np.outer(g_dl * g_ul.conj(), (g_dl * g_ul.conj()).conj())
    off = ~np.eye(g_ul.size, dtype=bool)
    pp = np.outer(p, p)
    return float(np.sum((1 + re2 ** 2) * pp[off])
                 - 2 * re2 * np.sum(cross.real[off]))


def delta_error(pair, res, geo, cfg, phase_model='propagation'):
    """
    Empirical and large-N theoretical outer-product approximation error.

    Returns
    -------
    empirical : float
        ``||h_dl h_dl^H - (h_hat h_hat^H + Phi)||_F**2 / N**2``.
    theoretical : float
        :func:`delta_error_theory` evaluated on the true path gains.
    """
    N = pair.h_dl.size
    D = np.outer(pair.h_dl, pair.h_dl.conj()) - outer_approx(res)
    empirical = float(np.linalg.norm(D, 'fro') ** 2 / N ** 2)
    g_ul, g_dl = path_gains(geo, cfg, phase_model)
    return empirical, delta_error_theory(g_ul, g_dl, cfg.kappa)
