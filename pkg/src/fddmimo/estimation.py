"""
Uplink pilot acquisition: noisy channel observation, AoA estimation by
forward-backward spatial smoothing and MUSIC, and least-squares path gains.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.signal import find_peaks

from .channel import UserGeometry, steering_matrix
from .numerics import pinv

__all__ = ['PilotObservation', 'observe_pilot', 'smoothed_covariance',
           'music_spectrum', 'estimate_aoa', 'estimate_gains_ls',
           'estimate_geometry', 'match_angles']


@dataclass
class PilotObservation:
    """
    ``y`` holds one row per pilot snapshot, shape (T, N).

    Noise is circularly symmetric Gaussian with per-antenna variance
    ``||h_ul||**2 / (N * 10**(snr_db / 10))``.
    """
    y: np.ndarray
    snr_db: float
    seed: object = None

    @property
    def mean(self):
        return self.y.mean(axis=0)


def observe_pilot(h_ul, snr_db, seed=None, snapshots=1):
    """
    Observe ``h_ul`` through additive noise after orthogonal-pilot despreading.

    ``snr_db = inf`` returns noiseless snapshots.
    """
    h_ul = np.asarray(h_ul, dtype=complex)
    N = h_ul.size
    y = np.tile(h_ul, (snapshots, 1))
    if np.isposinf(snr_db):
        return PilotObservation(y, snr_db, seed)
    if not np.isfinite(snr_db):
        raise ValueError(f'snr_db must be finite or +inf, got {snr_db}')
    rng = np.random.default_rng(seed)
    var = np.vdot(h_ul, h_ul).real / (N * 10.0 ** (snr_db / 10.0))
    noise = rng.standard_normal((snapshots, N, 2)) @ np.array([1.0, 1j])
    return PilotObservation(y + np.sqrt(var / 2) * noise, snr_db, seed)


def _snapshots(y):
    if isinstance(y, PilotObservation):
        y = y.y
    return np.atleast_2d(np.asarray(y, dtype=complex))


def smoothed_covariance(y, subarray=None, forward_backward=True):
    """
    Spatially smoothed sample covariance from one or more snapshots.

    Averages the outer products of every length-``subarray`` window of every
    snapshot, then (optionally) with its exchange-conjugate.
    """
    Y = _snapshots(y)
    T, N = Y.shape
    m = int(np.ceil(N / 2)) if subarray is None else subarray
    windows = np.lib.stride_tricks.sliding_window_view(Y, m, axis=1)
    W = windows.reshape(-1, m)
    R = W.T @ W.conj() / W.shape[0]
    if forward_backward:
        R = (R + R[::-1, ::-1].conj()) / 2
    return R


def music_spectrum(R, L, grid, lam, d):
    """Pseudo-spectrum ``1 / ||E_n^H a(theta)||**2`` on ``grid`` (radians)."""
    m = R.shape[0]
    _, V = np.linalg.eigh(R)
    En = V[:, :m - L]
    n = np.arange(m)[:, None]
    A = np.exp(-2j * np.pi / lam * d * n * np.sin(grid)[None, :])
    denom = np.sum(np.abs(En.conj().T @ A) ** 2, axis=0)
    return 1.0 / np.maximum(denom, np.finfo(float).tiny)


def _parabolic(grid, P, idx):
    if idx == 0 or idx == len(grid) - 1:
        return grid[idx]
    y0, y1, y2 = np.log(P[idx - 1:idx + 2])
    den = y0 - 2 * y1 + y2
    if den >= 0:
        return grid[idx]
    step = grid[1] - grid[0]
    return grid[idx] + 0.5 * step * (y0 - y2) / den


def _polish(Y, theta, cfg, iters=30):
    """Gauss-Newton on the variable-projection residual ``(I - P_A) y``."""
    lam = cfg.lambda_ul
    lim = np.pi / 2 - 1e-6
    n = np.arange(cfg.N)[:, None]

    def cost_and_parts(th):
        A = steering_matrix(th, lam, cfg)
        Ap = pinv(A)
        G = Ap @ Y.T
        Rres = Y.T - A @ G
        return np.linalg.norm(Rres) ** 2, A, Ap, G, Rres

    cost, A, Ap, G, Rres = cost_and_parts(theta)
    for _ in range(iters):
        if cost == 0.0:
            break
        dA = A * (-2j * np.pi / lam * cfg.d * n * np.cos(theta)[None, :])
        # Kaufman approximation of the projected Jacobian
        cols = []
        for l in range(theta.size):
            Jl = dA[:, [l]] * G[[l], :]
            Jl = Jl - A @ (Ap @ Jl)
            cols.append(-Jl.reshape(-1))
        J = np.stack(cols, axis=1)
        Jr = np.concatenate([J.real, J.imag])
        rr = np.concatenate([Rres.reshape(-1).real, Rres.reshape(-1).imag])
        step = -np.linalg.lstsq(Jr, rr, rcond=None)[0]
        t = 1.0
        for _ in range(20):
            cand = np.clip(theta + t * step, -lim, lim)
            c2, A2, Ap2, G2, R2 = cost_and_parts(cand)
            if c2 < cost:
                break
            t /= 2
        else:
            break
        done = np.max(np.abs(cand - theta)) < 1e-15
        theta, cost, A, Ap, G, Rres = cand, c2, A2, Ap2, G2, R2
        if done:
            break
    return theta


def estimate_aoa(y, L, cfg, grid_step_deg=0.02, subarray=None,
                 refine=True, return_gains=False):
    """
    Estimate ``L`` path angles from UL pilot snapshots.

    Forward-backward spatial smoothing (subarray length ``ceil(N/2)``),
    MUSIC search on a ``grid_step_deg`` grid with parabolic peak refinement,
    then a Gauss-Newton least-squares polish of all angles jointly.

    Angles are returned in canonical order: decreasing estimated
    attenuation.

    Warns
    -----
    RuntimeWarning
        When the smoothed covariance has fewer than ``L`` significant
        eigenvalues; only the resolvable angles are returned.
    """
    Y = _snapshots(y)
    N = Y.shape[1]
    if N != cfg.N:
        raise ValueError(f'snapshot length {N} does not match N={cfg.N}')
    if N < 2 * L + 1:
        raise ValueError(f'need N >= 2L+1 for spatial smoothing, got N={N}, L={L}')
    m = int(np.ceil(N / 2)) if subarray is None else subarray
    R = smoothed_covariance(Y, m)
    ev = np.linalg.eigvalsh(R)[::-1]
    significant = int(np.count_nonzero(ev > 1e-10 * ev[0])) if ev[0] > 0 else 0
    L_eff = min(L, significant)
    if L_eff < L:
        warnings.warn(f'only {L_eff} of {L} paths resolvable', RuntimeWarning,
                      stacklevel=2)
    if L_eff == 0:
        empty = np.zeros(0)
        return (empty, empty.astype(complex)) if return_gains else empty

    step = np.deg2rad(grid_step_deg)
    lim = np.pi / 2 - 1e-6
    grid = np.arange(-lim, lim, step)
    P = music_spectrum(R, L_eff, grid, cfg.lambda_ul, cfg.d)
    peaks, _ = find_peaks(np.concatenate([[0.0], P, [0.0]]))
    peaks = peaks - 1
    if peaks.size < L_eff:
        peaks = np.argsort(P)[::-1][:L_eff]
    top = peaks[np.argsort(P[peaks])[::-1][:L_eff]]
    theta = np.array([_parabolic(grid, P, i) for i in top])
    if refine:
        theta = _polish(Y, theta, cfg)
    g = pinv(steering_matrix(theta, cfg.lambda_ul, cfg)) @ Y.mean(axis=0)
    order = np.lexsort((theta, -np.abs(g)))
    theta, g = theta[order], g[order]
    return (theta, g) if return_gains else theta


def estimate_gains_ls(y, theta_hat, cfg):
    """
    Least-squares path gains at the given angles.

    Returns
    -------
    g_hat : ndarray, complex, shape (L,)
    b_hat : ndarray, shape (L,)
        ``|g_hat|``; ``diag(b_hat**2)`` is the estimated path power matrix.
    """
    Y = _snapshots(y)
    A = steering_matrix(np.asarray(theta_hat), cfg.lambda_ul, cfg)
    s = np.linalg.svd(A, compute_uv=False)
    if A.shape[1] > A.shape[0] or s[-1] <= 1e-10 * s[0]:
        raise ValueError('steering matrix at the estimated angles is rank '
                         'deficient')
    g = pinv(A) @ Y.mean(axis=0)
    return g, np.abs(g)


def estimate_geometry(y, L, cfg, **kw):
    """
    Estimated parameter set ``(h_ul_hat, geometry_hat)`` from pilots.

    The returned geometry carries estimated angles and attenuations; its
    path distances are unknown (``inf``) and its phases are the LS gain
    phases.
    """
    Y = _snapshots(y)
    theta, g = estimate_aoa(Y, L, cfg, return_gains=True, **kw)
    geo = UserGeometry(theta, np.abs(g), np.full(theta.size, np.inf),
                       np.mod(np.angle(g), 2 * np.pi))
    return Y.mean(axis=0), geo


def match_angles(theta_hat, theta_true):
    """
    Optimal assignment of estimates to true angles (minimal total absolute
    error).

    Returns
    -------
    errors : ndarray
        ``|theta_hat[i] - theta_true[j]|`` for each matched pair.
    pairs : tuple of index arrays
    """
    theta_hat = np.asarray(theta_hat)
    theta_true = np.asarray(theta_true)
    cost = np.abs(theta_hat[:, None] - theta_true[None, :])
    rows, cols = linear_sum_assignment(cost)
    return cost[rows, cols], (rows, cols)
