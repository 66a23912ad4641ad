"""
Seeded Monte Carlo drivers for the five experiment families.

Every trial draws its randomness from generators keyed by
``(seed, trial, user, stream)``, so trials can run in any order or in
parallel and still give bit-identical records.
"""

import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from ..channel import (ArrayConfig, attenuation_from_db, path_loss_db,
                       sample_geometry, synthesize_pair, wavelength)
from ..estimation import estimate_geometry, observe_pilot
from ..precoding import CsitBundle, gpip_solve, sum_se_true, zf_precoder
from ..reconstruction import (LMMSE, MMSE, ReconstructionResult, asymptotic_mse,
                              delta_error, delta_mse, is_resolvable, reconstruct)
from .records import ResultRecord, summarize

__all__ = ['trial_rng', 'noise_and_power', 'run_mse_sweep', 'run_delta_sweep',
           'run_se_vs_antennas', 'run_paths_sweep', 'run_convergence',
           'per_trial_samples', 'EXPERIMENTS']

log = logging.getLogger(__name__)

STREAM_GEOMETRY = 0
STREAM_PILOT = 1
STREAM_PRECODER = 2


#: Redraws allowed when a user's paths cannot be resolved by the array.
MAX_REDRAWS = 50


def trial_rng(seed, trial, user, stream=STREAM_GEOMETRY, attempt=0):
    """Counter-based generator for one (trial, user, stream) cell. Redraws
    (``attempt > 0``) get their own cells."""
    key = [int(seed), int(trial), int(user), int(stream)]
    if attempt:
        key.append(int(attempt))
    ss = np.random.SeedSequence(key)
    return np.random.Generator(np.random.Philox(ss))


def _draw_user(config, trial, k, scenario, N):
    """
    Geometry of user ``k`` whose paths an ``N``-antenna array can resolve.

    Angles drawn inside a narrow spread occasionally nearly coincide, which
    makes the UL steering matrix singular. Such draws are replaced from a
    fresh generator cell.

    Returns
    -------
    geo : UserGeometry
    redraws : int
    """
    cfg = ArrayConfig.from_frequencies(N, config.f_ul_hz, config.f_dl_hz)
    for a in range(MAX_REDRAWS + 1):
        geo = sample_geometry(trial_rng(config.seed, trial, k, STREAM_GEOMETRY, a),
                              scenario)
        if is_resolvable(geo, cfg):
            return geo, a
    raise ValueError(f'no resolvable {scenario.L}-path geometry for N={N} after '
                     f'{MAX_REDRAWS} redraws; reduce L or widen the angular spread')


def _scenario(config, L=None):
    sc = replace(config.scenario, f_ul_hz=config.f_ul_hz)
    return sc if L is None else replace(sc, L=L)


def noise_and_power(config, edge_snr_db):
    """
    Noise power and the transmit power giving ``edge_snr_db`` for a single
    unshadowed path at the cell corner.

    Returns
    -------
    sigma2, P : float
    """
    sc = config.scenario
    edge = np.hypot(sc.cell_radius, sc.bs_height - sc.ue_height)
    b = attenuation_from_db(path_loss_db(edge, wavelength(config.f_ul_hz),
                                         sc.path_loss), sc.path_loss)
    sigma2 = 10 ** (config.noise_db / 10)
    return sigma2, sigma2 * 10 ** (edge_snr_db / 10) / b ** 2


def _users(config, trial, L, N):
    """``K`` user geometries resolvable at ``N`` antennas, plus the total
    number of redraws."""
    sc = _scenario(config, L)
    drawn = [_draw_user(config, trial, k, sc, N) for k in range(config.K)]
    return [g for g, _ in drawn], sum(a for _, a in drawn)


def _user_csit(geo, cfg, config, trial, k):
    pair = synthesize_pair(geo, cfg, config.phase_model)
    kind = config.estimator_kind
    if config.parameter_mode == 'perfect':
        return pair, reconstruct(pair.h_ul, geo, cfg, kind)
    obs = observe_pilot(pair.h_ul, config.pilot_snr_db,
                        trial_rng(config.seed, trial, k, STREAM_PILOT),
                        config.pilot_snapshots)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter('ignore', RuntimeWarning)
            y, geo_hat = estimate_geometry(obs, geo.L, cfg)
            kw = {'renormalize': True} if kind == MMSE else {}
            return pair, reconstruct(y, geo_hat, cfg, kind, **kw)
    except ValueError as exc:
        log.info('trial %d user %d: estimation failed (%s); using the UL '
                 'channel as is', trial, k, exc)
        y = obs.mean
        return pair, ReconstructionResult(y, np.zeros((cfg.N, cfg.N), complex), kind)


def _map_trials(fn, config, *extra):
    n = config.trials
    if config.workers == 1:
        return [fn(config, t, *extra) for t in range(n)]
    with ProcessPoolExecutor(max_workers=config.workers) as ex:
        return list(ex.map(fn, [config] * n, range(n), *[[e] * n for e in extra]))


def _records(experiment, sweep_variable, samples, config):
    """``samples`` maps (sweep_value, series, metric) -> list of per-trial values."""
    h = config.config_hash()
    out = []
    for (value, series, metric), xs in samples.items():
        mean, se = summarize(xs)
        out.append(ResultRecord(experiment, sweep_variable, float(value), series,
                                metric, mean, se, len(xs), config.seed, h))
    return out


def _collect(per_trial):
    samples = {}
    for result in per_trial:
        for key, value in result.items():
            samples.setdefault(key, []).append(value)
    return samples


# -- normalized MSE ---------------------------------------------------------

def _mse_trial(config, trial):
    geo, _ = _draw_user(config, trial, 0, _scenario(config), config.N)
    lam_ul = wavelength(config.f_ul_hz)
    power = config.N * np.sum(geo.b ** 2)
    out = {}
    for kappa in config.kappas:
        cfg = ArrayConfig(config.N, lam_ul, lam_ul / kappa)
        pair = synthesize_pair(geo, cfg, config.phase_model)
        for kind, name in ((MMSE, 'mse_empirical'), (LMMSE, 'lmse_empirical')):
            res = reconstruct(pair.h_ul, geo, cfg, kind)
            err = np.linalg.norm(pair.h_dl - res.h_hat) ** 2 / power
            out[(kappa, 'all', name)] = float(err)
    return out


def run_mse_sweep(config):
    """
    Closed-form and Monte Carlo normalized reconstruction errors versus kappa.

    Metrics: ``mse_theory``, ``lmse_theory``, ``delta_mse_theory`` (trial
    independent) and ``mse_empirical``, ``lmse_empirical``.
    """
    samples = _collect(_map_trials(_mse_trial, config))
    for kappa in config.kappas:
        samples[(kappa, 'all', 'mse_theory')] = [asymptotic_mse(kappa, MMSE)]
        samples[(kappa, 'all', 'lmse_theory')] = [asymptotic_mse(kappa, LMMSE)]
        samples[(kappa, 'all', 'delta_mse_theory')] = [delta_mse(kappa)]
    return _records('mse-sweep', 'kappa', dict(sorted(samples.items())), config)


# -- outer-product approximation error --------------------------------------

def _delta_trial(config, trial):
    lam_ul = wavelength(config.f_ul_hz)
    out = {}
    for L in config.delta_L_sweep:
        geo, redraws = _draw_user(config, trial, 0, _scenario(config, L), config.N)
        out[(0.0, f'L={L}', 'redraws')] = float(redraws)
        for kappa in config.kappas:
            cfg = ArrayConfig(config.N, lam_ul, lam_ul / kappa)
            pair = synthesize_pair(geo, cfg, config.phase_model)
            res = reconstruct(pair.h_ul, geo, cfg, LMMSE)
            emp, theory = delta_error(pair, res, geo, cfg, config.phase_model)
            # normalize by the squared path power so users at different
            # distances weigh equally
            p2 = np.sum(geo.b ** 2) ** 2
            out[(kappa, f'L={L}', 'delta_empirical')] = emp / p2
            out[(kappa, f'L={L}', 'delta_theory')] = theory / p2
    return out


def run_delta_sweep(config):
    """
    Outer-product approximation error ``||h h^H - (h_hat h_hat^H + Phi)||_F^2
    / N^2`` of the L-MMSE reconstruction against its large-N closed form,
    per (kappa, L), both divided by ``(sum_l b_l^2)^2``.
    """
    samples = _collect(_map_trials(_delta_trial, config))
    return _records('delta-sweep', 'kappa', dict(sorted(samples.items())), config)


# -- sum spectral efficiency ------------------------------------------------

def _precode(name, bundle, h_true, h_ul, config, trial):
    if name == 'GPIP' or name == 'GPIP-no-phi':
        b = bundle if name == 'GPIP' else bundle.without_phi()
        sol = gpip_solve(b, config.epsilon, config.max_iter, config.max_restarts,
                         seed=trial_rng(config.seed, trial, 0, STREAM_PRECODER),
                         certify=config.certify)
        return sol.f, sol
    if name == 'ZF':
        return zf_precoder(bundle.h_hat).f, None
    if name == 'ZF-perfect':
        return zf_precoder(h_true).f, None
    if name == 'ZF-ul':
        return zf_precoder(h_ul).f, None
    raise ValueError(f'unknown precoder {name!r}')


def _se_instance(config, trial, users, N, snrs, precoders, tag):
    cfg = ArrayConfig.from_frequencies(N, config.f_ul_hz, config.f_dl_hz)
    csit = [_user_csit(g, cfg, config, trial, k) for k, g in enumerate(users)]
    h_dl = np.stack([p.h_dl for p, _ in csit])
    h_ul = np.stack([p.h_ul for p, _ in csit])
    out = {}
    for snr in snrs:
        sigma2, P = noise_and_power(config, snr)
        bundle = CsitBundle.from_reconstructions([r for _, r in csit], sigma2, P)
        for name in precoders:
            f, sol = _precode(name, bundle, h_dl, h_ul, config, trial)
            series = f'{tag or name}@{snr:g}dB'
            out[(N, series, 'sum_se')] = sum_se_true(f, h_dl, sigma2, P)
            if sol is not None:
                out[(N, series, 'certified')] = float(sol.second_order_certified)
                out[(N, series, 'iterations')] = float(sol.iterations)
    return out


def _feasible_N(config, values):
    keep = [N for N in values if N >= config.K]
    for N in values:
        if N < config.K:
            warnings.warn(f'skipping N={N}: K={config.K} users exceed the '
                          'antenna count (ZF infeasible)', RuntimeWarning,
                          stacklevel=3)
    return keep


def _se_trial(config, trial, Ns):
    users, redraws = _users(config, trial, config.L, min(Ns))
    out = {(min(Ns), 'all', 'redraws'): float(redraws)}
    for N in Ns:
        out.update(_se_instance(config, trial, users, N, config.edge_snr_db,
                                config.precoders, None))
    return out


def run_se_vs_antennas(config):
    """
    Ergodic sum-SE on the true DL channels versus N for each configured
    precoder / CSIT combination and edge SNR (series ``<precoder>@<snr>dB``).
    """
    Ns = _feasible_N(config, config.N_sweep)
    samples = _collect(_map_trials(_se_trial, config, Ns))
    return _records('se-vs-n', 'N', dict(sorted(samples.items())), config)


def _paths_trial(config, trial, Ns):
    out = {}
    for L in config.L_sweep:
        usable = sorted(N for N in Ns if N >= L)
        users = None
        while usable and users is None:
            try:
                users, redraws = _users(config, trial, L, usable[0])
            except ValueError:
                warnings.warn(f'skipping N={usable[0]} for L={L}: paths not '
                              'resolvable by the array', RuntimeWarning)
                usable.pop(0)
        if users is None:
            continue
        out[(usable[0], f'L={L}', 'redraws')] = float(redraws)
        for N in usable:
            out.update(_se_instance(config, trial, users, N, config.edge_snr_db,
                                    ['GPIP'], f'L={L}'))
    return out


def run_paths_sweep(config):
    """GPIP (reconstructed channel and covariance) sum-SE versus N for every
    path count in ``L_sweep`` (series ``L=<L>@<snr>dB``)."""
    Ns = _feasible_N(config, config.N_sweep)
    samples = _collect(_map_trials(_paths_trial, config, Ns))
    return _records('paths-sweep', 'N', dict(sorted(samples.items())), config)


# -- GPIP convergence -------------------------------------------------------

def _convergence_trial(config, trial):
    users, _ = _users(config, trial, config.L, min(config.convergence_N))
    sigma2, P = noise_and_power(config, config.edge_snr_db[-1])
    out = {}
    for N in config.convergence_N:
        cfg = ArrayConfig.from_frequencies(N, config.f_ul_hz, config.f_dl_hz)
        res = [_user_csit(g, cfg, config, trial, k)[1] for k, g in enumerate(users)]
        bundle = CsitBundle.from_reconstructions(res, sigma2, P)
        for eps in config.epsilons:
            sol = gpip_solve(bundle, eps, config.max_iter, certify=False)
            out[(N, f'epsilon={eps:g}', 'iterations')] = sol.iterations
    return out


def run_convergence(config):
    """
    GPIP iteration counts to the relative-change rule for every N in
    ``convergence_N`` and every ``epsilons`` entry, at the last edge SNR.

    Per (N, epsilon): ``iterations`` (mean, stderr), ``iterations_median``,
    ``iterations_max`` and histogram rows ``iterations_hist_<count>``.
    """
    samples = _collect(_map_trials(_convergence_trial, config))
    records = _records('convergence', 'N', dict(sorted(samples.items())), config)
    h = config.config_hash()
    for (N, series, _), xs in sorted(samples.items()):
        xs = np.asarray(xs)
        extra = [('iterations_median', float(np.median(xs))),
                 ('iterations_max', float(xs.max()))]
        counts = np.bincount(xs.astype(int))
        extra += [(f'iterations_hist_{i}', float(c)) for i, c in enumerate(counts) if c]
        records += [ResultRecord('convergence', 'N', float(N), series, m, v,
                                 float('nan'), xs.size, config.seed, h)
                    for m, v in extra]
    return records


def per_trial_samples(experiment, config):
    """
    Unaggregated results: one ``{(sweep_value, series, metric): value}``
    dict per trial, in trial order.

    Useful for paired comparisons, where per-trial differences have far
    smaller spread than the difference of two independent means.
    """
    if experiment == 'mse-sweep':
        return _map_trials(_mse_trial, config)
    if experiment == 'delta-sweep':
        return _map_trials(_delta_trial, config)
    if experiment == 'se-vs-n':
        return _map_trials(_se_trial, config, _feasible_N(config, config.N_sweep))
    if experiment == 'paths-sweep':
        return _map_trials(_paths_trial, config, _feasible_N(config, config.N_sweep))
    if experiment == 'convergence':
        return _map_trials(_convergence_trial, config)
    raise ValueError(f'unknown experiment {experiment!r}')


EXPERIMENTS = {
    'mse-sweep': run_mse_sweep,
    'delta-sweep': run_delta_sweep,
    'se-vs-n': run_se_vs_antennas,
    'paths-sweep': run_paths_sweep,
    'convergence': run_convergence,
}
