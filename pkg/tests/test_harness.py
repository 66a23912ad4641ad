import json
import subprocess
import sys

import numpy as np
import pytest

from fddmimo import __version__
from fddmimo.channel import ScenarioConfig
from fddmimo.harness import (ConfigError, ExperimentConfig, MixedConfigError,
                             ResultRecord, load_config, per_trial_samples,
                             read_records, run_convergence, run_delta_sweep,
                             run_mse_sweep, run_paths_sweep, run_se_vs_antennas,
                             trial_rng, write_records)
from fddmimo.harness.cli import main
from fddmimo.harness.records import summarize
from fddmimo.reconstruction import LMMSE, MMSE, asymptotic_mse, delta_mse


def small(**kw):
    base = dict(N=16, K=4, L=2, trials=3, kappas=[1.0, 1.2], N_sweep=[16],
                edge_snr_db=[10.0], L_sweep=[2], delta_L_sweep=[1, 2],
                convergence_N=[16], max_restarts=1)
    base.update(kw)
    return ExperimentConfig(**base)


def by_key(records):
    return {(r.sweep_value, r.series, r.metric): r for r in records}


# -- configuration ----------------------------------------------------------------

def test_config_defaults():
    c = ExperimentConfig()
    assert (c.K, c.f_ul_hz, c.f_dl_hz, c.noise_db) == (16, 10e9, 12e9, -113.0)
    assert c.scenario.isd == 500.0 and np.isclose(c.kappa, 1.2)
    assert c.kappas[0] == 1.0 and c.kappas[-1] == 2.0


@pytest.mark.parametrize('kw', [dict(trials=0), dict(seed=-1), dict(K=0),
                                dict(estimator_kind='LS'), dict(precoders=['MRT']),
                                dict(parameter_mode='oracle'), dict(epsilon=0.0),
                                dict(phase_model='x'), dict(kappas=[]),
                                dict(N_sweep=[0])])
def test_config_rejects_invalid(kw):
    with pytest.raises(ConfigError):
        ExperimentConfig(**kw)


def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigError, match='unknown'):
        ExperimentConfig.from_dict({'antennas': 4})
    with pytest.raises(ConfigError, match='scenario'):
        ExperimentConfig.from_dict({'scenario': {'radius': 3}})
    with pytest.raises(ConfigError):
        ExperimentConfig().with_overrides(bogus=1)


def test_config_round_trip_and_hash(tmp_path):
    c = small(seed=9)
    path = tmp_path / 'c.json'
    path.write_text(json.dumps(c.to_dict()))
    d = load_config(path)
    assert d == c and d.config_hash() == c.config_hash()
    assert c.with_overrides(workers=4).config_hash() == c.config_hash()
    assert c.with_overrides(seed=10).config_hash() != c.config_hash()
    assert isinstance(d.scenario, ScenarioConfig)


def test_config_file_errors(tmp_path):
    bad = tmp_path / 'bad.json'
    bad.write_text('{not json')
    with pytest.raises(ConfigError):
        load_config(bad)
    bad.write_text(json.dumps({'schema_version': 99}))
    with pytest.raises(ConfigError, match='schema'):
        load_config(bad)


# -- records -------------------------------------------------------------------------

def test_summarize():
    m, se = summarize([1.0, 2.0, 3.0, 4.0])
    assert m == 2.5 and np.isclose(se, np.std([1, 2, 3, 4], ddof=1) / 2)
    assert summarize([5.0]) == (5.0, 0.0)
    assert all(np.isnan(summarize([])))


def test_records_csv_and_sidecar(tmp_path):
    c = small()
    recs = run_mse_sweep(c)
    csv_path, json_path = write_records(recs, tmp_path, c)
    assert read_records(csv_path) == recs
    side = json.loads(open(json_path).read())
    assert side['config_hash'] == c.config_hash()
    assert side['package_version'] == __version__


def test_records_reject_mixed_configs(tmp_path):
    a, b = small(seed=1), small(seed=2)
    ra, rb = run_mse_sweep(a), run_mse_sweep(b)
    with pytest.raises(MixedConfigError):
        write_records(ra + rb, tmp_path, a)
    with pytest.raises(MixedConfigError):
        write_records(ra, tmp_path, b)
    write_records(ra, tmp_path, a, name='x')
    with pytest.raises(MixedConfigError):
        write_records(rb, tmp_path, b, name='x', append=True)
    write_records(ra, tmp_path, a, name='x', append=True)
    assert len(read_records(tmp_path / 'x.csv')) == 2 * len(ra)


def test_stderr_shrinks_with_trials():
    c = small(kappas=[1.2])
    se = [by_key(run_mse_sweep(c.with_overrides(trials=n)))[(1.2, 'all', 'lmse_empirical')].stderr
          for n in (100, 400)]
    assert 0.4 <= se[1] / se[0] <= 0.6


# -- reproducibility -------------------------------------------------------------------

def test_trial_rng_cells_are_independent_and_stable():
    a = trial_rng(1, 2, 3, 0).random(4)
    assert np.array_equal(a, trial_rng(1, 2, 3, 0).random(4))
    assert not np.array_equal(a, trial_rng(1, 2, 3, 1).random(4))
    assert not np.array_equal(a, trial_rng(1, 2, 4, 0).random(4))
    assert not np.array_equal(a, trial_rng(1, 2, 3, 0, attempt=1).random(4))


def test_reruns_bit_identical():
    c = small()
    assert run_se_vs_antennas(c) == run_se_vs_antennas(c)


@pytest.mark.slow
def test_workers_do_not_change_results():
    c = small(trials=4)
    assert run_delta_sweep(c) == run_delta_sweep(c.with_overrides(workers=2))


# -- experiments ------------------------------------------------------------------------------

def test_mse_sweep_examples():
    recs = by_key(run_mse_sweep(small()))
    for m in ('mse_empirical', 'lmse_empirical', 'mse_theory', 'lmse_theory',
              'delta_mse_theory'):
        assert recs[(1.0, 'all', m)].mean < 1e-20
    assert recs[(1.2, 'all', 'mse_theory')].mean == asymptotic_mse(1.2, MMSE)
    assert recs[(1.2, 'all', 'lmse_theory')].mean == asymptotic_mse(1.2, LMMSE)
    assert recs[(1.2, 'all', 'delta_mse_theory')].mean == delta_mse(1.2)


def test_delta_sweep_examples():
    recs = by_key(run_delta_sweep(small()))
    assert recs[(1.2, 'L=1', 'delta_theory')].mean == 0
    assert recs[(1.0, 'L=2', 'delta_empirical')].mean < 1e-20
    assert recs[(1.2, 'L=2', 'delta_theory')].mean > 0
    assert (0.0, 'L=1', 'redraws') in recs


def test_se_vs_n_examples():
    recs = by_key(run_se_vs_antennas(small(kappas=[1.2])))
    for name in ('GPIP', 'GPIP-no-phi', 'ZF', 'ZF-perfect', 'ZF-ul'):
        assert recs[(16.0, f'{name}@10dB', 'sum_se')].mean >= 0
    assert recs[(16.0, 'GPIP@10dB', 'certified')].mean == 1.0


def test_zf_on_reconstruction_is_perfect_zf_at_tdd():
    c = small(f_dl_hz=10e9, precoders=['ZF', 'ZF-perfect'])
    recs = by_key(run_se_vs_antennas(c))
    assert recs[(16.0, 'ZF@10dB', 'sum_se')].mean == recs[(16.0, 'ZF-perfect@10dB', 'sum_se')].mean


def test_se_vs_n_skips_infeasible_sizes():
    with pytest.warns(RuntimeWarning, match='skipping N=2'):
        recs = run_se_vs_antennas(small(N_sweep=[2, 16], precoders=['ZF']))
    assert {r.sweep_value for r in recs} == {16.0}


def test_estimated_mode_runs():
    c = small(parameter_mode='estimated', precoders=['GPIP', 'ZF'], trials=2)
    recs = by_key(run_se_vs_antennas(c))
    assert recs[(16.0, 'GPIP@10dB', 'sum_se')].mean > 0


def test_paths_sweep_series():
    recs = run_paths_sweep(small(L_sweep=[1, 3], trials=2))
    assert {r.series for r in recs if r.metric == 'sum_se'} == {'L=1@10dB', 'L=3@10dB'}


def test_convergence_tighter_epsilon_needs_more_iterations():
    c = small(trials=5, convergence_N=[16, 32])
    recs = by_key(run_convergence(c))
    for N in (16.0, 32.0):
        loose = recs[(N, 'epsilon=0.1', 'iterations_max')].mean
        tight = recs[(N, 'epsilon=0.01', 'iterations_max')].mean
        assert 1 <= loose <= tight
        hist = sum(r.mean for k, r in recs.items()
                   if k[0] == N and k[1] == 'epsilon=0.1' and k[2].startswith('iterations_hist_'))
        assert hist == 5


def test_per_trial_samples_aggregate_to_records():
    c = small()
    samples = per_trial_samples('mse-sweep', c)
    assert len(samples) == c.trials
    rec = by_key(run_mse_sweep(c))[(1.2, 'all', 'lmse_empirical')]
    assert rec.mean == summarize([s[(1.2, 'all', 'lmse_empirical')] for s in samples])[0]
    with pytest.raises(ValueError):
        per_trial_samples('bogus', c)


# -- command line ---------------------------------------------------------------------------------

def test_cli_version():
    out = subprocess.run([sys.executable, '-m', 'fddmimo', '--version'],
                         capture_output=True, text=True)
    assert out.returncode == 0 and __version__ in out.stdout


def test_cli_success(tmp_path, capsys):
    code = main(['mse-sweep', '--trials', '2', '--N', '8', '--kappas', '1.0', '1.2',
                 '--out', str(tmp_path)])
    assert code == 0
    msg = json.loads(capsys.readouterr().out)
    assert msg['records'] == 10
    assert read_records(msg['csv'])[0].config_hash == msg['config_hash']


def test_cli_config_file_with_override(tmp_path, capsys):
    cfg = tmp_path / 'c.json'
    cfg.write_text(json.dumps({'N': 8, 'trials': 5, 'kappas': [1.2]}))
    assert main(['mse-sweep', '--config', str(cfg), '--trials', '2',
                 '--out', str(tmp_path)]) == 0
    msg = json.loads(capsys.readouterr().out)
    assert {r.trials for r in read_records(msg['csv'])} == {1, 2}


def test_cli_config_error(tmp_path, capsys):
    assert main(['mse-sweep', '--trials', '0', '--out', str(tmp_path)]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err['error'] == 'ConfigError'


def test_cli_runtime_error(tmp_path, capsys):
    with pytest.warns(RuntimeWarning):
        code = main(['se-vs-n', '--N-sweep', '4', '--K', '8', '--trials', '1',
                     '--out', str(tmp_path)])
    assert code == 1
    assert 'error' in json.loads(capsys.readouterr().err)
