"""
Experiment configuration: defaults, JSON round trip, validation and hashing.
"""

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace

from ..channel import PHASE_MODELS, PathLossModel, ScenarioConfig
from ..reconstruction import KINDS

__all__ = ['SCHEMA_VERSION', 'PRECODERS', 'PARAMETER_MODES', 'ConfigError',
           'ExperimentConfig', 'load_config']

SCHEMA_VERSION = 1

#: Precoder / CSIT combinations evaluated on the true DL channels.
#: ``GPIP``: reconstructed channel and error covariance. ``GPIP-no-phi``:
#: reconstructed channel only. ``ZF``: ZF on the reconstructed channel.
#: ``ZF-perfect``: ZF on the true DL channel. ``ZF-ul``: ZF on the UL channel
#: used as if it were the DL channel.
PRECODERS = ('GPIP', 'GPIP-no-phi', 'ZF', 'ZF-perfect', 'ZF-ul')
PARAMETER_MODES = ('perfect', 'estimated')


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


def _kappa_grid():
    return [round(1.0 + 0.1 * i, 10) for i in range(11)]


@dataclass
class ExperimentConfig:
    """
    Every knob of every experiment family; unknown keys are rejected.

    Defaults describe a single macro cell: 500 m inter-site
    distance, 10 GHz UL and 12 GHz DL carriers, K = 16 users, -113 dB noise,
    32 m BS and 1.5 m UE heights. Transmit power is set through the SNR of a
    single unshadowed path at the cell edge.
    """
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    f_ul_hz: float = 10e9
    f_dl_hz: float = 12e9
    N: int = 64
    N_sweep: list = field(default_factory=lambda: [16, 32, 64, 128, 256])
    K: int = 16
    L: int = 3
    L_sweep: list = field(default_factory=lambda: [2, 4, 8, 16])
    delta_L_sweep: list = field(default_factory=lambda: [1, 2, 4, 8, 16])
    kappas: list = field(default_factory=_kappa_grid)
    noise_db: float = -113.0
    edge_snr_db: list = field(default_factory=lambda: [0.0, 10.0, 20.0])
    trials: int = 100
    seed: int = 0
    estimator_kind: str = 'L-MMSE'
    parameter_mode: str = 'perfect'
    pilot_snr_db: float = 20.0
    pilot_snapshots: int = 1
    precoders: list = field(default_factory=lambda: list(PRECODERS))
    epsilon: float = 0.01
    epsilons: list = field(default_factory=lambda: [0.1, 0.01])
    convergence_N: list = field(default_factory=lambda: [16, 64, 256])
    max_iter: int = 100
    max_restarts: int = 5
    certify: bool = True
    phase_model: str = 'propagation'
    workers: int = 1

    def __post_init__(self):
        if isinstance(self.scenario, dict):
            self.scenario = _scenario_from_dict(self.scenario)
        self.validate()

    def validate(self):
        if int(self.trials) < 1:
            raise ConfigError('trials must be >= 1')
        if int(self.seed) < 0:
            raise ConfigError('seed must be nonnegative')
        if self.K < 1 or self.L < 1 or self.N < 1:
            raise ConfigError('N, K and L must be >= 1')
        for name in ('N_sweep', 'L_sweep', 'delta_L_sweep', 'convergence_N'):
            vals = getattr(self, name)
            if not vals or any(int(v) < 1 for v in vals):
                raise ConfigError(f'{name} must be a nonempty list of positive integers')
        if not self.kappas or any(k <= 0 for k in self.kappas):
            raise ConfigError('kappas must be a nonempty list of positive ratios')
        if self.f_ul_hz <= 0 or self.f_dl_hz <= 0:
            raise ConfigError('carrier frequencies must be positive')
        if self.estimator_kind not in KINDS:
            raise ConfigError(f'estimator_kind must be one of {KINDS}')
        if self.parameter_mode not in PARAMETER_MODES:
            raise ConfigError(f'parameter_mode must be one of {PARAMETER_MODES}')
        bad = [p for p in self.precoders if p not in PRECODERS]
        if bad or not self.precoders:
            raise ConfigError(f'unknown precoders {bad}; choose from {PRECODERS}')
        if self.epsilon <= 0 or any(e <= 0 for e in self.epsilons):
            raise ConfigError('epsilon values must be positive')
        if self.phase_model not in PHASE_MODELS:
            raise ConfigError(f'phase_model must be one of {PHASE_MODELS}')
        if self.workers < 1 or self.pilot_snapshots < 1:
            raise ConfigError('workers and pilot_snapshots must be >= 1')
        if not self.edge_snr_db:
            raise ConfigError('edge_snr_db must be a nonempty list')

    @property
    def kappa(self):
        return self.f_dl_hz / self.f_ul_hz

    def to_dict(self):
        d = asdict(self)
        d['scenario']['path_loss'] = asdict(self.scenario.path_loss)
        return d

    def config_hash(self):
        """sha1 of the canonical JSON, excluding execution-only keys."""
        d = self.to_dict()
        d.pop('workers')
        blob = json.dumps(d, sort_keys=True, separators=(',', ':'))
        return hashlib.sha1(blob.encode()).hexdigest()

    def with_overrides(self, **kw):
        kw = {k: v for k, v in kw.items() if v is not None}
        unknown = set(kw) - {f.name for f in fields(self)}
        if unknown:
            raise ConfigError(f'unknown config keys: {sorted(unknown)}')
        return replace(self, **kw)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d.pop('schema_version', None)
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f'unknown config keys: {sorted(unknown)}')
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def _scenario_from_dict(d):
    d = dict(d)
    pl = d.pop('path_loss', {})
    allowed = {f.name for f in fields(ScenarioConfig)}
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f'unknown scenario keys: {sorted(unknown)}')
    if isinstance(pl, dict):
        pl_allowed = {f.name for f in fields(PathLossModel)}
        if set(pl) - pl_allowed:
            raise ConfigError(f'unknown path_loss keys: {sorted(set(pl) - pl_allowed)}')
        pl = PathLossModel(**pl)
    return ScenarioConfig(path_loss=pl, **d)


def load_config(path):
    """Read a JSON config file; missing keys keep their defaults."""
    try:
        with open(path, encoding='utf-8') as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f'cannot read config {path}: {exc}') from exc
    if not isinstance(data, dict):
        raise ConfigError('config file must hold a JSON object')
    version = data.get('schema_version', SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f'config schema {version} is not supported '
                          f'(expected {SCHEMA_VERSION})')
    return ExperimentConfig.from_dict(data)
