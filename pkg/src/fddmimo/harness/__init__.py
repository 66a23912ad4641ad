"""Monte Carlo experiment drivers, result records and the command line."""

from .config import (PARAMETER_MODES, PRECODERS, SCHEMA_VERSION, ConfigError,
                     ExperimentConfig, load_config)
from .experiments import (EXPERIMENTS, noise_and_power, per_trial_samples,
                          run_convergence,
                          run_delta_sweep, run_mse_sweep, run_paths_sweep,
                          run_se_vs_antennas, trial_rng)
from .records import MixedConfigError, ResultRecord, read_records, write_records
