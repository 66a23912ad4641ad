"""
FDD massive-MIMO downlink simulation: UL-to-DL channel reconstruction from
frequency-invariant path parameters, robust generalized-power-iteration
precoding, and a seeded Monte Carlo harness.
"""

__version__ = '0.1.0'

from .channel import (ArrayConfig, ChannelPair, PathLossModel, ScenarioConfig,
                      UserGeometry, sample_geometry, synthesize_pair)
from .estimation import estimate_aoa, estimate_gains_ls, observe_pilot
from .precoding import (CsitBundle, PrecoderSolution, build_operators,
                        check_second_order, gamma, gpip_solve, sum_se_true,
                        zf_precoder)
from .reconstruction import (asymptotic_mse, eta, reconstruct, reconstruct_lmmse,
                             reconstruct_mmse)
