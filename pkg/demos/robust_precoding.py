"""
Robust precoding from reconstructed CSIT
========================================

Sixteen users in one cell, 64 antennas. The base station only sees UL
channels; it reconstructs DL channels plus their error covariances and
compares three precoders on the true DL channels.
"""

import numpy as np

from fddmimo import (ArrayConfig, CsitBundle, ScenarioConfig, gpip_solve,
                     reconstruct_lmmse, sample_geometry, sum_se_true,
                     synthesize_pair, zf_precoder)
from fddmimo.harness import ExperimentConfig, noise_and_power
from fddmimo.reconstruction import is_resolvable

K, N = 16, 64
cfg = ArrayConfig.from_frequencies(N, 10e9, 12e9)
rng = np.random.default_rng(1)

pairs, recon = [], []
while len(pairs) < K:
    geo = sample_geometry(rng, ScenarioConfig())
    if not is_resolvable(geo, cfg):
        continue
    pair = synthesize_pair(geo, cfg)
    pairs.append(pair)
    recon.append(reconstruct_lmmse(pair.h_ul, geo, cfg))

h_dl = np.stack([p.h_dl for p in pairs])
h_ul = np.stack([p.h_ul for p in pairs])

# transmit power from a 20 dB cell-edge SNR
sigma2, P = noise_and_power(ExperimentConfig(), 20.0)
bundle = CsitBundle.from_reconstructions(recon, sigma2, P)

sol = gpip_solve(bundle, seed=0)
print(f'GPIP: {sol.iterations} iterations, {sol.polish_iterations} polish steps, '
      f'certified={sol.second_order_certified}')

for name, f in (('GPIP, h_hat + Phi', sol.f),
                ('ZF on h_hat', zf_precoder(bundle.h_hat).f),
                ('ZF on UL channel', zf_precoder(h_ul).f),
                ('ZF on true DL', zf_precoder(h_dl).f)):
    print(f'{name:>18s}: {sum_se_true(f, h_dl, sigma2, P):6.2f} bits/s/Hz')
