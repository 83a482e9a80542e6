#!/usr/bin/env python3
# How one mobile splits a feedback budget over its links.

import numpy as np

from ratebalance.allocator import (allocate_finite, allocate_infinite,
                                   antennas_for_budget, error_sum)
from ratebalance.experiments import ExperimentConfig, build_network

cfg = ExperimentConfig()
net = build_network(cfg)
row = net.gain[0]
T, Q = cfg.T, cfg.Q

print('budget F   fed  error level   error sum')
for F in (0.02, 0.05, 0.1, 0.2, 0.5, 1.0):
    a = allocate_finite(row, F, T, Q)
    print('%8.2f  %4d   %.3e   %.4f' % (F, a.size, a.xi2,
                                        error_sum(a, row)))

# equal error on every fed link, more bits to the strong ones
a = allocate_finite(row, 0.3, T, Q)
print('\nbits per block at F=0.3:', np.round(a.bits, 1))
print('residual error per link:',
      np.round(row[a.active] * 2.0 ** (Q - a.bits), 6))

# target-error rule: feed every link above the error level
for xdb in (-10, -15, -20, -25):
    a = allocate_infinite(row, 10 ** (xdb / 10), T, Q)
    F = a.feedback_rate
    print('target %d dB: %2d links, F=%.3f, predicted %d'
          % (xdb, a.size, F, antennas_for_budget(F, T, Q, cfg.alpha, net.b)))
