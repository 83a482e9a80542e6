#!/usr/bin/env python3
# End-to-end downlink: quantized feedback, triangular precoding with a
# modulo encoder, and the measured per-user rate.

import numpy as np

from ratebalance.allocator import allocate_cooperation_set
from ratebalance.experiments import ExperimentConfig, build_network
from ratebalance.lattice_sim import run_downlink

cfg = ExperimentConfig()
net = build_network(cfg)

base = run_downlink(net.gain, None, cfg.rho, 300, scheme='no-coop',
                    quantizer='perfect', residual=net.residual, T=cfg.T)
print('no cooperation: %.3f bps/Hz' % base.downlink_se)

print('\n  L  target   feedback  modulo MI   bound')
for L in (3, 6, 12):
    for xdb in (-20.0, -30.0):
        plan = [allocate_cooperation_set(r, L, 10 ** (xdb / 10), cfg.T,
                                         cfg.Q, i)
                for i, r in enumerate(net.gain)]
        res = run_downlink(net.gain, plan, cfg.rho, 100, seed=1,
                           residual=net.residual, T=cfg.T)
        print('%3d  %5.0f dB  %7.3f   %7.3f    %6.3f'
              % (L, xdb, res.feedback_se, res.downlink_se, res.bound_se))
