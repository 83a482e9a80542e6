#!/usr/bin/env python3
# Downlink rate bought with uplink feedback, for a reduced sweep.
# Full-size runs: `ratebalance tradeoff` and `ratebalance balance`.

import tempfile

import numpy as np

from ratebalance.bounds import prop1_slope
from ratebalance.experiments import (ExperimentConfig, build_network,
                                     run_balance_curve, run_tradeoff_sweep,
                                     tradeoff_crossings)

cfg = ExperimentConfig(trials=100, xi2_db=list(np.arange(-36.0, -9.0, 2.0)))
net = build_network(cfg)
out = tempfile.mkdtemp()

curves = run_tradeoff_sweep(cfg, out, net=net)
for c in curves:
    print('%-5s peak %.2f bps/Hz at F=%.2f' % (
        c.label, c.downlink.max(), c.feedback[np.argmax(c.downlink)]))
for (a, b), x in tradeoff_crossings(curves).items():
    print('%s overtakes %s at F=%.3f' % (b, a, x))

(dp, zf), tangents = run_balance_curve(cfg, out, net=net)
print('\nfeedback  DP-modulo  ZF')
for p, q in zip(dp.points, zf.points):
    print('%7.3f  %8.3f  %6.3f' % (p.feedback_se, p.downlink_se,
                                   q.downlink_se))
for L in cfg.balance_L:
    print('approximate slope with %2d fed sites: %.2f'
          % (L, prop1_slope(cfg.alpha, cfg.Q, cfg.T, L)))
print('\nCSV files in', out)
