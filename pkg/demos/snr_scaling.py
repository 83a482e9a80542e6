#!/usr/bin/env python3
# Rate bound against SNR with six links per mobile: fixed feedback
# saturates, feedback that grows with the uplink does not.

from ratebalance.bounds import th1_multiplexing
from ratebalance.experiments import (ExperimentConfig, build_network,
                                     log_rho_slope, run_snr_sweep)

cfg = ExperimentConfig(bound_trials=100)
fixed, prop, ref = run_snr_sweep(cfg, None, build_network(cfg))

print('rho dB ' + ''.join('%9s' % c.label for c in fixed))
for k, p in enumerate(fixed[0].points):
    print('%6.0f ' % p.rho_db
          + ''.join('%9.3f' % c.points[k].downlink_se for c in fixed))

print('\nproportional feedback (r=%g):' % cfg.r)
for p in prop.points:
    print('  %5.0f dB  F=%.3f  rate %.3f' % (p.rho_db, p.feedback_se,
                                             p.downlink_se))
print('slope vs log2(rho) over the top 40 dB: %.3f (predicted %.3f)'
      % (log_rho_slope(prop, prop.points[-1].rho_db - 40,
                       prop.points[-1].rho_db),
         th1_multiplexing(cfg.r, cfg.T, cfg.connectivity)))
