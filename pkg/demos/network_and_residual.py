#!/usr/bin/env python3
# The 55-site patch, the corner mobile and what the rest of the plane adds.

import numpy as np

from ratebalance.experiments import ExperimentConfig, build_network
from ratebalance.topology import (build_hex_grid, corner_mobile,
                                  reference_gain_row,
                                  residual_interference_coeff)
from ratebalance.bounds import sinr_ceiling_db

topo = build_hex_grid(4, trim_corners=True)
topo = topo.with_mobiles(corner_mobile(topo)[None, :])
print('sites', topo.num_sites, ' mobile at', np.round(topo.mobiles[0], 4))

row = reference_gain_row(topo)
print('strongest gains', np.round(row[:8], 4))
print('links within 10 dB of the best:', int(np.sum(row > 0.1)))

# interference of every site outside the patch, in units of the best gain
for horizon in (50, 100, 200, 400):
    c = residual_interference_coeff(topo, horizon, tol=1e-3)
    print('horizon %3d rings: %.7f' % (horizon, c))

c = residual_interference_coeff(topo, 400)
for db in (10, 20, 30, 40):
    print('rho %2d dB -> perfect-CSI SINR ceiling %.2f dB'
          % (db, sinr_ceiling_db(10 ** (db / 10), c)))

net = build_network(ExperimentConfig())
print('gain matrix', net.gain.shape, ' density constant b =', net.b)
