#!/usr/bin/env python3
# Dithered scalar quantization of channel coefficients and the cost of
# sending the levels with a Huffman code.

import numpy as np

from ratebalance.fading import block_rng, complex_normal
from ratebalance.quantizer import (entropy_code, rd_feedback_bits,
                                   scalar_feedback_bound, scalar_quantize,
                                   step_for_error)

rng = block_rng(7)
h = complex_normal(rng, 200000)

print('sigma2/xi2   rd bits  bound  entropy  huffman')
for ratio in (4, 16, 64, 256, 1024):
    xi2 = 1.0 / ratio
    step = step_for_error(xi2)
    levels, h_hat, _ = scalar_quantize(h, step, rng)
    err = np.mean(np.abs(h - h_hat) ** 2)
    res = entropy_code(levels, 1.0, step)
    print('%10d   %6.2f  %5.2f   %6.2f   %6.2f   (error %.4f vs %.4f)'
          % (ratio, rd_feedback_bits(1.0, xi2),
             scalar_feedback_bound(1.0, xi2), res.entropy, res.mean_bits,
             err, xi2))

# the error does not depend on the coefficient it corrupts
levels, h_hat, _ = scalar_quantize(h, 0.3, rng)
e = h - h_hat
print('corr(error, h) = %.4f' % np.corrcoef(e.real, h.real)[0, 1])
