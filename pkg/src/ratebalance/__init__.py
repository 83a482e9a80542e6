"""Feedback-rate versus downlink-rate tradeoff in cooperating networks."""

from . import allocator, bounds, fading, lattice_sim, precoder, quantizer
from . import topology
from .allocator import (FeedbackAllocation, allocate_cooperation_set,
                        allocate_finite, allocate_infinite,
                        antennas_for_budget, error_sum)
from .fading import coherence_block, sample_downlink, sample_uplink
from .lattice_sim import estimate_mi, mod_cell, run_downlink
from .precoder import dpzf_rate, lq_decompose, uplink_rate, zf_rate
from .quantizer import QuantizerSpec, dithered_quantize, entropy_code
from .topology import (NetworkTopology, build_hex_grid, corner_mobile,
                       cyclic_gain_rows, reference_layout,
                       residual_interference_coeff)

__version__ = '0.1.0'
