"""
Rayleigh block fading and coherence-block sizing.

Random draws go through :func:`block_rng`, which derives an independent
generator from ``(seed, stream, block)``. A block therefore gets the same
channel no matter which worker produces it or in what order.
"""

import struct
from dataclasses import dataclass

import numpy as np

__all__ = ['CoherenceSpec', 'ChannelRealization', 'coherence_block',
           'block_rng', 'complex_normal', 'sample_downlink', 'sample_uplink',
           'dump_realizations', 'load_realizations']


@dataclass(frozen=True)
class CoherenceSpec:
    """Coherence block derived from Doppler and delay spread.

    ``coherence_time_s`` and ``coherence_bandwidth_hz`` are the two factors
    whose product is the block length ``T`` (in channel uses).
    """
    doppler_hz: float
    delay_spread_s: float
    sensitivity_factor: float
    coherence_time_s: float
    coherence_bandwidth_hz: float
    T: int

    def counts(self, subcarrier_spacing_hz):
        """Integer ``(T_t, B)``: OFDM symbols and frequency bins per block."""
        T_t = max(1, int(round(self.coherence_time_s * subcarrier_spacing_hz)))
        B = max(1, int(round(self.coherence_bandwidth_hz
                             / subcarrier_spacing_hz)))
        return T_t, B


def coherence_block(doppler_hz, delay_spread_s, sensitivity_factor=40.0):
    """Block length ``T = 1 / (c^2 f_d t_d)`` rounded to an integer.

    Raises
    ------
    ValueError
        If an input is not positive or the channel is too fast (``T < 1``).
    """
    if doppler_hz <= 0 or delay_spread_s <= 0 or sensitivity_factor <= 0:
        raise ValueError("all coherence inputs must be positive")
    t_coh = 1.0 / (sensitivity_factor * doppler_hz)
    b_coh = 1.0 / (sensitivity_factor * delay_spread_s)
    T = int(round(t_coh * b_coh))
    if T < 1:
        raise ValueError("channel varies too fast for the block model (T < 1)")
    return CoherenceSpec(doppler_hz, delay_spread_s, sensitivity_factor,
                         t_coh, b_coh, T)


def block_rng(seed, block=0, stream=0):
    """Generator for one ``(seed, stream, block)`` triple."""
    return np.random.default_rng(np.random.SeedSequence([seed, stream, block]))


def complex_normal(rng, shape, var=1.0):
    """Proper complex Gaussian samples with variance ``var`` (broadcast)."""
    scale = np.sqrt(np.asarray(var, dtype=float) / 2.0)
    return scale * (rng.standard_normal(shape)
                    + 1j * rng.standard_normal(shape))


@dataclass
class ChannelRealization:
    H: np.ndarray
    block: int = 0
    stream: int = 0


def sample_downlink(gain, rng=None, *, seed=0, block=0, stream=0):
    """Draw ``H`` with ``H[i, j] ~ CN(0, gain[i, j])``.

    Pass ``rng`` to draw from an existing generator, otherwise the block
    generator for ``(seed, stream, block)`` is used.
    """
    gain = np.asarray(gain, dtype=float)
    if rng is None:
        rng = block_rng(seed, block, stream)
    return ChannelRealization(complex_normal(rng, gain.shape, gain),
                              block, stream)


def sample_uplink(gain_ul, rng=None, *, seed=0, block=0, stream=1):
    """Uplink ``M x N`` matrix; ``gain_ul`` is already antenna-major."""
    return sample_downlink(gain_ul, rng, seed=seed, block=block,
                           stream=stream).H


_HEADER = struct.Struct('<qqq')


def dump_realizations(path, matrices):
    """Write blocks as ``N, M, count`` then interleaved little-endian doubles."""
    arr = np.asarray(matrices, dtype=np.complex128)
    if arr.ndim == 2:
        arr = arr[None]
    count, N, M = arr.shape
    with open(path, 'wb') as fh:
        fh.write(_HEADER.pack(N, M, count))
        fh.write(arr.astype('<c16').tobytes(order='C'))


def load_realizations(path):
    with open(path, 'rb') as fh:
        N, M, count = _HEADER.unpack(fh.read(_HEADER.size))
        data = np.frombuffer(fh.read(), dtype='<c16')
    return data.reshape(count, N, M).astype(np.complex128)
