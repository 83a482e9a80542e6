"""
CSI quantization and feedback bit accounting.

Two quantizers are provided:

* a rate-distortion model, which draws the quantized channel from the
  backward Gaussian test channel (error independent of the reproduction);
* an operational dithered scalar quantizer whose integer levels are
  entropy coded with a per-stream Huffman code.
"""

import heapq
import struct
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .fading import complex_normal

__all__ = ['QuantizerSpec', 'QuantizedChannel', 'rd_feedback_bits',
           'scalar_feedback_bound', 'step_for_error', 'model_quantize',
           'scalar_quantize', 'dithered_quantize', 'HuffmanCode',
           'entropy_code', 'escape_limit', 'encode_feedback_payload',
           'decode_feedback_payload']

RD_MODEL = 'rate-distortion-model'
DITHERED_SCALAR = 'dithered-scalar'

# fixed-width raw level after an escape symbol (per real dimension)
ESCAPE_BITS = 16
ESCAPE = None


@dataclass(frozen=True)
class QuantizerSpec:
    kind: str
    xi2: float

    def __post_init__(self):
        if self.kind not in (RD_MODEL, DITHERED_SCALAR):
            raise ValueError("unknown quantizer kind %r" % (self.kind,))
        if self.xi2 <= 0:
            raise ValueError("target error must be positive")

    @property
    def Q(self):
        return 0 if self.kind == RD_MODEL else 2

    @property
    def step(self):
        return step_for_error(self.xi2)


def step_for_error(xi2):
    """Step size whose dithered error power ``step**2 / 6`` equals ``xi2``."""
    return np.sqrt(6.0 * np.asarray(xi2, dtype=float))


def rd_feedback_bits(sigma2, xi2):
    """Bits per block for a Gaussian source at distortion ``xi2``."""
    sigma2 = np.asarray(sigma2, dtype=float)
    xi2 = np.asarray(xi2, dtype=float)
    with np.errstate(divide='ignore', invalid='ignore'):
        bits = np.where(xi2 < sigma2, np.log2(sigma2 / xi2), 0.0)
    return bits if bits.ndim else float(bits)


def scalar_feedback_bound(sigma2, xi2):
    """Entropy bound ``2 + log2(sigma2 / xi2)`` of the dithered quantizer."""
    sigma2 = np.asarray(sigma2, dtype=float)
    xi2 = np.asarray(xi2, dtype=float)
    with np.errstate(divide='ignore', invalid='ignore'):
        bits = np.where(xi2 < sigma2, 2.0 + np.log2(sigma2 / xi2), 0.0)
    return bits if bits.ndim else float(bits)


@dataclass
class QuantizedChannel:
    """Quantized matrix with its per-entry error powers.

    ``levels`` and ``dither`` are only filled by the scalar quantizer;
    inactive entries have zero levels and zero dither.
    """
    H_hat: np.ndarray
    error_var: np.ndarray
    active: np.ndarray
    levels: np.ndarray = None
    dither: np.ndarray = None
    emitted_bits: np.ndarray = field(default=None)


def _per_entry_error(gain, active, xi2):
    gain = np.asarray(gain, dtype=float)
    xi2 = np.broadcast_to(np.asarray(xi2, dtype=float).reshape(-1, 1)
                          if np.ndim(xi2) else xi2, gain.shape)
    return np.where(active, xi2, gain)


def model_quantize(H, gain, active, xi2, rng):
    """Rate-distortion surrogate of optimal quantization.

    Given the true channel, the reproduction is drawn from the backward
    test channel ``H_hat = c H + sqrt(c xi2) n`` with
    ``c = 1 - xi2 / sigma2``. This gives ``Var(H_hat) = sigma2 - xi2`` and
    an error ``H - H_hat`` of power ``xi2`` uncorrelated with ``H_hat``.

    Parameters
    ----------
    H : ndarray, shape (N, M)
    gain : ndarray, shape (N, M)
    active : ndarray of bool, shape (N, M)
    xi2 : float or ndarray, shape (N,)
        Common error power of the active entries of each row.
    rng : numpy.random.Generator
    """
    H = np.asarray(H)
    gain = np.asarray(gain, dtype=float)
    active = np.asarray(active, dtype=bool)
    err = _per_entry_error(gain, active, xi2)
    if np.any(active & (err > gain)):
        raise ValueError("active entries need xi2 <= sigma2")
    with np.errstate(divide='ignore', invalid='ignore'):
        c = np.where(active, 1.0 - err / gain, 0.0)
    noise = complex_normal(rng, H.shape, np.where(active, c * err, 0.0))
    H_hat = np.where(active, c * H + noise, 0.0)
    bits = np.where(active, rd_feedback_bits(gain, err), 0.0).sum(axis=-1)
    return QuantizedChannel(H_hat, err, active, emitted_bits=bits)


def scalar_quantize(h, step, rng=None, dither=None):
    """Dithered uniform quantization of complex values.

    Returns
    -------
    levels : ndarray of int, shape ``h.shape + (2,)``
        Real and imaginary integer level.
    h_hat : ndarray
        ``step * level - dither``.
    dither : ndarray
        The dither used, uniform on the centered ``step`` square.
    """
    h = np.asarray(h, dtype=complex)
    step = np.asarray(step, dtype=float)
    if np.any(step <= 0):
        raise ValueError("step must be positive")
    if dither is None:
        if rng is None:
            raise ValueError("need rng or an explicit dither")
        dither = step * (rng.uniform(-0.5, 0.5, h.shape)
                         + 1j * rng.uniform(-0.5, 0.5, h.shape))
    shifted = (h + dither) / step
    lr = np.round(shifted.real)
    li = np.round(shifted.imag)
    h_hat = step * (lr + 1j * li) - dither
    levels = np.stack([lr, li], axis=-1).astype(np.int64)
    return levels, h_hat, dither


def dithered_quantize(H, gain, active, xi2, rng):
    """Scalar-quantize the active entries of ``H`` at error power ``xi2``.

    ``emitted_bits`` is left empty: the entropy-coded size depends on a
    codebook trained over many blocks (see :func:`entropy_code`).
    """
    H = np.asarray(H, dtype=complex)
    gain = np.asarray(gain, dtype=float)
    active = np.asarray(active, dtype=bool)
    err = _per_entry_error(gain, active, xi2)
    step = np.where(active, step_for_error(np.where(active, err, 1.0)), 1.0)
    levels, h_hat, dither = scalar_quantize(H, step, rng)
    H_hat = np.where(active, h_hat, 0.0)
    levels = np.where(active[..., None], levels, 0)
    dither = np.where(active, dither, 0.0)
    return QuantizedChannel(H_hat, err, active, levels, dither)


# -- entropy coding ---------------------------------------------------------

def escape_limit(sigma2, step):
    """Largest level magnitude coded directly: ``ceil(8 sigma / step)``."""
    return int(np.ceil(8.0 * np.sqrt(sigma2) / step))


class HuffmanCode:
    """Canonical Huffman code over hashable symbols.

    ``None`` is reserved for the escape symbol.
    """

    def __init__(self, lengths):
        self.lengths = dict(lengths)
        self.codes = self._canonical(self.lengths)

    @classmethod
    def from_counts(cls, counts):
        counts = {s: c for s, c in counts.items() if c > 0}
        if not counts:
            raise ValueError("empty symbol stream")
        if len(counts) == 1:
            # degenerate alphabet still spends one bit per symbol
            return cls({next(iter(counts)): 1})
        heap = [(c, k, (s,)) for k, (s, c) in
                enumerate(sorted(counts.items(), key=_sort_key))]
        heapq.heapify(heap)
        lengths = Counter()
        tick = len(heap)
        while len(heap) > 1:
            c1, _, g1 = heapq.heappop(heap)
            c2, _, g2 = heapq.heappop(heap)
            for s in g1 + g2:
                lengths[s] += 1
            heapq.heappush(heap, (c1 + c2, tick, g1 + g2))
            tick += 1
        return cls(lengths)

    @staticmethod
    def _canonical(lengths):
        codes = {}
        code = 0
        prev = 0
        for sym, length in sorted(lengths.items(),
                                  key=lambda kv: (kv[1], _sort_key(kv))):
            code <<= (length - prev)
            codes[sym] = (code, length)
            code += 1
            prev = length
        return codes

    def total_bits(self, counts):
        return sum(self.lengths[s] * c for s, c in counts.items())

    def encode(self, symbols):
        """Bit string (str of '0'/'1') of a symbol sequence."""
        return ''.join(format(self.codes[s][0], '0%db' % self.codes[s][1])
                       for s in symbols)

    def decode(self, bits, count):
        table = {format(c, '0%db' % n): s for s, (c, n) in self.codes.items()}
        out = []
        pos = 0
        while len(out) < count:
            for n in range(1, 64):
                sym = table.get(bits[pos:pos + n], _MISSING)
                if sym is not _MISSING:
                    out.append(sym)
                    pos += n
                    break
            else:
                raise ValueError("corrupt prefix-code stream")
        return out, pos


_MISSING = object()


def _sort_key(item):
    sym = item[0]
    return (sym is None, sym if sym is not None else ())


@dataclass
class EntropyCodeResult:
    code: HuffmanCode
    total_bits: int
    symbols: int
    mean_bits: float
    entropy: float


def _symbols(levels, limit):
    levels = np.asarray(levels).reshape(-1, 2)
    out = []
    for lr, li in levels:
        if abs(lr) > limit or abs(li) > limit:
            out.append(ESCAPE)
        else:
            out.append((int(lr), int(li)))
    return out, levels


def level_counts(levels, limit):
    """Symbol counts of a level stream, escaped beyond ``limit``."""
    levels = np.asarray(levels).reshape(-1, 2)
    esc = np.any(np.abs(levels) > limit, axis=1)
    counts = Counter()
    if np.any(~esc):
        keys, cnt = np.unique(levels[~esc], axis=0, return_counts=True)
        for (lr, li), c in zip(keys, cnt):
            counts[(int(lr), int(li))] = int(c)
    if np.any(esc):
        counts[ESCAPE] = int(esc.sum())
    return counts


def entropy_code(levels, sigma2=None, step=None, counts=None):
    """Two-pass Huffman coding of one antenna's level stream.

    Each complex coefficient is one symbol (the pair of real and imaginary
    levels). Levels beyond ``8 sigma / step`` are sent as an escape symbol
    followed by ``2 * ESCAPE_BITS`` raw bits.

    Parameters
    ----------
    levels : ndarray, shape (n, 2)
    sigma2, step : float
        Source power and quantizer step, for the escape threshold. If
        omitted no level is escaped.
    counts : Counter, optional
        Precomputed symbol counts (e.g. merged from parallel workers).
    """
    limit = (escape_limit(sigma2, step) if sigma2 is not None
             else np.iinfo(np.int64).max)
    if counts is None:
        counts = level_counts(levels, limit)
    n = sum(counts.values())
    if n == 0:
        raise ValueError("empty level stream")
    code = HuffmanCode.from_counts(counts)
    bits = code.total_bits(counts) + counts.get(ESCAPE, 0) * 2 * ESCAPE_BITS
    p = np.array(list(counts.values()), dtype=float) / n
    entropy = float(-(p * np.log2(p)).sum())
    return EntropyCodeResult(code, int(bits), n, bits / n, entropy)


# -- payload serialization --------------------------------------------------

def encode_feedback_payload(antennas, steps, level_streams, codes, limits):
    """Serialize one mobile's feedback for bit-accounting checks.

    Layout: ``uint16`` antenna count, then per antenna ``uint16`` index,
    ``float64`` step and ``uint32`` symbol count; then per antenna the
    prefix-coded stream padded to a byte boundary.
    """
    header = struct.pack('<H', len(antennas))
    body = b''
    for a, step, levels, code, limit in zip(antennas, steps, level_streams,
                                            codes, limits):
        syms, raw = _symbols(levels, limit)
        header += struct.pack('<HdI', a, step, len(syms))
        bits = []
        for s, (lr, li) in zip(syms, raw):
            c, n = code.codes[s]
            bits.append(format(c, '0%db' % n))
            if s is ESCAPE:
                bits.append(_raw(lr) + _raw(li))
        stream = ''.join(bits)
        stream += '0' * (-len(stream) % 8)
        body += int(stream, 2).to_bytes(len(stream) // 8, 'big') if stream \
            else b''
    return header + body


def _raw(level):
    return format(int(level) & ((1 << ESCAPE_BITS) - 1),
                  '0%db' % ESCAPE_BITS)


def _unraw(bits):
    v = int(bits, 2)
    return v - (1 << ESCAPE_BITS) if v >= 1 << (ESCAPE_BITS - 1) else v


def decode_feedback_payload(payload, codes):
    """Inverse of :func:`encode_feedback_payload`.

    Returns a list of ``(antenna, step, levels)``.
    """
    (count,) = struct.unpack_from('<H', payload, 0)
    pos = 2
    heads = []
    for _ in range(count):
        heads.append(struct.unpack_from('<HdI', payload, pos))
        pos += struct.calcsize('<HdI')
    out = []
    bits = ''.join(format(b, '08b') for b in payload[pos:])
    offset = 0
    for (a, step, n), code in zip(heads, codes):
        table = {format(c, '0%db' % k): s for s, (c, k) in code.codes.items()}
        levels = []
        p = offset
        while len(levels) < n:
            for k in range(1, 64):
                sym = table.get(bits[p:p + k], _MISSING)
                if sym is not _MISSING:
                    p += k
                    break
            else:
                raise ValueError("corrupt prefix-code stream")
            if sym is ESCAPE:
                lr = _unraw(bits[p:p + ESCAPE_BITS])
                li = _unraw(bits[p + ESCAPE_BITS:p + 2 * ESCAPE_BITS])
                p += 2 * ESCAPE_BITS
                levels.append((lr, li))
            else:
                levels.append(sym)
        used = p - offset
        offset += used + (-used % 8)
        out.append((a, step, np.array(levels, dtype=np.int64).reshape(-1, 2)))
    return out
