"""
Operational downlink simulation with scalar modulo-lattice precoding.

Per coherence block: draw ``H``, quantize the fed entries, triangularize
the quantized matrix, pre-cancel known interference with a scalar modulo
encoder, pass through the true channel with thermal noise and residual
out-of-network interference, then undo the dither at the receiver. The
rate is estimated from the collected ``(v, y')`` pairs with histogram
entropies of ``y'`` and of the folded error ``e = mod(y' - v)``.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .allocator import active_mask, error_sum
from .fading import block_rng, complex_normal
from .precoder import lq_decompose, zf_gains
from .quantizer import (dithered_quantize, entropy_code, model_quantize,
                        rd_feedback_bits, step_for_error)

__all__ = ['CELL_HALF', 'PERIOD', 'mod_cell', 'uniform_cell',
           'encode_block', 'mmse_coefficient', 'decode_symbol',
           'cell_entropy', 'entropy_from_counts', 'estimate_mi',
           'SimResult', 'run_downlink', 'SCHEMES', 'QUANTIZERS']

CELL_HALF = np.sqrt(1.5)
PERIOD = np.sqrt(6.0)
SCHEMES = ('dp-modulo', 'zf-baseline', 'no-coop')
QUANTIZERS = ('scalar', 'model', 'perfect')


def _fold(t):
    return np.mod(t + CELL_HALF, PERIOD) - CELL_HALF


def mod_cell(x):
    """Fold real and imaginary parts into ``[-sqrt(1.5), sqrt(1.5))``."""
    x = np.asarray(x)
    if np.iscomplexobj(x):
        return _fold(x.real) + 1j * _fold(x.imag)
    return _fold(x)


def uniform_cell(rng, shape):
    """Complex samples uniform on the cell (unit power)."""
    return (rng.uniform(-CELL_HALF, CELL_HALF, shape)
            + 1j * rng.uniform(-CELL_HALF, CELL_HALF, shape))


def mmse_coefficient(l_ii, rho, budget):
    """Receiver scaling ``sqrt(rho) conj(l) / (rho |l|^2 + rho budget + 1)``.

    ``budget`` is the interference power per unit ``rho`` (quantization
    error sum plus residual interference).
    """
    l_ii = np.asarray(l_ii)
    out = (np.sqrt(rho) * np.conj(l_ii)
           / (rho * np.abs(l_ii) ** 2 + rho * np.asarray(budget) + 1.0))
    return out if np.ndim(out) else out.item()


def encode_block(v, state, a, u, rho=1.0, return_symbols=False):
    """Successive modulo encoding in user order.

    ``s_i = mod(v_i - sqrt(rho) a_i sum_{j<i} l_ij s_j - u_i)`` and
    ``x = Qmat[:N]^H s``. ``v`` and ``u`` have shape (N,) or (N, n).
    """
    v = np.asarray(v, dtype=complex)
    u = np.asarray(u, dtype=complex)
    a = np.asarray(a)
    Lm = state.L
    N = Lm.shape[0]
    s = np.zeros(v.shape, dtype=complex)
    w = np.sqrt(rho) * a
    for i in range(N):
        known = Lm[i, :i] @ s[:i] if i else 0.0
        s[i] = mod_cell(v[i] - w[i] * known - u[i])
    x = state.Qmat[:N].conj().T @ s
    return (x, s) if return_symbols else x


def decode_symbol(y, a, u):
    """``y' = mod(a y + u)``."""
    return mod_cell(np.asarray(a) * np.asarray(y) + np.asarray(u))


# -- entropy and mutual information ----------------------------------------

def _bin_index(z, bins):
    width = PERIOD / bins
    ir = np.clip(((z.real + CELL_HALF) / width).astype(np.int64), 0, bins - 1)
    ii = np.clip(((z.imag + CELL_HALF) / width).astype(np.int64), 0, bins - 1)
    return ir * bins + ii


def entropy_from_counts(counts, bins):
    """Differential entropy (bits) of a 2D cell histogram.

    Plug-in entropy with the Miller-Madow correction, plus the log-area of
    one bin.
    """
    counts = np.asarray(counts, dtype=float).ravel()
    n = counts.sum()
    if n <= 0:
        raise ValueError("empty histogram")
    p = counts[counts > 0] / n
    plug_in = -np.sum(p * np.log2(p))
    mm = (p.size - 1) / (2.0 * n * np.log(2.0))
    return float(plug_in + mm + 2.0 * np.log2(PERIOD / bins))


def cell_entropy(z, bins=32):
    z = np.asarray(z, dtype=complex).ravel()
    if z.size == 0:
        raise ValueError("no samples")
    return entropy_from_counts(np.bincount(_bin_index(z, bins),
                                           minlength=bins * bins), bins)


def estimate_mi(v, yp, bins=32):
    """``I(v; y') = h(y') - h(e)`` with ``e = mod(y' - v)``.

    Valid when ``e`` is independent of ``v``, which the uniform dither
    guarantees. The value lies in ``[-, 2 log2 bins]`` up to estimator
    noise.
    """
    if bins < 2:
        raise ValueError("need at least 2 bins per dimension")
    v = np.asarray(v, dtype=complex).ravel()
    yp = np.asarray(yp, dtype=complex).ravel()
    if v.size == 0 or v.size != yp.size:
        raise ValueError("need equally many, non-zero, v and y' samples")
    return cell_entropy(yp, bins) - cell_entropy(mod_cell(yp - v), bins)


# -- end-to-end simulation -------------------------------------------------

@dataclass
class SimResult:
    """Outcome of :func:`run_downlink`.

    Attributes
    ----------
    downlink_se : float
        Headline rate: the modulo MI for precoded schemes, the Gaussian
        instantaneous-SINR rate for ``no-coop``.
    mi_per_user : ndarray
        Modulo-scheme MI estimate of each user.
    mi_mean, mi_stderr : float
        Average over users; batch-means standard error.
    feedback_se : float
        Realized feedback bits per channel use, averaged over users.
    bound_se : float
        DP-ZF (or ZF) bound ``E log2(1 + SINR)`` with average interference.
    gaussian_se : float
        ``E log2(1 + SINR_inst)`` with the instantaneous interference
        power known at the receiver (``no-coop`` only, else NaN).
    power : float
        Empirical ``E ||x||^2 / N``.
    """
    scheme: str
    quantizer: str
    downlink_se: float
    stderr: float
    mi_per_user: np.ndarray
    mi_mean: float
    mi_stderr: float
    feedback_se: float
    feedback_per_user: np.ndarray
    bound_se: float
    gaussian_se: float
    power: float
    blocks: int
    symbols: int
    seed: int
    extra: dict = field(default_factory=dict)


@dataclass
class _Setup:
    gain: np.ndarray
    mask: np.ndarray
    xi2: np.ndarray
    S: np.ndarray
    rho: float
    residual: float
    scheme: str
    quantizer: str
    symbols: int
    bins: int
    edges_db: np.ndarray
    n_batches: int
    blocks: int
    seed: int
    serving: np.ndarray


class _Accumulator:
    """Mergeable per-chunk sums (histogram counts are exact integers)."""

    def __init__(self, setup):
        N = setup.gain.shape[0]
        n_strata = (setup.edges_db.size + 1 if setup.edges_db is not None
                    else N)
        kk = setup.bins * setup.bins
        shape = (setup.n_batches, n_strata, kk)
        self.hy = np.zeros(shape, np.int64)
        self.he = np.zeros(shape, np.int64)
        self.occupancy = np.zeros((N, n_strata), np.int64)
        self.bound = np.zeros(N)
        self.gauss = np.zeros(N)
        self.gauss_blocks = []
        self.power = 0.0
        self.blocks = 0
        self.levels = []
        self.level_rows = []

    def merge(self, other):
        self.hy += other.hy
        self.he += other.he
        self.occupancy += other.occupancy
        self.bound += other.bound
        self.gauss += other.gauss
        self.gauss_blocks += other.gauss_blocks
        self.power += other.power
        self.blocks += other.blocks
        self.levels += other.levels
        self.level_rows += other.level_rows
        return self


def _strata(setup, sinr):
    N = sinr.size
    if setup.edges_db is None:
        return np.arange(N)
    with np.errstate(divide='ignore'):
        db = 10.0 * np.log10(sinr)
    return np.searchsorted(setup.edges_db, db, side='right')


def _quantize(setup, H, rng):
    if setup.quantizer == 'perfect':
        return np.where(setup.mask, H, 0.0), None
    if setup.quantizer == 'model':
        return model_quantize(H, setup.gain, setup.mask, setup.xi2,
                              rng).H_hat, None
    qc = dithered_quantize(H, setup.gain, setup.mask, setup.xi2, rng)
    return qc.H_hat, qc.levels[setup.mask]


def _simulate_block(setup, b, acc):
    rng = block_rng(setup.seed, b, 0)
    gain, rho, n = setup.gain, setup.rho, setup.symbols
    N, M = gain.shape
    H = complex_normal(rng, gain.shape, gain)
    v = uniform_cell(rng, (N, n))
    u = uniform_cell(rng, (N, n))
    noise = complex_normal(rng, (N, n), 1.0 + setup.residual * rho)
    gauss = np.full(N, np.nan)

    if setup.scheme == 'no-coop':
        srv = setup.serving
        h_s = H[np.arange(N), srv]
        interf = (np.abs(H) ** 2).sum(axis=1) - np.abs(h_s) ** 2
        budget = interf + setup.residual
        x = np.zeros((M, n), dtype=complex)
        x[srv] = mod_cell(v - u)
        eff = np.abs(h_s) ** 2
        a = mmse_coefficient(h_s, rho, budget)
        sinr = rho * eff / (1.0 + rho * budget)
        gauss = np.log2(1.0 + sinr)
    else:
        H_hat, levels = _quantize(setup, H, rng)
        if levels is not None:
            acc.levels.append(levels)
        budget = setup.S + setup.residual
        if setup.scheme == 'dp-modulo':
            state = lq_decompose(H_hat)
            eff = state.diag ** 2
            a = mmse_coefficient(state.diag, rho, budget)
            x = encode_block(v, state, a, u, rho)
        else:
            g = zf_gains(H_hat)
            eff = g
            a = mmse_coefficient(np.sqrt(g), rho, budget)
            gram = H_hat @ H_hat.conj().T
            ok = g > 0
            W = np.zeros((M, N), dtype=complex)
            if np.any(ok):
                sub = np.ix_(ok, ok)
                W[:, ok] = H_hat[ok].conj().T @ np.linalg.inv(gram[sub])
                W[:, ok] /= np.linalg.norm(W[:, ok], axis=0)
            x = W @ mod_cell(v - u)
        sinr = rho * eff / (1.0 + rho * budget)

    y = np.sqrt(rho) * (H @ x) + noise
    yp = decode_symbol(y, np.asarray(a)[:, None], u)
    e = mod_cell(yp - v)

    stratum = _strata(setup, sinr)
    batch = b * setup.n_batches // setup.blocks
    kk = setup.bins * setup.bins
    flat = (stratum[:, None] * kk).repeat(n, axis=1)
    size = acc.hy.shape[1] * kk
    acc.hy[batch] += np.bincount((flat + _bin_index(yp, setup.bins)).ravel(),
                                 minlength=size).reshape(-1, kk)
    acc.he[batch] += np.bincount((flat + _bin_index(e, setup.bins)).ravel(),
                                 minlength=size).reshape(-1, kk)
    acc.occupancy[np.arange(N), stratum] += n
    acc.bound += np.log2(1.0 + sinr)
    if setup.scheme == 'no-coop':
        acc.gauss += gauss
        acc.gauss_blocks.append(float(gauss.mean()))
    acc.power += float(np.sum(np.abs(x) ** 2)) / (n * N)
    acc.blocks += 1


def _serving_antennas(gain):
    """Distinct strongest antenna per user, ties resolved by assignment."""
    best = gain >= gain.max(axis=1, keepdims=True) * (1 - 1e-12)
    rows, cols = linear_sum_assignment(np.where(best, 0.0, 1.0))
    if np.any(~best[rows, cols]):
        raise ValueError("no-coop needs a distinct strongest antenna per user")
    out = np.empty(gain.shape[0], dtype=int)
    out[rows] = cols
    return out


def _run_chunk(setup, start, stop):
    acc = _Accumulator(setup)
    for b in range(start, stop):
        _simulate_block(setup, b, acc)
    return acc


def _mi_of_strata(hy, he, bins):
    out = np.full(hy.shape[0], np.nan)
    for s in range(hy.shape[0]):
        if hy[s].sum() > 0:
            out[s] = (entropy_from_counts(hy[s], bins)
                      - entropy_from_counts(he[s], bins))
    return out


def _per_user(mi_strata, occupancy):
    w = occupancy / np.maximum(occupancy.sum(axis=1, keepdims=True), 1)
    return np.nansum(w * np.nan_to_num(mi_strata)[None, :], axis=1)


def _feedback_bits(setup, acc, T):
    """Average bits per block and user, and per user."""
    N = setup.gain.shape[0]
    rows, cols = np.nonzero(setup.mask)
    if setup.quantizer == 'perfect' or rows.size == 0:
        return np.zeros(N) if rows.size == 0 else np.full(N, np.nan)
    sig = setup.gain[rows, cols]
    xi = setup.xi2[rows]
    if setup.quantizer == 'model':
        bits = rd_feedback_bits(sig, xi)
    else:
        # streams with identical statistics share one two-pass Huffman code
        levels = np.stack(acc.levels)           # (blocks, entries, 2)
        keys = np.round(np.column_stack([np.log2(sig), np.log2(xi)]), 9)
        _, group = np.unique(keys, axis=0, return_inverse=True)
        group = np.asarray(group).ravel()
        bits = np.zeros(rows.size)
        for g in np.unique(group):
            sel = group == g
            stream = levels[:, sel].reshape(-1, 2)
            res = entropy_code(stream, sig[sel][0],
                               float(step_for_error(xi[sel][0])))
            bits[sel] = res.mean_bits
    per_user = np.bincount(rows, weights=bits, minlength=N)
    return per_user / T


def run_downlink(gain, plan, rho, blocks, seed=0, *, scheme='dp-modulo',
                 quantizer='scalar', residual=0.0, T=180, symbols=None,
                 bins=32, sinr_bin_db=2.0, sinr_range_db=(-30.0, 60.0),
                 n_batches=10, workers=1):
    """Simulate the downlink and estimate the per-user rate.

    Parameters
    ----------
    gain : ndarray, shape (N, M)
        Normalized link gains.
    plan : list of FeedbackAllocation or None
        Fed entries and their common error per user. None feeds every
        link (only meaningful with ``quantizer='perfect'``).
    rho : float
        Transmit SNR per antenna.
    blocks : int
        Coherence blocks simulated.
    scheme : {'dp-modulo', 'zf-baseline', 'no-coop'}
    quantizer : {'scalar', 'model', 'perfect'}
        Dithered scalar with Huffman accounting, rate-distortion model,
        or unquantized CSI on the fed entries.
    residual : float
        Out-of-network interference per unit ``rho``.
    T : int
        Coherence block length used for the feedback rate.
    symbols : int, optional
        Channel uses simulated per block (default ``T``).
    bins : int
        Histogram bins per real dimension.
    sinr_bin_db : float or None
        Width of the SINR strata. The MI is estimated separately for
        blocks whose receiver-side SINR ``rho l^2 / (1 + rho S)`` falls in
        the same bin and then averaged. None pools all blocks of a user.
    workers : int
        Processes; results do not depend on it beyond float summation
        order.
    """
    if scheme not in SCHEMES:
        raise ValueError("unknown scheme %r" % (scheme,))
    if quantizer not in QUANTIZERS:
        raise ValueError("unknown quantizer %r" % (quantizer,))
    if blocks < 1:
        raise ValueError("need at least one block")
    gain = np.atleast_2d(np.asarray(gain, dtype=float))
    N, M = gain.shape
    if N > M:
        raise ValueError("more users than antennas")
    if plan is None:
        mask = gain > 0
        xi2 = np.zeros(N)
        S = np.zeros(N)
    else:
        mask, xi2 = active_mask(plan, gain.shape)
        xi2 = np.where(np.isfinite(xi2), xi2, 1.0)
        S = np.array([error_sum(p, g) for p, g in zip(plan, gain)])
        if quantizer == 'perfect':
            S = np.where(mask, 0.0, gain).sum(axis=1)
    serving = _serving_antennas(gain) if scheme == 'no-coop' else None
    edges = None
    if sinr_bin_db is not None:
        lo, hi = sinr_range_db
        edges = np.arange(lo, hi + sinr_bin_db / 2, sinr_bin_db)
    n_batches = max(1, min(n_batches, blocks))
    setup = _Setup(gain, mask, xi2, S, float(rho), float(residual), scheme,
                   quantizer, int(symbols or T), int(bins), edges, n_batches,
                   int(blocks), int(seed), serving)

    bounds = np.linspace(0, blocks, max(1, workers) + 1).astype(int)
    chunks = [(bounds[k], bounds[k + 1]) for k in range(len(bounds) - 1)
              if bounds[k + 1] > bounds[k]]
    if workers > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_chunk, [setup] * len(chunks),
                                  *zip(*chunks)))
    else:
        parts = [_run_chunk(setup, a, b) for a, b in chunks]
    acc = parts[0]
    for p in parts[1:]:
        acc.merge(p)

    hy = acc.hy.sum(axis=0)
    he = acc.he.sum(axis=0)
    mi_user = _per_user(_mi_of_strata(hy, he, bins), acc.occupancy)
    mi_mean = float(mi_user.mean())
    if n_batches > 1:
        batch_mi = []
        for k in range(n_batches):
            occ = (acc.hy[k].sum(axis=1))[None, :]
            ms = _mi_of_strata(acc.hy[k], acc.he[k], bins)
            w = occ / max(occ.sum(), 1)
            batch_mi.append(float(np.nansum(w * np.nan_to_num(ms))))
        mi_err = float(np.std(batch_mi, ddof=1) / np.sqrt(n_batches))
    else:
        mi_err = float('nan')

    fb_user = _feedback_bits(setup, acc, T)
    bound_user = acc.bound / acc.blocks
    gauss_user = acc.gauss / acc.blocks
    if scheme == 'no-coop':
        headline = float(gauss_user.mean())
        gb = np.asarray(acc.gauss_blocks)
        head_err = (float(gb.std(ddof=1) / np.sqrt(gb.size)) if gb.size > 1
                    else float('nan'))
    else:
        headline, head_err = mi_mean, mi_err
    return SimResult(
        scheme=scheme, quantizer=quantizer, downlink_se=headline,
        stderr=head_err, mi_per_user=mi_user, mi_mean=mi_mean,
        mi_stderr=mi_err, feedback_se=float(np.mean(fb_user)),
        feedback_per_user=fb_user, bound_se=float(bound_user.mean()),
        gaussian_se=(float(gauss_user.mean()) if scheme == 'no-coop'
                     else float('nan')),
        power=acc.power / acc.blocks, blocks=acc.blocks,
        symbols=setup.symbols, seed=seed)
