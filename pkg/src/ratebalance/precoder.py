"""
Triangular (DP-ZF) and linear ZF precoding rates from quantized CSI, and the
uplink rate that prices the feedback.

All rates are in bits per channel use per user. ``rho`` multiplies the
pure path-loss gains exactly once, here.
"""

from dataclasses import dataclass

import numpy as np

from .allocator import active_mask, error_sum
from .fading import complex_normal
from .quantizer import model_quantize

__all__ = ['PrecoderState', 'RateEstimate', 'lq_decompose', 'lq_diagonal',
           'dpzf_rate', 'zf_rate', 'zf_gains', 'interference_budget',
           'quantized_channels', 'uplink_rate', 'uplink_rate_of',
           'uplink_offset_g', 'uplink_offset_limit']


@dataclass
class PrecoderState:
    """``H_hat = L @ Qmat`` with ``L`` lower triangular.

    Attributes
    ----------
    L : ndarray, shape (N, M)
        Lower triangular, real non-negative diagonal.
    Qmat : ndarray, shape (M, M)
        Unitary; its first N rows span the row space of ``H_hat``.
    diag : ndarray, shape (N,)
        ``l_ii``.
    deficient : ndarray of bool, shape (N,)
        Rows linearly dependent on the earlier ones (``l_ii`` = 0).
    """
    L: np.ndarray
    Qmat: np.ndarray
    diag: np.ndarray
    deficient: np.ndarray


def lq_decompose(H_hat, rtol=1e-12):
    """LQ factorization through the QR factorization of ``H_hat^H``.

    Phases are fixed so that the diagonal of ``L`` is real and
    non-negative. Diagonal entries below ``rtol * ||H_hat||`` are set to
    zero and flagged in ``deficient``.
    """
    H_hat = np.atleast_2d(np.asarray(H_hat, dtype=complex))
    N, M = H_hat.shape
    if N > M:
        raise ValueError("LQ needs at least as many antennas as users")
    Q1, R = np.linalg.qr(H_hat.conj().T, mode='complete')
    d = np.diagonal(R)[:N]
    mag = np.abs(d)
    ph = np.ones(M, dtype=complex)
    nz = mag > 0
    ph[:N][nz] = d[nz] / mag[nz]
    Q1 = Q1 * ph[None, :]
    R = R * ph.conj()[:, None]
    L = R.conj().T
    Qmat = Q1.conj().T
    scale = np.linalg.norm(H_hat)
    deficient = mag <= rtol * scale if scale > 0 else np.ones(N, bool)
    if np.any(deficient):
        # Householder QR lets a dependent row consume a direction, which
        # would zero the diagonal of the next independent row too
        return _lq_skipping(H_hat, rtol * scale)
    L[np.arange(N), np.arange(N)] = mag
    return PrecoderState(L, Qmat, mag, deficient)


def _lq_skipping(H_hat, tol):
    """Row-by-row Gram-Schmidt in which dependent rows get ``l_ii = 0``
    and leave their direction to be filled by the orthogonal complement."""
    N, M = H_hat.shape
    Qmat = np.zeros((M, M), dtype=complex)
    L = np.zeros((N, M), dtype=complex)
    found = np.zeros(M, dtype=bool)
    for i in range(N):
        r = H_hat[i].copy()
        for _ in range(2):           # re-orthogonalize once
            c = Qmat[found].conj() @ r
            r -= c @ Qmat[found]
        L[i, found] = Qmat[found].conj() @ H_hat[i]
        norm = np.linalg.norm(r)
        if norm > tol:
            Qmat[i] = r / norm
            found[i] = True
            L[i, i] = np.vdot(Qmat[i], H_hat[i]).real
    # complete the basis in the unused rows
    Q1, _ = np.linalg.qr(Qmat[found].conj().T, mode='complete')
    Qmat[~found] = Q1[:, found.sum():].conj().T
    deficient = ~found[:N]
    diag = np.where(deficient, 0.0, np.real(np.diagonal(L)))
    return PrecoderState(L, Qmat, diag, deficient)


def lq_diagonal(H_hat, rtol=1e-12):
    """``|l_ii|`` only; ``H_hat`` may be stacked, shape (..., N, M)."""
    H_hat = np.asarray(H_hat, dtype=complex)
    R = np.linalg.qr(np.swapaxes(H_hat, -1, -2).conj(), mode='r')
    d = np.abs(np.diagonal(R, axis1=-2, axis2=-1))
    scale = np.linalg.norm(H_hat, axis=(-2, -1))[..., None]
    bad = np.any(d <= rtol * scale, axis=-1)
    if d.ndim == 1:
        return lq_decompose(H_hat, rtol).diag if bad else d
    for idx in zip(*np.nonzero(bad)):
        d[idx] = lq_decompose(H_hat[idx], rtol).diag
    return d


def zf_gains(H_hat):
    """Effective ZF gains ``1 / [(H_hat H_hat^H)^-1]_ii``.

    Each user's beam is a unit-norm column of the pseudo-inverse, so the
    total power matches the triangular scheme. Users of a singular Gram
    matrix get zero.
    """
    H_hat = np.asarray(H_hat, dtype=complex)
    gram = H_hat @ np.swapaxes(H_hat, -1, -2).conj()
    out = np.zeros(H_hat.shape[:-1])
    it = np.ndindex(H_hat.shape[:-2])
    for idx in it:
        G = gram[idx]
        try:
            c = np.linalg.cond(G)
            if not np.isfinite(c) or c > 1e14:
                raise np.linalg.LinAlgError
            inv_diag = np.real(np.diagonal(np.linalg.inv(G)))
            out[idx] = np.where(inv_diag > 0, 1.0 / inv_diag, 0.0)
        except np.linalg.LinAlgError:
            out[idx] = 0.0
    return out


@dataclass
class RateEstimate:
    """Monte Carlo rate, averaged over users and trials.

    ``stderr`` is the sample standard deviation of the per-trial user
    average divided by ``sqrt(trials)``; it is NaN (and ``flagged``) for a
    single trial.
    """
    mean: float
    stderr: float
    trials: int
    per_user: np.ndarray = None
    flagged: bool = False

    def to_row(self):
        return {'mean': self.mean, 'stderr': self.stderr,
                'trials': self.trials}


def _estimate(samples):
    """``samples`` has shape (trials, users)."""
    samples = np.asarray(samples, dtype=float)
    per_trial = samples.mean(axis=1)
    n = per_trial.size
    if n < 2:
        return RateEstimate(float(per_trial.mean()), float('nan'), n,
                            samples.mean(axis=0), flagged=True)
    return RateEstimate(float(per_trial.mean()),
                        float(per_trial.std(ddof=1) / np.sqrt(n)), n,
                        samples.mean(axis=0))


def _as_plan(gain, allocation):
    gain = np.atleast_2d(np.asarray(gain, dtype=float))
    if allocation is None:
        return gain, None
    if not isinstance(allocation, (list, tuple)):
        allocation = [allocation]
    if len(allocation) != gain.shape[0]:
        raise ValueError("one allocation per gain row is required")
    return gain, list(allocation)


def interference_budget(gain, allocation, residual=0.0):
    """Per-user residual interference power (without ``rho``).

    ``allocation=None`` means perfect CSI on every link.
    """
    gain, plan = _as_plan(gain, allocation)
    if plan is None:
        return np.full(gain.shape[0], float(residual))
    return np.array([error_sum(a, g) for a, g in zip(plan, gain)]) + residual


def quantized_channels(gain, allocation, trials, rng):
    """Stacked ``(trials, N, M)`` quantized channels drawn from the
    rate-distortion model (or perfect CSI when ``allocation`` is None)."""
    gain, plan = _as_plan(gain, allocation)
    H = complex_normal(rng, (trials,) + gain.shape, gain)
    if plan is None:
        return H
    mask, xi2 = active_mask(plan, gain.shape)
    xi2 = np.where(np.isfinite(xi2), xi2, 1.0)
    return np.stack([model_quantize(h, gain, mask, xi2, rng).H_hat
                     for h in H])


def _rate_from_gains(eff, S, rho):
    return np.log2(1.0 + rho * eff / (1.0 + rho * S))


def dpzf_rate(gain, allocation, rho, trials, rng, residual=0.0):
    """Monte Carlo DP-ZF lower bound
    ``E log2(1 + rho l_ii^2 / (1 + rho (S_i + residual)))``.

    Parameters
    ----------
    gain : ndarray, shape (N, M) or (M,)
    allocation : FeedbackAllocation, list of them (one per row) or None
        None gives perfect CSI.
    rho : float
    trials : int
    rng : numpy.random.Generator
    residual : float
        Unsimulated interference, per unit ``rho``.
    """
    if rho < 0:
        raise ValueError("rho must be non-negative")
    S = interference_budget(gain, allocation, residual)
    H_hat = quantized_channels(gain, allocation, trials, rng)
    l2 = lq_diagonal(H_hat) ** 2
    return _estimate(_rate_from_gains(l2, S, rho))


def zf_rate(gain, allocation, rho, trials, rng, residual=0.0):
    """Linear ZF counterpart of :func:`dpzf_rate` (same draws for the
    same ``rng`` state)."""
    if rho < 0:
        raise ValueError("rho must be non-negative")
    S = interference_budget(gain, allocation, residual)
    H_hat = quantized_channels(gain, allocation, trials, rng)
    return _estimate(_rate_from_gains(zf_gains(H_hat), S, rho))


def uplink_rate_of(H_ul, rho_ul):
    """``(1/N) log2 det(I + rho_ul H^H H)`` for stacked ``(.., M, N)``."""
    H_ul = np.asarray(H_ul, dtype=complex)
    N = H_ul.shape[-1]
    gram = np.swapaxes(H_ul, -1, -2).conj() @ H_ul
    sign, logdet = np.linalg.slogdet(np.eye(N) + rho_ul * gram)
    return np.real(logdet) / np.log(2.0) / N


def uplink_rate(gain_ul, rho_ul, N, trials, rng, samples=None):
    """Per-user uplink rate with ``M x N`` channel ``H_ul``.

    ``samples`` (stacked channel matrices) replaces the random draws.
    """
    if rho_ul < 0:
        raise ValueError("rho_ul must be non-negative")
    if samples is None:
        gain_ul = np.atleast_2d(np.asarray(gain_ul, dtype=float))
        if gain_ul.shape[1] != N:
            raise ValueError("uplink gain must be M x N")
        samples = complex_normal(rng, (trials,) + gain_ul.shape, gain_ul)
    samples = np.asarray(samples, dtype=complex)
    if samples.ndim == 2:
        samples = samples[None]
    r = uplink_rate_of(samples, rho_ul)
    return _estimate(r[:, None])


def uplink_offset_g(gain_ul, rho, kappa_ul, r, N, trials, rng,
                    samples=None):
    """``g(rho) = r R_UL(kappa_ul rho) - r log2 rho``.

    The feedback rate ``F = r R_UL`` then reads ``r log2 rho + g(rho)``.
    """
    est = uplink_rate(gain_ul, kappa_ul * rho, N, trials, rng, samples)
    return r * est.mean - r * np.log2(rho)


def uplink_offset_limit(gain_ul, kappa_ul, r, N, trials, rng, samples=None):
    """High-SNR limit ``(r/N) E log2 det(kappa_ul H^H H)`` of
    :func:`uplink_offset_g`.

    Returns
    -------
    value : float
    skipped : int
        Singular draws left out of the average.
    """
    if samples is None:
        gain_ul = np.atleast_2d(np.asarray(gain_ul, dtype=float))
        samples = complex_normal(rng, (trials,) + gain_ul.shape, gain_ul)
    samples = np.asarray(samples, dtype=complex)
    if samples.ndim == 2:
        samples = samples[None]
    gram = np.swapaxes(samples, -1, -2).conj() @ samples
    sign, logdet = np.linalg.slogdet(kappa_ul * gram)
    ok = (np.abs(sign) > 0) & np.isfinite(logdet)
    if not np.any(ok):
        raise ValueError("every draw is singular")
    val = r / N * np.mean(np.real(logdet[ok])) / np.log(2.0)
    return float(val), int((~ok).sum())
