"""
Per-mobile feedback allocation.

A mobile spends ``F * T`` bits per coherence block. Quantizing antenna j
with ``b_j > Q`` bits leaves an error ``sigma2_j * 2 ** (Q - b_j)``; an
antenna without feedback leaves its full power ``sigma2_j`` as residual
interference. The allocation minimizes the summed error.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import bounds

__all__ = ['FeedbackAllocation', 'allocate_finite', 'allocate_infinite',
           'allocate_cooperation_set', 'error_sum', 'antennas_for_budget',
           'active_mask', 'dump_allocations']


@dataclass
class FeedbackAllocation:
    """Feedback plan of one mobile.

    Attributes
    ----------
    active : ndarray of int
        Fed antenna indices, strongest first.
    bits : ndarray of float
        Bits per block for each entry of ``active``.
    water_level : float
        ``lambda'``; active antennas get ``log2(sigma2) - lambda'`` bits.
    xi2 : float
        Common error power of the active antennas, ``2 ** (Q + lambda')``.
    total_bits : float
        Bits per coherence block (``F * T``).
    threshold : float
        Activation threshold ``sigma0^2``.
    """
    mobile: int = 0
    active: np.ndarray = field(default_factory=lambda: np.zeros(0, int))
    bits: np.ndarray = field(default_factory=lambda: np.zeros(0))
    water_level: float = np.inf
    xi2: float = np.inf
    total_bits: float = 0.0
    T: int = 1
    Q: int = 0
    threshold: float = np.inf
    lambda_A: float = np.inf

    @property
    def size(self):
        return len(self.active)

    @property
    def feedback_rate(self):
        """Bits per channel use."""
        return self.total_bits / self.T

    def to_dict(self):
        return {
            'mobile': int(self.mobile),
            'water_level': _finite(self.water_level),
            'xi2': _finite(self.xi2),
            'antennas': [[int(a), float(b)]
                         for a, b in zip(self.active, self.bits)],
        }


def _finite(x):
    return float(x) if np.isfinite(x) else None


def _order(gain_row):
    gain_row = np.asarray(gain_row, dtype=float)
    return np.argsort(-gain_row, kind='stable')


def allocate_finite(gain_row, F, T, Q=0, mobile=0):
    """Optimal water-filling split of ``F`` bits per channel use.

    Candidate active sets are the prefixes of the descending-gain order.
    For each prefix the water level follows from spending the budget
    exactly; prefixes where some antenna would get ``<= Q`` bits are
    infeasible. The feasible prefix with the least summed error wins, the
    empty set included.
    """
    gain_row = np.asarray(gain_row, dtype=float)
    if F < 0:
        raise ValueError("feedback rate must be non-negative")
    budget = F * T
    empty = FeedbackAllocation(mobile=mobile, T=T, Q=Q)
    order = _order(gain_row)
    order = order[gain_row[order] > 0]
    if budget <= Q or order.size == 0:
        return empty
    logs = np.log2(gain_row[order])
    total = gain_row.sum()
    best, best_err = None, total
    csum = np.cumsum(logs)
    tail = total - np.cumsum(gain_row[order])
    for L in range(1, order.size + 1):
        lam = (csum[L - 1] - budget) / L
        bits = logs[:L] - lam
        if bits[-1] <= Q:
            continue
        err = L * 2.0 ** (Q + lam) + tail[L - 1]
        if err < best_err:
            best, best_err = (L, lam, bits), err
    if best is None:
        return empty
    L, lam, bits = best
    return FeedbackAllocation(
        mobile=mobile, active=order[:L].copy(), bits=bits.copy(),
        water_level=float(lam), xi2=float(2.0 ** (Q + lam)),
        total_bits=float(bits.sum()), T=T, Q=Q,
        threshold=float(gain_row[order[L - 1]]),
        lambda_A=float(logs[L - 1]))


def allocate_infinite(gain_row, xi2, T, Q=0, mobile=0, candidates=None):
    """Feed every antenna stronger than the target error ``xi2``.

    Each active antenna gets ``Q + log2(sigma2 / xi2)`` bits. ``candidates``
    optionally restricts feedback to a cooperation set of antenna indices.
    """
    if xi2 <= 0:
        raise ValueError("target error must be positive")
    gain_row = np.asarray(gain_row, dtype=float)
    order = _order(gain_row)
    if candidates is not None:
        keep = np.zeros(gain_row.size, dtype=bool)
        keep[np.asarray(candidates, dtype=int)] = True
        order = order[keep[order]]
    order = order[gain_row[order] > xi2]
    bits = Q + np.log2(gain_row[order] / xi2)
    return FeedbackAllocation(
        mobile=mobile, active=order, bits=bits, water_level=np.log2(xi2) - Q,
        xi2=float(xi2), total_bits=float(bits.sum()), T=T, Q=Q,
        threshold=float(xi2),
        lambda_A=float(np.log2(gain_row[order[-1]])) if order.size
        else np.inf)


def allocate_cooperation_set(gain_row, cooperation, xi2, T, Q=2, mobile=0):
    """:func:`allocate_infinite` restricted to the ``cooperation`` strongest
    antennas of the row."""
    return allocate_infinite(gain_row, xi2, T, Q, mobile,
                             candidates=_order(gain_row)[:cooperation])


def error_sum(allocation, gain_row):
    """Residual interference power: ``xi2`` per fed antenna, ``sigma2``
    for the rest."""
    gain_row = np.asarray(gain_row, dtype=float)
    unfed = np.ones(gain_row.size, dtype=bool)
    unfed[allocation.active] = False
    fed = allocation.size * allocation.xi2 if allocation.size else 0.0
    return float(fed + gain_row[unfed].sum())


def active_mask(allocations, shape):
    """Boolean ``(N, M)`` mask and per-row error powers of a plan."""
    mask = np.zeros(shape, dtype=bool)
    xi2 = np.full(shape[0], np.inf)
    for i, alloc in enumerate(allocations):
        mask[i, alloc.active] = True
        xi2[i] = alloc.xi2
    return mask, xi2


def antennas_for_budget(F, T, Q, alpha, b, gain_row=None):
    """Predicted fed-antenna count ``floor(b * xi ** (-4 / alpha))``.

    ``xi2`` is the target error at which the infinite-network feedback
    bound equals ``F``.
    """
    if F <= 0:
        raise ValueError("feedback rate must be positive")
    xi2 = bounds.xi_of_budget(F, b, T, alpha, Q, clamp=True)
    return int(np.floor(b * xi2 ** (-2.0 / alpha) * (1 + 1e-12)))


def dump_allocations(path, allocations):
    with open(path, 'w') as fh:
        json.dump([a.to_dict() for a in allocations], fh, indent=2)
