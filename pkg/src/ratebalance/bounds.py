"""
Closed-form rate bounds and the infinite-network auxiliary functions.

Notation used throughout: ``T`` coherence block length, ``L`` number of fed
antennas, ``Q`` quantizer overhead in bits (0 optimal, 2 scalar), ``alpha``
path-loss exponent, ``b`` antenna-density constant and ``r`` the fraction of
the uplink rate spent on feedback.
"""

import warnings

import numpy as np

__all__ = ['LOG2E', 'th1_exchange_ratio', 'th1_multiplexing', 'th2_exponent',
           'prop1_slope', 'breve_rate', 'time_sharing_envelope', 'V_of', 'c0',
           'f_tilde', 'xi_of_budget', 'g_tilde', 'g_tilde_log_derivative',
           'r_tilde', 'xi_upper_bound', 'error_sum_bound', 'sinr_ceiling_db',
           'SingleAntennaRegimeWarning']

LOG2E = np.log2(np.e)


class SingleAntennaRegimeWarning(UserWarning):
    """Budget below the single-antenna point; the inverse was clamped."""


def _check_alpha(alpha):
    if alpha <= 2:
        raise ValueError("path-loss exponent must exceed 2")


def th1_exchange_ratio(T, L):
    """Downlink bits gained per feedback bit in a finite network."""
    if L < 1:
        raise ValueError("L must be >= 1")
    return T / L


def th1_multiplexing(r, T, L):
    """Multiplexing gain with feedback at a fixed uplink fraction ``r``."""
    return min(1.0, r * T / L)


def th2_exponent(alpha):
    _check_alpha(alpha)
    return alpha / 2.0 - 1.0


def prop1_slope(alpha, Q, T, L):
    """Approximate downlink/feedback slope of an infinite network."""
    a = alpha * LOG2E
    return (1.0 - 2.0 / alpha) * (T / L) * a / (a + 2.0 * Q)


def breve_rate(F, gain_row, L, Q, T, diag_samples):
    """Interference-limited rate with every connected antenna fed.

    Parameters
    ----------
    F : float or array_like
        Feedback rate (bits per channel use).
    gain_row : array_like
        Gains of the mobile; the ``L`` strongest are the connected ones.
    diag_samples : array_like
        Draws of ``|l_ii|^2``; the expectation is their sample mean.
    """
    gain_row = np.sort(np.asarray(gain_row, dtype=float))[::-1][:L]
    if gain_row.size < L or L < 1:
        raise ValueError("need 1 <= L <= len(gain_row)")
    l2 = np.asarray(diag_samples, dtype=float).ravel()
    F = np.asarray(F, dtype=float)
    log_geo = np.mean(np.log2(gain_row))
    # log2 of the error-sum denominator
    log_den = np.log2(L) + Q + log_geo - F[..., None] * T / L
    with np.errstate(divide='ignore'):
        snr = np.log2(l2) - log_den
    out = np.mean(np.logaddexp2(0.0, snr), axis=-1)
    return out if out.ndim else float(out)


def time_sharing_envelope(rate_fn, F, n_grid=64, eta_min=1e-4):
    """Best time sharing between no feedback and rate ``F / eta``.

    ``max_eta (1 - eta) rate(0) + eta rate(F / eta)`` over a geometric grid
    of ``eta`` in ``[eta_min, 1]`` followed by a golden-section refinement
    around the best grid point.

    Returns
    -------
    value : float
    eta : float
        Maximizing fraction.
    """
    if F < 0:
        raise ValueError("feedback rate must be non-negative")
    r0 = float(rate_fn(0.0))
    if F == 0:
        return r0, 1.0

    def objective(log_eta):
        eta = np.exp(log_eta)
        return (1.0 - eta) * r0 + eta * float(rate_fn(F / eta))

    grid = np.linspace(np.log(eta_min), 0.0, n_grid)
    vals = np.array([objective(g) for g in grid])
    k = int(np.argmax(vals))
    lo = grid[max(k - 1, 0)]
    hi = grid[min(k + 1, n_grid - 1)]
    best_x, best_v = grid[k], vals[k]
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = objective(c), objective(d)
    for _ in range(60):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = objective(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = objective(d)
    for x, v in ((c, fc), (d, fd)):
        if v > best_v:
            best_x, best_v = x, v
    return float(best_v), float(np.exp(best_x))


def V_of(x, alpha):
    """Correction factor of the integral error-sum bound (``x >= 1``)."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 1):
        raise ValueError("V is defined for x >= 1")
    fx = np.floor(x)
    ratio = fx / x
    out = ratio * (1.0 + (2.0 / alpha) * (ratio ** (-alpha / 2.0) - 1.0))
    return out if out.ndim else float(out)


def c0(alpha):
    """Uniform upper bound of :func:`V_of` over ``x >= 1``."""
    return 1.0 + (2.0 / alpha) * (2.0 ** (alpha / 2.0) - 1.0)


def _x(xi2, b, alpha):
    return b * np.asarray(xi2, dtype=float) ** (-2.0 / alpha)


def f_tilde(xi2, b, T, alpha, Q):
    """Feedback-rate bound at target error ``xi2`` (bits per channel use)."""
    if np.any(np.asarray(xi2) <= 0):
        raise ValueError("xi2 must be positive")
    a = alpha * LOG2E
    return _x(xi2, b, alpha) * (a + 2.0 * Q) / (2.0 * T) - a / (2.0 * T)


def xi_of_budget(F, b, T, alpha, Q, clamp=True):
    """Inverse of :func:`f_tilde`.

    Below the budget of the single-antenna point (``b xi^(-4/alpha) = 1``)
    the result is clamped to that point and a
    :class:`SingleAntennaRegimeWarning` is issued.
    """
    if F <= 0:
        raise ValueError("feedback rate must be positive")
    a = alpha * LOG2E
    x = (2.0 * T * F + a) / (a + 2.0 * Q)
    if x < 1:
        if not clamp:
            raise ValueError("budget below the single-antenna regime")
        warnings.warn("budget below the single-antenna regime; clamped",
                      SingleAntennaRegimeWarning, stacklevel=2)
        x = 1.0
    return float((x / b) ** (-alpha / 2.0))


def g_tilde(xi2, b, alpha):
    """Smooth upper envelope of the (scaled) error sum.

    Requires ``b xi^(-4/alpha) > 1``.
    """
    x = _x(xi2, b, alpha)
    if np.any(x <= 1):
        raise ValueError("g_tilde needs b * xi^(-4/alpha) > 1")
    xi2 = np.asarray(xi2, dtype=float)
    out = xi2 * (x - 1.0) * (1.0 + (2.0 / alpha) * (
        (x - 1.0) ** (-alpha / 2.0) / (b ** (-alpha / 2.0) * xi2) - 1.0))
    return out if out.ndim else float(out)


def g_tilde_log_derivative(xi2, b, alpha):
    """``(1 / G) dG / d(xi2)`` of :func:`g_tilde`, in closed form.

    With ``x = b xi2^(-2/alpha)``,
    ``dG/d(xi2) = (1 - 2/alpha) (x - 1 - (2/alpha) x
    + (2/alpha) b^(alpha/2) (x - 1)^(-alpha/2) x / xi2)``.
    """
    x = _x(xi2, b, alpha)
    xi2 = np.asarray(xi2, dtype=float)
    k = 2.0 / alpha
    dG = (1.0 - k) * (x - 1.0 - k * x
                      + k * b ** (alpha / 2.0) * (x - 1.0) ** (-alpha / 2.0)
                      * x / xi2)
    out = dG / g_tilde(xi2, b, alpha)
    return out if out.ndim else float(out)


def r_tilde(rho, xi2, b, alpha, diag_samples):
    """Rate bound built on :func:`g_tilde` (no ``1 +`` in the log)."""
    l2 = np.asarray(diag_samples, dtype=float).ravel()
    den = 1.0 + rho * alpha / (alpha - 2.0) * g_tilde(xi2, b, alpha)
    return float(np.mean(np.log2(rho * l2 / den)))


def xi_upper_bound(rho, r, T, alpha, Q, b, g_value=0.0):
    """Largest target error compatible with ``F = r R_UL``."""
    if rho <= 1:
        raise ValueError("rho must exceed 1")
    a = alpha * LOG2E
    inner = (2.0 * T * r * np.log2(rho) + 2.0 * T * g_value + a) / (
        a + 2.0 * Q)
    return float(b ** (alpha / 2.0) * inner ** (-alpha / 2.0))


def error_sum_bound(xi2, b, alpha, use_c0=False):
    """Upper bound on the residual-interference sum of a dense network."""
    x = _x(xi2, b, alpha)
    if np.any(x < 1):
        raise ValueError("error_sum_bound needs b * xi^(-4/alpha) >= 1")
    factor = c0(alpha) if use_c0 else V_of(x, alpha)
    out = (b * alpha / (alpha - 2.0) * np.asarray(xi2) ** (1.0 - 2.0 / alpha)
           * factor)
    return out if np.ndim(out) else float(out)


def sinr_ceiling_db(rho, residual_coeff):
    """Best SINR when only thermal noise and residual interference remain."""
    return float(10.0 * np.log10(rho / (1.0 + residual_coeff * rho)))
