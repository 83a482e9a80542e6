"""
Fast invariant checks, runnable from the command line (``validate``).

Each check returns ``(name, passed, detail)``.
"""

import numpy as np

from . import bounds
from .allocator import allocate_finite
from .fading import block_rng, complex_normal
from .lattice_sim import encode_block, mmse_coefficient, uniform_cell
from .precoder import lq_decompose
from .quantizer import scalar_quantize

__all__ = ['run_invariants']


def _lq(rng):
    worst = 0.0
    for _ in range(50):
        M = int(rng.integers(1, 17))
        N = int(rng.integers(1, M + 1))
        H = complex_normal(rng, (N, M))
        st = lq_decompose(H)
        rec = np.linalg.norm(st.L @ st.Qmat - H) / np.linalg.norm(H)
        uni = np.abs(st.Qmat @ st.Qmat.conj().T - np.eye(M)).max()
        worst = max(worst, rec, uni)
    return 'lq reconstruction/unitarity', worst < 1e-10, worst


def _equal_error(rng):
    worst = 0.0
    for _ in range(200):
        g = rng.exponential(size=int(rng.integers(1, 9)))
        a = allocate_finite(g, rng.uniform(0, 3), 10, Q=int(rng.choice([0, 2])))
        if a.size:
            err = g[a.active] * 2.0 ** (a.Q - a.bits)
            worst = max(worst, err.max() / err.min() - 1)
    return 'allocator equal error', worst < 1e-12, worst


def _power(rng):
    N = M = 8
    H = complex_normal(rng, (N, M))
    st = lq_decompose(H)
    a = mmse_coefficient(st.diag, 100.0, 0.01)
    n = 20000
    x = encode_block(uniform_cell(rng, (N, n)), st, a,
                     uniform_cell(rng, (N, n)), 100.0)
    p = np.mean(np.sum(np.abs(x) ** 2, axis=0)) / N
    return 'power constraint', abs(p - 1) < 0.01, p


def _round_trip(rng):
    worst = 0.0
    for _ in range(200):
        alpha = rng.uniform(2.5, 6)
        b = rng.uniform(1, 10)
        T = int(rng.integers(1, 500))
        Q = int(rng.choice([0, 2]))
        x = rng.uniform(1.01, 100)
        xi2 = (x / b) ** (-alpha / 2)
        F = bounds.f_tilde(xi2, b, T, alpha, Q)
        back = bounds.xi_of_budget(F, b, T, alpha, Q, clamp=False)
        worst = max(worst, abs(back / xi2 - 1))
    return 'f_tilde round trip', worst < 1e-9, worst


def _v_bound(rng):
    x = rng.uniform(1, 1000, 10000)
    ok = True
    for alpha in (2.5, 3, 4, 6):
        ok &= bool(np.all(bounds.V_of(x, alpha) <= bounds.c0(alpha) + 1e-12))
    return 'V <= c0', ok, None


def _quantizer(rng):
    h = complex_normal(rng, 200000)
    step = 0.25
    _, hh, _ = scalar_quantize(h, step, rng)
    var = np.mean(np.abs(h - hh) ** 2)
    return ('dithered error variance', abs(var / (step ** 2 / 6) - 1) < 0.01,
            var)


def _error_sum_bound(rng):
    ok = True
    for _ in range(100):
        pts = rng.uniform(-20, 20, (400, 2))
        d = np.sort(np.hypot(pts[:, 0], pts[:, 1]))
        alpha = 4.0
        g = d ** -alpha
        b = np.max(np.arange(1, d.size + 1) / d ** 2)
        xi2 = g[0] * 10 ** rng.uniform(-3, -0.1)
        if b * xi2 ** (-2 / alpha) < 1:
            continue
        fed = g > xi2
        s = fed.sum() * xi2 + g[~fed].sum()
        ok &= s <= bounds.error_sum_bound(xi2, b, alpha) * (1 + 1e-12)
    return 'error sum <= bound', bool(ok), None


def run_invariants(seed=0):
    rng = block_rng(seed, 0, 99)
    checks = (_lq, _equal_error, _power, _round_trip, _v_bound, _quantizer,
              _error_sum_bound)
    return [c(rng) for c in checks]
