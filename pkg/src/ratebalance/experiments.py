"""
Configuration-driven sweeps producing plot-ready CSV tables.

Three sweeps are provided:

* ``run_tradeoff_sweep``: downlink versus feedback rate for fixed
  cooperation sizes, from the operational modulo simulation;
* ``run_balance_curve``: the same with the fed set chosen by the target
  error alone (every antenna stronger than it is fed);
* ``run_snr_sweep``: DP-ZF bound over SNR for fixed feedback rates and for
  a feedback rate that is a fixed fraction of the uplink rate.

Every sweep point is cached on disk under a key derived from its full
input, so interrupted sweeps resume and re-runs reproduce the CSV exactly.
"""

import csv
import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np
import yaml

from . import bounds
from .allocator import (FeedbackAllocation, allocate_cooperation_set,
                        allocate_finite, allocate_infinite,
                        antennas_for_budget)
from .fading import block_rng
from .lattice_sim import run_downlink
from .precoder import dpzf_rate, uplink_rate
from .topology import (build_hex_grid, corner_mobile, cyclic_gain_rows,
                       density_bound, reference_gain_row,
                       residual_interference_coeff)

__all__ = ['ExperimentConfig', 'Network', 'TradeoffCurve', 'CurvePoint',
           'build_network', 'limited_connectivity', 'no_cooperation_point',
           'run_tradeoff_sweep', 'tradeoff_crossings', 'tradeoff_envelope',
           'run_balance_curve', 'balance_tangents', 'local_slope',
           'run_snr_sweep', 'log_rho_slope', 'find_crossing',
           'upper_envelope', 'write_csv', 'read_csv', 'CSV_COLUMNS',
           'CSV_VERSION', 'default_out_dir']

CSV_VERSION = 1
CSV_COLUMNS = ('scheme', 'L_fed', 'feedback_se_bps_hz', 'downlink_se_bps_hz',
               'stderr', 'trials', 'seed', 'rho_db', 'xi2', 'L_tilde')
OUT_ENV = 'RATEBALANCE_OUT'

_SECTIONS = {
    'network': ('rings', 'trim_corners', 'antennas_per_site', 'alpha',
                'horizon_rings', 'residual'),
    'channel': ('rho_db', 'T'),
    'quantizer': ('quantizer',),
    'sweep': ('cooperation', 'xi2_db', 'feedback_grid', 'rho_db_grid',
              'proportional_rho_db_grid', 'connectivity', 'balance_L'),
    'feedback': ('r', 'kappa_ul'),
    'monte_carlo': ('trials', 'bound_trials', 'seed', 'bins', 'sinr_bin_db'),
}


def default_out_dir():
    return os.environ.get(OUT_ENV, 'results')


@dataclass
class ExperimentConfig:
    """Sweep configuration; defaults reproduce the reference setup.

    ``xi2_db`` is the grid of target quantization errors (dB relative to
    the strongest gain) swept by the tradeoff and balance runs; the
    feedback rate of each point is measured, not prescribed.
    """
    rings: int = 4
    trim_corners: bool = True
    antennas_per_site: int = 1
    alpha: float = 4.0
    horizon_rings: int = 400
    residual: float = None
    rho_db: float = 30.0
    T: int = 180
    quantizer: str = 'dithered-scalar'
    cooperation: list = field(default_factory=lambda: [3, 6, 12, 21])
    xi2_db: list = field(default_factory=lambda: list(
        np.round(np.arange(-40.0, -2.9, 1.0), 6)))
    feedback_grid: list = field(default_factory=lambda: [0.1, 0.2, 0.4])
    rho_db_grid: list = field(default_factory=lambda: list(
        np.arange(10.0, 60.1, 5.0)))
    proportional_rho_db_grid: list = field(default_factory=lambda: list(
        np.arange(20.0, 120.1, 10.0)))
    connectivity: int = 6
    balance_L: list = field(default_factory=lambda: [6, 12, 21])
    r: float = 0.03
    kappa_ul: float = 0.1
    trials: int = 200
    bound_trials: int = 400
    seed: int = 0
    bins: int = 32
    sinr_bin_db: float = 2.0

    def __post_init__(self):
        for name in ('cooperation', 'xi2_db', 'feedback_grid', 'rho_db_grid',
                     'proportional_rho_db_grid', 'balance_L'):
            vals = [float(v) for v in getattr(self, name)]
            if any(b <= a for a, b in zip(vals, vals[1:])):
                raise ValueError("%s must be strictly increasing" % name)
            setattr(self, name, [int(v) if name in ('cooperation',
                                                    'balance_L')
                                 else v for v in vals])
        if self.trials < 100:
            raise ValueError("trials must be >= 100")
        if self.quantizer not in ('dithered-scalar', 'rate-distortion-model'):
            raise ValueError("unknown quantizer %r" % self.quantizer)
        if not 0 < self.r <= 1:
            raise ValueError("r must lie in (0, 1]")
        if self.alpha <= 2:
            raise ValueError("alpha must exceed 2")

    @property
    def rho(self):
        return 10.0 ** (self.rho_db / 10.0)

    @property
    def Q(self):
        return 2 if self.quantizer == 'dithered-scalar' else 0

    @property
    def sim_quantizer(self):
        return 'scalar' if self.quantizer == 'dithered-scalar' else 'model'

    def replace(self, **kw):
        d = asdict(self)
        d.update(kw)
        return ExperimentConfig(**d)

    def to_dict(self):
        flat = asdict(self)
        return {sec: {k: _plain(flat[k]) for k in keys}
                for sec, keys in _SECTIONS.items()}

    @classmethod
    def from_dict(cls, data):
        flat = {}
        known = {f.name for f in fields(cls)}
        for key, val in (data or {}).items():
            if isinstance(val, dict):
                if key not in _SECTIONS:
                    raise ValueError("unknown config section %r" % key)
                for k, v in val.items():
                    if k not in _SECTIONS[key]:
                        raise ValueError("unknown key %s.%s" % (key, k))
                    flat[k] = v
            elif key in known:
                flat[key] = val
            else:
                raise ValueError("unknown config key %r" % key)
        return cls(**flat)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(yaml.safe_load(fh))

    def save(self, path):
        with open(path, 'w') as fh:
            yaml.safe_dump(self.to_dict(), fh, sort_keys=False)


def _plain(v):
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, np.generic):
        return v.item()
    return v


# -- network --------------------------------------------------------------

@dataclass
class Network:
    """Gain matrix of the cyclic user population plus its constants."""
    gain: np.ndarray
    residual: float
    b: float
    topology: object

    @property
    def num_users(self):
        return self.gain.shape[0]


def build_network(cfg):
    topo = build_hex_grid(cfg.rings, cfg.antennas_per_site,
                          trim_corners=cfg.trim_corners, alpha=cfg.alpha)
    topo = topo.with_mobiles(corner_mobile(topo)[None, :])
    if cfg.residual is None:
        topo.residual_noise_coeff = residual_interference_coeff(
            topo, cfg.horizon_rings)
    else:
        topo.residual_noise_coeff = float(cfg.residual)
    ref = reference_gain_row(topo)
    gain = cyclic_gain_rows(ref, topo.num_sites, stride=cfg.antennas_per_site)
    # density constant in the normalized-gain units used by the allocator
    d0 = np.min(np.hypot(*(topo.antenna_positions - topo.mobiles[0]).T))
    b = density_bound(topo) * d0 ** 2
    return Network(gain, topo.residual_noise_coeff, b, topo)


def limited_connectivity(gain, keep):
    """Zero all but the ``keep`` strongest gains of every row."""
    out = np.zeros_like(gain)
    for i, row in enumerate(gain):
        idx = np.argsort(-row, kind='stable')[:keep]
        out[i, idx] = row[idx]
    return out


# -- curves ---------------------------------------------------------------

@dataclass
class CurvePoint:
    feedback_se: float
    downlink_se: float
    stderr: float
    trials: int
    seed: int
    L_fed: float
    rho_db: float = float('nan')
    xi2: float = float('nan')
    L_tilde: float = float('nan')
    bound_se: float = float('nan')


@dataclass
class TradeoffCurve:
    scheme: str
    label: str
    points: list = field(default_factory=list)

    @property
    def feedback(self):
        return np.array([p.feedback_se for p in self.points])

    @property
    def downlink(self):
        return np.array([p.downlink_se for p in self.points])

    def sorted(self):
        pts = sorted(self.points, key=lambda p: (p.feedback_se,
                                                 p.downlink_se))
        return TradeoffCurve(self.scheme, self.label, pts)

    def rows(self):
        for p in self.points:
            yield {'scheme': self.scheme, 'L_fed': p.L_fed,
                   'feedback_se_bps_hz': p.feedback_se,
                   'downlink_se_bps_hz': p.downlink_se, 'stderr': p.stderr,
                   'trials': p.trials, 'seed': p.seed, 'rho_db': p.rho_db,
                   'xi2': p.xi2, 'L_tilde': p.L_tilde}


def write_csv(path, curves):
    """Versioned CSV: a ``# ratebalance-csv v1`` line, then the header."""
    with open(path, 'w', newline='') as fh:
        fh.write('# ratebalance-csv v%d\n' % CSV_VERSION)
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator='\n')
        w.writeheader()
        for c in curves:
            for row in c.rows():
                w.writerow({k: _fmt(v) for k, v in row.items()})


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def read_csv(path):
    with open(path) as fh:
        first = fh.readline()
        if not first.startswith('# ratebalance-csv v'):
            raise ValueError("not a ratebalance CSV")
        version = int(first.strip().rsplit('v', 1)[1])
        if version != CSV_VERSION:
            raise ValueError("unsupported CSV version %d" % version)
        return list(csv.DictReader(fh))


def upper_envelope(curves, grid=None):
    """Pointwise maximum of piecewise-linear curves on ``grid``."""
    if grid is None:
        grid = np.unique(np.concatenate([c.feedback for c in curves]))
    vals = np.full(len(grid), -np.inf)
    for c in curves:
        c = c.sorted()
        x, y = c.feedback, c.downlink
        inside = (grid >= x.min()) & (grid <= x.max())
        vals[inside] = np.maximum(vals[inside], np.interp(grid[inside], x, y))
    return np.asarray(grid), vals


def find_crossing(small, large, tol=0.0):
    """Feedback rate beyond which ``large`` stays above ``small``.

    Both curves are interpolated linearly on the union of their abscissas
    inside the common range. The crossing is the last sign change of
    ``large - small`` from ``<= tol`` to ``> tol``, located by linear
    interpolation. Returns NaN if ``large`` never ends above.
    """
    a, b = small.sorted(), large.sorted()
    lo = max(a.feedback.min(), b.feedback.min())
    hi = min(a.feedback.max(), b.feedback.max())
    x = np.unique(np.concatenate([a.feedback, b.feedback]))
    x = x[(x >= lo) & (x <= hi)]
    if x.size < 2:
        return float('nan')
    d = np.interp(x, b.feedback, b.downlink) - np.interp(x, a.feedback,
                                                         a.downlink)
    if d[-1] <= tol:
        return float('nan')
    below = np.nonzero(d <= tol)[0]
    if below.size == 0:
        return float(x[0])
    k = below[-1]
    x0, x1, d0, d1 = x[k], x[k + 1], d[k] - tol, d[k + 1] - tol
    return float(x0 + (x1 - x0) * (-d0) / (d1 - d0))


# -- cached point evaluation ----------------------------------------------

def _key(payload):
    blob = json.dumps(payload, sort_keys=True, default=_plain).encode()
    return hashlib.sha256(blob).hexdigest()[:24]


def _plan_digest(plan, gain):
    h = hashlib.sha256(np.ascontiguousarray(gain).tobytes())
    for p in plan:
        h.update(np.asarray(p.active, dtype=np.int64).tobytes())
        h.update(np.float64(p.xi2 if np.isfinite(p.xi2) else -1).tobytes())
    return h.hexdigest()[:24]


class _Cache:
    def __init__(self, root):
        self.root = root
        if root:
            os.makedirs(root, exist_ok=True)

    def get(self, key):
        if not self.root:
            return None
        path = os.path.join(self.root, key + '.json')
        if os.path.exists(path):
            with open(path) as fh:
                return json.load(fh)
        return None

    def put(self, key, value):
        if not self.root:
            return
        tmp = os.path.join(self.root, key + '.tmp')
        with open(tmp, 'w') as fh:
            json.dump(value, fh)
        os.replace(tmp, os.path.join(self.root, key + '.json'))


def _sim_point(args):
    gain, plan, rho, blocks, seed, scheme, quantizer, residual, T, bins, \
        sinr_bin_db = args
    res = run_downlink(gain, plan, rho, blocks, seed, scheme=scheme,
                       quantizer=quantizer, residual=residual, T=T,
                       bins=bins, sinr_bin_db=sinr_bin_db)
    return {'feedback_se': res.feedback_se, 'downlink_se': res.downlink_se,
            'stderr': res.stderr, 'bound_se': res.bound_se,
            'power': res.power, 'blocks': res.blocks}


def _run_points(jobs, cache, workers):
    """Evaluate ``(key, args)`` jobs, reusing cached results."""
    out = {}
    todo = []
    for key, args in jobs:
        if key in out:
            continue
        hit = cache.get(key)
        if hit is not None:
            out[key] = hit
        elif key not in [k for k, _ in todo]:
            todo.append((key, args))
    if workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sim_point, [a for _, a in todo]))
    else:
        results = [_sim_point(a) for _, a in todo]
    for (key, _), res in zip(todo, results):
        cache.put(key, res)
        out[key] = res
    return out


def _sim_job(cfg, net, plan, scheme='dp-modulo', quantizer=None, gain=None):
    gain = net.gain if gain is None else gain
    quantizer = quantizer or cfg.sim_quantizer
    args = (gain, plan, cfg.rho, cfg.trials, cfg.seed, scheme, quantizer,
            net.residual, cfg.T, cfg.bins, cfg.sinr_bin_db)
    key = _key({'v': CSV_VERSION, 'plan': _plan_digest(plan, gain),
                'rho': cfg.rho, 'blocks': cfg.trials, 'seed': cfg.seed,
                'scheme': scheme, 'quantizer': quantizer,
                'residual': net.residual, 'T': cfg.T, 'bins': cfg.bins,
                'sinr_bin_db': cfg.sinr_bin_db})
    return key, args


def _empty_plan(n, T, Q):
    return [FeedbackAllocation(mobile=i, T=T, Q=Q) for i in range(n)]


def _point(res, cfg, L_fed, xi2=float('nan'), L_tilde=float('nan')):
    return CurvePoint(res['feedback_se'], res['downlink_se'], res['stderr'],
                      cfg.trials, cfg.seed, L_fed, cfg.rho_db, xi2, L_tilde,
                      res['bound_se'])


def _cache_dir(out, name):
    return os.path.join(out, '.cache', name) if out else None


def no_cooperation_point(cfg, net, cache=None, workers=1):
    plan = _empty_plan(net.num_users, cfg.T, cfg.Q)
    key, args = _sim_job(cfg, net, plan, scheme='no-coop',
                         quantizer='perfect')
    res = _run_points([(key, args)], cache or _Cache(None), workers)[key]
    return _point(res, cfg, 1.0)


def run_tradeoff_sweep(cfg, out=None, workers=1, net=None):
    """One curve per cooperation size over the target-error grid.

    The zero-feedback point of every curve is the no-cooperation rate
    (each mobile served by its strongest site without CSI).
    """
    net = net or build_network(cfg)
    cache = _Cache(_cache_dir(out, 'tradeoff'))
    base = no_cooperation_point(cfg, net, cache, workers)
    jobs, meta = [], []
    for L in cfg.cooperation:
        for xdb in cfg.xi2_db:
            xi2 = 10.0 ** (xdb / 10.0)
            plan = [allocate_cooperation_set(row, L, xi2, cfg.T, cfg.Q, i)
                    for i, row in enumerate(net.gain)]
            if all(p.size == 0 for p in plan):
                continue
            key, args = _sim_job(cfg, net, plan)
            jobs.append((key, args))
            meta.append((L, key, xi2, np.mean([p.size for p in plan])))
    results = _run_points(jobs, cache, workers)
    curves = []
    for L in cfg.cooperation:
        c = TradeoffCurve('dp-modulo', 'L=%d' % L, [_copy(base, L_fed=0.0)])
        for L2, key, xi2, lf in meta:
            if L2 == L:
                c.points.append(_point(results[key], cfg, lf, xi2))
        curves.append(c.sorted())
    if out:
        os.makedirs(out, exist_ok=True)
        write_csv(os.path.join(out, 'tradeoff.csv'),
                  curves + [tradeoff_envelope(curves, cfg.seed)])
    return curves


def tradeoff_envelope(curves, seed=0):
    """Pointwise maximum of the fixed-size curves, as a curve whose
    ``L_fed`` is the cooperation size attaining it."""
    grid, vals = upper_envelope(curves)
    env = TradeoffCurve('upper-envelope', 'envelope')
    for F, v in zip(grid, vals):
        best = max(curves, key=lambda c: _value_at(c, F))
        L = float(best.label.split('=')[1]) if F > 0 else 0.0
        env.points.append(CurvePoint(float(F), float(v), float('nan'), 0,
                                     seed, L))
    return env


def _value_at(curve, F):
    c = curve.sorted()
    if not c.feedback.min() <= F <= c.feedback.max():
        return -np.inf
    return float(np.interp(F, c.feedback, c.downlink))


def _copy(p, **kw):
    d = asdict(p)
    d.update(kw)
    return CurvePoint(**d)


def tradeoff_crossings(curves):
    """Crossings of consecutive cooperation sizes, keyed ``(small, large)``."""
    out = {}
    for a, b in zip(curves, curves[1:]):
        out[(a.label, b.label)] = find_crossing(a, b)
    return out


def run_balance_curve(cfg, out=None, workers=1, net=None):
    """Feed every antenna stronger than the target error.

    Returns the DP-modulo curve, its ZF-baseline counterpart and the
    slope tangents at ``cfg.balance_L``. Each point also carries the fed
    count ``L_tilde`` predicted from its measured feedback rate.
    """
    net = net or build_network(cfg)
    cache = _Cache(_cache_dir(out, 'balance'))
    base = no_cooperation_point(cfg, net, cache, workers)
    jobs, meta = [], []
    for xdb in cfg.xi2_db:
        xi2 = 10.0 ** (xdb / 10.0)
        plan = [allocate_infinite(row, xi2, cfg.T, cfg.Q, i)
                for i, row in enumerate(net.gain)]
        if all(p.size == 0 for p in plan):
            continue
        lf = float(np.mean([p.size for p in plan]))
        for scheme in ('dp-modulo', 'zf-baseline'):
            key, args = _sim_job(cfg, net, plan, scheme=scheme)
            jobs.append((key, args))
            meta.append((scheme, key, xi2, lf))
    results = _run_points(jobs, cache, workers)
    curves = {s: TradeoffCurve(s, 'balance', [_copy(base, L_fed=0.0)])
              for s in ('dp-modulo', 'zf-baseline')}
    for scheme, key, xi2, lf in meta:
        res = results[key]
        F = res['feedback_se']
        lt = (antennas_for_budget(F, cfg.T, cfg.Q, cfg.alpha, net.b)
              if F > 0 else 0)
        curves[scheme].points.append(_point(res, cfg, lf, xi2, lt))
    curves = [c.sorted() for c in curves.values()]
    tangents = balance_tangents(cfg, curves[0])
    if out:
        os.makedirs(out, exist_ok=True)
        write_csv(os.path.join(out, 'balance.csv'), curves + [tangents])
    return curves, tangents


def balance_tangents(cfg, curve):
    """Approximate slopes at the first point fed with at least L antennas.

    Encoded as a curve whose ``downlink_se`` column holds the slope.
    """
    t = TradeoffCurve('slope-tangent', 'tangent')
    for L in cfg.balance_L:
        slope = bounds.prop1_slope(cfg.alpha, cfg.Q, cfg.T, L)
        anchor = next((p for p in curve.points if p.L_fed >= L), None)
        fb = anchor.feedback_se if anchor else float('nan')
        t.points.append(CurvePoint(fb, slope, float('nan'), 0, cfg.seed,
                                   float(L), cfg.rho_db))
    return t


def local_slope(curve, F, width=0.1):
    """Least-squares slope of the curve over ``[F - width, F + width]``."""
    c = curve.sorted()
    sel = np.abs(c.feedback - F) <= width
    if sel.sum() < 2:
        return float('nan')
    return float(np.polyfit(c.feedback[sel], c.downlink[sel], 1)[0])


# -- SNR sweep (analytical DP-ZF bound) -----------------------------------

def _bound_point(gain, plan, rho, trials, seed, tag, residual=0.0):
    rng = block_rng(seed, tag, 7)
    return dpzf_rate(gain, plan, rho, trials, rng, residual)


def run_snr_sweep(cfg, out=None, net=None):
    """DP-ZF bound over SNR with ``cfg.connectivity`` links per mobile.

    Links beyond the strongest ``connectivity`` ones carry no power, so
    no residual interference is added.

    Returns
    -------
    fixed : list of TradeoffCurve
        One curve per fixed feedback rate, over ``rho_db_grid``.
    proportional : TradeoffCurve
        Feedback ``r R_UL(kappa_ul rho)``, over the proportional grid.
    reference : TradeoffCurve
        Line of slope ``min(1, r T / L)`` through the last proportional
        point.
    """
    net = net or build_network(cfg)
    gain = limited_connectivity(net.gain, cfg.connectivity)
    N = gain.shape[0]
    L = cfg.connectivity
    fixed = []
    for fi, F in enumerate(cfg.feedback_grid):
        plan = [allocate_finite(row, F, cfg.T, cfg.Q, i)
                for i, row in enumerate(gain)]
        c = TradeoffCurve('dpzf-bound', 'F=%g' % F)
        for rdb in cfg.rho_db_grid:
            est = _bound_point(gain, plan, 10 ** (rdb / 10), cfg.bound_trials,
                               cfg.seed, fi)
            c.points.append(CurvePoint(F, est.mean, est.stderr, est.trials,
                                       cfg.seed, float(L), rdb,
                                       float(np.mean([p.xi2 for p in plan]))))
        fixed.append(c)
    prop = TradeoffCurve('dpzf-proportional', 'r=%g' % cfg.r)
    for k, rdb in enumerate(cfg.proportional_rho_db_grid):
        rho = 10 ** (rdb / 10)
        up = uplink_rate(gain.T, cfg.kappa_ul * rho, N, cfg.bound_trials,
                         block_rng(cfg.seed, k, 11))
        F = cfg.r * up.mean
        plan = [allocate_finite(row, F, cfg.T, cfg.Q, i)
                for i, row in enumerate(gain)]
        est = _bound_point(gain, plan, rho, cfg.bound_trials, cfg.seed, 1000)
        prop.points.append(CurvePoint(F, est.mean, est.stderr, est.trials,
                                      cfg.seed, float(L), rdb,
                                      float(np.mean([p.xi2 for p in plan]))))
    slope = bounds.th1_multiplexing(cfg.r, cfg.T, L)
    last = prop.points[-1]
    ref = TradeoffCurve('slope-reference', 'min(1,rT/L)')
    for rdb in cfg.proportional_rho_db_grid:
        val = last.downlink_se + slope * (rdb - last.rho_db) * np.log2(10) / 10
        ref.points.append(CurvePoint(float('nan'), val, float('nan'), 0,
                                     cfg.seed, float(L), rdb))
    if out:
        os.makedirs(out, exist_ok=True)
        write_csv(os.path.join(out, 'snr_sweep.csv'), fixed + [prop, ref])
    return fixed, prop, ref


def log_rho_slope(curve, lo_db, hi_db):
    """Slope of ``downlink_se`` against ``log2 rho`` between two SNRs."""
    pts = [p for p in curve.points if lo_db <= p.rho_db <= hi_db]
    x = np.array([p.rho_db for p in pts]) * np.log2(10) / 10
    y = np.array([p.downlink_se for p in pts])
    return float(np.polyfit(x, y, 1)[0])
