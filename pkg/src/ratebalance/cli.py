"""
Command line entry point: ``ratebalance <command> [options]``.

Sweeps write CSV files to ``--out`` (default ``$RATEBALANCE_OUT`` or
``./results``). ``eval`` prints single closed-form values in full
precision.
"""

import argparse
import logging
import os
import sys

import numpy as np

from . import bounds, experiments
from .fading import block_rng, coherence_block
from .precoder import lq_diagonal, quantized_channels
from .topology import build_hex_grid, corner_mobile, \
    residual_interference_coeff
from .validation import run_invariants


def _config(args):
    cfg = (experiments.ExperimentConfig.load(args.config) if args.config
           else experiments.ExperimentConfig())
    over = {}
    if args.seed is not None:
        over['seed'] = args.seed
    if args.trials is not None:
        over['trials'] = args.trials
    return cfg.replace(**over) if over else cfg


def _out(args):
    out = args.out or experiments.default_out_dir()
    os.makedirs(out, exist_ok=True)
    return out


def cmd_topology(args):
    cfg = _config(args)
    net = experiments.build_network(cfg)
    out = _out(args)
    net.topology.save(os.path.join(out, 'topology.json'))
    np.savetxt(os.path.join(out, 'gain.csv'), net.gain, delimiter=',',
               fmt='%.17g')
    print('sites %d  antennas %d  users %d' % (
        net.topology.num_sites, net.topology.num_antennas, net.num_users))
    print('mobile', repr(net.topology.mobiles[0].tolist()))
    print('residual_noise_coeff', repr(net.residual))
    print('density_b', repr(net.b))
    return 0


def cmd_tradeoff(args):
    cfg = _config(args)
    curves = experiments.run_tradeoff_sweep(cfg, _out(args), args.workers)
    for (a, b), x in experiments.tradeoff_crossings(curves).items():
        print('crossing %s -> %s at %r bps/Hz' % (a, b, x))
    return 0


def cmd_balance(args):
    cfg = _config(args)
    if args.antennas_per_site:
        cfg = cfg.replace(antennas_per_site=args.antennas_per_site)
    curves, _ = experiments.run_balance_curve(cfg, _out(args), args.workers)
    dp = curves[0].sorted()
    if dp.feedback.max() >= 0.7:
        print('downlink at 0.7 bps/Hz feedback: %r'
              % float(np.interp(0.7, dp.feedback, dp.downlink)))
    return 0


def cmd_snr_sweep(args):
    cfg = _config(args)
    fixed, prop, _ = experiments.run_snr_sweep(cfg, _out(args))
    hi = cfg.proportional_rho_db_grid[-1]
    print('proportional slope vs log2(rho): %r' % experiments.log_rho_slope(
        prop, hi - 40, hi))
    return 0


def cmd_validate(args):
    results = run_invariants(args.seed or 0)
    ok = True
    for name, passed, detail in results:
        print('%-32s %s  %s' % (name, 'PASS' if passed else 'FAIL',
                                '' if detail is None else repr(float(detail))))
        ok &= bool(passed)
    return 0 if ok else 1


# -- eval ------------------------------------------------------------------

def _diag_samples(args):
    """``l_ii^2`` draws of the reference network with perfect CSI on the
    ``L`` strongest links of every user."""
    cfg = experiments.ExperimentConfig(alpha=args.alpha,
                                       residual=0.0)
    net = experiments.build_network(cfg)
    gain = experiments.limited_connectivity(net.gain, args.L)
    H = quantized_channels(gain, None, args.samples,
                           block_rng(args.seed or 0, 0, 5))
    return net.gain[0], (lq_diagonal(H) ** 2).ravel()


def _print(v):
    print(repr(float(v)))


def eval_th1(a):
    _print(bounds.th1_exchange_ratio(a.T, a.L))
    if a.r is not None:
        _print(bounds.th1_multiplexing(a.r, a.T, a.L))


def eval_th2(a):
    _print(bounds.th2_exponent(a.alpha))


def eval_prop1(a):
    _print(bounds.prop1_slope(a.alpha, a.q, a.T, a.L))


def eval_coherence(a):
    spec = coherence_block(a.doppler, a.delay, a.factor)
    print(spec.T)


def eval_breve(a):
    row, l2 = _diag_samples(a)
    _print(bounds.breve_rate(a.F, row, a.L, a.q, a.T, l2))


def eval_envelope(a):
    row, l2 = _diag_samples(a)
    val, eta = bounds.time_sharing_envelope(
        lambda f: bounds.breve_rate(f, row, a.L, a.q, a.T, l2), a.F)
    _print(val)
    print('eta', repr(eta))


def eval_xi_bound(a):
    _print(bounds.xi_upper_bound(a.rho, a.r, a.T, a.alpha, a.q, a.b, a.g))


def eval_residual(a):
    topo = build_hex_grid(a.rings, trim_corners=not a.no_trim,
                          alpha=a.alpha)
    topo = topo.with_mobiles(corner_mobile(topo)[None, :])
    _print(residual_interference_coeff(topo, a.horizon, tol=a.tol))


def _eval_parser(sub):
    p = sub.add_parser('eval', help='print one closed-form value')
    ev = p.add_subparsers(dest='what', metavar='quantity')
    ev.required = True

    q = ev.add_parser('th1', help='downlink/feedback exchange ratio T/L')
    q.add_argument('--T', type=int, required=True)
    q.add_argument('--L', type=int, required=True)
    q.add_argument('--r', type=float, help='also print min(1, rT/L)')
    q.set_defaults(run=eval_th1)

    q = ev.add_parser('th2', help='infinite-network exponent alpha/2 - 1')
    q.add_argument('--alpha', type=float, required=True)
    q.set_defaults(run=eval_th2)

    q = ev.add_parser('prop1-slope', help='approximate tradeoff slope')
    q.add_argument('--alpha', type=float, default=4.0)
    q.add_argument('--q', type=int, default=2)
    q.add_argument('--T', type=int, default=180)
    q.add_argument('--L', type=int, required=True)
    q.set_defaults(run=eval_prop1)

    q = ev.add_parser('coherence', help='coherence block length T')
    q.add_argument('--doppler', type=float, required=True)
    q.add_argument('--delay', type=float, required=True)
    q.add_argument('--factor', type=float, default=40.0)
    q.set_defaults(run=eval_coherence)

    for name, fn, hlp in (('breve', eval_breve,
                           'interference-limited rate, all L links fed'),
                          ('envelope', eval_envelope,
                           'time-sharing envelope of the same rate')):
        q = ev.add_parser(name, help=hlp)
        q.add_argument('--F', type=float, required=True)
        q.add_argument('--L', type=int, default=6)
        q.add_argument('--q', type=int, default=2)
        q.add_argument('--T', type=int, default=180)
        q.add_argument('--alpha', type=float, default=4.0)
        q.add_argument('--samples', type=int, default=400)
        q.add_argument('--seed', type=int, default=0)
        q.set_defaults(run=fn)

    q = ev.add_parser('xi-bound', help='largest target error for F = r R_UL')
    q.add_argument('--rho', type=float, required=True)
    q.add_argument('--r', type=float, default=0.03)
    q.add_argument('--T', type=int, default=180)
    q.add_argument('--alpha', type=float, default=4.0)
    q.add_argument('--q', type=int, default=2)
    q.add_argument('--b', type=float, default=3.0)
    q.add_argument('--g', type=float, default=0.0)
    q.set_defaults(run=eval_xi_bound)

    q = ev.add_parser('residual-coeff',
                      help='interference of the sites outside the patch')
    q.add_argument('--rings', type=int, default=4)
    q.add_argument('--no-trim', action='store_true')
    q.add_argument('--alpha', type=float, default=4.0)
    q.add_argument('--horizon', type=int, default=400)
    q.add_argument('--tol', type=float, default=1e-6)
    q.set_defaults(run=eval_residual)
    return p


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='YAML experiment configuration')
    common.add_argument('--seed', type=int)
    common.add_argument('--trials', type=int,
                        help='coherence blocks per sweep point')
    common.add_argument('--out', help='output directory (default $%s or '
                        './results)' % experiments.OUT_ENV)
    common.add_argument('--workers', type=int, default=1)
    common.add_argument('-v', '--verbose', action='store_true')

    parser = argparse.ArgumentParser(
        prog='ratebalance',
        description='Feedback-rate versus downlink-rate experiments.')
    sub = parser.add_subparsers(dest='command', metavar='command')
    sub.required = True
    for name, fn, hlp in (
            ('topology', cmd_topology, 'write the network layout and gains'),
            ('tradeoff', cmd_tradeoff, 'rate curves per cooperation size'),
            ('balance', cmd_balance, 'rate curve with target-error feeding'),
            ('snr-sweep', cmd_snr_sweep, 'DP-ZF bound over SNR'),
            ('validate', cmd_validate, 'run the invariant checks')):
        p = sub.add_parser(name, parents=[common], help=hlp)
        p.set_defaults(run=fn)
        if name == 'balance':
            p.add_argument('--antennas-per-site', type=int)
    _eval_parser(sub)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, 'verbose', False)
                        else logging.WARNING)
    try:
        status = args.run(args)
        return 0 if status is None else status
    except ValueError as exc:
        print('error: %s' % exc, file=sys.stderr)
        return 2


if __name__ == '__main__':
    sys.exit(main())
