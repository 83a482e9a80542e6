import os

import numpy as np
import pytest
import yaml

from ratebalance import cli, experiments
from ratebalance.experiments import (CSV_COLUMNS, CurvePoint,
                                     ExperimentConfig, TradeoffCurve,
                                     build_network, find_crossing,
                                     limited_connectivity, read_csv,
                                     upper_envelope, write_csv)


def _curve(xs, ys, label='c'):
    return TradeoffCurve('dp-modulo', label,
                         [CurvePoint(x, y, 0.0, 100, 0, 1.0)
                          for x, y in zip(xs, ys)])


def test_config_defaults():
    cfg = ExperimentConfig()
    assert cfg.rho_db == 30 and cfg.alpha == 4 and cfg.T == 180
    assert cfg.rho == pytest.approx(1000.0)
    assert cfg.Q == 2 and cfg.sim_quantizer == 'scalar'
    assert cfg.r == 0.03 and cfg.kappa_ul == 0.1


@pytest.mark.parametrize('kw', [dict(trials=50), dict(xi2_db=[-3, -5]),
                                dict(cooperation=[3, 3]), dict(alpha=2.0),
                                dict(r=0.0), dict(quantizer='vq')])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        ExperimentConfig(**kw)


def test_config_yaml_round_trip(tmp_path):
    cfg = ExperimentConfig(seed=7, cooperation=[3, 6], xi2_db=[-20, -10])
    path = tmp_path / 'c.yaml'
    cfg.save(path)
    data = yaml.safe_load(path.read_text())
    assert set(data) == {'network', 'channel', 'quantizer', 'sweep',
                         'feedback', 'monte_carlo'}
    assert ExperimentConfig.load(path) == cfg


def test_config_rejects_unknown_keys():
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({'network': {'bogus': 1}})
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({'bogus': 1})


def test_reference_network(reference_network):
    net = reference_network
    assert net.gain.shape == (55, 55)
    assert net.gain.max() == 1.0
    assert net.b == pytest.approx(3.0)
    assert net.residual == pytest.approx(0.0276108, rel=1e-6)
    assert np.all(np.sort(net.gain, axis=1) == np.sort(net.gain[0]))


def test_two_antenna_network():
    net = build_network(ExperimentConfig(antennas_per_site=2, residual=0.0))
    assert net.gain.shape == (55, 110)
    np.testing.assert_array_equal(net.gain[:, 0::2], net.gain[:, 1::2])


def test_limited_connectivity():
    g = np.array([[0.1, 1.0, 0.5, 0.3]])
    np.testing.assert_array_equal(limited_connectivity(g, 2),
                                  [[0, 1.0, 0.5, 0]])


def test_crossing_linear_interpolation():
    a = _curve([0, 1, 2], [1.0, 2.0, 2.5])
    b = _curve([0, 1, 2], [0.5, 1.5, 3.5])
    # b - a: -0.5, -0.5, 1.0 -> zero at 1 + 0.5/1.5
    assert find_crossing(a, b) == pytest.approx(1 + 1 / 3)
    assert np.isnan(find_crossing(b, a))


def test_crossing_uses_last_sign_change():
    a = _curve([0, 1, 2, 3], [1, 1, 1, 1])
    b = _curve([0, 1, 2, 3], [0, 2, 0, 2])
    assert find_crossing(a, b) == pytest.approx(2.5)


def test_upper_envelope_dominates():
    c1 = _curve([0, 1, 2], [1, 2, 2.2])
    c2 = _curve([0, 1, 2], [0.5, 1.8, 3.0])
    x, env = upper_envelope([c1, c2])
    for c in (c1, c2):
        assert np.all(env >= np.interp(x, c.feedback, c.downlink) - 1e-12)


def test_csv_schema(tmp_path):
    path = tmp_path / 'x.csv'
    write_csv(path, [_curve([0, 0.1], [0.5, 0.6])])
    lines = path.read_text().splitlines()
    assert lines[0] == '# ratebalance-csv v1'
    assert tuple(lines[1].split(',')) == CSV_COLUMNS
    assert CSV_COLUMNS[:7] == ('scheme', 'L_fed', 'feedback_se_bps_hz',
                               'downlink_se_bps_hz', 'stderr', 'trials',
                               'seed')
    rows = read_csv(path)
    assert float(rows[1]['feedback_se_bps_hz']) == 0.1
    path.write_text('# ratebalance-csv v9\n' + '\n'.join(lines[1:]))
    with pytest.raises(ValueError):
        read_csv(path)


def _small_cfg(**kw):
    base = dict(trials=100, cooperation=[3, 6], xi2_db=[-20.0, -12.0],
                residual=0.0276108)
    base.update(kw)
    return ExperimentConfig(**base)


def test_tradeoff_sweep_resumes_byte_identical(tmp_path):
    cfg = _small_cfg()
    out = tmp_path / 'run'
    curves = experiments.run_tradeoff_sweep(cfg, str(out))
    first = (out / 'tradeoff.csv').read_bytes()
    assert [c.label for c in curves] == ['L=3', 'L=6']
    for c in curves:
        assert c.points[0].feedback_se == 0.0
        assert c.points[0].L_fed == 0.0
        assert np.all(np.diff(c.feedback) >= 0)
    # a completed sweep re-runs from its cache with identical output
    os.remove(out / 'tradeoff.csv')
    experiments.run_tradeoff_sweep(cfg, str(out))
    assert (out / 'tradeoff.csv').read_bytes() == first
    # an interrupted sweep (one cached point lost) resumes identically
    cache = out / '.cache' / 'tradeoff'
    os.remove(sorted(cache.iterdir())[0])
    experiments.run_tradeoff_sweep(cfg, str(out))
    assert (out / 'tradeoff.csv').read_bytes() == first


def test_tradeoff_csv_carries_envelope(tmp_path):
    cfg = _small_cfg()
    curves = experiments.run_tradeoff_sweep(cfg, str(tmp_path))
    rows = read_csv(tmp_path / 'tradeoff.csv')
    env = [r for r in rows if r['scheme'] == 'upper-envelope']
    assert env
    F = np.array([float(r['feedback_se_bps_hz']) for r in env])
    v = np.array([float(r['downlink_se_bps_hz']) for r in env])
    for c in curves:
        inside = F <= c.feedback.max()
        assert np.all(v[inside] >= np.interp(F[inside], c.feedback,
                                             c.downlink) - 1e-12)


def test_tradeoff_sweep_without_cache_matches(tmp_path):
    cfg = _small_cfg(cooperation=[3], xi2_db=[-15.0])
    a = experiments.run_tradeoff_sweep(cfg, str(tmp_path / 'a'))
    b = experiments.run_tradeoff_sweep(cfg, None)
    assert a[0].downlink.tolist() == b[0].downlink.tolist()


def test_balance_curve_shape(tmp_path):
    cfg = _small_cfg(xi2_db=[-20.0, -14.0])
    curves, tangents = experiments.run_balance_curve(cfg, str(tmp_path))
    assert [c.scheme for c in curves] == ['dp-modulo', 'zf-baseline']
    assert [p.L_fed for p in tangents.points] == [6.0, 12.0, 21.0]
    assert tangents.points[0].downlink_se == pytest.approx(8.8592416, 1e-6)
    rows = read_csv(tmp_path / 'balance.csv')
    assert {r['scheme'] for r in rows} == {'dp-modulo', 'zf-baseline',
                                           'slope-tangent'}
    assert all(int(float(p.L_tilde)) >= 1 for p in curves[0].points[1:])


def test_snr_sweep_outputs(tmp_path):
    cfg = _small_cfg(rho_db_grid=[20.0, 40.0], feedback_grid=[0.0, 0.2],
                     proportional_rho_db_grid=[40.0, 80.0], bound_trials=100)
    fixed, prop, ref = experiments.run_snr_sweep(cfg, str(tmp_path))
    assert [c.label for c in fixed] == ['F=0', 'F=0.2']
    assert all(len(c.points) == 2 for c in fixed)
    assert prop.points[1].feedback_se > prop.points[0].feedback_se
    slope = (ref.points[1].downlink_se - ref.points[0].downlink_se) / (
        40 * np.log2(10) / 10)
    assert slope == pytest.approx(0.9)
    assert (tmp_path / 'snr_sweep.csv').exists()


# -- command line ---------------------------------------------------------

def _run(capsys, *argv):
    code = cli.main(list(argv))
    return code, capsys.readouterr()


def test_cli_eval_values(capsys):
    code, out = _run(capsys, 'eval', 'prop1-slope', '--alpha', '4', '--q',
                     '2', '--T', '180', '--L', '6')
    assert code == 0 and float(out.out) == pytest.approx(8.86, abs=0.005)
    code, out = _run(capsys, 'eval', 'coherence', '--doppler', '5.5',
                     '--delay', '630e-9')
    assert out.out.strip() == '180'
    code, out = _run(capsys, 'eval', 'th2', '--alpha', '4')
    assert float(out.out) == 1.0
    code, out = _run(capsys, 'eval', 'th1', '--T', '180', '--L', '6',
                     '--r', '0.03')
    assert [float(v) for v in out.out.split()] == [30.0, pytest.approx(0.9)]
    code, out = _run(capsys, 'eval', 'xi-bound', '--rho', '1000')
    assert float(out.out) == pytest.approx(0.0668137, rel=1e-5)


def test_cli_eval_breve_and_envelope(capsys):
    code, out = _run(capsys, 'eval', 'breve', '--F', '0.3', '--samples',
                     '50')
    b = float(out.out)
    code, out = _run(capsys, 'eval', 'envelope', '--F', '0.3', '--samples',
                     '50')
    assert float(out.out.split()[0]) >= b


def test_cli_eval_residual(capsys):
    code, out = _run(capsys, 'eval', 'residual-coeff')
    assert float(out.out) == pytest.approx(0.027, abs=0.001)


def test_cli_errors(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(['eval', 'nonsense'])
    assert exc.value.code != 0
    assert 'usage' in capsys.readouterr().err
    code, out = _run(capsys, 'eval', 'th2', '--alpha', '2')
    assert code == 2 and 'error' in out.err


def test_cli_validate(capsys):
    code, out = _run(capsys, 'validate')
    assert code == 0
    assert out.out.count('PASS') == 7


def test_cli_topology_and_env_out(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv('RATEBALANCE_OUT', str(tmp_path))
    code, out = _run(capsys, 'topology')
    assert code == 0 and 'sites 55' in out.out
    g = np.loadtxt(tmp_path / 'gain.csv', delimiter=',')
    assert g.shape == (55, 55)


def test_cli_sweep_with_config(capsys, tmp_path):
    cfg = _small_cfg(cooperation=[3, 6], xi2_db=[-20.0, -12.0])
    path = tmp_path / 'cfg.yaml'
    cfg.save(path)
    code, out = _run(capsys, 'tradeoff', '--config', str(path), '--out',
                     str(tmp_path / 'o'), '--seed', '1')
    assert code == 0
    rows = read_csv(tmp_path / 'o' / 'tradeoff.csv')
    assert {r['seed'] for r in rows} == {'1'}
