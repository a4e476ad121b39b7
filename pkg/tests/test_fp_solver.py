import warnings
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fdd2d import fp_solver as fp
from fdd2d import metrics
from fdd2d.channel import ChannelSet
from fdd2d.metrics import NoiseModel

from oracles import drop_instance, random_operating_point, tiny_grid_transformed

finite = st.floats(-1e3, 1e3, allow_nan=False)


def test_transform_examples():
    assert fp.quadratic_transform_real(2.0, 4.0, 0.5) == pytest.approx(1.0)
    assert fp.quadratic_transform_real(3.0, 2.0, 0.0) == 0.0
    assert fp.quadratic_transform_complex(1j, 1.0, 1.0) == pytest.approx(-1.0)
    assert fp.quadratic_transform_complex(1 + 2j, 3.0, 0.0) == 0.0


@settings(max_examples=200, deadline=None)
@given(a=finite, B=st.floats(1e-3, 1e3), dq=st.floats(-10, 10).filter(lambda x: abs(x) > 1e-3))
def test_real_transform_recovers_ratio_at_optimum(a, B, dq):
    q = a / B
    assert fp.quadratic_transform_real(a, B, q) == pytest.approx(a * a / B, rel=1e-9, abs=1e-12)
    assert fp.quadratic_transform_real(a, B, q + dq) < a * a / B


@settings(max_examples=200, deadline=None)
@given(re=finite, im=finite, B=st.floats(1e-3, 1e3))
def test_complex_transform_recovers_ratio_at_optimum(re, im, B):
    a = complex(re, im)
    assert fp.quadratic_transform_complex(a, B, a / B) == pytest.approx(abs(a) ** 2 / B, rel=1e-9,
                                                                        abs=1e-12)


def _instance(seed=1, **kw):
    cfg, ch = drop_instance(seed, **kw)
    lin = cfg.linear
    return ch, NoiseModel(lin.sigma2, lin.beta), cfg.solver_config(), lin


def test_transform_consistency_and_zero_aux():
    rng = np.random.default_rng(0)
    ch, noise, cfg, lin = _instance(B=3, M=4, N=4, A=16)
    for _ in range(5):
        V, p = random_operating_point(ch, lin.P_c, lin.P_d, rng)
        aux = fp.update_aux(ch, V, p, noise)
        f = fp.transformed_objective(ch, V, p, aux, noise)
        assert f == pytest.approx(metrics.network_sum_rate(ch, V, p, noise), rel=1e-9)
        zero = fp.AuxiliaryVars(np.zeros_like(aux.q_c), np.zeros_like(aux.q_d))
        assert fp.transformed_objective(ch, V, p, zero, noise) == 0.0


def test_update_aux_is_grid_optimal():
    ch, noise, cfg, lin = _instance(B=1, M=2, N=1, A=4)
    V, p = fp.initialize(ch, cfg)  # every link active, so every q is nonzero
    p = p * np.array([0.3, 0.8])
    aux = fp.update_aux(ch, V, p, noise)
    f0 = fp.transformed_objective(ch, V, p, aux, noise)
    steps = np.linspace(-1.0, 1.0, 201)
    steps = steps[np.abs(steps) > 0]
    for (b, m) in [(0, 0), (0, 1)]:
        q = aux.q_c[b, m]
        for direction in (1.0, 1j):
            for s in steps:
                qc = aux.q_c.copy()
                qc[b, m] = q + s * direction * abs(q)
                f = fp.transformed_objective(ch, V, p, fp.AuxiliaryVars(qc, aux.q_d), noise)
                assert f < f0
    for n in range(2):
        for s in steps:
            qd = aux.q_d.copy()
            qd[n] = aux.q_d[n] * (1 + s)
            f = fp.transformed_objective(ch, V, p, fp.AuxiliaryVars(aux.q_c, qd), noise)
            assert f < f0


def test_update_aux_zero_cases():
    ch, noise, cfg, lin = _instance(B=1, M=1, N=1, A=4)
    V = np.zeros((1, 1, 4), complex)
    p = np.array([0.0, lin.P_d])
    aux = fp.update_aux(ch, V, p, noise)
    assert aux.q_c[0, 0] == 0
    # receiver 1 hears transceiver 0, which is silent
    assert aux.q_d[1] == 0 and aux.q_d[0] > 0


def test_initialize():
    ch, noise, cfg, lin = _instance(B=3, M=4, N=2, A=16)
    V, p = fp.initialize(ch, cfg)
    np.testing.assert_allclose(metrics.per_bs_power(V), lin.P_c, rtol=1e-12)
    np.testing.assert_allclose(p, 10 ** (23 / 10) / 1000)
    # matched filter direction
    g = ch.g_cc[0, 0, 0]
    assert abs(np.vdot(g, V[0, 0])) ** 2 == pytest.approx(lin.P_c / 4 * np.vdot(g, g).real)
    V2, _ = fp.initialize(ch, cfg)
    np.testing.assert_array_equal(V, V2)


def test_initialize_zero_channel_falls_back():
    ch, noise, cfg, lin = _instance(B=1, M=2, N=0, A=4)
    g = ch.g_cc.copy()
    g[0, 0, 1] = 0
    ch0 = ChannelSet(g, ch.g_cd, ch.g_dc, ch.g_dd, ch.partner)
    V, _ = fp.initialize(ch0, cfg)
    assert np.all(np.isfinite(V))
    np.testing.assert_allclose(metrics.per_bs_power(V), lin.P_c)


def test_solve_inner_zero_aux_returns_warm_start():
    rng = np.random.default_rng(2)
    ch, noise, cfg, lin = _instance(B=3, M=4, N=2, A=16)
    V, p = random_operating_point(ch, lin.P_c, lin.P_d, rng)
    aux = fp.update_aux(ch, V, p, noise)
    zero = fp.AuxiliaryVars(np.zeros_like(aux.q_c), np.zeros_like(aux.q_d))
    V1, p1, _ = fp.solve_inner(ch, zero, noise, cfg, V, p)
    np.testing.assert_array_equal(V1, V)
    np.testing.assert_array_equal(p1, p)


def test_solve_inner_ascends_and_stays_feasible():
    rng = np.random.default_rng(3)
    ch, noise, cfg, lin = _instance(B=3, M=4, N=3, A=16)
    for _ in range(3):
        V, p = random_operating_point(ch, lin.P_c, lin.P_d, rng)
        aux = fp.update_aux(ch, V, p, noise)
        f0 = fp.transformed_objective(ch, V, p, aux, noise)
        V1, p1, _ = fp.solve_inner(ch, aux, noise, cfg, V, p)
        assert fp.transformed_objective(ch, V1, p1, aux, noise) >= f0 - 1e-10
        assert metrics.is_feasible(V1, p1, lin.P_c, lin.P_d)


def test_solve_inner_matched_filter():
    ch, noise, cfg, lin = _instance(B=1, M=1, N=0, A=16)
    rng = np.random.default_rng(4)
    V = rng.standard_normal((1, 1, 16)) + 1j * rng.standard_normal((1, 1, 16))
    V *= np.sqrt(0.1 * lin.P_c) / np.linalg.norm(V)
    aux = fp.update_aux(ch, V, np.zeros(0), noise)
    V1, _, _ = fp.solve_inner(ch, aux, noise, cfg, V, np.zeros(0))
    g = ch.g_cc[0, 0, 0]
    assert abs(np.vdot(g, V1[0, 0])) ** 2 == pytest.approx(lin.P_c * np.vdot(g, g).real, rel=1e-3)


def test_run_fp_single_link_matched_filter():
    ch, noise, cfg, lin = _instance(B=1, M=1, N=0, A=16)
    res = fp.run_fp(ch, noise, cfg)
    g = ch.g_cc[0, 0, 0]
    best = np.log2(1 + lin.P_c * np.vdot(g, g).real / lin.sigma2)
    assert res.converged and res.iterations <= 5
    assert res.final_sum_rate == pytest.approx(best, rel=1e-9)


@pytest.mark.parametrize("seed", range(4))
def test_solve_inner_tiny_grid(seed):
    ch, noise, cfg, lin = _instance(seed=300 + seed, B=1, M=1, N=1, A=2)
    V, p = fp.initialize(ch, cfg)
    aux = fp.update_aux(ch, V, p, noise)
    V1, p1, _ = fp.solve_inner(ch, aux, noise, cfg, V, p)
    got = fp.transformed_objective(ch, V1, p1, aux, noise)
    grid = tiny_grid_transformed(ch, lin.sigma2, lin.beta, lin.P_c, lin.P_d, aux.q_c, aux.q_d)
    assert got >= 0.99 * grid


@pytest.mark.parametrize("seed", range(3))
def test_run_fp_monotone_and_consistent(seed):
    ch, noise, cfg, lin = _instance(seed=10 + seed, B=3, M=4, N=6, A=16)
    res = fp.run_fp(ch, noise, cfg)
    tr = np.array(res.objective_trace)
    assert np.all(np.diff(tr) >= -1e-8)
    assert res.final_sum_rate == pytest.approx(metrics.network_sum_rate(ch, res.V, res.p, noise),
                                               rel=1e-9)
    assert abs(res.final_sum_rate - tr[-1]) <= 1e-6
    assert metrics.is_feasible(res.V, res.p, lin.P_c, lin.P_d)
    assert res.converged == (res.status == "converged")
    assert res.sinr_d2d.shape == (ch.num_transceivers,)


def test_run_fp_deterministic():
    ch, noise, cfg, _ = _instance(seed=20, B=3, M=4, N=3, A=16)
    a = fp.run_fp(ch, noise, cfg)
    b = fp.run_fp(ch, noise, cfg)
    assert a.objective_trace == b.objective_trace
    np.testing.assert_array_equal(a.V, b.V)


def test_scale_invariance():
    ch, noise, cfg, _ = _instance(seed=21, B=3, M=2, N=3, A=8)
    k = 37.0
    ch2 = ch.scaled(np.sqrt(k))
    noise2 = NoiseModel(noise.sigma2 * k, noise.beta * k)
    V, p = fp.initialize(ch, cfg)
    s1 = metrics.sinrs(ch, V, p, noise)
    s2 = metrics.sinrs(ch2, V, p, noise2)
    np.testing.assert_allclose(s1[0], s2[0], rtol=1e-12)
    np.testing.assert_allclose(s1[1], s2[1], rtol=1e-12)
    r1 = fp.run_fp(ch, noise, cfg)
    r2 = fp.run_fp(ch2, noise2, cfg)
    assert r1.final_sum_rate == pytest.approx(r2.final_sum_rate, rel=1e-6)


def test_zero_power_cap_silences_transceiver():
    ch, noise, cfg, lin = _instance(seed=22, B=1, M=2, N=2, A=8)
    cap = np.full(ch.num_transceivers, lin.P_d)
    cap[0] = 0.0
    res = fp.run_fp(ch, noise, cfg, p_max=cap)
    assert res.p[0] == 0.0
    assert res.sinr_d2d[ch.partner[0]] == 0.0


def test_qos_mode():
    ch, noise, cfg, lin = _instance(seed=23, B=1, M=2, N=1, A=8)
    qcfg = replace(cfg, constraint_mode="qos")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = fp.run_fp(ch, noise, qcfg)
    assert res.status in ("converged", "max_iters", "infeasible")
    if res.status != "infeasible":
        assert np.all(res.sinr_cellular >= lin.gamma_c)
        assert np.all(np.diff(res.objective_trace) >= -1e-8)


def test_qos_mode_reports_infeasible():
    ch, noise, cfg, lin = _instance(seed=24, B=1, M=2, N=1, A=8)
    qcfg = replace(cfg, constraint_mode="qos", gamma_c=1e12, gamma_d=1e12)
    with pytest.warns(RuntimeWarning):
        res = fp.run_fp(ch, noise, qcfg)
    assert res.status == "infeasible" and not res.converged


def test_config_validation():
    with pytest.raises(ValueError):
        fp.SolverConfig(P_c=1.0, P_d=1.0, epsilon=0.0)
    with pytest.raises(ValueError):
        fp.SolverConfig(P_c=0.0, P_d=1.0)
    with pytest.raises(ValueError):
        fp.SolverConfig(P_c=1.0, P_d=1.0, constraint_mode="x")


def test_log_of_nonpositive_argument_is_sentinel():
    assert fp._log2_1p(-1.0) == -np.inf
    assert fp._log2_1p(-2.0) == -np.inf
