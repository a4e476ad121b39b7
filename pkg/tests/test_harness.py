import numpy as np
import pytest

from fdd2d import harness
from fdd2d.harness import DropRecord, ExperimentConfig

SMALL = dict(B=2, A=4, M=2, N=2, num_drops=2, base_seed=11)


def test_table_defaults_convert_once():
    lin = ExperimentConfig().linear
    assert lin.P_c == pytest.approx(39.810717, rel=1e-6)
    assert lin.P_d == pytest.approx(0.199526, rel=1e-5)
    assert lin.sigma2 == pytest.approx(10 ** -12.5, rel=1e-9)  # -95 dBm
    assert lin.C == pytest.approx(10 ** -1.53)
    assert lin.beta == pytest.approx(1e-10)
    assert lin.gamma_c == lin.gamma_d == 1.0
    cfg = ExperimentConfig()
    assert cfg.angular_dims == 8 and cfg.solver_config().epsilon == 1e-5


def test_config_validation_and_aliases():
    assert ExperimentConfig(sweep="BetaSweep").sweep == "beta"
    assert ExperimentConfig(sweep="gain").modes == ("FD", "HD", "CellularOnly")
    assert ExperimentConfig(modes="FD, CellularOnly").modes == ("FD", "CellularOnly")
    for bad in [dict(num_drops=0), dict(sweep="x"), dict(modes=("XD",)), dict(N=-1),
                dict(P=40), dict(base_seed=-1), dict(N_values=())]:
        with pytest.raises(ValueError):
            ExperimentConfig(**bad)
    with pytest.raises(KeyError):
        harness.with_overrides(ExperimentConfig(), nonsense=1)


def test_run_drop_deterministic_and_paired():
    cfg = ExperimentConfig(modes=("FD", "HD", "CellularOnly"), **SMALL)
    a = harness.run_drop(cfg, 3)
    b = harness.run_drop(cfg, 3)
    for m in cfg.modes:
        assert a[m].objective_trace == b[m].objective_trace
        np.testing.assert_array_equal(a[m].V, b[m].V)
    # every mode sees the same cellular channels
    _, ch = harness.realize(cfg, 3)
    assert a["CellularOnly"].V.shape == (2, 2, 4)
    assert harness.run_drop(cfg, 4)["FD"].final_sum_rate != a["FD"].final_sum_rate
    assert a["FD"].final_sum_rate / a["CellularOnly"].final_sum_rate > 0


def test_drop_seeds_distinct():
    first = {harness.drop_rng(7, i).integers(0, 2 ** 63) for i in range(10_000)}
    assert len(first) == 10_000


def test_cellular_geometry_shared_across_n_and_a():
    cfg = ExperimentConfig(**SMALL)
    s1, _ = harness.realize(cfg, 0, N=2)
    s2, _ = harness.realize(cfg, 0, N=7)
    s3, _ = harness.realize(harness.with_overrides(cfg, A=8), 0)
    np.testing.assert_array_equal(s1.cellular_positions, s2.cellular_positions)
    np.testing.assert_array_equal(s1.d2d_positions, s3.d2d_positions)


def _rec(v, i, mode, rate, ok=True, it=3):
    return DropRecord(v, i, mode, rate, ok, it, "converged" if ok else "max_iters", 0)


def test_aggregate_arithmetic():
    recs = [_rec(1, 0, "FD", 2.0), _rec(1, 1, "FD", 4.0), _rec(1, 0, "HD", 2.0), _rec(1, 1, "HD", 4.0)]
    res = harness.aggregate(recs, "n")
    fd = res.point(1, "FD")
    assert fd.mean_rate == 3.0 and fd.stderr == 1.0 and fd.n_converged == 2
    r = res.ratio(1, "FD/HD")
    assert r.mean_ratio == 1.0 and r.stderr == 0.0 and r.ratio_of_means == 1.0


def test_aggregate_single_drop_and_identical_inputs():
    res = harness.aggregate([_rec(1, 0, "FD", 5.0)], "n")
    assert res.point(1, "FD").mean_rate == 5.0 and res.point(1, "FD").stderr == 0.0
    res = harness.aggregate([_rec(1, i, "FD", 5.0) for i in range(4)], "n")
    assert res.point(1, "FD").stderr == 0.0


def test_aggregate_excludes_unconverged_and_flags_missing():
    recs = [_rec(1, 0, "FD", 2.0), _rec(1, 1, "FD", 100.0, ok=False),
            _rec(2, 0, "FD", 1.0, ok=False)]
    res = harness.aggregate(recs, "n")
    assert res.point(1, "FD").mean_rate == 2.0 and res.point(1, "FD").n_drops == 2
    assert res.point(2, "FD").missing and np.isnan(res.point(2, "FD").mean_rate)
    text = harness.points_csv(res)
    assert "2,FD,nan,nan,0,nan" in text
    assert any("no converged drops" in w for w in harness.warnings_for(res))


def test_aggregate_permutation_invariant():
    rng = np.random.default_rng(0)
    recs = [_rec(v, i, m, float(rng.random())) for v in (10, 20) for m in ("FD", "HD", "CellularOnly")
            for i in range(6)]
    a = harness.aggregate(recs, "gain")
    order = rng.permutation(len(recs))
    b = harness.aggregate([recs[k] for k in order], "gain")
    assert harness.points_csv(a) == harness.points_csv(b)
    assert harness.ratios_csv(a) == harness.ratios_csv(b)


def test_ratio_uses_per_drop_pairs():
    recs = [_rec(1, 0, "FD", 3.0), _rec(1, 1, "FD", 8.0),
            _rec(1, 0, "CellularOnly", 1.0), _rec(1, 1, "CellularOnly", 4.0)]
    r = harness.aggregate(recs, "gain").ratio(1, "FD/CellularOnly")
    assert r.mean_ratio == pytest.approx(2.5)
    assert r.ratio_of_means == pytest.approx(11 / 5)
    assert r.n_pairs == 2


def test_beta_sweep_reuses_beta_free_modes():
    cfg = ExperimentConfig(sweep="beta", beta_values_db=(-110.0, -90.0), **SMALL)
    res = harness.run_sweep(cfg)
    hd = [r for r in res.records if r.mode == "HD"]
    by_drop = {}
    for r in hd:
        by_drop.setdefault(r.drop_index, set()).add(r.sum_rate)
    assert all(len(v) == 1 for v in by_drop.values())
    assert [p.value for p in res.points] == [-110.0, -110.0, -90.0, -90.0]
    lines = harness.points_csv(res).splitlines()
    assert lines[0] == "beta_db,mode,mean_rate,stderr,n_converged,mean_iters"
    assert lines[1].startswith("-110.0,FD,")


def test_parallel_matches_serial(monkeypatch):
    cfg = ExperimentConfig(sweep="n", N_values=(1, 2), modes=("FD",), **SMALL)
    serial = harness.run_sweep(cfg)
    monkeypatch.setenv(harness.THREADS_ENV, "2")
    parallel = harness.run_sweep(cfg)
    assert harness.points_csv(serial) == harness.points_csv(parallel)


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv(harness.THREADS_ENV, "0")
    with pytest.raises(ValueError):
        harness.worker_count(ExperimentConfig())
    monkeypatch.delenv(harness.THREADS_ENV)
    assert harness.worker_count(ExperimentConfig(workers=3)) == 3


def test_write_outputs(tmp_path):
    recs = [_rec(10, 0, "FD", 2.0), _rec(10, 0, "HD", 1.0)]
    res = harness.aggregate(recs, "n")
    paths = harness.write_outputs(res, ExperimentConfig(sweep="n"), tmp_path)
    assert sorted(p.split("/")[-1] for p in paths) == ["n.csv", "n_ratios.csv", "summary.txt"]
    assert (tmp_path / "n.csv").read_text().startswith("N,mode,mean_rate")
    assert "FD/HD" in (tmp_path / "n_ratios.csv").read_text()
