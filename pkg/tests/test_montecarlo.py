import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stfilm.config import config_from_dict
from stfilm.montecarlo import (PathSummary, RunningMoments, ensemble_report, mass_moment_check,
                               mean_mass_check, merge_all, per_path_csv, run_ensemble, summarise,
                               supnorm_moment_estimate)


def make_cfg(stoch=None, ic=None, T=0.2, N=3, M=16, det=None, paths=20, p_list=(2, 4)):
    d = {"domain": {"L": 1.0, "M": M}, "horizon": {"T": T, "N_split": N},
         "det": det or {"dt": 0.01, "r": None},
         "stoch": stoch or {"dt": 1e-3},
         "initial_condition": ic or {"kind": "cosine", "mean": 0.5, "amplitude": 0.2},
         "ensemble": {"M_paths": paths, "p_list": list(p_list)}, "master_seed": 7}
    return config_from_dict(d)


GBM = {"dt": 1e-3, "spectrum": {"gamma": {"0": 1.0}}, "f": {"kind": "linear", "c": 0.5}}
TRANSPORT = {"dt": 1e-3, "K_modes": 1, "spectrum": {"lambda": {"1": 0.3, "-1": 0.3}}}


@given(st.lists(st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=3), min_size=2, max_size=40))
@settings(max_examples=60)
def test_pairwise_merge_matches_two_pass_statistics(xs):
    x = np.array(xs)
    r = merge_all([RunningMoments.of(row) for row in x])
    assert r.n == len(x)
    assert np.allclose(r.mean, x.mean(axis=0), rtol=1e-10, atol=1e-9)
    assert np.allclose(r.var, x.var(axis=0, ddof=1), rtol=1e-8, atol=1e-6)


@given(st.lists(st.floats(-10, 10), min_size=4, max_size=30), st.randoms())
def test_merge_is_insensitive_to_grouping(xs, rnd):
    items = [RunningMoments.of([v]) for v in xs]
    cut = rnd.randint(1, len(items) - 1)
    a = merge_all(items)
    b = merge_all(items[:cut]).merge(merge_all(items[cut:]))
    assert a.mean == pytest.approx(b.mean, rel=1e-12, abs=1e-12)
    assert a.m2 == pytest.approx(b.m2, rel=1e-9, abs=1e-9)


def test_zero_noise_ensemble_has_no_spread():
    stats = run_ensemble(make_cfg(det={"dt": 0.01, "r": 1.0}), M=4)
    assert np.all(stats.var_mass == 0) and np.all(stats.se_mass == 0)
    assert stats.completed == 4 and stats.completion == 1.0
    # deterministic-only: mass non-increasing, so C = 0 passes
    assert mass_moment_check(stats, 2.0, 0.0).passed


def test_gamma_free_ensemble_conserves_mass_per_path():
    stats = run_ensemble(make_cfg(stoch=TRANSPORT), M=6)
    assert np.max(np.abs(stats.mean_mass - stats.mass0)) < 1e-10
    for p in (2.0, 4.0):
        assert mass_moment_check(stats, p, 0.0).passed


def test_equal_seeds_give_identical_reports_for_any_worker_count():
    cfg = make_cfg(stoch=TRANSPORT)
    a = run_ensemble(cfg, M=6)
    b = run_ensemble(cfg, M=6, workers=2)
    ra = ensemble_report(a, cfg, cfg.master_seed, version="x")
    rb = ensemble_report(b, cfg, cfg.master_seed, version="x")
    assert ra == rb and per_path_csv(a) == per_path_csv(b)
    c = run_ensemble(cfg, M=6, master_seed=8)
    assert ensemble_report(c, cfg, 8) != ensemble_report(a, cfg, 8)
    doc = json.loads(ra)
    assert doc["M"] == 6 and len(doc["table"]) == 5 and doc["config_hash"] == cfg.hash()


def test_gbm_mean_mass_and_standard_error_scaling():
    cfg = make_cfg(stoch=GBM, ic={"kind": "constant", "c": 1.0}, T=0.2, M=8, det={"dt": 0.05, "r": None})
    small = run_ensemble(cfg, M=100)
    big = run_ensemble(cfg, M=400)
    assert mean_mass_check(big)["pass"]
    # sqrt(M) law: four times the paths, half the standard error (within 30%)
    ratio = small.se_mass[-1] / big.se_mass[-1]
    assert abs(ratio / 2.0 - 1.0) < 0.3


def test_mass_moment_check_report_fields():
    cfg = make_cfg(stoch=GBM, ic={"kind": "constant", "c": 1.0}, T=0.2, M=8, det={"dt": 0.05, "r": None})
    stats = run_ensemble(cfg, M=50)
    rep = mass_moment_check(stats, 2.0, 10.0)
    assert rep.passed and len(rep.rows) == 4 and rep.completion == 1.0
    assert rep.smallest_passing_c <= rep.c_fit
    # the slack-free constant reproduces the largest observed ratio exactly
    mean = stats.mass_moments[2.0][0]
    t = stats.times
    assert rep.c_fit == pytest.approx(max(math.log(m / stats.mass0**2) / s for s, m in zip(t[1:], mean[1:])))
    assert mass_moment_check(stats, 2.0, rep.smallest_passing_c + 1e-9).passed


def test_mass_moment_check_needs_three_samples():
    stats = run_ensemble(make_cfg(N=0), M=2)
    with pytest.raises(ValueError, match="3 time samples"):
        mass_moment_check(stats, 2.0, 0.0)
    stats = run_ensemble(make_cfg(N=2), M=2)
    with pytest.raises(ValueError):
        mass_moment_check(stats, 3.0, 0.0)


def test_sup_moment_scales_homogeneously():
    # constant data with mode-0 linear noise stays constant, where the whole
    # scheme is homogeneous of degree one
    def est(c):
        cfg = make_cfg(stoch=GBM, ic={"kind": "constant", "c": c}, det={"dt": 0.05, "r": None})
        return supnorm_moment_estimate(run_ensemble(cfg, M=10), 2.0).value
    assert est(2.0) == pytest.approx(4.0 * est(1.0), rel=1e-12)


def test_transport_only_sup_moment_equals_deterministic_sup():
    stats = run_ensemble(make_cfg(), M=3)
    e = supnorm_moment_estimate(stats, 2.0)
    assert e.se == 0.0
    assert e.value == pytest.approx(stats.summaries[0].sup_h1 ** 2)
    with pytest.raises(ValueError):
        supnorm_moment_estimate(stats, 3.0)


def test_failed_paths_are_excluded_and_reported():
    ok = [PathSummary(i, True, np.ones(3), np.ones(3), 1.0, 0.5) for i in (0, 2, 3)]
    bad = PathSummary(1, False, error="boom")
    stats = summarise([ok[2], bad, ok[0], ok[1]], [0, 0.5, 1.0], 1.0, [2.0])
    assert stats.M == 4 and stats.completed == 3 and stats.completion == 0.75
    assert stats.failures == [(1, "boom")]
    assert "boom" in per_path_csv(stats).splitlines()[2]
    with pytest.raises(RuntimeError):
        summarise([bad, ok[0]], [0, 1], 1.0, [2.0])


def test_ensemble_needs_two_paths():
    with pytest.raises(ValueError):
        run_ensemble(make_cfg(), M=1)
