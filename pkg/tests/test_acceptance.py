"""End-to-end acceptance checks, one test per criterion, at the stated tolerances."""
import math

import numpy as np
import pytest
from scipy import stats

from helpers import chisq_binned, chisq_poisson, mean_se, report, var_sigma
from tauleap_mlmc.cli import main
from tauleap_mlmc.coupling import coupled_step_samples, coupled_tau_batch
from tauleap_mlmc.exact import simulate_exact_batch
from tauleap_mlmc.mlmc import Observable, run_biased, run_unbiased
from tauleap_mlmc.model import SystemState, decay, dimerization, propensity
from tauleap_mlmc.study import (SweepRow, complexity_sweep, cost_slope, deviation_moment,
                                fit_power_law, single_level_cost, variance_sweep)
from tauleap_mlmc.tau import simulate_tau_batch

pytestmark = pytest.mark.slow

T_DIMER = 0.3
GRID_N = (1e3, 1e4, 1e5)
GRID_H = (T_DIMER / 30, T_DIMER / 100, T_DIMER / 300)


def in_band(x, lo, hi):
    return lo <= x <= hi


def check_fit(n, kind):
    table = variance_sweep(dimerization, GRID_N, GRID_H, kind, 10_000, seed=0, t_end=T_DIMER,
                           M=3, workers=None)
    fit = fit_power_law(table)
    ok = in_band(fit.a, -1.2, -0.85) and in_band(fit.b, 0.85, 1.2)
    cells = " ".join(f"({r.N:g},{r.h:.4g})={r.variance:.3g}" for r in table)
    report(n, ok, f"{kind} fit a={fit.a:.4f} b={fit.b:.4f} C={fit.C:.4g} "
                  f"rms={fit.residual_rms:.3f}; cells {cells}")
    assert ok


def test_criterion_1_exact_tau_scaling():
    check_fit(1, "exact-tau")


def test_criterion_2_tau_tau_scaling():
    check_fit(2, "tau-tau")


def test_criterion_3_unbiased_estimator():
    m = decay(10_000)
    f = Observable.coordinate(m.network, "A")
    eps = 0.01 * math.exp(-1)
    z = []
    for seed in range(50):
        est = run_unbiased(m.network, m.scaling, m.initial, 1.0, eps, 3, f, seed=seed,
                           workers=None)
        z.append((est.estimate - math.exp(-1)) / est.stderr)
    z = np.array(z)
    inside = int(np.sum(np.abs(z) <= 3))
    ok = inside >= 47
    report(3, ok, f"{inside}/50 runs with |z| <= 3 (mean z {z.mean():+.3f}, sd {z.std(ddof=1):.3f})")
    assert ok


def test_criterion_4_biased_telescoping():
    m = decay(10_000)
    f = Observable.coordinate(m.network, "A")
    ests = [run_biased(m.network, m.scaling, m.initial, 1.0, 0.005, 3, f, seed=100 + i,
                       workers=None) for i in range(20)]
    h = ests[0].schedule.h_L
    assert all(e.schedule.h_L == h for e in ests)
    want = (1 - h) ** round(1.0 / h)
    mean = math.fsum(e.estimate for e in ests) / 20
    se = math.sqrt(math.fsum(e.variance for e in ests)) / 20
    ok = abs(mean - want) <= 3 * se
    report(4, ok, f"mean of 20 = {mean:.6f}, closed form {want:.6f} at h_L={h:.5g}, "
                  f"|diff|/SE = {abs(mean - want) / se:.2f}")
    assert ok


def test_criterion_5_exact_law():
    x0, n = 1000, 10_000
    m = decay(x0)
    batch = simulate_exact_batch(m.network, m.initial, 1.0, n, seed=5, workers=None)
    x = batch.finals[:, 0]
    p = math.exp(-1)
    mean, se = mean_se(x)
    var, vs = var_sigma(x)
    ks = np.arange(x0 + 1)
    obs = np.bincount(x, minlength=x0 + 1).astype(float)
    pval = chisq_binned(obs, stats.binom.pmf(ks, x0, p) * n)
    z_mean = abs(mean - x0 * p) / se
    z_var = abs(var - x0 * p * (1 - p)) / vs
    ok = z_mean <= 3 and z_var <= 4 and pval > 0.001
    report(5, ok, f"mean z={z_mean:.2f}, variance z={z_var:.2f}, chi-square p={pval:.3g}")
    assert ok


def test_criterion_6_coupling_marginals():
    m = dimerization(1e4)
    fine, coarse = SystemState([2000, 2000]), SystemState([1952, 2027])
    h = 0.003
    s = coupled_step_samples(m.network, fine, coarse, h, 100_000, seed=6)
    lf, lc = propensity(m.network, fine), propensity(m.network, coarse)
    ps = []
    for k in range(m.network.K):
        ps.append(chisq_poisson(s[:, k, 0] + s[:, k, 1], lf[k] * h))
        ps.append(chisq_poisson(s[:, k, 0] + s[:, k, 2], lc[k] * h))
    ok = min(ps) > 0.001
    report(6, ok, "chi-square p (fine, coarse per reaction) = " + ", ".join(f"{p:.3g}" for p in ps))
    assert ok


def test_criterion_7_coupling_effectiveness():
    m = dimerization(1e4)
    h, M, n = 0.003, 3, 10_000
    f = Observable.coordinate(m.network, "A")
    pairs = coupled_tau_batch(m.network, m.initial, h, M, T_DIMER, n, seed=7, workers=None)
    coupled = np.var(f(pairs.fine, m.scaling) - f(pairs.coarse, m.scaling), ddof=1)
    # 0.3 / 0.009 is not an integer, so the independent coarse path is the coarse leg of a
    # separately seeded pair, which carries the same partial last interval
    a = simulate_tau_batch(m.network, m.initial, h, T_DIMER, n, seed=8, workers=None)
    b = coupled_tau_batch(m.network, m.initial, h, M, T_DIMER, n, seed=9, workers=None)
    indep = np.var(f(a.finals, m.scaling) - f(b.coarse, m.scaling), ddof=1)
    ratio = coupled / indep
    ok = ratio <= 0.1
    report(7, ok, f"coupled {coupled:.3g} / independent {indep:.3g} = {ratio:.4f}")
    assert ok


def test_criterion_8_deviation_exponent():
    means = []
    for N in GRID_N:
        m = dimerization(N)
        est = deviation_moment(m.network, m.scaling, m.initial, T_DIMER, 2000, seed=8,
                               workers=None)
        means.append(est.mean)
    slope = float(np.polyfit(np.log(GRID_N), np.log(means), 1)[0])
    ok = in_band(slope, -1.2, -0.85)
    report(8, ok, f"N-exponent {slope:.4f}; moments " + ", ".join(f"{v:.3g}" for v in means))
    assert ok


def test_criterion_9_complexity():
    m = dimerization(1e4)
    eps = (0.02, 0.01, 0.005)
    rows = complexity_sweep(m.network, m.scaling, m.initial, T_DIMER, eps, kind="biased",
                            seed=9, workers=None)
    slope = cost_slope(rows)
    single, _ = single_level_cost(m.network, m.scaling, m.initial, T_DIMER, 0.005, seed=9,
                                  workers=None)
    ratio = rows[-1].cost / single
    ok = in_band(slope, -2.6, -1.8) and ratio <= 0.5
    costs = ", ".join(f"{r.eps:g}:{r.cost}" for r in rows)
    report(9, ok, f"slope {slope:.3f}; costs {costs}; MLMC/single-level at 0.005 = "
                  f"{rows[-1].cost}/{single} = {ratio:.3f}")
    assert ok


def test_criterion_10_determinism(tmp_path, capsys):
    cases = {
        "simulate": ["simulate", "--model", "dimerization", "--t-end", "0.05", "--paths", "500"],
        "tau": ["simulate", "--model", "dimerization", "--method", "tau", "--h", "0.001",
                "--paths", "500"],
        "couple": ["couple", "--model", "dimerization", "--kind", "exact-tau", "--level", "2",
                   "--pairs", "300"],
        "mlmc": ["mlmc", "--model", "decay", "--estimator", "unbiased", "--eps", "0.005",
                 "--seed", "123"],
        "sweep": ["sweep", "--N", "1000,10000", "--h", "0.01,0.003", "--pairs", "500"],
        "complexity": ["complexity", "--model", "decay", "--eps", "0.04,0.02,0.01"],
    }
    bad = []
    for name, args in cases.items():
        blobs = []
        for rep, w in enumerate(("1", "1", "2", "4")):
            path = tmp_path / f"{name}_{rep}"
            assert main(args + ["--workers", w, "--out", str(path)]) == 0
            blobs.append(path.read_bytes())
        if any(b != blobs[0] for b in blobs):
            bad.append(name)
    capsys.readouterr()
    ok = not bad
    report(10, ok, f"{len(cases)} commands x 4 runs (workers 1,1,2,4) byte-identical"
                   + (f"; differing: {bad}" if bad else ""))
    assert ok


def test_criterion_11_fitter_exactness():
    C, a, b = 0.0408, -1.0588, 1.0228
    rows = [SweepRow(N, h, "synthetic", 1, C * N**a * h**b, 0.0, 0)
            for N in (1e3, 1e4, 1e5, 1e6) for h in (0.01, 0.003, 0.001)]
    fit = fit_power_law(rows)
    err = max(abs(fit.C / C - 1), abs(fit.a / a - 1), abs(fit.b / b - 1))
    ok = err < 1e-10
    report(11, ok, f"max relative error {err:.2e}")
    assert ok
