import math

import numpy as np
import pytest

from helpers import chisq_poisson, mean_se, var_sigma
from tauleap_mlmc.coupling import (coupled_exact_tau, coupled_exact_tau_batch,
                                   coupled_step_samples, coupled_tau_batch, coupled_tau_pair)
from tauleap_mlmc.exact import simulate_exact_batch
from tauleap_mlmc.mlmc import Observable
from tauleap_mlmc.model import SystemState, dimerization, propensity
from tauleap_mlmc.streams import PathKey
from tauleap_mlmc.study import variance_stderr
from tauleap_mlmc.tau import simulate_tau_batch

# leading-order Var(X_1 - Z_1) * N / h for the dimerization model (x0 = 0.2, 0.2; T = 0.3):
# linearised difference process with residual rates N |grad(lambda_k) . (F (s - eta) + e)|,
# e the O(h) tau-leap bias, integrated with scipy; see the decisions ledger.
EXACT_TAU_CONSTANT = 0.0588


def test_identity_coupling_has_silent_residuals(dimer_1e3):
    m = dimer_1e3
    b = coupled_tau_batch(m.network, m.initial, 0.01, 1, 0.3, 500, seed=1)
    np.testing.assert_array_equal(b.fine, b.coarse)
    s = coupled_step_samples(m.network, m.initial, m.initial, 0.01, 1000)
    assert np.all(s[:, :, 1:] == 0)


def test_step_split_one_residual_per_reaction(dimer_1e3):
    m = dimer_1e3
    fine, coarse = SystemState([200, 200]), SystemState([180, 210])
    s = coupled_step_samples(m.network, fine, coarse, 0.05, 5000)
    lf, lc = propensity(m.network, fine), propensity(m.network, coarse)
    for k in range(2):
        silent = 2 if lf[k] > lc[k] else 1
        assert np.all(s[:, k, silent] == 0)
    assert np.all(s >= 0)


@pytest.mark.parametrize("k", [0, 1])
def test_step_marginals_are_poisson(dimer_1e4, k):
    m = dimer_1e4
    fine, coarse = SystemState([2000, 2000]), SystemState([1940, 2031])
    h = 0.003
    s = coupled_step_samples(m.network, fine, coarse, h, 100_000, seed=2)
    lf, lc = propensity(m.network, fine), propensity(m.network, coarse)
    assert chisq_poisson(s[:, k, 0] + s[:, k, 1], lf[k] * h) > 0.001
    assert chisq_poisson(s[:, k, 0] + s[:, k, 2], lc[k] * h) > 0.001


def test_pair_marginals_match_single_level(dimer_1e3):
    m = dimer_1e3
    n = 10_000
    pairs = coupled_tau_batch(m.network, m.initial, 0.01, 3, 0.3, n, seed=3, workers=None)
    fine = simulate_tau_batch(m.network, m.initial, 0.01, 0.3, n, seed=4, workers=None)
    coarse = simulate_tau_batch(m.network, m.initial, 0.03, 0.3, n, seed=5, workers=None)
    for a, b in ((pairs.fine, fine.finals), (pairs.coarse, coarse.finals)):
        (ma, sa), (mb, sb) = mean_se(a[:, 0]), mean_se(b[:, 0])
        assert abs(ma - mb) < 4 * math.hypot(sa, sb)
        (va, vsa), (vb, vsb) = var_sigma(a[:, 0]), var_sigma(b[:, 0])
        assert abs(va - vb) < 4 * math.hypot(vsa, vsb)


def test_pair_conservation_and_single_vs_batch(dimer_1e3):
    m = dimer_1e3
    b = coupled_tau_batch(m.network, m.initial, 0.01, 3, 0.3, 50, seed=6, level=2)
    assert np.all(b.fine @ [1, 2] == 600) and np.all(b.coarse @ [1, 2] == 600)
    for p in (0, 49):
        one = coupled_tau_pair(m.network, m.scaling, m.initial, 2, 3, 0.3, PathKey(6, 2, p),
                               h=0.01)
        np.testing.assert_array_equal(one.fine.counts, b.fine[p])
        np.testing.assert_array_equal(one.coarse.counts, b.coarse[p])
        assert one.cost == 30 * 2


def test_pair_rejects_small_M(dimer_1e3):
    m = dimer_1e3
    with pytest.raises(ValueError):
        coupled_tau_pair(m.network, m.scaling, m.initial, 1, 1, 0.3)


def test_tau_tau_variance_against_published_fit(dimer_1e4):
    m = dimer_1e4
    b = coupled_tau_batch(m.network, m.initial, 0.001, 3, 0.3, 10_000, seed=7, workers=None)
    f = Observable.coordinate(m.network, "A")
    v, _ = variance_stderr(f(b.fine, m.scaling) - f(b.coarse, m.scaling))
    ref = 0.1038 * 1e4**-1.0279 * 0.001**0.9845
    assert ref / 3 < v < 3 * ref


def test_exact_tau_x_marginal(dimer_1e3):
    m = dimer_1e3
    n = 10_000
    pairs = coupled_exact_tau_batch(m.network, m.initial, 0.01, 0.3, n, seed=8, workers=None)
    ex = simulate_exact_batch(m.network, m.initial, 0.3, n, seed=9, workers=None)
    (ma, sa), (mb, sb) = mean_se(pairs.fine[:, 0]), mean_se(ex.finals[:, 0])
    assert abs(ma - mb) < 3 * math.hypot(sa, sb)
    assert np.all(pairs.fine >= 0)
    assert np.all(pairs.fine @ [1, 2] == 600) and np.all(pairs.coarse @ [1, 2] == 600)


def test_exact_tau_z_marginal(dimer_1e3):
    m = dimer_1e3
    n = 10_000
    pairs = coupled_exact_tau_batch(m.network, m.initial, 0.03, 0.3, n, seed=10, workers=None)
    tau = simulate_tau_batch(m.network, m.initial, 0.03, 0.3, n, seed=11, workers=None)
    (ma, sa), (mb, sb) = mean_se(pairs.coarse[:, 0]), mean_se(tau.finals[:, 0])
    assert abs(ma - mb) < 4 * math.hypot(sa, sb)


def test_exact_tau_single_matches_batch_and_cost(dimer_1e3):
    m = dimer_1e3
    b = coupled_exact_tau_batch(m.network, m.initial, 0.01, 0.3, 20, seed=12, level=3)
    for p in (0, 19):
        one = coupled_exact_tau(m.network, m.scaling, m.initial, 3, 0.3, PathKey(12, 3, p),
                                h=0.01)
        np.testing.assert_array_equal(one.exact.counts, b.fine[p])
        np.testing.assert_array_equal(one.tau.counts, b.coarse[p])
        assert one.cost == b.costs[p]
        assert one.event_count == one.channel_counts[:, :2].sum()


def test_exact_tau_paths_coincide_as_h_shrinks(dimer_1e4):
    m = dimer_1e4
    frac = []
    for h in (0.3 / 30, 0.3 / 300, 0.3 / 3000):
        b = coupled_exact_tau_batch(m.network, m.initial, h, 0.3, 2000, seed=13, workers=None)
        frac.append(np.mean(np.all(b.fine == b.coarse, axis=1)))
    assert frac[0] < frac[1] < frac[2]
    assert frac[2] > 0.9


def test_exact_tau_variance_against_asymptotic_constant():
    m = dimerization(1e5)
    h = 0.01
    b = coupled_exact_tau_batch(m.network, m.initial, h, 0.3, 10_000, seed=14, workers=None)
    f = Observable.coordinate(m.network, "A")
    v, _ = variance_stderr(f(b.fine, m.scaling) - f(b.coarse, m.scaling))
    ratio = v / (EXACT_TAU_CONSTANT * h / 1e5)
    assert 0.9 < ratio < 1.25


def test_batch_independent_of_workers(dimer_1e3):
    m = dimer_1e3
    for fn, args in ((coupled_tau_batch, (0.01, 3, 0.3)), (coupled_exact_tau_batch, (0.01, 0.3))):
        a = fn(m.network, m.initial, *args, 600, seed=15, workers=1)
        c = fn(m.network, m.initial, *args, 600, seed=15, workers=3)
        np.testing.assert_array_equal(a.fine, c.fine)
        np.testing.assert_array_equal(a.coarse, c.coarse)
