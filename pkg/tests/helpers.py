"""Statistical helpers shared by the tests."""
import math

import numpy as np


def mean_se(x):
    x = np.asarray(x, dtype=float)
    return x.mean(), x.std(ddof=1) / math.sqrt(len(x))


def var_sigma(x):
    """Sample variance and its standard error (fourth central moment)."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    d = x - x.mean()
    s2 = (d**2).sum() / (n - 1)
    m4 = (d**4).mean()
    return s2, math.sqrt(max((m4 - s2**2 * (n - 3) / (n - 1)) / n, 0.0))


def chisq_poisson(samples, mean, min_expected=5.0):
    """Pearson chi-square p-value of integer samples against Poisson(mean), pooled tails."""
    from scipy import stats

    samples = np.asarray(samples)
    n = len(samples)
    lo = int(stats.poisson.ppf(1e-7, mean))
    hi = int(stats.poisson.ppf(1 - 1e-7, mean)) + 1
    ks = np.arange(lo, hi + 1)
    pmf = stats.poisson.pmf(ks, mean)
    pmf[0] += stats.poisson.cdf(lo - 1, mean)
    pmf[-1] += stats.poisson.sf(hi, mean)
    obs = np.bincount(np.clip(samples, lo, hi) - lo, minlength=len(ks)).astype(float)
    return chisq_binned(obs, pmf * n, min_expected)


def chisq_binned(obs, exp, min_expected=5.0):
    """Merge adjacent bins until each expects >= min_expected; return the p-value."""
    from scipy import stats

    o_b, e_b = [], []
    o_acc = e_acc = 0.0
    for o, e in zip(obs, exp):
        o_acc += o
        e_acc += e
        if e_acc >= min_expected:
            o_b.append(o_acc)
            e_b.append(e_acc)
            o_acc = e_acc = 0.0
    if e_acc > 0:
        o_b[-1] += o_acc
        e_b[-1] += e_acc
    o_b, e_b = np.array(o_b), np.array(e_b)
    e_b *= o_b.sum() / e_b.sum()
    return stats.chisquare(o_b, e_b).pvalue


ACCEPTANCE_LINES: list[str] = []


def report(n, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok
