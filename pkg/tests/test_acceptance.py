"""Acceptance criteria 1-10, each at its stated sample size and tolerance.

Every criterion records one PASS/FAIL line, printed in the terminal summary.
"""

import csv
import io
import subprocess
import sys
import time

import numpy as np
import pytest

from perfsim import accept_reject as ar
from perfsim import cftp
from perfsim import factory as bf
from perfsim import ruin
from perfsim.cli import BENCH_FIELDS, bench_rows, render
from perfsim.rand import derive_stream, make_generator
from perfsim.stats import (binomial_mean_test, chi_squared_gof, counts_of, majority_pass,
                           mean_within)
from perfsim.verify import local_correctness, tail_check

from .conftest import ACCEPTANCE_LINES

pytestmark = pytest.mark.slow

SEEDS = (101, 202, 303)
N = 10**6
SIG = 1e-3


def _record(k, title, ok, detail):
    line = f"criterion {k:>2} [{title}]: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES[k] = line
    print(line)
    assert ok, line


def _gen(seed, k=0):
    return make_generator(derive_stream(seed, k))


# ---------------------------------------------------------------------------

def _ar_runs():
    wide = ar.example_wide_pair()
    pair = ar.example_pair()
    return {
        "ar2": (lambda g: ar.ar_basic_batch(N, g), range(1, 6), np.full(5, 0.2)),
        "ar3": (lambda g: ar.ar_adaptive_param_batch(N, 100, g), range(1, 6), np.full(5, 0.2)),
        "ar4": (lambda g: ar.ar_general_batch(N, pair, g), range(3), pair.target.normalize()),
        "ar5": (lambda g: ar.ar_adaptive_envelope_batch(N, wide, ar.HalvingClampRule(), g),
                range(3), wide.target.normalize()),
    }


def test_criterion_01_ar_correctness():
    parts, ok = [], True
    for name, (sampler, outcomes, probs) in _ar_runs().items():
        t0 = time.perf_counter()
        reports = [chi_squared_gof(counts_of(sampler(_gen(s)).outcomes, outcomes), probs, SIG, seed=s)
                   for s in SEEDS]
        elapsed = time.perf_counter() - t0
        good = majority_pass(reports) and elapsed < 30
        ok &= good
        ps = ",".join(f"{r.p_value:.3g}" for r in reports)
        parts.append(f"{name} p=[{ps}] {elapsed:.1f}s")
    _record(1, "AR correctness", ok, "; ".join(parts))


def test_criterion_02_local_correctness():
    parts, ok = [], True
    for name in ("ar2", "ar3", "ar4", "cftp-walk3"):
        for n in (0, 1, 2):
            reports = [local_correctness(name, n, N, s, SIG)[0] for s in SEEDS]
            coupled = tail_check(name, n, 10_000, SEEDS[0])
            good = majority_pass(reports) and coupled.mismatches_within == 0
            ok &= good
            parts.append(f"{name}/n={n} p_min={min(r.p_value for r in reports):.3g} "
                         f"mismatch={coupled.mismatches_within}")
    _record(2, "local correctness", ok, "; ".join(parts))


def test_criterion_03_tail_inequality():
    parts, ok = [], True
    for n in (0, 1, 2):
        rep = tail_check("ar2", n, 10**5, SEEDS[0] + n)
        good = rep.tv <= rep.tail + rep.slack
        ok &= good
        parts.append(f"n={n} TV={rep.tv:.4f} tail={rep.tail:.4f} slack={rep.slack:.4f}")
    _record(3, "tail inequality", ok, "; ".join(parts))


def test_criterion_04_cftp():
    parts, ok = [], True
    for name, make in cftp.CHAINS.items():
        u = make()
        try:
            pi = cftp.stationary_exact(u)
        except cftp.NoUniqueStationary:
            pi = np.full(u.size, 1.0 / u.size)   # identity kernel fixes every law
        res = cftp.verify_stationarity(u, pi)
        ok &= res <= 1e-10
        parts.append(f"{name} residual={res:.1e}")
    for name in ("walk3", "twostate"):
        u = cftp.CHAINS[name]()
        pi = cftp.stationary_exact(u)
        reports = [chi_squared_gof(counts_of(cftp.cftp_batch(u, 1, N, _gen(s)).outcomes, range(u.size)),
                                   pi, SIG, seed=s) for s in SEEDS]
        ok &= majority_pass(reports)
        parts.append(f"{name} p=[{','.join(f'{r.p_value:.3g}' for r in reports)}]")
    _record(4, "CFTP stationarity", ok, "; ".join(parts))


def test_criterion_05_bf1():
    parts, ok, k = [], True, 0
    for C in (1, 2, 4):
        for p in (0.05, 0.1, 0.2):
            coin = bf.VectorCoin(p, _gen(SEEDS[0], 2 * k + 1))
            b = bf.bf1_batch(N, C, coin, _gen(SEEDS[0], 2 * k))
            k += 1
            mean = binomial_mean_test(int(b.outcomes.sum()), N, C * p / (1 + C * p))
            flips = mean_within(b.coin_flips, C / (1 + C * p))
            good = mean.passed and flips.passed and coin.p_reads == 0
            ok &= good
            parts.append(f"C={C},p={p}: z_mean={mean.margin / mean.sigma:.1f} z_flips={flips.margin / flips.sigma:.1f}")
    _record(5, "BF1 law and flips", ok, "; ".join(parts))


def _bf2_grid():
    for C in (1, 2, 4):
        for eps in (0.1, 0.3):
            for p in (0.05, 0.1, 0.2):
                if C * p <= 1 - eps:
                    yield C, eps, p


def test_criterion_06_bf2():
    parts, ok, k, worst = [], True, 0, 0.0
    for C, eps, p in _bf2_grid():
        for i in (0, 1, 2, 3):
            coin = bf.VectorCoin(p, _gen(SEEDS[1], 2 * k + 1))
            b = bf.bf2_batch(N, bf.FactoryParams(C, i, eps), coin, _gen(SEEDS[1], 2 * k))
            k += 1
            if i == 0:
                good = bool(np.all(b.outcomes == 1)) and int(b.coin_flips.sum()) == 0
            else:
                t = binomial_mean_test(int(b.outcomes.sum()), N, (C * p) ** i)
                good = t.passed
                worst = max(worst, t.margin / t.sigma)
            if not good:
                parts.append(f"C={C},eps={eps},p={p},i={i} off")
            ok &= good and coin.p_reads == 0
    parts.insert(0, f"{k} runs, worst |z|={worst:.2f}, i=0 exact")
    _record(6, "BF2 law", ok, "; ".join(parts))


def test_criterion_07_ruin():
    t0 = time.perf_counter()
    worst, ok = 0.0, True
    for r in (0.55, 0.6, 0.75, 0.9, 1.0):
        for n in (2, 5, 10, 50):
            c = ruin.RuinChain(r, n)
            worst = max(worst, abs(ruin.ruin_expected_steps(c) - ruin.ruin_oracle(c)))
            for i in range(1, n):
                ci = ruin.RuinChain(r, n, i)
                ok &= ruin.ruin_oracle(ci) <= ruin.ruin_upper_bound(ci) + 1e-12
    elapsed = time.perf_counter() - t0
    ok &= worst <= 1e-9 and elapsed < 1.0
    _record(7, "gambler's ruin", ok, f"max |closed - oracle|={worst:.1e}, bound holds, {elapsed:.3f}s")


@pytest.fixture(scope="module")
def bench():
    t0 = time.perf_counter()
    rows = bench_rows([1.0, 2.0, 4.0], [0.1, 0.3], N, SEEDS[2])
    return rows, time.perf_counter() - t0


def test_criterion_08_flip_bound(bench):
    rows, elapsed = bench
    ok = all(r["within_bound"] for r in rows) and elapsed < 300
    detail = "; ".join(f"C={r['C']:g},eps={r['eps']:g}: {r['mean_flips']:.2f}<={r['bound_bf2']:.2f}"
                       for r in rows)
    _record(8, "flip-count bound", ok, f"{detail}; {elapsed:.0f}s")


def test_criterion_09_speedup_ratio(bench):
    rows, _ = bench
    text = render({"fields": BENCH_FIELDS, "rows": rows}, "csv")
    parsed = list(csv.DictReader(io.StringIO(text)))
    small = [r for r in parsed if float(r["eps"]) <= 0.1]
    ratios = [float(r["ratio"]) for r in small]
    ok = bool(small) and all(0.57 <= x <= 0.60 for x in ratios)
    detail = (f"bench ratios at eps<=0.1: {sorted(set(round(x, 4) for x in ratios))}; "
              f"limit eps->0 is {ruin.bound_coefficient() / ruin.PRIOR_CONSTANT:.4f}")
    _record(9, "speedup ratio", ok, detail)


CLI_CASES = [
    ["ar", "--variant", "basic", "--samples", "20000"],
    ["ar", "--variant", "adaptive-param", "--samples", "5000", "--engine"],
    ["ar", "--variant", "general", "--samples", "20000", "--format", "csv"],
    ["ar", "--variant", "adaptive-envelope", "--samples", "20000"],
    ["cftp", "--chain", "walk3", "--samples", "20000"],
    ["cftp", "--chain", "twostate", "--samples", "5000", "--engine"],
    ["bf", "--C", "2", "--eps", "0.3", "--p", "0.3", "--samples", "20000"],
    ["bf", "--C", "2", "--eps", "0.3", "--p", "0.3", "--samples", "2000", "--engine"],
    ["ruin", "--r", "0.6", "--n", "10", "--mc-check", "5000"],
    ["bounds"],
    ["verify-local", "--algorithm", "ar2", "--samples", "5000", "--coupled-runs", "2000"],
    ["bench", "--C", "1", "--eps", "0.3", "--samples", "20000"],
]


def test_criterion_10_determinism():
    bad = []
    for argv in CLI_CASES:
        cmd = [sys.executable, "-m", "perfsim.cli", *argv, "--seed", "17"]
        a = subprocess.run(cmd, capture_output=True, check=False)
        b = subprocess.run(cmd, capture_output=True, check=False)
        if a.returncode != 0 or a.stdout != b.stdout or not a.stdout:
            bad.append(" ".join(argv[:2]))
    _record(10, "determinism", not bad,
            f"{len(CLI_CASES) - len(bad)}/{len(CLI_CASES)} commands byte-identical"
            + (f"; differing: {bad}" if bad else ""))
