"""Command-line experiments: ``perfsim {ar,cftp,bf,ruin,bounds,verify-local,bench}``.

Every payload is a deterministic function of the arguments (including
``--seed``).  Exit codes: 0 all checks passed, 1 a statistical check failed,
2 usage or validation error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time

import numpy as np

from . import accept_reject as ar
from . import cftp
from . import factory as bf
from . import ruin
from .densities import EnvelopePair, EnvelopeViolation, FiniteDensity
from .engine import DepthExceeded, Sources, TerminationGuard, sample_many
from .rand import check_seed, derive_stream, make_generator
from .stats import (DEFAULT_SIGNIFICANCE, binomial_mean_test, chi_squared_gof, counts_of,
                    mean_within)
from .verify import ALGORITHMS, local_correctness, tail_check

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _histogram(values) -> dict:
    vals, counts = np.unique(np.asarray(values), return_counts=True)
    return {str(v): int(c) for v, c in zip(vals.tolist(), counts.tolist())}


def _batch_gen(seed):
    return make_generator(derive_stream(seed, 0))


def _coin_gen(seed):
    return make_generator(derive_stream(seed, 1))


# ---------------------------------------------------------------------------
# subcommands; each returns (payload, passed)
# ---------------------------------------------------------------------------

def _load_pair(args, default):
    if args.target is None and args.envelope is None:
        return default()
    if args.target is None or args.envelope is None:
        raise UsageError("--target and --envelope must be given together")
    return EnvelopePair(FiniteDensity.from_json(args.target), FiniteDensity.from_json(args.envelope))


def cmd_ar(args):
    rule = {"halving-clamp": ar.HalvingClampRule(), "identity": ar.IdentityRule()}[args.rule]
    if args.variant in ("basic", "adaptive-param"):
        outcomes = tuple(range(1, 6))
        probs = np.full(5, 0.2)
        if args.variant == "basic":
            spec = ar.ar_basic()
            batch = lambda gen: ar.ar_basic_batch(args.samples, gen)
        else:
            spec = ar.ar_adaptive_param(args.alpha0)
            batch = lambda gen: ar.ar_adaptive_param_batch(args.samples, args.alpha0, gen)
    else:
        default = ar.example_pair if args.variant == "general" else ar.example_wide_pair
        pair = _load_pair(args, default)
        outcomes = pair.target.domain
        probs = pair.target.normalize()
        if args.variant == "general":
            spec = ar.ar_general(pair)
            batch = lambda gen: ar.ar_general_batch(args.samples, pair, gen)
        else:
            spec = ar.ar_adaptive_envelope(pair, rule)
            batch = lambda gen: ar.ar_adaptive_envelope_batch(args.samples, pair, rule, gen)

    if args.engine:
        res = sample_many(spec, Sources.from_seed(args.seed), args.samples)
        counts = counts_of(res.outcomes, outcomes)
    else:
        res = batch(_batch_gen(args.seed))
        # envelope batch runners report domain indices
        index_valued = args.variant in ("general", "adaptive-envelope")
        counts = counts_of(res.outcomes, range(len(outcomes)) if index_valued else outcomes)
    gof = chi_squared_gof(counts, probs, args.significance, seed=args.seed)
    payload = {
        "command": "ar",
        "variant": args.variant,
        "samples": args.samples,
        "seed": args.seed,
        "mode": "engine" if args.engine else "batch",
        "histogram": {str(x): int(c) for x, c in zip(outcomes, counts)},
        "expected": {str(x): float(q) for x, q in zip(outcomes, probs)},
        "gof": gof.to_dict(),
        "depth_histogram": _histogram(res.levels),
        "mean_depth": float(np.mean(res.levels)),
        "uniform_draws": int(res.uniform_draws),
    }
    return payload, gof.passed


def _chain(args):
    if args.chain in ("custom", "custom-json"):
        if not args.chain_file:
            raise UsageError("--chain custom-json needs --chain-file")
        u = cftp.chain_from_json(args.chain_file)
    else:
        u = cftp.CHAINS[args.chain]()
    if args.schedule == "increment":
        u = u.with_schedule(lambda a: a + 1)
    return u


def cmd_cftp(args):
    u = _chain(args)
    guard = TerminationGuard(args.max_depth)
    try:
        pi = cftp.stationary_exact(u)
    except cftp.NoUniqueStationary:
        pi = None
    try:
        if args.engine:
            res = sample_many(cftp.cftp_run(u, args.alpha0), Sources.from_seed(args.seed),
                              args.samples, guard=guard)
        else:
            res = cftp.cftp_batch(u, args.alpha0, args.samples, _batch_gen(args.seed), guard)
    except DepthExceeded as exc:
        raise UsageError(f"{exc}. The chain may never coalesce completely; "
                         "try a larger --max-depth or a chain with coupling moves") from None
    payload = {
        "command": "cftp",
        "chain": u.name,
        "alpha0": args.alpha0,
        "samples": args.samples,
        "seed": args.seed,
        "mode": "engine" if args.engine else "batch",
        "histogram": {str(u.states[k]): int(c) for k, c in enumerate(counts_of(res.outcomes, range(u.size)))},
        "coalescence_level_histogram": _histogram(res.levels),
        "uniform_draws": int(res.uniform_draws),
    }
    passed = True
    if pi is not None:
        gof = chi_squared_gof(counts_of(res.outcomes, range(u.size)), pi, args.significance, seed=args.seed)
        payload["stationary"] = {str(s): float(q) for s, q in zip(u.states, pi)}
        payload["stationarity_residual"] = cftp.verify_stationarity(u, pi)
        payload["gof"] = gof.to_dict()
        passed = gof.passed
    return payload, passed


def _check_promise(C, p, eps):
    if C * p > 1.0 - eps:
        raise UsageError(f"promise violated: C*p = {C * p:g} > 1 - eps = {1.0 - eps:g}; "
                         "the factory's output law is unspecified without it")


def cmd_bf(args):
    try:
        params = bf.FactoryParams(args.C, args.i, args.eps)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if not 0.0 <= args.p <= 1.0:
        raise UsageError("--p must lie in [0, 1]")
    _check_promise(args.C, args.p, args.eps)
    if args.engine:
        sources = Sources.from_seed(args.seed, args.p)
        res = sample_many(bf.bf2(params), sources, args.samples)
        flips = res.coin_flips
    else:
        coin = bf.VectorCoin(args.p, _coin_gen(args.seed))
        res = bf.bf2_batch(args.samples, params, coin, _batch_gen(args.seed))
        flips = res.coin_flips
    bits = np.asarray(res.outcomes, dtype=np.int64)
    n = args.samples
    target = (args.C * args.p) ** args.i
    mean = float(bits.mean())
    stderr = math.sqrt(mean * (1.0 - mean) / (n - 1)) if n > 1 else 0.0
    test = binomial_mean_test(int(bits.sum()), n, target)
    mean_flips = float(flips.mean())
    flips_se = float(flips.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    payload = {
        "command": "bf",
        "C": args.C, "i": args.i, "eps": args.eps, "p": args.p,
        "samples": n,
        "seed": args.seed,
        "mode": "engine" if args.engine else "batch",
        "target": target,
        "mean": mean,
        "stderr": stderr,
        "mean_test": test.to_dict(),
        "mean_flips": mean_flips,
        "flips_stderr": flips_se,
        "max_depth": int(np.max(res.levels)),
        "bound_bf2": ruin.bound_bf2(args.C, args.eps),
        "bound_bf2_literal": ruin.bound_bf2_literal(args.C, args.eps),
        "prior_bound": ruin.prior_bound(args.C, args.eps),
    }
    passed = test.passed
    if args.i == 1:
        within = mean_flips - 4.0 * flips_se <= ruin.bound_bf2(args.C, args.eps)
        payload["within_bound_bf2"] = bool(within)
        payload["within_prior_bound"] = bool(mean_flips - 4.0 * flips_se <= ruin.prior_bound(args.C, args.eps))
        passed = passed and within
    return payload, passed


def cmd_ruin(args):
    try:
        chain = ruin.RuinChain(args.r, args.n, args.start)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    payload = {"command": "ruin", "r": args.r, "n": args.n, "start": args.start,
               "oracle": ruin.ruin_oracle(chain)}
    passed = True
    if args.r > 0.5:
        payload["upper_bound"] = ruin.ruin_upper_bound(chain)
        passed = payload["oracle"] <= payload["upper_bound"] + 1e-9
        if args.start == 1:
            payload["closed_form"] = ruin.ruin_expected_steps(chain)
            payload["closed_form_error"] = abs(payload["closed_form"] - payload["oracle"])
            passed = passed and payload["closed_form_error"] <= 1e-9
    if args.mc_check:
        mean, se = ruin.ruin_monte_carlo(chain, args.mc_check, _batch_gen(args.seed))
        ok = abs(mean - payload["oracle"]) <= 4.0 * se or (se == 0.0 and mean == payload["oracle"])
        payload["monte_carlo"] = {"walks": args.mc_check, "seed": args.seed, "mean": mean,
                                  "stderr": se, "pass": bool(ok)}
        passed = passed and ok
    return payload, passed


BOUNDS_FIELDS = ["C", "eps", "bound_new", "bound_prior", "ratio"]


def cmd_bounds(args):
    rows = []
    for C in args.C:
        for eps in args.eps:
            new, prior = ruin.bound_bf2(C, eps), ruin.prior_bound(C, eps)
            rows.append({"C": C, "eps": eps, "bound_new": new, "bound_prior": prior, "ratio": new / prior})
    return {"command": "bounds", "fields": BOUNDS_FIELDS, "rows": rows,
            "coefficient": ruin.bound_coefficient()}, True


def cmd_verify_local(args):
    gof, counts = local_correctness(args.algorithm, args.n, args.samples, args.seed, args.significance)
    payload = {"command": "verify-local", "algorithm": args.algorithm, "n": args.n,
               "samples": args.samples, "seed": args.seed, "counts": counts.tolist(),
               "gof": gof.to_dict()}
    passed = gof.passed
    if args.coupled_runs:
        tail = tail_check(args.algorithm, args.n, args.coupled_runs, args.seed)
        payload["coupled"] = tail.to_dict()
        passed = passed and tail.passed
    return payload, passed


BENCH_FIELDS = ["C", "eps", "p", "samples", "mean", "target", "mean_flips", "flips_stderr",
                "bound_bf2", "bound_bf2_literal", "prior_bound", "ratio", "within_bound"]


def bench_rows(Cs, epss, samples, seed, ps=None, timing=False):
    rows = []
    k = 0
    for C in Cs:
        for eps in epss:
            for p in (ps if ps else [(1.0 - eps) / (2.0 * C)]):
                _check_promise(C, p, eps)
                coin = bf.VectorCoin(p, make_generator(derive_stream(seed, 2 * k + 1)))
                gen = make_generator(derive_stream(seed, 2 * k))
                k += 1
                t0 = time.perf_counter()
                res = bf.linear_factory_batch(samples, C, eps, coin, gen)
                elapsed = time.perf_counter() - t0
                flips = mean_within(res.coin_flips, 0.0)
                new, prior = ruin.bound_bf2(C, eps), ruin.prior_bound(C, eps)
                row = {
                    "C": C, "eps": eps, "p": p, "samples": samples,
                    "mean": float(res.outcomes.mean()), "target": C * p,
                    "mean_flips": flips.estimate, "flips_stderr": flips.sigma,
                    "bound_bf2": new, "bound_bf2_literal": ruin.bound_bf2_literal(C, eps),
                    "prior_bound": prior, "ratio": new / prior,
                    "within_bound": bool(flips.estimate - 4.0 * flips.sigma <= new),
                }
                if timing:
                    row["seconds_per_1e6_bits"] = elapsed * 1e6 / samples
                rows.append(row)
    return rows


def cmd_bench(args):
    rows = bench_rows(args.C, args.eps, args.samples, args.seed, args.p, args.timing)
    fields = BENCH_FIELDS + (["seconds_per_1e6_bits"] if args.timing else [])
    return {"command": "bench", "fields": fields, "rows": rows}, all(r["within_bound"] for r in rows)


# ---------------------------------------------------------------------------
# parser and entry point
# ---------------------------------------------------------------------------

def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _seed(text):
    try:
        return check_seed(int(text))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--samples", type=_positive_int, default=100_000)
    common.add_argument("--seed", type=_seed, default=0)
    common.add_argument("--significance", type=float, default=DEFAULT_SIGNIFICANCE)
    common.add_argument("--format", choices=["json", "csv"], default=None)
    common.add_argument("--out", default=None, help="write the payload here instead of stdout")

    parser = argparse.ArgumentParser(prog="perfsim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ar", parents=[common], help="acceptance/rejection samplers")
    p.add_argument("--variant", choices=["basic", "adaptive-param", "general", "adaptive-envelope"],
                   default="basic")
    p.add_argument("--alpha0", type=_positive_int, default=100)
    p.add_argument("--target", help="JSON density file for h")
    p.add_argument("--envelope", help="JSON density file for g")
    p.add_argument("--rule", choices=["halving-clamp", "identity"], default="halving-clamp")
    p.add_argument("--engine", action="store_true", help="run each sample through the recursion engine")
    p.set_defaults(func=cmd_ar)

    p = sub.add_parser("cftp", parents=[common], help="coupling from the past")
    p.add_argument("--chain", choices=["walk3", "twostate", "identity", "custom-json", "custom"], default="walk3")
    p.add_argument("--chain-file")
    p.add_argument("--alpha0", type=_positive_int, default=1)
    p.add_argument("--schedule", choices=["double", "increment"], default="double")
    p.add_argument("--max-depth", type=_positive_int, default=20)
    p.add_argument("--engine", action="store_true")
    p.set_defaults(func=cmd_cftp)

    p = sub.add_parser("bf", parents=[common], help="Bernoulli factory for (Cp)^i")
    p.add_argument("--C", type=float, required=True)
    p.add_argument("--i", type=int, default=1)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--p", type=float, required=True, help="coin bias (harness side only)")
    p.add_argument("--engine", action="store_true")
    p.set_defaults(func=cmd_bf)

    p = sub.add_parser("ruin", parents=[common], help="gambler's ruin absorption times")
    p.add_argument("--r", type=float, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--start", type=int, default=1)
    p.add_argument("--mc-check", type=int, default=0, metavar="WALKS")
    p.set_defaults(func=cmd_ruin)

    p = sub.add_parser("bounds", parents=[common], help="flip-count bound table")
    p.add_argument("--C", type=float, nargs="*", default=[1.0, 2.0, 4.0])
    p.add_argument("--eps", type=float, nargs="*", default=[0.01, 0.05, 0.1, 0.3])
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("verify-local", parents=[common], help="oracle-truncated runs vs exact law")
    p.add_argument("--algorithm", choices=list(ALGORITHMS), default="ar2")
    p.add_argument("--n", type=int, choices=[0, 1, 2], default=0)
    p.add_argument("--coupled-runs", type=int, default=10_000)
    p.set_defaults(func=cmd_verify_local)

    p = sub.add_parser("bench", parents=[common], help="linear factory flip counts vs bounds")
    p.add_argument("--C", type=float, nargs="*", default=[1.0, 2.0, 4.0])
    p.add_argument("--eps", type=float, nargs="*", default=[0.1, 0.3])
    p.add_argument("--p", type=float, nargs="*", default=None,
                   help="coin biases; default (1 - eps) / (2C) per grid point")
    p.add_argument("--timing", action="store_true",
                   help="add wall-time column (makes output non-reproducible)")
    p.set_defaults(func=cmd_bench)
    return parser


def render(payload: dict, fmt: str) -> str:
    if fmt == "csv":
        buf = io.StringIO()
        if "rows" in payload:
            writer = csv.DictWriter(buf, fieldnames=payload["fields"], lineterminator="\n")
            writer.writeheader()
            writer.writerows(payload["rows"])
        else:
            flat = {k: (json.dumps(v, sort_keys=True) if isinstance(v, (dict, list)) else v)
                    for k, v in payload.items()}
            writer = csv.DictWriter(buf, fieldnames=list(flat), lineterminator="\n")
            writer.writeheader()
            writer.writerow(flat)
        return buf.getvalue()
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    fmt = args.format or ("csv" if args.command in ("bounds", "bench") else "json")
    try:
        payload, passed = args.func(args)
    except (UsageError, EnvelopeViolation, ValueError, OSError) as exc:
        print(f"perfsim {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    text = render(payload, fmt)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK if passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
