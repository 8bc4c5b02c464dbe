"""Batch runner and reporting front end.

Subcommands:
  run     -- run a mechanism on a scenario file or a builtin construction;
             writes trace.jsonl, schedule.json and summary.json.
  verify  -- check threshold and welfare dominance of a schedule against a
             benchmark schedule (or the computed fractional optimum).
  suite   -- run the named check suites across seeds and emit a CSV of
             (suite, seed, metric, value, bound, pass) rows.

Exit codes: 0 pass, 1 check failure, 2 usage or input error.  All randomness
flows from --seed; reruns with identical flags produce byte-identical output
files.  FEEMARKET_THREADS caps suite parallelism (default 1).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from . import benchmarks, core, mechanisms, scenarios
from .adversary import (
    InclusionPolicy,
    ValueAscending,
    ValueDescending,
    TipPriority,
    policy_from_config,
)
from .core import FeeMarketError, Scenario, constant_slack
from .mechanisms import MechanismParams, params_from_config

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_USAGE = 2

CSV_COLUMNS = ["suite", "seed", "metric", "value", "bound", "pass"]


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def _atomic_write(path: Path, data: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass
class Row:
    suite: str
    seed: int
    metric: str
    value: float
    bound: float
    passed: bool

    def as_list(self) -> list[str]:
        return [
            self.suite,
            str(self.seed),
            self.metric,
            _fmt(self.value),
            _fmt(self.bound),
            "1" if self.passed else "0",
        ]


def rows_to_csv(rows: list[Row]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in sorted(rows, key=lambda r: (r.suite, r.seed, r.metric)):
        w.writerow(r.as_list())
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Suite bodies (also used directly by the acceptance tests)
# ---------------------------------------------------------------------------

LOAD_FACTORS = (0.5, 1.0, 2.0, 5.0)


def theorem_params(B: int = 100, eta: float = 0.125) -> MechanismParams:
    return MechanismParams(B=float(B), c=3.0, eta=eta, p_min=1.0, p_1=1.0)


def run_theorem_case(
    seed: int,
    horizon: int = 500,
    B: int = 100,
    v_max_mult: float = 1e6,
) -> tuple[mechanisms.RunResult, core.Schedule, MechanismParams, int, Scenario]:
    """One positive-check instance: random family + mechanism run + fractional
    optimum.  Returns (run, benchmark, params, gamma, scenario)."""
    params = theorem_params(B=B)
    v_lo = math.exp(params.eta) * params.p_min
    v_hi = v_max_mult * params.p_min
    load = LOAD_FACTORS[seed % len(LOAD_FACTORS)]
    scn = scenarios.random_family(
        seed=seed,
        horizon=horizon,
        value_range=(v_lo, v_hi),
        q_max=B,
        load_factor=load,
        B=B,
        eta=params.eta,
        p_min=params.p_min,
    )
    gamma = mechanisms.theorem_gamma(params, v_max=v_hi, q_max=B, delta_prime=0)
    if seed % 2 == 0:
        policy: InclusionPolicy = ValueAscending()
    else:
        policy = TipPriority(tips={t.id: 1.0 / t.unit_value for t in scn.transactions})
    run = mechanisms.run_price_based(scn, params, policy, horizon + gamma)
    bench = benchmarks.opt_fractional(scn, B, horizon)
    return run, bench, params, gamma, scn


def suite_theorems(seeds: int, horizon: int = 200, B: int = 100) -> list[Row]:
    def one(seed: int) -> list[Row]:
        run, bench, params, gamma, scn = run_theorem_case(seed, horizon=horizon, B=B)
        v_max = max(
            max((t.unit_value for t in scn.transactions), default=params.p_1),
            params.p_1,
        )
        wrep = benchmarks.check_welfare_dominance(
            run.schedule, bench, scn, horizon, gamma, params.eta
        )
        trep = benchmarks.check_threshold_dominance(
            run.schedule, bench, scn, horizon, gamma, params.eta, bench_limit=B
        )
        delta = mechanisms.theorem_slackness(params, v_max)
        srep = core.check_avg_block_size(
            run.schedule, scn, params.B, constant_slack(delta)
        )
        bound_lp = math.log(v_max) + params.eta * (params.c - 1.0)
        first = run.trace.first_nonempty()
        worst_lp = max(
            (r.log_prices[0] for r in run.trace.records if first is not None and r.time > first),
            default=-math.inf,
        )
        return [
            Row("theorems", seed, "welfare_alg", wrep.alg_welfare, wrep.required, wrep.passed),
            Row("theorems", seed, "threshold_violations", float(len(trep.violations)), 0.0, trep.passed),
            Row("theorems", seed, "slackness_measured", srep.max_slackness, delta, srep.passed),
            Row("theorems", seed, "max_log_price", worst_lp, bound_lp + 1e-9, worst_lp <= bound_lp + 1e-9),
        ]

    return _fan_out(one, range(seeds))


def suite_lower_bounds(seeds: int) -> list[Row]:
    def one(seed: int) -> list[Row]:
        rows: list[Row] = []
        eta = 0.125
        # c < 2 family against the capped mechanism
        for c in (1.25, 1.5, 1.75):
            B = 6400
            T = 1200
            bundle = scenarios.c_below_two(T, c, B, eps=0.005, seed=seed)
            params = MechanismParams(B=float(B), c=c, eta=eta, p_min=1.0, p_1=1.0)
            run = mechanisms.run_price_based(
                bundle.scenario, params, ValueDescending(), T
            )
            audit = bundle.audit()
            loss = 1.0 - core.welfare(run.schedule, run.scenario, T) / audit["optimum"]
            bound = min(1.0 / 8.0, (2.0 - c) / 3.0) - 0.01
            rows.append(Row("lower_bounds", seed, f"c_below_two_loss_c{c}", loss, bound, loss >= bound))
        # c = 2 failure
        params = MechanismParams(B=6400.0, c=2.0, eta=eta, p_min=1.0, p_1=1.0)
        bundle = scenarios.eip_c2_failure(params, eps=0.01)
        t_probe = bundle.notes["decay"] + math.ceil(bundle.notes["expected_climb"]) + 5
        run = mechanisms.run_price_based(bundle.scenario, params, bundle.policy, t_probe)
        t_star = scenarios.measure_t_star(run, params)
        ratio = core.welfare(run.schedule, run.scenario, 2 * t_star) / (
            bundle.notes["optimum_per_block"] * t_star
        )
        rows.append(Row("lower_bounds", seed, "c2_failure_ratio", ratio, 0.5, ratio < 0.5))
        # log range
        L = math.exp(2.0)
        bundle = scenarios.log_range(params, H=100.0, L=L)
        run = mechanisms.run_price_based(
            bundle.scenario, params, bundle.policy, bundle.scenario.horizon_hint
        )
        climb = scenarios.measure_climb(run, params, L, bundle.notes["decay"])
        rows.append(
            Row(
                "lower_bounds", seed, "log_range_climb", float(climb),
                bundle.notes["expected_climb"] + 1.0,
                abs(climb - bundle.notes["expected_climb"]) <= 1.0,
            )
        )
        # partially patient constructions (modified mechanism)
        bundle = scenarios.discount_mix(rho_min=0.01, B=1, K=8)
        mp = MechanismParams(
            B=1.0, c=2.0, eta=eta, p_min=1.0, p_1=1.0, discounted_eligibility=True
        )
        T = bundle.notes["horizon"]
        run = mechanisms.run_price_based(bundle.scenario, mp, ValueDescending(), T)
        audit = bundle.audit()
        loss = 1.0 - core.welfare(run.schedule, run.scenario, T) / audit["optimum"]
        rows.append(Row("lower_bounds", seed, "discount_mix_loss", loss, 1 / 20 - 0.01, loss >= 1 / 20 - 0.01))
        bundle = scenarios.patience_global(p=60, B=1)
        T = bundle.notes["horizon"]
        run = mechanisms.run_price_based(bundle.scenario, mp, ValueDescending(), T)
        audit = bundle.audit()
        loss = 1.0 - core.welfare(run.schedule, run.scenario, T) / audit["optimum"]
        rows.append(Row("lower_bounds", seed, "patience_global_loss", loss, 1 / 10 - 0.02, loss >= 1 / 10 - 0.02))
        # three resources
        bundle = scenarios.three_resources(300)
        T = bundle.notes["horizon"]
        run = mechanisms.multi_resource_mechanism(
            bundle.scenario, scenarios.three_resources_params(eta), ValueAscending(), T
        )
        audit = bundle.audit()
        ratio = core.welfare(run.schedule, run.scenario, T) / audit["optimum"]
        rows.append(Row("lower_bounds", seed, "three_resources_ratio", ratio, 5 / 6 + 0.05, ratio <= 5 / 6 + 0.05))
        # interactive price adversary
        rep = scenarios.adaptive_price_adversary(
            MechanismParams(B=1.0, c=2.0, eta=eta, p_min=1.0, p_1=1.0),
            gamma=2, delta=1, H=2.0**64,
        )
        rows.append(Row("lower_bounds", seed, "price_adversary_fraction", rep.fraction, rep.bound, rep.passed))
        return rows

    return _fan_out(one, range(seeds))


def _fan_out(fn, seeds) -> list[Row]:
    threads = int(os.environ.get("FEEMARKET_THREADS", "1") or "1")
    rows: list[Row] = []
    if threads <= 1:
        for s in seeds:
            rows.extend(fn(s))
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for chunk in pool.map(fn, seeds):
                rows.extend(chunk)
    return rows


# ---------------------------------------------------------------------------
# run subcommand
# ---------------------------------------------------------------------------

BUILTIN_SCENARIOS = (
    "eip_c2_failure",
    "log_range",
    "c_below_two",
    "discount_mix",
    "patience_global",
    "three_resources",
)


def _load_json(path: str):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise FeeMarketError(f"{path}: {exc}") from exc


def _builtin_bundle(name: str, seed: int):
    """Builtin construction with canonical parameters; returns
    (bundle, params_list, policy, horizon)."""
    eta = 0.125
    if name == "eip_c2_failure":
        params = MechanismParams(B=6400.0, c=2.0, eta=eta, p_min=1.0, p_1=1.0)
        bundle = scenarios.eip_c2_failure(params, eps=0.01, seed=seed)
        horizon = bundle.notes["decay"] + math.ceil(bundle.notes["expected_climb"]) + 5
        return bundle, [params], bundle.policy, horizon
    if name == "log_range":
        params = MechanismParams(B=6400.0, c=2.0, eta=eta, p_min=1.0, p_1=1.0)
        bundle = scenarios.log_range(params, H=100.0, L=math.exp(2.0), seed=seed)
        return bundle, [params], bundle.policy, bundle.scenario.horizon_hint
    if name == "c_below_two":
        c, B, T = 1.5, 6400, 1200
        params = MechanismParams(B=float(B), c=c, eta=eta, p_min=1.0, p_1=1.0)
        bundle = scenarios.c_below_two(T, c, B, eps=0.005, seed=seed)
        return bundle, [params], ValueDescending(), T
    if name == "discount_mix":
        params = MechanismParams(
            B=1.0, c=2.0, eta=eta, p_min=1.0, p_1=1.0, discounted_eligibility=True
        )
        bundle = scenarios.discount_mix(rho_min=0.01, B=1, K=8, seed=seed)
        return bundle, [params], ValueDescending(), bundle.notes["horizon"]
    if name == "patience_global":
        params = MechanismParams(
            B=1.0, c=2.0, eta=eta, p_min=1.0, p_1=1.0, discounted_eligibility=True
        )
        bundle = scenarios.patience_global(p=60, B=1, seed=seed)
        return bundle, [params], ValueDescending(), bundle.notes["horizon"]
    if name == "three_resources":
        bundle = scenarios.three_resources(300, seed=seed)
        return (
            bundle,
            scenarios.three_resources_params(eta),
            ValueAscending(),
            bundle.notes["horizon"],
        )
    raise FeeMarketError(f"unknown builtin scenario {name!r}")


def cmd_run(args) -> int:
    out = Path(args.out)
    seed = args.seed
    if args.scenario in BUILTIN_SCENARIOS:
        bundle, params_list, policy, horizon = _builtin_bundle(args.scenario, seed)
        if args.horizon:
            horizon = args.horizon
        scn = bundle.scenario
        if len(params_list) == 1:
            result = mechanisms.run_price_based(scn, params_list[0], policy, horizon)
        else:
            result = mechanisms.multi_resource_mechanism(scn, params_list, policy, horizon)
        params = params_list[0]
        summary = _summarize(result, params_list, horizon)
        audit = bundle.audit()
        if audit.get("optimum"):
            sw = core.welfare(result.schedule, result.scenario, horizon)
            summary["ratio"] = sw / audit["optimum"]
            summary["audit"] = audit
        if args.scenario == "eip_c2_failure":
            t_star = scenarios.measure_t_star(result, params)
            sw = core.welfare(result.schedule, result.scenario, 2 * t_star)
            summary["t_star"] = t_star
            summary["ratio"] = sw / (bundle.notes["optimum_per_block"] * t_star)
    else:
        try:
            with open(args.scenario) as fh:
                scn = core.scenario_from_jsonl(fh.read())
        except OSError as exc:
            raise FeeMarketError(f"{args.scenario}: {exc}") from exc
        if args.seed is not None:
            scn.seed = args.seed
        cfg = _load_json(args.mechanism) if args.mechanism else None
        if cfg is None:
            raise FeeMarketError("--mechanism config required for file scenarios")
        params = params_from_config(cfg)
        policy = policy_from_config(_load_json(args.policy)) if args.policy else ValueAscending()
        horizon = args.horizon or scn.horizon_hint or 100
        result = mechanisms.run_price_based(scn, params, policy, horizon)
        summary = _summarize(result, [params], horizon)

    _atomic_write(out / "trace.jsonl", core.trace_to_jsonl(result.trace))
    _atomic_write(out / "schedule.json", core.schedule_to_json(result.schedule) + "\n")
    _atomic_write(
        out / "scenario.jsonl", core.scenario_to_jsonl(result.scenario)
    )
    _atomic_write(out / "summary.json", json.dumps(summary, sort_keys=True, indent=2) + "\n")
    print(json.dumps(summary, sort_keys=True))
    return EXIT_PASS


def _summarize(result, params_list: list[MechanismParams], horizon: int) -> dict:
    scn = result.scenario
    sw = core.welfare(result.schedule, scn, horizon)
    targets = [p.B for p in params_list]
    bounds = []
    for p in params_list:
        v_max = max(
            max((t.unit_value for t in scn.transactions), default=p.p_1), p.p_1
        )
        bounds.append(mechanisms.theorem_slackness(p, v_max))
    bound = max(bounds)
    measured = core.measured_slackness(
        result.schedule, scn, targets[0] if len(targets) == 1 else targets
    )
    return {
        "blocks": horizon,
        "welfare": sw,
        "max_block": max(core.max_block_size(result.schedule, scn)),
        "slackness_measured": measured,
        "slackness_bound": bound,
        "slackness_ok": measured <= bound * (1 + 1e-9),
    }


# ---------------------------------------------------------------------------
# verify subcommand
# ---------------------------------------------------------------------------


def cmd_verify(args) -> int:
    try:
        with open(args.scenario) as fh:
            scn = core.scenario_from_jsonl(fh.read())
        with open(args.schedule) as fh:
            alg = core.schedule_from_json(fh.read())
    except OSError as exc:
        raise FeeMarketError(str(exc)) from exc
    if args.benchmark == "opt_fractional":
        bench = benchmarks.opt_fractional(scn, args.bench_limit, args.horizon)
    else:
        try:
            with open(args.benchmark) as fh:
                bench = core.schedule_from_json(fh.read())
        except OSError as exc:
            raise FeeMarketError(str(exc)) from exc
    trep = benchmarks.check_threshold_dominance(
        alg, bench, scn, args.horizon, args.gamma, args.eta,
        bench_limit=args.bench_limit, bench_slack=args.bench_slack,
    )
    wrep = benchmarks.check_welfare_dominance(
        alg, bench, scn, args.horizon, args.gamma, args.eta
    )
    if args.format == "csv":
        rows = [
            Row("verify", 0, "threshold_violations", float(len(trep.violations)), 0.0, trep.passed),
            Row("verify", 0, "welfare_alg", wrep.alg_welfare, wrep.required, wrep.passed),
        ]
        text = rows_to_csv(rows)
    else:
        report = {"threshold": trep.to_json(), "welfare": wrep.to_json()}
        text = json.dumps(report, sort_keys=True, indent=2) + "\n"
    if args.out:
        _atomic_write(Path(args.out), text)
    print(text, end="")
    return EXIT_PASS if trep.passed and wrep.passed else EXIT_FAIL


# ---------------------------------------------------------------------------
# suite subcommand
# ---------------------------------------------------------------------------


def cmd_suite(args) -> int:
    rows: list[Row] = []
    if args.name in ("theorems", "all"):
        rows.extend(suite_theorems(args.seeds, horizon=args.horizon))
    if args.name in ("lower_bounds", "all"):
        # the constructions are deterministic; one pass covers them
        rows.extend(suite_lower_bounds(1 if args.seeds > 0 else 0))
    if args.format == "json":
        ordered = sorted(rows, key=lambda r: (r.suite, r.seed, r.metric))
        text = json.dumps(
            [dict(zip(CSV_COLUMNS, r.as_list())) for r in ordered], indent=2
        ) + "\n"
    else:
        text = rows_to_csv(rows)
    if args.out:
        _atomic_write(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return EXIT_PASS if all(r.passed for r in rows) else EXIT_FAIL


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="feemarket", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a mechanism on a scenario")
    run_p.add_argument("--scenario", required=True, help="scenario JSONL file or builtin name")
    run_p.add_argument("--mechanism", help="mechanism config JSON file")
    run_p.add_argument("--policy", help="inclusion policy config JSON file")
    run_p.add_argument("--horizon", type=int, default=0)
    run_p.add_argument("--seed", type=int, default=0)
    run_p.add_argument("--out", required=True, help="output directory")
    run_p.set_defaults(fn=cmd_run)

    ver_p = sub.add_parser("verify", help="dominance checks against a benchmark")
    ver_p.add_argument("--scenario", required=True)
    ver_p.add_argument("--schedule", required=True, help="algorithm schedule JSON")
    ver_p.add_argument("--benchmark", required=True, help="schedule JSON or 'opt_fractional'")
    ver_p.add_argument("--horizon", type=int, required=True)
    ver_p.add_argument("--gamma", type=int, required=True)
    ver_p.add_argument("--eta", type=float, required=True)
    ver_p.add_argument("--bench-limit", type=float, required=True)
    ver_p.add_argument("--bench-slack", type=float, default=0.0)
    ver_p.add_argument("--format", choices=["json", "csv"], default="json")
    ver_p.add_argument("--out")
    ver_p.set_defaults(fn=cmd_verify)

    suite_p = sub.add_parser("suite", help="run a check suite across seeds")
    suite_p.add_argument("--name", choices=["theorems", "lower_bounds", "all"], required=True)
    suite_p.add_argument("--seeds", type=int, required=True)
    suite_p.add_argument("--horizon", type=int, default=200)
    suite_p.add_argument("--format", choices=["json", "csv"], default="csv")
    suite_p.add_argument("--out", help="output path (stdout if omitted)")
    suite_p.set_defaults(fn=cmd_suite)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except FeeMarketError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
