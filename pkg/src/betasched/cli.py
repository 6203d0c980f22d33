"""Command-line interface: sweep, arrivals, verify, run-one."""

from __future__ import annotations

import argparse
import random
import sys
from fractions import Fraction
from pathlib import Path

from .analytics import log_loss
from .domain import load_instance, to_fraction
from .engine import format_trace, offline_wsrpt, run
from .errors import SchedulingError
from .experiments import (
    ARRIVAL_COLUMNS,
    CR_COLUMNS,
    SWEEP_COLUMNS,
    ExperimentConfig,
    default_eps_grid,
    render_csv,
    render_json,
    run_arrivals,
    run_cr_sweep,
    run_sweep,
    verify_optimality,
    verify_regimes,
    verify_wsrpt,
)
from .policies import EXACT_REVELATION, PosteriorRevelation, get_policy


def _parse_grid(text: str) -> tuple[Fraction, ...]:
    """Grid syntax: `a,b,c` or `start:stop:step`, all exact decimals/fractions."""
    if ":" in text:
        start_s, stop_s, step_s = text.split(":")
        start, stop, step = to_fraction(start_s), to_fraction(stop_s), to_fraction(step_s)
        if step <= 0:
            raise ValueError("grid step must be positive")
        values = []
        v = start
        while v <= stop:
            values.append(v)
            v += step
        return tuple(values)
    return tuple(to_fraction(part) for part in text.split(",") if part.strip())


def _read_config_file(path: str) -> dict[str, str]:
    """Flat key=value lines; `#` starts a comment."""
    values: dict[str, str] = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"bad config line {raw!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


_CONFIG_KEYS = {
    "alpha", "rho", "w0", "w1", "n", "reps", "seed", "eps-grid", "eps0-grid",
    "eps1-grid", "policy", "interarrival", "jobs",
}


def _build_config(args, arrival: str) -> ExperimentConfig:
    file_values = _read_config_file(args.config) if args.config else {}
    unknown = set(file_values) - _CONFIG_KEYS
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")

    def pick(flag_value, key, convert, default):
        if flag_value is not None:
            return convert(flag_value)
        if key in file_values:
            return convert(file_values[key])
        return default

    eps_text = pick(args.eps_grid, "eps-grid", str, None)
    eps0_text = pick(getattr(args, "eps0_grid", None), "eps0-grid", str, None)
    eps1_text = pick(getattr(args, "eps1_grid", None), "eps1-grid", str, None)
    if eps0_text or eps1_text:
        if not (eps0_text and eps1_text):
            raise ValueError("--eps0-grid and --eps1-grid must be given together")
        g0 = _parse_grid(eps0_text)
        g1 = _parse_grid(eps1_text)
        if len(g0) != len(g1):
            raise ValueError("eps0 and eps1 grids must have the same length")
        eps_pairs = tuple(zip(g0, g1))
    elif eps_text:
        eps_pairs = tuple((v, v) for v in _parse_grid(eps_text))
    else:
        eps_pairs = default_eps_grid()

    policies = args.policy or (
        tuple(file_values["policy"].split(",")) if "policy" in file_values else None
    )

    return ExperimentConfig(
        alpha=pick(args.alpha, "alpha", to_fraction, Fraction(2, 5)),
        rho=pick(args.rho, "rho", to_fraction, Fraction(1, 10)),
        w0=pick(args.w0, "w0", to_fraction, Fraction(20)),
        w1=pick(args.w1, "w1", to_fraction, Fraction(1)),
        n=pick(args.n, "n", int, 50),
        eps_pairs=eps_pairs,
        replications=pick(args.reps, "reps", int, 100_000 if arrival == "batch" else 10_000),
        seed=pick(args.seed, "seed", int, 0),
        arrival=arrival,
        interarrival=pick(
            getattr(args, "interarrival", None), "interarrival", to_fraction, Fraction(9, 10)
        ),
        policies=tuple(policies) if policies else ("nonpreemptive", "preemptive", "beta"),
        jobs=pick(args.jobs, "jobs", int, 1),
    )


def _emit(args, header, columns, rows) -> None:
    text = (render_json if args.format == "json" else render_csv)(header, columns, rows)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _add_common_flags(p, include_interarrival: bool) -> None:
    p.add_argument("--alpha", help="reveal fraction, exact (e.g. 0.4 or 2/5)")
    p.add_argument("--rho", help="urgent rate")
    p.add_argument("--w0", help="urgent weight")
    p.add_argument("--w1", help="non-urgent weight")
    p.add_argument("--n", type=int, help="jobs per instance")
    p.add_argument("--reps", type=int, help="Monte Carlo replications")
    p.add_argument("--seed", type=int, help="base seed")
    p.add_argument("--eps-grid", help="error grid: a,b,c or start:stop:step (eps0=eps1)")
    p.add_argument("--eps0-grid", help="independent eps0 grid (with --eps1-grid)")
    p.add_argument("--eps1-grid", help="independent eps1 grid (with --eps0-grid)")
    p.add_argument("--policy", action="append", help="policy name; repeatable")
    p.add_argument("--jobs", type=int, help="worker processes for replications")
    if include_interarrival:
        p.add_argument("--interarrival", help="mean interarrival time (poisson mode)")
    p.add_argument("--config", help="flat key=value config file; flags override it")
    p.add_argument("--out", help="output path (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")


def cmd_sweep(args) -> int:
    config = _build_config(args, "batch")
    if args.cr:
        rows = run_cr_sweep(config)
        header = config.header("cr")
        _emit(args, header, CR_COLUMNS, rows)
    else:
        rows = run_sweep(config)
        _emit(args, config.header("sweep"), SWEEP_COLUMNS, rows)
    return 0


def cmd_arrivals(args) -> int:
    config = _build_config(args, "poisson")
    rows = run_arrivals(config)
    _emit(args, config.header("arrivals"), ARRIVAL_COLUMNS, rows)
    return 0


def cmd_verify(args) -> int:
    suites = [
        ("optimality", lambda: verify_optimality(
            grid={"n": tuple(range(1, args.n_max + 1))} if args.n_max else None)),
        ("wsrpt", lambda: verify_wsrpt(instances=args.instances, seed=args.seed or 0)),
        ("regimes", lambda: verify_regimes(samples=args.samples, seed=args.seed or 0)),
    ]
    failed = 0
    for name, suite in suites:
        failures = suite()
        if failures:
            failed += 1
            print(f"FAIL {name}: {len(failures)} failing case(s)")
            for f in failures[:5]:
                print(f"  {f}")
        else:
            print(f"PASS {name}")
    return 1 if failed else 0


def cmd_run_one(args) -> int:
    instance = load_instance(Path(args.instance).read_text())
    policy = get_policy(args.policy)
    if args.revelation == "exact":
        revelation = EXACT_REVELATION
        rng = None
    else:
        revelation = PosteriorRevelation()
        rng = random.Random(args.seed or 0)
    outcome = run(instance, policy, revelation, rng=rng)
    sys.stdout.write(format_trace(outcome))
    for jid in sorted(outcome.completion_times):
        c = outcome.completion_times[jid]
        print(f"completion,{jid},{c.numerator}/{c.denominator}" if c.denominator != 1
              else f"completion,{jid},{c.numerator}")
    cost = outcome.total_cost
    cost_s = f"{cost.numerator}/{cost.denominator}" if cost.denominator != 1 else str(cost.numerator)
    print(f"total_cost,{cost_s}")
    print(f"preemptions,{outcome.preemption_count}")
    if instance.mode == "probabilistic":
        ll = log_loss(instance)
        print(f"log_loss,{ll.value:.12g}")
        print(f"log_loss_clamped,{ll.clamped}")
    if args.against_wsrpt:
        opt = offline_wsrpt(instance, keep_trace=False).total_cost
        print(f"wsrpt_cost,{opt.numerator}/{opt.denominator}" if opt.denominator != 1
              else f"wsrpt_cost,{opt.numerator}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="betasched",
        description="Threshold scheduling with imperfect urgency predictions: "
        "sweeps, arrival studies, oracle verification, single runs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sweep = sub.add_parser("sweep", help="batch performance sweep over error rates")
    _add_common_flags(p_sweep, include_interarrival=False)
    p_sweep.add_argument("--cr", action="store_true",
                         help="emit worst-case ratio curves instead of Monte Carlo rows")
    p_sweep.set_defaults(fn=cmd_sweep)

    p_arr = sub.add_parser("arrivals", help="poisson-arrival performance sweep")
    _add_common_flags(p_arr, include_interarrival=True)
    p_arr.set_defaults(fn=cmd_arrivals)

    p_ver = sub.add_parser("verify", help="run the oracle equivalence suites")
    p_ver.add_argument("--n-max", type=int, default=5,
                       help="largest instance size for the optimality oracle")
    p_ver.add_argument("--instances", type=int, default=300,
                       help="random instances for the preemptive-oracle suite")
    p_ver.add_argument("--samples", type=int, default=200,
                       help="random draws for the regime-consistency suite")
    p_ver.add_argument("--seed", type=int, default=0)
    p_ver.set_defaults(fn=cmd_verify)

    p_one = sub.add_parser("run-one", help="simulate one serialized instance")
    p_one.add_argument("instance", help="instance file")
    p_one.add_argument("--policy", default="beta")
    p_one.add_argument("--revelation", choices=("exact", "posterior"), default="exact")
    p_one.add_argument("--seed", type=int, help="rng seed for posterior revelation")
    p_one.add_argument("--against-wsrpt", action="store_true",
                       help="also print the clairvoyant preemptive cost")
    p_one.set_defaults(fn=cmd_run_one)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (SchedulingError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
