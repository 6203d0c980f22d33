"""Experiment drivers: Monte Carlo sweeps, arrival studies, and oracle checks.

Determinism contract: every replication draws from its own stream seeded by
the string "<seed>:<grid-index>:<replication>" (SHA-512 seeding of the
stdlib Mersenne Twister, stable across platforms and Python versions).
Results are reduced in replication order, so outputs are byte-identical
regardless of how replications are divided among worker processes.
"""

from __future__ import annotations

import math
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from .analytics import (
    ExpectedPerformance,
    competitive_ratio,
    expected_unconditional,
)
from .domain import (
    Instance,
    Job,
    Parameters,
    PredictionModel,
    ZERO,
    dump_instance,
    format_fraction,
    sample_instance,
    to_fraction,
)
from .engine import (
    _prepare,
    enumerate_offline_optimum,
    expectimax_optimal,
    offline_wspt,
    offline_wsrpt,
    rule_expected_cost,
    run,
)
from .policies import Regime, classify_regime, get_policy

HALF = Fraction(1, 2)


def _fmt(x: float) -> str:
    return f"{x:.12g}"


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a sweep needs; flags and config files both build this."""

    alpha: Fraction = Fraction(2, 5)
    rho: Fraction = Fraction(1, 10)
    w0: Fraction = Fraction(20)
    w1: Fraction = Fraction(1)
    n: int = 50
    eps_pairs: tuple[tuple[Fraction, Fraction], ...] = ()
    replications: int = 100_000
    seed: int = 0
    arrival: str = "batch"  # batch | poisson
    interarrival: Fraction = Fraction(9, 10)
    policies: tuple[str, ...] = ("nonpreemptive", "preemptive", "beta")
    jobs: int = 1

    def __post_init__(self):
        if not self.eps_pairs:
            object.__setattr__(self, "eps_pairs", default_eps_grid())
        for e0, e1 in self.eps_pairs:
            if not (ZERO <= e0 <= HALF) or not (ZERO <= e1 <= HALF):
                raise ValueError(f"error rates must lie in [0, 1/2], got ({e0}, {e1})")
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        if self.n < 1:
            raise ValueError("n must be at least 1")
        if self.arrival not in ("batch", "poisson"):
            raise ValueError(f"arrival mode must be batch or poisson, got {self.arrival!r}")
        if self.interarrival <= ZERO:
            raise ValueError("mean interarrival must be positive")
        if self.jobs < 1:
            raise ValueError("jobs must be at least 1")
        for name in self.policies:
            get_policy(name)

    @property
    def params(self) -> Parameters:
        return Parameters(self.alpha, self.w0, self.w1)

    def model_for(self, eps0: Fraction, eps1: Fraction) -> PredictionModel:
        return PredictionModel(self.rho, eps0, eps1)

    def header(self, mode: str) -> dict[str, str]:
        h = {
            "mode": mode,
            "alpha": format_fraction(self.alpha),
            "rho": format_fraction(self.rho),
            "w0": format_fraction(self.w0),
            "w1": format_fraction(self.w1),
            "n": str(self.n),
            "replications": str(self.replications),
            "seed": str(self.seed),
            "policies": ",".join(self.policies),
        }
        if mode == "arrivals":
            h["interarrival"] = format_fraction(self.interarrival)
            h["normalization"] = "per-replication ratio against the clairvoyant preemptive schedule"
        elif mode == "sweep":
            h["normalization"] = "costs divided by the analytic expected clairvoyant optimum"
        return h


def default_eps_grid() -> tuple[tuple[Fraction, Fraction], ...]:
    """eps0 = eps1 on 0, 0.05, ..., 0.5."""
    return tuple((Fraction(k, 20), Fraction(k, 20)) for k in range(11))


def coupled_grid(values) -> tuple[tuple[Fraction, Fraction], ...]:
    return tuple((to_fraction(v), to_fraction(v)) for v in values)


# ---------------------------------------------------------------------------
# Replication sampling
# ---------------------------------------------------------------------------

def _rep_rng(seed: int, grid_index: int, rep: int) -> random.Random:
    return random.Random(f"{seed}:{grid_index}:{rep}")


def _draw_jobs(rng: random.Random, n: int, rho: float, e0: float, e1: float) -> list[Job]:
    jobs = []
    rand = rng.random
    for i in range(1, n + 1):
        tt = 0 if rand() < rho else 1
        flip = rand() < (e0 if tt == 0 else e1)
        jobs.append(Job(i, tt, (1 - tt) if flip else tt))
    return jobs


def _draw_releases(rng: random.Random, n: int, mean: float) -> list[Fraction]:
    """Arrival times of a Poisson stream, first job at 0, exact binary fractions."""
    lam = 1.0 / mean
    times = [ZERO]
    t = 0.0
    for _ in range(n - 1):
        t += rng.expovariate(lam)
        times.append(Fraction(t))
    return times


def _sweep_chunk(config: ExperimentConfig, grid_index: int, eps0: Fraction,
                 eps1: Fraction, start: int, stop: int):
    """Costs for replications [start, stop): one row per rep, opt first."""
    params = config.params
    model = config.model_for(eps0, eps1)
    policies = [get_policy(name) for name in config.policies]
    rho_f, e0f, e1f = float(config.rho), float(eps0), float(eps1)
    n = config.n
    out = [[0.0] * (stop - start) for _ in range(len(policies) + 1)]
    for rep in range(start, stop):
        rng = _rep_rng(config.seed, grid_index, rep)
        jobs = _draw_jobs(rng, n, rho_f, e0f, e1f)
        inst = Instance(jobs, params, model)
        prep = _prepare(inst)
        k = rep - start
        out[0][k] = float(offline_wspt(inst, keep_trace=False, _cost_only=True).total_cost)
        for pi, pol in enumerate(policies, start=1):
            out[pi][k] = float(
                run(inst, pol, keep_trace=False, _prep=prep, _cost_only=True).total_cost
            )
    return out


def _arrivals_chunk(config: ExperimentConfig, grid_index: int, eps0: Fraction,
                    eps1: Fraction, start: int, stop: int):
    """Per-replication cost ratios against the clairvoyant preemptive optimum."""
    params = config.params
    model = config.model_for(eps0, eps1)
    policies = [get_policy(name) for name in config.policies]
    rho_f, e0f, e1f = float(config.rho), float(eps0), float(eps1)
    mean = float(config.interarrival)
    n = config.n
    out = [[0.0] * (stop - start) for _ in range(len(policies))]
    for rep in range(start, stop):
        rng = _rep_rng(config.seed, grid_index, rep)
        base = _draw_jobs(rng, n, rho_f, e0f, e1f)
        releases = _draw_releases(rng, n, mean)
        jobs = [job._replace(release_time=r) for job, r in zip(base, releases)]
        inst = Instance(jobs, params, model)
        prep = _prepare(inst)
        opt_cost = offline_wsrpt(inst, keep_trace=False).total_cost
        k = rep - start
        for pi, pol in enumerate(policies):
            cost = run(inst, pol, keep_trace=False, _prep=prep, _cost_only=True).total_cost
            out[pi][k] = float(cost / opt_cost)
    return out


def _chunks(total: int, jobs: int):
    size = max(1, math.ceil(total / jobs))
    return [(s, min(s + size, total)) for s in range(0, total, size)]


def _run_chunked(worker, config: ExperimentConfig, grid_index, eps0, eps1, columns: int):
    """Execute replication chunks (serially or in processes), reduce in order."""
    spans = _chunks(config.replications, config.jobs)
    results = []
    if config.jobs == 1 or len(spans) == 1:
        for s, e in spans:
            results.append(worker(config, grid_index, eps0, eps1, s, e))
    else:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            futures = [
                pool.submit(worker, config, grid_index, eps0, eps1, s, e) for s, e in spans
            ]
            results = [f.result() for f in futures]
    merged = [[] for _ in range(columns)]
    for block in results:
        for c in range(columns):
            merged[c].extend(block[c])
    return merged


def _mean_stderr(values: list[float]) -> tuple[float, float]:
    m = len(values)
    mean = math.fsum(values) / m
    if m < 2:
        return mean, 0.0
    var = math.fsum((v - mean) ** 2 for v in values) / (m - 1)
    return mean, math.sqrt(var / m)


# ---------------------------------------------------------------------------
# The three data products
# ---------------------------------------------------------------------------

SWEEP_COLUMNS = ("eps0", "eps1", "policy", "analytic_ratio", "mc_mean_ratio",
                 "mc_stderr", "replications")
ARRIVAL_COLUMNS = ("eps0", "eps1", "policy", "mc_mean_ratio", "mc_stderr",
                   "mc_max_ratio", "replications")
CR_COLUMNS = ("eps0", "eps1", "policy", "cr", "worst_q", "regime")


def run_sweep(config: ExperimentConfig) -> list[dict[str, str]]:
    """Batch sweep rows: analytic and Monte Carlo cost ratios per policy.

    Ratios are normalized by the analytic expected clairvoyant optimum. The
    `opt` row checks the simulated optimum against that same baseline.
    """
    if config.arrival != "batch":
        raise ValueError("run_sweep is the batch driver; use run_arrivals for poisson mode")
    rows = []
    for gi, (e0, e1) in enumerate(config.eps_pairs):
        model = config.model_for(e0, e1)
        perf = expected_unconditional(config.n, model, config.params)
        opt_mean = float(perf.opt)
        costs = _run_chunked(_sweep_chunk, config, gi, e0, e1, len(config.policies) + 1)
        names = ("opt",) + config.policies
        for ci, name in enumerate(names):
            mean, stderr = _mean_stderr(costs[ci])
            analytic = float(_analytic_for(perf, name)) / opt_mean
            rows.append({
                "eps0": _fmt(float(e0)),
                "eps1": _fmt(float(e1)),
                "policy": name,
                "analytic_ratio": _fmt(analytic),
                "mc_mean_ratio": _fmt(mean / opt_mean),
                "mc_stderr": _fmt(stderr / opt_mean),
                "replications": str(config.replications),
            })
    return rows


def _analytic_for(perf: ExpectedPerformance, name: str) -> Fraction:
    if name == "modified-beta":
        name = "beta"  # identical under exact revelation
    return perf.for_policy(name)


def run_arrivals(config: ExperimentConfig) -> list[dict[str, str]]:
    """Arrival-mode rows: per-replication ratio against the clairvoyant schedule."""
    if config.arrival != "poisson":
        raise ValueError("run_arrivals needs arrival='poisson'")
    rows = []
    for gi, (e0, e1) in enumerate(config.eps_pairs):
        ratios = _run_chunked(_arrivals_chunk, config, gi, e0, e1, len(config.policies))
        for ci, name in enumerate(config.policies):
            mean, stderr = _mean_stderr(ratios[ci])
            rows.append({
                "eps0": _fmt(float(e0)),
                "eps1": _fmt(float(e1)),
                "policy": name,
                "mc_mean_ratio": _fmt(mean),
                "mc_stderr": _fmt(stderr),
                "mc_max_ratio": _fmt(max(ratios[ci])),
                "replications": str(config.replications),
            })
    return rows


def run_cr_sweep(config: ExperimentConfig) -> list[dict[str, str]]:
    """Worst-case ratio curves per error point, plus the regime-selected value."""
    rows = []
    for e0, e1 in config.eps_pairs:
        model = config.model_for(e0, e1)
        report = competitive_ratio(model, config.params)
        for name, cr in (
            ("nonpreemptive", report.nonpreemptive),
            ("preemptive", report.preemptive),
            ("hybrid", report.hybrid),
        ):
            rows.append({
                "eps0": _fmt(float(e0)),
                "eps1": _fmt(float(e1)),
                "policy": name,
                "cr": _fmt(cr.value),
                "worst_q": "" if cr.worst_q is None else _fmt(cr.worst_q),
                "regime": "",
            })
        rows.append({
            "eps0": _fmt(float(e0)),
            "eps1": _fmt(float(e1)),
            "policy": "selected",
            "cr": _fmt(report.selected),
            "worst_q": "",
            "regime": report.regime.value,
        })
    return rows


# ---------------------------------------------------------------------------
# Output files
# ---------------------------------------------------------------------------

def render_csv(header: dict[str, str], columns, rows: list[dict[str, str]]) -> str:
    lines = [f"# {k}={v}" for k, v in header.items()]
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(row.get(c, "") for c in columns))
    return "\n".join(lines) + "\n"


def render_json(header: dict[str, str], columns, rows: list[dict[str, str]]) -> str:
    import json

    return json.dumps({"config": header, "rows": rows}, indent=2, sort_keys=False) + "\n"


# ---------------------------------------------------------------------------
# Oracle verification suites
# ---------------------------------------------------------------------------

DEFAULT_OPTIMALITY_GRID = {
    "n": (1, 2, 3, 4, 5),
    "alpha": (Fraction(1, 4), Fraction(2, 5), Fraction(7, 10)),
    "weight_ratio": (3, 20, 100),
    "rho": (Fraction(1, 10), Fraction(1, 2)),
    "eps": (ZERO, Fraction(1, 10), Fraction(3, 10), Fraction(1, 2)),
}


def verify_optimality(grid=None, threshold_shift: Optional[Fraction] = None) -> list[str]:
    """Exhaustive-search oracle vs the threshold rule, exact equality.

    Returns one description per failing grid point (empty = all equal).
    `threshold_shift` perturbs the rule's threshold, for harness self-tests.
    A grid with n past the expectimax size bound raises ResourceLimitError
    rather than silently grinding.
    """
    g = dict(DEFAULT_OPTIMALITY_GRID)
    if grid:
        g.update(grid)
    failures = []
    for alpha in g["alpha"]:
        for ratio in g["weight_ratio"]:
            params = Parameters(alpha, ratio, 1)
            for rho in g["rho"]:
                for e0 in g["eps"]:
                    for e1 in g["eps"]:
                        model = PredictionModel(rho, e0, e1)
                        threshold = None
                        if threshold_shift is not None:
                            threshold = params.beta() + threshold_shift
                        for n in g["n"]:
                            best = expectimax_optimal(n, model, params)
                            rule = rule_expected_cost(n, model, params, "beta", threshold)
                            if best != rule:
                                failures.append(
                                    f"n={n} alpha={alpha} w0/w1={ratio} rho={rho} "
                                    f"eps0={e0} eps1={e1}: optimal {best} != rule {rule}"
                                )
    return failures


def random_release_instance(rng: random.Random, params: Parameters,
                            n_max: int = 4) -> Instance:
    """Small instance with rational release times on the 1/8 grid in [0, 4)."""
    n = rng.randint(1, n_max)
    jobs = []
    for i in range(1, n + 1):
        tt = rng.randint(0, 1)
        jobs.append(Job(i, tt, tt, release_time=Fraction(rng.randrange(32), 8)))
    model = PredictionModel(HALF, 0, 0)
    return Instance(jobs, params, model)


def verify_wsrpt(instances: int = 1000, seed: int = 0, n_max: int = 4) -> list[str]:
    """Clairvoyant preemptive schedule vs exhaustive grid search, exact."""
    rng = random.Random(f"wsrpt:{seed}")
    weight_choices = [(2, 1), (3, 2), (20, 1), (100, 7)]
    failures = []
    for _ in range(instances):
        w0, w1 = rng.choice(weight_choices)
        params = Parameters(Fraction(2, 5), w0, w1)
        inst = random_release_instance(rng, params, n_max)
        got = offline_wsrpt(inst, keep_trace=False).total_cost
        want = enumerate_offline_optimum(inst, limit=n_max)
        if got != want:
            failures.append(
                f"wsrpt {got} != enumerated optimum {want} on:\n{dump_instance(inst)}"
            )
    return failures


_REGIME_POLICY = {
    Regime.NONPREEMPTIVE: "nonpreemptive",
    Regime.PREEMPTIVE: "preemptive",
    Regime.HYBRID: "hybrid",
}


def verify_regimes(samples: int = 300, seed: int = 0, n_max: int = 12) -> list[str]:
    """The threshold rule must trace-match the policy its regime names."""
    rng = random.Random(f"regimes:{seed}")
    failures = []
    for _ in range(samples):
        alpha = Fraction(rng.randint(1, 9), 10)
        w0 = rng.randint(2, 40)
        params = Parameters(alpha, w0, 1)
        model = PredictionModel(
            Fraction(rng.randint(1, 9), 10),
            Fraction(rng.randint(0, 8), 16),
            Fraction(rng.randint(0, 8), 16),
        )
        n = rng.randint(1, n_max)
        inst = sample_instance(n, model, params, seed=rng.randrange(2 ** 30))
        regime = classify_regime(model, params)
        mirror = get_policy(_REGIME_POLICY[regime])
        got = run(inst, get_policy("beta"))
        want = run(inst, mirror)
        if got.trace != want.trace:
            failures.append(
                f"regime {regime.value}: threshold-rule trace differs from "
                f"{mirror.name} on:\n{dump_instance(inst)}"
            )
    return failures
