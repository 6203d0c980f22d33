"""Exact event-driven simulation of the single machine, plus offline oracles.

Event times inside a run live on an integer tick grid (the common denominator
of alpha and all release times), so the clock advances with integer adds and
every completion time is an exact rational. Costs are assembled from the tick
sums at the end; nothing is rounded anywhere.
"""

from __future__ import annotations

import random
from bisect import insort
from dataclasses import dataclass
from fractions import Fraction
from math import comb, gcd
from typing import NamedTuple, Optional

from .domain import Instance, Parameters, PredictionModel, ZERO, ONE
from .errors import (
    ContractViolationError,
    ResourceLimitError,
    UnsupportedInputError,
)
from .policies import (
    EXACT_REVELATION,
    ExactRevelation,
    InterruptedQueue,
    Policy,
    PolicyState,
    UnopenedQueue,
    expected_weight,
)


class TraceEvent(NamedTuple):
    time: Fraction
    kind: str  # open | alpha_reveal | complete | preempt
    job_id: int
    true_type: int


@dataclass(frozen=True)
class RunOutcome:
    """Result of one simulated schedule."""

    completion_times: dict[int, Fraction]
    total_cost: Fraction
    trace: Optional[tuple[TraceEvent, ...]]
    preemption_count: int


def format_trace(outcome: RunOutcome) -> str:
    """One line per event: `t,kind,job_id,true_type`, times as exact fractions."""
    if outcome.trace is None:
        raise ValueError("run was executed without trace retention")
    lines = []
    for ev in outcome.trace:
        t = ev.time
        t_str = str(t.numerator) if t.denominator == 1 else f"{t.numerator}/{t.denominator}"
        lines.append(f"{t_str},{ev.kind},{ev.job_id},{ev.true_type}")
    return "\n".join(lines) + "\n"


def _lcm(a: int, b: int) -> int:
    return a * b // gcd(a, b)


class _Prepared(NamedTuple):
    """Per-instance layout shared by every run over the same instance."""

    den: int                 # tick denominator: lcm of alpha and release denominators
    alpha_ticks: int
    initial: tuple           # queue entries (rank, job_id, label, priority), sorted
    future: tuple            # (release_ticks, entry) for later arrivals, sorted
    true_of: dict[int, int]


def _prepare(instance: Instance) -> _Prepared:
    params = instance.params
    jobs = instance.jobs
    den = params.alpha.denominator
    for job in jobs:
        rd = job.release_time.denominator
        if rd != 1:
            den = _lcm(den, rd)
    alpha_ticks = params.alpha.numerator * (den // params.alpha.denominator)

    true_of = {job.id: job.true_type for job in jobs}
    # entries carry an integer rank of the (negated) priority so queue order,
    # arrival insertion, and decision-memo keys avoid rational arithmetic;
    # in binary mode label order IS priority order (posterior(0) >= posterior(1),
    # and a collapsed tie still puts predicted-urgent jobs first)
    if instance.mode == "binary":
        post = {0: instance.model.posterior(0), 1: instance.model.posterior(1)}
        tagged = [(job.label, job.id, job.label, post[job.label]) for job in jobs]
    else:
        uniq = sorted({-job.p_hat for job in jobs})
        rank_of = {neg_p: i for i, neg_p in enumerate(uniq)}
        tagged = [(rank_of[-job.p_hat], job.id, None, job.p_hat) for job in jobs]

    initial = []
    future = []
    for job, entry in zip(jobs, tagged):
        r = job.release_time
        if r.numerator == 0:
            initial.append(entry)
        else:
            future.append((r.numerator * (den // r.denominator), entry))
    initial.sort()
    future.sort()
    return _Prepared(den, alpha_ticks, tuple(initial), tuple(future), true_of)


def run(
    instance: Instance,
    policy: Policy,
    revelation=EXACT_REVELATION,
    *,
    rng: Optional[random.Random] = None,
    keep_trace: bool = True,
    _prep: Optional[_Prepared] = None,
    _cost_only: bool = False,
) -> RunOutcome:
    """Simulate one schedule of `instance` under `policy`.

    Decision points are job completions, reveal points (alpha after a job is
    opened), and, when the machine is idle, release times. A job freshly at
    its reveal point joins the interrupted pool; it counts as preempted only
    if the next action does not immediately finish it. Under exact revelation
    a job revealed urgent continues straight to completion, and a policy with
    `preempts=False` always continues regardless. Newly released jobs become
    visible at the next decision point and enter the queue in priority order.
    The engine never idles while released work exists.
    """
    params = instance.params
    exact_mode = isinstance(revelation, ExactRevelation)
    if not exact_mode and rng is None:
        raise ValueError("probabilistic revelation requires an rng")
    if policy.name == "hybrid" and instance.mode != "binary":
        raise UnsupportedInputError("hybrid policy needs binary labels")

    prep = _prep if _prep is not None else _prepare(instance)
    den = prep.den
    alpha_ticks = prep.alpha_ticks
    unit = den
    tail = den - alpha_ticks
    true_of = prep.true_of
    forced_continue = not policy.preempts

    pend = list(prep.initial)   # sorted (neg_priority, job_id, label)
    pi = 0                      # head index into pend
    future = prep.future
    fi = 0
    nf = len(future)
    intr: list = []             # (job_id, theta) in FIFO order
    ii = 0                      # head index into intr

    decide = policy.decide
    memo: Optional[dict] = {} if (policy.fifo_stationary and exact_mode) else None

    def consult(t_ticks: int):
        uq = UnopenedQueue._wrap(pend, pi)
        iq = InterruptedQueue._wrap(intr, ii)
        return decide(PolicyState(uq, iq, t_ticks, den), params)

    t = 0
    n = instance.n
    done = 0
    comp_ticks: dict[int, int] = {}
    s0 = 0  # completion-tick sums by true type
    s1 = 0
    trace: Optional[list[TraceEvent]] = [] if keep_trace else None
    preemptions = 0
    pending: Optional[int] = None  # job at its reveal point this instant
    pn = len(pend)  # mirrors len(pend); pend only grows via insort below
    il = len(intr)  # mirrors len(intr)

    while done < n:
        while fi < nf and future[fi][0] <= t:
            insort(pend, future[fi][1], lo=pi)
            pn += 1
            fi += 1
        have_pend = pi < pn
        have_intr = ii < il
        if not have_pend and not have_intr:
            t = future[fi][0]  # idle until the next arrival
            continue

        if memo is not None:
            if have_pend:
                head = pend[pi]
                key = (head[0], head[2], have_intr)
            else:
                key = (None, None, True)
            kind = memo.get(key)
            if kind is None:
                action = consult(t)
                kind = action.kind
                if kind == "open":
                    if not have_pend:
                        raise ContractViolationError(
                            f"policy {policy.name} opened with an empty queue "
                            f"at t={Fraction(t, den)}"
                        )
                elif kind == "complete":
                    if not have_intr or action.job_id != intr[ii][0]:
                        raise ContractViolationError(
                            f"policy {policy.name} is declared fifo_stationary but completed "
                            f"job {action.job_id} instead of the FIFO head at t={Fraction(t, den)}"
                        )
                else:
                    raise ContractViolationError(
                        f"unknown action kind {kind!r} from {policy.name}"
                    )
                memo[key] = kind
            target = intr[ii][0] if kind == "complete" else None
        else:
            action = consult(t)
            kind = action.kind
            target = action.job_id
            if kind == "open":
                if not have_pend:
                    raise ContractViolationError(
                        f"policy {policy.name} opened with an empty queue at t={Fraction(t, den)}"
                    )
            elif kind != "complete":
                raise ContractViolationError(f"unknown action kind {kind!r} from {policy.name}")

        if pending is not None:
            if kind != "complete" or target != pending:
                preemptions += 1
                if trace is not None:
                    trace.append(TraceEvent(Fraction(t, den), "preempt", pending, true_of[pending]))
            pending = None

        if kind == "open":
            jid = pend[pi][1]
            pi += 1
            tt = true_of[jid]
            if trace is not None:
                trace.append(TraceEvent(Fraction(t, den), "open", jid, tt))
                trace.append(TraceEvent(Fraction(t + alpha_ticks, den), "alpha_reveal", jid, tt))
            if forced_continue or (exact_mode and tt == 0):
                ct = t + unit
                comp_ticks[jid] = ct
                if tt == 0:
                    s0 += ct
                else:
                    s1 += ct
                if trace is not None:
                    trace.append(TraceEvent(Fraction(ct, den), "complete", jid, tt))
                done += 1
                t = ct
            else:
                theta = ZERO if exact_mode else revelation.sample(tt, rng)
                intr.append((jid, theta))
                il += 1
                t += alpha_ticks
                pending = jid
        else:
            if have_intr and intr[ii][0] == target:
                ii += 1
            else:
                for k in range(ii + 1, il):
                    if intr[k][0] == target:
                        del intr[k]
                        il -= 1
                        break
                else:
                    raise ContractViolationError(
                        f"policy {policy.name} completed job {target}, which is not "
                        f"interrupted, at t={Fraction(t, den)} "
                        f"({done}/{n} done, {pn - pi} unopened, {il - ii} interrupted)"
                    )
            tt = true_of[target]
            ct = t + tail
            comp_ticks[target] = ct
            if tt == 0:
                s0 += ct
            else:
                s1 += ct
            if trace is not None:
                trace.append(TraceEvent(Fraction(ct, den), "complete", target, tt))
            done += 1
            t = ct

    total_cost = (params.w0 * s0 + params.w1 * s1) / den
    if _cost_only:
        completion_times = {}
    else:
        completion_times = {jid: Fraction(ticks, den) for jid, ticks in comp_ticks.items()}
    return RunOutcome(
        completion_times=completion_times,
        total_cost=total_cost,
        trace=tuple(trace) if trace is not None else None,
        preemption_count=preemptions,
    )


# ---------------------------------------------------------------------------
# Offline (clairvoyant) schedules
# ---------------------------------------------------------------------------

def offline_wspt(
    instance: Instance,
    keep_trace: bool = True,
    _cost_only: bool = False,
) -> RunOutcome:
    """Optimal batch schedule with known types: urgent first, back to back.

    Only valid when every release time is 0; job j in the sorted order
    completes exactly at time j.
    """
    if any(job.release_time.numerator != 0 for job in instance.jobs):
        raise UnsupportedInputError("offline_wspt needs all release times 0; use offline_wsrpt")
    params = instance.params
    order = sorted(instance.jobs, key=lambda j: (j.true_type, j.id))
    comp: dict[int, Fraction] = {}
    s0 = 0
    s1 = 0
    trace = [] if keep_trace else None
    for pos, job in enumerate(order, start=1):
        if not _cost_only:
            comp[job.id] = Fraction(pos)
        if job.true_type == 0:
            s0 += pos
        else:
            s1 += pos
        if trace is not None:
            trace.append(TraceEvent(Fraction(pos - 1), "open", job.id, job.true_type))
            trace.append(TraceEvent(Fraction(pos), "complete", job.id, job.true_type))
    total = params.w0 * s0 + params.w1 * s1
    return RunOutcome(comp, total, tuple(trace) if trace is not None else None, 0)


def offline_wsrpt(instance: Instance, keep_trace: bool = True) -> RunOutcome:
    """Optimal preemptive schedule with known types and release dates.

    At every release and completion, processes the available job with the
    largest weight-to-remaining-work ratio; ties go to smaller remaining work,
    then smaller id. With unit jobs and two weight classes, preemption is only
    ever triggered by an arrival. All arithmetic is integer on the tick grid.
    """
    params = instance.params
    den = 1
    for job in instance.jobs:
        rd = job.release_time.denominator
        if rd != 1:
            den = _lcm(den, rd)
    wden = _lcm(params.w0.denominator, params.w1.denominator)
    w_int = {  # weights scaled to a common integer grid
        0: params.w0.numerator * (wden // params.w0.denominator),
        1: params.w1.numerator * (wden // params.w1.denominator),
    }

    jobs = instance.jobs
    releases = sorted(
        (job.release_time.numerator * (den // job.release_time.denominator), job.id)
        for job in jobs
    )
    true_of = {j.id: j.true_type for j in jobs}
    remaining: dict[int, int] = {j.id: den for j in jobs}  # den ticks = 1 unit

    t = 0
    ri = 0
    available: list[int] = []
    comp_ticks: dict[int, int] = {}
    cost_scaled = 0  # sum of w_int * completion ticks
    trace: Optional[list[TraceEvent]] = [] if keep_trace else None
    started: set[int] = set()
    current: Optional[int] = None
    preemptions = 0
    n = len(jobs)

    while len(comp_ticks) < n:
        while ri < n and releases[ri][0] <= t:
            available.append(releases[ri][1])
            ri += 1
        if not available:
            t = releases[ri][0]
            continue

        best = available[0]
        bw, bx = w_int[true_of[best]], remaining[best]
        for jid in available[1:]:
            jw, jx = w_int[true_of[jid]], remaining[jid]
            lhs = jw * bx
            rhs = bw * jx
            if lhs > rhs or (lhs == rhs and (jx, jid) < (bx, best)):
                best, bw, bx = jid, jw, jx

        if current is not None and current != best and remaining[current] > 0:
            if remaining[current] < den:
                preemptions += 1
                if trace is not None:
                    trace.append(TraceEvent(Fraction(t, den), "preempt", current, true_of[current]))
        if best not in started:
            started.add(best)
            if trace is not None:
                trace.append(TraceEvent(Fraction(t, den), "open", best, true_of[best]))
        current = best

        finish = t + bx
        next_release = releases[ri][0] if ri < n else None
        if next_release is None or finish <= next_release:
            t = finish
            remaining[best] = 0
            comp_ticks[best] = t
            cost_scaled += bw * t
            if trace is not None:
                trace.append(TraceEvent(Fraction(t, den), "complete", best, true_of[best]))
            available.remove(best)
            current = None
        else:
            remaining[best] = bx - (next_release - t)
            t = next_release

    total = Fraction(cost_scaled, wden * den)
    comp = {jid: Fraction(ticks, den) for jid, ticks in comp_ticks.items()}
    return RunOutcome(comp, total, tuple(trace) if trace is not None else None, preemptions)


def enumerate_offline_optimum(instance: Instance, limit: int = 4) -> Fraction:
    """Minimum cost over preemptive schedules restricted to the event grid.

    Exhaustively searches schedules whose decision points are release times
    and the completions reachable from them. For unit jobs with two weight
    classes this grid contains an optimal schedule, so the result equals the
    true preemptive optimum. Exponential; guarded by `limit`.
    """
    if instance.n > limit:
        raise ResourceLimitError(f"enumeration over {instance.n} jobs exceeds the limit {limit}")
    params = instance.params
    jobs = list(instance.jobs)
    rel = [j.release_time for j in jobs]
    wt = [j.weight(params) for j in jobs]
    n = len(jobs)
    memo: dict = {}

    def go(t: Fraction, rem: tuple) -> Fraction:
        if all(x == ZERO for x in rem):
            return ZERO
        key = (t, rem)
        if key in memo:
            return memo[key]
        avail = [i for i in range(n) if rem[i] > ZERO and rel[i] <= t]
        if not avail:
            t_next = min(rel[i] for i in range(n) if rem[i] > ZERO)
            result = go(t_next, rem)
            memo[key] = result
            return result
        pending = [rel[i] for i in range(n) if rem[i] > ZERO and rel[i] > t]
        next_release = min(pending) if pending else None
        best: Optional[Fraction] = None
        for i in avail:
            finish = t + rem[i]
            if next_release is None or finish <= next_release:
                new_rem = rem[:i] + (ZERO,) + rem[i + 1:]
                value = wt[i] * finish + go(finish, new_rem)
            else:
                new_rem = rem[:i] + (rem[i] - (next_release - t),) + rem[i + 1:]
                value = go(next_release, new_rem)
            if best is None or value < best:
                best = value
        memo[key] = best
        return best

    return go(ZERO, tuple(ONE for _ in range(n)))


# ---------------------------------------------------------------------------
# Exact expected cost on the decision tree (batch, binary labels)
# ---------------------------------------------------------------------------

_TREE_RULES = ("optimal", "beta", "nonpreemptive", "preemptive", "hybrid")


def _tree_expected_cost(
    n: int,
    model: PredictionModel,
    params: Parameters,
    rule: str,
    threshold: Optional[Fraction] = None,
) -> Fraction:
    """Expected total weighted completion time over label and type draws.

    States collapse job identities to (unopened count per label, interrupted
    count): posteriors depend only on labels and jobs are exchangeable within
    a label class. Chance nodes resolve the opened job's type by its label
    posterior; decision nodes follow `rule` ("optimal" minimizes). Values are
    cost-to-go measured from the current decision instant, which is valid
    because the future evolution is translation invariant in time.
    """
    p = (model.posterior(0), model.posterior(1))
    ew = (expected_weight(p[0], params), expected_weight(p[1], params))
    w0, w1, alpha = params.w0, params.w1, params.alpha
    beta_val = params.beta() if threshold is None else threshold
    memo: dict = {}

    def backlog_weight(u0: int, u1: int, ell: int) -> Fraction:
        return u0 * ew[0] + u1 * ew[1] + ell * w1

    def value(u0: int, u1: int, ell: int) -> Fraction:
        if u0 == 0 and u1 == 0 and ell == 0:
            return ZERO
        key = (u0, u1, ell)
        cached = memo.get(key)
        if cached is not None:
            return cached

        def open_value() -> Fraction:
            if u0 > 0:
                prob, a0, a1 = p[0], u0 - 1, u1
            else:
                prob, a0, a1 = p[1], u0, u1 - 1
            v = ZERO
            if prob > ZERO:
                # urgent: runs to completion one unit from now
                v += prob * (w0 + backlog_weight(a0, a1, ell) + value(a0, a1, ell))
            if prob < ONE:
                # non-urgent: reveal point alpha from now, job joins the backlog
                v += (ONE - prob) * (
                    alpha * backlog_weight(a0, a1, ell + 1) + value(a0, a1, ell + 1)
                )
            return v

        def complete_value() -> Fraction:
            return (ONE - alpha) * (w1 + backlog_weight(u0, u1, ell - 1)) + value(u0, u1, ell - 1)

        if u0 == 0 and u1 == 0:
            result = complete_value()
        elif ell == 0:
            result = open_value()
        elif rule == "optimal":
            result = min(open_value(), complete_value())
        elif rule == "beta":
            head = p[0] if u0 > 0 else p[1]
            result = open_value() if head > beta_val else complete_value()
        elif rule == "nonpreemptive":
            result = complete_value()
        elif rule == "preemptive":
            result = open_value()
        elif rule == "hybrid":
            result = open_value() if u0 > 0 else complete_value()
        else:
            raise ValueError(f"unknown tree rule {rule!r}")
        memo[key] = result
        return result

    p_label0 = model.label_probability(0)
    total = ZERO
    for u0 in range(n + 1):
        weight = comb(n, u0) * p_label0 ** u0 * (ONE - p_label0) ** (n - u0)
        if weight > ZERO:
            total += weight * value(u0, n - u0, 0)
    return total


def expectimax_optimal(
    n: int,
    model: PredictionModel,
    params: Parameters,
    limit: int = 6,
) -> Fraction:
    """Exact expected cost of the best non-anticipating policy (batch, labels).

    Full expectimax over the collapsed decision tree, memoized and exact.
    The state space is cubic in n but the probability arithmetic gets heavy,
    hence the bound.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if n > limit:
        raise ResourceLimitError(f"expectimax over {n} jobs exceeds the limit {limit}")
    return _tree_expected_cost(n, model, params, "optimal")


def rule_expected_cost(
    n: int,
    model: PredictionModel,
    params: Parameters,
    rule: str = "beta",
    threshold: Optional[Fraction] = None,
) -> Fraction:
    """Exact expected cost of a fixed decision rule on the same tree.

    `threshold` overrides the beta value used by the "beta" rule; tests use
    it to confirm the verification harness catches a perturbed threshold.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if rule not in _TREE_RULES:
        raise ValueError(f"rule must be one of {_TREE_RULES}, got {rule!r}")
    return _tree_expected_cost(n, model, params, rule, threshold)
