import random
from fractions import Fraction
from math import comb

import pytest

from betasched.domain import Instance, Job, Parameters, PredictionModel, sample_instance
from betasched.engine import (
    enumerate_offline_optimum,
    expectimax_optimal,
    format_trace,
    offline_wspt,
    offline_wsrpt,
    rule_expected_cost,
    run,
)
from betasched.errors import (
    ContractViolationError,
    ResourceLimitError,
    UnsupportedInputError,
)
from betasched.policies import (
    Action,
    Policy,
    PosteriorRevelation,
    get_policy,
)
from conftest import worked_example_instance

F = Fraction


class TestWorkedExample:
    """The nine-job instance traced by hand: costs 327.4 / 349 / 287."""

    def test_threshold_rule_completions_and_cost(self, base_params, base_model):
        inst = worked_example_instance(base_params, base_model)
        out = run(inst, get_policy("beta"))
        want = ["1", "22/5", "12/5", "17/5", "5", "6", "7", "8", "9"]
        assert [out.completion_times[i] for i in range(1, 10)] == [F(w) for w in want]
        assert out.total_cost == F("327.4")
        assert out.preemption_count == 2  # jobs 2 and 5 set aside at their reveals

    def test_nonpreemptive_cost(self, base_params, base_model):
        inst = worked_example_instance(base_params, base_model)
        out = run(inst, get_policy("nonpreemptive"))
        assert out.total_cost == 349
        assert out.preemption_count == 0

    def test_preemptive_cost(self, base_params, base_model):
        inst = worked_example_instance(base_params, base_model)
        out = run(inst, get_policy("preemptive"))
        assert out.total_cost == 287
        assert out.preemption_count == 5  # every non-urgent job probes once

    def test_clairvoyant_optimum(self, base_params, base_model):
        inst = worked_example_instance(base_params, base_model)
        assert offline_wspt(inst).total_cost == 235


class TestRunBasics:
    def test_single_nonurgent_job(self, base_params, base_model):
        inst = Instance([Job(1, 1, 1)], base_params, base_model)
        for name in ("beta", "nonpreemptive", "preemptive", "hybrid"):
            out = run(inst, get_policy(name))
            assert out.completion_times[1] == 1
            assert out.total_cost == base_params.w1

    def test_cost_recomputable_from_completions(self, base_params, base_model):
        inst = sample_instance(25, base_model, base_params, seed=9)
        out = run(inst, get_policy("beta"))
        recomputed = sum(
            job.weight(base_params) * out.completion_times[job.id] for job in inst.jobs
        )
        assert recomputed == out.total_cost

    def test_completion_after_release_plus_unit(self, base_params, base_model):
        rng = random.Random(3)
        jobs = [
            Job(i, rng.randint(0, 1), rng.randint(0, 1), release_time=F(rng.randrange(16), 4))
            for i in range(1, 11)
        ]
        inst = Instance(jobs, base_params, base_model)
        out = run(inst, get_policy("beta"))
        for job in jobs:
            assert out.completion_times[job.id] >= job.release_time + 1

    def test_busy_intervals_disjoint_and_work_conserving(self, base_params, base_model):
        inst = sample_instance(15, base_model, base_params, seed=21)
        out = run(inst, get_policy("beta"))
        # reconstruct processing segments from the trace
        segments = []
        opened_at = {}
        preempted_at = {}
        for ev in out.trace:
            if ev.kind == "open":
                opened_at[ev.job_id] = ev.time
            elif ev.kind == "preempt":
                alpha = base_params.alpha
                segments.append((opened_at[ev.job_id], opened_at[ev.job_id] + alpha))
                preempted_at[ev.job_id] = ev.time
            elif ev.kind == "complete":
                if ev.job_id in preempted_at:
                    segments.append((ev.time - (1 - base_params.alpha), ev.time))
                else:
                    segments.append((opened_at[ev.job_id], ev.time))
        segments.sort()
        total = sum(b - a for a, b in segments)
        assert total == inst.n  # unit work per job, nothing more
        for (_, b), (a2, _) in zip(segments, segments[1:]):
            assert b <= a2  # one job at a time

    def test_illegal_action_reported_with_context(self, base_params, base_model):
        bad = Policy("bad", lambda s, p: Action("complete", 99), fifo_stationary=False)
        inst = Instance([Job(1, 0, 0)], base_params, base_model)
        with pytest.raises(ContractViolationError) as err:
            run(inst, bad)
        assert "job 99" in str(err.value)

    def test_trace_dump_format(self, base_params, base_model):
        inst = Instance([Job(1, 1, 0), Job(2, 0, 1)], base_params, base_model)
        text = format_trace(run(inst, get_policy("beta")))
        lines = text.strip().splitlines()
        assert lines[0] == "0,open,1,1"
        assert lines[1] == "2/5,alpha_reveal,1,1"
        assert all(len(line.split(",")) == 4 for line in lines)

    def test_trace_retention_flag(self, base_params, base_model):
        inst = Instance([Job(1, 1, 0)], base_params, base_model)
        out = run(inst, get_policy("beta"), keep_trace=False)
        assert out.trace is None
        with pytest.raises(ValueError):
            format_trace(out)


class TestReleaseDates:
    def test_arrival_invisible_until_reveal_point(self, base_model):
        # urgent job lands at 0.5; with alpha = 0.4 the reveal at 0.4 misses it
        params = Parameters(F(2, 5), 20, 1)
        jobs = [Job(1, 1, 1), Job(2, 0, 0, release_time=F(1, 2))]
        out = run(Instance(jobs, params, base_model), get_policy("beta"))
        assert out.completion_times[1] == 1
        assert out.completion_times[2] == 2
        assert out.preemption_count == 0

    def test_arrival_visible_at_reveal_point_preempts(self, base_model):
        # with alpha = 0.6 the reveal at 0.6 sees the 0.5 arrival and switches
        params = Parameters(F(3, 5), 20, 1)
        jobs = [Job(1, 1, 1), Job(2, 0, 0, release_time=F(1, 2))]

        out = run(Instance(jobs, params, base_model), get_policy("beta"))
        assert out.completion_times[2] == F(8, 5)   # 0.6 + 1
        assert out.completion_times[1] == 2         # resumes its final 0.4
        assert out.preemption_count == 1

    def test_idle_machine_wakes_at_release(self, base_params, base_model):
        jobs = [Job(1, 1, 1, release_time=F(3))]
        out = run(Instance(jobs, base_params, base_model), get_policy("beta"))
        assert out.completion_times[1] == 4


class TestOfflineWspt:
    def test_all_low_priority(self, base_params, base_model):
        inst = Instance([Job(i, 1, 1) for i in range(1, 10)], base_params, base_model)
        assert offline_wspt(inst).total_cost == 45

    def test_single_urgent_job(self, base_params, base_model):
        inst = Instance([Job(1, 0, 0)], base_params, base_model)
        assert offline_wspt(inst).total_cost == 20

    def test_rejects_release_dates(self, base_params, base_model):
        inst = Instance([Job(1, 0, 0, release_time=F(1, 2))], base_params, base_model)
        with pytest.raises(UnsupportedInputError):
            offline_wspt(inst)


class TestOfflineWsrpt:
    def test_batch_reduces_to_wspt(self, base_params, base_model):
        for seed in range(25):
            inst = sample_instance(random.Random(seed).randint(1, 12), base_model,
                                   base_params, seed=seed)
            assert offline_wsrpt(inst).total_cost == offline_wspt(inst).total_cost

    def test_midstream_arrival_preempts(self, base_params, base_model):
        jobs = [Job(1, 1, 1), Job(2, 0, 0, release_time=F(1, 2))]
        inst = Instance(jobs, base_params, base_model)
        out = offline_wsrpt(inst)
        assert out.completion_times[2] == F(3, 2)
        assert out.completion_times[1] == 2
        assert out.total_cost == 32
        assert out.preemption_count == 1
        assert enumerate_offline_optimum(inst) == 32

    def test_late_arrival_inside_no_preempt_window(self, base_params, base_model):
        # remaining work 1/20 at the arrival 0.96 beats switching: 1/0.04 > 20
        jobs = [Job(1, 1, 1), Job(2, 0, 0, release_time=F(96, 100))]
        out = offline_wsrpt(Instance(jobs, base_params, base_model))
        assert out.completion_times[1] == 1
        assert out.completion_times[2] == 2
        assert out.total_cost == 41
        assert out.preemption_count == 0

    def test_matches_enumeration_on_random_instances(self, base_params):
        from betasched.experiments import random_release_instance

        rng = random.Random(17)
        for _ in range(150):
            w0, w1 = random.Random(rng.random()).choice([(2, 1), (20, 1), (7, 3)])
            params = Parameters(F(2, 5), w0, w1)
            inst = random_release_instance(rng, params, n_max=4)
            assert offline_wsrpt(inst).total_cost == enumerate_offline_optimum(inst)

    def test_enumeration_size_guard(self, base_params, base_model):
        inst = sample_instance(6, base_model, base_params, seed=1)
        with pytest.raises(ResourceLimitError):
            enumerate_offline_optimum(inst, limit=4)


def positional_optimum(n, n0, w0, w1):
    """Clairvoyant cost computed straight from completion positions."""
    return sum(w0 * j for j in range(1, n0 + 1)) + sum(
        w1 * j for j in range(n0 + 1, n + 1)
    )


class TestExpectimax:
    def test_single_job_closed_form(self, base_params):
        for rho_k in (1, 3, 7):
            m = PredictionModel(F(rho_k, 10), F(1, 10), F(1, 5))
            got = expectimax_optimal(1, m, base_params)
            assert got == F(rho_k, 10) * 20 + (1 - F(rho_k, 10)) * 1

    def test_perfect_information_reaches_positional_optimum(self, base_params):
        m = PredictionModel(F(3, 10), 0, 0)
        n = 5
        want = sum(
            comb(n, n0) * F(3, 10) ** n0 * F(7, 10) ** (n - n0)
            * positional_optimum(n, n0, 20, 1)
            for n0 in range(n + 1)
        )
        assert expectimax_optimal(n, m, base_params) == want

    def test_size_guard(self, base_params, base_model):
        with pytest.raises(ResourceLimitError):
            expectimax_optimal(7, base_model, base_params)

    def test_threshold_rule_attains_optimum_spot_checks(self):
        rng = random.Random(2)
        for _ in range(30):
            params = Parameters(F(rng.randint(1, 9), 10), rng.randint(2, 60), 1)
            model = PredictionModel(
                F(rng.randint(1, 19), 20),
                F(rng.randint(0, 10), 20),
                F(rng.randint(0, 10), 20),
            )
            n = rng.randint(1, 5)
            assert expectimax_optimal(n, model, params) == rule_expected_cost(
                n, model, params, "beta"
            )

    def test_optimal_matches_policy_table_enumeration(self, base_params, base_model):
        """Independent route: brute-force every decision table through the engine.

        States where both actions are legal are (unopened-by-label, backlog)
        counts; enumerate every mapping from those states to an action,
        evaluate each policy by exact expectation over all label and type
        draws using the simulator, and take the minimum. Must equal the
        backward-induction value exactly.
        """
        from itertools import product

        from betasched.policies import OPEN_NEXT, Policy, complete_low
        from conftest import label_prob

        n = 3
        states = [
            (u0, u1, ell)
            for u0 in range(n + 1)
            for u1 in range(n + 1)
            for ell in range(1, n + 1)
            if u0 + u1 >= 1 and u0 + u1 + ell <= n
        ]

        def table_policy(assignment):
            choice = dict(zip(states, assignment))

            def decide(state, params):
                u0 = sum(1 for _, _, lab in state.unopened.items() if lab == 0)
                u1 = len(state.unopened) - u0
                ell = len(state.interrupted)
                if u0 + u1 == 0:
                    return complete_low(state.interrupted.first_id())
                if ell == 0:
                    return OPEN_NEXT
                if choice[(u0, u1, ell)] == "open":
                    return OPEN_NEXT
                return complete_low(state.interrupted.first_id())

            return Policy("table", decide, fifo_stationary=False)

        def engine_expectation(policy):
            total = Fraction(0)
            for types in product((0, 1), repeat=n):
                for labels in product((0, 1), repeat=n):
                    prob = Fraction(1)
                    for tt, lab in zip(types, labels):
                        prob *= (base_model.rho if tt == 0 else 1 - base_model.rho)
                        prob *= label_prob(base_model, tt, lab)
                    if prob == 0:
                        continue
                    inst = Instance(
                        [Job(i + 1, types[i], labels[i]) for i in range(n)],
                        base_params, base_model,
                    )
                    total += prob * run(inst, policy, keep_trace=False).total_cost
            return total

        best = min(
            engine_expectation(table_policy(assignment))
            for assignment in product(("open", "complete"), repeat=len(states))
        )
        assert best == expectimax_optimal(n, base_model, base_params)

    def test_perturbed_threshold_is_suboptimal_somewhere(self, base_params, base_model):
        # sanity check that the equality above has teeth
        diffs = []
        for n in range(1, 6):
            best = expectimax_optimal(n, base_model, base_params)
            shifted = rule_expected_cost(
                n, base_model, base_params, "beta",
                threshold=base_params.beta() + F(1, 2),
            )
            diffs.append(shifted - best)
            assert shifted >= best
        assert any(d > 0 for d in diffs)


class TestTreeMatchesEngine:
    """The tree evaluator and the engine agree realization by realization."""

    def test_rule_costs_match_bruteforce_engine_means(self, base_params, base_model):
        from conftest import bruteforce_unconditional_mean

        for rule in ("nonpreemptive", "preemptive", "hybrid", "beta"):
            tree = rule_expected_cost(4, base_model, base_params, rule)
            brute = bruteforce_unconditional_mean(4, base_model, base_params, rule)
            assert tree == brute, rule


class TestProbabilisticClassifierMode:
    def test_beta_rule_on_direct_estimates(self, base_params):
        from betasched.domain import make_job

        jobs = [
            make_job(1, 1, p_hat="1/2"),
            make_job(2, 1, p_hat="1/82"),
            make_job(3, 0, p_hat="1/3"),
        ]
        inst = Instance(jobs, base_params)  # no channel model needed
        out = run(inst, get_policy("beta"))
        # open 1 (probe), open 3 above threshold (urgent, runs through),
        # then 1/82 <= beta: finish the backlog, then job 2
        assert out.completion_times == {3: F("1.4"), 1: F(2), 2: F(3)}
        assert out.total_cost == 20 * F("1.4") + (2 + 3)
        assert out.preemption_count == 1

    def test_hybrid_rejected_without_labels(self, base_params):
        from betasched.domain import make_job

        inst = Instance([make_job(1, 0, p_hat="0.9")], base_params)
        with pytest.raises(UnsupportedInputError):
            run(inst, get_policy("hybrid"))


class TestDecisionMemoTransparency:
    """Memoized decisions must replay exactly what consulting every time gives."""

    def test_memo_on_off_identical(self, base_model):
        from betasched.policies import (
            beta_threshold_decide,
            nonpreemptive_decide,
            preemptive_decide,
        )

        unmemoized = {
            "beta": Policy("beta", beta_threshold_decide, fifo_stationary=False),
            "preemptive": Policy("preemptive", preemptive_decide, fifo_stationary=False),
            "nonpreemptive": Policy(
                "nonpreemptive", nonpreemptive_decide, preempts=False, fifo_stationary=False
            ),
        }
        rng = random.Random(99)
        for _ in range(60):
            params = Parameters(F(rng.randint(1, 9), 10), rng.randint(2, 40), 1)
            jobs = [
                Job(
                    i,
                    rng.randint(0, 1),
                    rng.randint(0, 1),
                    release_time=F(rng.randrange(8), 4) if rng.random() < 0.5 else F(0),
                )
                for i in range(1, rng.randint(2, 12))
            ]
            inst = Instance(jobs, params, base_model)
            for name, twin in unmemoized.items():
                a = run(inst, get_policy(name))
                b = run(inst, twin)
                assert a.trace == b.trace
                assert a.total_cost == b.total_cost


class TestPosteriorRevelation:
    def test_exact_mode_equivalence_of_modified_rule(self, base_params, base_model):
        for seed in range(200):
            inst = sample_instance(random.Random(seed).randint(1, 14), base_model,
                                   base_params, seed=seed)
            a = run(inst, get_policy("beta"))
            b = run(inst, get_policy("modified-beta"))
            assert a.trace == b.trace
            assert a.total_cost == b.total_cost

    def test_posterior_mode_runs_and_is_deterministic(self, base_params, base_model):
        inst = sample_instance(12, base_model, base_params, seed=40)
        rev = PosteriorRevelation()
        out1 = run(inst, get_policy("modified-beta"), rev, rng=random.Random(7))
        out2 = run(inst, get_policy("modified-beta"), rev, rng=random.Random(7))
        assert out1.trace == out2.trace
        out3 = run(inst, get_policy("modified-beta"), rev, rng=random.Random(8))
        assert out1.total_cost > 0 and out3.total_cost > 0

    def test_posterior_mode_requires_rng(self, base_params, base_model):
        inst = sample_instance(3, base_model, base_params, seed=1)
        with pytest.raises(ValueError):
            run(inst, get_policy("modified-beta"), PosteriorRevelation())

    def test_preempted_job_resumes_with_exact_remainder(self, base_params, base_model):
        inst = worked_example_instance(base_params, base_model)
        out = run(inst, get_policy("preemptive"))
        opened = {ev.job_id: ev.time for ev in out.trace if ev.kind == "open"}
        for ev in out.trace:
            if ev.kind == "preempt":
                c = out.completion_times[ev.job_id]
                # alpha done up front, the last 1-alpha contiguous at the end
                assert ev.time == opened[ev.job_id] + base_params.alpha
                assert (c - (1 - base_params.alpha)) >= ev.time
