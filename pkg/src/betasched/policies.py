"""Decision rules mapping observed scheduler state to an action.

A policy is a pure function of (state, params). The simulation engine owns
all mutation; policies only read the state views passed to them.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Callable, NamedTuple, Optional

from .domain import ONE, Parameters, PredictionModel
from .errors import TerminalStateError, UnsupportedInputError


class Regime(Enum):
    NONPREEMPTIVE = "nonpreemptive"
    PREEMPTIVE = "preemptive"
    HYBRID = "hybrid"


class Action(NamedTuple):
    """What a policy asks the machine to do next."""

    kind: str  # "open" or "complete"
    job_id: Optional[int] = None


OPEN_NEXT = Action("open")


def complete_low(job_id: int) -> Action:
    return Action("complete", job_id)


class UnopenedQueue:
    """Released, unopened jobs in nonincreasing priority order (ties by id).

    Entries are (rank, job_id, label, priority) tuples where `rank` is an
    integer ordinal of the negated priority, so plain tuple comparison gives
    the scheduling order without rational arithmetic. Equal priorities share
    a rank; the id field then breaks ties ascending.
    """

    __slots__ = ("_entries", "_start")

    def __init__(self, jobs_with_priority=()):
        """Build from (priority, job_id, label) triples (tests, direct use).

        Priority ties rank predicted-urgent labels first, matching the
        canonical job sort.
        """
        keys = sorted({(-p, label if label is not None else 0)
                       for p, _, label in jobs_with_priority})
        rank_of = {key: i for i, key in enumerate(keys)}
        self._entries = sorted(
            (rank_of[(-p, label if label is not None else 0)], jid, label, p)
            for p, jid, label in jobs_with_priority
        )
        self._start = 0

    @classmethod
    def _wrap(cls, entries: list, start: int) -> "UnopenedQueue":
        # read-only view over an engine-owned, already-sorted list
        q = object.__new__(cls)
        q._entries = entries
        q._start = start
        return q

    def __len__(self) -> int:
        return len(self._entries) - self._start

    def head_priority(self) -> Fraction:
        return self._entries[self._start][3]

    def head_label(self) -> Optional[int]:
        return self._entries[self._start][2]

    def head_id(self) -> int:
        return self._entries[self._start][1]

    def items(self):
        """Yield (job_id, priority, label) in scheduling order."""
        for _, job_id, label, priority in self._entries[self._start:]:
            yield job_id, priority, label

    # engine-side mutation
    def push_entry(self, entry) -> None:
        bisect.insort(self._entries, entry, lo=self._start)

    def head_entry(self):
        return self._entries[self._start]

    def pop_head(self):
        entry = self._entries[self._start]
        self._start += 1
        return entry


class InterruptedQueue:
    """Partially processed jobs awaiting their final segment, in FIFO order."""

    __slots__ = ("_entries", "_start")

    def __init__(self, entries=()):
        self._entries = list(entries)
        self._start = 0

    @classmethod
    def _wrap(cls, entries: list, start: int) -> "InterruptedQueue":
        q = object.__new__(cls)
        q._entries = entries
        q._start = start
        return q

    def __len__(self) -> int:
        return len(self._entries) - self._start

    def first_id(self) -> int:
        return self._entries[self._start][0]

    def items(self):
        """Yield (job_id, theta) in insertion order."""
        for entry in self._entries[self._start:]:
            yield entry

    def argmax_theta(self):
        """(job_id, theta) with the largest theta; FIFO order breaks ties."""
        best = self._entries[self._start]
        for entry in self._entries[self._start + 1:]:
            if entry[1] > best[1]:
                best = entry
        return best

    # engine-side mutation
    def append(self, job_id: int, theta: Fraction) -> None:
        self._entries.append((job_id, theta))

    def remove(self, job_id: int) -> Fraction:
        if self._entries[self._start][0] == job_id:
            theta = self._entries[self._start][1]
            self._start += 1
            return theta
        for i in range(self._start + 1, len(self._entries)):
            if self._entries[i][0] == job_id:
                theta = self._entries[i][1]
                del self._entries[i]
                return theta
        raise KeyError(job_id)

    def __contains__(self, job_id: int) -> bool:
        return any(entry[0] == job_id for entry in self.items())


class PolicyState:
    """Snapshot a policy sees at a decision point: queues plus the clock."""

    __slots__ = ("unopened", "interrupted", "_clock_ticks", "_clock_den")

    def __init__(self, unopened: UnopenedQueue, interrupted: InterruptedQueue,
                 clock_ticks: int = 0, clock_den: int = 1):
        self.unopened = unopened
        self.interrupted = interrupted
        self._clock_ticks = clock_ticks
        self._clock_den = clock_den

    @property
    def clock(self) -> Fraction:
        return Fraction(self._clock_ticks, self._clock_den)


def _require_action(state: PolicyState) -> None:
    if len(state.unopened) == 0 and len(state.interrupted) == 0:
        raise TerminalStateError(f"no legal action at t={state.clock}")


def nonpreemptive_decide(state: PolicyState, params: Parameters) -> Action:
    """Open jobs in sorted order and never set one aside.

    The engine never consults a non-preempting policy at reveal points, so
    under this rule the interrupted queue stays empty; the completion branch
    only exists to keep the function total on arbitrary states.
    """
    _require_action(state)
    if len(state.unopened) > 0:
        return OPEN_NEXT
    return complete_low(state.interrupted.first_id())


def preemptive_decide(state: PolicyState, params: Parameters) -> Action:
    """Open everything available first; finish interrupted work only after."""
    _require_action(state)
    if len(state.unopened) > 0:
        return OPEN_NEXT
    return complete_low(state.interrupted.first_id())


def beta_threshold_decide(state: PolicyState, params: Parameters) -> Action:
    """Open the next job iff its urgency probability strictly exceeds beta.

    With nothing interrupted the only useful move is to open; with nothing
    unopened the only move is to finish interrupted work (FIFO). A head
    probability exactly equal to beta completes low.
    """
    _require_action(state)
    if len(state.unopened) == 0:
        return complete_low(state.interrupted.first_id())
    if len(state.interrupted) == 0:
        return OPEN_NEXT
    if state.unopened.head_priority() > params.beta():
        return OPEN_NEXT
    return complete_low(state.interrupted.first_id())


def hybrid_decide(state: PolicyState, params: Parameters) -> Action:
    """Label-driven switch: treat predicted-urgent jobs preemptively, the rest not.

    Opens while the head job is labelled 0; once only predicted non-urgent
    jobs remain it drains the interrupted queue and completes the rest in
    order. Requires binary labels.
    """
    _require_action(state)
    if len(state.unopened) == 0:
        return complete_low(state.interrupted.first_id())
    if len(state.interrupted) == 0:
        return OPEN_NEXT
    label = state.unopened.head_label()
    if label is None:
        raise UnsupportedInputError("hybrid policy needs binary labels")
    if label == 0:
        return OPEN_NEXT
    return complete_low(state.interrupted.first_id())


def modified_beta_decide(state: PolicyState, params: Parameters) -> Action:
    """Threshold rule for uncertain reveals: raise the bar by the best theta.

    Let theta be the largest urgency probability among interrupted jobs. The
    next job is opened iff its prior probability exceeds
    beta + (alpha/(1-alpha)) * (w0/(w0-w1)) * (theta/(1-theta));
    otherwise the job attaining theta is completed (FIFO among ties).
    theta = 1 forces that completion outright. With every theta equal to 0
    this reduces to the plain beta threshold rule.
    """
    _require_action(state)
    if len(state.unopened) == 0:
        job_id, _ = state.interrupted.argmax_theta()
        return complete_low(job_id)
    if len(state.interrupted) == 0:
        return OPEN_NEXT
    job_id, theta = state.interrupted.argmax_theta()
    if theta >= ONE:
        return complete_low(job_id)
    alpha, w0, w1 = params.alpha, params.w0, params.w1
    tau = params.beta() + (alpha / (ONE - alpha)) * (w0 / (w0 - w1)) * (theta / (ONE - theta))
    if state.unopened.head_priority() > tau:
        return OPEN_NEXT
    return complete_low(job_id)


def expected_weight(priority: Fraction, params: Parameters) -> Fraction:
    """Mean delay cost of a job with the given urgency probability."""
    return params.w1 + (params.w0 - params.w1) * priority


def classify_regime(model: PredictionModel, params: Parameters) -> Regime:
    """Which behaviour the beta threshold rule exhibits for this channel.

    Hybrid exactly when beta separates the two label posteriors the same way
    the decision rule does (posterior(1) <= beta < posterior(0)); otherwise
    the rule is uniformly nonpreemptive (rho <= beta) or preemptive.
    """
    b = params.beta()
    if model.posterior(1) <= b < model.posterior(0):
        return Regime.HYBRID
    if model.rho <= b:
        return Regime.NONPREEMPTIVE
    return Regime.PREEMPTIVE


# ---------------------------------------------------------------------------
# Reveal models: what is learned about a job once its alpha point is reached.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExactRevelation:
    """The true type is learned outright at the alpha point."""

    def sample(self, true_type: int, rng) -> Fraction:
        return ONE if true_type == 0 else Fraction(0)


@dataclass(frozen=True)
class PosteriorRevelation:
    """At the alpha point only an urgency probability theta is learned.

    Theta is drawn from a Beta distribution conditioned on the true type;
    shape parameters are free knobs. The defaults skew urgent jobs toward
    high theta and non-urgent jobs toward low theta.
    """

    a0: float = 8.0
    b0: float = 2.0
    a1: float = 2.0
    b1: float = 8.0

    def sample(self, true_type: int, rng) -> Fraction:
        if true_type == 0:
            draw = rng.betavariate(self.a0, self.b0)
        else:
            draw = rng.betavariate(self.a1, self.b1)
        # Fraction(float) is the exact binary value of the draw
        return Fraction(draw)


EXACT_REVELATION = ExactRevelation()


@dataclass(frozen=True)
class Policy:
    """A decide function plus the contract flags the engine relies on.

    preempts: the engine consults the policy at reveal points; when False the
        job in progress always continues to completion.
    fifo_stationary: under exact revelation the decision kind depends only on
        (head label, head priority, whether anything is interrupted), and a
        completion always targets the FIFO head. Lets the engine memoize
        decisions; the modified rule reads thetas, so it does not qualify.
    """

    name: str
    decide: Callable[[PolicyState, Parameters], Action]
    preempts: bool = True
    fifo_stationary: bool = True


POLICIES: dict[str, Policy] = {
    "nonpreemptive": Policy("nonpreemptive", nonpreemptive_decide, preempts=False),
    "preemptive": Policy("preemptive", preemptive_decide),
    "beta": Policy("beta", beta_threshold_decide),
    "hybrid": Policy("hybrid", hybrid_decide),
    "modified-beta": Policy("modified-beta", modified_beta_decide, fifo_stationary=False),
}


def get_policy(name: str) -> Policy:
    try:
        return POLICIES[name]
    except KeyError:
        known = ", ".join(sorted(POLICIES))
        raise UnsupportedInputError(f"unknown policy {name!r} (known: {known})") from None
