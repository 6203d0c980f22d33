"""Problem data: machine physics, the prediction channel, jobs, and instances.

Probabilities, weights, and times are exact `fractions.Fraction` values, so
event times and threshold comparisons never see rounding. Monte Carlo
aggregation elsewhere uses floats; this layer stays exact.

Convention for numeric inputs: `int`, `str` ("2/5", "0.1"), and `Fraction`
are taken at face value. A `float` is converted through its shortest decimal
repr, so `0.1` means one tenth, not the nearest binary double.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple, Optional, Union

from .errors import InvalidInstanceError

RationalLike = Union[int, str, float, Fraction]

ZERO = Fraction(0)
ONE = Fraction(1)
HALF = Fraction(1, 2)


def to_fraction(value: RationalLike) -> Fraction:
    """Coerce a number to an exact Fraction (floats go through str repr)."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(str(value))
    if isinstance(value, str):
        return Fraction(value)
    raise TypeError(f"cannot interpret {value!r} as an exact rational")


def format_fraction(value: Fraction) -> str:
    """Render a Fraction as `num` or `num/den` for the text formats."""
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator}"


@dataclass(frozen=True)
class Parameters:
    """Machine physics: reveal fraction alpha and the two delay weights.

    alpha is the fraction of a job processed before its true type becomes
    known; w0 and w1 are the per-unit-delay costs of urgent and non-urgent
    jobs, with w0 > w1 > 0.
    """

    alpha: Fraction
    w0: Fraction
    w1: Fraction

    def __init__(self, alpha: RationalLike, w0: RationalLike, w1: RationalLike):
        object.__setattr__(self, "alpha", to_fraction(alpha))
        object.__setattr__(self, "w0", to_fraction(w0))
        object.__setattr__(self, "w1", to_fraction(w1))
        if not (ZERO < self.alpha < ONE):
            raise ValueError(f"alpha must lie strictly in (0,1), got {self.alpha}")
        if not (self.w0 > self.w1 > ZERO):
            raise ValueError(f"weights must satisfy w0 > w1 > 0, got w0={self.w0}, w1={self.w1}")

    def beta(self) -> Fraction:
        """Threshold (alpha/(1-alpha)) * (w1/(w0-w1)), computed fresh each call."""
        return (self.alpha / (ONE - self.alpha)) * (self.w1 / (self.w0 - self.w1))

    def satisfies_weight_gap(self) -> bool:
        """True when w1 < w0*(1-alpha), equivalently beta() < 1.

        This is the regime where preemption at reveal points can pay off;
        outside it the threshold rule degenerates to never preempting.
        """
        return self.w1 < self.w0 * (ONE - self.alpha)


def beta(params: Parameters) -> Fraction:
    """Threshold value for the given machine parameters."""
    return params.beta()


@dataclass(frozen=True)
class PredictionModel:
    """Binary prediction channel: prior urgency rate and the two flip rates.

    rho is the marginal probability a job is urgent (type 0). eps0 is the
    false negative rate (urgent job labelled 1), eps1 the false positive rate
    (non-urgent job labelled 0). Both error rates are capped at one half so
    label 0 never signals *less* urgency than label 1.
    """

    rho: Fraction
    eps0: Fraction
    eps1: Fraction

    def __init__(self, rho: RationalLike, eps0: RationalLike, eps1: RationalLike):
        object.__setattr__(self, "rho", to_fraction(rho))
        object.__setattr__(self, "eps0", to_fraction(eps0))
        object.__setattr__(self, "eps1", to_fraction(eps1))
        if not (ZERO < self.rho < ONE):
            raise ValueError(f"rho must lie strictly in (0,1), got {self.rho}")
        for name in ("eps0", "eps1"):
            rate = getattr(self, name)
            if not (ZERO <= rate <= HALF):
                raise ValueError(f"{name} must lie in [0, 1/2], got {rate}")
        p_label0 = (ONE - self.eps0) * self.rho + self.eps1 * (ONE - self.rho)
        object.__setattr__(self, "_label0_rate", p_label0)
        object.__setattr__(
            self,
            "_posteriors",
            (
                (ONE - self.eps0) * self.rho / p_label0,
                self.eps0 * self.rho / (ONE - p_label0),
            ),
        )

    def label_probability(self, label: int) -> Fraction:
        """Marginal probability that a job receives the given label."""
        return self._label0_rate if label == 0 else ONE - self._label0_rate

    def posterior(self, label: int) -> Fraction:
        """P(true type is 0 | predicted label), by Bayes' rule, exact."""
        if label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {label}")
        return self._posteriors[label]


def posterior(model: PredictionModel, label: int) -> Fraction:
    """P(true type 0 | predicted label) for the given channel."""
    return model.posterior(label)


class Job(NamedTuple):
    """One unit-length job.

    Exactly one of `label` (binary prediction) or `p_hat` (estimated urgency
    probability) is set; an instance must not mix the two styles.
    """

    id: int
    true_type: int
    label: Optional[int] = None
    p_hat: Optional[Fraction] = None
    release_time: Fraction = ZERO

    def weight(self, params: Parameters) -> Fraction:
        return params.w0 if self.true_type == 0 else params.w1


def make_job(
    id: int,
    true_type: int,
    label: Optional[int] = None,
    p_hat: Optional[RationalLike] = None,
    release_time: RationalLike = 0,
) -> Job:
    """Build a Job, coercing numeric fields to exact Fractions."""
    return Job(
        id=id,
        true_type=true_type,
        label=label,
        p_hat=None if p_hat is None else to_fraction(p_hat),
        release_time=to_fraction(release_time),
    )


@dataclass(frozen=True)
class Instance:
    """A set of jobs plus the machine parameters and (optionally) the channel.

    In binary mode every job carries a label and `model` must be present so
    posteriors can be computed. In probabilistic mode every job carries a
    `p_hat` estimate and `model` may be omitted.
    """

    jobs: tuple[Job, ...]
    params: Parameters
    model: Optional[PredictionModel] = None

    def __init__(self, jobs, params: Parameters, model: Optional[PredictionModel] = None):
        object.__setattr__(self, "jobs", tuple(jobs))
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "model", model)
        self._validate()

    def _validate(self) -> None:
        if not self.jobs:
            raise InvalidInstanceError("an instance needs at least one job")
        seen_ids = set()
        modes = set()
        for job in self.jobs:
            if job.true_type not in (0, 1):
                raise InvalidInstanceError(f"job {job.id}: true_type must be 0 or 1")
            has_label = job.label is not None
            has_prob = job.p_hat is not None
            if has_label == has_prob:
                raise InvalidInstanceError(
                    f"job {job.id}: exactly one of label / p_hat must be set"
                )
            if has_label and job.label not in (0, 1):
                raise InvalidInstanceError(f"job {job.id}: label must be 0 or 1")
            if has_prob and not (ZERO <= job.p_hat <= ONE):
                raise InvalidInstanceError(f"job {job.id}: p_hat must lie in [0,1]")
            if job.release_time < ZERO:
                raise InvalidInstanceError(f"job {job.id}: negative release time")
            if job.id in seen_ids:
                raise InvalidInstanceError(f"duplicate job id {job.id}")
            seen_ids.add(job.id)
            modes.add("binary" if has_label else "probabilistic")
        if len(modes) > 1:
            raise InvalidInstanceError("instance mixes binary labels and probability estimates")
        if modes == {"binary"} and self.model is None:
            raise InvalidInstanceError("binary-label instances need a prediction model")

    @property
    def n(self) -> int:
        return len(self.jobs)

    @property
    def n0(self) -> int:
        return sum(1 for job in self.jobs if job.true_type == 0)

    @property
    def mode(self) -> str:
        return "binary" if self.jobs[0].label is not None else "probabilistic"

    def priority(self, job: Job) -> Fraction:
        """Urgency probability the scheduler sees for this job."""
        if job.p_hat is not None:
            return job.p_hat
        return self.model.posterior(job.label)


def sort_for_policy(instance: Instance) -> tuple[Job, ...]:
    """Jobs in nonincreasing order of urgency probability; ties by label, then id.

    Binary instances sort on the label posterior, probabilistic instances on
    the per-job estimate. The output is the order in which policies open jobs.
    The label tie-break only matters when a degenerate channel collapses the
    two posteriors (both error rates exactly one half): predicted-urgent jobs
    still come first, which is the order the closed-form expectations assume.
    """
    if instance.mode == "binary":
        return tuple(
            sorted(instance.jobs, key=lambda j: (-instance.priority(j), j.label, j.id))
        )
    return tuple(sorted(instance.jobs, key=lambda j: (-j.p_hat, j.id)))


def _bernoulli(rng: random.Random, p: Fraction) -> bool:
    # randrange against the exact denominator: no float rounding in the draw
    if p == ZERO:
        return False
    if p == ONE:
        return True
    return rng.randrange(p.denominator) < p.numerator


def sample_instance(
    n: int,
    model: PredictionModel,
    params: Parameters,
    seed: int,
) -> Instance:
    """Draw a batch instance: iid urgent with rate rho, labels flipped per channel.

    All jobs are released at time 0. The draw is an exact function of
    (n, model, params, seed); identical seeds give identical instances.
    """
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    rng = random.Random(seed)
    jobs = []
    for i in range(1, n + 1):
        true_type = 0 if _bernoulli(rng, model.rho) else 1
        flip_rate = model.eps0 if true_type == 0 else model.eps1
        flipped = _bernoulli(rng, flip_rate)
        label = (1 - true_type) if flipped else true_type
        jobs.append(Job(id=i, true_type=true_type, label=label))
    return Instance(jobs, params, model)


# ---------------------------------------------------------------------------
# Line-oriented instance files: `# key=value` header then one job per line as
# `id,true_type,prediction,release_time`, all rationals written exactly.
# ---------------------------------------------------------------------------

def dump_instance(instance: Instance) -> str:
    lines = [
        f"# alpha={format_fraction(instance.params.alpha)}",
        f"# w0={format_fraction(instance.params.w0)}",
        f"# w1={format_fraction(instance.params.w1)}",
        f"# mode={instance.mode}",
    ]
    if instance.model is not None:
        lines.append(f"# rho={format_fraction(instance.model.rho)}")
        lines.append(f"# eps0={format_fraction(instance.model.eps0)}")
        lines.append(f"# eps1={format_fraction(instance.model.eps1)}")
    lines.append("# columns=id,true_type,prediction,release_time")
    for job in instance.jobs:
        pred = str(job.label) if job.label is not None else format_fraction(job.p_hat)
        lines.append(
            f"{job.id},{job.true_type},{pred},{format_fraction(job.release_time)}"
        )
    return "\n".join(lines) + "\n"


def load_instance(text: str) -> Instance:
    header: dict[str, str] = {}
    rows: list[str] = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line.lstrip("#").strip()
            if "=" in body:
                key, _, value = body.partition("=")
                header[key.strip()] = value.strip()
            continue
        rows.append(line)

    for key in ("alpha", "w0", "w1", "mode"):
        if key not in header:
            raise InvalidInstanceError(f"instance file is missing header field {key!r}")
    params = Parameters(header["alpha"], header["w0"], header["w1"])
    mode = header["mode"]
    if mode not in ("binary", "probabilistic"):
        raise InvalidInstanceError(f"unknown mode {mode!r}")

    model = None
    if all(k in header for k in ("rho", "eps0", "eps1")):
        model = PredictionModel(header["rho"], header["eps0"], header["eps1"])
    if mode == "binary" and model is None:
        raise InvalidInstanceError("binary instance file needs rho/eps0/eps1 in the header")

    jobs = []
    for row in rows:
        fields = [f.strip() for f in row.split(",")]
        if len(fields) != 4:
            raise InvalidInstanceError(f"bad job row {row!r}")
        job_id, true_type, pred, release = fields
        if mode == "binary":
            job = make_job(int(job_id), int(true_type), label=int(pred), release_time=release)
        else:
            job = make_job(int(job_id), int(true_type), p_hat=pred, release_time=release)
        jobs.append(job)
    return Instance(jobs, params, model)
