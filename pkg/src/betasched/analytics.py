"""Closed-form expected performance, competitive ratios, and loss metrics.

Expected costs are exact rationals. Competitive ratios involve square roots,
so they are floats; all algebra before the radical is done in exact rationals
and rounding happens once at the root.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from math import comb
from typing import Optional

from .domain import (
    Instance,
    ONE,
    Parameters,
    PredictionModel,
    ZERO,
    format_fraction,
    to_fraction,
)
from .policies import Regime, classify_regime


def _fmt(x: float) -> str:
    return f"{x:.12g}"


# ---------------------------------------------------------------------------
# Exact expected cost, conditioned on the number of urgent jobs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConditionalExpectation:
    """Expected total weighted completion time given the urgent count n0."""

    opt: Fraction
    nonpreemptive: Fraction
    preemptive: Fraction
    hybrid: Fraction
    n: int
    n0: int
    model: PredictionModel
    params: Parameters


def expected_conditional(
    n: int,
    n0: int,
    model: PredictionModel,
    params: Parameters,
) -> ConditionalExpectation:
    """Exact per-policy expectation given n0 urgent jobs among n.

    The clairvoyant optimum is positional. Each policy pays on top of it for
    mispredicted pairs: a nonpreemptive schedule pays the full weight gap per
    inversion; a preemptive schedule pays alpha-scaled probes on inversions
    and on every non-urgent pair; the hybrid switch pays probe costs inside
    the predicted-urgent prefix and full inversions outside it.
    """
    if not (0 <= n0 <= n):
        raise ValueError(f"n0 must lie in [0, {n}], got {n0}")
    w0, w1, alpha = params.w0, params.w1, params.alpha
    e0, e1 = model.eps0, model.eps1
    n1 = n - n0

    opt = (w0 - w1) * Fraction(n0 * (n0 + 1), 2) + w1 * Fraction(n * (n + 1), 2)
    ex = (e0 + e1) * Fraction(n0 * n1, 2)          # inverted (non-urgent, urgent) pairs
    ey = Fraction(n1 * (n1 - 1), 2)                # (non-urgent, non-urgent) pairs
    ex0 = e1 * (ONE - e0) * Fraction(n0 * n1, 2)   # inversions inside the predicted-urgent prefix
    ey0 = e1 * e1 * Fraction(n1 * n1 - n1, 2)      # non-urgent pairs inside the prefix

    nonpreemptive = opt + (w0 - w1) * ex
    preemptive = opt + alpha * w0 * ex + alpha * w1 * ey
    hybrid = opt + alpha * w0 * ex0 + alpha * w1 * ey0 + (w0 - w1) * (ex - ex0)
    return ConditionalExpectation(opt, nonpreemptive, preemptive, hybrid, n, n0, model, params)


@dataclass(frozen=True)
class ExpectedPerformance:
    """Exact unconditional expectations (binomial mixture over n0)."""

    opt: Fraction
    nonpreemptive: Fraction
    preemptive: Fraction
    hybrid: Fraction
    n: int
    model: PredictionModel
    params: Parameters

    def for_policy(self, name: str) -> Fraction:
        """Expectation for a named policy; `beta` selects by regime."""
        if name == "beta":
            regime = classify_regime(self.model, self.params)
            name = regime.value
        if name == "opt":
            return self.opt
        return getattr(self, name)


def expected_unconditional(
    n: int,
    model: PredictionModel,
    params: Parameters,
) -> ExpectedPerformance:
    """Exact expectation over the urgent-count distribution Binomial(n, rho)."""
    if n < 1:
        raise ValueError("n must be at least 1")
    rho = model.rho
    totals = [ZERO, ZERO, ZERO, ZERO]
    for n0 in range(n + 1):
        weight = comb(n, n0) * rho ** n0 * (ONE - rho) ** (n - n0)
        if weight == ZERO:
            continue
        cond = expected_conditional(n, n0, model, params)
        totals[0] += weight * cond.opt
        totals[1] += weight * cond.nonpreemptive
        totals[2] += weight * cond.preemptive
        totals[3] += weight * cond.hybrid
    return ExpectedPerformance(*totals, n, model, params)


# ---------------------------------------------------------------------------
# Competitive ratios (worst case over the urgent fraction q)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CrValue:
    value: float
    worst_q: Optional[float]


@dataclass(frozen=True)
class HybridCrValue:
    value: float
    worst_q: Optional[float]
    lam: float
    decomposition_bound: float


def _mean_eps(model: PredictionModel) -> Fraction:
    return (model.eps0 + model.eps1) / 2


def cr_nonpreemptive(model: PredictionModel, params: Parameters) -> CrValue:
    """Worst-case ratio of a nonpreemptive schedule: 1 + eps*(sqrt(w0/w1)-1)."""
    eps = _mean_eps(model)
    w0, w1 = params.w0, params.w1
    value = 1.0 + float(eps) * (math.sqrt(w0 / w1) - 1.0)
    r = w1 / (w0 - w1)
    worst_q = math.sqrt(r + r * r) - float(r)
    return CrValue(value, worst_q)


def cr_nonpreemptive_cap(alpha, eps0, eps1) -> float:
    """Ratio cap when the weight gap fails and the rule never preempts.

    With w1 >= w0*(1-alpha) the weight ratio is at most 1/(1-alpha), so the
    nonpreemptive ratio is bounded by 1 + eps*(sqrt(1/(1-alpha)) - 1).
    """
    a = to_fraction(alpha)
    eps = (to_fraction(eps0) + to_fraction(eps1)) / 2
    return 1.0 + float(eps) * (math.sqrt(ONE / (ONE - a)) - 1.0)


def cr_preemptive(model: PredictionModel, params: Parameters) -> CrValue:
    """Worst-case ratio of an always-probe schedule.

    Flat at 1 + alpha while eps <= w1/w0 (the worst mix is then all
    non-urgent); beyond that the interior maximizer takes over.
    """
    eps = _mean_eps(model)
    w0, w1, alpha = params.w0, params.w1, params.alpha
    if eps <= w1 / w0:
        return CrValue(float(ONE + alpha), 0.0)
    factor = (alpha / 2) * (w0 / (w0 - w1))
    radicand = ONE - 4 * eps + 4 * eps * eps * (w0 / w1)
    value = float(ONE + factor * (ONE - 2 * eps)) + float(factor) * math.sqrt(float(radicand))
    r = w1 / (w0 - w1)
    s = (2 * eps * w0 - 2 * w1 + w0) / (2 * eps * w0 - 2 * w1)
    m = r * s
    worst_q = math.sqrt(float(r + m * m)) - float(m)
    return CrValue(value, worst_q)


def hybrid_mix_coefficient(model: PredictionModel, params: Parameters) -> Fraction:
    """The linear coefficient lambda in the hybrid worst-case ratio, exact.

    lambda = eps0*(1+eps1) + (alpha*w0/(w0-w1))*eps1*(1-eps0)
           - (alpha*w1/(w0-w1))*eps1^2.
    """
    w0, w1, alpha = params.w0, params.w1, params.alpha
    e0, e1 = model.eps0, model.eps1
    gap = w0 - w1
    return e0 * (ONE + e1) + (alpha * w0 / gap) * e1 * (ONE - e0) - (alpha * w1 / gap) * e1 * e1


def cr_hybrid(model: PredictionModel, params: Parameters) -> HybridCrValue:
    """Worst-case ratio of the hybrid switch, with its interpretable bound.

    value = 1 + (alpha*eps1^2 - lambda + sqrt((w0/w1)*lambda^2
            + (w0/(w0-w1))*(alpha*eps1^2)^2)) / 2.
    The decomposition bound splits that into gains relative to the
    nonpreemptive ratio and a quadratic probe-cost term.
    """
    w0, w1, alpha = params.w0, params.w1, params.alpha
    e1 = model.eps1
    lam = hybrid_mix_coefficient(model, params)
    a = alpha * e1 * e1
    radicand = (w0 / w1) * lam * lam + (w0 / (w0 - w1)) * a * a
    value = float(ONE + (a - lam) / 2) + math.sqrt(float(radicand)) / 2

    bound = (
        1.0
        + float(lam / 2) * (math.sqrt(w0 / w1) - 1.0)
        + float(a / 2) * (1.0 + math.sqrt(w0 / (w0 - w1)))
    )

    r = w1 / (w0 - w1)
    denom = lam - r * a
    if lam == ZERO and a == ZERO:
        worst_q: Optional[float] = 0.0
    elif denom > ZERO:
        m = r * (lam + a) / denom
        worst_q = math.sqrt(float(r + m * m)) - float(m)
    else:
        worst_q = None  # stationary-point formula degenerates outside the weight-gap regime
    return HybridCrValue(value, worst_q, float(lam), bound)


@dataclass(frozen=True)
class CompetitiveRatioReport:
    """All three worst-case ratios plus the one the threshold rule realizes."""

    nonpreemptive: CrValue
    preemptive: CrValue
    hybrid: HybridCrValue
    regime: Regime
    selected: float
    model: PredictionModel
    params: Parameters

    def to_flat_dict(self) -> dict[str, str]:
        """Flat key-value form: inputs as exact fractions, outputs 12 sig digits."""
        m, p = self.model, self.params
        out = {
            "alpha": format_fraction(p.alpha),
            "w0": format_fraction(p.w0),
            "w1": format_fraction(p.w1),
            "rho": format_fraction(m.rho),
            "eps0": format_fraction(m.eps0),
            "eps1": format_fraction(m.eps1),
            "regime": self.regime.value,
            "cr_nonpreemptive": _fmt(self.nonpreemptive.value),
            "cr_preemptive": _fmt(self.preemptive.value),
            "cr_hybrid": _fmt(self.hybrid.value),
            "cr_selected": _fmt(self.selected),
            "hybrid_lambda": _fmt(self.hybrid.lam),
            "hybrid_decomposition_bound": _fmt(self.hybrid.decomposition_bound),
        }
        for name, cr in (
            ("nonpreemptive", self.nonpreemptive),
            ("preemptive", self.preemptive),
            ("hybrid", self.hybrid),
        ):
            out[f"worst_q_{name}"] = "" if cr.worst_q is None else _fmt(cr.worst_q)
        return out


def competitive_ratio(model: PredictionModel, params: Parameters) -> CompetitiveRatioReport:
    """Regime-selected worst-case guarantee of the beta threshold rule."""
    np_cr = cr_nonpreemptive(model, params)
    p_cr = cr_preemptive(model, params)
    h_cr = cr_hybrid(model, params)
    regime = classify_regime(model, params)
    selected = {
        Regime.NONPREEMPTIVE: np_cr.value,
        Regime.PREEMPTIVE: p_cr.value,
        Regime.HYBRID: h_cr.value,
    }[regime]
    return CompetitiveRatioReport(np_cr, p_cr, h_cr, regime, selected, model, params)


def alpha_point_cr_bound(alpha) -> float:
    """Guarantee for reveal-point-limited preemption with known types.

    max(1+alpha, 2/(1+alpha)); minimized at alpha = sqrt(2)-1 where both
    branches equal sqrt(2).
    """
    a = float(to_fraction(alpha))
    return max(1.0 + a, 2.0 / (1.0 + a))


# ---------------------------------------------------------------------------
# The large-n excess-ratio curves whose maxima the closed forms evaluate
# ---------------------------------------------------------------------------

def limit_excess_ratio(kind: str, q: float, model: PredictionModel, params: Parameters) -> float:
    """Large-n limit of E(policy)/OPT - 1 at urgent fraction q, as a float."""
    w0 = float(params.w0)
    w1 = float(params.w1)
    alpha = float(params.alpha)
    gap = w0 - w1
    eps = float(_mean_eps(model))
    denom = gap * q * q + w1
    if kind == "nonpreemptive":
        num = 2.0 * eps * gap * q * (1.0 - q)
    elif kind == "preemptive":
        num = alpha * (2.0 * eps * w0 * q * (1.0 - q) + w1 * (1.0 - q) ** 2)
    elif kind == "hybrid":
        e0 = float(model.eps0)
        e1 = float(model.eps1)
        num = (alpha * w0 * e1 * (1.0 - e0) + gap * e0 * (1.0 + e1)) * q * (1.0 - q) \
            + alpha * w1 * e1 * e1 * (1.0 - q) ** 2
    else:
        raise ValueError(f"unknown ratio kind {kind!r}")
    return num / denom


def search_worst_q(
    kind: str,
    model: PredictionModel,
    params: Parameters,
    step: float = 1e-3,
    tol: float = 1e-10,
) -> tuple[float, float]:
    """Numerically maximize the limit curve over q in [0,1].

    A step-sized sweep brackets the maximum and golden-section refinement
    narrows it to `tol`; returns (argmax, 1 + max), comparable with the
    closed-form ratio values.
    """
    grid_n = max(2, round(1.0 / step))
    best_i = 0
    best_v = -1.0
    for i in range(grid_n + 1):
        v = limit_excess_ratio(kind, i / grid_n, model, params)
        if v > best_v:
            best_v = v
            best_i = i
    lo = max(0.0, (best_i - 1) / grid_n)
    hi = min(1.0, (best_i + 1) / grid_n)

    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc = limit_excess_ratio(kind, c, model, params)
    fd = limit_excess_ratio(kind, d, model, params)
    while b - a > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = limit_excess_ratio(kind, c, model, params)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = limit_excess_ratio(kind, d, model, params)
    q_star = (a + b) / 2.0
    return q_star, 1.0 + limit_excess_ratio(kind, q_star, model, params)


# ---------------------------------------------------------------------------
# Log loss for probabilistic classifiers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LogLossResult:
    value: float
    clamped: int  # estimates pushed off an exact 0/1 endpoint


def log_loss(instance: Instance, clamp: float = 1e-12) -> LogLossResult:
    """Cross-entropy of the urgency estimates against the true types.

    eta = -(1/n) * sum over jobs of
          (1 - true) * log(p_hat) + true * log(1 - p_hat),
    natural log. Estimates at exactly 0 or 1 are clamped to [clamp, 1-clamp]
    and counted, since the loss is unbounded there.
    """
    if instance.mode != "probabilistic":
        raise ValueError("log loss needs probability estimates, not binary labels")
    total = 0.0
    clamped = 0
    for job in instance.jobs:
        p = float(job.p_hat)
        if p < clamp or p > 1.0 - clamp:
            p = min(max(p, clamp), 1.0 - clamp)
            clamped += 1
        if job.true_type == 0:
            total += math.log(p)
        else:
            total += math.log(1.0 - p)
    return LogLossResult(-total / instance.n, clamped)
