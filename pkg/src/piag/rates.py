"""Step-size bound, linear rates, the Lyapunov function and the recurrence
certificate behind the PIAG convergence guarantee, as executable checks.

Conventions: ``beta`` is the quadratic-growth constant, ``L`` the sum of the
component gradient Lipschitz constants, ``tau`` the delay bound and
``eta = L / beta`` the condition number.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import CapabilityError, InvalidCertificateError, ParameterError
from .model import objective

__all__ = [
    "ADMISSIBILITY_RTOL", "ENVELOPE_RTOL",
    "max_step_size", "convergence_rate", "rate_result4", "prior_rate",
    "rate_comparison_tau47", "TheoreticalBounds", "theoretical_bounds",
    "lyapunov", "delta_k", "lemma2_gap", "lemma2_residual",
    "RateCertificate", "certificate", "certificate_for", "Lemma1Verdict",
    "check_lemma1", "EnvelopeResult", "envelope_check",
]

ADMISSIBILITY_RTOL = 1e-12
ENVELOPE_RTOL = 1e-8


def _positive(name, value):
    if not value > 0 or not math.isfinite(value):
        raise ParameterError(f"{name} must be positive and finite, got {value!r}")


def _delay(tau):
    if int(tau) != tau or tau < 0:
        raise ParameterError(f"tau must be a nonnegative integer, got {tau!r}")
    return int(tau)


def max_step_size(beta, L, tau):
    """Largest step size covered by the linear-rate guarantee,
    ``((1 + beta / (L (tau+1)))^(1/(tau+1)) - 1) / beta``.

    Evaluated through ``expm1``/``log1p`` so the result keeps full relative
    precision when ``beta / L`` is small or ``tau`` large.
    """
    _positive("beta", beta)
    _positive("L", L)
    tau = _delay(tau)
    p = tau + 1
    return math.expm1(math.log1p(beta / (L * p)) / p) / beta


def convergence_rate(alpha, beta):
    """Contraction factor ``a = 1 - alpha beta / (1 + alpha beta) = 1 / (1 + alpha beta)``."""
    _positive("alpha", alpha)
    _positive("beta", beta)
    return 1.0 / (1.0 + alpha * beta)


def rate_result4(eta, tau):
    """Rate at the maximal step size: ``1 - 1 / ((tau+1)(tau+2) eta)``."""
    if not eta >= 1:
        raise ParameterError(f"condition number must be >= 1, got {eta!r}")
    tau = _delay(tau)
    return 1.0 - 1.0 / ((tau + 1) * (tau + 2) * eta)


def prior_rate(eta, tau):
    """Strongly convex rate ``1 - 1 / (49 eta (tau+1))`` it is compared to."""
    if not eta >= 1:
        raise ParameterError(f"condition number must be >= 1, got {eta!r}")
    tau = _delay(tau)
    return 1.0 - 1.0 / (49 * eta * (tau + 1))


def rate_comparison_tau47(eta, tau):
    """Return ``(ours, prior, ours <= prior)`` for ``0 <= tau <= 47``."""
    tau = _delay(tau)
    if tau > 47:
        raise ParameterError("the comparison only applies for tau <= 47")
    ours, prior = rate_result4(eta, tau), prior_rate(eta, tau)
    return ours, prior, ours <= prior


@dataclass(frozen=True)
class TheoreticalBounds:
    alpha_max: float
    rate_a: float
    rate_result4: float
    eta: float


def theoretical_bounds(beta, L, tau, alpha=None):
    """Step-size bound and both rate forms for one problem.

    ``rate_a`` is evaluated at ``alpha`` (default ``alpha_max``); its two
    algebraic forms are cross-checked.
    """
    eta = L / beta
    if eta < 1:
        raise ParameterError(f"beta = {beta!r} exceeds L = {L!r}; eta must be >= 1")
    amax = max_step_size(beta, L, tau)
    alpha = amax if alpha is None else alpha
    a = convergence_rate(alpha, beta)
    other = 1.0 - alpha * beta / (1.0 + alpha * beta)
    if abs(a - other) > 1e-14:
        raise ArithmeticError(f"rate forms disagree: {a!r} vs {other!r}")
    return TheoreticalBounds(amax, a, rate_result4(eta, tau), eta)


# -- Lyapunov function and the one-step inequality ----------------------------

def lyapunov(problem, alpha, x):
    """``Psi(x) = Phi(x) - Phi* + d(x, X)^2 / (2 alpha)``."""
    gt = problem.ground_truth
    if gt is None:
        raise CapabilityError("the Lyapunov function needs ground truth (Phi*, X)")
    _positive("alpha", alpha)
    x = np.asarray(x, dtype=float)
    return (objective(problem, x) - gt.optimal_value) + gt.dist_sq(x) / (2 * alpha)


def _delta(steps, L, tau):
    total = 0.0
    for s in steps:
        total += s
    return L * (tau + 1) / 2.0 * total


def delta_k(trace, k, L, tau):
    """``Delta_k = L (tau+1) / 2 * sum_{j=k-tau}^{k} ||x_{j+1} - x_j||^2``.

    ``trace`` is a :class:`~piag.solver.ConvergenceTrace` or a plain sequence
    of squared step norms (entry ``j`` is ``||x_{j+1} - x_j||^2``). Terms
    with ``j < 0`` are zero.
    """
    steps = getattr(trace, "step_norm_sq", trace)
    tau = _delay(tau)
    if k < 0 or k >= len(steps) or not math.isfinite(steps[k]):
        raise IndexError(f"step {k} -> {k + 1} is not recorded")
    return _delta(steps[max(0, k - tau):k + 1], L, tau)


def lemma2_gap(phi_next, phi_probe, x_probe, x_k, x_next, alpha, delta):
    """Right-hand side minus left-hand side of the one-step inequality

    ``Phi(x_{k+1}) <= Phi(x) + ||x - x_k||^2/(2a) - ||x - x_{k+1}||^2/(2a)
    - ||x_{k+1} - x_k||^2/(2a) + Delta_k``.
    """
    u, v, s = x_probe - x_k, x_probe - x_next, x_next - x_k
    quad = (u @ u - v @ v - s @ s) / (2 * alpha)
    return phi_probe + quad + delta - phi_next


def lemma2_residual(problem, trace, k, x_probe, alpha, tau=None):
    """Evaluate :func:`lemma2_gap` on a recorded trajectory (needs iterates)."""
    xs = trace.iterates
    if xs is None:
        raise CapabilityError("trace was recorded without iterates")
    if k < 0 or k + 1 >= len(xs):
        raise IndexError(f"iterate {k + 1} is not in the trace")
    tau = trace.tau if tau is None else tau
    x_probe = np.asarray(x_probe, dtype=float)
    delta = delta_k(trace, k, problem.total_lipschitz, tau)
    return lemma2_gap(objective(problem, xs[k + 1]), objective(problem, x_probe),
                      x_probe, xs[k], xs[k + 1], alpha, delta)


# -- recurrence certificate ---------------------------------------------------

def _admissibility_lhs(a, c, k0):
    # c/(1-a) * (1-a^(k0+1)) / a^k0 == c * sum_{j=0}^{k0} a^-j, without the
    # cancellation in 1 - a when a is close to 1
    inv = 1.0 / a
    total, term = 0.0, 1.0
    for _ in range(k0 + 1):
        total += term
        term *= inv
    return c * total


def _admissible(lhs, b):
    return bool(lhs <= b * (1 + ADMISSIBILITY_RTOL))


@dataclass(frozen=True)
class RateCertificate:
    """Parameters ``(a, b, c, k0)`` of the recurrence
    ``V_{k+1} <= a V_k - b w_k + c sum_{j=k-k0}^{k} w_j``."""

    a: float
    b: float
    c: float
    k0: int

    def __post_init__(self):
        if not 0 < self.a < 1:
            raise InvalidCertificateError(f"contraction factor must lie in (0, 1), got {self.a!r}")
        if self.b < 0 or self.c < 0:
            raise InvalidCertificateError("b and c must be nonnegative")
        _delay(self.k0)

    @property
    def lhs(self):
        """Left side of the admissibility inequality."""
        return _admissibility_lhs(self.a, self.c, self.k0)

    @property
    def slack(self):
        """``(b - lhs) / b``; nonnegative when admissible."""
        lhs = self.lhs
        if self.b == 0:
            return 0.0 if lhs == 0 else -math.inf
        return (self.b - lhs) / self.b

    @property
    def admissible(self):
        return _admissible(self.lhs, self.b)


def certificate(beta, L, alpha, tau):
    """Certificate ``a = 1/(1+alpha beta)``, ``b = 1/(2 alpha)``,
    ``c = L (tau+1)/2``, ``k0 = tau`` used for the Lyapunov sequence."""
    tau = _delay(tau)
    return RateCertificate(convergence_rate(alpha, beta), 1.0 / (2 * alpha),
                           L * (tau + 1) / 2.0, tau)


def certificate_for(problem, alpha, tau):
    gt = problem.ground_truth
    if gt is None:
        raise CapabilityError("a rate certificate needs the quadratic-growth constant")
    return certificate(gt.qg_constant, problem.total_lipschitz, alpha, tau)


@dataclass(frozen=True)
class Lemma1Verdict:
    recurrence_holds: bool
    admissible: bool
    conclusion_holds: bool
    first_recurrence_violation: Optional[int] = None
    first_conclusion_violation: Optional[int] = None


def check_lemma1(V, w, a, b, c, k0, rtol=1e-10):
    """Check a pair of nonnegative sequences against the recurrence, the
    admissibility condition and the geometric conclusion ``V_k <= a^k V_0``.

    ``w_j`` is taken as zero for ``j < 0``.
    """
    if not 0 < a < 1:
        raise InvalidCertificateError(f"contraction factor must lie in (0, 1), got {a!r}")
    V = np.asarray(V, dtype=float)
    w = np.asarray(w, dtype=float)
    if V.shape != w.shape or V.ndim != 1:
        raise ParameterError("V and w must be 1-D sequences of equal length")
    k0 = _delay(k0)

    first_rec = None
    for k in range(len(V) - 1):
        window = w[max(0, k - k0):k + 1].sum()
        rhs = a * V[k] - b * w[k] + c * window
        scale = a * V[k] + b * w[k] + c * window
        if V[k + 1] > rhs + rtol * scale:
            first_rec = k
            break

    first_con = None
    if V[0] == 0:
        bad = np.flatnonzero(V > 0)
        first_con = int(bad[0]) if bad.size else None
    else:
        log_env = np.arange(len(V)) * math.log(a) + math.log(V[0])
        with np.errstate(divide="ignore"):
            log_v = np.log(V)
        bad = np.flatnonzero(log_v > log_env + math.log1p(rtol))
        first_con = int(bad[0]) if bad.size else None

    return Lemma1Verdict(first_rec is None, _admissible(_admissibility_lhs(a, c, k0), b),
                         first_con is None, first_rec, first_con)


# -- envelope ------------------------------------------------------------------

@dataclass(frozen=True)
class EnvelopeResult:
    """Outcome of an envelope check.

    ``holds`` is ``None`` with ``status == "degenerate-start"`` when the
    reference value at ``k = 0`` is zero but later values are not.
    """

    holds: Optional[bool]
    worst_ratio: float
    first_violation: Optional[int]
    status: str = "ok"


def envelope_check(trace, a, column="psi", factor=1.0, rtol=ENVELOPE_RTOL):
    """Check ``values[k] <= factor * a^k * Psi(x_0) * (1 + rtol)`` for all ``k``.

    ``trace`` is a :class:`~piag.solver.ConvergenceTrace` (``column`` is
    checked against its ``psi[0]``) or a plain sequence treated as the
    ``Psi`` column itself. Comparisons are made on logarithms so that long
    traces do not underflow.
    """
    if hasattr(trace, "psi"):
        psi0 = float(trace.psi[0])
        values = np.asarray(getattr(trace, column), dtype=float)
    else:
        values = np.asarray(trace, dtype=float)
        psi0 = float(values[0])
    if not 0 < a <= 1:
        raise ParameterError(f"envelope rate must lie in (0, 1], got {a!r}")

    if psi0 <= 0:
        if np.all(values <= 1e-12):
            return EnvelopeResult(True, 0.0, None)
        return EnvelopeResult(None, math.inf, None, "degenerate-start")

    log_a = math.log(a)
    log_base = math.log(psi0) + math.log(factor)
    log_slack = math.log1p(rtol)
    worst, first = 0.0, None
    for k, v in enumerate(values):
        if not v > 0:
            if np.isnan(v):
                raise ParameterError(f"value at k={k} is NaN")
            continue
        log_ratio = math.log(v) - (k * log_a + log_base)
        ratio = math.exp(min(log_ratio, 700.0))
        worst = max(worst, ratio)
        if first is None and log_ratio > log_slack:
            first = k
    return EnvelopeResult(first is None, worst, first)
