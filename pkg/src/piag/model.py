"""Composite objectives ``Phi(x) = sum_n f_n(x) + h(x)`` and their elementary
evaluations.

A problem is a list of smooth convex components (value, gradient and a
gradient Lipschitz constant each), a regularizer that can be evaluated and
"proxed", and optionally exact ground truth about the solution set. The
concrete constructors at the bottom cover what the synthetic generators
need; anything else can be plugged in as long as it passes the ``validate_*``
sampled checks.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import InputError, ParameterError, ValidationError

__all__ = [
    "SmoothComponent", "Regularizer", "GroundTruth", "ProblemInstance",
    "objective", "full_gradient", "prox_step",
    "least_squares_component", "quadratic_component",
    "zero_regularizer", "l1_regularizer", "box_indicator",
    "validate_component", "validate_regularizer", "validate_ground_truth",
    "validate_batch_values", "validate_problem", "FD_REL_TOL",
]

FD_REL_TOL = 1e-5
_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class SmoothComponent:
    """One smooth convex summand ``f_n`` with an ``L_n``-Lipschitz gradient."""

    dimension: int
    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    lipschitz: float
    name: str = "component"

    def __post_init__(self):
        if int(self.dimension) < 1:
            raise ParameterError("dimension must be a positive integer")
        if not (self.lipschitz > 0 and np.isfinite(self.lipschitz)):
            raise ParameterError(f"lipschitz must be positive and finite, got {self.lipschitz}")


@dataclass(frozen=True)
class Regularizer:
    """Proper closed convex ``h``; ``value`` may return ``inf``.

    ``prox(alpha, y)`` must return ``argmin_x h(x) + ||x - y||^2 / (2 alpha)``.
    """

    value: Callable[[np.ndarray], float]
    prox: Callable[[float, np.ndarray], np.ndarray]
    name: str = "regularizer"


@dataclass(frozen=True)
class GroundTruth:
    """Exact (or numerically certified) facts about the minimizers of Phi.

    Parameters
    ----------
    optimal_value : float
        ``Phi*``.
    project_to_solutions : callable
        Euclidean projection onto the solution set ``X``.
    qg_constant : float
        ``beta`` in ``Phi(x) - Phi* >= beta/2 * d(x, X)^2``.
    distance_sq : callable, optional
        ``d(x, X)^2``. Defaults to ``||x - project_to_solutions(x)||^2``; a
        generator that knows a cheaper or more accurate formula supplies it.
    beta_estimated : bool
        True when ``qg_constant`` is a sampled estimate rather than exact.
    """

    optimal_value: float
    project_to_solutions: Callable[[np.ndarray], np.ndarray]
    qg_constant: float
    distance_sq: Optional[Callable[[np.ndarray], float]] = None
    beta_estimated: bool = False

    def __post_init__(self):
        if not self.qg_constant > 0:
            raise ParameterError("qg_constant must be positive")

    def dist_sq(self, x):
        if self.distance_sq is not None:
            return float(self.distance_sq(x))
        r = x - self.project_to_solutions(x)
        return float(r @ r)


@dataclass(frozen=True)
class ProblemInstance:
    """``Phi = sum(components) + regularizer`` on ``R^d``.

    ``meta`` holds whatever a generator needs to serialize the instance
    (matrices, kind tag); the solver never reads it. ``batch_values``, when
    given, maps ``x`` to the array ``[f_1(x), ..., f_N(x)]`` in one call; it
    is a faster route to the same numbers and must agree with the
    components.
    """

    components: Sequence[SmoothComponent]
    regularizer: Regularizer
    ground_truth: Optional[GroundTruth] = None
    meta: dict = field(default_factory=dict, compare=False, repr=False)
    batch_values: Optional[Callable] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise InputError("a problem needs at least one smooth component")
        d = comps[0].dimension
        for n, c in enumerate(comps):
            if c.dimension != d:
                raise InputError(f"component {n} has dimension {c.dimension}, expected {d}")
        object.__setattr__(self, "components", comps)

    @property
    def dimension(self):
        return self.components[0].dimension

    @property
    def n_components(self):
        return len(self.components)

    @property
    def total_lipschitz(self):
        """``L = sum_n L_n``, accumulated in index order."""
        total = 0.0
        for c in self.components:
            total += c.lipschitz
        return total


def _check_point(problem, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (problem.dimension,):
        raise InputError(f"expected a point of shape ({problem.dimension},), got {x.shape}")
    return x


def objective(problem, x):
    """Return ``Phi(x)``; ``inf`` outside the effective domain of ``h``."""
    x = _check_point(problem, x)
    hx = float(problem.regularizer.value(x))
    if hx == np.inf:
        return np.inf
    if problem.batch_values is not None:
        values = problem.batch_values(x).tolist()
    else:
        values = [float(c.value(x)) for c in problem.components]
    total = 0.0
    for v in values:
        total += v
    return total + hx


def full_gradient(problem, x):
    """Return ``sum_n grad f_n(x)``, summed in ascending component order."""
    x = _check_point(problem, x)
    comps = problem.components
    g = np.array(comps[0].gradient(x), dtype=float)
    for c in comps[1:]:
        g = g + c.gradient(x)
    return g


def prox_step(problem, alpha, y):
    """Return ``argmin_x h(x) + ||x - y||^2 / (2 alpha)``."""
    if not alpha > 0:
        raise ParameterError(f"step size must be positive, got {alpha}")
    y = _check_point(problem, y)
    return np.asarray(problem.regularizer.prox(alpha, y), dtype=float)


# -- concrete components ------------------------------------------------------

def least_squares_component(A, b, lipschitz=None, name="least_squares"):
    """``f(x) = 0.5 * ||A x - b||^2``.

    ``lipschitz`` defaults to the largest eigenvalue of ``A^T A``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).reshape(A.shape[0])
    At = np.ascontiguousarray(A.T)
    if lipschitz is None:
        lipschitz = float(np.linalg.eigvalsh(At @ A)[-1])

    def value(x):
        r = A @ x - b
        return 0.5 * float(r @ r)

    def gradient(x):
        return At @ (A @ x - b)

    return SmoothComponent(A.shape[1], value, gradient, lipschitz, name)


def quadratic_component(Q, q, lipschitz=None, name="quadratic"):
    """``f(x) = 0.5 * x^T Q x + q^T x`` with ``Q`` symmetric PSD."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    q = np.asarray(q, dtype=float).reshape(Q.shape[0])
    if lipschitz is None:
        lipschitz = float(np.linalg.eigvalsh(Q)[-1])

    def value(x):
        return 0.5 * float(x @ (Q @ x)) + float(q @ x)

    def gradient(x):
        return Q @ x + q

    return SmoothComponent(Q.shape[0], value, gradient, lipschitz, name)


# -- concrete regularizers ----------------------------------------------------

def zero_regularizer():
    return Regularizer(lambda x: 0.0, lambda alpha, y: np.array(y, dtype=float), "zero")


def l1_regularizer(lam):
    """``h(x) = lam * ||x||_1``; the prox is soft thresholding at ``alpha*lam``."""
    if lam < 0:
        raise ParameterError("l1 weight must be nonnegative")

    def value(x):
        return lam * float(np.sum(np.abs(x)))

    def prox(alpha, y):
        return np.sign(y) * np.maximum(np.abs(y) - alpha * lam, 0.0)

    return Regularizer(value, prox, "l1")


def box_indicator(lo, hi):
    """Indicator of ``{x : lo <= x <= hi}`` (bounds may be infinite)."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if np.any(lo > hi):
        raise ParameterError("box has lo > hi in some coordinate")

    def value(x):
        return 0.0 if np.all(x >= lo) and np.all(x <= hi) else np.inf

    def prox(alpha, y):
        return np.clip(y, lo, hi)

    return Regularizer(value, prox, "box")


# -- sampled validators -------------------------------------------------------

def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def _fd_gradient(f, x):
    h = _EPS ** (1.0 / 3.0) * max(1.0, float(np.linalg.norm(x)))
    g = np.empty_like(x)
    e = np.zeros_like(x)
    for i in range(x.size):
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
        e[i] = 0.0
    return g


def validate_component(component, seed=None, n_samples=20, scale=1.0, center=None):
    """Sampled checks of convexity, the Lipschitz bound and gradient/value
    consistency (central finite differences, relative tolerance 1e-5).

    Raises :class:`ValidationError` on the first failure.
    """
    rng = _rng(seed)
    d = component.dimension
    c0 = np.zeros(d) if center is None else np.asarray(center, dtype=float)
    L = component.lipschitz
    for _ in range(n_samples):
        x = c0 + scale * rng.standard_normal(d)
        y = c0 + scale * rng.standard_normal(d)
        gx, gy = component.gradient(x), component.gradient(y)
        fx, fy = component.value(x), component.value(y)
        dist = np.linalg.norm(x - y)
        if np.linalg.norm(gx - gy) > L * dist * (1 + 1e-9) + 1e-12:
            raise ValidationError(f"{component.name}: gradient is not {L}-Lipschitz")
        slack = 1e-9 * (abs(fx) + abs(fy) + 1.0)
        if fy < fx + gx @ (y - x) - slack:
            raise ValidationError(f"{component.name}: convexity inequality violated")
        fd = _fd_gradient(component.value, x)
        if np.linalg.norm(fd - gx) > FD_REL_TOL * max(1.0, np.linalg.norm(gx)):
            raise ValidationError(f"{component.name}: gradient disagrees with finite differences")


def validate_regularizer(reg, dimension, seed=None, n_samples=20, scale=1.0):
    """Sampled checks that ``prox`` is the exact, nonexpansive minimizer and
    lands in the effective domain."""
    rng = _rng(seed)
    for _ in range(n_samples):
        alpha = float(np.exp(rng.uniform(-3, 2)))
        y1 = scale * rng.standard_normal(dimension)
        y2 = scale * rng.standard_normal(dimension)
        p1, p2 = reg.prox(alpha, y1), reg.prox(alpha, y2)
        if not np.isfinite(reg.value(p1)):
            raise ValidationError(f"{reg.name}: prox left the effective domain")
        if np.linalg.norm(p1 - p2) > np.linalg.norm(y1 - y2) * (1 + 1e-12) + 1e-14:
            raise ValidationError(f"{reg.name}: prox is not nonexpansive")
        best = reg.value(p1) + (p1 - y1) @ (p1 - y1) / (2 * alpha)
        for z in (p1 + 1e-3 * scale * rng.standard_normal(dimension),
                  p1 + scale * rng.standard_normal(dimension), p2, y1):
            other = reg.value(z) + (z - y1) @ (z - y1) / (2 * alpha)
            if best > other + 1e-10 * (1.0 + abs(best)):
                raise ValidationError(f"{reg.name}: prox output is not the minimizer")


def validate_ground_truth(problem, points=None, seed=None, n_samples=1000, scale=1.0):
    """Sampled checks of quadratic growth, ``Phi(proj x) = Phi*`` and
    idempotence of the projection.

    ``points`` (shape ``(n, d)``) overrides the default Gaussian cloud around
    ``proj(0)``.
    """
    gt = problem.ground_truth
    if gt is None:
        raise ValidationError("problem has no ground truth")
    if points is None:
        rng = _rng(seed)
        base = gt.project_to_solutions(np.zeros(problem.dimension))
        points = base + scale * rng.standard_normal((n_samples, problem.dimension))
    fstar = gt.optimal_value
    tol_scale = max(1.0, abs(fstar))
    for x in points:
        p = gt.project_to_solutions(x)
        fp = objective(problem, p)
        if abs(fp - fstar) > 1e-8 * tol_scale:
            raise ValidationError(f"Phi(proj x) = {fp!r} differs from Phi* = {fstar!r}")
        if np.linalg.norm(gt.project_to_solutions(p) - p) > 1e-8 * max(1.0, np.linalg.norm(p)):
            raise ValidationError("projection onto the solution set is not idempotent")
        fx = objective(problem, x)
        if fx < fstar - 1e-9 * tol_scale:
            raise ValidationError(f"Phi(x) = {fx!r} below Phi* = {fstar!r}")
        gap = fx - fstar
        if gap < 0.5 * gt.qg_constant * gt.dist_sq(x) - 1e-9 * max(tol_scale, abs(fx)):
            raise ValidationError("quadratic growth violated at a sampled point")


def validate_batch_values(problem, rng=None, n_samples=20, scale=1.0, rtol=1e-10):
    """Check ``batch_values`` against the per-component values."""
    if problem.batch_values is None:
        return
    rng = _rng(rng)
    for _ in range(n_samples):
        x = scale * rng.standard_normal(problem.dimension)
        batch = np.asarray(problem.batch_values(x), dtype=float)
        single = np.array([c.value(x) for c in problem.components])
        if batch.shape != single.shape or not np.allclose(batch, single, rtol=rtol, atol=0.0):
            raise ValidationError(f"batch_values disagrees with the components at x = {x}")


def validate_problem(problem, seed=None, points=None, scale=1.0):
    rng = _rng(seed)
    for c in problem.components:
        validate_component(c, rng, scale=scale)
    validate_batch_values(problem, rng, scale=scale)
    validate_regularizer(problem.regularizer, problem.dimension, rng, scale=scale)
    if problem.ground_truth is not None:
        validate_ground_truth(problem, points=points, seed=rng, scale=scale)
