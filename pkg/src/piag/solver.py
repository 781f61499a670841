"""Proximal incremental aggregated gradient iteration.

    x_{k+1} = prox_{alpha h}(x_k - alpha * g_k),   g_k = sum_n grad f_n(x_{k - tau_k^n})

Two engines compute ``g_k``:

cache
    One stored gradient per component; the schedule's refresh set is
    re-evaluated at ``x_k`` before each step and the aggregate is re-summed
    from the cache in index order. This is the default.
history
    A ring buffer of the last ``tau + 1`` iterates; every component gradient
    is re-evaluated at its delayed iterate. Slow, but a literal reading of
    ``g_k`` and therefore the reference for the cache engine.

Forward-backward splitting (``fbs_iterate``) is kept as a separate code path
so that the ``tau = 0`` reduction can be tested bitwise.
"""

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import DivergenceError, ParameterError, ScheduleViolationError
from .model import full_gradient, objective, prox_step
from .rates import lemma2_gap

__all__ = [
    "SolverState", "ConvergenceTrace", "initial_state", "aggregated_gradient",
    "piag_iterate", "fbs_iterate", "run",
]


@dataclass(frozen=True)
class SolverState:
    """Immutable snapshot of the iteration after ``k`` steps.

    ``history`` holds ``x_{k-m}, ..., x_k`` (oldest first, ``m = min(k, tau)``);
    ``cache``/``cache_index`` hold each component's stored gradient and the
    iteration at which it was evaluated. ``delays`` are the delays realized
    by the step that produced ``x``.
    """

    k: int
    x: np.ndarray
    mode: str = "cache"
    history: tuple = ()
    cache: Optional[tuple] = None
    cache_index: Optional[tuple] = None
    delays: Optional[np.ndarray] = None


def initial_state(x0, mode="cache"):
    if mode not in ("cache", "history"):
        raise ParameterError(f"mode must be 'cache' or 'history', got {mode!r}")
    x0 = np.array(x0, dtype=float)
    if not np.all(np.isfinite(x0)):
        raise ParameterError("starting point must be finite")
    return SolverState(0, x0, mode, (x0,))


def _sum_in_order(grads):
    g = np.array(grads[0], dtype=float)
    for v in grads[1:]:
        g = g + v
    return g


def aggregated_gradient(state, problem, delays):
    """``sum_n grad f_n(x_{k - delays[n]})`` from the history buffer."""
    k, hist = state.k, state.history
    delays = np.asarray(delays)
    if delays.shape != (problem.n_components,):
        raise ScheduleViolationError(f"expected {problem.n_components} delays, got shape {delays.shape}")
    if np.any(delays < 0) or np.any(delays > k) or np.any(delays >= len(hist)):
        raise ScheduleViolationError(
            f"delays {delays.tolist()} at k={k} reach beyond the {len(hist)} stored iterates")
    last = len(hist) - 1
    return _sum_in_order([c.gradient(hist[last - int(t)])
                          for c, t in zip(problem.components, delays)])


def _refresh_cache(state, problem, schedule):
    k, x = state.k, state.x
    refresh = schedule.refresh_set_at(k)
    if state.cache is None:
        if len(refresh) != problem.n_components:
            raise ScheduleViolationError("the first iteration must refresh every component")
        cache, index = [None] * problem.n_components, [0] * problem.n_components
    else:
        cache, index = list(state.cache), list(state.cache_index)
    for n in sorted(refresh):
        cache[n] = problem.components[n].gradient(x)
        index[n] = k
    return tuple(cache), tuple(index)


def _check_finite(x_new, state):
    if not np.isfinite(x_new).all():
        raise DivergenceError(f"non-finite iterate at k={state.k + 1}", state=state)


def piag_iterate(state, problem, schedule, alpha):
    """One PIAG step; returns the successor state."""
    with np.errstate(over="ignore", invalid="ignore"):
        return _piag_step(state, problem, schedule, alpha)


def _piag_step(state, problem, schedule, alpha):
    if not alpha > 0:
        raise ParameterError(f"step size must be positive, got {alpha}")
    k, tau = state.k, schedule.tau
    if state.mode == "cache":
        cache, index = _refresh_cache(state, problem, schedule)
        delays = k - np.asarray(index)
        if (delays > tau).any():
            raise ScheduleViolationError(f"stale gradient of age {delays.max()} > tau={tau} at k={k}")
        g = _sum_in_order(cache)
    else:
        cache = index = None
        delays = np.asarray(schedule.delays_at(k))
        if (delays > tau).any():
            raise ScheduleViolationError(f"delay {delays.max()} > tau={tau} at k={k}")
        g = aggregated_gradient(state, problem, delays)
    x_new = prox_step(problem, alpha, state.x - alpha * g)
    _check_finite(x_new, state)
    history = (state.history + (x_new,))[-(tau + 1):]
    return SolverState(k + 1, x_new, state.mode, history, cache, index, delays)


def fbs_iterate(state, problem, alpha):
    """One forward-backward step with the exact full gradient."""
    if not alpha > 0:
        raise ParameterError(f"step size must be positive, got {alpha}")
    with np.errstate(over="ignore", invalid="ignore"):
        x_new = prox_step(problem, alpha, state.x - alpha * full_gradient(problem, state.x))
    _check_finite(x_new, state)
    return replace(state, k=state.k + 1, x=x_new, history=(x_new,), cache=None,
                   cache_index=None, delays=np.zeros(problem.n_components, dtype=int))


@dataclass
class ConvergenceTrace:
    """Per-iteration record of a run.

    Row ``k`` describes ``x_k``; ``step_norm_sq[k]``, ``delays[k]`` and the
    two one-step-inequality residuals describe the transition to ``x_{k+1}``
    and are NaN / absent on the final row. ``psi`` is computed from
    ``phi_err`` and ``dist_sq``, so ``psi = phi_err + dist_sq / (2 alpha)``
    holds by construction.
    """

    alpha: float
    tau: int
    lipschitz: float
    phi: list = field(default_factory=list)
    phi_err: list = field(default_factory=list)
    dist_sq: list = field(default_factory=list)
    psi: list = field(default_factory=list)
    step_norm_sq: list = field(default_factory=list)
    delays: list = field(default_factory=list)
    lemma2_at_xk: list = field(default_factory=list)
    lemma2_at_proj: list = field(default_factory=list)
    iterates: Optional[list] = None

    def __len__(self):
        return len(self.phi)

    @property
    def k(self):
        return np.arange(len(self))

    @property
    def max_realized_delay(self):
        return [int(np.max(d)) if d is not None else -1 for d in self.delays]

    def _append(self, phi, phi_err, dist_sq, x):
        self.phi.append(phi)
        self.phi_err.append(phi_err)
        self.dist_sq.append(dist_sq)
        self.psi.append(phi_err + dist_sq / (2 * self.alpha))
        self.step_norm_sq.append(math.nan)
        self.delays.append(None)
        self.lemma2_at_xk.append(math.nan)
        self.lemma2_at_proj.append(math.nan)
        if self.iterates is not None:
            self.iterates.append(x)


def run(problem, schedule, alpha, x0, max_iters, psi_tol=None, mode="cache",
        record_iterates=False, lemma2=True):
    """Run PIAG for at most ``max_iters`` steps and record a trace.

    Stops early once ``Psi(x_k) <= psi_tol`` (needs ground truth). With
    ``lemma2`` and ground truth, the one-step inequality residual is recorded
    at the probes ``x_k`` and ``proj_X(x_k)``; without ground truth only the
    ``x_k`` probe is evaluated.

    Raises :class:`DivergenceError` with the partial trace attached.
    """
    if max_iters < 0:
        raise ParameterError("max_iters must be nonnegative")
    gt = problem.ground_truth
    if psi_tol is not None and gt is None:
        raise ParameterError("a Psi tolerance needs ground truth")
    L, tau = problem.total_lipschitz, schedule.tau
    fstar = gt.optimal_value if gt is not None else math.nan
    trace = ConvergenceTrace(alpha, tau, L, iterates=[] if record_iterates else None)

    def measure(x):
        phi = objective(problem, x)
        if gt is None:
            return phi, math.nan, math.nan, None
        proj = gt.project_to_solutions(x)
        return phi, phi - fstar, gt.dist_sq(x), proj

    state = initial_state(x0, mode)
    phi, err, dsq, proj = measure(state.x)
    trace._append(phi, err, dsq, state.x)
    window = []
    # one errstate for the whole loop; overflow is caught by the finiteness checks
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(max_iters):
            if psi_tol is not None and trace.psi[-1] <= psi_tol:
                break
            try:
                nxt = _piag_step(state, problem, schedule, alpha)
                s = nxt.x - state.x
                step = float(s @ s)
                if not math.isfinite(step):
                    raise DivergenceError(f"step norm overflowed at k={state.k + 1}", state=state)
            except DivergenceError as exc:
                exc.trace = trace
                raise
            k = state.k
            trace.step_norm_sq[k] = step
            trace.delays[k] = nxt.delays
            window.append(step)
            if len(window) > tau + 1:
                window.pop(0)
            phi_next, err_next, dsq_next, proj_next = measure(nxt.x)
            if lemma2:
                total = 0.0
                for v in window:
                    total += v
                delta = L * (tau + 1) / 2.0 * total
                trace.lemma2_at_xk[k] = lemma2_gap(phi_next, phi, state.x, state.x, nxt.x, alpha,
                                                   delta)
                if proj is not None:
                    trace.lemma2_at_proj[k] = lemma2_gap(phi_next, objective(problem, proj), proj,
                                                         state.x, nxt.x, alpha, delta)
            trace._append(phi_next, err_next, dsq_next, nxt.x)
            state, phi, proj = nxt, phi_next, proj_next
    return trace
