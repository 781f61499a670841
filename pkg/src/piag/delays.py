"""Bounded delay schedules.

A schedule answers two questions about iteration ``k``:

* ``delays_at(k)`` -- the staleness ``tau_k^n`` of every component, used by
  the history-mode solver, which re-evaluates each gradient at
  ``x_{k - tau_k^n}``;
* ``refresh_set_at(k)`` -- which cached component gradients are recomputed
  at ``x_k`` before the step, used by the cache-mode solver.

Every emitted delay lies in ``{0, ..., min(tau, k)}`` and every window of
``tau + 1`` consecutive refresh sets covers all components. Components are
indexed from 0.
"""

import math
import threading
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError

__all__ = ["KINDS", "DelaySchedule", "RecordedDelays", "delays_at", "refresh_set_at"]

KINDS = ("zero", "fixed", "cyclic", "uniform-random", "adversarial-max")
_DRAW_BLOCK = 256  # refresh draws are generated this many iterations at a time


@dataclass(frozen=True)
class DelaySchedule:
    """Delay policy with bound ``tau`` over ``n_components`` components.

    Kinds
    -----
    zero
        No staleness; PIAG reduces to forward-backward splitting.
    fixed
        Component ``n`` always lags by ``n mod (tau + 1)`` (clamped by ``k``).
    cyclic
        Round robin: ``ceil(N / (tau + 1))`` consecutive components are
        refreshed per iteration.
    uniform-random
        Seeded i.i.d. draws. In cache mode each component is refreshed with
        probability ``1 / (tau + 1)`` and forcibly once its age would exceed
        ``tau``.
    adversarial-max
        Every component lags by the maximum ``min(tau, k)``.
    """

    kind: str
    tau: int
    n_components: int
    seed: int = 0
    _log: list = field(default_factory=list, init=False, repr=False, compare=False)
    _draws: dict = field(default_factory=dict, init=False, repr=False, compare=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False,
                                  repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"unknown schedule kind {self.kind!r}; expected one of {KINDS}")
        if int(self.tau) != self.tau or self.tau < 0:
            raise ParameterError("tau must be a nonnegative integer")
        if int(self.n_components) != self.n_components or self.n_components < 1:
            raise ParameterError("n_components must be a positive integer")

    @property
    def block(self):
        """Components refreshed per iteration by the cyclic kind."""
        return math.ceil(self.n_components / (self.tau + 1))

    def _generator(self, k, stream):
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence([self.seed, k, stream])))

    def delays_at(self, k):
        """Delay vector ``tau_k`` (length ``N``, integers in ``[0, min(tau, k)]``)."""
        if k < 0:
            raise ParameterError("iteration index must be nonnegative")
        N, cap = self.n_components, min(self.tau, k)
        if self.kind == "zero" or cap == 0:
            return np.zeros(N, dtype=int)
        if self.kind == "adversarial-max":
            return np.full(N, cap, dtype=int)
        if self.kind == "fixed":
            return np.minimum(np.arange(N) % (self.tau + 1), k)
        if self.kind == "uniform-random":
            return self._generator(k, 0).integers(0, cap + 1, size=N)
        # cyclic: age of each component under the round-robin refresh pattern
        out = np.empty(N, dtype=int)
        for n in range(N):
            out[n] = next(k - j for j in range(k, k - self.tau - 1, -1)
                          if n in self.refresh_set_at(j))
        return out

    def refresh_set_at(self, k):
        """Components whose cached gradient is recomputed at iteration ``k``."""
        if k < 0:
            raise ParameterError("iteration index must be nonnegative")
        N, P = self.n_components, self.tau + 1
        if k == 0 or self.kind == "zero" or self.tau == 0:
            return frozenset(range(N))
        if self.kind == "cyclic":
            start = k * self.block
            return frozenset((start + i) % N for i in range(self.block))
        if self.kind == "adversarial-max":
            return frozenset(range(N)) if k % P == 0 else frozenset()
        if self.kind == "fixed":
            return frozenset(n for n in range(N) if k % (n % P + 1) == 0)
        return self._random_refresh(k)

    def _random_refresh(self, k):
        with self._lock:
            log = self._log
            if not log:
                log.append((frozenset(range(self.n_components)), np.zeros(self.n_components, dtype=int)))
            draws = self._draws
            while len(log) <= k:
                j = len(log)
                last = log[-1][1]
                block_id = j // _DRAW_BLOCK
                if block_id not in draws:
                    draws.clear()
                    draws[block_id] = (self._generator(block_id, 1).random((_DRAW_BLOCK, self.n_components))
                                       < 1.0 / (self.tau + 1))
                draw = draws[block_id][j % _DRAW_BLOCK]
                forced = (j - last) > self.tau
                chosen = draw | forced
                stamp = np.where(chosen, j, last)
                log.append((frozenset(np.flatnonzero(chosen).tolist()), stamp))
            return log[k][0]


@dataclass(frozen=True)
class RecordedDelays:
    """Replays an explicit list of delay vectors (e.g. the realized delays of
    a cache-mode run) so that the history-mode solver can follow it."""

    delays: tuple
    tau: int

    def __post_init__(self):
        rows = tuple(np.asarray(r, dtype=int) for r in self.delays)
        object.__setattr__(self, "delays", rows)

    @property
    def n_components(self):
        return len(self.delays[0])

    def delays_at(self, k):
        return self.delays[k]


def delays_at(schedule, k):
    return schedule.delays_at(k)


def refresh_set_at(schedule, k):
    return schedule.refresh_set_at(k)
