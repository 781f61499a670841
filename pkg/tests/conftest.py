import numpy as np
import pytest

from piag.model import (GroundTruth, ProblemInstance, box_indicator, l1_regularizer,
                        quadratic_component, zero_regularizer)


def half_square(center=0.0, d=1):
    """``0.5 ||x - center||^2`` as a quadratic component."""
    c = np.broadcast_to(np.asarray(center, dtype=float), (d,))
    return quadratic_component(np.eye(d), -c)


def unit_quadratic(reg=None, d=1, with_truth=True):
    """``0.5 ||x||^2 + h``; ground truth is only attached for ``h = 0``."""
    gt = GroundTruth(0.0, lambda x: np.zeros_like(x), 1.0) if with_truth else None
    return ProblemInstance([half_square(d=d)], reg or zero_regularizer(), gt)


def random_quad_l1(rng, d=None, N=None):
    d = d or int(rng.integers(2, 8))
    N = N or int(rng.integers(1, 5))
    comps = []
    for _ in range(N):
        B = rng.standard_normal((d + 1, d))
        comps.append(quadratic_component(B.T @ B / d, rng.standard_normal(d)))
    return ProblemInstance(comps, l1_regularizer(float(rng.uniform(0.05, 1.0))))


def recurrence_sequences(rng, a, b, c, k0, n, equality=False):
    """Nonnegative ``V, w`` obeying the recurrence.

    ``w_k`` is capped at the size of the other terms so the right-hand side
    stays nonnegative and its rounding error stays relative to ``V``.
    """
    V, w = np.zeros(n), np.zeros(n)
    V[0] = rng.uniform(0.1, 10)
    for k in range(n - 1):
        past = w[max(0, k - k0):k].sum()
        room = a * V[k] + c * past
        w[k] = rng.uniform(0, 1) * room / max(b - c, c)
        rhs = room - (b - c) * w[k]
        # shrink factors stay >= 0.5 so 200-step sequences never reach subnormals
        V[k + 1] = max(rhs, 0.0) * (1.0 if equality else rng.uniform(0.5, 1))
    return V, w


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)


__all__ = ["half_square", "unit_quadratic", "random_quad_l1", "recurrence_sequences",
           "box_indicator", "l1_regularizer", "ACCEPTANCE"]
