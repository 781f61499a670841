"""Synthetic problem instances with ground truth.

Least squares ``0.5 ||A x - b||^2`` gets exact ground truth from an SVD: the
solution set is ``x_hat + null(A)`` and the quadratic-growth constant is the
smallest nonzero eigenvalue of ``A^T A``, so rank-deficient ``A`` gives
instances that satisfy quadratic growth without being strongly convex.

Box-constrained quadratics and lasso instances get their minimizer from a
high-accuracy inner solver and their growth constant from sampling; they are
flagged ``beta_estimated`` and are only suitable for smoke tests.
"""

import numpy as np

from .errors import GenerationError, ParameterError
from .model import (GroundTruth, ProblemInstance, box_indicator, l1_regularizer,
                    least_squares_component, objective, quadratic_component,
                    validate_batch_values, validate_component, validate_ground_truth,
                    validate_regularizer, zero_regularizer)

__all__ = [
    "make_least_squares", "random_least_squares", "make_box_constrained_quadratic",
    "make_lasso", "null_space_witness", "problem_to_dict", "problem_from_dict",
    "from_config",
]

_EPS = np.finfo(float).eps


def _blocks(m, N):
    if N < 1 or N > m:
        raise GenerationError(f"cannot split {m} rows into {N} nonempty blocks")
    return np.array_split(np.arange(m), N)


def _check_generated(problem, seed, points, scale):
    rng = np.random.default_rng(seed)
    for c in problem.components:
        validate_component(c, rng, n_samples=3, scale=scale)
    validate_batch_values(problem, rng, scale=scale)
    validate_regularizer(problem.regularizer, problem.dimension, rng, n_samples=10, scale=scale)
    validate_ground_truth(problem, points=points)
    gt = problem.ground_truth
    if gt.qg_constant > problem.total_lipschitz * (1 + 1e-12):
        raise GenerationError(f"beta = {gt.qg_constant!r} exceeds L = {problem.total_lipschitz!r}")


# -- least squares ------------------------------------------------------------

def make_least_squares(A, b, N, seed=None, n_check=1000):
    """``sum_n 0.5 ||A_n x - b_n||^2`` with rows of ``A`` split into ``N``
    contiguous blocks and ``h = 0``.

    Ground truth: ``X = x_hat + null(A)`` (``x_hat`` the minimum-norm
    least-squares solution), ``beta = sigma_min^+(A)^2``. Quadratic growth is
    re-checked on ``n_check`` random points before returning.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    m, d = A.shape
    b = np.asarray(b, dtype=float).reshape(m)
    U, s, Vt = np.linalg.svd(A, full_matrices=True)
    if s.size == 0 or s[0] == 0:
        raise GenerationError("A is zero: every point is optimal and beta is undefined")
    rank = int(np.sum(s > max(m, d) * _EPS * s[0]))
    Vr, V0 = Vt[:rank].T.copy(), Vt[rank:].T.copy()
    x_hat = Vr @ ((U[:, :rank].T @ b) / s[:rank])
    center = Vr.T @ x_hat
    VrT = np.ascontiguousarray(Vr.T)

    def project(x):
        return x - Vr @ (VrT @ x - center)

    def dist_sq(x):
        r = VrT @ x - center
        return float(r @ r)

    blocks = _blocks(m, N)
    comps = [least_squares_component(A[rows], b[rows], name=f"ls[{n}]")
             for n, rows in enumerate(blocks)]
    starts = np.array([rows[0] for rows in blocks])

    def batch_values(x):
        r = A @ x - b
        return 0.5 * np.add.reduceat(r * r, starts)
    fstar = 0.0
    for c in comps:
        fstar += c.value(x_hat)
    gt = GroundTruth(fstar, project, float(s[rank - 1] ** 2), dist_sq)
    meta = {"kind": "least-squares", "A": A, "b": b, "N": N, "seed": seed,
            "x_hat": x_hat, "null_basis": V0, "rank": rank}
    problem = ProblemInstance(comps, zero_regularizer(), gt, meta, batch_values)

    rng = np.random.default_rng(seed)
    scale = max(1.0, float(np.linalg.norm(x_hat)))
    points = x_hat + scale * rng.standard_normal((n_check, d))
    _check_generated(problem, rng, points, scale)
    return problem


def random_least_squares(d, m, N, seed, rank=None, cond=10.0, consistent=True, n_check=1000):
    """Random ``A = U diag(s) V^T`` of the given rank with ``s^2`` spread
    geometrically over ``[1, cond]`` (so ``beta = 1`` up to rounding).

    ``consistent`` puts ``b`` in the range of ``A`` (``Phi* = 0``); otherwise
    an orthogonal residual is added.
    """
    rng = np.random.default_rng(seed)
    rank = min(m, d) if rank is None else rank
    if not 1 <= rank <= min(m, d):
        raise ParameterError(f"rank must lie in [1, {min(m, d)}]")
    U = np.linalg.qr(rng.standard_normal((m, m)))[0]
    V = np.linalg.qr(rng.standard_normal((d, rank)))[0]
    s = np.sqrt(np.geomspace(1.0, cond, rank))[::-1]
    A = (U[:, :rank] * s) @ V.T
    b = A @ rng.standard_normal(d)
    if not consistent and rank < m:
        b = b + U[:, rank:] @ rng.standard_normal(m - rank)
    return make_least_squares(A, b, N, seed=rng.integers(2**63), n_check=n_check)


def null_space_witness(problem, ts=(1.0, -1.0, 10.0, -10.0), tol=1e-10):
    """Return a unit ``v`` in ``null(A)`` along which ``Phi`` stays at ``Phi*``
    (so ``Phi`` is not strongly convex), or ``None`` when ``A`` has full
    column rank."""
    V0 = problem.meta.get("null_basis")
    if V0 is None or V0.shape[1] == 0:
        return None
    v = V0[:, 0]
    x_hat, fstar = problem.meta["x_hat"], problem.ground_truth.optimal_value
    for t in ts:
        if abs(objective(problem, x_hat + t * v) - fstar) > tol * max(1.0, abs(fstar)):
            return None
    return v


# -- polyhedral solution sets -------------------------------------------------

def _affine_projector(M, c):
    """Projection onto ``{z : M z = M_ref}`` given ``c = M z_ref``."""
    pinv = np.linalg.pinv(M, rcond=1e-12)

    def project(z):
        return z - pinv @ (M @ z - c)

    return project


def _dykstra(x, proj_affine, lo, hi, tol=1e-14, max_iter=100000):
    """Projection onto ``{lo <= z <= hi} cap affine`` by Dykstra's algorithm.

    Ends on a box projection so the result is always inside the box.
    """
    z = np.array(x, dtype=float)
    p = np.zeros_like(z)
    q = np.zeros_like(z)
    for _ in range(max_iter):
        y = proj_affine(z + p)
        p = z + p - y
        z_new = np.clip(y + q, lo, hi)
        q = y + q - z_new
        if np.linalg.norm(z_new - z) <= tol * max(1.0, np.linalg.norm(z_new)):
            return z_new
        z = z_new
    return z


def _estimate_beta(problem, fstar, project, points, L):
    ratios = []
    for x in points:
        r = x - project(x)
        dsq = float(r @ r)
        if dsq > 1e-12:
            ratios.append(2.0 * (objective(problem, x) - fstar) / dsq)
    sample_min = min(ratios) if ratios else np.inf
    return min(sample_min, L), sample_min


def _split_weights(N, rng):
    return rng.dirichlet(np.ones(N))


def make_box_constrained_quadratic(Q, q, lo, hi, N, seed=None, n_samples=10000):
    """``sum_n w_n (0.5 x^T Q x + q^T x)`` plus the indicator of ``[lo, hi]``.

    The weights ``w_n`` are a seeded Dirichlet draw. The minimizer comes
    from projected gradient run to a ``1e-12`` fixed-point residual; the
    solution set is ``box cap {Q z = Q x*, q^T z = q^T x*}`` and ``beta`` is
    the sampled minimum of ``2 (Phi - Phi*) / d^2`` over points in the box
    (capped at ``L``).
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    d = Q.shape[0]
    q = np.asarray(q, dtype=float).reshape(d)
    lo = np.broadcast_to(np.asarray(lo, dtype=float), (d,)).copy()
    hi = np.broadcast_to(np.asarray(hi, dtype=float), (d,)).copy()
    if np.any(lo > hi):
        raise GenerationError("box is empty (lo > hi)")
    if not np.allclose(Q, Q.T) or np.linalg.eigvalsh(Q)[0] < -1e-12 * max(1.0, np.abs(Q).max()):
        raise GenerationError("Q must be symmetric positive semidefinite")
    rng = np.random.default_rng(seed)
    w = _split_weights(N, rng)
    lam_max = float(np.linalg.eigvalsh(Q)[-1])
    # a linear term has a 0-Lipschitz gradient; any positive bound is valid
    Lq = lam_max if lam_max > 0 else 1.0
    comps = [quadratic_component(wn * Q, wn * q, lipschitz=wn * Lq, name=f"qp[{n}]")
             for n, wn in enumerate(w)]

    x = np.clip(np.zeros(d), lo, hi)
    step = 1.0 / Lq
    for _ in range(1000000):
        x_new = np.clip(x - step * (Q @ x + q), lo, hi)
        if np.linalg.norm(x_new - x) <= 1e-12 * max(1.0, np.linalg.norm(x_new)):
            x = x_new
            break
        x = x_new
    x_star = x
    M = np.vstack([Q, q[None, :]])
    affine = _affine_projector(M, M @ x_star)

    def project(z):
        return _dykstra(z, affine, lo, hi)

    problem = ProblemInstance(comps, box_indicator(lo, hi), None)
    fstar = objective(problem, x_star)
    sample_lo = np.where(np.isfinite(lo), lo, x_star - 1.0 - np.abs(x_star))
    sample_hi = np.where(np.isfinite(hi), hi, x_star + 1.0 + np.abs(x_star))
    points = rng.uniform(sample_lo, sample_hi, size=(n_samples, d))
    L = problem.total_lipschitz
    beta, sample_min = _estimate_beta(problem, fstar, project, points, L)
    if not np.isfinite(beta):
        beta = L
    gt = GroundTruth(fstar, project, beta, beta_estimated=True)
    meta = {"kind": "box-qp", "Q": Q, "q": q, "lo": lo, "hi": hi, "N": N, "seed": seed,
            "x_star": x_star, "beta_sample_min": sample_min}
    problem = ProblemInstance(comps, problem.regularizer, gt, meta)
    _check_generated(problem, rng, points[:200], 1.0)
    return problem


def make_lasso(A, b, lam, N, seed=None, n_samples=10000, max_iter=2000000):
    """``sum_n 0.5 ||A_n x - b_n||^2 + lam ||x||_1``.

    The minimizer comes from forward-backward splitting run to a ``1e-12``
    fixed-point residual. The solution set is the polyhedron of points with
    the same fit ``A x`` and a sign pattern compatible with the optimal dual
    vector; ``beta`` is a sampled estimate around the minimizer.
    """
    if not lam > 0:
        raise ParameterError("lasso weight must be positive")
    A = np.atleast_2d(np.asarray(A, dtype=float))
    m, d = A.shape
    b = np.asarray(b, dtype=float).reshape(m)
    blocks = _blocks(m, N)
    comps = [least_squares_component(A[rows], b[rows], name=f"ls[{n}]")
             for n, rows in enumerate(blocks)]
    starts = np.array([rows[0] for rows in blocks])

    def batch_values(x):
        r = A @ x - b
        return 0.5 * np.add.reduceat(r * r, starts)
    reg = l1_regularizer(lam)
    lam_max = float(np.linalg.eigvalsh(A.T @ A)[-1])
    step = 1.0 / lam_max if lam_max > 0 else 1.0

    x = np.zeros(d)
    for _ in range(max_iter):
        x_new = reg.prox(step, x - step * (A.T @ (A @ x - b)))
        if np.linalg.norm(x_new - x) <= 1e-12 * max(1.0, np.linalg.norm(x_new)):
            x = x_new
            break
        x = x_new
    x_star = x

    s = -(A.T @ (A @ x_star - b)) / lam
    active = np.abs(s) >= 1 - 1e-9
    lo = np.where(active & (s < 0), -np.inf, 0.0)
    hi = np.where(active & (s > 0), np.inf, 0.0)
    affine = _affine_projector(A, A @ x_star)

    def project(z):
        return _dykstra(z, affine, lo, hi)

    problem = ProblemInstance(comps, reg, None)
    fstar = objective(problem, x_star)
    rng = np.random.default_rng(seed)
    scale = max(1.0, float(np.linalg.norm(x_star)))
    points = x_star + scale * rng.standard_normal((n_samples, d))
    L = problem.total_lipschitz
    beta, sample_min = _estimate_beta(problem, fstar, project, points, L)
    if not np.isfinite(beta):
        beta = L
    gt = GroundTruth(fstar, project, beta, beta_estimated=True)
    meta = {"kind": "lasso", "A": A, "b": b, "lambda": lam, "N": N, "seed": seed,
            "x_star": x_star, "beta_sample_min": sample_min}
    problem = ProblemInstance(comps, reg, gt, meta)
    _check_generated(problem, rng, points[:200], scale)
    return problem


# -- serialization ------------------------------------------------------------

def _jsonable(v):
    if isinstance(v, np.ndarray):
        if v.dtype.kind == "f":
            return [_jsonable(x) for x in v.tolist()] if v.ndim else _jsonable(float(v))
        return v.tolist()
    if isinstance(v, list):
        return [_jsonable(x) for x in v]
    if isinstance(v, float) and not np.isfinite(v):
        return "inf" if v > 0 else ("-inf" if v < 0 else "nan")
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        return _jsonable(float(v))
    return v


def _floats(v):
    return np.array(v, dtype=float) if not isinstance(v, str) else float(v)


def problem_to_dict(problem):
    """JSON-ready description (dense matrices row-major) plus ground-truth
    metadata. ``problem_from_dict`` rebuilds an equivalent instance."""
    meta = problem.meta
    if "kind" not in meta:
        raise ParameterError("only generated instances can be serialized")
    keys = {"least-squares": ("A", "b"), "box-qp": ("Q", "q", "lo", "hi"),
            "lasso": ("A", "b", "lambda")}[meta["kind"]]
    out = {"kind": meta["kind"], "N": meta["N"], "seed": _jsonable(meta["seed"])}
    out.update({k: _jsonable(meta[k]) for k in keys})
    gt = problem.ground_truth
    out["ground_truth"] = {
        "optimal_value": _jsonable(gt.optimal_value),
        "qg_constant": _jsonable(gt.qg_constant),
        "beta_estimated": gt.beta_estimated,
        "total_lipschitz": _jsonable(problem.total_lipschitz),
    }
    if meta["kind"] == "least-squares":
        out["ground_truth"]["null_space_basis"] = _jsonable(meta["null_basis"])
        out["ground_truth"]["x_hat"] = _jsonable(meta["x_hat"])
    return out


def problem_from_dict(doc):
    kind, N, seed = doc["kind"], doc["N"], doc.get("seed")
    if kind == "least-squares":
        return make_least_squares(_floats(doc["A"]), _floats(doc["b"]), N, seed)
    if kind == "lasso":
        return make_lasso(_floats(doc["A"]), _floats(doc["b"]), doc["lambda"], N, seed)
    if kind == "box-qp":
        lo = np.array([float(v) for v in doc["lo"]])
        hi = np.array([float(v) for v in doc["hi"]])
        return make_box_constrained_quadratic(_floats(doc["Q"]), _floats(doc["q"]), lo, hi, N, seed)
    raise ParameterError(f"unknown problem kind {kind!r}")


def from_config(cfg):
    """Build a random instance from the ``problem`` section of a run config."""
    kind, seed, d, N = cfg["kind"], cfg["seed"], cfg["d"], cfg["N"]
    m = cfg.get("m", 2 * d)
    rng = np.random.default_rng(seed)
    if kind == "least-squares":
        return random_least_squares(d, m, N, seed, rank=cfg.get("rank"),
                                    cond=cfg.get("cond", 10.0),
                                    consistent=cfg.get("consistent", True))
    if kind == "lasso":
        A = rng.standard_normal((m, d)) / np.sqrt(m)
        b = A @ rng.standard_normal(d) + 0.1 * rng.standard_normal(m)
        return make_lasso(A, b, cfg["lambda"], N, seed)
    if kind == "box-qp":
        B = rng.standard_normal((m, d)) / np.sqrt(m)
        lo, hi = cfg.get("box", [-1.0, 1.0])
        return make_box_constrained_quadratic(B.T @ B, rng.standard_normal(d), lo, hi, N, seed)
    raise ParameterError(f"unknown problem kind {kind!r}")
