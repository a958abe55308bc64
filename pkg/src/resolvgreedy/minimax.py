"""Discrete L-infinity best approximation of a vector by a span of columns.

Given ``A`` (cells x basis functions) and ``b``, :func:`solve` computes

    t = min_a max_j |(A a - b)_j|

as the linear program ``min t`` subject to ``-t <= (A a - b)_j <= t``. The
LP is solved by a dense simplex method operating on its vertices: a vertex
is fixed by ``n + 1`` active constraints, so each pivot costs one small
``(n+1) x (n+1)`` solve plus one pass over the ``2m`` constraints. Pivots
follow Bland's rule (lowest constraint index both for the leaving and the
entering constraint), which rules out cycling on degenerate vertices.

:func:`brute_force` is an independent oracle: the exact minimum over a
uniform lattice of coefficient vectors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import NumericalBreakdown, OracleTooLarge

#: Absolute tolerance on the simplex multipliers (they sum to one).
OPTIMALITY_TOL = 1e-10
#: Relative tolerance for declaring a column numerically dependent.
RANK_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class MinimaxProblem:
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        if A.ndim == 1:
            A = A.reshape(-1, 1)
        b = np.array(self.b, dtype=float).reshape(-1)
        if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
            raise ValueError(f"A must be a non-empty matrix, got shape {A.shape}")
        if A.shape[0] != b.shape[0]:
            raise ValueError(f"A has {A.shape[0]} rows but b has {b.shape[0]} entries")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise ValueError("minimax data must be finite")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def shape(self):
        return self.A.shape

    def deviation(self, a):
        """max_j |(A a - b)_j| for one coefficient vector or a stack of them (rows)."""
        a = np.asarray(a, dtype=float)
        if a.ndim == 1:
            return float(np.max(np.abs(self.A @ a - self.b)))
        return np.max(np.abs(a @ self.A.T - self.b), axis=1)


@dataclass(frozen=True, eq=False)
class MinimaxSolution:
    coeffs: np.ndarray
    deviation: float
    active_rows: np.ndarray
    iterations: int = 0

    @property
    def t(self):
        return self.deviation

    @property
    def a(self):
        return self.coeffs


def _active_rows(problem, a, t):
    resid = np.abs(problem.A @ a - problem.b)
    return np.flatnonzero(resid >= t - 1e-9 * max(t, 1.0))


def _independent_columns(A):
    """Indices of a maximal set of linearly independent columns, chosen in index order."""
    keep, basis = [], []
    for i in range(A.shape[1]):
        col = A[:, i]
        norm = np.linalg.norm(col)
        if norm == 0:
            continue
        r = col / norm
        for _ in range(2):  # Gram-Schmidt with one reorthogonalization pass
            for q in basis:
                r = r - (q @ r) * q
        rn = np.linalg.norm(r)
        if rn > RANK_TOL:
            keep.append(i)
            basis.append(r / rn)
    return keep


def solve(problem: MinimaxProblem, tol=OPTIMALITY_TOL, max_iter=None) -> MinimaxSolution:
    """Global minimizer of ``max_j |(A a - b)_j|``.

    The deviation ``t`` is unique; ``a`` is fixed by the deterministic pivot
    order when the minimizer is not unique. Columns that are numerically
    dependent on earlier columns receive coefficient zero.

    Raises
    ------
    NumericalBreakdown
        If the iteration cap is exceeded.
    """
    A, b = problem.A, problem.b
    m, n = A.shape
    bmax = float(np.max(np.abs(b)))
    if bmax == 0.0:
        return MinimaxSolution(np.zeros(n), 0.0, np.arange(m), 0)

    keep = _independent_columns(A)
    p = len(keep)
    if p == 0:
        a = np.zeros(n)
        return MinimaxSolution(a, bmax, _active_rows(problem, a, bmax), 0)

    Ak = A[:, keep]
    ones = np.ones((m, 1))
    # constraint k < m:  (A a - b)_k <= t ;  k >= m:  -(A a - b)_{k-m} <= t
    G = np.vstack([np.hstack([Ak, -ones]), np.hstack([-Ak, -ones])])
    h = np.concatenate([b, -b])
    c = np.zeros(p + 1)
    c[p] = 1.0
    gscale = np.max(np.abs(G), axis=1)
    if max_iter is None:
        max_iter = 50 * (2 * m + p + 1)

    # feasible start a = 0, t = |b|_inf; the row attaining the max is active
    x = np.zeros(p + 1)
    x[p] = bmax
    j0 = int(np.argmax(np.abs(b)))
    active = [j0 if b[j0] < 0 else m + j0]
    iters = 0

    # move to a vertex along active-constraint-preserving directions that do not increase t
    while len(active) < p + 1:
        iters += 1
        N = scipy.linalg.null_space(G[active])
        d = -N @ (N.T @ c)
        if np.linalg.norm(d) <= 1e-12:
            d = N[:, 0]
        for direction in (d, -d):
            k = _ratio_test(G, h, x, direction, active, gscale)
            if k is not None:
                break
            if c @ direction < -1e-12:
                raise NumericalBreakdown("minimax LP appears unbounded (cannot happen for valid input)")
        if k is None:
            raise NumericalBreakdown("no blocking constraint while building the initial vertex")
        step, enter = k
        x = x + step * direction
        active.append(enter)

    for _ in range(max_iter):
        iters += 1
        B = G[active]
        try:
            lu = scipy.linalg.lu_factor(B, check_finite=False)
        except (ValueError, np.linalg.LinAlgError) as exc:  # pragma: no cover
            raise NumericalBreakdown(f"singular vertex basis: {exc}") from exc
        x = scipy.linalg.lu_solve(lu, h[active], check_finite=False)
        lam = scipy.linalg.lu_solve(lu, -c, trans=1, check_finite=False)
        negative = np.flatnonzero(lam < -tol)
        if negative.size == 0:
            break
        # Bland: leave the active constraint with the smallest index among negative multipliers
        pos = min(negative, key=lambda i: active[i])
        e = np.zeros(p + 1)
        e[pos] = -1.0
        d = scipy.linalg.lu_solve(lu, e, check_finite=False)
        k = _ratio_test(G, h, x, d, active, gscale)
        if k is None:
            raise NumericalBreakdown("minimax LP appears unbounded (cannot happen for valid input)")
        active[pos] = k[1]
    else:
        raise NumericalBreakdown(f"simplex exceeded {max_iter} pivots")

    a = np.zeros(n)
    a[keep] = x[:p]
    t = problem.deviation(a)
    return MinimaxSolution(a, t, _active_rows(problem, a, t), iters)


def _ratio_test(G, h, x, d, active, gscale):
    """Step length and index of the first constraint hit along ``d`` (lowest index on ties)."""
    gd = G @ d
    dn = np.max(np.abs(d))
    eligible = gd > 1e-12 * dn * gscale
    eligible[active] = False
    idx = np.flatnonzero(eligible)
    if idx.size == 0:
        return None
    slack = np.maximum(h[idx] - G[idx] @ x, 0.0)
    ratios = slack / gd[idx]
    rmin = ratios.min()
    ties = idx[ratios <= rmin + 1e-14 * max(1.0, abs(rmin))]
    return rmin, int(ties.min())


def brute_force(problem: MinimaxProblem, box=4.0, step=1e-3) -> MinimaxSolution:
    """Best point of the lattice ``{k * step : |k * step| <= box}^n``.

    The result is the same as evaluating every lattice point. Sub-boxes of
    the lattice are discarded only when a certified lower bound shows they
    cannot beat the incumbent: ``f = max_j |(A a - b)_j|`` is convex, so at
    any point ``v`` with maximizing row ``j`` and sign ``s``,
    ``f(x) >= f(v) + s A_j (x - v)``, minimized over the sub-box in closed form.

    Raises
    ------
    OracleTooLarge
        For more than three columns.
    """
    A, b = problem.A, problem.b
    m, n = A.shape
    if n > 3:
        raise OracleTooLarge(f"brute force supports at most 3 columns, got {n}")
    K = int(np.floor(box / step + 1e-9))
    leaf_w = 8
    stencil = np.stack(np.meshgrid(*[np.arange(leaf_w)] * n, indexing="ij"), axis=-1).reshape(-1, n)

    lo = np.full((1, n), -K, dtype=np.int64)
    hi = np.full((1, n), K, dtype=np.int64)
    best_val, best_idx = np.inf, None

    def offer(points, vals):
        nonlocal best_val, best_idx
        if not vals.size:
            return
        j = int(np.argmin(vals))
        if vals[j] < best_val:
            best_val, best_idx = float(vals[j]), points[j].copy()

    while lo.shape[0]:
        leaf = np.all(hi - lo < leaf_w, axis=1)
        if np.any(leaf):
            pts = lo[leaf][:, None, :] + stencil[None, :, :]
            inside = np.all(pts <= hi[leaf][:, None, :], axis=2)
            pts = pts[inside]
            offer(pts, problem.deviation(pts * step))
        lo, hi = lo[~leaf], hi[~leaf]
        if not lo.shape[0]:
            break
        mid = (lo + hi) // 2
        resid = (mid * step) @ A.T - b
        jstar = np.argmax(np.abs(resid), axis=1)
        rows = np.arange(len(mid))
        fmid = np.abs(resid[rows, jstar])
        offer(mid, fmid)
        g = np.sign(resid[rows, jstar])[:, None] * A[jstar]
        bound = fmid + step * np.sum(np.minimum(g * (lo - mid), g * (hi - mid)), axis=1)
        alive = bound < best_val
        lo, hi, mid = lo[alive], hi[alive], mid[alive]
        new_lo, new_hi = [], []
        for corner in range(2**n):
            bits = np.array([(corner >> i) & 1 for i in range(n)], dtype=bool)
            clo = np.where(bits, mid + 1, lo)
            chi = np.where(bits, hi, mid)
            ok = np.all(clo <= chi, axis=1)
            new_lo.append(clo[ok])
            new_hi.append(chi[ok])
        lo, hi = np.concatenate(new_lo), np.concatenate(new_hi)
    a = best_idx * step
    t = problem.deviation(a)
    return MinimaxSolution(a, t, _active_rows(problem, a, t), 0)
