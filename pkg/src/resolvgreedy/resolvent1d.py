"""Exact resolvent of the 1D mixed problem and its sup-norm identities.

For ``-(sigma u')' = f`` on (0, 1) with ``u'(0) = 0`` and ``u(1) = 0`` the
solution is

    v(x) = int_x^1 (1/sigma(t)) F(t) dt,   F(x) = int_0^x f,

so ``v' = -F / sigma``. With sigma and f constant per cell, F is piecewise
linear and v piecewise quadratic; everything below is evaluated in closed
form cell by cell.

The operator ``T_m f = m F`` maps W^{-1,1} (norm ``||F||_{L1}``) to L1 and
its norm is ``||m||_inf``. The resolvent distance measured through it,
``||R_s - R_t||_* = ||1/t - 1/s||_inf``, and the distance of one resolvent
to a span of others is an L-infinity best approximation problem between
reciprocals, solved by :mod:`resolvgreedy.minimax`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coeff_space import Grid1D, PiecewiseFn, check_same_grid, linf_norm, reciprocal
from .errors import DegenerateProbe, EmptyBasis, GridMismatch, ProbeOutOfDomain, ProbeUnresolved
from . import minimax
from .serialization import atomic_write, csv_text

SourceFn = PiecewiseFn
"""A piecewise-constant source term on a :class:`Grid1D`."""


def _require_1d(*fns):
    for f in fns:
        if not isinstance(f.grid, Grid1D):
            raise GridMismatch(f"expected a 1D grid, got {f.grid}")


def primitive(f: SourceFn) -> np.ndarray:
    """Nodal values of F(x) = int_0^x f, length M + 1, with F(0) = 0."""
    _require_1d(f)
    return np.concatenate([[0.0], np.cumsum(f.values) * f.grid.h])


def _l1_linear(left, right, h):
    """Exact int |p| over cells where p is linear from ``left`` to ``right``."""
    left = np.asarray(left, dtype=float)
    right = np.asarray(right, dtype=float)
    al, ar = np.abs(left), np.abs(right)
    same = left * right >= 0
    denom = np.where(same, 1.0, al + ar)
    crossing = (left**2 + right**2) / (2.0 * denom)
    return float(np.sum(h * np.where(same, 0.5 * (al + ar), crossing)))


@dataclass(frozen=True, eq=False)
class PiecewiseLinearFn:
    """A function linear on each cell, stored by its one-sided end values per cell."""

    grid: Grid1D
    left: np.ndarray
    right: np.ndarray

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        k = self.grid.cell_of(x)
        s = x * self.grid.cells - k
        return self.left[k] * (1 - s) + self.right[k] * s

    def l1_norm(self):
        return _l1_linear(self.left, self.right, self.grid.h)

    def linf_norm(self):
        return float(max(np.abs(self.left).max(), np.abs(self.right).max()))


@dataclass(frozen=True, eq=False)
class Solution1D:
    """The resolvent applied to a source.

    ``v`` holds nodal values at the M + 1 cell boundaries (``v[-1] == 0``);
    ``vx_left``/``vx_right`` hold the derivative at the two ends of each
    cell (it is linear inside a cell). ``v_mid`` stores the value at cell
    midpoints so that the piecewise quadratic is fully determined.
    """

    grid: Grid1D
    v: np.ndarray
    v_mid: np.ndarray
    vx_left: np.ndarray
    vx_right: np.ndarray

    @property
    def derivative(self) -> PiecewiseLinearFn:
        return PiecewiseLinearFn(self.grid, self.vx_left, self.vx_right)

    def __call__(self, x):
        """Evaluate the piecewise quadratic v at points ``x``."""
        x = np.asarray(x, dtype=float)
        k = self.grid.cell_of(x)
        h = self.grid.h
        s = x - k * h
        # v(x_k + s) = v_k + vx_left s + (vx_right - vx_left) s^2 / (2h)
        return self.v[k] + self.vx_left[k] * s + (self.vx_right[k] - self.vx_left[k]) * s**2 / (2 * h)

    def __add__(self, other):
        return self.combine([1.0, 1.0], [self, other])

    def __sub__(self, other):
        return self.combine([1.0, -1.0], [self, other])

    def scaled(self, c):
        return Solution1D(self.grid, c * self.v, c * self.v_mid, c * self.vx_left, c * self.vx_right)

    @staticmethod
    def combine(coeffs, sols):
        """Linear combination sum_i coeffs[i] * sols[i] (exact, since the solution set is a vector space)."""
        grid = sols[0].grid
        if any(s.grid != grid for s in sols):
            raise GridMismatch("solutions live on different grids")
        parts = [
            sum(c * getattr(s, name) for c, s in zip(coeffs, sols))
            for name in ("v", "v_mid", "vx_left", "vx_right")
        ]
        return Solution1D(grid, *parts)

    def export_rows(self):
        """Rows (x, v, v_x) at x = 0, every cell midpoint and x = 1 (one-sided derivatives at the ends)."""
        xm = self.grid.midpoints
        vxm = 0.5 * (self.vx_left + self.vx_right)
        rows = [(0.0, self.v[0], self.vx_left[0])]
        rows += list(zip(xm, self.v_mid, vxm))
        rows.append((1.0, self.v[-1], self.vx_right[-1]))
        return rows

    def to_csv(self, path=None):
        text = csv_text(["x", "v", "v_x"], [tuple(map(float, r)) for r in self.export_rows()])
        if path is not None:
            atomic_write(path, text)
        return text


def apply_resolvent(sigma: PiecewiseFn, f: SourceFn) -> Solution1D:
    """Exact solution of ``-(sigma v')' = f``, ``v'(0) = 0``, ``v(1) = 0``.

    Raises
    ------
    GridMismatch
        If sigma and f are not on the same 1D grid.
    """
    _require_1d(sigma, f)
    check_same_grid(sigma, f)
    m = reciprocal(sigma).values
    h = f.grid.h
    F = primitive(f)
    fl, fr = F[:-1], F[1:]
    # int over a cell of F/sigma = m * h * (F_k + F_{k+1}) / 2 (F linear)
    cell_int = m * h * 0.5 * (fl + fr)
    v = np.zeros(f.grid.cells + 1)
    v[:-1] = np.cumsum(cell_int[::-1])[::-1]
    # int from the midpoint to x_{k+1} of F = (h/2) * (F(mid) + F_{k+1}) / 2
    fmid = 0.5 * (fl + fr)
    v_mid = v[1:] + m * (h / 2) * 0.5 * (fmid + fr)
    return Solution1D(f.grid, v, v_mid, -m * fl, -m * fr)


def apply_Tm(m: PiecewiseFn, f: SourceFn) -> PiecewiseLinearFn:
    """``T_m f(x) = m(x) F(x)``, exactly, on the grid of ``f``.

    ``m`` may live on a coarser grid that ``f``'s grid refines.
    """
    _require_1d(m, f)
    mv = m.on_grid(f.grid).values
    F = primitive(f)
    return PiecewiseLinearFn(f.grid, mv * F[:-1], mv * F[1:])


def wm11_norm(f: SourceFn) -> float:
    """``||f||_{W^{-1,1}} = ||F||_{L1}``, exact (sign changes inside a cell included)."""
    F = primitive(f)
    return _l1_linear(F[:-1], F[1:], f.grid.h)


def tm_operator_norm(m: PiecewiseFn) -> float:
    """Norm of ``T_m`` from W^{-1,1} to L1, which equals ``||m||_inf``."""
    return linf_norm(m)


def star_norm(sigma: PiecewiseFn) -> float:
    """``||R_sigma||_* = ||T_{1/sigma}||``."""
    return tm_operator_norm(reciprocal(sigma))


def resolvent_distance_star(sigma: PiecewiseFn, sigma_t: PiecewiseFn) -> float:
    """``||R_sigma - R_sigma_t||_* = ||1/sigma_t - 1/sigma||_inf``."""
    check_same_grid(sigma, sigma_t)
    return linf_norm(reciprocal(sigma_t) - reciprocal(sigma))


def span_distance_star(tau: PiecewiseFn, basis) -> tuple[float, np.ndarray]:
    """Distance in ``||.||_*`` from ``R_tau`` to the span of the basis resolvents.

    Returns the optimal deviation and the coefficients ``a`` minimizing
    ``|| sum_i a_i / sigma_i - 1/tau ||_inf``.
    """
    basis = list(basis)
    if not basis:
        raise EmptyBasis("span distance needs at least one basis coefficient")
    check_same_grid(tau, *basis)
    A = np.column_stack([reciprocal(s).flat for s in basis])
    sol = minimax.solve(minimax.MinimaxProblem(A, reciprocal(tau).flat))
    return sol.deviation, sol.coeffs


def concentration_probe(x0: float, eps: float, grid: Grid1D) -> SourceFn:
    """Source whose primitive is a tent of half-width ``eps`` at ``x0`` with unit L1 mass.

    ``f = +1/eps^2`` on (x0 - eps, x0) and ``-1/eps^2`` on (x0, x0 + eps), so
    ``F`` peaks at ``1/eps`` and ``||f||_{W^{-1,1}} = 1``. The three kinks must
    be grid nodes and ``eps`` must span at least two cells.

    Raises
    ------
    ProbeOutOfDomain
        If the support leaves [0, 1].
    ProbeUnresolved
        If ``eps`` is below two cell widths or the kinks are off the grid.
    """
    if eps <= 0 or x0 - eps < -1e-12 or x0 + eps > 1 + 1e-12:
        raise ProbeOutOfDomain(f"probe support [{x0 - eps}, {x0 + eps}] is not inside [0, 1]")
    M = grid.cells
    if eps * M < 2 - 1e-9:
        raise ProbeUnresolved(f"eps={eps} is below two cell widths ({2 / M})")
    kinks = np.array([x0 - eps, x0, x0 + eps]) * M
    if np.any(np.abs(kinks - np.round(kinks)) > 1e-9):
        raise ProbeUnresolved(f"probe kinks {kinks / M} are not grid nodes of {grid}")
    lo, mid, hi = np.round(kinks).astype(int)
    vals = np.zeros(M)
    vals[lo:mid] = 1.0 / eps**2
    vals[mid:hi] = -1.0 / eps**2
    return PiecewiseFn(grid, vals)


def probe_suite(grid: Grid1D, refine=4):
    """One probe per cell of ``grid``, on a grid refined ``refine`` times.

    Each probe is centred in its cell with ``eps`` equal to two fine cells,
    so with the default ``refine = 4`` the tent fills exactly one coarse cell.
    """
    fine = grid.refine(refine)
    eps = 2.0 / fine.cells
    return [concentration_probe(float(x), eps, fine) for x in grid.midpoints]


def empirical_star_norm(m: PiecewiseFn, probes) -> float:
    """``max_f ||T_m f||_{L1} / ||f||_{W^{-1,1}}`` over the given probes (a lower bound on ``||m||_inf``)."""
    probes = list(probes)
    if not probes:
        raise DegenerateProbe("empty probe set")
    best = 0.0
    for f in probes:
        den = wm11_norm(f)
        if den <= 1e-300:
            raise DegenerateProbe("probe has zero W^{-1,1} norm")
        best = max(best, apply_Tm(m, f).l1_norm() / den)
    return best
