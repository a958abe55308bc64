"""Piecewise-constant coefficients on uniform grids and parametric families.

Every coefficient in the package (diffusivity, its reciprocal, density,
source term) is constant on the cells of a uniform grid of the unit
interval or unit square. Sup-norms of such functions are exact maxima over
cell values, so no quadrature error ever enters a norm identity.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import GridMismatch, NonPositiveCoefficient, UnknownParameter, EmptyFamily
from .serialization import atomic_write, fmt


@dataclass(frozen=True)
class Grid1D:
    """Uniform grid of ``cells`` cells on [0, 1]; cell k covers [k/M, (k+1)/M)."""

    cells: int

    def __post_init__(self):
        if int(self.cells) != self.cells or self.cells < 1:
            raise ValueError(f"cell count must be a positive integer, got {self.cells!r}")

    @property
    def shape(self):
        return (self.cells,)

    @property
    def size(self):
        return self.cells

    @property
    def h(self):
        return 1.0 / self.cells

    @property
    def nodes(self):
        return np.arange(self.cells + 1) / self.cells

    @property
    def midpoints(self):
        return (np.arange(self.cells) + 0.5) / self.cells

    def refine(self, factor):
        return Grid1D(self.cells * int(factor))

    def cell_of(self, x):
        """Index of the cell containing ``x`` (x = 1 belongs to the last cell)."""
        return np.minimum((np.asarray(x) * self.cells).astype(int), self.cells - 1)


@dataclass(frozen=True)
class Grid2D:
    """Uniform ``nx`` by ``ny`` grid of the unit square; values indexed ``[i, j]`` with i along x."""

    nx: int
    ny: int

    def __post_init__(self):
        for n in (self.nx, self.ny):
            if int(n) != n or n < 1:
                raise ValueError(f"cell counts must be positive integers, got {(self.nx, self.ny)!r}")

    @property
    def shape(self):
        return (self.nx, self.ny)

    @property
    def size(self):
        return self.nx * self.ny

    def refine(self, factor):
        return Grid2D(self.nx * int(factor), self.ny * int(factor))


Grid = Grid1D | Grid2D


def _refinement_factor(coarse, fine):
    """Integer factor mapping ``coarse`` onto ``fine``, or None when they do not nest."""
    if type(coarse) is not type(fine):
        return None
    ratios = [f / c for c, f in zip(coarse.shape, fine.shape)]
    if any(r != int(r) or r < 1 for r in ratios) or len(set(ratios)) != 1:
        return None
    return int(ratios[0])


@dataclass(frozen=True, eq=False)
class PiecewiseFn:
    """A function constant on each cell of ``grid``."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float).reshape(self.grid.shape)
        if not np.all(np.isfinite(vals)):
            raise ValueError("piecewise function values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, grid, c):
        return cls(grid, np.full(grid.shape, float(c)))

    @classmethod
    def from_callable(cls, grid, func, samples=16):
        """Cell averages of a smooth ``func`` by the midpoint rule on ``samples`` subcells.

        Only for ingesting non-piecewise-constant data; everything downstream
        treats the result as exact.
        """
        if isinstance(grid, Grid1D):
            sub = (np.arange(grid.cells * samples) + 0.5) / (grid.cells * samples)
            vals = np.asarray(func(sub), dtype=float).reshape(grid.cells, samples).mean(axis=1)
        else:
            xs = (np.arange(grid.nx * samples) + 0.5) / (grid.nx * samples)
            ys = (np.arange(grid.ny * samples) + 0.5) / (grid.ny * samples)
            X, Y = np.meshgrid(xs, ys, indexing="ij")
            v = np.asarray(func(X, Y), dtype=float)
            vals = v.reshape(grid.nx, samples, grid.ny, samples).mean(axis=(1, 3))
        return cls(grid, vals)

    @property
    def flat(self):
        return self.values.reshape(-1)

    @property
    def bounds(self):
        return float(self.values.min()), float(self.values.max())

    def l1_norm(self):
        return float(np.abs(self.values).sum() / self.grid.size)

    def refine(self, factor):
        """The same function on a grid refined ``factor`` times per axis."""
        factor = int(factor)
        vals = self.values
        for axis in range(vals.ndim):
            vals = np.repeat(vals, factor, axis=axis)
        return PiecewiseFn(self.grid.refine(factor), vals)

    def on_grid(self, grid):
        """Express ``self`` on ``grid``, which must refine (or equal) its own grid."""
        if grid == self.grid:
            return self
        factor = _refinement_factor(self.grid, grid)
        if factor is None:
            raise GridMismatch(f"grid {self.grid} does not refine to {grid}")
        return self.refine(factor)

    def _combine(self, other, op):
        if isinstance(other, PiecewiseFn):
            check_same_grid(self, other)
            return PiecewiseFn(self.grid, op(self.values, other.values))
        return PiecewiseFn(self.grid, op(self.values, float(other)))

    def __add__(self, other):
        return self._combine(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __rsub__(self, other):
        return PiecewiseFn(self.grid, float(other) - self.values)

    def __mul__(self, other):
        return self._combine(other, np.multiply)

    __rmul__ = __mul__

    def __neg__(self):
        return PiecewiseFn(self.grid, -self.values)

    def __repr__(self):
        return f"PiecewiseFn({self.grid}, {np.array2string(self.flat, threshold=8)})"


def check_same_grid(*fns):
    grid = fns[0].grid
    for f in fns[1:]:
        if f.grid != grid:
            raise GridMismatch(f"grids differ: {grid} vs {f.grid}")
    return grid


def linf_norm(f: PiecewiseFn) -> float:
    """Exact sup-norm: the largest absolute cell value."""
    return float(np.max(np.abs(f.values)))


def reciprocal(sigma: PiecewiseFn) -> PiecewiseFn:
    if np.any(sigma.values <= 0):
        raise NonPositiveCoefficient(f"coefficient has non-positive values (min {sigma.values.min()!r})")
    return PiecewiseFn(sigma.grid, 1.0 / sigma.values)


def check_bounds(f: PiecewiseFn, lower, upper, *, what="coefficient"):
    lo, hi = f.bounds
    if lo < lower or hi > upper:
        raise NonPositiveCoefficient(f"{what} values [{lo}, {hi}] leave the admissible range [{lower}, {upper}]")


# --------------------------------------------------------------------------
# parametric families

DIFFUSIVITY = "diffusivity"
DENSITY = "density"


@dataclass(frozen=True, eq=False)
class ParametricFamily:
    """A finite training set of parameter points and a rule mapping each to a coefficient.

    ``generator(mu)`` returns cell values of the coefficient itself: the
    diffusivity sigma for ``kind="diffusivity"``, the density rho for
    ``kind="density"``. ``domain`` is either a list of ``(low, high)``
    pairs per parameter dimension, or None, in which case only the listed
    training points are admissible. ``bounds`` is an optional admissible
    range checked on every generated coefficient.
    """

    grid: Grid
    params: np.ndarray
    generator: Callable[[np.ndarray], np.ndarray]
    kind: str = DIFFUSIVITY
    domain: Sequence[tuple[float, float]] | None = None
    bounds: tuple[float, float] | None = None
    name: str = "family"
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.kind not in (DIFFUSIVITY, DENSITY):
            raise ValueError(f"unknown family kind {self.kind!r}")
        params = np.atleast_2d(np.asarray(self.params, dtype=float))
        if np.asarray(self.params).ndim == 1:
            params = params.reshape(-1, 1)
        if params.size == 0:
            raise EmptyFamily("parameter list is empty")
        if len({tuple(p) for p in params}) != len(params):
            raise ValueError("parameter list contains duplicates")
        params.setflags(write=False)
        object.__setattr__(self, "params", params)

    @property
    def dim(self):
        return self.params.shape[1]

    def __len__(self):
        return len(self.params)

    def _admissible(self, mu):
        if mu.shape != (self.dim,):
            return False
        if self.domain is None:
            return bool(np.any(np.all(self.params == mu, axis=1)))
        return all(lo <= m <= hi for m, (lo, hi) in zip(mu, self.domain))

    def sample(self, mu) -> PiecewiseFn:
        """The coefficient at parameter ``mu`` (deterministic)."""
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        if not self._admissible(mu):
            raise UnknownParameter(f"parameter {tuple(mu)} outside the declared domain of {self.name}")
        f = PiecewiseFn(self.grid, self.generator(mu))
        if self.kind == DIFFUSIVITY and np.any(f.values <= 0):
            raise NonPositiveCoefficient(f"diffusivity at mu={tuple(mu)} is not positive")
        if self.bounds is not None:
            check_bounds(f, *self.bounds, what=f"{self.kind} at mu={tuple(mu)}")
        return f

    def multiplier(self, mu) -> PiecewiseFn:
        """The surrogate function at ``mu``: 1/sigma for diffusivities, rho for densities."""
        f = self.sample(mu)
        return reciprocal(f) if self.kind == DIFFUSIVITY else f

    def surrogate_table(self) -> np.ndarray:
        """Cell values of :meth:`multiplier` for every training point, shape (K, cells)."""
        if "table" not in self._cache:
            table = np.stack([self.multiplier(mu).flat for mu in self.params])
            table.setflags(write=False)
            self._cache["table"] = table
        return self._cache["table"]


def family_sample(fam: ParametricFamily, mu) -> PiecewiseFn:
    return fam.sample(mu)


def _as_values(grid, v):
    if isinstance(v, PiecewiseFn):
        return v.on_grid(grid).values
    arr = np.asarray(v, dtype=float)
    if arr.ndim == 0:
        return np.full(grid.shape, float(arr))
    return arr.reshape(grid.shape)


def _affine(grid, base, modes):
    base = _as_values(grid, base)
    modes = np.stack([_as_values(grid, m) for m in modes]) if len(modes) else np.zeros((0,) + grid.shape)

    def gen(mu):
        return base + np.tensordot(mu, modes, axes=(0, 0))

    return gen, modes.shape[0]


def affine_reciprocal_family(grid, base, modes, params, domain=None, bounds=None, name="affine-reciprocal"):
    """Diffusivities whose reciprocal is affine in mu: 1/sigma = base + sum_j mu_j modes[j]."""
    mgen, d = _affine(grid, base, modes)
    _check_param_dim(params, d)

    def gen(mu):
        m = mgen(mu)
        if np.any(m <= 0):
            raise NonPositiveCoefficient(f"reciprocal coefficient at mu={tuple(mu)} is not positive")
        return 1.0 / m

    return ParametricFamily(grid, params, gen, DIFFUSIVITY, domain, bounds, name)


def affine_diffusivity_family(grid, base, modes, params, domain=None, bounds=None, name="affine-diffusivity"):
    """Diffusivities affine in mu: sigma = base + sum_j mu_j modes[j]."""
    gen, d = _affine(grid, base, modes)
    _check_param_dim(params, d)
    return ParametricFamily(grid, params, gen, DIFFUSIVITY, domain, bounds, name)


def affine_density_family(grid, base, modes, params, domain=None, bounds=None, name="affine-density"):
    gen, d = _affine(grid, base, modes)
    _check_param_dim(params, d)
    return ParametricFamily(grid, params, gen, DENSITY, domain, bounds, name)


def _check_param_dim(params, d):
    p = np.asarray(params, dtype=float)
    if p.ndim == 1:
        p = p.reshape(-1, 1)
    if p.size and p.shape[1] != d:
        raise ValueError(f"parameters have dimension {p.shape[1]} but the family has {d} modes")


def tabulated_family(grid, params, table, kind=DIFFUSIVITY, bounds=None, name="tabulated"):
    """A family given by explicit cell values for each listed parameter point."""
    params = np.asarray(params, dtype=float)
    if params.ndim == 1:
        params = params.reshape(-1, 1)
    table = np.asarray(table, dtype=float).reshape(len(params), grid.size)
    lookup = {tuple(p): row for p, row in zip(params, table)}

    def gen(mu):
        return lookup[tuple(mu)].reshape(grid.shape)

    return ParametricFamily(grid, params, gen, kind, None, bounds, name)


def parameter_grid(axes):
    """Cartesian product of per-dimension parameter values, in lexicographic order."""
    return np.array(list(itertools.product(*[list(map(float, ax)) for ax in axes])), dtype=float)


def random_parameters(rng, count, low, high):
    """``count`` points drawn uniformly from the box [low, high] with a SplitMix64 stream."""
    low = np.atleast_1d(np.asarray(low, dtype=float))
    high = np.atleast_1d(np.asarray(high, dtype=float))
    u = rng.random(count * low.size).reshape(count, low.size)
    return low + (high - low) * u


# --------------------------------------------------------------------------
# tabulated family files


def write_family_csv(path, fam: ParametricFamily):
    """Write ``mu_1..mu_d, cell_0..cell_{M-1}`` rows with 17-digit floats."""
    header = [f"mu_{j + 1}" for j in range(fam.dim)] + [f"cell_{k}" for k in range(fam.grid.size)]
    lines = [",".join(header)]
    for mu in fam.params:
        vals = fam.sample(mu).flat
        lines.append(",".join(fmt(v) for v in np.concatenate([mu, vals])))
    atomic_write(path, "\n".join(lines) + "\n")


def read_family_csv(path, kind=DIFFUSIVITY, grid=None, bounds=None):
    """Load a tabulated family; the grid defaults to a 1D grid with one cell per column."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise EmptyFamily(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    d = sum(1 for h in header if h.startswith("mu_"))
    cells = sum(1 for h in header if h.startswith("cell_"))
    if d == 0 or cells == 0 or d + cells != len(header):
        raise ValueError(f"{path}: header must be mu_1..mu_d,cell_0..cell_(M-1)")
    data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    if data.size == 0:
        raise EmptyFamily(f"{path} has no parameter rows")
    grid = grid or Grid1D(cells)
    if grid.size != cells:
        raise GridMismatch(f"{path} has {cells} cells but grid {grid} has {grid.size}")
    return tabulated_family(grid, data[:, :d], data[:, d:], kind=kind, bounds=bounds, name=str(path))
