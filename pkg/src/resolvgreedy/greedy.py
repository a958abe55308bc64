"""Source-independent weak greedy selection of resolvent snapshots.

The greedy never touches a source term. For diffusivity families the
distance of ``R(mu)`` to ``V_n = span{R(mu_1), ..., R(mu_n)}`` is replaced
by the L-infinity distance of ``1/sigma(mu)`` to the span of the selected
reciprocals; for density families by the L-infinity distance of ``rho(mu)``
to the span of the selected densities. Both are computed by
:func:`resolvgreedy.minimax.solve`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import minimax
from .coeff_space import DENSITY, DIFFUSIVITY, ParametricFamily, PiecewiseFn, check_same_grid
from .errors import EmptyBasis, EmptyFamily, GridMismatch
from .resolvent1d import SourceFn, Solution1D, apply_resolvent, primitive, span_distance_star
from .serialization import atomic_write, csv_text, dumps

logger = logging.getLogger(__name__)

TOLERANCE = "tolerance"
MAX_ITERATIONS = "max-iterations"
EXHAUSTED = "exhausted"


@dataclass(frozen=True)
class GreedyConfig:
    """Greedy parameters.

    ``gamma < 1`` only matters with ``weak_mode=True``: the scan then stops
    at the first candidate whose distance reaches ``gamma`` times the
    previous step's maximum. That candidate is a valid weak-greedy choice
    because the maximal distance never grows as ``V_n`` grows. Without weak
    mode the exact maximum over the finite training set is always taken.
    """

    gamma: float = 1.0
    n_max: int = 50
    tol: float = 1e-10
    weak_mode: bool = False

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise ValueError(f"gamma must lie in (0, 1], got {self.gamma}")
        if int(self.n_max) != self.n_max or self.n_max < 1:
            raise ValueError(f"n_max must be a positive integer, got {self.n_max}")
        if self.tol < 0:
            raise ValueError(f"tol must be nonnegative, got {self.tol}")


@dataclass(frozen=True, eq=False)
class GreedyResult:
    """Outcome of :func:`greedy_run`.

    ``decay[k]`` is the largest surrogate distance from the training set to
    the span of the first ``k`` snapshots (``decay[0]`` is the largest norm).
    ``decay_exact[k]`` is False when a weak-mode scan stopped early, in which
    case ``decay[k]`` is only the largest distance seen.
    """

    kind: str
    indices: list
    snapshots: np.ndarray
    basis: list
    decay: list
    decay_exact: list
    gamma: float
    stop_reason: str
    scans: int = 0
    family_name: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def n(self):
        return len(self.indices)

    def basis_multipliers(self):
        """Matrix whose columns are the surrogate functions (1/sigma_i or rho_i) of the snapshots."""
        if self.kind == DIFFUSIVITY:
            return np.column_stack([1.0 / s.flat for s in self.basis])
        return np.column_stack([s.flat for s in self.basis])

    def to_dict(self):
        grid = self.basis[0].grid if self.basis else None
        return {
            "kind": self.kind,
            "family": self.family_name,
            "grid": list(grid.shape) if grid is not None else None,
            "gamma": self.gamma,
            "stop_reason": self.stop_reason,
            "snapshot_indices": list(map(int, self.indices)),
            "snapshots": [list(map(float, mu)) for mu in self.snapshots],
            "basis": [list(map(float, s.flat)) for s in self.basis],
            "decay": list(map(float, self.decay)),
            "decay_exact": list(map(bool, self.decay_exact)),
        }

    def to_json(self, path=None):
        text = dumps(self.to_dict())
        if path is not None:
            atomic_write(path, text)
        return text

    def decay_csv(self, path=None):
        text = csv_text(["n", "max_surrogate_distance"], [(k, float(d)) for k, d in enumerate(self.decay)])
        if path is not None:
            atomic_write(path, text)
        return text

    @classmethod
    def from_dict(cls, data):
        from .coeff_space import Grid1D, Grid2D

        shape = data["grid"]
        grid = Grid1D(shape[0]) if len(shape) == 1 else Grid2D(*shape)
        basis = [PiecewiseFn(grid, np.asarray(v, dtype=float)) for v in data["basis"]]
        return cls(
            kind=data["kind"],
            indices=list(data["snapshot_indices"]),
            snapshots=np.asarray(data["snapshots"], dtype=float),
            basis=basis,
            decay=list(map(float, data["decay"])),
            decay_exact=list(data["decay_exact"]),
            gamma=float(data["gamma"]),
            stop_reason=data["stop_reason"],
            family_name=data.get("family", ""),
        )


def _norms(table):
    # ||T_m|| = ||m||_inf for diffusivities, ||M_rho|| = ||rho||_inf for densities
    return np.max(np.abs(table), axis=1)


def _argmax_lowest(values, candidates):
    values = np.asarray(values)
    best = values.max()
    return int(candidates[np.flatnonzero(values == best)[0]]), float(best)


def select_first(fam: ParametricFamily) -> tuple:
    """Parameter point of largest resolvent norm (lowest index on ties)."""
    if len(fam) == 0:
        raise EmptyFamily("family has no parameters")
    norms = _norms(fam.surrogate_table())
    k, _ = _argmax_lowest(norms, np.arange(len(fam)))
    return tuple(fam.params[k])


def surrogate_distances(table, selected, candidates):
    """Minimax distance of each candidate row of ``table`` to the span of the selected rows."""
    A = table[selected].T
    out = np.empty(len(candidates))
    for i, k in enumerate(candidates):
        out[i] = minimax.solve(minimax.MinimaxProblem(A, table[k])).deviation
    return out


def greedy_run(fam: ParametricFamily, cfg: GreedyConfig = GreedyConfig()) -> GreedyResult:
    """Greedy snapshot selection over the family's training set.

    Each step computes the surrogate distance of every unselected parameter
    to the current span, records the maximum in ``decay`` and selects the
    maximizer (lowest index on ties). Stops when the maximum is at most
    ``cfg.tol``, after ``cfg.n_max`` snapshots, or when every parameter has
    been selected.
    """
    if len(fam) == 0:
        raise EmptyFamily("family has no parameters")
    table = fam.surrogate_table()
    K = len(fam)
    norms = _norms(table)
    selected = []
    first, top = _argmax_lowest(norms, np.arange(K))
    decay, exact = [top], [True]
    scans = K
    if top <= cfg.tol:
        reason = TOLERANCE
    else:
        selected.append(first)
        reason = None
    while reason is None:
        taken = set(selected)
        candidates = np.array([k for k in range(K) if k not in taken], dtype=int)
        if candidates.size == 0:
            decay.append(0.0)
            exact.append(True)
            reason = EXHAUSTED
            break
        if cfg.weak_mode and cfg.gamma < 1:
            threshold = cfg.gamma * decay[-1]
            A = table[selected].T
            seen, pick, full = [], None, True
            for k in candidates:
                d = minimax.solve(minimax.MinimaxProblem(A, table[k])).deviation
                scans += 1
                seen.append(d)
                if d >= threshold and d > cfg.tol:
                    pick, full = int(k), False
                    break
            dists = np.array(seen)
            if full:
                pick, best = _argmax_lowest(dists, candidates)
            else:
                best = float(dists.max())
            decay.append(best)
            exact.append(full)
        else:
            dists = surrogate_distances(table, selected, candidates)
            scans += len(candidates)
            pick, best = _argmax_lowest(dists, candidates)
            decay.append(best)
            exact.append(True)
            full = True
        logger.debug("greedy step %d: max distance %.3e at parameter %d", len(selected), best, pick)
        if full and best <= cfg.tol:
            reason = TOLERANCE
        elif len(selected) >= cfg.n_max:
            reason = MAX_ITERATIONS
        else:
            selected.append(pick)
    return GreedyResult(
        kind=fam.kind,
        indices=selected,
        snapshots=fam.params[selected] if selected else np.zeros((0, fam.dim)),
        basis=[fam.sample(fam.params[k]) for k in selected],
        decay=decay,
        decay_exact=exact,
        gamma=cfg.gamma if (cfg.weak_mode and cfg.gamma < 1) else 1.0,
        stop_reason=reason,
        scans=scans,
        family_name=fam.name,
    )


def replay_decay(result: GreedyResult, fam: ParametricFamily) -> list:
    """Recompute ``decay`` from the recorded snapshots (for consistency checks)."""
    table = fam.surrogate_table()
    out = [float(_norms(table).max())]
    for n in range(1, len(result.decay)):
        sel = result.indices[:n]
        rest = [k for k in range(len(fam)) if k not in sel]
        out.append(float(surrogate_distances(table, sel, rest).max()) if rest else 0.0)
    return out


@dataclass(frozen=True, eq=False)
class OnlineApproximation:
    approx: Solution1D
    surrogate_err: float
    coeffs: np.ndarray


def online_approximate(basis: GreedyResult, tau: PiecewiseFn, f: SourceFn) -> OnlineApproximation:
    """Approximate ``R_tau f`` by ``sum_i a_i R_{sigma_i} f`` with minimax-optimal ``a``.

    The derivative error of the result is exactly
    ``(sum_i a_i / sigma_i - 1/tau) F`` in every cell, and its sup-norm is at
    most ``surrogate_err * max|F|``.
    """
    if basis.kind != DIFFUSIVITY:
        raise ValueError("online approximation is defined for diffusivity families")
    if not basis.basis:
        raise EmptyBasis("greedy result has no snapshots")
    check_same_grid(tau, f, *basis.basis)
    t, a = span_distance_star(tau, basis.basis)
    sols = [apply_resolvent(s, f) for s in basis.basis]
    return OnlineApproximation(Solution1D.combine(list(a), sols), t, a)


def online_error_profile(basis: GreedyResult, tau, f, coeffs):
    """Cellwise predicted derivative-error factor ``sum_i a_i/sigma_i - 1/tau`` and F at the nodes."""
    weight = basis.basis_multipliers() @ np.asarray(coeffs) - 1.0 / tau.flat
    return weight, primitive(f)
