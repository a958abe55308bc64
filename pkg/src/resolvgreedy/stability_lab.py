"""Finite-element checks of the multi-dimensional stability theory.

P1 elements on uniform meshes of the unit interval or unit square (each
square cut along its ``(0,0)-(1,1)`` diagonal), homogeneous Dirichlet data,
diffusivity constant per element. Element stiffness matrices are exact for
such coefficients.

Operator norms from H^{-1} to H^1_0 use the Laplacian stiffness ``K1`` as
Riesz map: ``||f||_{-1}^2 = f^T K1^{-1} f`` and ``||u||_{1}^2 = u^T K1 u``.
The density operators use the lumped mass matrix, which makes the norm of
multiplication by rho exactly ``max |rho|``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .coeff_space import Grid1D, Grid2D, PiecewiseFn, _refinement_factor
from .errors import AlignmentError, NoConvergence, ProbeOutOfDomain, ProbeUnresolved
from .rng import SplitMix64
from .serialization import atomic_write, csv_text, fmt

POWER_TOL = 1e-10
POWER_MAX_ITER = 10_000
POWER_SEED = 0x5EED


@dataclass(frozen=True, eq=False)
class Mesh:
    """Uniform mesh with ``n`` elements per axis on [0, 1] or [0, 1]^2."""

    dim: int
    n: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {self.dim}")
        if self.n < 2:
            raise ValueError(f"need at least two elements per axis, got {self.n}")

    @property
    def h(self):
        return 1.0 / self.n

    @cached_property
    def nodes(self):
        x = np.arange(self.n + 1) / self.n
        if self.dim == 1:
            return x[:, None]
        X, Y = np.meshgrid(x, x, indexing="ij")
        return np.column_stack([X.ravel(), Y.ravel()])

    def node_id(self, i, j):
        return i * (self.n + 1) + j

    @cached_property
    def elements(self):
        """Vertex indices per element, shape (E, dim + 1)."""
        n = self.n
        if self.dim == 1:
            k = np.arange(n)
            return np.column_stack([k, k + 1])
        i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        i, j = i.ravel(), j.ravel()
        v00, v10 = self.node_id(i, j), self.node_id(i + 1, j)
        v01, v11 = self.node_id(i, j + 1), self.node_id(i + 1, j + 1)
        lower = np.column_stack([v00, v10, v11])
        upper = np.column_stack([v00, v11, v01])
        return np.vstack([lower, upper])

    @cached_property
    def element_cell(self):
        """Index (i, j) of the square, or segment k, that contains each element."""
        n = self.n
        if self.dim == 1:
            return np.arange(n)[:, None]
        i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        ij = np.column_stack([i.ravel(), j.ravel()])
        return np.vstack([ij, ij])

    @cached_property
    def element_area(self):
        return np.full(len(self.elements), self.h if self.dim == 1 else 0.5 * self.h**2)

    @cached_property
    def interior(self):
        """Global indices of interior nodes, in increasing order."""
        x = self.nodes
        inside = np.all((x > 0.5 * self.h) & (x < 1 - 0.5 * self.h), axis=1)
        return np.flatnonzero(inside)

    @property
    def n_interior(self):
        return len(self.interior)

    def interior_points(self):
        return self.nodes[self.interior]


def _local_stiffness(mesh):
    """Unit-coefficient element stiffness matrices, shape (E, d+1, d+1)."""
    if mesh.dim == 1:
        k = np.array([[1.0, -1.0], [-1.0, 1.0]]) / mesh.h
        return np.broadcast_to(k, (len(mesh.elements), 2, 2))
    P = mesh.nodes[mesh.elements]  # (E, 3, 2)
    B = np.stack([P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]], axis=2)  # columns are edge vectors
    Binv = np.linalg.inv(B)
    ref = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])  # reference gradients
    G = ref @ Binv  # (E, 3, 2): gradients of the hat functions
    area = 0.5 * np.abs(np.linalg.det(B))
    return area[:, None, None] * G @ G.transpose(0, 2, 1)


def element_values(sigma: PiecewiseFn, mesh: Mesh) -> np.ndarray:
    """Coefficient value on each element; the coefficient grid must coarsen the mesh."""
    target = Grid1D(mesh.n) if mesh.dim == 1 else Grid2D(mesh.n, mesh.n)
    if _refinement_factor(sigma.grid, target) is None:
        raise AlignmentError(f"coefficient grid {sigma.grid} does not refine to the {mesh.dim}D mesh with n={mesh.n}")
    fine = sigma.on_grid(target).values
    cells = mesh.element_cell
    return fine[cells[:, 0]] if mesh.dim == 1 else fine[cells[:, 0], cells[:, 1]]


def _assemble(mesh, elem_coeff):
    local = _local_stiffness(mesh) * np.asarray(elem_coeff)[:, None, None]
    el = mesh.elements
    rows = np.repeat(el, el.shape[1], axis=1).ravel()
    cols = np.tile(el, (1, el.shape[1])).ravel()
    N = len(mesh.nodes)
    K = sp.csr_matrix((local.ravel(), (rows, cols)), shape=(N, N))
    idx = mesh.interior
    K = K[idx][:, idx].tocsc()
    K.sum_duplicates()
    return K


class _Factorized:
    def __init__(self, K):
        self.K = K
        self._lu = spla.splu(K)

    def __call__(self, rhs):
        return self._lu.solve(np.asarray(rhs, dtype=float))


@dataclass(eq=False)
class DiscreteOperator:
    """Stiffness of ``-div(sigma grad .)`` on interior nodes, with the Laplacian as Riesz map."""

    mesh: Mesh
    stiffness: sp.csc_matrix
    riesz: sp.csc_matrix
    coefficient: PiecewiseFn | None = None
    _solvers: dict = field(default_factory=dict, repr=False)

    def solve(self, rhs):
        """Apply the discrete resolvent ``A_sigma^{-1}``."""
        if "stiffness" not in self._solvers:
            self._solvers["stiffness"] = _Factorized(self.stiffness)
        return self._solvers["stiffness"](rhs)

    def riesz_solve(self, rhs):
        if "riesz" not in self._solvers:
            self._solvers["riesz"] = _Factorized(self.riesz)
        return self._solvers["riesz"](rhs)

    def is_positive_definite(self):
        try:
            np.linalg.cholesky(self.stiffness.toarray())
        except np.linalg.LinAlgError:
            return False
        return True


def laplacian(mesh: Mesh) -> sp.csc_matrix:
    return _assemble(mesh, np.ones(len(mesh.elements)))


def assemble(sigma: PiecewiseFn, mesh: Mesh, riesz=None) -> DiscreteOperator:
    """Exact P1 stiffness for a coefficient constant on each element.

    Raises
    ------
    AlignmentError
        If the coefficient grid does not refine to the mesh elements.
    """
    coeff = element_values(sigma, mesh)
    K = _assemble(mesh, coeff)
    return DiscreteOperator(mesh, K, laplacian(mesh) if riesz is None else riesz, sigma)


# --------------------------------------------------------------------------
# power iteration


def _start_vector(n, seed=POWER_SEED):
    return SplitMix64(seed).normal(n)


def power_norm(apply, n, inner=None, adjoint=None, tol=POWER_TOL, max_iter=POWER_MAX_ITER, seed=POWER_SEED):
    """Operator norm by power iteration.

    ``apply`` must be self-adjoint for ``inner`` unless ``adjoint`` is given,
    in which case the iteration runs on ``adjoint(apply(.))`` and the square
    root is returned. Converged when successive estimates of the norm differ
    by less than ``tol`` relative.

    Raises
    ------
    NoConvergence
        After ``max_iter`` iterations; carries the last estimate.
    """
    if inner is None:
        inner = np.dot
    op = apply if adjoint is None else (lambda v: adjoint(apply(v)))
    x = _start_vector(n, seed)
    x = x / np.sqrt(inner(x, x))
    prev = None
    est = 0.0
    for it in range(1, max_iter + 1):
        y = op(x)
        ny = np.sqrt(max(inner(y, y), 0.0))
        if ny == 0.0:
            return 0.0
        est = ny
        if prev is not None and abs(est - prev) <= tol * est:
            return float(est if adjoint is None else np.sqrt(est))
        prev = est
        x = y / ny
    result = est if adjoint is None else np.sqrt(est)
    raise NoConvergence(f"power iteration did not converge in {max_iter} iterations", result, max_iter)


def riesz_opnorm(op_a: DiscreteOperator, op_b: DiscreteOperator, tol=POWER_TOL, max_iter=POWER_MAX_ITER) -> float:
    """Discrete ``||R_a - R_b||`` from H^{-1} to H^1_0.

    With ``f = K1 z`` the norm is the largest eigenvalue magnitude of
    ``z -> (A_a^{-1} - A_b^{-1}) K1 z``, which is self-adjoint in the ``K1``
    inner product.
    """
    if op_a.mesh is not op_b.mesh and (op_a.mesh.dim, op_a.mesh.n) != (op_b.mesh.dim, op_b.mesh.n):
        raise AlignmentError("operators live on different meshes")
    K1 = op_a.riesz

    def apply(z):
        w = K1 @ z
        return op_a.solve(w) - op_b.solve(w)

    return power_norm(apply, K1.shape[0], inner=lambda u, v: u @ (K1 @ v), tol=tol, max_iter=max_iter)


def coefficient_hash(*fns):
    """SHA-256 of the 17-digit cell values of the given coefficients."""
    h = hashlib.sha256()
    for f in fns:
        h.update(repr(f.grid.shape).encode())
        h.update(",".join(fmt(v) for v in f.flat).encode())
    return h.hexdigest()


def theorem1_check(sigma, sigma_t, mesh, bounds=None, upper_slack=1.1, lower_tol=1e-8):
    """Both sides of ``s0^2 d_R <= d_inf <= s1^2 d_R`` for one coefficient pair.

    ``d_inf`` is exact; ``d_R`` is the discrete operator distance. The
    lower inequality holds exactly for the Galerkin operators and is checked
    to ``lower_tol``; the upper one is compared with slack ``upper_slack``
    because the discrete distance is a supremum over a subspace.
    """
    if bounds is None:
        bounds = (min(sigma.bounds[0], sigma_t.bounds[0]), max(sigma.bounds[1], sigma_t.bounds[1]))
    s0, s1 = map(float, bounds)
    K1 = laplacian(mesh)
    op, op_t = assemble(sigma, mesh, K1), assemble(sigma_t, mesh, K1)
    d_inf = float(np.max(np.abs(element_values(sigma, mesh) - element_values(sigma_t, mesh))))
    d_R = riesz_opnorm(op, op_t)
    lower_ok = s0**2 * d_R <= d_inf * (1 + lower_tol) + 1e-300
    upper_ok = d_inf <= s1**2 * d_R * upper_slack + 1e-300
    return {
        "check": "theorem1",
        "dim": mesh.dim,
        "n": mesh.n,
        "inputs_sha256": coefficient_hash(sigma, sigma_t),
        "sigma_bounds": [s0, s1],
        "d_inf": d_inf,
        "d_R": d_R,
        "lower_ratio": s0**2 * d_R / d_inf if d_inf > 0 else None,
        "upper_ratio": d_inf / (s1**2 * d_R) if d_R > 0 else None,
        "upper_deficit": d_inf - s1**2 * d_R,
        "tolerances": {"lower": lower_tol, "upper_slack": upper_slack},
        "lower_pass": bool(lower_ok),
        "upper_pass": bool(upper_ok),
        "pass": bool(lower_ok and upper_ok),
    }


def refinement_study(sigma, sigma_t, dim, ns=(16, 32, 64), bounds=None):
    """Two-sided bound checks on a sequence of meshes; rows ``(h, d_R_h, deficit)``."""
    reports = [theorem1_check(sigma, sigma_t, Mesh(dim, n), bounds) for n in ns]
    rows = [(1.0 / r["n"], r["d_R"], r["upper_deficit"]) for r in reports]
    return rows, reports


def refinement_csv(rows, path=None):
    text = csv_text(["h", "d_R_h", "deficit"], rows)
    if path is not None:
        atomic_write(path, text)
    return text


def operator_identity_residual(sigma, sigma_t, mesh, vectors=20, seed=1):
    """Relative residual of ``A - A~ = A (R~ - R) A~`` applied to random vectors.

    Both sides are evaluated literally: the right side applies ``A~``, then
    the two resolvents, then ``A``.
    """
    K1 = laplacian(mesh)
    op, op_t = assemble(sigma, mesh, K1), assemble(sigma_t, mesh, K1)
    X = SplitMix64(seed).normal((op.stiffness.shape[0], vectors))
    lhs = op.stiffness @ X - op_t.stiffness @ X
    W = op_t.stiffness @ X
    rhs = op.stiffness @ (op_t.solve(W) - op.solve(W))
    scale = np.linalg.norm(op.stiffness @ X) + np.linalg.norm(op_t.stiffness @ X)
    return float(np.linalg.norm(lhs - rhs) / scale)


# --------------------------------------------------------------------------
# concentration probes


def lemma22_probe(x0, eps, mesh: Mesh, riesz=None) -> np.ndarray:
    """Interior nodal vector of the cone ``(eps - |x - x0|)_+`` with unit discrete H^1_0 norm.

    Its gradient has constant magnitude on the ball, so ``u^T A_sigma u``
    approximates the mean of sigma over ``B(x0, eps)``.

    Raises
    ------
    ProbeOutOfDomain
        If the ball leaves the domain.
    ProbeUnresolved
        If ``eps`` is below four mesh widths.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.shape != (mesh.dim,):
        raise ProbeOutOfDomain(f"probe centre {x0} does not match dimension {mesh.dim}")
    if np.any(x0 - eps < -1e-12) or np.any(x0 + eps > 1 + 1e-12):
        raise ProbeOutOfDomain(f"ball B({x0}, {eps}) is not inside the domain")
    if eps < 4 * mesh.h - 1e-12:
        raise ProbeUnresolved(f"eps={eps} is below four mesh widths ({4 * mesh.h})")
    K1 = laplacian(mesh) if riesz is None else riesz
    r = np.linalg.norm(mesh.interior_points() - x0, axis=1)
    u = np.maximum(eps - r, 0.0)
    return u / np.sqrt(u @ (K1 @ u))


def probe_energy(u, op: DiscreteOperator) -> float:
    return float(u @ (op.stiffness @ u))


# --------------------------------------------------------------------------
# density operators


@dataclass(eq=False)
class DensityOperator:
    """Discrete ``R_rho f``: solve ``-Laplace u = rho f`` with lumped-mass right-hand side."""

    mesh: Mesh
    riesz: sp.csc_matrix
    lumped_mass: np.ndarray
    _solver: _Factorized | None = field(default=None, repr=False)

    @classmethod
    def build(cls, mesh: Mesh):
        return cls(mesh, laplacian(mesh), lumped_mass(mesh))

    def riesz_solve(self, rhs):
        if self._solver is None:
            self._solver = _Factorized(self.riesz)
        return self._solver(rhs)

    def apply_R(self, f):
        """``R f = K1^{-1} M f``."""
        return self.riesz_solve(self.lumped_mass * f)

    def apply_A(self, u):
        """``A u = M^{-1} K1 u`` (discrete minus Laplacian, inverse of R)."""
        return (self.riesz @ u) / self.lumped_mass

    def inner(self, u, v):
        return float(np.sum(self.lumped_mass * u * v))


def lumped_mass(mesh: Mesh) -> np.ndarray:
    """Row sums of the P1 mass matrix on interior nodes."""
    w = np.zeros(len(mesh.nodes))
    share = mesh.element_area / (mesh.dim + 1)
    for v in range(mesh.dim + 1):
        np.add.at(w, mesh.elements[:, v], share)
    return w[mesh.interior]


def density_load(mesh: Mesh, rho, f):
    """Element-by-element vertex-quadrature load for ``int rho f v`` (independent of the mass vector)."""
    full_rho = np.zeros(len(mesh.nodes))
    full_f = np.zeros(len(mesh.nodes))
    full_rho[mesh.interior] = rho
    full_f[mesh.interior] = f
    load = np.zeros(len(mesh.nodes))
    share = mesh.element_area / (mesh.dim + 1)
    for v in range(mesh.dim + 1):
        nodes = mesh.elements[:, v]
        np.add.at(load, nodes, share * full_rho[nodes] * full_f[nodes])
    return load[mesh.interior]


def density_apply(dop: DensityOperator, rho, f) -> np.ndarray:
    """Discrete ``R_rho f = R (M_rho f)``."""
    rho = np.asarray(rho, dtype=float)
    f = np.asarray(f, dtype=float)
    if rho.shape != f.shape or rho.shape != dop.lumped_mass.shape:
        raise ValueError(f"shape mismatch: rho {rho.shape}, f {f.shape}, mesh {dop.lumped_mass.shape}")
    return dop.apply_R(rho * f)


def multiplier_norm(rho) -> float:
    """``||M_rho||`` on lumped L^2, which is exactly ``max |rho_i|``."""
    rho = np.asarray(rho, dtype=float)
    return float(np.max(np.abs(rho))) if rho.size else 0.0


def density_norms(dop: DensityOperator, rho):
    """Power-iteration norms of ``R``, ``A`` and ``R_rho`` on lumped L^2."""
    n = len(dop.lumped_mass)
    rho = np.asarray(rho, dtype=float)
    norm_R = power_norm(dop.apply_R, n, inner=dop.inner)
    norm_A = power_norm(dop.apply_A, n, inner=dop.inner)
    norm_Rrho = power_norm(lambda v: dop.apply_R(rho * v), n, inner=dop.inner, adjoint=lambda v: rho * dop.apply_R(v))
    return norm_R, norm_A, norm_Rrho


def density_identity_check(rho, mesh: Mesh, vectors=20, seed=1, tol=1e-12, dop=None):
    """``R_rho f = R (M_rho f)`` on random ``f``, and exactness of ``||M_rho||``.

    The left side solves with a load assembled element by element
    (:func:`density_load`); the right side multiplies first and applies
    ``R``. The multiplier norm is checked against the Rayleigh quotient at
    the unit vector of the largest ``|rho_i|``, which attains it.
    """
    dop = DensityOperator.build(mesh) if dop is None else dop
    rho = np.asarray(rho, dtype=float)
    F = SplitMix64(seed).normal((vectors, len(rho)))
    worst = 0.0
    for f in F:
        lhs = dop.riesz_solve(density_load(mesh, rho, f))
        rhs = density_apply(dop, rho, f)
        worst = max(worst, float(np.linalg.norm(lhs - rhs) / np.linalg.norm(rhs)))
    k = int(np.argmax(np.abs(rho)))
    e = np.zeros(len(rho))
    e[k] = 1.0
    attained = np.sqrt(dop.inner(rho * e, rho * e) / dop.inner(e, e))
    mnorm = multiplier_norm(rho)
    mult_ok = abs(attained - mnorm) <= 1e-15 * mnorm and np.all(np.abs(rho) <= mnorm)
    ok = worst <= tol and mult_ok
    return {
        "check": "density-identity",
        "dim": mesh.dim,
        "n": mesh.n,
        "vectors": vectors,
        "max_relative_residual": worst,
        "tolerance": tol,
        "multiplier_norm": mnorm,
        "multiplier_attained": float(attained),
        "identity_pass": bool(worst <= tol),
        "multiplier_pass": bool(mult_ok),
        "pass": bool(ok),
    }


def density_sandwich_check(rho, mesh: Mesh, tol=1e-8, dop=None):
    """``||R||^{-1} ||R_rho|| <= ||rho||_inf <= ||A|| ||R_rho||`` with power-iteration norms."""
    dop = DensityOperator.build(mesh) if dop is None else dop
    rho = np.asarray(rho, dtype=float)
    norm_R, norm_A, norm_Rrho = density_norms(dop, rho)
    rho_inf = multiplier_norm(rho)
    lower = norm_Rrho / norm_R
    upper = norm_A * norm_Rrho
    lower_ok = lower <= rho_inf * (1 + tol)
    upper_ok = rho_inf <= upper * (1 + tol)
    return {
        "check": "density",
        "dim": mesh.dim,
        "n": mesh.n,
        "inputs_sha256": hashlib.sha256(",".join(fmt(v) for v in rho).encode()).hexdigest(),
        "norm_R": norm_R,
        "norm_A": norm_A,
        "norm_R_rho": norm_Rrho,
        "rho_inf": rho_inf,
        "lower_side": lower,
        "upper_side": upper,
        "tolerance": tol,
        "lower_pass": bool(lower_ok),
        "upper_pass": bool(upper_ok),
        "pass": bool(lower_ok and upper_ok),
    }


def density_surrogate_check(rho_t, basis, mesh: Mesh, samples=5, seed=3, tol=1e-8, dop=None):
    """Compare the operator distance of ``R_rho_t`` to ``span R_rho_i`` with the L-infinity surrogate.

    ``t = dist_inf(rho_t, span rho_i)`` comes from the minimax solver at
    coefficients ``a``. The operator norm ``D(a) = ||R M_{rho_t - sum a_i rho_i}||``
    must satisfy ``D(a) <= ||R|| t`` at the minimax optimum, which bounds the
    operator distance from above, and ``D(a') >= t / ||A||`` at every ``a'``,
    which is checked at the optimum and at random perturbations of it.
    """
    from . import minimax

    dop = DensityOperator.build(mesh) if dop is None else dop
    n = len(dop.lumped_mass)
    B = np.column_stack([np.asarray(r, dtype=float) for r in basis])
    rho_t = np.asarray(rho_t, dtype=float)
    sol = minimax.solve(minimax.MinimaxProblem(B, rho_t))
    t = sol.deviation
    norm_R = power_norm(dop.apply_R, n, inner=dop.inner)
    norm_A = power_norm(dop.apply_A, n, inner=dop.inner)

    def op_distance(a):
        w = rho_t - B @ a
        return power_norm(lambda v: dop.apply_R(w * v), n, inner=dop.inner, adjoint=lambda v: w * dop.apply_R(v))

    d_opt = op_distance(sol.coeffs)
    rng = SplitMix64(seed)
    others = [op_distance(sol.coeffs + rng.uniform(-1, 1, B.shape[1])) for _ in range(samples)]
    upper_ok = d_opt <= norm_R * t * (1 + tol) + 1e-300
    lower_ok = all(d >= t / norm_A * (1 - tol) for d in [d_opt] + others)
    return {
        "check": "density-surrogate",
        "linf_distance": t,
        "coeffs": list(map(float, sol.coeffs)),
        "operator_distance_at_optimum": d_opt,
        "norm_R": norm_R,
        "norm_A": norm_A,
        "upper_pass": bool(upper_ok),
        "lower_pass": bool(lower_ok),
        "pass": bool(upper_ok and lower_ok),
    }


def nodal_values(fn: PiecewiseFn, mesh: Mesh) -> np.ndarray:
    """Interior nodal values of a piecewise-constant function: mean over the elements sharing each node."""
    ev = element_values(fn, mesh)
    total = np.zeros(len(mesh.nodes))
    count = np.zeros(len(mesh.nodes))
    for v in range(mesh.dim + 1):
        np.add.at(total, mesh.elements[:, v], ev)
        np.add.at(count, mesh.elements[:, v], 1)
    return (total / count)[mesh.interior]
