import numpy as np
import pytest

from resolvgreedy.coeff_space import Grid1D, Grid2D, PiecewiseFn, linf_norm, reciprocal
from resolvgreedy.errors import DegenerateProbe, EmptyBasis, GridMismatch, ProbeOutOfDomain, ProbeUnresolved
from resolvgreedy.resolvent1d import (
    Solution1D,
    apply_resolvent,
    apply_Tm,
    concentration_probe,
    empirical_star_norm,
    primitive,
    probe_suite,
    resolvent_distance_star,
    span_distance_star,
    star_norm,
    tm_operator_norm,
    wm11_norm,
)
from resolvgreedy.rng import SplitMix64


def pw(*vals):
    return PiecewiseFn(Grid1D(len(vals)), np.array(vals, dtype=float))


def const(c, cells=4):
    return PiecewiseFn.constant(Grid1D(cells), c)


def quad_solution(sigma, f, x, n=200_000):
    """Midpoint-rule oracle for v(x) = int_x^1 (1/sigma) int_0^t f ds dt."""
    t = (np.arange(n) + 0.5) / n
    k = np.minimum((t * f.grid.cells).astype(int), f.grid.cells - 1)
    F = np.cumsum(f.values[k]) / n - 0.5 * f.values[k] / n  # primitive at midpoints
    integrand = F / sigma.values[k]
    tail = np.concatenate([np.cumsum(integrand[::-1])[::-1] / n, [0.0]])
    idx = np.minimum(np.round(np.asarray(x) * n).astype(int), n)
    return tail[idx]


# -- apply_resolvent ------------------------------------------------------------


def test_constant_coefficient_closed_form():
    for c in (1.0, 2.0):
        sol = apply_resolvent(const(c, 8), const(1.0, 8))
        x = np.linspace(0, 1, 33)
        np.testing.assert_allclose(sol(x), (1 - x**2) / (2 * c), atol=1e-15)
    assert apply_resolvent(const(1, 8), const(1, 8)).v[0] == pytest.approx(0.5, abs=1e-15)


def test_two_block_value_at_zero_matches_quadrature():
    sigma, f = pw(1, 2), pw(1, 1)
    oracle = quad_solution(sigma, f, 0.0)
    assert abs(oracle - 5 / 16) < 1e-9
    assert apply_resolvent(sigma, f).v[0] == pytest.approx(5 / 16, abs=1e-15)


def test_random_solution_matches_quadrature():
    rng = SplitMix64(21)
    sigma = PiecewiseFn(Grid1D(10), rng.uniform(0.5, 2, 10))
    f = PiecewiseFn(Grid1D(10), rng.uniform(-1, 1, 10))
    x = np.array([0.0, 0.1, 0.33, 0.5, 0.77, 1.0])
    np.testing.assert_allclose(apply_resolvent(sigma, f)(x), quad_solution(sigma, f, x), atol=1e-9)


def test_boundary_conditions_and_flux():
    rng = SplitMix64(5)
    for _ in range(20):
        M = int(rng.integers(1, 40))
        sigma = PiecewiseFn(Grid1D(M), rng.uniform(0.5, 2, M))
        f = PiecewiseFn(Grid1D(M), rng.uniform(-2, 2, M))
        sol = apply_resolvent(sigma, f)
        F = primitive(f)
        assert sol.v[-1] == 0.0
        assert sol.vx_left[0] == 0.0
        # sigma v_x = -F at both ends of every cell
        np.testing.assert_allclose(sigma.values * sol.vx_left, -F[:-1], atol=1e-14)
        np.testing.assert_allclose(sigma.values * sol.vx_right, -F[1:], atol=1e-14)
        # v continuous: each cell's quadratic reaches the next nodal value
        np.testing.assert_allclose(sol.v[:-1] + 0.5 * sol.grid.h * (sol.vx_left + sol.vx_right), sol.v[1:], atol=1e-14)


def test_variational_residual():
    rng = SplitMix64(6)
    for _ in range(20):
        M = int(rng.integers(2, 30))
        h = 1.0 / M
        sigma = PiecewiseFn(Grid1D(M), rng.uniform(0.5, 2, M))
        f = PiecewiseFn(Grid1D(M), rng.uniform(-2, 2, M))
        sol = apply_resolvent(sigma, f)
        w = np.append(rng.normal(M), 0.0)  # piecewise-linear test function, w(1) = 0
        wx = np.diff(w) / h
        lhs = np.sum(sigma.values * wx * h * 0.5 * (sol.vx_left + sol.vx_right))
        rhs = np.sum(f.values * h * 0.5 * (w[:-1] + w[1:]))
        assert abs(lhs - rhs) <= 1e-13 * max(1.0, abs(rhs))


def test_grid_mismatch():
    with pytest.raises(GridMismatch):
        apply_resolvent(const(1, 4), const(1, 5))
    with pytest.raises(GridMismatch):
        apply_resolvent(PiecewiseFn.constant(Grid2D(2, 2), 1), PiecewiseFn.constant(Grid2D(2, 2), 1))


def test_solution_linear_combination():
    rng = SplitMix64(7)
    f = PiecewiseFn(Grid1D(6), rng.uniform(-1, 1, 6))
    s1 = PiecewiseFn(Grid1D(6), rng.uniform(0.5, 2, 6))
    s2 = PiecewiseFn(Grid1D(6), rng.uniform(0.5, 2, 6))
    a, b = apply_resolvent(s1, f), apply_resolvent(s2, f)
    c = Solution1D.combine([2.0, -0.5], [a, b])
    x = np.linspace(0, 1, 13)
    np.testing.assert_allclose(c(x), 2 * a(x) - 0.5 * b(x), atol=1e-15)
    np.testing.assert_allclose((a - b)(x), a(x) - b(x), atol=1e-15)


def test_solution_csv(tmp_path):
    sol = apply_resolvent(const(1, 4), const(1, 4))
    text = sol.to_csv(tmp_path / "s.csv")
    lines = text.splitlines()
    assert lines[0] == "x,v,v_x"
    assert len(lines) == 1 + 4 + 2
    x, v, vx = map(float, lines[2].split(","))
    assert (x, v, vx) == (0.125, (1 - 0.125**2) / 2, -0.125)


# -- T_m and norms --------------------------------------------------------------


def test_apply_Tm_examples():
    x = np.linspace(0, 1, 9)
    np.testing.assert_allclose(apply_Tm(const(1, 4), const(1, 4))(x), x, atol=1e-15)
    np.testing.assert_array_equal(apply_Tm(const(0, 4), const(1, 4))(x), 0)
    half = apply_Tm(pw(1, 0.5), pw(1, 1))
    np.testing.assert_allclose(half(np.array([0.25, 0.49, 0.5, 0.75, 1.0])), [0.25, 0.49, 0.25, 0.375, 0.5])


def test_apply_Tm_equals_minus_derivative():
    rng = SplitMix64(8)
    sigma = PiecewiseFn(Grid1D(9), rng.uniform(0.5, 2, 9))
    f = PiecewiseFn(Grid1D(9), rng.uniform(-1, 1, 9))
    t = apply_Tm(reciprocal(sigma), f)
    d = apply_resolvent(sigma, f).derivative
    np.testing.assert_allclose(t.left, -d.left, atol=1e-15)
    np.testing.assert_allclose(t.right, -d.right, atol=1e-15)


def test_wm11_examples():
    assert wm11_norm(const(1, 4)) == pytest.approx(0.5, abs=1e-15)
    assert wm11_norm(const(0, 4)) == 0
    # tent of height 1/2: midpoint-rule oracle of int |F|
    x = (np.arange(100_000) + 0.5) / 100_000
    assert abs(np.mean(np.minimum(x, 1 - x)) - 0.25) < 1e-9
    assert wm11_norm(pw(1, -1)) == pytest.approx(0.25, abs=1e-15)


def test_wm11_sign_change_inside_cell():
    # F goes 0 -> 1 -> -1 over two cells: second cell crosses zero at its midpoint
    f = pw(2, -4)
    x = (np.arange(200_000) + 0.5) / 200_000
    F = np.where(x < 0.5, 2 * x, 1 - 4 * (x - 0.5))
    assert wm11_norm(f) == pytest.approx(np.mean(np.abs(F)), abs=1e-9)


def test_tm_norm_examples():
    assert tm_operator_norm(const(2.5)) == 2.5
    assert tm_operator_norm(pw(1, 3)) == 3
    assert tm_operator_norm(reciprocal(pw(1, 2))) == 1
    assert star_norm(pw(1, 2)) == 1


def test_resolvent_distance_examples():
    assert resolvent_distance_star(const(1), const(2)) == 0.5
    assert resolvent_distance_star(pw(1, 2), pw(1, 2)) == 0
    assert resolvent_distance_star(pw(1, 2), pw(2, 1)) == 0.5


def test_resolvent_distance_sandwich_and_symmetry():
    rng = SplitMix64(9)
    g = Grid1D(12)
    for _ in range(100):
        s = PiecewiseFn(g, rng.uniform(0.5, 2, 12))
        t = PiecewiseFn(g, rng.uniform(0.5, 2, 12))
        d = resolvent_distance_star(s, t)
        assert d == resolvent_distance_star(t, s)
        diff = linf_norm(s - t)
        assert diff / 4 <= d * (1 + 1e-12)
        assert d <= diff * 4 * (1 + 1e-12)


# -- span distance ----------------------------------------------------------------


def test_span_distance_examples():
    t, a = span_distance_star(const(1, 2), [const(1, 2)])
    assert t == pytest.approx(0, abs=1e-15) and a[0] == pytest.approx(1)
    # oracle: dense grid search over a
    grid_a = np.arange(-2, 2 + 1e-12, 1e-4)
    dev = np.maximum(np.abs(grid_a - 1), np.abs(2 * grid_a - 1))
    assert abs(dev.min() - 1 / 3) < 1e-4 and abs(grid_a[dev.argmin()] - 2 / 3) < 1e-4
    t, a = span_distance_star(const(1, 2), [pw(1, 0.5)])
    assert t == pytest.approx(1 / 3, abs=1e-12) and a[0] == pytest.approx(2 / 3, abs=1e-12)
    with pytest.raises(EmptyBasis):
        span_distance_star(const(1, 2), [])


def test_span_distance_with_target_in_basis_is_zero():
    rng = SplitMix64(10)
    g = Grid1D(16)
    for _ in range(20):
        tau = PiecewiseFn(g, rng.uniform(0.5, 2, 16))
        basis = [PiecewiseFn(g, rng.uniform(0.5, 2, 16)) for _ in range(3)]
        t, _ = span_distance_star(tau, basis + [tau])
        assert t <= 1e-12


def test_distinv_identity():
    rng = SplitMix64(11)
    g = Grid1D(20)
    for _ in range(20):
        tau = PiecewiseFn(g, rng.uniform(0.5, 2, 20))
        basis = [PiecewiseFn(g, rng.uniform(0.5, 2, 20)) for _ in range(3)]
        f = PiecewiseFn(g, rng.uniform(-1, 1, 20))
        a = rng.uniform(-1, 1, 3)
        diff = apply_resolvent(tau, f) - Solution1D.combine(list(a), [apply_resolvent(s, f) for s in basis])
        w = sum(c / s.values for c, s in zip(a, basis)) - 1 / tau.values
        F = primitive(f)
        np.testing.assert_allclose(diff.vx_left, w * F[:-1], atol=1e-14)
        np.testing.assert_allclose(diff.vx_right, w * F[1:], atol=1e-14)


# -- probes ------------------------------------------------------------------------


def test_probe_unit_mass():
    p = concentration_probe(0.5, 0.25, Grid1D(8))
    assert wm11_norm(p) == pytest.approx(1, abs=1e-12)
    F = primitive(p)
    np.testing.assert_allclose(F, [0, 0, 0, 2, 4, 2, 0, 0, 0], atol=1e-14)


def test_probe_errors():
    with pytest.raises(ProbeUnresolved):
        concentration_probe(0.5, 0.1, Grid1D(10))
    with pytest.raises(ProbeUnresolved):
        concentration_probe(0.55, 0.25, Grid1D(8))
    with pytest.raises(ProbeOutOfDomain):
        concentration_probe(0.1, 0.25, Grid1D(8))


def test_probe_in_single_cell_is_exact():
    m = pw(1, 3)
    probes = probe_suite(m.grid)
    ratios = [apply_Tm(m, p).l1_norm() / wm11_norm(p) for p in probes]
    assert ratios == [pytest.approx(1, abs=1e-14), pytest.approx(3, abs=1e-14)]
    assert empirical_star_norm(m, probes) == pytest.approx(3, abs=1e-14)
    assert empirical_star_norm(const(1, 4), probe_suite(Grid1D(4))) == pytest.approx(1, abs=1e-14)


def test_empirical_norm_errors():
    with pytest.raises(DegenerateProbe):
        empirical_star_norm(const(1), [])
    with pytest.raises(DegenerateProbe):
        empirical_star_norm(const(1), [const(0)])


def test_empirical_never_exceeds_exact():
    rng = SplitMix64(12)
    M = 16
    m = PiecewiseFn(Grid1D(M), rng.uniform(-2, 2, M))
    fine = Grid1D(4 * M)
    probes = []
    for _ in range(200):
        half = int(rng.integers(2, 12))
        centre = int(rng.integers(half, 4 * M - half + 1))
        probes.append(concentration_probe(centre / (4 * M), half / (4 * M), fine))
    assert empirical_star_norm(m, probes) <= tm_operator_norm(m) * (1 + 1e-14)
    # random (non-probe) sources too
    for _ in range(50):
        f = PiecewiseFn(fine, rng.normal(4 * M))
        if wm11_norm(f) > 0:
            assert apply_Tm(m, f).l1_norm() / wm11_norm(f) <= tm_operator_norm(m) * (1 + 1e-12)
