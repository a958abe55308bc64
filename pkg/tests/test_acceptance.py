"""Acceptance suite: one test per criterion, all data from seeded SplitMix64 streams.

Each criterion prints a PASS/FAIL line in the pytest terminal summary
(see ``conftest.py``).
"""

import json
import time

import numpy as np
import pytest

from conftest import criterion
from resolvgreedy import cli
from resolvgreedy.coeff_space import Grid1D, Grid2D, PiecewiseFn, affine_density_family, affine_reciprocal_family, linf_norm
from resolvgreedy.greedy import GreedyConfig, greedy_run, online_approximate, online_error_profile
from resolvgreedy.minimax import MinimaxProblem, brute_force, solve
from resolvgreedy.resolvent1d import (
    apply_resolvent,
    empirical_star_norm,
    primitive,
    probe_suite,
    resolvent_distance_star,
    tm_operator_norm,
)
from resolvgreedy.rng import SplitMix64
from resolvgreedy.stability_lab import (
    DensityOperator,
    Mesh,
    assemble,
    density_identity_check,
    density_sandwich_check,
    multiplier_norm,
    operator_identity_residual,
    riesz_opnorm,
    theorem1_check,
)


def test_01_star_norm_identity():
    with criterion(1, "T_m norm identity over the probe suite") as notes:
        rng = SplitMix64(101)
        grid = Grid1D(64)
        start = time.perf_counter()
        probes = probe_suite(grid)
        ratios = []
        for _ in range(50):
            m = PiecewiseFn(grid, rng.uniform(0.5, 2.0, 64))
            ratios.append(empirical_star_norm(m, probes) / tm_operator_norm(m))
        elapsed = time.perf_counter() - start
        notes.append(f"ratio range [{min(ratios):.15f}, {max(ratios):.15f}]")
        assert all(0.99 <= r <= 1.0 for r in ratios)
        assert elapsed < 5.0


def test_02_identitynorms_sandwich():
    with criterion(2, "resolvent distance sandwich") as notes:
        rng = SplitMix64(102)
        s0, s1 = 0.5, 2.0
        worst = 0.0
        for _ in range(100):
            M = int(rng.integers(1, 65))
            g = Grid1D(M)
            s = PiecewiseFn(g, rng.uniform(s0, s1, M))
            t = PiecewiseFn(g, rng.uniform(s0, s1, M))
            d = linf_norm(s - t)
            dr = resolvent_distance_star(s, t)
            assert d / s1**2 <= dr + 1e-12
            assert dr <= d / s0**2 + 1e-12
            worst = max(worst, d / s1**2 - dr, dr - d / s0**2)
        notes.append(f"largest violation {worst:.3e}")


def test_03_minimax_oracle():
    with criterion(3, "minimax solver vs brute-force oracle") as notes:
        rng = SplitMix64(103)
        worst = 0.0
        for _ in range(200):
            n = int(rng.integers(1, 4))
            m = int(rng.integers(n + 1, 33))
            A = rng.uniform(-1, 1, (m, n))
            b = A @ rng.uniform(-2, 2, n) + rng.uniform(-0.5, 0.5, m)
            p = MinimaxProblem(A, b)
            gap = abs(solve(p).t - brute_force(p, box=4.0, step=1e-3).t)
            bound = 1e-3 * (1 + np.abs(A).sum(axis=1).max())
            worst = max(worst, gap / bound)
            assert gap <= bound
        sol = solve(MinimaxProblem([[1.0], [2.0]], [1.0, 1.0]))
        assert abs(sol.t - 1 / 3) <= 1e-9 and abs(sol.a[0] - 2 / 3) <= 1e-9
        notes.append(f"largest gap / bound {worst:.3f}")


@pytest.mark.parametrize("d", [1, 2, 3, 5])
def test_04_greedy_exact_recovery(d):
    with criterion(4, "greedy exact recovery for affine families") as notes:
        rng = SplitMix64(104 + d)
        modes = rng.uniform(-0.25, 0.25, (d, 128)) / d
        params = rng.uniform(-1, 1, (200, d))
        fam = affine_reciprocal_family(Grid1D(128), 1.5, list(modes), params)
        start = time.perf_counter()
        res = greedy_run(fam)
        elapsed = time.perf_counter() - start
        assert res.n <= d + 1
        assert res.decay[-1] <= 1e-10
        assert all(b <= a for a, b in zip(res.decay, res.decay[1:]))
        assert elapsed < 30.0
        notes.append(f"d={d}: {res.n} snapshots, decay {res.decay[-1]:.1e}, {elapsed:.2f} s")


def test_05_greedy_trace():
    with criterion(5, "hand-derived greedy trace") as notes:
        fam = affine_reciprocal_family(Grid1D(2), 1.0, [[1.0, 0.0]], [[0.0], [0.5], [1.0]])
        res = greedy_run(fam)
        assert [tuple(mu) for mu in res.snapshots] == [(1.0,), (0.0,)]
        assert len(res.decay) == 3
        assert np.all(np.abs(np.array(res.decay) - [2, 1 / 3, 0]) <= 1e-12)
        notes.append(f"decay {res.decay}")


def test_06_constant_scaling():
    with criterion(6, "constant-coefficient operator distance") as notes:
        worst = 0.0
        for dim in (1, 2):
            for n in (8, 16, 32):
                mesh = Mesh(dim, n)
                one = PiecewiseFn.constant(Grid1D(1) if dim == 1 else Grid2D(1, 1), 1.0)
                d = riesz_opnorm(assemble(one, mesh), assemble(2 * one, mesh))
                worst = max(worst, abs(d - 0.5))
                assert abs(d - 0.5) <= 1e-8
        notes.append(f"largest error {worst:.1e}")


def test_07_block_theorem_check():
    with criterion(7, "two-sided bound for block coefficients") as notes:
        rng = SplitMix64(107)
        g = Grid2D(2, 2)
        s0, s1 = 1.0, 2.0
        start = time.perf_counter()
        for _ in range(5):
            s = PiecewiseFn(g, rng.uniform(1, 2, (2, 2)))
            t = PiecewiseFn(g, rng.uniform(1, 2, (2, 2)))
            reports = [theorem1_check(s, t, Mesh(2, n), (s0, s1)) for n in (16, 32, 64)]
            fine = reports[-1]
            assert s0**2 * fine["d_R"] <= fine["d_inf"] * (1 + 1e-8)
            assert fine["d_inf"] <= s1**2 * fine["d_R"] * 1.1
            deficits = [r["upper_deficit"] for r in reports]
            # d_R^h is mesh-independent here; allow the power-iteration resolution
            noise = 1e-9 * s1**2 * max(r["d_R"] for r in reports)
            assert all(b <= a + noise for a, b in zip(deficits, deficits[1:]))
            notes.append(f"deficits {['%.12f' % x for x in deficits]}")
        elapsed = time.perf_counter() - start
        assert elapsed < 60.0
        notes.insert(0, f"{elapsed:.2f} s")


def test_08_operator_identity():
    with criterion(8, "operator identity residual") as notes:
        rng = SplitMix64(108)
        mesh = Mesh(2, 32)
        g = Grid2D(4, 4)
        worst = 0.0
        for _ in range(10):
            s = PiecewiseFn(g, rng.uniform(0.5, 2, (4, 4)))
            t = PiecewiseFn(g, rng.uniform(0.5, 2, (4, 4)))
            r = operator_identity_residual(s, t, mesh, vectors=20, seed=int(rng.next_u64()))
            worst = max(worst, r)
            assert r <= 1e-10
        notes.append(f"largest residual {worst:.2e}")


def test_09_density_identities():
    with criterion(9, "density identities and density greedy") as notes:
        rng = SplitMix64(109)
        mesh = Mesh(2, 16)
        dop = DensityOperator.build(mesh)
        n = mesh.n_interior
        worst = 0.0
        for _ in range(20):
            rho = rng.uniform(0.5, 2, n)
            ident = density_identity_check(rho, mesh, vectors=20, seed=int(rng.next_u64()), tol=1e-12, dop=dop)
            assert ident["pass"]
            assert multiplier_norm(rho) == np.max(np.abs(rho))
            assert density_sandwich_check(rho, mesh, dop=dop)["pass"]
            worst = max(worst, ident["max_relative_residual"])
        d = 3
        modes = rng.uniform(-0.3, 0.3, (d, 8, 8))
        fam = affine_density_family(Grid2D(8, 8), 1.0, list(modes), rng.uniform(-1, 1, (100, d)))
        res = greedy_run(fam)
        assert res.n <= d + 1 and res.decay[-1] <= 1e-10
        notes.append(f"identity residual {worst:.1e}; density greedy {res.n} snapshots")


def test_10_online_phase():
    with criterion(10, "online error identity and bound") as notes:
        rng = SplitMix64(110)
        M = 64
        modes = rng.uniform(-0.2, 0.2, (5, M))
        fam = affine_reciprocal_family(Grid1D(M), 1.5, list(modes), rng.uniform(-1, 1, (100, 5)))
        basis = greedy_run(fam, GreedyConfig(n_max=3))
        assert basis.n == 3
        worst = 0.0
        for _ in range(20):
            tau = PiecewiseFn(Grid1D(M), rng.uniform(0.5, 2, M))
            f = PiecewiseFn(Grid1D(M), rng.uniform(-1, 1, M))
            out = online_approximate(basis, tau, f)
            err = (out.approx - apply_resolvent(tau, f)).derivative
            w, F = online_error_profile(basis, tau, f, out.coeffs)
            gap = max(np.max(np.abs(np.abs(err.left) - np.abs(w * F[:-1]))), np.max(np.abs(np.abs(err.right) - np.abs(w * F[1:]))))
            worst = max(worst, gap)
            assert gap <= 1e-10
            assert err.linf_norm() <= out.surrogate_err * np.max(np.abs(primitive(f))) * (1 + 1e-12)
        notes.append(f"largest identity gap {worst:.1e}")


def test_11_cli_determinism(tmp_path):
    with criterion(11, "byte-identical CLI reruns") as notes:
        family = {
            "generator": "affine_reciprocal",
            "cells": 32,
            "base": 1.5,
            "modes": [{"indicator": [0, 0.3]}, {"indicator": [0.3, 0.7]}, [0.1] * 16 + [-0.1] * 16],
            "parameters": {"random": {"count": 60, "low": [-0.5, -0.5, -1], "high": [0.5, 0.5, 1]}},
        }
        runs = {
            "greedy": ({"family": family, "seed": 11}, ["greedy"]),
            "density-greedy": (
                {"family": {**family, "generator": "affine_density", "base": 2.0}, "seed": 12},
                ["density-greedy"],
            ),
            "theorem1": ({"theorem1": {"random_pairs": {"count": 2}, "n": [8, 16]}, "seed": 13}, ["verify", "theorem1"]),
            "norm-identity": ({"norm-identity": {"random": {"count": 5, "cells": 16}}, "seed": 14}, ["verify", "norm-identity"]),
            "surrogate": ({"surrogate": {"count": 3, "cells": 16}, "seed": 15}, ["verify", "surrogate"]),
            "density": ({"density": {"random": {"count": 2}, "n": 8}, "seed": 16}, ["verify", "density"]),
            "operator-identity": ({"operator-identity": {"random_pairs": {"count": 2}, "n": 8}, "seed": 17}, ["verify", "operator-identity"]),
        }
        compared = 0
        for name, (cfg, argv) in runs.items():
            path = tmp_path / f"{name}.json"
            path.write_text(json.dumps(cfg))
            outputs = []
            for k in range(2):
                out = tmp_path / f"{name}-{k}"
                assert cli.main(argv + ["--config", str(path), "--out", str(out)]) == 0
                outputs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
            assert outputs[0] == outputs[1]
            compared += len(outputs[0])
        online_cfg = tmp_path / "online.json"
        online_cfg.write_text(
            json.dumps({"basis": str(tmp_path / "greedy-0" / "greedy_result.json"), "tau": {"constant": 1.2, "cells": 32}, "source": {"constant": 1, "cells": 32}})
        )
        outputs = []
        for k in range(2):
            out = tmp_path / f"online-{k}"
            assert cli.main(["online", "--config", str(online_cfg), "--out", str(out)]) == 0
            outputs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
        assert outputs[0] == outputs[1]
        compared += len(outputs[0])
        (tmp_path / "A.csv").write_text("c0,c1\n1,0\n1,1\n1,2\n")
        (tmp_path / "b.csv").write_text("b\n0\n1\n0\n")
        mm = []
        for k in range(2):
            out = tmp_path / f"minimax-{k}"
            assert cli.main(["minimax", "--matrix", str(tmp_path / "A.csv"), "--rhs", str(tmp_path / "b.csv"), "--out", str(out)]) == 0
            mm.append((out / "minimax.json").read_bytes())
        assert mm[0] == mm[1]
        notes.append(f"{compared + 1} result files identical across reruns")
