"""Command-line experiment runner.

Subcommands::

    greedy          greedy snapshot selection for a diffusivity family
    density-greedy  the same for a density family
    verify CHECK    theorem1 | norm-identity | surrogate | density | operator-identity
    online          approximate a new resolvent from a saved greedy basis
    minimax         solve one L-infinity best approximation problem from CSV files

Exit codes: 0 success, 1 a check failed, 2 configuration or input error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys

import numpy as np

from . import config as cfgmod
from . import minimax, stability_lab
from .coeff_space import DENSITY, DIFFUSIVITY, Grid1D, Grid2D, PiecewiseFn, check_same_grid, linf_norm, reciprocal
from .errors import ConfigError, ResolventError
from .greedy import GreedyConfig, GreedyResult, greedy_run, online_approximate, online_error_profile
from .resolvent1d import apply_resolvent, empirical_star_norm, probe_suite, span_distance_star, wm11_norm
from .rng import SplitMix64
from .serialization import atomic_write, dumps

logger = logging.getLogger("resolvgreedy")

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

DEFAULT_OUT = "results"


def _write_json(out, name, payload):
    path = os.path.join(out, name)
    atomic_write(path, dumps(payload))
    return path


# --------------------------------------------------------------------------
# greedy


def run_greedy(cfg, out, kind=DIFFUSIVITY, base_dir="."):
    rng = SplitMix64(cfg["seed"])
    fam = cfgmod.build_family(cfg["family"], kind, rng, base_dir)
    g = cfg["greedy"]
    result = greedy_run(fam, GreedyConfig(g["gamma"], g["n_max"], g["tol"], g["weak_mode"]))
    _write_json(out, "config.json", cfg)
    result.to_json(os.path.join(out, "greedy_result.json"))
    result.decay_csv(os.path.join(out, "decay.csv"))
    print(f"{kind} greedy: {result.n} snapshots, final decay {result.decay[-1]:.3e}, stop: {result.stop_reason}")
    return EXIT_OK


# --------------------------------------------------------------------------
# verify


def _pairs(section, rng, dim):
    if "pairs" in section:
        pairs = [(cfgmod.build_coefficient(p["sigma"]), cfgmod.build_coefficient(p["sigma_tilde"])) for p in section["pairs"]]
        return pairs, section.get("bounds")
    r = section["random_pairs"]
    cells = r["cells"]
    if dim == 2 and not isinstance(cells, list):
        cells = [cells, cells]
    if dim == 1 and isinstance(cells, list):
        raise ConfigError("random_pairs.cells", "1D checks need a single cell count")
    grid = cfgmod.grid_of(cells)
    pairs = []
    for _ in range(r["count"]):
        s = rng.uniform(r["low"], r["high"], grid.shape)
        t = rng.uniform(r["low"], r["high"], grid.shape)
        pairs.append((PiecewiseFn(grid, s), PiecewiseFn(grid, t)))
    return pairs, section.get("bounds", [r["low"], r["high"]])


def _check_dims(pairs, dim, section):
    want = Grid1D if dim == 1 else Grid2D
    for i, (s, t) in enumerate(pairs):
        if not (isinstance(s.grid, want) and isinstance(t.grid, want)):
            raise ConfigError(f"{section}.pairs[{i}]", f"coefficients must be {dim}D")


def verify_theorem1(sec, rng, out):
    pairs, bounds = _pairs(sec, rng, sec["dim"])
    _check_dims(pairs, sec["dim"], "theorem1")
    results, ok = [], True
    for k, (s, t) in enumerate(pairs):
        reports = [
            stability_lab.theorem1_check(s, t, stability_lab.Mesh(sec["dim"], n), bounds, sec["upper_slack"], sec["lower_tol"])
            for n in sec["n"]
        ]
        deficits = [r["upper_deficit"] for r in reports]
        s1 = reports[-1]["sigma_bounds"][1]
        # the deficit is mesh-independent for mesh-aligned coefficients up to power-iteration noise
        noise = 1e-9 * s1**2 * max(r["d_R"] for r in reports)
        monotone = all(b <= a + noise for a, b in zip(deficits, deficits[1:]))
        pair_ok = reports[-1]["pass"] and monotone
        ok &= pair_ok
        if len(sec["n"]) > 1:
            rows = [(1.0 / r["n"], r["d_R"], r["upper_deficit"]) for r in reports]
            stability_lab.refinement_csv(rows, os.path.join(out, f"refinement_pair{k}.csv"))
        results.append({"pair": k, "reports": reports, "deficit_nonincreasing": bool(monotone), "pass": bool(pair_ok)})
    return {"results": results, "pass": bool(ok)}


def verify_operator_identity(sec, rng, out):
    pairs, _ = _pairs(sec, rng, sec["dim"])
    _check_dims(pairs, sec["dim"], "operator-identity")
    results, ok = [], True
    for k, (s, t) in enumerate(pairs):
        for n in sec["n"]:
            seed = int(rng.next_u64())
            res = stability_lab.operator_identity_residual(s, t, stability_lab.Mesh(sec["dim"], n), sec["vectors"], seed)
            passed = res <= sec["tol"]
            ok &= passed
            results.append({"pair": k, "n": n, "relative_residual": res, "pass": bool(passed)})
    return {"tolerance": sec["tol"], "results": results, "pass": bool(ok)}


def verify_norm_identity(sec, rng, out):
    if "m" in sec:
        ms = [cfgmod.build_coefficient(sec["m"])]
    else:
        r = sec["random"]
        if isinstance(r["cells"], list):
            raise ConfigError("norm-identity.random.cells", "the identity is one-dimensional")
        grid = Grid1D(r["cells"])
        ms = [PiecewiseFn(grid, rng.uniform(r["low"], r["high"], grid.cells)) for _ in range(r["count"])]
    results, ok = [], True
    probes_for = {}
    for k, m in enumerate(ms):
        if not isinstance(m.grid, Grid1D):
            raise ConfigError("norm-identity.m", "the identity is one-dimensional")
        probes = probes_for.setdefault(m.grid.cells, probe_suite(m.grid, sec["refine"]))
        exact = linf_norm(m)
        emp = empirical_star_norm(m, probes)
        ratio = emp / exact if exact > 0 else 1.0
        passed = sec["threshold"] <= ratio <= 1 + 1e-12
        ok &= passed
        results.append({"index": k, "exact": exact, "empirical": emp, "ratio": ratio, "pass": bool(passed)})
    return {"threshold": sec["threshold"], "results": results, "pass": bool(ok)}


def verify_surrogate(sec, rng, out):
    grid = Grid1D(sec["cells"])
    lo, hi = sec["low"], sec["high"]
    probes = probe_suite(grid, sec["refine"])
    fine = probes[0].grid
    results, ok = [], True
    for k in range(sec["count"]):
        tau = PiecewiseFn(grid, rng.uniform(lo, hi, grid.cells))
        basis = [PiecewiseFn(grid, rng.uniform(lo, hi, grid.cells)) for _ in range(sec["basis_size"])]
        # two-sided bound between the resolvent distance and the coefficient distance
        d_star = linf_norm(reciprocal(tau) - reciprocal(basis[0]))
        d_inf = linf_norm(tau - basis[0])
        sandwich = d_inf / hi**2 <= d_star * (1 + 1e-12) and d_star <= d_inf / lo**2 * (1 + 1e-12)
        # span distance measured directly on resolvent derivatives over the probe suite
        t, a = span_distance_star(tau, basis)
        tf = tau.refine(fine.cells // grid.cells)
        bf = [b.refine(fine.cells // grid.cells) for b in basis]
        measured = 0.0
        for f in probes:
            direct = apply_resolvent(tf, f)
            approx = sum((apply_resolvent(b, f).scaled(c) for c, b in zip(a, bf)), direct.scaled(0.0))
            measured = max(measured, (approx - direct).derivative.l1_norm() / wm11_norm(f))
        ratio = measured / t if t > 0 else 1.0
        span_ok = sec["threshold"] <= ratio <= 1 + 1e-9
        passed = sandwich and span_ok
        ok &= passed
        results.append(
            {
                "index": k,
                "pair_star_distance": d_star,
                "pair_linf_distance": d_inf,
                "sandwich_pass": bool(sandwich),
                "span_distance": t,
                "coefficients": list(map(float, a)),
                "measured_span_distance": measured,
                "ratio": ratio,
                "pass": bool(passed),
            }
        )
    return {"threshold": sec["threshold"], "results": results, "pass": bool(ok)}


def verify_density(sec, rng, out):
    mesh = stability_lab.Mesh(sec["dim"], sec["n"])
    dop = stability_lab.DensityOperator.build(mesh)
    if "rho" in sec:
        rho_fn = cfgmod.build_coefficient(sec["rho"])
        rhos = [stability_lab.nodal_values(rho_fn, mesh)]
    else:
        r = sec["random"]
        rhos = [rng.uniform(r["low"], r["high"], mesh.n_interior) for _ in range(r["count"])]
    results, ok = [], True
    for k, rho in enumerate(rhos):
        sandwich = stability_lab.density_sandwich_check(rho, mesh, sec["tol"], dop)
        ident = stability_lab.density_identity_check(rho, mesh, sec["vectors"], int(rng.next_u64()), dop=dop)
        passed = sandwich["pass"] and ident["pass"]
        ok &= passed
        results.append({"index": k, "sandwich": sandwich, "identity": ident, "pass": bool(passed)})
    return {"results": results, "pass": bool(ok)}


VERIFIERS = {
    "theorem1": verify_theorem1,
    "norm-identity": verify_norm_identity,
    "surrogate": verify_surrogate,
    "density": verify_density,
    "operator-identity": verify_operator_identity,
}


def run_verify(cfg, out):
    check = cfg["check"]
    rng = SplitMix64(cfg["seed"])
    report = {"check": check, "seed": cfg["seed"], "config": cfg[check]}
    report.update(VERIFIERS[check](cfg[check], rng, out))
    _write_json(out, f"verify_{check}.json", report)
    print(f"verify {check}: {'pass' if report['pass'] else 'FAIL'}")
    return EXIT_OK if report["pass"] else EXIT_CHECK_FAILED


# --------------------------------------------------------------------------
# online


def run_online(cfg, out, base_dir="."):
    path = cfg["basis"] if os.path.isabs(cfg["basis"]) else os.path.join(base_dir, cfg["basis"])
    with open(path) as fh:
        basis = GreedyResult.from_dict(json.load(fh))
    if basis.kind != DIFFUSIVITY:
        raise ConfigError("basis", "online approximation needs a diffusivity basis")
    tau = cfgmod.build_coefficient(cfg["tau"])
    f = cfgmod.build_coefficient(cfg["source"])
    check_same_grid(tau, f, *basis.basis)
    res = online_approximate(basis, tau, f)
    direct = apply_resolvent(tau, f)
    err = res.approx - direct
    weight, F = online_error_profile(basis, tau, f, res.coeffs)
    predicted_left, predicted_right = weight * F[:-1], weight * F[1:]
    # (approx - direct)' = -(sum_i a_i / sigma_i - 1/tau) F in every cell
    identity_residual = float(max(np.max(np.abs(err.vx_left + predicted_left)), np.max(np.abs(err.vx_right + predicted_right))))
    measured = err.derivative.linf_norm()
    bound = res.surrogate_err * float(np.max(np.abs(F)))
    identity_ok = identity_residual <= 1e-10
    bound_ok = measured <= bound * (1 + 1e-12) + 1e-15
    res.approx.to_csv(os.path.join(out, "approx_solution.csv"))
    direct.to_csv(os.path.join(out, "direct_solution.csv"))
    report = {
        "coefficients": list(map(float, res.coeffs)),
        "surrogate_error": res.surrogate_err,
        "max_abs_F": float(np.max(np.abs(F))),
        "measured_max_derivative_error": measured,
        "predicted_max_derivative_error": float(max(np.max(np.abs(predicted_left)), np.max(np.abs(predicted_right)))),
        "identity_residual": identity_residual,
        "identity_pass": bool(identity_ok),
        "bound_pass": bool(bound_ok),
        "pass": bool(identity_ok and bound_ok),
    }
    _write_json(out, "online_report.json", report)
    print(f"online: surrogate error {res.surrogate_err:.6g}, max derivative error {measured:.6g}")
    return EXIT_OK if report["pass"] else EXIT_CHECK_FAILED


# --------------------------------------------------------------------------
# minimax


def read_matrix_csv(path):
    """Dense CSV with a header row, or ``row,col,value`` triplets (0-based indices)."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if len(rows) < 2:
        raise ValueError(f"{path}: expected a header and at least one data row")
    header = [h.strip().lower() for h in rows[0]]
    try:
        data = np.array([[float(c) for c in r] for r in rows[1:]], dtype=float)
    except ValueError:
        raise ValueError(f"{path}: non-numeric entry") from None
    if header == ["row", "col", "value"]:
        idx = data[:, :2]
        if np.any(idx < 0) or np.any(idx != np.round(idx)):
            raise ValueError(f"{path}: triplet indices must be nonnegative integers")
        idx = idx.astype(int)
        A = np.zeros((idx[:, 0].max() + 1, idx[:, 1].max() + 1))
        np.add.at(A, (idx[:, 0], idx[:, 1]), data[:, 2])
        return A
    if data.ndim != 2 or data.shape[1] != len(header):
        raise ValueError(f"{path}: rows must have {len(header)} entries")
    return data


def read_vector_csv(path):
    """One value per row after a header, or ``row,value`` pairs."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if len(rows) < 2:
        raise ValueError(f"{path}: expected a header and at least one value")
    header = [h.strip().lower() for h in rows[0]]
    try:
        data = np.array([[float(c) for c in r] for r in rows[1:]], dtype=float)
    except ValueError:
        raise ValueError(f"{path}: non-numeric entry") from None
    if header == ["row", "value"]:
        b = np.zeros(int(data[:, 0].max()) + 1)
        b[data[:, 0].astype(int)] = data[:, 1]
        return b
    if data.shape[1] != 1:
        raise ValueError(f"{path}: expected a single column")
    return data[:, 0]


def run_minimax(matrix, rhs, out):
    for name, p in (("--matrix", matrix), ("--rhs", rhs)):
        if p is None:
            raise ConfigError(name, "required")
        if not os.path.exists(p):
            raise ConfigError(name, f"file {p!r} does not exist")
    A = read_matrix_csv(matrix)
    b = read_vector_csv(rhs)
    if len(b) < A.shape[0]:
        b = np.concatenate([b, np.zeros(A.shape[0] - len(b))])
    sol = minimax.solve(minimax.MinimaxProblem(A, b))
    payload = {"rows": A.shape[0], "cols": A.shape[1], "t": sol.t, "a": list(map(float, sol.a)), "active_rows": list(map(int, sol.active_rows))}
    _write_json(out, "minimax.json", payload)
    print(f"minimax: t = {sol.t:.17g}")
    return EXIT_OK


# --------------------------------------------------------------------------
# entry point


def build_parser():
    parser = argparse.ArgumentParser(prog="resolvgreedy", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="JSON experiment config")
        p.add_argument("--out", help=f"output directory (default: config 'out' or ./{DEFAULT_OUT})")
        p.add_argument("--seed", type=int, help="64-bit RNG seed (overrides the config)")

    common(sub.add_parser("greedy", help="greedy selection for a diffusivity family"))
    common(sub.add_parser("density-greedy", help="greedy selection for a density family"))
    pv = sub.add_parser("verify", help="run a verification check")
    pv.add_argument("check", choices=cfgmod.CHECKS)
    common(pv)
    common(sub.add_parser("online", help="online approximation from a greedy basis"))
    pm = sub.add_parser("minimax", help="solve one minimax problem from CSV")
    pm.add_argument("--matrix", help="CSV with the matrix A (dense with header, or row,col,value)")
    pm.add_argument("--rhs", help="CSV with the vector b (one value per row after a header, or row,value)")
    common(pm, config_required=False)
    return parser


def _dispatch(args):
    if args.command == "minimax":
        out = args.out or DEFAULT_OUT
        os.makedirs(out, exist_ok=True)
        return run_minimax(args.matrix, args.rhs, out)
    cfg = cfgmod.load(args.config, args.command, getattr(args, "check", None))
    if args.seed is not None:
        if not 0 <= args.seed <= cfgmod.SEED_MAX:
            raise ConfigError("--seed", "must be a 64-bit unsigned integer")
        cfg["seed"] = args.seed
    out = args.out or cfg.get("out") or DEFAULT_OUT
    os.makedirs(out, exist_ok=True)
    base_dir = os.path.dirname(os.path.abspath(args.config))
    if args.command == "greedy":
        return run_greedy(cfg, out, DIFFUSIVITY, base_dir)
    if args.command == "density-greedy":
        return run_greedy(cfg, out, DENSITY, base_dir)
    if args.command == "verify":
        return run_verify(cfg, out)
    return run_online(cfg, out, base_dir)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return _dispatch(args)
    except ArithmeticError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except np.linalg.LinAlgError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ResolventError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
