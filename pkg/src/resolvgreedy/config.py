"""Experiment configuration: strict parsing, defaults, and round-trip serialization.

A config is a JSON object. Unknown keys are rejected and every error names
the offending key path (``family.parameters.random.count``). :func:`parse`
returns a normalized tree with all defaults filled in; :func:`serialize`
writes it back so that ``parse(serialize(parse(x))) == parse(x)``.
"""

from __future__ import annotations

import json
import math
import os

import numpy as np

from .coeff_space import (
    DENSITY,
    DIFFUSIVITY,
    Grid1D,
    Grid2D,
    PiecewiseFn,
    affine_density_family,
    affine_diffusivity_family,
    affine_reciprocal_family,
    parameter_grid,
    random_parameters,
    read_family_csv,
)
from .errors import ConfigError
from .serialization import dumps

COMMANDS = ("greedy", "density-greedy", "verify", "online")
CHECKS = ("theorem1", "norm-identity", "surrogate", "density", "operator-identity")
GENERATORS = ("affine_reciprocal", "affine_diffusivity", "affine_density", "tabulated")
SEED_MAX = 2**64 - 1


# --------------------------------------------------------------------------
# primitive validators


def _obj(value, path, allowed):
    if not isinstance(value, dict):
        raise ConfigError(path, "expected an object")
    for key in value:
        if key not in allowed:
            where = f"{path}.{key}" if path else key
            raise ConfigError(where, "unknown key")
    return value


def _join(path, key):
    return f"{path}.{key}" if path else key


def _num(value, path, low=None, high=None, *, integer=False, strict_low=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, "expected a number")
    if integer and (not float(value).is_integer()):
        raise ConfigError(path, "expected an integer")
    if isinstance(value, float) and not math.isfinite(value):
        raise ConfigError(path, "expected a finite number")
    if low is not None and (value <= low if strict_low else value < low):
        raise ConfigError(path, f"must be {'>' if strict_low else '>='} {low}")
    if high is not None and value > high:
        raise ConfigError(path, f"must be <= {high}")
    return int(value) if integer else float(value)


def _bool(value, path):
    if not isinstance(value, bool):
        raise ConfigError(path, "expected true or false")
    return value


def _numlist(value, path, low=None, high=None, **kw):
    if not isinstance(value, list) or not value:
        raise ConfigError(path, "expected a non-empty list of numbers")
    return [_num(v, f"{path}[{i}]", low, high, **kw) for i, v in enumerate(value)]


def _cells(value, path):
    if isinstance(value, list):
        if len(value) != 2:
            raise ConfigError(path, "2D cell counts must have two entries")
        return [_num(v, f"{path}[{i}]", 1, integer=True) for i, v in enumerate(value)]
    return _num(value, path, 1, integer=True)


def grid_of(cells):
    return Grid2D(*cells) if isinstance(cells, list) else Grid1D(cells)


def _choice(value, path, options):
    if value not in options:
        raise ConfigError(path, f"must be one of {', '.join(options)}")
    return value


# --------------------------------------------------------------------------
# coefficient specs


def _coefficient(value, path):
    """``{"constant": c, "cells": M}`` or ``{"values": [...]}`` (nested lists for 2D)."""
    _obj(value, path, {"constant", "cells", "values"})
    if "values" in value:
        if "constant" in value:
            raise ConfigError(path, "give either 'values' or 'constant', not both")
        arr = value["values"]
        try:
            a = np.asarray(arr, dtype=float)
        except (TypeError, ValueError):
            raise ConfigError(_join(path, "values"), "expected a list (or list of lists) of numbers") from None
        if a.ndim not in (1, 2) or a.size == 0 or not np.all(np.isfinite(a)):
            raise ConfigError(_join(path, "values"), "expected a non-empty 1D or 2D array of finite numbers")
        out = {"values": a.tolist()}
        if "cells" in value:
            cells = _cells(value["cells"], _join(path, "cells"))
            if list(np.atleast_1d(cells)) != list(a.shape):
                raise ConfigError(_join(path, "cells"), f"does not match the values shape {list(a.shape)}")
            out["cells"] = cells
        return out
    if "constant" not in value:
        raise ConfigError(path, "needs 'values' or 'constant'")
    return {
        "constant": _num(value["constant"], _join(path, "constant")),
        "cells": _cells(value.get("cells", 1), _join(path, "cells")),
    }


def build_coefficient(spec) -> PiecewiseFn:
    if "values" in spec:
        a = np.asarray(spec["values"], dtype=float)
        grid = Grid1D(a.shape[0]) if a.ndim == 1 else Grid2D(*a.shape)
        return PiecewiseFn(grid, a)
    return PiecewiseFn.constant(grid_of(spec["cells"]), spec["constant"])


def _random_block(value, path, defaults):
    allowed = set(defaults)
    _obj(value, path, allowed)
    out = {}
    for key, default in defaults.items():
        v = value.get(key, default)
        p = _join(path, key)
        if key == "cells":
            out[key] = _cells(v, p)
        elif key == "count":
            out[key] = _num(v, p, 1, integer=True)
        else:
            out[key] = _num(v, p)
    if "low" in out and "high" in out and out["low"] > out["high"]:
        raise ConfigError(path, "low exceeds high")
    return out


# --------------------------------------------------------------------------
# sections


def _mode(value, path, cells):
    if isinstance(value, dict):
        _obj(value, path, {"indicator"})
        ind = value.get("indicator")
        if isinstance(cells, list):
            if not (isinstance(ind, list) and len(ind) == 2):
                raise ConfigError(_join(path, "indicator"), "expected [[x0, x1], [y0, y1]]")
            return {"indicator": [_numlist(r, f"{path}.indicator[{i}]", 0, 1) for i, r in enumerate(ind)]}
        return {"indicator": _numlist(ind, _join(path, "indicator"), 0, 1)}
    arr = np.asarray(value, dtype=float) if isinstance(value, list) else None
    if arr is None or arr.size == 0:
        raise ConfigError(path, "mode must be a list of cell values or {'indicator': ...}")
    return {"values": arr.tolist()}


def _parameters(value, path):
    _obj(value, path, {"points", "axes", "random"})
    if len(value) != 1:
        raise ConfigError(path, "give exactly one of 'points', 'axes', 'random'")
    if "points" in value:
        pts = value["points"]
        if not isinstance(pts, list) or not pts:
            raise ConfigError(_join(path, "points"), "expected a non-empty list of parameter points")
        return {"points": [_numlist(p if isinstance(p, list) else [p], f"{path}.points[{i}]") for i, p in enumerate(pts)]}
    if "axes" in value:
        axes = value["axes"]
        if not isinstance(axes, list) or not axes:
            raise ConfigError(_join(path, "axes"), "expected a non-empty list of lists")
        return {"axes": [_numlist(a, f"{path}.axes[{i}]") for i, a in enumerate(axes)]}
    r = _obj(value["random"], _join(path, "random"), {"count", "low", "high"})
    for key in ("count", "low", "high"):
        if key not in r:
            raise ConfigError(_join(path, f"random.{key}"), "missing")
    low = _numlist(r["low"], _join(path, "random.low"))
    high = _numlist(r["high"], _join(path, "random.high"))
    if len(low) != len(high) or any(lo > hi for lo, hi in zip(low, high)):
        raise ConfigError(_join(path, "random"), "low and high must have equal length with low <= high")
    return {"random": {"count": _num(r["count"], _join(path, "random.count"), 1, integer=True), "low": low, "high": high}}


def _family(value, path, kind, base_dir):
    allowed = {"generator", "cells", "base", "modes", "file", "parameters", "domain", "bounds", "name"}
    _obj(value, path, allowed)
    gen = _choice(value.get("generator"), _join(path, "generator"), GENERATORS)
    if kind == DENSITY and gen not in ("affine_density", "tabulated"):
        raise ConfigError(_join(path, "generator"), "density families use 'affine_density' or 'tabulated'")
    if kind == DIFFUSIVITY and gen == "affine_density":
        raise ConfigError(_join(path, "generator"), "'affine_density' needs the density-greedy command")
    out = {"generator": gen, "name": str(value.get("name", gen))}
    if "bounds" in value:
        b = _numlist(value["bounds"], _join(path, "bounds"))
        if len(b) != 2 or b[0] > b[1]:
            raise ConfigError(_join(path, "bounds"), "expected [low, high] with low <= high")
        out["bounds"] = b
    if gen == "tabulated":
        for key in ("base", "modes", "parameters", "domain"):
            if key in value:
                raise ConfigError(_join(path, key), "not used by tabulated families")
        fname = value.get("file")
        if not isinstance(fname, str):
            raise ConfigError(_join(path, "file"), "expected a file path")
        full = fname if os.path.isabs(fname) else os.path.join(base_dir, fname)
        if not os.path.exists(full):
            raise ConfigError(_join(path, "file"), f"file {fname!r} does not exist")
        out["file"] = fname
        if "cells" in value:
            out["cells"] = _cells(value["cells"], _join(path, "cells"))
        return out
    if "file" in value:
        raise ConfigError(_join(path, "file"), "only tabulated families read files")
    if "cells" not in value:
        raise ConfigError(_join(path, "cells"), "missing")
    cells = _cells(value["cells"], _join(path, "cells"))
    out["cells"] = cells
    base = value.get("base", 1.0)
    out["base"] = _num(base, _join(path, "base")) if not isinstance(base, list) else _mode(base, _join(path, "base"), cells)["values"]
    modes = value.get("modes", [])
    if not isinstance(modes, list):
        raise ConfigError(_join(path, "modes"), "expected a list")
    out["modes"] = [_mode(m, f"{path}.modes[{i}]", cells) for i, m in enumerate(modes)]
    if "parameters" not in value:
        raise ConfigError(_join(path, "parameters"), "missing")
    out["parameters"] = _parameters(value["parameters"], _join(path, "parameters"))
    if "domain" in value:
        dom = value["domain"]
        if not isinstance(dom, list):
            raise ConfigError(_join(path, "domain"), "expected a list of [low, high] pairs")
        out["domain"] = [_numlist(d, f"{path}.domain[{i}]") for i, d in enumerate(dom)]
    return out


def _greedy_section(value, path):
    _obj(value, path, {"gamma", "n_max", "tol", "weak_mode"})
    return {
        "gamma": _num(value.get("gamma", 1.0), _join(path, "gamma"), 0, 1, strict_low=True),
        "n_max": _num(value.get("n_max", 50), _join(path, "n_max"), 1, integer=True),
        "tol": _num(value.get("tol", 1e-10), _join(path, "tol"), 0),
        "weak_mode": _bool(value.get("weak_mode", False), _join(path, "weak_mode")),
    }


def _pairs(value, path):
    if not isinstance(value, list) or not value:
        raise ConfigError(path, "expected a non-empty list of {sigma, sigma_tilde}")
    out = []
    for i, p in enumerate(value):
        pp = f"{path}[{i}]"
        _obj(p, pp, {"sigma", "sigma_tilde"})
        if "sigma" not in p or "sigma_tilde" not in p:
            raise ConfigError(pp, "needs 'sigma' and 'sigma_tilde'")
        out.append({"sigma": _coefficient(p["sigma"], _join(pp, "sigma")), "sigma_tilde": _coefficient(p["sigma_tilde"], _join(pp, "sigma_tilde"))})
    return out


def _mesh_sizes(value, path):
    if isinstance(value, list):
        return [_num(v, f"{path}[{i}]", 2, integer=True) for i, v in enumerate(value)]
    return [_num(value, path, 2, integer=True)]


def _verify_section(check, value, path):
    if check in ("theorem1", "operator-identity"):
        allowed = {"dim", "n", "pairs", "random_pairs", "bounds"}
        allowed |= {"upper_slack", "lower_tol"} if check == "theorem1" else {"vectors", "tol"}
        _obj(value, path, allowed)
        out = {"dim": _choice(value.get("dim", 2), _join(path, "dim"), (1, 2))}
        out["n"] = _mesh_sizes(value.get("n", 64 if check == "theorem1" else 32), _join(path, "n"))
        if ("pairs" in value) == ("random_pairs" in value):
            raise ConfigError(path, "give exactly one of 'pairs' or 'random_pairs'")
        if "pairs" in value:
            out["pairs"] = _pairs(value["pairs"], _join(path, "pairs"))
        else:
            out["random_pairs"] = _random_block(
                value["random_pairs"], _join(path, "random_pairs"), {"count": 5, "cells": [2, 2] if out["dim"] == 2 else 2, "low": 1.0, "high": 2.0}
            )
        if "bounds" in value:
            b = _numlist(value["bounds"], _join(path, "bounds"), 0, strict_low=True)
            if len(b) != 2 or b[0] > b[1]:
                raise ConfigError(_join(path, "bounds"), "expected [low, high]")
            out["bounds"] = b
        if check == "theorem1":
            out["upper_slack"] = _num(value.get("upper_slack", 1.1), _join(path, "upper_slack"), 1)
            out["lower_tol"] = _num(value.get("lower_tol", 1e-8), _join(path, "lower_tol"), 0)
        else:
            out["vectors"] = _num(value.get("vectors", 20), _join(path, "vectors"), 1, integer=True)
            out["tol"] = _num(value.get("tol", 1e-10), _join(path, "tol"), 0)
        return out
    if check == "norm-identity":
        _obj(value, path, {"m", "random", "refine", "threshold"})
        out = {"refine": _num(value.get("refine", 4), _join(path, "refine"), 4, integer=True)}
        out["threshold"] = _num(value.get("threshold", 0.99), _join(path, "threshold"), 0, 1)
        if ("m" in value) == ("random" in value):
            raise ConfigError(path, "give exactly one of 'm' or 'random'")
        if "m" in value:
            out["m"] = _coefficient(value["m"], _join(path, "m"))
        else:
            out["random"] = _random_block(value["random"], _join(path, "random"), {"count": 50, "cells": 64, "low": 0.5, "high": 2.0})
        return out
    if check == "surrogate":
        _obj(value, path, {"count", "cells", "basis_size", "low", "high", "refine", "threshold"})
        out = _random_block({k: v for k, v in value.items() if k in ("count", "cells", "low", "high")}, path, {"count": 20, "cells": 32, "low": 0.5, "high": 2.0})
        if isinstance(out["cells"], list):
            raise ConfigError(_join(path, "cells"), "the 1D surrogate uses a 1D grid")
        if out["low"] <= 0:
            raise ConfigError(_join(path, "low"), "diffusivities must be positive")
        out["basis_size"] = _num(value.get("basis_size", 3), _join(path, "basis_size"), 1, integer=True)
        out["refine"] = _num(value.get("refine", 4), _join(path, "refine"), 4, integer=True)
        out["threshold"] = _num(value.get("threshold", 0.99), _join(path, "threshold"), 0, 1)
        return out
    if check == "density":
        _obj(value, path, {"dim", "n", "rho", "random", "vectors", "tol"})
        out = {"dim": _choice(value.get("dim", 2), _join(path, "dim"), (1, 2))}
        out["n"] = _num(value.get("n", 16), _join(path, "n"), 2, integer=True)
        if ("rho" in value) == ("random" in value):
            raise ConfigError(path, "give exactly one of 'rho' or 'random'")
        if "rho" in value:
            out["rho"] = _coefficient(value["rho"], _join(path, "rho"))
        else:
            out["random"] = _random_block(value["random"], _join(path, "random"), {"count": 20, "low": 0.5, "high": 2.0})
        out["vectors"] = _num(value.get("vectors", 20), _join(path, "vectors"), 1, integer=True)
        out["tol"] = _num(value.get("tol", 1e-8), _join(path, "tol"), 0)
        return out
    raise ConfigError("check", f"unknown check {check!r}")  # pragma: no cover


def parse(raw, command, check=None, base_dir="."):
    """Validate a raw config tree for ``command`` and fill defaults.

    Raises
    ------
    ConfigError
        With the key path of the first problem found.
    """
    if command not in COMMANDS:
        raise ConfigError("", f"unknown command {command!r}")
    common = {"seed", "out"}
    if command in ("greedy", "density-greedy"):
        _obj(raw, "", common | {"family", "greedy"})
        if "family" not in raw:
            raise ConfigError("family", "missing")
        kind = DENSITY if command == "density-greedy" else DIFFUSIVITY
        out = {"family": _family(raw["family"], "family", kind, base_dir), "greedy": _greedy_section(raw.get("greedy", {}), "greedy")}
    elif command == "verify":
        _obj(raw, "", common | {"check"} | set(CHECKS))
        check = check or raw.get("check")
        check = _choice(check, "check", CHECKS)
        if "check" in raw and raw["check"] != check:
            raise ConfigError("check", f"config names {raw['check']!r} but {check!r} was requested")
        for other in CHECKS:
            if other != check and other in raw:
                raise ConfigError(other, f"section does not belong to check {check!r}")
        out = {"check": check, check: _verify_section(check, raw.get(check, {}), check)}
    else:
        _obj(raw, "", common | {"basis", "tau", "source"})
        for key in ("basis", "tau", "source"):
            if key not in raw:
                raise ConfigError(key, "missing")
        if not isinstance(raw["basis"], str):
            raise ConfigError("basis", "expected a file path")
        full = raw["basis"] if os.path.isabs(raw["basis"]) else os.path.join(base_dir, raw["basis"])
        if not os.path.exists(full):
            raise ConfigError("basis", f"basis file {raw['basis']!r} does not exist")
        out = {"basis": raw["basis"], "tau": _coefficient(raw["tau"], "tau"), "source": _coefficient(raw["source"], "source")}
    out["seed"] = _num(raw.get("seed", 0), "seed", 0, SEED_MAX, integer=True)
    if "out" in raw:
        if not isinstance(raw["out"], str):
            raise ConfigError("out", "expected a directory path")
        out["out"] = raw["out"]
    return out


def serialize(cfg):
    return dumps(cfg)


def load(path, command, check=None):
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError("", f"config file {path!r} does not exist") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"{path}: invalid JSON ({exc})") from None
    return parse(raw, command, check, base_dir=os.path.dirname(os.path.abspath(path)))


# --------------------------------------------------------------------------
# builders


def _mode_values(mode, grid):
    if "values" in mode:
        return np.asarray(mode["values"], dtype=float).reshape(grid.shape)
    ind = mode["indicator"]
    if isinstance(grid, Grid1D):
        x = grid.midpoints
        return ((x >= ind[0]) & (x < ind[1])).astype(float)
    xs = (np.arange(grid.nx) + 0.5) / grid.nx
    ys = (np.arange(grid.ny) + 0.5) / grid.ny
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    return ((X >= ind[0][0]) & (X < ind[0][1]) & (Y >= ind[1][0]) & (Y < ind[1][1])).astype(float)


def build_family(spec, kind, rng, base_dir="."):
    """Instantiate the :class:`ParametricFamily` described by a parsed ``family`` section."""
    bounds = tuple(spec["bounds"]) if "bounds" in spec else None
    if spec["generator"] == "tabulated":
        fname = spec["file"] if os.path.isabs(spec["file"]) else os.path.join(base_dir, spec["file"])
        grid = grid_of(spec["cells"]) if "cells" in spec else None
        return read_family_csv(fname, kind=kind, grid=grid, bounds=bounds)
    grid = grid_of(spec["cells"])
    modes = [_mode_values(m, grid) for m in spec["modes"]]
    p = spec["parameters"]
    if "points" in p:
        params = np.asarray(p["points"], dtype=float)
    elif "axes" in p:
        params = parameter_grid(p["axes"])
    else:
        r = p["random"]
        params = random_parameters(rng, r["count"], r["low"], r["high"])
    if params.shape[1] != len(modes):
        raise ConfigError("family.parameters", f"parameter dimension {params.shape[1]} does not match {len(modes)} modes")
    domain = [tuple(d) for d in spec["domain"]] if "domain" in spec else None
    base = np.asarray(spec["base"], dtype=float)
    builder = {
        "affine_reciprocal": affine_reciprocal_family,
        "affine_diffusivity": affine_diffusivity_family,
        "affine_density": affine_density_family,
    }[spec["generator"]]
    return builder(grid, base, modes, params, domain=domain, bounds=bounds, name=spec["name"])
