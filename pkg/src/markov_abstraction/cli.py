"""Batch front-end: ``markov-abstraction run|validate|export``.

Exit codes: 0 success, 1 invalid configuration, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import hashlib
import importlib
import json
import math
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import export
from .abstraction import (AbstractionError, build_chain_averaged, density_estimate, error_budget, initial_pmf,
                          initial_pmf_relaxed, propagate_all)
from .geometry import BandMap, Box, partition_uniform, support_recursion, truncated_domain
from .invariance import InvarianceProblem, backward_invariance, compare_methods, forward_invariance
from .kernels import Kernel, gaussian_noise, linear_gaussian_1d, linear_system_kernel, std_normal_pdf, uniform_initial
from .oracle import AnalyticLinGauss
from .projection import InterpScheme, algorithm1, algorithm2
from .quadrature import QuadratureError, QuadratureSpec

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2

_vector = {"type": "array", "items": {"type": "number"}, "minItems": 1}
_box = {
    "type": "object",
    "properties": {"lower": _vector, "upper": _vector},
    "required": ["lower", "upper"],
    "additionalProperties": False,
}

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "model": {
            "type": "object",
            "properties": {
                "family": {"enum": ["linear_gaussian_1d", "linear_system", "custom"]},
                "a": {"type": "number"},
                "b": {"type": "number"},
                "sigma": {"anyOf": [{"type": "number", "exclusiveMinimum": 0}, _vector]},
                "A": {"type": "array", "items": _vector},
                "offset": _vector,
                "density": {"type": "string"},
                "dim": {"type": "integer", "minimum": 1},
                "lambda_f": {"type": "number", "minimum": 0},
                "lambda_b": {"type": "number", "minimum": 0},
                "m_f": {"type": "number", "exclusiveMinimum": 0},
                "m_b": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "m_f_certified": {"type": "boolean"},
            },
            "required": ["family"],
            "additionalProperties": False,
        },
        "init": _box,
        "horizon": {"type": "integer", "minimum": 0},
        "truncation": {
            "type": "object",
            "properties": {
                "alpha": {"type": "number", "exclusiveMinimum": 0},
                "band": {
                    "type": "object",
                    "properties": {"matrix": {"type": "array"}, "offset": _vector, "half_width": _vector},
                    "required": ["matrix", "offset", "half_width"],
                    "additionalProperties": False,
                },
                "epsilon": {"type": "number", "minimum": 0},
                "domain": _box,
            },
            "additionalProperties": False,
        },
        "partition": {
            "type": "object",
            "properties": {
                "delta": {"type": "number", "exclusiveMinimum": 0},
                "cells_per_axis": {"type": "array", "items": {"type": "integer", "minimum": 1}},
            },
            "additionalProperties": False,
        },
        "scheme": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["chain", "constant", "polynomial", "bilinear", "trilinear"]},
                "h": {"type": "integer", "minimum": 2},
                "relaxed": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
        "task": {"enum": ["density", "invariance-forward", "invariance-backward", "compare", "export"]},
        "safe_set": _box,
        "output_dir": {"type": "string"},
        "quadrature": {
            "type": "object",
            "properties": {
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "points": {"type": "integer", "minimum": 1},
                "max_depth": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "seed": {"type": "integer", "minimum": 0},
        "grid_points": {"type": "integer", "minimum": 2},
        "max_cells": {"type": "integer", "minimum": 1},
        "formula_only": {"type": "boolean"},
        "export": {
            "type": "object",
            "properties": {"format": {"enum": ["tra", "csv"]}, "threshold": {"type": "number", "minimum": 0}},
            "additionalProperties": False,
        },
    },
    "required": ["model", "horizon", "task", "output_dir"],
    "additionalProperties": False,
}


class ConfigError(ValueError):
    pass


def load_config(path) -> dict:
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> None:
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: (-len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        msgs = [f"{'/'.join(map(str, e.absolute_path)) or '<root>'}: {e.message}" for e in errors]
        raise ConfigError("schema error at " + "; ".join(msgs))
    model = cfg["model"]
    fam = model["family"]
    need = {"linear_gaussian_1d": ["a", "sigma"], "linear_system": ["A", "sigma"],
            "custom": ["density", "dim", "lambda_f", "m_f"]}[fam]
    missing = [k for k in need if k not in model]
    if missing:
        raise ConfigError(f"model family {fam!r} requires {missing}")
    task = cfg["task"]
    if task.startswith("invariance") or task == "compare":
        if "safe_set" not in cfg:
            raise ConfigError(f"task {task!r} requires safe_set")
    if "partition" not in cfg:
        raise ConfigError("partition (delta or cells_per_axis) required")
    if task in ("density", "export") and fam == "custom" and "truncation" not in cfg:
        raise ConfigError("custom models need truncation.band or truncation.domain")


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


def _import_callable(target: str):
    mod, _, attr = target.partition(":")
    if not attr:
        raise ConfigError("custom density must be given as 'module:function'")
    try:
        return getattr(importlib.import_module(mod), attr)
    except (ImportError, AttributeError) as exc:
        raise ConfigError(f"cannot import {target}: {exc}") from exc


def build_model(cfg: dict):
    """``(kernel, init)`` from the model, init and truncation sections."""
    model = cfg["model"]
    trunc = cfg.get("truncation", {})
    fam = model["family"]
    init_box = Box.from_dict(cfg["init"]) if "init" in cfg else None
    if fam == "linear_gaussian_1d":
        if init_box is None:
            raise ConfigError("init interval required")
        alpha = trunc.get("alpha", 4.0)
        try:
            return linear_gaussian_1d(model["a"], model.get("b", 0.0), float(np.atleast_1d(model["sigma"])[0]),
                                      alpha, init_box)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    if fam == "linear_system":
        sig = np.atleast_1d(np.asarray(model["sigma"], dtype=float))
        A = np.asarray(model["A"], dtype=float)
        sig = np.broadcast_to(sig, (A.shape[0],))
        half, eps = None, 0.0
        if "alpha" in trunc:
            alpha = trunc["alpha"]
            half = alpha * sig
            # Density outside the band: one coordinate beyond alpha, the rest at their peak.
            peaks = 1.0 / (sig * math.sqrt(2 * math.pi))
            eps = max(std_normal_pdf(alpha) / sig[k] * np.prod(np.delete(peaks, k)) for k in range(sig.size))
        try:
            kernel = linear_system_kernel(A, gaussian_noise(sig), model.get("offset"), half, float(eps))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    else:
        density = _import_callable(model["density"])
        band = None
        if "band" in trunc:
            b = trunc["band"]
            band = BandMap(b["matrix"], b["offset"], b["half_width"])
        kernel = Kernel(
            dim=model["dim"], density=density, lambda_f=model["lambda_f"], m_f=model["m_f"],
            lambda_b=model.get("lambda_b"), m_b=model.get("m_b"), band=band,
            epsilon_tail=trunc.get("epsilon", 0.0), m_f_certified=model.get("m_f_certified", True),
        )
    if init_box is None:
        raise ConfigError("init box required")
    return kernel, uniform_initial(init_box)


def working_domain(cfg, kernel, init) -> Box:
    trunc = cfg.get("truncation", {})
    if "domain" in trunc:
        return Box.from_dict(trunc["domain"])
    if kernel.band is None:
        raise ConfigError("no band to truncate with; give truncation.alpha, band or domain")
    return truncated_domain(support_recursion(kernel.band, init.support, cfg["horizon"]))


def make_partition(cfg, domain: Box):
    p = cfg["partition"]
    if "cells_per_axis" in p:
        return partition_uniform(domain, cells_per_axis=p["cells_per_axis"])
    return partition_uniform(domain, target_delta=p["delta"])


def quad_spec(cfg) -> QuadratureSpec:
    q = cfg.get("quadrature", {})
    return QuadratureSpec(points=q.get("points", 8), max_depth=q.get("max_depth", 12), tol=q.get("tol", 1e-8))


def _meta(cfg, kernel, extra=None, certified=None) -> dict:
    trunc = cfg.get("truncation", {})
    meta = {
        "config_sha256": config_hash(cfg),
        "constants": {
            "lambda_f": kernel.lambda_f, "lambda_b": kernel.lambda_b, "m_f": kernel.m_f,
            "m_b": 1.0 if kernel.m_b is None else kernel.m_b, "epsilon": kernel.epsilon_tail, "alpha": trunc.get("alpha"),
            "N": cfg["horizon"], **(extra or {}),
        },
        "certified": kernel.m_f_certified if certified is None else certified,
    }
    return meta


def _scheme(cfg, dim):
    s = cfg.get("scheme", {"kind": "chain"})
    kind = s.get("kind", "chain")
    if kind == "chain":
        return None, s.get("relaxed", False)
    if kind == "constant":
        return InterpScheme.constant(dim), False
    if kind == "polynomial":
        if dim != 1:
            raise ConfigError("polynomial schemes are 1D")
        return InterpScheme.polynomial_1d(s.get("h", 2)), False
    if kind == "bilinear":
        return InterpScheme.bilinear(), False
    return InterpScheme.trilinear(), False


def run_density(cfg, out: Path) -> list[Path]:
    kernel, init = build_model(cfg)
    domain = working_domain(cfg, kernel, init)
    part = make_partition(cfg, domain)
    spec = quad_spec(cfg)
    N = cfg["horizon"]
    scheme, relaxed = _scheme(cfg, kernel.dim)

    if scheme is None:
        chain = build_chain_averaged(kernel, part, spec.tol, spec)
        start = initial_pmf_relaxed(kernel, init, part, spec) if relaxed else initial_pmf(init, part, spec)
        pmfs = propagate_all(start, chain, N - start.t) if N >= start.t else [start]
        approxs = [density_estimate(p, part) for p in pmfs]
        budgets = [error_budget(kernel, init, part.delta, p.t, relaxed) for p in pmfs]
        label = "chain"
    elif scheme.is_constant:
        approxs = algorithm2(kernel, init, part, None, max(N, 1), spec)
        budgets = [a.budget for a in approxs]
        label = "constant"
    else:
        approxs = algorithm1(kernel, init, part, scheme, max(N, 1), spec)
        budgets = [a.budget for a in approxs]
        label = f"{scheme.kind}-h{scheme.h}"
    certified = all(b.certified for b in budgets)
    meta = _meta(cfg, kernel, {"delta": part.delta, "n_cells": part.n, "scheme": label}, certified)
    files = []

    rows = [(a.t, b.eps_t, b.e_t, b.total, str(b.certified).lower()) for a, b in zip(approxs, budgets)]
    files.append(export.write_csv(out / "budget.csv", ["t", "eps_t", "e_t", "total", "certified"], rows, meta))

    coef_rows = []
    for a in approxs:
        c = a.coefficients
        for i in range(c.shape[0]):
            for j in range(c.shape[1]):
                coef_rows.append((i, j, a.t, c[i, j]))
    files.append(export.write_csv(out / "coefficients.csv", ["cell", "basis", "t", "value"], coef_rows, meta))

    if kernel.dim == 1:
        npts = cfg.get("grid_points", 1000)
        x = np.linspace(domain.lower[0], domain.upper[0], npts)
        oracle = None
        if kernel.name == "linear_gaussian_1d" and kernel.params["a"] > 0:
            p = kernel.params
            oracle = AnalyticLinGauss(p["a"], p["b"], p["sigma"], init.support.lower[0], init.support.upper[0])
        cols = ["t", "x", "psi", "pi_analytic", "bound"]
        grid_rows = []
        for a, b in zip(approxs, budgets):
            vals = a(x)
            ref = oracle.density(a.t, x) if oracle is not None else np.full(npts, np.nan)
            grid_rows.extend((a.t, xi, vi, ri, b.total) for xi, vi, ri in zip(x, vals, ref))
        files.append(export.write_csv(out / "density.csv", cols, grid_rows, meta))
    return files


def _problem(cfg):
    kernel, init = build_model(cfg)
    return InvarianceProblem(Box.from_dict(cfg["safe_set"]), cfg["horizon"], kernel, init)


def run_invariance(cfg, out: Path) -> tuple[list[Path], str]:
    problem = _problem(cfg)
    delta = cfg["partition"].get("delta")
    if delta is None:
        raise ConfigError("invariance tasks take partition.delta")
    kw = {"max_cells": cfg.get("max_cells", 20_000), "quad_tol": quad_spec(cfg).tol}
    task = cfg["task"]
    k = problem.kernel
    if task == "compare":
        report = compare_methods(problem, delta, run_chains=not cfg.get("formula_only", False), **kw)
        rows = [(r["method"], r["estimate"], r["bound"], delta) for r in report.rows]
        meta = _meta(cfg, k, {"delta": delta, "winner": report.winner, "estimate_gap": report.estimate_gap})
        path = export.write_csv(out / "invariance.csv", ["method", "estimate", "bound", "delta"], rows, meta)
        return [path], report.table()
    run = forward_invariance if task == "invariance-forward" else backward_invariance
    res = run(problem, delta, **kw)
    meta = _meta(cfg, k, {"delta": res.delta, "n_cells": res.n_cells}, res.certified)
    path = export.write_csv(out / "invariance.csv", ["method", "estimate", "bound", "delta"],
                            [(res.method, res.estimate, res.bound, res.delta)], meta)
    text = f"{res.method}: estimate {res.estimate:.8f} +/- {res.bound:.6f} (delta {res.delta:.3g}, {res.n_cells} cells)"
    return [path], text


def run_export(cfg, out: Path) -> list[Path]:
    kernel, init = build_model(cfg)
    domain = Box.from_dict(cfg["safe_set"]) if "safe_set" in cfg else working_domain(cfg, kernel, init)
    part = make_partition(cfg, domain)
    spec = quad_spec(cfg)
    chain = build_chain_averaged(kernel, part, spec.tol, spec)
    ex = cfg.get("export", {})
    meta = _meta(cfg, kernel, {"delta": part.delta, "n_cells": part.n})
    files = export.export_chain(chain.matrix, out / "chain", ex.get("format", "tra"), ex.get("threshold", 0.0), meta)
    if ex.get("format", "tra") != "csv":
        files += export.export_chain(chain.matrix, out / "chain", "csv", meta=meta)
    return files


def run(config_path) -> int:
    try:
        cfg = load_config(config_path)
        out = Path(cfg["output_dir"])
        if not out.is_absolute():
            out = Path(config_path).resolve().parent / out
        out.mkdir(parents=True, exist_ok=True)
        task = cfg["task"]
        if task == "density":
            files = run_density(cfg, out)
        elif task == "export":
            files = run_export(cfg, out)
        else:
            files, text = run_invariance(cfg, out)
            print(text)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (QuadratureError, AbstractionError, MemoryError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for f in files:
        print(f)
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="markov-abstraction", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True)
    p_run = sub.add_parser("run", help="run one experiment config")
    p_run.add_argument("config")
    p_val = sub.add_parser("validate", help="check a config against the schema")
    p_val.add_argument("config")
    p_exp = sub.add_parser("export", help="convert a dense chain CSV")
    p_exp.add_argument("chain_file")
    p_exp.add_argument("--format", choices=["tra", "csv"], default="tra")
    p_exp.add_argument("--threshold", type=float, default=0.0)
    p_exp.add_argument("--out", help="output stem (default: next to the input)")
    args = parser.parse_args(argv)

    if args.verb == "run":
        return run(args.config)
    if args.verb == "validate":
        try:
            load_config(args.config)
        except ConfigError as exc:
            print(f"invalid config: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print("ok")
        return EXIT_OK
    try:
        P = export.read_matrix_csv(args.chain_file)
    except (OSError, ValueError) as exc:
        print(f"cannot read chain: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    stem = Path(args.out) if args.out else Path(args.chain_file).with_suffix("")
    meta = export.read_header(args.chain_file)
    for f in export.export_chain(P, stem, args.format, args.threshold, meta):
        print(f)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
