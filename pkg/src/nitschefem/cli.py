"""Config-driven command line front end.

Two subcommands, both driven by a JSON config: ``study`` runs a
manufactured-solution convergence study and writes one CSV per enforcement
variant plus a convergence figure; ``trace`` estimates trace constants per
mesh and condition set and writes a CSV plus a figure.  Exit codes: 0 on
success, 2 on configuration errors, 3 when any study/trace row failed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import formlib, reports
from .assemble import StudySpec, run_convergence
from .errors import ConfigError, DegeneratePencilError, PencilSizeError
from .formlib import EnforcementVariant, MaterialParams
from .mesh import BoundaryPartition, RectDomain, SIDES, build_mesh
from .spline import tensor_space_for_mesh
from .traceconst import (NitscheConstants, assemble_trace_pencil,
                         largest_finite_eigenvalue, rayleigh_sample)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_FAILED_ROWS = 3

_TOP_KEYS = {"problem", "components", "degree", "domain", "meshes",
             "dirichlet_sides", "gamma", "variants", "solution", "material",
             "constants", "quadrature_points", "out_dir", "label"}
_SOLUTION_KEYS = {"kind", "a", "b", "amplitude"}
_MATERIAL_KEYS = {"youngs_modulus", "poisson_ratio", "thickness"}
_CONSTANTS_KEYS = {"mode", "c_tr", "c_pen"}
_VARIANTS = {v.value: v for v in EnforcementVariant}


def _expect(cond, msg):
    if not cond:
        raise ConfigError(msg)


@dataclass
class RunConfig:
    kind: formlib.ProblemKind
    degree: int
    domain: RectDomain
    meshes: list
    partition: BoundaryPartition
    gamma: object
    variants: tuple
    solution: str
    solution_args: dict
    params: MaterialParams
    constants_mode: str
    explicit_constants: object
    n_points: object
    out_dir: str
    label: str


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    _expect(isinstance(raw, dict), "config root must be a JSON object")
    unknown = set(raw) - _TOP_KEYS
    _expect(not unknown, f"unknown config keys: {sorted(unknown)}")

    problem = raw.get("problem")
    _expect(problem in (formlib.POISSON, formlib.BIHARMONIC, formlib.PLATE),
            "problem must be one of 'poisson', 'biharmonic', 'plate'")
    components = raw.get("components", 1)
    _expect(isinstance(components, int) and components >= 1,
            "components must be a positive integer")
    try:
        kind = formlib.ProblemKind(problem, components)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    degree = raw.get("degree")
    _expect(isinstance(degree, int) and degree >= 1, "degree must be a positive integer")
    _expect(degree >= kind.min_degree,
            f"{problem} needs degree >= {kind.min_degree}")

    dom = raw.get("domain", [1.0, 1.0])
    _expect(isinstance(dom, list) and len(dom) == 2
            and all(isinstance(v, (int, float)) and v > 0 for v in dom),
            "domain must be [length_x, length_y] with positive entries")
    domain = RectDomain(float(dom[0]), float(dom[1]))

    meshes = raw.get("meshes")
    _expect(isinstance(meshes, list) and meshes, "meshes must be a nonempty list")
    for entry in meshes:
        _expect(isinstance(entry, list) and len(entry) == 2
                and all(isinstance(v, int) and v >= 1 for v in entry),
                "each mesh entry must be [nx, ny] with positive integers")
    meshes = [tuple(entry) for entry in meshes]

    dsides = raw.get("dirichlet_sides")
    _expect(isinstance(dsides, dict), "dirichlet_sides must be an object")
    expected_sets = [str(i + 1) for i in range(kind.n_partition_sets)]
    _expect(sorted(dsides) == sorted(expected_sets),
            f"dirichlet_sides must carry exactly the sets {expected_sets}")
    per_set = []
    for key in expected_sets:
        sides = dsides[key]
        _expect(isinstance(sides, list) and sides
                and all(s in SIDES for s in sides),
                f"dirichlet_sides[{key!r}] must be a nonempty list from {SIDES}")
        per_set.append(tuple(sides))
    try:
        partition = BoundaryPartition.from_dirichlet_sides(*per_set)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    constants = raw.get("constants", {"mode": "estimate-coarsest"})
    _expect(isinstance(constants, dict), "constants must be an object")
    unknown = set(constants) - _CONSTANTS_KEYS
    _expect(not unknown, f"unknown constants keys: {sorted(unknown)}")
    mode = constants.get("mode", "estimate-coarsest")
    _expect(mode in ("estimate-coarsest", "estimate-each", "explicit"),
            "constants mode must be estimate-coarsest, estimate-each or explicit")

    n_sets = kind.n_constant_sets
    gamma = raw.get("gamma", 2.0)
    if isinstance(gamma, (int, float)):
        gammas = (float(gamma),) * n_sets
    else:
        _expect(isinstance(gamma, list) and len(gamma) == n_sets
                and all(isinstance(g, (int, float)) for g in gamma),
                f"gamma must be a number or a list of {n_sets} numbers")
        gammas = tuple(float(g) for g in gamma)
    if mode != "explicit":
        for g in gammas:
            _expect(g > 1.0, "gamma must lie in the open interval (1, inf):"
                    " values <= 1 lose coercivity")

    explicit = None
    if mode == "explicit":
        c_tr = constants.get("c_tr")
        c_pen = constants.get("c_pen")
        for name, vals in (("c_tr", c_tr), ("c_pen", c_pen)):
            _expect(isinstance(vals, list) and len(vals) == n_sets
                    and all(isinstance(v, (int, float)) and v > 0 for v in vals),
                    f"explicit constants need {name} as {n_sets} positive numbers")
        explicit = NitscheConstants.explicit(tuple(c_tr), tuple(c_pen))
    else:
        _expect("c_tr" not in constants and "c_pen" not in constants,
                "c_tr/c_pen are only accepted with the explicit mode")

    variants_raw = raw.get("variants", ["nitsche"])
    _expect(isinstance(variants_raw, list) and variants_raw
            and all(v in _VARIANTS for v in variants_raw),
            f"variants must be a nonempty list from {sorted(_VARIANTS)}")
    variants = tuple(_VARIANTS[v] for v in variants_raw)

    solution = raw.get("solution", {"kind": "trig"})
    _expect(isinstance(solution, dict), "solution must be an object")
    unknown = set(solution) - _SOLUTION_KEYS
    _expect(not unknown, f"unknown solution keys: {sorted(unknown)}")
    sol_kind = solution.get("kind", "trig")
    sol_args = {}
    if sol_kind == "trig":
        for key in ("a", "b"):
            val = solution.get(key, 1)
            _expect(isinstance(val, int) and val >= 1,
                    f"solution.{key} must be a positive integer")
            sol_args[key] = val
        amp = solution.get("amplitude", 1.0)
        _expect(isinstance(amp, (int, float)) and amp != 0,
                "solution.amplitude must be a nonzero number")
        sol_args["amplitude"] = float(amp)
    else:
        _expect(sol_kind in ("poly_1", "poly_2", "poly_3"),
                "solution.kind must be trig, poly_1, poly_2 or poly_3")
        _expect(set(solution) <= {"kind"},
                "poly solutions accept no extra solution keys")

    material = raw.get("material", {})
    _expect(isinstance(material, dict), "material must be an object")
    unknown = set(material) - _MATERIAL_KEYS
    _expect(not unknown, f"unknown material keys: {sorted(unknown)}")
    try:
        params = MaterialParams(**{k: float(v) for k, v in material.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid material parameters: {exc}") from exc

    n_points = raw.get("quadrature_points")
    if n_points is not None:
        _expect(isinstance(n_points, int) and 1 <= n_points <= 20,
                "quadrature_points must be an integer in [1, 20]")

    out_dir = raw.get("out_dir", ".")
    _expect(isinstance(out_dir, str) and out_dir, "out_dir must be a path string")
    label = raw.get("label", f"{problem}_p{degree}")
    _expect(isinstance(label, str) and label, "label must be a nonempty string")

    return RunConfig(kind, degree, domain, meshes, partition, gammas, variants,
                     sol_kind, sol_args, params, mode, explicit, n_points,
                     out_dir, label)


def cmd_study(cfg: RunConfig, out_dir, seed, threads):
    if len(cfg.meshes) < 3:
        raise ConfigError("a convergence study needs at least three meshes")
    hs = [build_mesh(cfg.domain, nx, ny).h for nx, ny in cfg.meshes]
    _expect(all(h1 < h0 for h0, h1 in zip(hs, hs[1:])),
            "the mesh sequence must have strictly decreasing h")
    spec = StudySpec(kind=cfg.kind, degree=cfg.degree, meshes=cfg.meshes,
                     partition=cfg.partition, solution=cfg.solution,
                     solution_args=cfg.solution_args, params=cfg.params,
                     domain=cfg.domain, gamma=cfg.gamma, variants=cfg.variants,
                     constants_mode=cfg.constants_mode,
                     explicit_constants=cfg.explicit_constants,
                     n_points=cfg.n_points)
    try:
        result = run_convergence(spec, threads=threads)
    except (PencilSizeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    os.makedirs(out_dir, exist_ok=True)
    failed = 0
    for variant, report in result.items():
        path = os.path.join(out_dir, f"{cfg.label}_{variant.value}.csv")
        reports.write_study_csv(path, report)
        print(f"wrote {path}")
        failed += report.n_failed
    fig_path = os.path.join(out_dir, f"{cfg.label}_convergence.png")
    reports.render_study_figure(fig_path, result,
                                f"{cfg.kind.name} p={cfg.degree}")
    print(f"wrote {fig_path}")
    if failed:
        print(f"{failed} row(s) failed to solve", file=sys.stderr)
        return EXIT_FAILED_ROWS
    return EXIT_OK


def cmd_trace(cfg: RunConfig, out_dir, seed, threads):
    _expect(cfg.constants_mode != "explicit",
            "the trace command estimates constants; explicit mode has nothing to do")
    rng = np.random.default_rng(seed)
    labels = formlib.constant_labels(cfg.kind)
    factor = formlib.trace_constant_factor(cfg.kind)
    rows = []
    failed = 0
    for nx, ny in cfg.meshes:
        mesh = build_mesh(cfg.domain, nx, ny)
        space = tensor_space_for_mesh(mesh, cfg.degree, cfg.kind.components)
        for comp in range(1, cfg.kind.n_constant_sets + 1):
            row = {"nx": nx, "ny": ny, "h": mesh.h, "dofs": space.n_scalar,
                   "set": comp, "operator": labels[comp - 1],
                   "gamma": cfg.gamma[comp - 1]}
            try:
                pencil = assemble_trace_pencil(cfg.kind, cfg.params, mesh,
                                               space, cfg.partition, comp,
                                               cfg.n_points)
                lam = largest_finite_eigenvalue(pencil)
                sampled = rayleigh_sample(pencil, 200, rng)
                row["lambda_max"] = lam
                row["c_tr"] = factor * lam
                row["c_pen"] = cfg.gamma[comp - 1] ** 2 * factor * lam
                row["rayleigh_ratio"] = sampled / lam if lam > 0 else None
            except (DegeneratePencilError, PencilSizeError) as exc:
                print(f"mesh {nx}x{ny} set {comp}: {exc}", file=sys.stderr)
                row.update(lambda_max=None, c_tr=None, c_pen=None,
                           rayleigh_ratio=None)
                failed += 1
            rows.append(row)
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"{cfg.label}_trace.csv")
    reports.write_trace_csv(path, rows)
    print(f"wrote {path}")
    plotted = [r for r in rows if r.get("c_tr") is not None]
    if plotted:
        fig_path = os.path.join(out_dir, f"{cfg.label}_trace.png")
        reports.render_trace_figure(fig_path, plotted,
                                    f"{cfg.kind.name} p={cfg.degree} trace constants")
        print(f"wrote {fig_path}")
    return EXIT_FAILED_ROWS if failed else EXIT_OK


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="nitschefem",
        description="Weak-boundary B-spline solvers: convergence studies and"
                    " trace-constant estimation")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("study", "run a manufactured-solution convergence study"),
                            ("trace", "estimate trace constants per mesh")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="path to a JSON run configuration")
        p.add_argument("--out", default=None,
                       help="output directory (default: config out_dir or '.')")
        p.add_argument("--seed", type=int, default=0,
                       help="seed for random-vector diagnostics only")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads for study rows"
                            " (default: NITSCHE_THREADS or 1)")
    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    threads = args.threads
    if threads is None:
        env = os.environ.get("NITSCHE_THREADS", "1")
        try:
            threads = max(1, int(env))
        except ValueError:
            print(f"ignoring invalid NITSCHE_THREADS={env!r}", file=sys.stderr)
            threads = 1
    try:
        cfg = load_config(args.config)
        out_dir = args.out or cfg.out_dir
        if args.command == "study":
            return cmd_study(cfg, out_dir, args.seed, threads)
        return cmd_trace(cfg, out_dir, args.seed, threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
