"""Command-line front end.

Subcommands: estimate, project, knn, bo, gradcheck, converge.  Every
command is a pure function of the JSON config file and its input files;
re-running with the same inputs reproduces outputs byte for byte.  All
randomness flows from the single top-level "seed" key (overridable with
--seed) through named SeedSequence substreams.

Exit codes: 0 success, 2 config error, 3 numerical failure.  On failure,
partially written outputs are removed.

Config schema (JSON object):

    seed          int, default 0
    output_dir    str (overridable with --out)
    grid          {"nx": int, "ny": int}        unit-square trapezoid grid
    measure       {"type": "separable_sine", "m_per_axis": int,
                   "decay": float, "amplitude": float, "seed": int?}
    functional    {"type": "linear" | "quadratic" | "ridge" | "poisson_control", ...}
        linear          h1, h2: field-json paths
        quadratic       coeffs: [float]; basis: [paths] or kl_modes: int
        ridge           profile: {...}; basis: [paths] or kl_modes: int (<= 5)
        poisson_control alpha, solver_tol, solver_max_iter
    estimator     {"B": int, "rank_tol": float}
    experiments   {"k_range": [lo, hi], "knn_active_dims": int?,
                   "R": int, "n_init": int, "n_seq": int, "repetitions": int,
                   "b_grid": [ints], "conv_seeds": int,
                   "reference": "proxy" | "closed_form",
                   "grid_res": int, "gradcheck_directions": int,
                   "gradcheck_step": float}
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import asm, bayesopt, fileio, functionals, randfield, surrogate
from .errors import (
    ConfigError,
    EigendecompositionError,
    GradientEvaluationError,
    SolverError,
)
from .hilbert import Subspace, unit_square_space

_PROFILE_TYPES = {
    "linear": lambda p: functionals.LinearProfile(p["weights"]),
    "quadratic": lambda p: functionals.QuadraticProfile(
        p["curvatures"], p.get("slopes")
    ),
    "sine": lambda p: functionals.SineProfile(p["amplitudes"], p["frequencies"]),
}


def _require(cfg, key, kind, where="config"):
    if key not in cfg:
        raise ConfigError(f"{where}: missing key '{key}'")
    value = cfg[key]
    if kind is float and isinstance(value, int):
        value = float(value)
    if not isinstance(value, kind):
        raise ConfigError(f"{where}: key '{key}' must be {kind.__name__}")
    return value


def _positive_int(cfg, key, where):
    v = _require(cfg, key, int, where)
    if v < 1:
        raise ConfigError(f"{where}: key '{key}' must be a positive integer")
    return v


def load_config(path):
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    return cfg


def build_space(cfg):
    grid = _require(cfg, "grid", dict)
    nx = _positive_int(grid, "nx", "grid")
    ny = _positive_int(grid, "ny", "grid")
    if nx < 2 or ny < 2:
        raise ConfigError("grid: nx and ny must be at least 2")
    return unit_square_space(nx, ny)


def build_measure(cfg, space, seed):
    m = _require(cfg, "measure", dict)
    mtype = _require(m, "type", str, "measure")
    if mtype != "separable_sine":
        raise ConfigError(f"measure: unknown type '{mtype}'")
    try:
        return randfield.separable_sine_measure(
            space,
            _positive_int(m, "m_per_axis", "measure"),
            _require(m, "decay", float, "measure"),
            _require(m, "amplitude", float, "measure"),
            seed=m.get("seed", seed),
        )
    except ValueError as exc:
        raise ConfigError(f"measure: {exc}") from exc


def _basis_from_spec(spec, space, measure, where):
    if "basis" in spec:
        paths = spec["basis"]
        if not isinstance(paths, list) or not paths:
            raise ConfigError(f"{where}: 'basis' must be a nonempty list of paths")
        for p in paths:
            if not os.path.exists(p):
                raise ConfigError(f"{where}: basis file not found: {p}")
        fields = [fileio.read_field_json(p, space) for p in paths]
        return Subspace.from_fields(fields, orthonormal=True)
    if "kl_modes" in spec:
        n = _positive_int(spec, "kl_modes", where)
        if n > measure.n_modes:
            raise ConfigError(
                f"{where}: kl_modes={n} exceeds the measure's {measure.n_modes} modes"
            )
        return Subspace(
            space, measure.kl_functions.vectors[:n], orthonormal=True
        )
    raise ConfigError(f"{where}: need either 'basis' paths or 'kl_modes'")


def build_functional(cfg, space, measure):
    spec = _require(cfg, "functional", dict)
    ftype = _require(spec, "type", str, "functional")
    if ftype == "linear":
        for key in ("h1", "h2"):
            path = _require(spec, key, str, "functional")
            if not os.path.exists(path):
                raise ConfigError(f"functional: file not found for '{key}': {path}")
        h1 = fileio.read_field_json(spec["h1"], space)
        h2 = fileio.read_field_json(spec["h2"], space)
        return functionals.linear_functional(h1, h2)
    if ftype == "quadratic":
        coeffs = _require(spec, "coeffs", list, "functional")
        basis = _basis_from_spec(
            spec if "basis" in spec or "kl_modes" in spec else {"kl_modes": len(coeffs)},
            space,
            measure,
            "functional",
        )
        if basis.dim != len(coeffs):
            raise ConfigError(
                f"functional: {len(coeffs)} coeffs for a basis of size {basis.dim}"
            )
        return functionals.quadratic_functional(list(zip(basis.basis, coeffs)))
    if ftype == "ridge":
        prof_spec = _require(spec, "profile", dict, "functional")
        ptype = _require(prof_spec, "type", str, "functional.profile")
        if ptype not in _PROFILE_TYPES:
            raise ConfigError(f"functional.profile: unknown type '{ptype}'")
        try:
            profile = _PROFILE_TYPES[ptype](prof_spec)
        except KeyError as exc:
            raise ConfigError(f"functional.profile: missing key {exc}") from exc
        basis = _basis_from_spec(spec, space, measure, "functional")
        if basis.dim > 5:
            raise ConfigError("functional: ridge dimension capped at 5")
        return functionals.ridge_functional(basis, profile)
    if ftype == "poisson_control":
        try:
            problem = functionals.PoissonControlProblem(
                space,
                alpha=float(spec.get("alpha", 1e-4)),
                solver_tol=float(spec.get("solver_tol", 1e-10)),
                solver_max_iter=int(spec.get("solver_max_iter", 10_000)),
            )
        except ValueError as exc:
            raise ConfigError(f"functional: {exc}") from exc
        return functionals.poisson_control(problem)
    raise ConfigError(f"functional: unknown type '{ftype}'")


def build_estimator_params(cfg):
    est = _require(cfg, "estimator", dict)
    B = _positive_int(est, "B", "estimator")
    rank_tol = est.get("rank_tol", asm.DEFAULT_RANK_TOL)
    if not 0 < rank_tol < 1:
        raise ConfigError("estimator: key 'rank_tol' must lie in (0, 1)")
    return B, float(rank_tol)


class _Outputs:
    """Tracks written files so a failing command leaves nothing behind."""

    def __init__(self, out_dir):
        self.out_dir = out_dir
        self.paths = []
        os.makedirs(out_dir, exist_ok=True)

    def path(self, name):
        p = os.path.join(self.out_dir, name)
        self.paths.append(p)
        return p

    def discard(self):
        for p in self.paths:
            if os.path.exists(p):
                os.remove(p)


def _experiments(cfg):
    exp = cfg.get("experiments", {})
    if not isinstance(exp, dict):
        raise ConfigError("experiments must be an object")
    return exp


def cmd_estimate(cfg, out):
    space = build_space(cfg)
    seed = cfg["seed"]
    measure = build_measure(cfg, space, seed)
    f = build_functional(cfg, space, measure)
    B, rank_tol = build_estimator_params(cfg)
    samples = asm.collect_gradients(f, measure, B, seed)
    estimate = asm.eigendecompose(samples, rank_tol)
    fileio.write_estimate_json(estimate, out.path("estimate.json"))
    prefix = os.path.join(out.out_dir, "samples")
    for p in fileio.write_samples_sidecar(samples, prefix):
        out.paths.append(p)
    top = estimate.retained[: min(10, estimate.rank)]
    fileio.write_csv(
        out.path("spectrum.csv"),
        ["index", "eigenvalue"],
        [(i + 1, v) for i, v in enumerate(top)],
    )
    print(f"estimate: B={B} rank={estimate.rank} written to {out.out_dir}")
    return 0


def _load_estimate_with_samples(estimate_path):
    est = fileio.read_estimate_json(estimate_path)
    prefix = os.path.join(os.path.dirname(os.path.abspath(estimate_path)), "samples")
    inputs, gradients, values = fileio.read_samples_sidecar(prefix)
    if inputs.shape[1] != est.space.n_nodes:
        raise ConfigError("sample sidecar does not match the estimate grid")
    return est, inputs, gradients, values


def cmd_project(cfg, out, estimate_path, n):
    est, inputs, _, values = _load_estimate_with_samples(estimate_path)
    if n < 1 or n > est.rank:
        raise ConfigError(
            f"requested {n} coordinates but the estimate has rank {est.rank}"
        )
    coords = est.eigenfunctions.coefficients(inputs)[:, :n]
    header = [f"x{i + 1}" for i in range(n)] + ["f"]
    fileio.write_csv(
        out.path("scatter.csv"),
        header,
        [tuple(c) + (v,) for c, v in zip(coords, values)],
    )
    if n == 2:
        grid_res = int(_experiments(cfg).get("grid_res", 64))
        dataset = surrogate.ReducedDataset(coords, values, est.eigenfunctions)
        surface = surrogate.gp_surface(dataset, grid_res)
        fileio.write_csv(out.path("surface.csv"), ["x1", "x2", "mean"], surface.rows())
    print(f"project: wrote {n}-coordinate scatter for {len(values)} samples")
    return 0


def cmd_knn(cfg, out, estimate_path):
    est, inputs, _, values = _load_estimate_with_samples(estimate_path)
    exp = _experiments(cfg)
    lo, hi = exp.get("k_range", [1, 20])
    ks = list(range(int(lo), int(hi) + 1))
    if not ks or ks[0] < 1:
        raise ConfigError("experiments: key 'k_range' must give positive K values")
    if len(values) < max(ks) + 1:
        raise ConfigError(
            f"experiments: k_range needs at least {max(ks) + 1} stored samples"
        )
    configured = exp.get("knn_active_dims")
    n_active = est.rank if configured is None else int(configured)
    if n_active < 1 or n_active > est.rank:
        raise ConfigError(
            f"experiments: knn_active_dims must lie in [1, {est.rank}]"
        )
    dataset = surrogate.FieldDataset(
        est.space, inputs, values, est.eigenfunctions, n_active
    )
    mse_l2 = surrogate.loo_cv(dataset, ks, "l2")
    mse_as = surrogate.loo_cv(dataset, ks, "as")
    fileio.write_csv(
        out.path("knn_mse.csv"),
        ["K", "mse_l2", "mse_as"],
        list(zip(ks, mse_l2, mse_as)),
    )
    print(f"knn: best l2 {mse_l2.min():.4g}, best as {mse_as.min():.4g}")
    return 0


def cmd_bo(cfg, out):
    space = build_space(cfg)
    seed = cfg["seed"]
    measure = build_measure(cfg, space, seed)
    f = build_functional(cfg, space, measure)
    exp = _experiments(cfg)
    R = _positive_int(exp, "R", "experiments")
    reps = _positive_int(exp, "repetitions", "experiments")
    n_init = int(exp.get("n_init", 10))
    n_seq = int(exp.get("n_seq", 40))
    if n_init < 2:
        raise ConfigError("experiments: key 'n_init' must be at least 2")
    comparison = bayesopt.compare_methods(
        f, measure, R, reps, base_seed=seed, n_init=n_init, n_seq=n_seq
    )
    rows = []
    for trace in comparison.traces:
        for it, best in enumerate(trace.best):
            rows.append((it, best, trace.method, trace.seed))
    fileio.write_csv(out.path("bo_traces.csv"), ["iteration", "best", "method", "seed"], rows)
    rows = []
    for method, pct in comparison.summary.items():
        for it in range(pct.shape[0]):
            rows.append((it, pct[it, 0], pct[it, 1], pct[it, 2], method))
    fileio.write_csv(
        out.path("bo_summary.csv"), ["iteration", "p10", "p50", "p90", "method"], rows
    )
    finals = {m: comparison.summary[m][-1, 1] for m in comparison.summary}
    print(f"bo: final medians {finals}")
    return 0


def cmd_gradcheck(cfg, out):
    space = build_space(cfg)
    seed = cfg["seed"]
    measure = build_measure(cfg, space, seed)
    f = build_functional(cfg, space, measure)
    exp = _experiments(cfg)
    n_dir = int(exp.get("gradcheck_directions", 10))
    step = float(exp.get("gradcheck_step", functionals.RIESZ_FD_STEP))
    fields = measure.sample(n_dir + 1, seed)
    report = functionals.check_gradient(f, fields[0], fields[1:], step)
    fileio.write_csv(
        out.path("gradcheck.csv"),
        ["direction", "rel_error"],
        [(i + 1, e) for i, e in enumerate(report.relative_errors)],
    )
    print(f"gradcheck: max relative error {report.max_error:.3e} at step {step:g}")
    return 0


def cmd_converge(cfg, out):
    space = build_space(cfg)
    seed = cfg["seed"]
    measure = build_measure(cfg, space, seed)
    f = build_functional(cfg, space, measure)
    exp = _experiments(cfg)
    b_grid = exp.get("b_grid", [50, 100, 200, 400, 800, 1600])
    conv_seeds = int(exp.get("conv_seeds", 8))
    ref_kind = exp.get("reference", "proxy")
    if ref_kind == "closed_form":
        if not isinstance(f, functionals.QuadraticFunctional):
            raise ConfigError(
                "experiments: reference 'closed_form' needs a quadratic functional"
            )
        reference = asm.quadratic_exact_operator(f, measure)
    elif ref_kind == "proxy":
        reference = None
    else:
        raise ConfigError(f"experiments: unknown reference '{ref_kind}'")
    try:
        report = asm.convergence_diagnostic(
            f, measure, b_grid, reference=reference, seeds=conv_seeds, base_seed=seed
        )
    except ValueError as exc:
        raise ConfigError(f"experiments: {exc}") from exc
    fileio.write_csv(
        out.path("convergence.csv"),
        ["B", "mean_error"],
        list(zip(report.B_grid, report.mean_errors)),
    )
    with open(out.path("convergence_meta.json"), "w") as fh:
        json.dump(
            {
                "slope": report.slope,
                "reference_is_proxy": report.reference_is_proxy,
                "seeds": conv_seeds,
            },
            fh,
            sort_keys=True,
        )
        fh.write("\n")
    print(f"converge: slope {report.slope:.3f} (proxy={report.reference_is_proxy})")
    return 0


def make_parser():
    parser = argparse.ArgumentParser(
        prog="funasm",
        description="Active subspace analysis of functionals on gridded function spaces",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text, **extra):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        for flag, kwargs in extra.items():
            p.add_argument(flag, **kwargs)
        return p

    add("estimate", "collect gradients and eigendecompose the Gram matrix")
    add(
        "project",
        "export scatter/surface CSVs in the leading coordinates",
        **{
            "--estimate": {"required": True, "help": "asm-json file from `estimate`"},
            "-n": {"type": int, "required": True, "dest": "n", "help": "coordinates"},
        },
    )
    add(
        "knn",
        "leave-one-out KNN comparison of L2 vs active distance",
        **{"--estimate": {"required": True, "help": "asm-json file from `estimate`"}},
    )
    add("bo", "compare optimization in random vs estimated subspaces")
    add("gradcheck", "finite-difference check of the configured gradient")
    add("converge", "operator-error decay over a grid of sample sizes")
    return parser


def main(argv=None):
    args = make_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        cfg["seed"] = args.seed if args.seed is not None else int(cfg.get("seed", 0))
        out_dir = args.out or cfg.get("output_dir")
        if not out_dir:
            raise ConfigError("config: missing key 'output_dir' (or pass --out)")
        out = _Outputs(out_dir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    try:
        if args.command == "estimate":
            return cmd_estimate(cfg, out)
        if args.command == "project":
            return cmd_project(cfg, out, args.estimate, args.n)
        if args.command == "knn":
            return cmd_knn(cfg, out, args.estimate)
        if args.command == "bo":
            return cmd_bo(cfg, out)
        if args.command == "gradcheck":
            return cmd_gradcheck(cfg, out)
        if args.command == "converge":
            return cmd_converge(cfg, out)
        raise ConfigError(f"unknown command {args.command}")
    except ConfigError as exc:
        out.discard()
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (SolverError, EigendecompositionError, GradientEvaluationError) as exc:
        out.discard()
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


def console_entry():
    sys.exit(main())


if __name__ == "__main__":
    console_entry()
