"""Command-line interface: ``fbsplit {run,certify,predict,plot}``.

Exit codes: 0 success, 1 usage or runtime error, 2 certificate failure.

Configuration files are JSON objects with an integer ``version`` field
(currently 1). Three kinds are understood:

* experiment: any :class:`fbsplit.harness.ExperimentSpec` field, optionally
  ``builtin`` (a base spec to override), ``out`` and ``plot``;
* explicit problem (``certify`` only): ``A``, ``y``, ``regularizer``, ``lam``,
  optional ``groups``, ``shape`` and ``x_star``;
* rate (``predict`` only): ``regime`` plus the constants it needs.

Unknown keys are rejected.
"""
import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from . import analysis, harness, io
from .estimator import make_penalty
from .smooth import LeastSquares
from .solver import SolverConfig, reference_solution

logger = logging.getLogger("fbsplit")

CONFIG_VERSION = 1
EXIT_OK, EXIT_ERROR, EXIT_CERT = 0, 1, 2

SPEC_KEYS = {f.name for f in fields(harness.ExperimentSpec)}
EXPERIMENT_KEYS = SPEC_KEYS | {"version", "builtin", "out", "plot"}
PROBLEM_KEYS = {"version", "A", "y", "regularizer", "lam", "groups", "shape", "x_star"}
RATE_KEYS = {"version", "regime", "alpha", "nu", "beta", "sigma_m", "sigma_M", "sigma_max",
             "gammas", "smoothness_class", "branch", "tangent_linearization"}
RATE_REGIMES = ("quadratic", "q_general", "r_subspace")


class ConfigError(ValueError):
    pass


# -- config -------------------------------------------------------------------

def load_config(path):
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})")
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be an object")
    version = cfg.get("version")
    if version is None:
        raise ConfigError(f"{path}: missing 'version'")
    if not isinstance(version, int) or version > CONFIG_VERSION or version < 1:
        raise ConfigError(f"{path}: unsupported config version {version!r}")
    return cfg


def config_kind(cfg):
    if "A" in cfg:
        kind, allowed = "problem", PROBLEM_KEYS
    elif "regime" in cfg:
        kind, allowed = "rate", RATE_KEYS
    else:
        kind, allowed = "experiment", EXPERIMENT_KEYS
    unknown = sorted(set(cfg) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {kind} config: {', '.join(unknown)}")
    return kind


def spec_from_config(cfg):
    params = {k: v for k, v in cfg.items() if k in SPEC_KEYS}
    if "shape" in params and params["shape"] is not None:
        params["shape"] = tuple(params["shape"])
    try:
        if "builtin" in cfg:
            return replace(harness.get_builtin(cfg["builtin"]), **params)
        if "name" not in params or "regularizer" not in params:
            raise ConfigError("experiment config needs 'name' and 'regularizer' (or 'builtin')")
        return harness.ExperimentSpec(**params)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc))


def _specs(args, cfg=None):
    if cfg is not None:
        specs = [spec_from_config(cfg)]
    elif args.builtin == "all":
        specs = list(harness.BUILTINS.values())
    else:
        specs = [harness.get_builtin(args.builtin)]
    over = {}
    if getattr(args, "seed", None) is not None:
        over["seed"] = args.seed
    if getattr(args, "max_iters", None) is not None:
        over["max_iters"] = args.max_iters
    if getattr(args, "gamma", None) is not None:
        over["gamma"] = args.gamma
    return [replace(s, **over) for s in specs]


def _kv(key, value):
    print(f"{key}={io.fmt(value)}")


# -- run ----------------------------------------------------------------------

def run_one(spec, out, plot):
    """Run `spec` and write its CSVs (and SVG); returns ``(name, certificate passed, flags)``."""
    report = harness.run_experiment(spec)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    K = report.identification.K if report.identification else None
    io.write_trajectory_csv(report.trajectory, out / f"{spec.name}.trajectory.csv", K)
    io.write_report_csv(report.rows(), out / f"{spec.name}.report.csv")
    if plot:
        rho = report.prediction.rho if report.prediction is not None else None
        tr = report.trajectory
        svg = io.convergence_svg(tr.k, tr.dist, K=K, rho=rho, title=spec.name)
        io.write_svg(svg, out / f"{spec.name}.svg")
    return spec.name, report.certificate.passed, dict(report.flags)


def _workers(n_jobs):
    raw = os.environ.get("FB_PS_THREADS", "1")
    try:
        cap = int(raw)
    except ValueError:
        raise ConfigError(f"FB_PS_THREADS must be an integer, got {raw!r}")
    return max(1, min(cap, n_jobs))


def cmd_run(args):
    cfg = None
    out, plot = args.out, not args.no_plot
    if args.config:
        cfg = load_config(args.config)
        if config_kind(cfg) != "experiment":
            raise ConfigError("run needs an experiment config")
        out = cfg.get("out", out) if args.out == DEFAULT_OUT else out
        plot = plot and bool(cfg.get("plot", True))
    specs = _specs(args, cfg)
    workers = _workers(len(specs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_one, specs, [out] * len(specs), [plot] * len(specs)))
    else:
        results = [run_one(s, out, plot) for s in specs]
    status = EXIT_OK
    for name, cert_ok, flags in results:
        print(name + " " + " ".join(f"{k}={'pass' if v else 'FAIL'}" for k, v in flags.items()))
        if not cert_ok:
            status = EXIT_CERT
    return status


# -- certify ------------------------------------------------------------------

def _problem_from_config(cfg):
    missing = [k for k in ("A", "y", "regularizer", "lam") if k not in cfg]
    if missing:
        raise ConfigError(f"explicit problem config misses {', '.join(missing)}")
    try:
        F = LeastSquares(np.asarray(cfg["A"], dtype=float), np.asarray(cfg["y"], dtype=float))
        J = make_penalty(cfg["regularizer"], cfg["lam"], F.n_features, cfg.get("groups"),
                         cfg.get("shape"))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc))
    return F, J


def cmd_certify(args):
    if args.config:
        cfg = load_config(args.config)
        kind = config_kind(cfg)
        if kind == "rate":
            raise ConfigError("certify needs an experiment or explicit problem config")
    else:
        cfg, kind = None, "experiment"
    if kind == "problem":
        F, J = _problem_from_config(cfg)
        if cfg.get("x_star") is not None:
            x_star = np.asarray(cfg["x_star"], dtype=float)
        else:
            x_star = reference_solution(F, J).x
    else:
        spec = _specs(args, cfg)[0]
        prob = harness.build_problem(spec)
        F, J = prob.F, prob.J
        x_star = reference_solution(F, J, SolverConfig(max_iters=max(spec.max_iters, 200_000))).x
    rep = analysis.certify(F, J, x_star)
    for key, value in rep.items():
        _kv(key, value)
    return EXIT_OK if rep.passed else EXIT_CERT


# -- predict ------------------------------------------------------------------

def predict_from_rate_config(cfg):
    regime = cfg["regime"]
    if regime not in RATE_REGIMES:
        raise ConfigError(f"regime must be one of {RATE_REGIMES}")
    gammas = cfg.get("gammas")
    if not gammas:
        raise ConfigError("rate config needs a non-empty 'gammas' list")
    try:
        if regime == "quadratic":
            return analysis.predict_rate_quadratic(
                cfg["sigma_m"], cfg["sigma_M"], cfg["sigma_max"], gammas,
                cfg.get("smoothness_class", "LinearSubspaceConstantSign"),
                branch=cfg.get("branch", "auto"),
                tangent_linearization=cfg.get("tangent_linearization", False))
        if regime == "q_general":
            return analysis.predict_rate_q_general(cfg["alpha"], cfg["beta"], min(gammas),
                                                   max(gammas))
        return analysis.predict_rate_r_subspace(cfg["alpha"], cfg["nu"], cfg["beta"], gammas)
    except KeyError as exc:
        raise ConfigError(f"regime {regime!r} needs {exc.args[0]!r}")


def cmd_predict(args):
    cfg = load_config(args.config) if args.config else None
    if cfg is not None and config_kind(cfg) == "problem":
        raise ConfigError("predict needs an experiment or rate config")
    if cfg is not None and "regime" in cfg:
        pred = predict_from_rate_config(cfg)
        gammas = cfg["gammas"]
    else:
        spec = _specs(args, cfg)[0]
        prob = harness.build_problem(spec)
        F, J = prob.F, prob.J
        x_star = reference_solution(F, J, SolverConfig(max_iters=max(spec.max_iters, 200_000))).x
        cert = analysis.certify(F, J, x_star)
        if not cert.passed:
            for key, value in cert.items():
                _kv(key, value)
            return EXIT_CERT
        schedule = harness.make_schedule(spec.gamma, F.lipschitz, cert.curvature,
                                         J.smoothness_class,
                                         seed=harness.streams(spec.seed)[harness.STREAM_STARTS])
        pred = harness.predict_for(J, cert.curvature, schedule)
        if pred is None:
            raise ConfigError("step schedule lies outside the range of every rate formula")
        gammas = sorted(set(schedule.bounds))
    _kv("regime", pred.regime)
    for g in gammas:
        print(f"rho[gamma={io.fmt(float(g))}]={io.fmt(pred.rate_at(g))}")
    _kv("rho", pred.rho)
    _kv("gamma_opt", pred.gamma_opt)
    _kv("rho_opt", pred.rho_opt)
    _kv("gamma_validity_hi", pred.gamma_validity[1])
    return EXIT_OK


# -- plot ---------------------------------------------------------------------

def cmd_plot(args):
    cols = io.read_trajectory_csv(args.trajectory)
    K = args.K
    if K is None and "identified" in cols:
        hits = np.nonzero(cols["identified"] > 0)[0]
        K = float(cols["k"][hits[0]]) if hits.size else None
    if args.rho is not None and K is None:
        K = float(cols["k"][0])
    svg = io.convergence_svg(cols["k"], cols["dist"], K=K, rho=args.rho,
                             title=args.title or Path(args.trajectory).stem)
    out = args.out or str(Path(args.trajectory).with_suffix(".svg"))
    io.write_svg(svg, out)
    print(out)
    return EXIT_OK


# -- entry point --------------------------------------------------------------

DEFAULT_OUT = "results"


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; 2 is reserved for certificate failures
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser():
    p = _Parser(prog="fbsplit", description="Forward-Backward local convergence experiments")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def source(sp, default_builtin="lasso-a"):
        g = sp.add_mutually_exclusive_group()
        g.add_argument("--builtin", default=default_builtin,
                       help="builtin experiment name, or 'all' (run only)")
        g.add_argument("--config", help="JSON config file")
        sp.add_argument("--seed", type=int, help="override the experiment seed")
        sp.add_argument("--max-iters", type=int, dest="max_iters", help="cap on FB iterations")
        sp.add_argument("--gamma", help="step policy: auto, inv-beta, const:c, cyclic:c1,c2,"
                                        " random:lo,hi (multiples of 1/beta)")

    r = sub.add_parser("run", help="run experiments and write CSV/SVG outputs")
    source(r)
    r.add_argument("--out", default=DEFAULT_OUT, help="output directory")
    r.add_argument("--no-plot", action="store_true", help="skip the SVG plot")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("certify", help="print the certificate at the minimizer")
    source(c)
    c.set_defaults(func=cmd_certify)

    q = sub.add_parser("predict", help="print the predicted local rate")
    source(q)
    q.set_defaults(func=cmd_predict)

    pl = sub.add_parser("plot", help="SVG convergence profile from a trajectory CSV")
    pl.add_argument("trajectory", help="trajectory CSV written by run")
    pl.add_argument("--rho", type=float, help="predicted rate to overlay")
    pl.add_argument("--K", type=float, help="identification iteration (default: from CSV)")
    pl.add_argument("--out", help="SVG path (default: next to the CSV)")
    pl.add_argument("--title", help="plot title (default: CSV file stem)")
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command in ("certify", "predict") and getattr(args, "builtin", None) == "all":
        print("error: --builtin all is only valid for run", file=sys.stderr)
        return EXIT_ERROR
    try:
        return args.func(args)
    except (ConfigError, io.CSVSchemaError, analysis.StaleCertificateError,
            analysis.RateDomainError, analysis.DegenerateSpectrumError, ValueError,
            OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
