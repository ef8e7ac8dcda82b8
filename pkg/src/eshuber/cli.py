"""Command-line interface: ``eshuber <subcommand> [options]``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Input paths may be ``-`` for stdin. ``ESHUBER_SEED`` sets the default seed.
"""

import argparse
import io
import json
import os
import re
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from .asymptotics import variance_table
from .distributions import aic_bic, fit_ml, fit_normal, loglik_esh
from .exceptions import DegenerateSampleError, ESHError, InvalidParamsError, NumericalError
from .loss import HuberParams, LossParams, loss_table
from .montecarlo import emit_table, parse_config, run_simulation
from .regression import RegressionData, fit_regression
from .univariate import FitConfig, fit_huber_location_scale, fit_univariate

SEED_ENV = "ESHUBER_SEED"
_SEED_LINE = re.compile(r"^\s*seed\s*=", re.MULTILINE)
EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 1, 2, 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _read_text(path):
    if path == "-":
        return sys.stdin.read()
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except FileNotFoundError:
        raise DataError(f"file not found: {path}") from None
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None


def _is_number(tok):
    try:
        float(tok)
        return True
    except ValueError:
        return False


def read_table(text, header="auto"):
    """Parse comma-separated numbers; returns ``(names or None, 2-d array)``.

    ``header="auto"`` treats the first line as a header when its first token is
    not numeric; ``True`` requires a header.
    """
    lines = [(i, ln.strip()) for i, ln in enumerate(text.splitlines(), 1) if ln.strip()]
    if not lines:
        raise DataError("input is empty")
    names = None
    first = [t.strip() for t in lines[0][1].split(",")]
    if header is True or (header == "auto" and not _is_number(first[0])):
        names, lines = first, lines[1:]
    rows = []
    for lineno, ln in lines:
        toks = [t.strip() for t in ln.split(",")]
        try:
            rows.append([float(t) for t in toks])
        except ValueError:
            raise DataError(f"line {lineno}: cannot parse {ln!r} as numbers") from None
        if len(rows[-1]) != len(rows[0]):
            raise DataError(f"line {lineno}: expected {len(rows[0])} columns")
    if not rows:
        raise DataError("no data rows")
    return names, np.array(rows)


def _loss_from_args(args, eps=0.0):
    if args.c1 is None or args.c2 is None:
        raise UsageError("--c1 and --c2 are required")
    return LossParams(args.c1, args.c2, eps)


def _provenance(command, **params):
    return {"tool": "eshuber", "version": __version__, "command": command, "parameters": params}


def _model_entry(name, k, n, logL, theta, sigma, eps=None):
    aic, bic = aic_bic(logL, k, n)
    return {"model": name, "k": k, "theta": theta, "sigma": sigma, "eps": eps,
            "logL": logL, "AIC": aic, "BIC": bic}


def compare_models(x, loss: LossParams, k_huber, nu, tol=1e-8, max_iter=500):
    """Fit ESH, ESN, ESL, ESt, Normal and Huber M; returns a list of model dicts.

    ESH and Huber M are scored with the density generated by their loss
    (Huber M as the ESH loss with ``eps = 0`` and knots ``-k, k``).
    """
    n = x.size
    fit = fit_univariate(x, FitConfig(loss, tol=tol, max_iter=max_iter))
    out = [_model_entry("ESH", 3, n, loglik_esh(x, fit.theta, fit.sigma, fit.eps, loss),
                        fit.theta, fit.sigma, fit.eps)]
    for fam in ("ESN", "ESL", "ESt"):
        m = fit_ml(x, fam, nu_fixed=nu if fam == "ESt" else None)
        out.append(_model_entry(fam, 3, n, m.logL, m.params.theta, m.params.sigma, m.params.eps))
    m = fit_normal(x)
    out.append(_model_entry("Normal", 2, n, m.logL, m.params.theta, m.params.sigma))
    th, sg = fit_huber_location_scale(x, HuberParams(k_huber), tol, max_iter)
    hl = LossParams(-k_huber, k_huber, 0.0)
    out.append(_model_entry("HuberM", 2, n, loglik_esh(x, th, sg, 0.0, hl), th, sg))
    best = min(out, key=lambda e: e["AIC"])
    for e in out:
        e["best_aic"] = e is best
    return out


def _sample_from(args):
    _, arr = read_table(_read_text(args.input))
    if arr.shape[1] != 1:
        raise DataError(f"expected one column, got {arr.shape[1]}")
    return arr[:, 0]


def cmd_fit(args):
    x = _sample_from(args)
    loss = _loss_from_args(args)
    cfg = FitConfig(loss, tol=args.tol, max_iter=args.max_iter, fix_eps=args.eps)
    fit = fit_univariate(x, cfg)
    w = fit.weights
    report = {
        "provenance": _provenance("fit", c1=loss.c1, c2=loss.c2, eps_fixed=args.eps, tol=args.tol,
                                  max_iter=args.max_iter, k=args.k, nu=args.nu, n=int(x.size)),
        "estimates": {"theta": fit.theta, "sigma": fit.sigma, "eps": fit.eps},
        "convergence": {"converged": fit.converged, "iterations": fit.iterations,
                        "final_step_norm": fit.final_step_norm, "kink": fit.kink,
                        "eps_clamped": fit.eps_clamped},
        "objective": fit.objective,
        "weights": {"min": float(w.min()), "max": float(w.max()), "mean": float(w.mean()),
                    "downweighted": int(np.sum(w < w.max() * (1 - 1e-12)))},
    }
    if args.compare:
        report["models"] = compare_models(x, loss, args.k, args.nu, args.tol, args.max_iter)
    return json.dumps(report, indent=2) + "\n"


def cmd_compare(args):
    x = _sample_from(args)
    loss = _loss_from_args(args)
    models = compare_models(x, loss, args.k, args.nu, args.tol, args.max_iter)
    if args.format == "json":
        return json.dumps({"provenance": _provenance("compare", c1=loss.c1, c2=loss.c2, k=args.k,
                                                     nu=args.nu, n=int(x.size)),
                           "models": models}, indent=2) + "\n"
    buf = io.StringIO()
    buf.write("model,k,theta,sigma,eps,logL,AIC,BIC,best_aic\n")
    for m in models:
        eps = "" if m["eps"] is None else repr(m["eps"])
        buf.write(f"{m['model']},{m['k']},{m['theta']!r},{m['sigma']!r},{eps},{m['logL']!r},"
                  f"{m['AIC']!r},{m['BIC']!r},{int(m['best_aic'])}\n")
    return buf.getvalue()


def cmd_fit_reg(args):
    names, arr = read_table(_read_text(args.input), header=True)
    if arr.shape[1] < 2:
        raise DataError("need a response column and at least one covariate")
    y, X = arr[:, 0], arr[:, 1:]
    cov_names = list(names[1:])
    if not args.no_intercept:
        X = np.column_stack([np.ones(len(y)), X])
        cov_names = ["(intercept)"] + cov_names
    loss = _loss_from_args(args)
    fit = fit_regression(RegressionData(y, X),
                         FitConfig(loss, tol=args.tol, max_iter=args.max_iter, fix_eps=args.eps))
    report = {
        "provenance": _provenance("fit-reg", c1=loss.c1, c2=loss.c2, eps_fixed=args.eps,
                                  tol=args.tol, max_iter=args.max_iter,
                                  intercept=not args.no_intercept, n=int(len(y))),
        "coefficients": dict(zip(cov_names, map(float, fit.b))),
        "estimates": {"sigma": fit.sigma, "eps": fit.eps},
        "convergence": {"converged": fit.converged, "iterations": fit.iterations,
                        "final_step_norm": fit.final_step_norm, "kink": fit.kink,
                        "eps_clamped": fit.eps_clamped},
        "objective": fit.objective,
    }
    return json.dumps(report, indent=2) + "\n"


def cmd_simulate(args):
    text = _read_text(args.config)
    cfg = parse_config(text)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    elif not _SEED_LINE.search(text) and os.environ.get(SEED_ENV):
        overrides["seed"] = int(os.environ[SEED_ENV])
    if args.jobs is not None:
        overrides["jobs"] = args.jobs
    if overrides:
        cfg = replace(cfg, **overrides)
    return emit_table(run_simulation(cfg), args.format)


def cmd_asymvar(args):
    loss = _loss_from_args(args, args.eps)
    try:
        n_list = [int(v) for v in args.n.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--n must be a comma-separated list of counts, got {args.n!r}") from None
    tab = variance_table(loss, args.sigma, n_list, method=args.method)
    lines = ["n,var_theta,var_sigma,var_eps"]
    lines += [f"{int(r[0])},{r[1]:.6f},{r[2]:.6f},{r[3]:.6f}" for r in tab]
    return "\n".join(lines) + "\n"


def cmd_loss_table(args):
    loss = _loss_from_args(args, args.eps)
    tab = loss_table(loss, args.start, args.stop, args.step)
    lines = ["u,rho,psi,w"] + [",".join(repr(float(v)) for v in row) for row in tab]
    return "\n".join(lines) + "\n"


def _add_loss(p, eps=False):
    p.add_argument("--c1", type=float, help="left knot (negative)")
    p.add_argument("--c2", type=float, help="right knot (positive)")
    if eps:
        p.add_argument("--eps", type=float, default=0.0, help="skewness")


def _add_fit_opts(p):
    p.add_argument("--eps", type=float, default=None, help="hold the skewness fixed")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=500)


def build_parser():
    ap = _Parser(prog="eshuber", description="Epsilon-skew Huber M-estimation.")
    ap.add_argument("--version", action="version", version=f"eshuber {__version__}")
    ap.add_argument("-o", "--output", default="-", help="output file (default stdout)")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("fit", help="fit location, scale and skewness to a one-column CSV")
    p.add_argument("input")
    _add_loss(p)
    _add_fit_opts(p)
    p.add_argument("--compare", action="store_true", help="add ML and Huber fits with AIC/BIC")
    p.add_argument("--k", type=float, default=1.4, help="Huber tuning constant")
    p.add_argument("--nu", type=float, default=5.0, help="ESt degrees of freedom")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("compare", help="AIC/BIC comparison of ESH, ESN, ESL, ESt, Normal, Huber M")
    p.add_argument("input")
    _add_loss(p)
    p.add_argument("--k", type=float, default=1.4)
    p.add_argument("--nu", type=float, default=5.0)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("fit-reg", help="regression fit; CSV with header, response first")
    p.add_argument("input")
    _add_loss(p)
    _add_fit_opts(p)
    p.add_argument("--no-intercept", action="store_true", help="do not add a column of ones")
    p.set_defaults(func=cmd_fit_reg)

    p = sub.add_parser("simulate", help="run a Monte Carlo experiment from a config file")
    p.add_argument("config")
    p.add_argument("--format", choices=("csv", "markdown"), default="csv")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("asymvar", help="asymptotic variances divided by n")
    _add_loss(p, eps=True)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--n", default="30,50,100,150")
    p.add_argument("--method", choices=("sandwich", "reference"), default="sandwich")
    p.set_defaults(func=cmd_asymvar)

    p = sub.add_parser("loss-table", help="grid of u, rho, psi, w")
    _add_loss(p, eps=True)
    p.add_argument("--from", dest="start", type=float, default=-5.0)
    p.add_argument("--to", dest="stop", type=float, default=5.0)
    p.add_argument("--step", type=float, default=0.1)
    p.set_defaults(func=cmd_loss_table)
    return ap


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required")
        out = args.func(args)
    except UsageError as exc:
        print(f"eshuber: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InvalidParamsError as exc:
        print(f"eshuber: invalid parameters: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, DegenerateSampleError) as exc:
        print(f"eshuber: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, ESHError, np.linalg.LinAlgError) as exc:
        print(f"eshuber: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    if args.output == "-":
        sys.stdout.write(out)
    else:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
