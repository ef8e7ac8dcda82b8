"""Replicated simulations comparing ESH with ML and symmetric Huber fits.

Each replication draws one sample (univariate contamination mixture, or the
six-coefficient regression model) from its own seed stream
``SeedSequence(seed, spawn_key=(n_index, rep))``, so results do not depend on
execution order. Every requested estimator is run on the same sample. A
replication in which an estimator fails to converge or raises is counted for
that estimator and left out of its moments.
"""

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from typing import Optional, Tuple

import numpy as np

from .distributions import contaminated_esn, fit_ml, sample_mixture
from .exceptions import ESHError, InvalidParamsError
from .loss import HuberParams, LossParams
from .regression import (TRUE_B, fit_huber_regression, fit_regression, fit_regression_ml,
                         generate_regression_sample)
from .univariate import FitConfig, fit_huber_location_scale, fit_univariate

ESTIMATORS = ("ESH", "ESN", "ESL", "ESt", "HuberM")
SETTINGS = ("univariate", "regression")

# (c1, c2) per true skewness
DEFAULT_TUNING = {
    "univariate": {-0.2: (-1.10, 3.70), -0.5: (-0.70, 5.00), -0.8: (-0.10, 6.40)},
    "regression": {-0.2: (-1.10, 5.20), -0.5: (-0.30, 5.30), -0.8: (-0.01, 6.20)},
}


def default_tuning(setting, eps0):
    """Tabulated ``(c1, c2)`` for ``eps0``; raises if there is no entry."""
    try:
        return DEFAULT_TUNING[setting][round(float(eps0), 6)]
    except KeyError:
        raise InvalidParamsError(
            f"no default tuning for setting={setting!r}, eps0={eps0}; give c1 and c2"
        ) from None


@dataclass(frozen=True)
class SimulationConfig:
    setting: str
    eps0: float
    loss: LossParams
    huber_k: float = 1.4
    nu: float = 5.0
    n_list: Tuple[int, ...] = (30, 50, 100, 150)
    replications: int = 1000
    seed: int = 0
    estimators: Tuple[str, ...] = ESTIMATORS
    tol: float = 1e-8
    max_iter: int = 500
    jobs: int = 1

    def __post_init__(self):
        if self.setting not in SETTINGS:
            raise InvalidParamsError(f"setting must be one of {SETTINGS}")
        if not -1 < self.eps0 < 1:
            raise InvalidParamsError("eps0 must lie in (-1, 1)")
        if self.replications < 1:
            raise InvalidParamsError("replications must be at least 1")
        if not self.n_list:
            raise InvalidParamsError("n_list must be nonempty")
        low = 10 if self.setting == "regression" else 3
        if min(self.n_list) < low:
            raise InvalidParamsError(f"sample sizes must be at least {low}")
        bad = set(self.estimators) - set(ESTIMATORS)
        if bad or not self.estimators:
            raise InvalidParamsError(f"unknown estimators {sorted(bad)}")
        if not (self.huber_k > 0 and self.nu > 0 and self.tol > 0 and self.max_iter >= 1):
            raise InvalidParamsError("huber_k, nu and tol must be positive, max_iter >= 1")
        if self.jobs < 1:
            raise InvalidParamsError("jobs must be at least 1")

    def param_names(self, estimator):
        if self.setting == "univariate":
            names = ["theta", "sigma", "eps"]
        else:
            names = [f"b{j}" for j in range(TRUE_B.size)] + ["sigma", "eps"]
        return names[:-1] if estimator == "HuberM" else names

    def truth(self, estimator):
        if self.setting == "univariate":
            t = [0.0, 1.0, self.eps0]
        else:
            t = list(TRUE_B) + [1.0, self.eps0]
        return np.array(t[:-1] if estimator == "HuberM" else t)


@dataclass(frozen=True)
class SummaryRow:
    estimator: str
    parameter: str
    n: int
    estimate: float
    var: float
    mse: float
    re: float
    used: int
    nonconverged: int
    errors: int


@dataclass
class SimulationReport:
    rows: list
    config: Optional[SimulationConfig] = field(default=None, compare=False)

    def cell(self, estimator, parameter, n):
        for r in self.rows:
            if (r.estimator, r.parameter, r.n) == (estimator, parameter, n):
                return r
        raise KeyError((estimator, parameter, n))


def _rng(seed, n_index, rep):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(n_index, rep)))


def _fit_one(cfg: SimulationConfig, est, data):
    """Estimates as an array, or a string naming the failure kind."""
    try:
        if cfg.setting == "univariate":
            if est == "ESH":
                f = fit_univariate(data, FitConfig(cfg.loss, tol=cfg.tol, max_iter=cfg.max_iter))
                return np.array([f.theta, f.sigma, f.eps]) if f.converged else "nonconverged"
            if est == "HuberM":
                return np.array(fit_huber_location_scale(data, HuberParams(cfg.huber_k),
                                                         cfg.tol, cfg.max_iter))
            m = fit_ml(data, est, nu_fixed=cfg.nu if est == "ESt" else None)
            if not m.converged:
                return "nonconverged"
            return np.array([m.params.theta, m.params.sigma, m.params.eps])
        if est == "ESH":
            f = fit_regression(data, FitConfig(cfg.loss, tol=cfg.tol, max_iter=cfg.max_iter))
            return np.r_[f.b, f.sigma, f.eps] if f.converged else "nonconverged"
        if est == "HuberM":
            b, s = fit_huber_regression(data, HuberParams(cfg.huber_k))
            return np.r_[b, s]
        m = fit_regression_ml(data, est, nu_fixed=cfg.nu if est == "ESt" else None)
        return np.r_[m.b, m.sigma, m.eps] if m.converged else "nonconverged"
    except (ESHError, np.linalg.LinAlgError, FloatingPointError, ValueError):
        return "error"


def _replicate(args):
    cfg, n_index, rep = args
    n = cfg.n_list[n_index]
    rng = _rng(cfg.seed, n_index, rep)
    if cfg.setting == "univariate":
        data = sample_mixture(contaminated_esn(cfg.eps0), n, rng)
    else:
        data = generate_regression_sample(n, cfg.eps0, rng)
    return {est: _fit_one(cfg, est, data) for est in cfg.estimators}


def run_replications(cfg: SimulationConfig):
    """Raw per-replication results: ``{n: [ {estimator: array | failure}, ... ]}``."""
    tasks = [(cfg, i, r) for i in range(len(cfg.n_list)) for r in range(cfg.replications)]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(cfg.jobs) as ex:
            results = list(ex.map(_replicate, tasks, chunksize=max(1, len(tasks) // (8 * cfg.jobs))))
    else:
        results = [_replicate(t) for t in tasks]
    out = {n: [] for n in cfg.n_list}
    for (_, i, _), res in zip(tasks, results):
        out[cfg.n_list[i]].append(res)
    return out


def summarize(cfg: SimulationConfig, raw) -> SimulationReport:
    rows = []
    for n in cfg.n_list:
        mse_esh = {}
        cells = []
        for est in cfg.estimators:
            vals = [r[est] for r in raw[n] if not isinstance(r[est], str)]
            failed = [r[est] for r in raw[n] if isinstance(r[est], str)]
            nonconv, errs = failed.count("nonconverged"), failed.count("error")
            truth = cfg.truth(est)
            if vals:
                v = np.array(vals)
                mean = v.mean(axis=0)
                var = v.var(axis=0)
                mse = var + (mean - truth) ** 2
            else:
                mean = var = mse = np.full(truth.size, np.nan)
            for j, name in enumerate(cfg.param_names(est)):
                cells.append((est, name, float(mean[j]), float(var[j]), float(mse[j]),
                              len(vals), nonconv, errs))
                if est == "ESH":
                    mse_esh[name] = float(mse[j])
        for est, name, mean, var, mse, used, nonconv, errs in cells:
            base = mse_esh.get(name, np.nan)
            re = 100.0 * base / mse if mse > 0 else np.nan
            rows.append(SummaryRow(est, name, int(n), mean, var, mse, float(re), used, nonconv, errs))
    return SimulationReport(rows, cfg)


def run_simulation(cfg: SimulationConfig) -> SimulationReport:
    """Run the experiment and aggregate mean, Var, MSE and RE per cell.

    ``RE = 100 * MSE_ESH / MSE_estimator`` for the same parameter, so ESH rows
    read 100 and values below 100 favour ESH. Var uses the ``1/R``
    normalisation, which makes ``MSE = Var + bias^2`` exact.
    """
    return summarize(cfg, run_replications(cfg))


_COLUMNS = [f.name for f in fields(SummaryRow)]
_HEADER = ["estimator", "parameter", "n", "estimate", "Var", "MSE", "RE", "used",
           "nonconverged", "errors"]


def emit_table(report: SimulationReport, fmt="csv"):
    """Render the report as CSV (lossless) or a markdown table."""
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(_HEADER)
        for r in report.rows:
            w.writerow([repr(getattr(r, c)) if isinstance(getattr(r, c), float) else getattr(r, c)
                        for c in _COLUMNS])
        return buf.getvalue()
    if fmt == "markdown":
        lines = ["| " + " | ".join(_HEADER) + " |", "|" + "---|" * len(_HEADER)]
        for r in report.rows:
            re = "" if np.isnan(r.re) else f"{r.re:.0f}"
            lines.append(
                f"| {r.estimator} | {r.parameter} | {r.n} | {r.estimate:.4f} | {r.var:.4f} "
                f"| {r.mse:.4f} | {re} | {r.used} | {r.nonconverged} | {r.errors} |"
            )
        return "\n".join(lines) + "\n"
    raise InvalidParamsError(f"unknown format {fmt!r}")


def parse_table(text) -> SimulationReport:
    """Inverse of ``emit_table(report, "csv")``."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if header != _HEADER:
        raise InvalidParamsError("not a simulation table")
    rows = []
    for rec in reader:
        e, p, n, est, var, mse, re, used, nc, er = rec
        rows.append(SummaryRow(e, p, int(n), float(est), float(var), float(mse), float(re),
                               int(used), int(nc), int(er)))
    return SimulationReport(rows)


_INT_KEYS = {"replications", "seed", "max_iter", "jobs"}
_FLOAT_KEYS = {"eps0", "c1", "c2", "huber_k", "nu", "tol"}


def parse_config(text) -> SimulationConfig:
    """Build a config from ``key = value`` lines; ``#`` starts a comment.

    Keys: setting, eps0, c1, c2, huber_k, nu, n_list, replications, seed,
    estimators, tol, max_iter, jobs. ``n_list`` and ``estimators`` are comma
    separated. Without c1 and c2 the tabulated pair for eps0 is used.
    """
    kv = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidParamsError(f"config line {lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _INT_KEYS | _FLOAT_KEYS | {"n_list", "estimators", "setting"}:
            raise InvalidParamsError(f"config line {lineno}: unknown key {key!r}")
        try:
            if key in _INT_KEYS:
                kv[key] = int(val)
            elif key in _FLOAT_KEYS:
                kv[key] = float(val)
            elif key == "n_list":
                kv[key] = tuple(int(v) for v in val.split(",") if v.strip())
            elif key == "estimators":
                kv[key] = tuple(v.strip() for v in val.split(",") if v.strip())
            else:
                kv[key] = val
        except ValueError:
            raise InvalidParamsError(f"config line {lineno}: bad value {val!r} for {key}") from None
    for req in ("setting", "eps0"):
        if req not in kv:
            raise InvalidParamsError(f"config is missing {req!r}")
    c1, c2 = kv.pop("c1", None), kv.pop("c2", None)
    if (c1 is None) != (c2 is None):
        raise InvalidParamsError("give both c1 and c2 or neither")
    if c1 is None:
        c1, c2 = default_tuning(kv["setting"], kv["eps0"])
    return SimulationConfig(loss=LossParams(c1, c2), **kv)
