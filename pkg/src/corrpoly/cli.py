"""Command-line front end.

Every command writes ``<command>.csv`` and ``<command>.json`` (the run
manifest) into ``--out``, plus ``<command>.svg`` with ``--plot``.  Exit codes:
0 success, 2 invalid input, 3 numerical failure (including warnings promoted
by ``--strict``).
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import math
import os
import sys
import tempfile
import time
import warnings
from dataclasses import dataclass, fields
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, _core
from .covariance import CovarianceSpec, eval_radial
from .errors import ConvergenceError, FitError, RunWarning, SynthesisError, UnderflowError
from .field import Grid, sample_field, write_field

SERIES_HEADER = ("x", "y", "se", "n", "flag")
PINNING_HEADER = ("h", "f", "method", "domain", "converged")

COMMANDS = (
    "covariance-check",
    "field-sample",
    "free-energy",
    "fractional-moment",
    "pinning",
    "critical-probe",
    "diffusivity",
    "variance",
    "overlap-check",
    "girsanov-check",
    "second-moment-check",
    "weak-disorder",
    "fit",
    "selftest",
)

STREAM_SCHEME = (
    "PCG64(SeedSequence(master_seed, spawn_key=(purpose, group, realization, index))); "
    "purpose 0 = field slice (index = slice), 1 = path sampling, 2 = bootstrap, 3 = auxiliary"
)

NUMERICAL_ERRORS = (ConvergenceError, FitError, SynthesisError, UnderflowError, FloatingPointError)


def _floats(text) -> tuple:
    if isinstance(text, (list, tuple)):
        return tuple(float(v) for v in text)
    return tuple(float(v) for v in str(text).replace(" ", "").split(",") if v)


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off", ""):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt(section: str, default, kind=None, help: str = ""):
    kind = kind or type(default)
    return dataclasses.field(default=default, metadata={"section": section, "kind": kind, "help": help})


@dataclass(frozen=True)
class RunConfig:
    """Every parameter of a run.

    File keys are ``section.name`` (for example ``model.theta``); flags are
    ``--name`` with dashes.  Ladders are comma-separated.
    """

    command: str = _opt("run", "free-energy", str)
    # covariance / environment
    family: str = _opt("model", "generalized-cauchy", str, "covariance family")
    theta: float = _opt("model", 0.5, float, "covariance decay exponent")
    dimension: int = _opt("model", 1, int, "space dimension")
    length_scale: float = _opt("model", 1.0, float, "covariance length scale")
    # lattice
    half_width: int = _opt("grid", 32, int, "sites per side of the origin")
    spacing: float = _opt("grid", 1.0, float, "lattice spacing")
    boundary: str = _opt("grid", "reflecting", str, "reflecting or absorbing")
    # walk
    dt: float = _opt("walk", 1.0, float, "time step")
    n_steps: int = _opt("walk", 16, int, "number of steps (single-horizon commands)")
    cutoff: float = _opt("walk", 4.0, float, "kernel truncation in standard deviations")
    width_constant: float = _opt("walk", 4.0, float, "grid grows to width_constant * t**width_exponent")
    width_exponent: float = _opt("walk", 0.8, float, "see width_constant")
    # disorder averages
    beta: float = _opt("run", 1.0, float, "inverse temperature")
    betas: tuple = _opt("run", (0.0, 0.25, 0.5, 1.0), _floats, "beta ladder")
    ts: tuple = _opt("run", (8.0, 16.0, 32.0, 64.0), _floats, "time ladder")
    realizations: int = _opt("run", 64, int, "disorder realizations")
    paths: int = _opt("run", 16, int, "Gibbs paths per realization")
    pairs: int = _opt("run", 16, int, "path pairs per realization")
    gamma: float = _opt("run", 0.5, float, "fractional moment exponent")
    lam: float = _opt("run", 0.3, float, "Girsanov tilt")
    r_step: int = _opt("run", 0, int, "Girsanov step (0 means n_steps // 2)")
    d_beta: float = _opt("run", 0.05, float, "finite-difference step in beta")
    group: int = _opt("run", 0, int, "stream group")
    # pinning
    potential: str = _opt("pinning", "indicator", str, "indicator, power-law or covariance")
    radius: float = _opt("pinning", 1.0, float, "indicator radius")
    pin_theta: float = _opt("pinning", 0.5, float, "power-law decay exponent")
    pin_length: float = _opt("pinning", 1.0, float, "power-law core length")
    hs: tuple = _opt("pinning", (0.0, 0.05, 0.1, 0.2), _floats, "h ladder")
    h: float = _opt("pinning", 0.05, float, "h for critical-probe")
    domains: tuple = _opt("pinning", (10.0, 20.0, 40.0), _floats, "domain ladder for critical-probe")
    method: str = _opt("pinning", "transfer-growth", str, "transfer-growth or eigenvalue")
    pin_spacing: float = _opt("pinning", 0.25, float, "pinning lattice spacing")
    pin_dt: float = _opt("pinning", 0.05, float, "pinning time step")
    margin: float = _opt("pinning", 8.0, float, "domain margin in localization lengths")
    pin_cutoff: float = _opt("pinning", 4.0, float, "pinning kernel truncation")
    # fit
    input: str = _opt("fit", "", str, "series CSV to fit")
    transform: str = _opt("fit", "loglog-y", str, "loglog-y, loglog-negy or loglog-var")
    n_boot: int = _opt("fit", 1000, int, "bootstrap resamples")
    # output
    seed: int = _opt("output", 0, int, "master seed (unsigned 64-bit)")
    workers: int = _opt("output", 1, int, "worker processes")
    out: str = _opt("output", "out", str, "output directory")
    strict: bool = _opt("output", False, _bool, "promote numerical warnings to exit code 3")
    plot: bool = _opt("output", False, _bool, "also write an SVG plot")

    def __post_init__(self):
        for f in fields(self):
            val = getattr(self, f.name)
            conv = f.metadata["kind"]
            try:
                new = conv(val)
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{f.name}: {exc}") from None
            if new != val or type(new) is not type(val):
                object.__setattr__(self, f.name, new)

    # -- serialization
    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            val = getattr(self, f.name)
            out[f"{f.metadata['section']}.{f.name}"] = list(val) if isinstance(val, tuple) else val
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        names = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, val in data.items():
            section, _, name = key.rpartition(".")
            if name not in names or (section and section != names[name].metadata["section"]):
                raise ValueError(f"unknown config key {key!r}")
            kwargs[name] = val
        return cls(**kwargs)

    @classmethod
    def from_manifest(cls, manifest: dict) -> "RunConfig":
        return cls.from_dict(manifest["config"])

    def to_text(self) -> str:
        lines = []
        for key, val in self.to_dict().items():
            if isinstance(val, list):
                val = ",".join(repr(v) for v in val)
            elif isinstance(val, float):
                val = repr(val)
            lines.append(f"{key} = {val}")
        return "\n".join(lines) + "\n"

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    # -- model objects
    def spec(self) -> CovarianceSpec:
        return CovarianceSpec(self.family, self.theta, self.dimension, self.length_scale)

    def grid(self) -> Grid:
        return Grid(self.dimension, self.half_width, self.spacing, self.boundary)

    def params(self, beta: float | None = None):
        from .polymer import PolymerParams

        return PolymerParams(self.beta if beta is None else beta, self.n_steps, self.dt, self.grid(),
                             self.cutoff)

    def potential_spec(self):
        from .pinning import PotentialSpec

        if self.potential == "indicator":
            return PotentialSpec.indicator(self.dimension, self.radius)
        if self.potential == "power-law":
            return PotentialSpec.power_law(self.pin_theta, self.dimension, self.pin_length)
        if self.potential == "covariance":
            return PotentialSpec.scaled_covariance(self.spec(), 1.0)
        raise ValueError(f"unknown potential {self.potential!r}")

    def numerics(self):
        from .pinning import PinningNumerics

        return PinningNumerics(spacing=self.pin_spacing, dt=self.pin_dt, margin=self.margin,
                               cutoff=self.pin_cutoff)

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise ValueError(f"unknown command {self.command!r}")
        if not 0 <= self.seed <= 2**64 - 1:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        for name in ("dt", "spacing", "length_scale", "pin_spacing", "pin_dt", "cutoff", "pin_cutoff",
                     "radius", "pin_length", "margin"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.boundary not in ("reflecting", "absorbing"):
            raise ValueError("boundary must be reflecting or absorbing")
        if self.method not in ("transfer-growth", "eigenvalue"):
            raise ValueError("method must be transfer-growth or eigenvalue")
        for name in ("betas", "ts", "hs"):
            ladder = getattr(self, name)
            if any(b < a for a, b in zip(ladder, ladder[1:])):
                raise ValueError(f"{name} must be sorted ascending")
        if any(b < 0 for b in self.betas) or self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if any(b <= a for a, b in zip(self.domains, self.domains[1:])):
            raise ValueError("domains must be strictly increasing")
        if self.realizations < 2:
            raise ValueError("realizations must be >= 2")
        # feasibility of the walk kernel on this lattice
        if self.command not in ("pinning", "critical-probe", "fit", "selftest", "covariance-check"):
            if self.dt < self.spacing**2 / 16 or self.cutoff * math.sqrt(self.dt) < self.spacing:
                raise ValueError("dt too small for the lattice spacing (walk kernel would be degenerate)")
        self.spec()
        self.grid()


def read_config_file(path) -> dict:
    """Flat ``section.key = value`` lines; ``#`` starts a comment."""
    data = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        data[key] = val
    return data


# ---------------------------------------------------------------- output

def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


def _atomic_write(path: Path, data: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_bytes(header, rows) -> bytes:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    return ("\n".join(lines) + "\n").encode("utf-8")


def read_series_csv(path):
    from .estimators import EstimateSeries

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != SERIES_HEADER:
            raise ValueError(f"{path}: expected header {','.join(SERIES_HEADER)}")
        rows = list(reader)
    return EstimateSeries(
        [float(r[0]) for r in rows],
        [float(r[1]) for r in rows],
        [float(r[2]) for r in rows],
        [int(r[3]) for r in rows],
        {"source": str(path)},
        [r[4] for r in rows],
    )


def _svg_plot(path: Path, x, y, se, xlabel: str, ylabel: str, loglog: bool) -> None:
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        warnings.warn("matplotlib not installed; plot skipped", RunWarning, stacklevel=2)
        return
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.errorbar(x, y, yerr=se, fmt="o-", ms=3, capsize=2)
    if loglog:
        ax.set_xscale("log")
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    fig.tight_layout()
    matplotlib.rcParams["svg.hashsalt"] = "corrpoly"
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


@dataclass
class Output:
    header: tuple
    rows: list
    results: dict = dataclasses.field(default_factory=dict)
    extra_files: dict = dataclasses.field(default_factory=dict)  # name -> writer(path)
    plot: tuple | None = None  # (x, y, se, xlabel, ylabel, loglog)
    failed: bool = False


def _series_output(series, xlabel, ylabel, loglog=False, results=None) -> Output:
    rows = list(series.rows())
    return Output(SERIES_HEADER, rows, results or {},
                  plot=(series.x_values, series.y_values, series.std_errors, xlabel, ylabel, loglog))


# -------------------------------------------------------------- commands

def cmd_covariance_check(cfg: RunConfig) -> Output:
    """Empirical lag covariance along the first axis against ``Q``."""
    spec, grid = cfg.spec(), cfg.grid()
    n = grid.sites_per_axis
    lags = np.arange(0, grid.half_width + 1)
    per = np.empty((cfg.realizations, lags.size))
    for r in range(cfg.realizations):
        fld = sample_field(spec, grid, cfg.n_steps, cfg.dt, cfg.seed, r, cfg.group)
        s = np.moveaxis(fld.slices, 1, -1)  # first spatial axis last
        for i, lag in enumerate(lags):
            per[r, i] = np.mean(s[..., : n - lag] * s[..., lag:]) / cfg.dt
    y = per.mean(axis=0)
    se = per.std(axis=0, ddof=1) / math.sqrt(cfg.realizations)
    q = eval_radial(spec, lags * grid.spacing)
    z = np.abs(y - q) / np.where(se > 0, se, np.inf)
    flags = ["mismatch" if zi > 4 else "" for zi in z]
    rows = [(lags[i] * grid.spacing, y[i], se[i], cfg.realizations, flags[i]) for i in range(lags.size)]
    return Output(SERIES_HEADER, rows, {"max_z": float(np.max(z)), "target": [float(v) for v in q]},
                  plot=(lags * grid.spacing, y, se, "lag", "covariance", False))


def cmd_field_sample(cfg: RunConfig) -> Output:
    """One field realization: per-slice mean and spread, plus a binary dump."""
    fld = sample_field(cfg.spec(), cfg.grid(), cfg.n_steps, cfg.dt, cfg.seed, 0, cfg.group)
    flat = fld.flat_slices()
    rows = [(k, float(flat[k].mean()), float(flat[k].std()), flat.shape[1], "") for k in range(fld.n_steps)]
    return Output(SERIES_HEADER, rows, {"clipped_mass": fld.clipped_mass},
                  extra_files={"field.bin": lambda p: write_field(p, fld)})


def cmd_free_energy(cfg: RunConfig) -> Output:
    """Quenched free energy ``(1/t) E log W_t`` over the beta ladder."""
    from .estimators import free_energy_curve

    s = free_energy_curve(cfg.spec(), cfg.params(), cfg.betas, cfg.realizations, cfg.seed, cfg.group,
                          cfg.workers)
    return _series_output(s, "beta", "(1/t) E log W_t")


def cmd_fractional_moment(cfg: RunConfig) -> Output:
    """Fractional moment ``(1/t) log E W_t^gamma`` over the beta ladder."""
    from .estimators import fractional_moment_curve

    s = fractional_moment_curve(cfg.spec(), cfg.params(), cfg.betas, cfg.gamma, cfg.realizations, cfg.seed,
                                cfg.group, cfg.workers)
    return _series_output(s, "beta", "(1/t) log E W_t^gamma")


def _pinning_rows(results):
    return [(r.h, r.f_estimate, r.method, r.domain_half_width, bool(r.converged)) for r in results]


def cmd_pinning(cfg: RunConfig) -> Output:
    """Pinning free energy ``f(h)`` over the h ladder."""
    from .pinning import pinning_curve

    res = pinning_curve(cfg.potential_spec(), cfg.hs, cfg.method, cfg.numerics())
    out = Output(PINNING_HEADER, _pinning_rows(res), {"potential": cfg.potential_spec().to_dict()})
    out.plot = ([r.h for r in res], [r.f_estimate for r in res], None, "h", "f(h)", False)
    return out


def cmd_critical_probe(cfg: RunConfig) -> Output:
    """Localized / delocalized verdict at one h from a domain ladder."""
    from .pinning import critical_h_probe

    verdict, res = critical_h_probe(cfg.potential_spec(), cfg.h, cfg.domains, spacing=cfg.pin_spacing)
    return Output(PINNING_HEADER, _pinning_rows(res), {"verdict": verdict})


def _try_fit(series, transform):
    from .estimators import fit_exponent

    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            fit = fit_exponent(series, transform, n_boot=1000)
    except FitError as exc:
        return {"fit": None, "fit_error": str(exc)}
    return {"fit": dataclasses.asdict(fit)}


def cmd_diffusivity(cfg: RunConfig) -> Output:
    """Median maximal displacement of polymer paths over the time ladder, with a slope fit."""
    from .estimators import displacement_curve

    s = displacement_curve(cfg.spec(), cfg.params(), cfg.ts, cfg.realizations, cfg.paths, cfg.seed,
                           cfg.group, cfg.workers, cfg.width_constant, cfg.width_exponent)
    return _series_output(s, "t", "median max |B|", True, _try_fit(s, "loglog-y"))


def cmd_variance(cfg: RunConfig) -> Output:
    """Variance of ``log Z_t`` over the time ladder, with a slope fit."""
    from .estimators import variance_curve

    s = variance_curve(cfg.spec(), cfg.params(), cfg.ts, cfg.realizations, cfg.seed, cfg.group, cfg.workers,
                       cfg.width_constant, cfg.width_exponent)
    return _series_output(s, "t", "Var log Z_t", True, _try_fit(s, "loglog-var"))


CHECK_ROUNDOFF = 1e-10  # exact cases have se = 0 and a roundoff-sized residual


def _check_row(x, diff, se, n, nsig):
    flag = "mismatch" if abs(diff) > nsig * se + CHECK_ROUNDOFF else ""
    return Output(SERIES_HEADER, [(x, diff, se, n, flag)], failed=bool(flag))


def cmd_overlap_check(cfg: RunConfig) -> Output:
    """Beta derivative of the free energy against the replica overlap."""
    from .estimators import overlap_derivative_check

    lhs, rhs, se = overlap_derivative_check(cfg.spec(), cfg.params(), cfg.beta, cfg.d_beta, cfg.realizations,
                                            cfg.pairs, cfg.seed, cfg.group, cfg.workers)
    out = _check_row(cfg.beta, lhs - rhs, se, cfg.realizations, 3)
    out.results = {"lhs": lhs, "rhs": rhs, "combined_se": se}
    return out


def cmd_girsanov_check(cfg: RunConfig) -> Output:
    """Mean of the Girsanov reweighting diagnostic (zero in law)."""
    from .polymer import girsanov_diagnostic

    r_step = cfg.r_step or max(cfg.n_steps // 2, 1)
    mean, se = girsanov_diagnostic(cfg.spec(), cfg.params(), cfg.lam, r_step, cfg.realizations, cfg.seed,
                                   cfg.group)
    out = _check_row(cfg.lam, mean, se, cfg.realizations, 3)
    out.results = {"mean": mean, "se": se, "r_step": r_step}
    return out


def cmd_second_moment_check(cfg: RunConfig) -> Output:
    """Second moment of ``W_t`` against the pinning transfer value."""
    from .polymer import second_moment_check

    mc, pin, se, reliable = second_moment_check(cfg.spec(), cfg.params(), cfg.realizations, cfg.seed, cfg.group)
    out = _check_row(cfg.beta, mc - pin, se, cfg.realizations, 3)
    if not reliable:
        out.rows = [out.rows[0][:4] + ((out.rows[0][4] + ";" if out.rows[0][4] else "") + "heavy-tail",)]
    out.results = {"monte_carlo": mc, "pinning": pin, "se": se, "reliable": reliable}
    return out


def cmd_weak_disorder(cfg: RunConfig) -> Output:
    """Median and quartiles of ``W_t`` along the time ladder with a decay verdict."""
    from .estimators import weak_disorder_diagnostic

    rep = weak_disorder_diagnostic(cfg.spec(), cfg.params(), cfg.beta, cfg.ts, cfg.realizations, cfg.seed,
                                   cfg.group, cfg.workers)
    # IQR-based standard error of a median
    se = 1.2533 * (rep.q75 - rep.q25) / 1.349 / math.sqrt(cfg.realizations)
    rows = [(rep.checkpoints[i], rep.median[i], se[i], cfg.realizations, "") for i in range(rep.checkpoints.size)]
    res = {"verdict": rep.verdict, "q25": rep.q25.tolist(), "q75": rep.q75.tolist(),
           "early_rate": rep.early_rate, "late_rate": rep.late_rate}
    return Output(SERIES_HEADER, rows, res, plot=(rep.checkpoints, rep.median, se, "t", "median W_t", False))


def cmd_fit(cfg: RunConfig) -> Output:
    """Log-log slope fit of a series CSV."""
    from .estimators import fit_exponent

    if not cfg.input:
        raise ValueError("fit needs --input")
    series = read_series_csv(cfg.input)
    fit = fit_exponent(series, cfg.transform, n_boot=cfg.n_boot, rng=cfg.seed)
    sign = -1.0 if cfg.transform == "loglog-negy" else 1.0
    rows = [(x, sign * math.exp(fit.intercept) * x**fit.slope, 0.0, n, "")
            for x, n in zip(series.x_values, series.n_realizations)]
    return Output(SERIES_HEADER, rows, {"fit": dataclasses.asdict(fit), "transform": cfg.transform})


def cmd_selftest(cfg: RunConfig) -> Output:
    """Brute-force oracle checks of the numerical cores."""
    from .selftest import run_all

    checks = run_all()
    rows = [(i, c.error, c.tolerance, 1, "" if c.passed else "fail") for i, c in enumerate(checks)]
    res = {"checks": [{"name": c.name, "error": float(c.error), "tolerance": c.tolerance, "passed": c.passed}
                      for c in checks]}
    return Output(SERIES_HEADER, rows, res, failed=not all(c.passed for c in checks))


HANDLERS = {
    "covariance-check": cmd_covariance_check,
    "field-sample": cmd_field_sample,
    "free-energy": cmd_free_energy,
    "fractional-moment": cmd_fractional_moment,
    "pinning": cmd_pinning,
    "critical-probe": cmd_critical_probe,
    "diffusivity": cmd_diffusivity,
    "variance": cmd_variance,
    "overlap-check": cmd_overlap_check,
    "girsanov-check": cmd_girsanov_check,
    "second-moment-check": cmd_second_moment_check,
    "weak-disorder": cmd_weak_disorder,
    "fit": cmd_fit,
    "selftest": cmd_selftest,
}


# ------------------------------------------------------------------ driver

def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _summarize_warnings(caught) -> list[dict]:
    seen = {}
    for w in caught:
        key = (w.category.__name__, str(w.message))
        seen[key] = seen.get(key, 0) + 1
    return [{"category": c, "message": m, "count": n} for (c, m), n in seen.items()]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def run(cfg: RunConfig) -> int:
    """Execute one command; returns the exit status."""
    cfg.validate()
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    started = datetime.now(timezone.utc).isoformat()
    t0 = time.perf_counter()
    status = 0
    error = None
    old = os.environ.get("CORRPOLY_WORKERS")
    os.environ["CORRPOLY_WORKERS"] = str(cfg.workers)
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            try:
                result = HANDLERS[cfg.command](cfg)
            except NUMERICAL_ERRORS as exc:
                result, status, error = None, 3, f"{type(exc).__name__}: {exc}"
    finally:
        if old is None:
            os.environ.pop("CORRPOLY_WORKERS", None)
        else:
            os.environ["CORRPOLY_WORKERS"] = old
    outputs = {}
    if result is not None:
        csv_path = out_dir / f"{cfg.command}.csv"
        _atomic_write(csv_path, csv_bytes(result.header, result.rows))
        outputs[csv_path.name] = _sha256(csv_path)
        for name, writer in result.extra_files.items():
            path = out_dir / name
            writer(path)
            outputs[name] = _sha256(path)
        if cfg.plot and result.plot is not None:
            x, y, se, xl, yl, loglog = result.plot
            svg = out_dir / f"{cfg.command}.svg"
            with warnings.catch_warnings(record=True) as plot_caught:
                warnings.simplefilter("always")
                _svg_plot(svg, x, y, se, xl, yl, loglog)
            caught.extend(plot_caught)
            if svg.exists():
                outputs[svg.name] = _sha256(svg)
        if result.failed:
            status = 3
    warn_list = _summarize_warnings(caught)
    if cfg.strict and status == 0 and any(issubclass(w.category, RunWarning) for w in caught):
        status = 3
    manifest = {
        "command": cfg.command,
        "config": cfg.to_dict(),
        "version": __version__,
        "backend": _core.BACKEND,
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(),
        "elapsed_seconds": time.perf_counter() - t0,
        "stream_scheme": STREAM_SCHEME,
        "warnings": warn_list,
        "outputs": outputs,
        "results": _jsonable(result.results) if result is not None else {},
        "error": error,
        "exit_status": status,
    }
    _atomic_write(out_dir / f"{cfg.command}.json",
                  (json.dumps(manifest, indent=2, sort_keys=False) + "\n").encode("utf-8"))
    for w in warn_list:
        print(f"warning: {w['category']}: {w['message']} (x{w['count']})", file=sys.stderr)
    if error:
        print(f"error: {error}", file=sys.stderr)
    return status


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="corrpoly", description="Directed polymers in correlated Gaussian "
                                     "environments and Brownian pinning.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name in COMMANDS:
        p = sub.add_parser(name, help=HANDLERS[name].__doc__.splitlines()[0] if HANDLERS[name].__doc__ else None)
        p.add_argument("--config", help="flat section.key = value file; flags override it")
        for f in fields(RunConfig):
            if f.name == "command":
                continue
            flag = "--" + f.name.replace("_", "-")
            if f.metadata["kind"] is _bool:
                p.add_argument(flag, dest=f.name, action="store_const", const=True, default=None,
                               help=f.metadata["help"])
            else:
                p.add_argument(flag, dest=f.name, default=None, help=f.metadata["help"])
    return parser


def config_from_args(args) -> RunConfig:
    data = {}
    if args.config:
        data.update(read_config_file(args.config))
    if "output.workers" not in data and "workers" not in data and os.environ.get("CORRPOLY_WORKERS"):
        data["output.workers"] = os.environ["CORRPOLY_WORKERS"]
    for f in fields(RunConfig):
        if f.name == "command":
            continue
        val = getattr(args, f.name, None)
        if val is not None:
            data = {k: v for k, v in data.items() if k.rpartition(".")[2] != f.name}
            data[f.name] = val
    data = {k: v for k, v in data.items() if k.rpartition(".")[2] != "command"}
    data["command"] = args.command
    return RunConfig.from_dict(data)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
        cfg.validate()
    except (ValueError, OSError) as exc:
        print(f"corrpoly: error: {exc}", file=sys.stderr)
        return 2
    try:
        return run(cfg)
    except (ValueError, OSError) as exc:
        print(f"corrpoly: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
