"""Disorder-averaged curves, exponent fits and disorder diagnostics.

Every curve fans realizations out as independent tasks and folds the
results in realization order, so the numbers do not depend on the number of
workers.  Realization ``r`` always reads field stream ``(group, r)``.
"""
from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from .errors import BoundaryMassWarning, DroppedPointWarning, FitError, HeavyTailWarning, RunWarning
from .field import Grid, sample_field
from .polymer import (
    BOUNDARY_FLAG,
    PolymerParams,
    _check_underflow,
    forward_pass,
    heavy_tail_share,
    mean_log_estimate,
    overlap_terms,
    sample_path_array,
)
from .seeding import BOOTSTRAP, PATHS, as_streams

EXCLUSION_FLAG = 0.01
TRANSFORMS = ("loglog-negy", "loglog-y", "loglog-var")


# ---------------------------------------------------------------- plumbing

def resolve_workers(workers: int | None = None) -> int:
    """Explicit value, else ``CORRPOLY_WORKERS``, else 1."""
    if workers is None:
        workers = int(os.environ.get("CORRPOLY_WORKERS", "1") or 1)
    workers = int(workers)
    if workers < 1:
        raise ValueError("workers must be at least 1")
    return workers


def _capturing(func, item):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        out = func(item)
    return out, [(w.category, str(w.message)) for w in caught]


def parallel_map(func, items, workers: int | None = None) -> list:
    """``[func(i) for i in items]``, optionally over a process pool.

    Results come back in input order whatever the completion order, and
    warnings raised in worker processes are re-issued here in that order.
    """
    items = list(items)
    workers = resolve_workers(workers)
    if workers == 1 or len(items) <= 1:
        return [func(i) for i in items]
    task = partial(_capturing, func)
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        out = list(pool.map(task, items, chunksize=max(1, len(items) // (4 * workers))))
    for _, caught in out:
        for category, message in caught:
            warnings.warn(message, category, stacklevel=2)
    return [o[0] for o in out]


@dataclass
class EstimateSeries:
    """A curve of disorder averages.

    ``replicates`` keeps one row per realization (NaN where excluded) so
    fits can bootstrap whole realizations; ``statistic`` says how a column
    of replicates reduces to ``y`` (``mean``, ``variance`` or ``median``).
    """

    x_values: np.ndarray
    y_values: np.ndarray
    std_errors: np.ndarray
    n_realizations: np.ndarray
    metadata: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)
    replicates: np.ndarray | None = None
    statistic: str = "mean"

    def __post_init__(self):
        self.x_values = np.asarray(self.x_values, dtype=float)
        self.y_values = np.asarray(self.y_values, dtype=float)
        self.std_errors = np.asarray(self.std_errors, dtype=float)
        n = self.x_values.size
        self.n_realizations = np.broadcast_to(np.asarray(self.n_realizations, dtype=np.int64), (n,)).copy()
        if not self.flags:
            self.flags = [""] * n
        if not (self.y_values.size == self.std_errors.size == len(self.flags) == n):
            raise ValueError("series fields have different lengths")
        if np.any(np.diff(self.x_values) < 0):
            raise ValueError("x_values must be sorted")
        if not np.all(np.isfinite(self.std_errors)) or np.any(self.std_errors < 0):
            raise ValueError("std_errors must be finite and nonnegative")

    def __len__(self):
        return self.x_values.size

    def rows(self):
        for i in range(len(self)):
            yield (float(self.x_values[i]), float(self.y_values[i]), float(self.std_errors[i]),
                   int(self.n_realizations[i]), self.flags[i])


@dataclass(frozen=True)
class ExponentFit:
    slope: float
    intercept: float
    ci_low: float
    ci_high: float
    r_squared: float
    n_boot: int
    n_points: int = 0

    def covers(self, value: float) -> bool:
        return self.ci_low <= value <= self.ci_high


def _reduce(col: np.ndarray, statistic: str) -> float:
    col = col[np.isfinite(col)]
    if col.size == 0:
        return float("nan")
    if statistic == "mean":
        return float(col.mean())
    if statistic == "variance":
        return float(col.var(ddof=1)) if col.size > 1 else float("nan")
    if statistic == "median":
        return float(np.median(col))
    raise ValueError(f"unknown statistic {statistic!r}")


def _mean_se(col: np.ndarray) -> tuple[float, float, int]:
    good = col[np.isfinite(col)]
    n = good.size
    if n == 0:
        return float("nan"), 0.0, 0
    se = float(good.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return float(good.mean()), se, n


def _variance_se(col: np.ndarray) -> tuple[float, float, int]:
    """Sample variance with the fourth-moment delta-method standard error."""
    good = col[np.isfinite(col)]
    n = good.size
    if n < 2:
        return float("nan"), 0.0, n
    s2 = float(good.var(ddof=1))
    m4 = float(np.mean((good - good.mean()) ** 4))
    var_s2 = (m4 - (n - 3) / (n - 1) * s2**2) / n
    return s2, math.sqrt(max(var_s2, 0.0)), n


def _exclusion_flags(data: np.ndarray) -> list[str]:
    flags = []
    for col in data.T:
        bad = int(np.sum(~np.isfinite(col)))
        flags.append("excluded" if bad > EXCLUSION_FLAG * col.size else "")
    return flags


def _merge_flag(a: str, b: str) -> str:
    return ";".join(x for x in (a, b) if x)


def _boundary_flags(flags: list[str], masses: np.ndarray) -> list[str]:
    worst = masses.max(axis=0) if masses.size else np.zeros(len(flags))
    out = []
    for f, m in zip(flags, worst):
        if m > BOUNDARY_FLAG:
            f = _merge_flag(f, "boundary")
        out.append(f)
    if np.any(worst > BOUNDARY_FLAG):
        warnings.warn(
            f"boundary occupancy up to {worst.max():.3g} exceeds {BOUNDARY_FLAG:g}; affected points flagged",
            BoundaryMassWarning,
            stacklevel=3,
        )
    return out


def _meta(spec, params: PolymerParams, streams, group, **extra) -> dict:
    g = params.grid
    meta = {
        "master_seed": int(streams.master_seed),
        "group": int(group),
        "spec": spec.to_dict(),
        "beta": params.beta,
        "n_steps": params.n_steps,
        "dt": params.dt,
        "grid": g.to_dict(),
        "kernel_cutoff": params.kernel_cutoff,
    }
    meta.update(extra)
    return meta


def params_for_time(template: PolymerParams, t: float, width_constant: float = 4.0,
                    width_exponent: float = 0.8) -> PolymerParams:
    """Template adjusted to horizon ``t``.

    The grid half-width grows to at least ``width_constant * t**width_exponent``
    (position units), which keeps the walk off the boundary at large ``t``.
    """
    n_steps = int(round(t / template.dt))
    if n_steps < 1 or not math.isclose(n_steps * template.dt, t, rel_tol=1e-9):
        raise ValueError(f"t={t:g} is not a positive multiple of dt={template.dt:g}")
    g = template.grid
    need = int(math.ceil(width_constant * t**width_exponent / g.spacing - 1e-9))
    grid = g.replace(half_width=max(g.half_width, need))
    return template.replace(n_steps=n_steps, grid=grid)


# ------------------------------------------------------------ free energy

def _log_w_task(r, spec, template, betas, streams, group):
    fld = sample_field(spec, template.grid, template.n_steps, template.dt, streams, r, group)
    lw = np.empty(len(betas))
    bm = np.empty(len(betas))
    for i, b in enumerate(betas):
        p = template.replace(beta=b)
        fp = forward_pass(fld, p)
        bm[i] = fp.boundary_mass()
        if b == 0 and p.grid.boundary == "reflecting":
            lw[i] = 0.0
            continue
        _check_underflow(fp, fld)
        lw[i] = fp.log_z - 0.5 * b * b * p.t
    return lw, bm


def log_w_matrix(spec, template: PolymerParams, beta_list, realizations: int, rng, group: int = 0,
                 workers: int | None = None):
    """``log W_t`` per (realization, beta) with one shared field per realization."""
    streams = as_streams(rng)
    betas = [float(b) for b in beta_list]
    task = partial(_log_w_task, spec=spec, template=template, betas=betas, streams=streams, group=group)
    out = parallel_map(task, range(realizations), workers)
    lw = np.array([o[0] for o in out]).reshape(realizations, len(betas))
    bm = np.array([o[1] for o in out]).reshape(realizations, len(betas))
    return lw, bm


def free_energy_curve(spec, params_template: PolymerParams, beta_list, realizations: int, rng,
                      group: int = 0, workers: int | None = None) -> EstimateSeries:
    """``(1/t) E log W_t`` over a beta ladder with common random numbers."""
    betas = np.asarray([float(b) for b in beta_list])
    if np.any(np.diff(betas) < 0):
        raise ValueError("beta_list must be sorted ascending")
    if realizations < 2:
        raise ValueError("need at least 2 realizations")
    if realizations < 30:
        warnings.warn("fewer than 30 realizations; standard errors are rough", RunWarning, stacklevel=2)
    streams = as_streams(rng)
    lw, bm = log_w_matrix(spec, params_template, betas, realizations, streams, group, workers)
    data = lw / params_template.t
    data[~np.isfinite(data)] = np.nan
    stats = [_mean_se(col) for col in data.T]
    flags = _boundary_flags(_exclusion_flags(data), bm)
    return EstimateSeries(
        betas,
        [s[0] for s in stats],
        [s[1] for s in stats],
        [s[2] for s in stats],
        _meta(spec, params_template, streams, group, kind="free-energy", realizations=realizations),
        flags,
        data,
        "mean",
    )


def fractional_moment_curve(spec, params_template: PolymerParams, beta_list, gamma: float,
                            realizations: int, rng, group: int = 0,
                            workers: int | None = None) -> EstimateSeries:
    """``(1/t) log E W_t^gamma`` over a beta ladder (delta-method SE).

    Points where one realization carries more than half of the ``W^gamma``
    sum are flagged ``heavy-tail``.
    """
    if not 0 < gamma <= 1:
        raise ValueError("gamma must lie in (0, 1]")
    betas = np.asarray([float(b) for b in beta_list])
    if np.any(np.diff(betas) < 0):
        raise ValueError("beta_list must be sorted ascending")
    if realizations < 2:
        raise ValueError("need at least 2 realizations")
    streams = as_streams(rng)
    lw, bm = log_w_matrix(spec, params_template, betas, realizations, streams, group, workers)
    t = params_template.t
    ys, ses, ns, flags = [], [], [], []
    for j in range(betas.size):
        col = gamma * lw[:, j]
        col = col[np.isfinite(col)]
        value, rel_se = mean_log_estimate(col)
        share = heavy_tail_share(col)
        flag = "excluded" if col.size < (1 - EXCLUSION_FLAG) * realizations else ""
        if share > 0.5:
            flag = _merge_flag(flag, "heavy-tail")
            warnings.warn(f"beta={betas[j]:g}: top realization carries {share:.2f} of the W^gamma sum",
                          HeavyTailWarning, stacklevel=2)
        ys.append(value / t)
        ses.append(rel_se / t)
        ns.append(col.size)
        flags.append(flag)
    flags = _boundary_flags(flags, bm)
    meta = _meta(spec, params_template, streams, group, kind="fractional-moment", gamma=gamma,
                 realizations=realizations)
    return EstimateSeries(betas, ys, ses, ns, meta, flags)


# ---------------------------------------------------------------- variance

def _log_z_times_task(r, spec, param_list, streams, group):
    lz = np.empty(len(param_list))
    bm = np.empty(len(param_list))
    for i, p in enumerate(param_list):
        fld = sample_field(spec, p.grid, p.n_steps, p.dt, streams, r, group)
        fp = forward_pass(fld, p)
        bm[i] = fp.boundary_mass()
        if p.beta == 0 and p.grid.boundary == "reflecting":
            lz[i] = 0.0
        else:
            _check_underflow(fp, fld)
            lz[i] = fp.log_z
    return lz, bm


def variance_curve(spec, params_template: PolymerParams, t_list, realizations: int, rng, group: int = 0,
                   workers: int | None = None, width_constant: float = 4.0,
                   width_exponent: float = 0.8) -> EstimateSeries:
    """Sample variance of ``log Z_t`` over a ladder of horizons."""
    ts = np.asarray([float(t) for t in t_list])
    if np.any(np.diff(ts) <= 0):
        raise ValueError("t_list must be strictly ascending")
    if realizations < 3:
        raise ValueError("need at least 3 realizations")
    streams = as_streams(rng)
    plist = [params_for_time(params_template, t, width_constant, width_exponent) for t in ts]
    task = partial(_log_z_times_task, spec=spec, param_list=plist, streams=streams, group=group)
    out = parallel_map(task, range(realizations), workers)
    data = np.array([o[0] for o in out]).reshape(realizations, ts.size)
    bm = np.array([o[1] for o in out]).reshape(realizations, ts.size)
    data[~np.isfinite(data)] = np.nan
    stats = [_variance_se(col) for col in data.T]
    flags = _boundary_flags(_exclusion_flags(data), bm)
    meta = _meta(spec, params_template, streams, group, kind="variance", realizations=realizations,
                 half_widths=[p.grid.half_width for p in plist])
    return EstimateSeries(ts, [s[0] for s in stats], [s[1] for s in stats], [s[2] for s in stats],
                          meta, flags, data, "variance")


# ------------------------------------------------------------ displacement

def _max_sup_norm(paths: np.ndarray, grid: Grid) -> np.ndarray:
    """``max_k |x_k|_inf`` per path, in position units."""
    count, steps = paths.shape
    coords = grid.site_coords(paths.reshape(-1)).reshape(count, steps, grid.dimension)
    return np.abs(coords).max(axis=(1, 2)) * grid.spacing


def _displacement_task(r, spec, param_list, count, streams, group):
    med = np.empty(len(param_list))
    bm = np.empty(len(param_list))
    for i, p in enumerate(param_list):
        fld = sample_field(spec, p.grid, p.n_steps, p.dt, streams, r, group)
        fp = forward_pass(fld, p, store=True)
        bm[i] = fp.boundary_mass()
        gen = streams.generator(PATHS, group, r, i)
        paths = sample_path_array(fld, p, count, gen, fp)
        med[i] = float(np.median(_max_sup_norm(paths, p.grid)))
    return med, bm


def bootstrap_se(data: np.ndarray, statistic: str, n_boot: int, gen: np.random.Generator) -> np.ndarray:
    """Per-column bootstrap standard error, resampling whole rows."""
    n = data.shape[0]
    idx = gen.integers(0, n, size=(n_boot, n))
    reps = np.array([[_reduce(data[row, j], statistic) for j in range(data.shape[1])] for row in idx])
    return np.nanstd(reps, axis=0, ddof=1)


def displacement_curve(spec, params_template: PolymerParams, t_list, realizations: int,
                       paths_per_realization: int, rng, group: int = 0, workers: int | None = None,
                       width_constant: float = 4.0, width_exponent: float = 0.8,
                       n_boot: int = 1000) -> EstimateSeries:
    """Disorder median of the Gibbs median of ``max_{s<=t} |B_s|_inf``."""
    ts = np.asarray([float(t) for t in t_list])
    if np.any(np.diff(ts) <= 0):
        raise ValueError("t_list must be strictly ascending")
    if realizations < 2 or paths_per_realization < 1:
        raise ValueError("need at least 2 realizations and 1 path per realization")
    streams = as_streams(rng)
    plist = [params_for_time(params_template, t, width_constant, width_exponent) for t in ts]
    task = partial(_displacement_task, spec=spec, param_list=plist, count=paths_per_realization,
                   streams=streams, group=group)
    out = parallel_map(task, range(realizations), workers)
    data = np.array([o[0] for o in out]).reshape(realizations, ts.size)
    bm = np.array([o[1] for o in out]).reshape(realizations, ts.size)
    y = [_reduce(col, "median") for col in data.T]
    se = bootstrap_se(data, "median", n_boot, streams.generator(BOOTSTRAP, group, 0))
    flags = _boundary_flags([""] * ts.size, bm)
    meta = _meta(spec, params_template, streams, group, kind="displacement", realizations=realizations,
                 paths_per_realization=paths_per_realization, half_widths=[p.grid.half_width for p in plist])
    return EstimateSeries(ts, y, se, realizations, meta, flags, data, "median")


# ------------------------------------------------------------------ fits

def _transform_sign(transform: str) -> float:
    if transform not in TRANSFORMS:
        raise ValueError(f"transform must be one of {TRANSFORMS}")
    return -1.0 if transform == "loglog-negy" else 1.0


def _wls(lx, ly, w):
    sw = w.sum()
    mx = (w * lx).sum() / sw
    my = (w * ly).sum() / sw
    sxx = (w * (lx - mx) ** 2).sum()
    if sxx <= 0:
        raise FitError("x values are degenerate")
    slope = (w * (lx - mx) * (ly - my)).sum() / sxx
    intercept = my - slope * mx
    resid = ly - intercept - slope * lx
    sst = (w * (ly - my) ** 2).sum()
    r2 = 1.0 - (w * resid**2).sum() / sst if sst > 0 else 1.0
    return float(slope), float(intercept), float(min(max(r2, 0.0), 1.0))


def fit_exponent(series: EstimateSeries, transform: str = "loglog-y", n_boot: int = 1000,
                 rng=None, min_points: int = 4) -> ExponentFit:
    """Weighted least squares of ``log |y|`` on ``log x`` with a bootstrap CI.

    Weights are ``1 / (se / |y|)**2`` (equal weights if any SE is zero).
    Flagged points and points with the wrong sign for ``transform`` are
    dropped.  The CI resamples whole realizations when the series carries
    replicates and is parametric (Gaussian in ``y``) otherwise.
    """
    sign = _transform_sign(transform)
    x, y, se = series.x_values, series.y_values * sign, series.std_errors
    keep = np.array([not f for f in series.flags], dtype=bool)
    if np.any(~keep):
        warnings.warn(f"{int(np.sum(~keep))} flagged point(s) left out of the fit", DroppedPointWarning,
                      stacklevel=2)
    bad = keep & ~((y > 0) & np.isfinite(y) & (x > 0))
    if np.any(bad):
        warnings.warn(
            f"dropped {int(np.sum(bad))} point(s) with the wrong sign or non-finite value for {transform}",
            DroppedPointWarning,
            stacklevel=2,
        )
    keep &= ~bad
    if keep.sum() < min_points:
        raise FitError(f"only {int(keep.sum())} usable points; need {min_points}")
    lx, ly = np.log(x[keep]), np.log(y[keep])
    rel = se[keep] / y[keep]
    w = np.ones_like(lx) if np.any(rel == 0) else 1.0 / rel**2
    slope, intercept, r2 = _wls(lx, ly, w)

    if rng is None:
        rng = int(series.metadata.get("master_seed", 0))
    gen = as_streams(rng).generator(BOOTSTRAP, int(series.metadata.get("group", 0)), 1)
    slopes = []
    if n_boot > 0:
        if series.replicates is not None:
            data = series.replicates[:, keep]
            n = data.shape[0]
            for _ in range(n_boot):
                rows = gen.integers(0, n, size=n)
                yb = np.array([_reduce(data[rows, j], series.statistic) for j in range(data.shape[1])]) * sign
                ok = (yb > 0) & np.isfinite(yb)
                if ok.sum() < 2 or np.ptp(lx[ok]) == 0:
                    continue
                slopes.append(_wls(lx[ok], np.log(yb[ok]), w[ok])[0])
        else:
            yk, sk = y[keep], se[keep]
            for _ in range(n_boot):
                yb = yk + sk * gen.standard_normal(yk.size)
                ok = yb > 0
                if ok.sum() < 2 or np.ptp(lx[ok]) == 0:
                    continue
                slopes.append(_wls(lx[ok], np.log(yb[ok]), w[ok])[0])
    if slopes:
        lo, hi = np.percentile(slopes, [2.5, 97.5])
    else:
        lo = hi = slope
    return ExponentFit(slope, intercept, float(min(lo, slope)), float(max(hi, slope)), r2, n_boot,
                       int(keep.sum()))


def pinning_series(results, metadata: dict | None = None) -> EstimateSeries:
    """Wrap a pinning curve as a series (zero SE, unconverged points flagged)."""
    h = [r.h for r in results]
    f = [r.f_estimate for r in results]
    flags = ["" if r.converged else "unconverged" for r in results]
    return EstimateSeries(h, f, np.zeros(len(h)), 1, dict(metadata or {}, kind="pinning"), flags)


# ----------------------------------------------------------- overlap check

def _overlap_task(r, spec, params, pairs, streams, group):
    fld = sample_field(spec, params.grid, params.n_steps, params.dt, streams, r, group)
    fp = forward_pass(fld, params, store=True)
    gen = streams.generator(PATHS, group, r, 0)
    paths = sample_path_array(fld, params, 2 * pairs, gen, fp)
    terms = overlap_terms(paths[:pairs], paths[pairs:], spec, params.grid)
    return float(terms.mean())


def overlap_derivative_check(spec, params_template: PolymerParams, beta: float, d_beta: float,
                             realizations: int, pairs_per_realization: int, rng, group: int = 0,
                             workers: int | None = None):
    """Compare ``d/dbeta (1/t) E log W_t`` with ``-beta`` times the mean replica overlap.

    The left side is a central difference at ``beta +- d_beta`` on shared
    fields.  Gaussian integration by parts makes the identity exact on the
    lattice up to the ``O(d_beta^2)`` difference error.
    Returns ``(lhs, rhs, combined_se)``.
    """
    if not beta > d_beta > 0:
        raise ValueError("need beta > d_beta > 0")
    if realizations < 2 or pairs_per_realization < 1:
        raise ValueError("need at least 2 realizations and 1 pair per realization")
    streams = as_streams(rng)
    lw, _ = log_w_matrix(spec, params_template, [beta - d_beta, beta + d_beta], realizations, streams,
                         group, workers)
    diff = (lw[:, 1] - lw[:, 0]) / (2.0 * d_beta * params_template.t)
    lhs, lhs_se, _ = _mean_se(diff)
    p = params_template.replace(beta=beta)
    task = partial(_overlap_task, spec=spec, params=p, pairs=pairs_per_realization, streams=streams,
                   group=group)
    ov = np.array(parallel_map(task, range(realizations), workers))
    mean_ov, ov_se, _ = _mean_se(ov)
    rhs = -beta * mean_ov
    return lhs, rhs, math.hypot(lhs_se, beta * ov_se)


# -------------------------------------------------------- weak disorder

@dataclass(frozen=True)
class WeakDisorderReport:
    checkpoints: np.ndarray
    median: np.ndarray
    q25: np.ndarray
    q75: np.ndarray
    early_rate: float
    late_rate: float
    verdict: str


def _log_w_path_task(r, spec, params, steps, streams, group):
    fld = sample_field(spec, params.grid, params.n_steps, params.dt, streams, r, group)
    if params.beta == 0 and params.grid.boundary == "reflecting":
        return np.zeros(len(steps))
    fp = forward_pass(fld, params)
    cum = np.cumsum(fp.increments)
    return np.array([cum[k - 1] - 0.5 * params.beta**2 * k * params.dt for k in steps])


def weak_disorder_diagnostic(spec, params_template: PolymerParams, beta: float, t_checkpoints,
                             realizations: int, rng, group: int = 0,
                             workers: int | None = None) -> WeakDisorderReport:
    """Median and quartiles of ``W_t`` along one run per realization.

    The log-median decay rate over the second half of the checkpoints is
    compared with the rate before it: a persistent decay is read as strong
    disorder, a decay that stalls as weak disorder.
    """
    ts = np.asarray([float(t) for t in t_checkpoints])
    if ts.size < 2 or np.any(np.diff(ts) <= 0) or ts[0] <= 0:
        raise ValueError("need at least two positive ascending checkpoints")
    steps = [int(round(t / params_template.dt)) for t in ts]
    params = params_template.replace(beta=beta, n_steps=steps[-1])
    streams = as_streams(rng)
    task = partial(_log_w_path_task, spec=spec, params=params, steps=steps, streams=streams, group=group)
    lw = np.array(parallel_map(task, range(realizations), workers)).reshape(realizations, ts.size)
    q25, med, q75 = (np.exp(np.percentile(lw, q, axis=0)) for q in (25, 50, 75))
    logmed = np.log(med)
    mid = ts.size // 2 if ts.size > 2 else 0
    t0, l0 = (0.0, 0.0) if mid == 0 else (ts[0], logmed[0])
    early = (l0 - logmed[mid]) / (ts[mid] - t0) if mid > 0 else -logmed[0] / ts[0]
    late = (logmed[mid] - logmed[-1]) / (ts[-1] - ts[mid])
    projected = late * ts[-1]
    if beta == 0:
        verdict = "weak-disorder-evidence"
    elif late > 0 and late >= 0.5 * early and projected > 0.1:
        verdict = "strong-disorder-evidence"
    elif projected < 0.05 or late < 0.25 * early:
        verdict = "weak-disorder-evidence"
    else:
        verdict = "inconclusive"
    return WeakDisorderReport(ts, med, q25, q75, float(early), float(late), verdict)
