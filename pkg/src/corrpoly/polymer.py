"""Quenched partition functions and Gibbs paths on a fixed field realization.

The reference path measure is a lattice walk whose one-step kernel is a
Gaussian of per-coordinate variance ``dt``, sampled at lattice offsets and
truncated at ``cutoff * sqrt(dt)``.  Step ``k`` (1-based) moves the walk with
the kernel and then collects ``beta * slice_{k-1}`` at the new site, so
``H(path) = sum_k slice_{k-1}[x_k]``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import logsumexp

from . import _core
from .covariance import CovarianceSpec, eval_radial
from .errors import BoundaryMassWarning, HeavyTailWarning, ReweightingWarning, UnderflowError
from .field import Grid, SpaceTimeField, sample_field
from .seeding import PATHS, as_streams

BOUNDARY_FLAG = 0.01


@dataclass(frozen=True)
class WalkKernel:
    grid: Grid
    dt: float
    cutoff: float
    weights: np.ndarray  # 1-d offset weights, length 2b+1, sum 1
    band: np.ndarray  # per-axis band matrix (N, 2b+1) including boundary handling

    @property
    def half_band(self) -> int:
        return (self.weights.size - 1) // 2

    @property
    def bands(self) -> list[np.ndarray]:
        return [self.band] * self.grid.dimension

    def offset_variance(self) -> float:
        """Per-coordinate variance of one step, in position units squared."""
        b = self.half_band
        offs = self.grid.spacing * np.arange(-b, b + 1)
        return float(np.dot(self.weights, offs**2))

    def outgoing_mass(self) -> np.ndarray:
        """Total one-step mass leaving each site along one axis."""
        n, width = self.band.shape
        b = self.half_band
        out = np.zeros(n)
        for y in range(n):
            for j in range(width):
                x = y + j - b
                if 0 <= x < n:
                    out[x] += self.band[y, j]
        return out

    def log_mgf(self, lam: float) -> float:
        """Log moment generating function of one free step along axis 1."""
        b = self.half_band
        offs = self.grid.spacing * np.arange(-b, b + 1)
        return float(logsumexp(lam * offs, b=self.weights))


def _fold(z: int, half_width: int) -> int:
    """Reflect an out-of-range site about the half-integer walls at +-(L + 1/2)."""
    n = 2 * half_width + 1
    u = (z + half_width) % (2 * n)
    if u >= n:
        u = 2 * n - 1 - u
    return u - half_width


@lru_cache(maxsize=64)
def walk_kernel(grid: Grid, dt: float, cutoff: float = 4.0) -> WalkKernel:
    """Banded one-step kernel along each axis of ``grid``.

    Reflecting boundaries fold overshooting mass back about the half-integer
    wall, which keeps each axis kernel symmetric and mass preserving.
    Absorbing boundaries drop it.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    a = grid.spacing
    if dt < a * a / 16:
        raise ValueError("time step under-resolves the lattice (dt < spacing^2 / 16)")
    if cutoff * math.sqrt(dt) < a:
        raise ValueError("cutoff * sqrt(dt) must be at least one lattice spacing")
    b = int(math.floor(cutoff * math.sqrt(dt) / a + 1e-12))
    offs = a * np.arange(-b, b + 1)
    g = np.exp(-(offs**2) / (2.0 * dt))
    g /= g.sum()
    n = grid.sites_per_axis
    L = grid.half_width
    band = np.zeros((n, 2 * b + 1))
    for x in range(-L, L + 1):
        for j, o in enumerate(range(-b, b + 1)):
            z = x + o
            if abs(z) > L:
                if grid.boundary == "absorbing":
                    continue
                z = _fold(z, L)
            jj = x - z + b
            if not 0 <= jj <= 2 * b:
                raise ValueError("kernel band exceeds the grid; enlarge half_width")
            band[z + L, jj] += g[j]
    g.setflags(write=False)
    band.setflags(write=False)
    return WalkKernel(grid, dt, cutoff, g, band)


@dataclass(frozen=True)
class PolymerParams:
    beta: float
    n_steps: int
    dt: float
    grid: Grid
    kernel_cutoff: float = 4.0
    start_site: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if self.n_steps < 0:
            raise ValueError("n_steps must be nonnegative")
        if not self.dt > 0:
            raise ValueError("dt must be positive")

    @property
    def t(self) -> float:
        return self.n_steps * self.dt

    @property
    def start(self) -> int:
        site = self.start_site if self.start_site is not None else (0,) * self.grid.dimension
        return self.grid.flat_index(site)

    def kernel(self) -> WalkKernel:
        return walk_kernel(self.grid, self.dt, self.kernel_cutoff)

    def replace(self, **changes) -> "PolymerParams":
        data = dict(
            beta=self.beta, n_steps=self.n_steps, dt=self.dt, grid=self.grid,
            kernel_cutoff=self.kernel_cutoff, start_site=self.start_site,
        )
        data.update(changes)
        return PolymerParams(**data)


@dataclass
class TransferState:
    log_weights: np.ndarray
    step: int
    log_scale: float

    def log_total(self) -> float:
        return float(self.log_scale + logsumexp(self.log_weights))


@dataclass
class ForwardPass:
    """Completed forward recursion; ``stored[k]`` are normalized weights after step k."""

    params: PolymerParams
    log_z: float
    increments: np.ndarray
    stored: np.ndarray | None
    final: np.ndarray

    def state(self, step: int | None = None) -> TransferState:
        step = self.params.n_steps if step is None else step
        if step == self.params.n_steps:
            w = self.final
        elif self.stored is not None:
            w = self.stored[step]
        else:
            raise ValueError("intermediate states were not stored")
        with np.errstate(divide="ignore"):
            lw = np.log(w)
        return TransferState(lw, step, float(np.sum(self.increments[:step])))

    def boundary_mass(self) -> float:
        """Mass of the final normalized weights on the outermost layer of sites."""
        grid = self.params.grid
        if grid.half_width == 0:
            return 0.0
        w = self.final.reshape(grid.shape)
        inner = w[(slice(1, -1),) * grid.dimension].sum() if grid.half_width > 0 else 0.0
        return float(w.sum() - inner)


def _check_shapes(fld: SpaceTimeField, params: PolymerParams):
    if fld.grid != params.grid:
        raise ValueError("field and params use different grids")
    if fld.n_steps != params.n_steps:
        raise ValueError("field and params have different step counts")
    if not math.isclose(fld.dt, params.dt, rel_tol=1e-12):
        raise ValueError("field and params have different dt")


def _potential_factors(values: np.ndarray):
    """Split ``exp(values)`` row-wise into bounded factors plus log offsets."""
    if values.shape[0] == 0:
        return np.ones((1, values.shape[1])), np.zeros(0)
    top = values.max(axis=1)
    return np.exp(values - top[:, None]), top


def _mask_from_corridor(grid: Grid, n_steps: int, corridor) -> np.ndarray | None:
    if corridor is None:
        return None
    boxes = corridor.boxes
    if len(boxes) != n_steps:
        raise ValueError(f"corridor has {len(boxes)} per-step entries, expected {n_steps}")
    mask = np.ones((n_steps,) + grid.shape, dtype=np.uint8)
    L = grid.half_width
    for k, box in enumerate(boxes):
        if box is None:
            continue
        if len(box) != grid.dimension:
            raise ValueError("corridor box dimension differs from grid")
        m = np.zeros(grid.shape, dtype=np.uint8)
        idx = []
        for lo, hi in box:
            if lo < -L or hi > L:
                raise ValueError("corridor box leaves the grid")
            idx.append(slice(lo + L, hi + L + 1))
        m[tuple(idx)] = 1
        mask[k] = m
    return mask.reshape(n_steps, grid.n_sites)


def forward_pass(fld: SpaceTimeField, params: PolymerParams, corridor=None, store: bool = False,
                 extra=None) -> ForwardPass:
    """Run the normalized transfer recursion on ``fld``.

    ``extra`` optionally maps ``(step_index, n_sites)`` to an additional
    additive log-weight for that step (used by reweighted diagnostics).
    """
    _check_shapes(fld, params)
    kern = params.kernel()
    grid = params.grid
    values = params.beta * fld.flat_slices()
    if extra is not None:
        values = values.copy()
        for k, add in extra.items():
            values[k] = values[k] + add
    mult, offsets = _potential_factors(values)
    w0 = np.zeros(grid.n_sites)
    w0[params.start] = 1.0
    mask = _mask_from_corridor(grid, params.n_steps, corridor)
    inc, final, stored = _core.forward(kern.bands, grid.shape, w0, mult, params.n_steps, mask, store)
    inc = inc + offsets
    return ForwardPass(params, float(np.sum(inc)), inc, stored, final)


def log_partition(fld: SpaceTimeField, params: PolymerParams) -> tuple[float, float]:
    """Return ``(log Z_t, log W_t)`` with ``log W_t = log Z_t - beta^2 t / 2``."""
    _check_shapes(fld, params)
    if params.beta == 0 and params.grid.boundary == "reflecting":
        # the kernel conserves mass, so Z_t = 1
        return 0.0, 0.0
    fp = forward_pass(fld, params)
    _check_underflow(fp, fld)
    _warn_boundary(fp)
    log_z = fp.log_z
    return log_z, log_z - 0.5 * params.beta**2 * params.t


def _check_underflow(fp: ForwardPass, fld: SpaceTimeField):
    params = fp.params
    if params.grid.boundary != "absorbing":
        return
    survival = forward_pass(fld, params.replace(beta=0.0)).log_z
    if not survival > math.log(1e-300):
        raise UnderflowError(
            f"walk survival {survival:.1f} (log) below 1e-300 on the absorbing grid; use a larger grid"
        )


def _warn_boundary(fp: ForwardPass):
    mass = fp.boundary_mass()
    if mass > BOUNDARY_FLAG:
        warnings.warn(
            f"boundary occupancy {mass:.3g} exceeds {BOUNDARY_FLAG:g}; grid too narrow",
            BoundaryMassWarning,
            stacklevel=3,
        )


@dataclass(frozen=True)
class CorridorSpec:
    """Per-step site boxes; ``boxes[k]`` restricts the walk after step ``k + 1``.

    ``None`` leaves a step unrestricted.  Boxes use inclusive lattice bounds.
    """

    boxes: tuple

    @classmethod
    def late_box(cls, n_steps: int, box, start_fraction: float = 0.5) -> "CorridorSpec":
        """Box fixed on the steps whose time lies in ``[start_fraction * t, t]``."""
        first = int(math.ceil(start_fraction * n_steps))
        boxes = tuple(None if k + 1 < first else tuple(map(tuple, box)) for k in range(n_steps))
        return cls(boxes)

    @classmethod
    def final_box(cls, n_steps: int, box) -> "CorridorSpec":
        return cls(tuple([None] * (n_steps - 1) + [tuple(map(tuple, box))]))


def restricted_log_partition(fld: SpaceTimeField, params: PolymerParams, corridor: CorridorSpec) -> float:
    """``log Z`` over paths staying in the corridor; ``-inf`` when none do."""
    fp = forward_pass(fld, params, corridor=corridor)
    return fp.log_z


@dataclass
class PathSample:
    sites: np.ndarray  # flat site indices, length n_steps + 1
    log_density: float

    def coords(self, grid: Grid) -> np.ndarray:
        return grid.site_coords(self.sites)


def sample_paths(fld: SpaceTimeField, params: PolymerParams, count: int, rng,
                 stream: int = 0, forward: ForwardPass | None = None) -> list[PathSample]:
    """Exact draws from the lattice Gibbs measure by backward sampling.

    Uniforms come from stream ``(PATHS, group, realization, stream)`` with
    ``(group, realization) = fld.key`` when ``rng``
    is a seed or :class:`Streams`; a ``numpy.random.Generator`` is used as is.
    """
    if count <= 0:
        return []
    fp = forward if forward is not None and forward.stored is not None else forward_pass(fld, params, store=True)
    if isinstance(rng, np.random.Generator):
        gen = rng
    else:
        gen = as_streams(rng).generator(PATHS, *fld.key, stream)
    uniforms = gen.random((count, params.n_steps + 1))
    paths = _core.backward_sample(params.kernel().bands, params.grid.shape, fp.stored, uniforms)
    dens = path_log_densities(fld, params, paths, fp.log_z)
    return [PathSample(paths[i], float(dens[i])) for i in range(count)]


def sample_path_array(fld, params, count, gen: np.random.Generator, forward: ForwardPass) -> np.ndarray:
    """Like :func:`sample_paths` but returns the raw ``(count, n+1)`` site array."""
    uniforms = gen.random((count, params.n_steps + 1))
    return _core.backward_sample(params.kernel().bands, params.grid.shape, forward.stored, uniforms)


def path_log_densities(fld, params, paths: np.ndarray, log_z: float) -> np.ndarray:
    """``log mu_t(path)`` for each row of flat site indices."""
    kern = params.kernel()
    grid = params.grid
    b = kern.half_band
    out = np.zeros(paths.shape[0])
    flat_slices = fld.flat_slices()
    for k in range(params.n_steps):
        y = grid.site_coords(paths[:, k + 1]) + grid.half_width
        x = grid.site_coords(paths[:, k]) + grid.half_width
        for ax in range(grid.dimension):
            j = x[:, ax] - y[:, ax] + b
            with np.errstate(divide="ignore"):
                out += np.log(kern.band[y[:, ax], j])
        out += params.beta * flat_slices[k][paths[:, k + 1]]
    return out - log_z


def overlap(path1, path2, spec: CovarianceSpec, params: PolymerParams) -> float:
    """``(1/t) sum_k dt Q(x1_k - x2_k)`` over steps 1..n."""
    s1 = np.asarray(getattr(path1, "sites", path1))
    s2 = np.asarray(getattr(path2, "sites", path2))
    if s1.shape != s2.shape:
        raise ValueError("paths have different lengths")
    if params.n_steps == 0:
        return 1.0
    return float(np.mean(overlap_terms(s1[None, :], s2[None, :], spec, params.grid)[0]))


def overlap_terms(p1: np.ndarray, p2: np.ndarray, spec: CovarianceSpec, grid: Grid) -> np.ndarray:
    """``Q`` between paired rows of site arrays at steps 1..n; shape ``(rows, n)``."""
    c1 = grid.site_coords(p1[:, 1:])
    c2 = grid.site_coords(p2[:, 1:])
    diff = grid.spacing * (c1 - c2)
    return eval_radial(spec, np.sqrt(np.sum(diff * diff, axis=-1)))


# --- disorder-averaged quantities ------------------------------------------------


def _field_for(spec, params, streams, realization, group=0):
    return sample_field(spec, params.grid, params.n_steps, params.dt, streams, realization, group)


def log_w_samples(spec, params, realizations: int, rng, group: int = 0, start: int = 0) -> np.ndarray:
    """``log W_t`` for realizations ``start .. start + realizations - 1``."""
    streams = as_streams(rng)
    out = np.empty(realizations)
    for i in range(realizations):
        fld = _field_for(spec, params, streams, start + i, group)
        out[i] = log_partition(fld, params)[1]
    return out


def mean_log_estimate(log_values: np.ndarray):
    """``log mean exp(v)`` and its delta-method standard error."""
    n = log_values.size
    lm = logsumexp(log_values) - math.log(n)
    ratio = np.exp(log_values - lm)  # values / mean
    se = float(np.std(ratio, ddof=1) / math.sqrt(n)) if n > 1 else float("inf")
    return float(lm), se


def heavy_tail_share(log_values: np.ndarray) -> float:
    """Share of the sum of ``exp(v)`` carried by the largest term."""
    return float(np.exp(np.max(log_values) - logsumexp(log_values)))


def fractional_moment_estimate(spec, params, gamma: float, realizations: int, rng, group: int = 0):
    """``(1/t) log mean(W^gamma)`` with a delta-method standard error."""
    if not 0 < gamma <= 1:
        raise ValueError("gamma must lie in (0, 1]")
    if realizations < 2:
        raise ValueError("need at least 2 realizations")
    if params.beta == 0:
        return 0.0, 0.0
    lw = log_w_samples(spec, params, realizations, rng, group)
    value, rel_se = mean_log_estimate(gamma * lw)
    share = heavy_tail_share(gamma * lw)
    if share > 0.5:
        warnings.warn(f"top realization carries {share:.2f} of the W^gamma sum", HeavyTailWarning, stacklevel=2)
    t = params.t
    return value / t, rel_se / t


def girsanov_diagnostic(spec, params, lam: float, r_step: int, realizations: int, rng, group: int = 0):
    """Disorder mean of ``log mu_t(exp(lam B_r - r_step * log M(lam)))``.

    ``M`` is the moment generating function of one kernel step, the lattice
    counterpart of ``exp(lam^2 dt / 2)``, so the free walk gives exactly 0.
    ``B_r`` is the first coordinate after ``r_step`` steps.
    """
    if not 0 <= r_step <= params.n_steps:
        raise ValueError("r_step must lie in [0, n_steps]")
    if lam == 0 or r_step == 0:
        return 0.0, 0.0
    r_time = r_step * params.dt
    if abs(lam) * math.sqrt(r_time) > 6:
        warnings.warn(
            f"lambda * sqrt(r) = {abs(lam) * math.sqrt(r_time):.2f} > 6; reweighting dominated by the boundary",
            ReweightingWarning,
            stacklevel=2,
        )
    kern = params.kernel()
    grid = params.grid
    x1 = grid.positions()[:, 0]
    comp = r_step * kern.log_mgf(lam)
    streams = as_streams(rng)
    vals = np.empty(realizations)
    for i in range(realizations):
        fld = _field_for(spec, params, streams, i, group)
        base = forward_pass(fld, params).log_z
        tilted = forward_pass(fld, params, extra={r_step - 1: lam * x1}).log_z
        vals[i] = tilted - comp - base
    if realizations < 2:
        return float(vals.mean()), float("inf")
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(realizations))


def difference_walk_setup(spec: CovarianceSpec, params: PolymerParams):
    """Pinning problem equal in law to ``E[W_t^2]`` in the continuum limit.

    ``B1 - B2 = sqrt(2) B`` turns ``E[W_t^2] = P2[exp(beta^2 int Q(B1 - B2))]``
    into a pinning partition function with potential ``Q(sqrt(2) x)`` and
    parameter ``beta^2``.  The pinning grid uses spacing ``a / sqrt(2)`` so the
    difference walk lives on the same lattice points as the replicas.
    """
    from .pinning import PotentialSpec

    pot = PotentialSpec.scaled_covariance(spec, math.sqrt(2.0))
    g = params.grid
    grid = Grid(g.dimension, 2 * g.half_width, g.spacing / math.sqrt(2.0), g.boundary)
    return pot, params.beta**2, grid


def second_moment_check(spec, params, realizations: int, rng, group: int = 0):
    """Compare ``(1/t) log mean(W_t^2)`` with the pinning transfer value.

    Returns ``(mc_value, pinning_value, combined_se, reliable)``.
    """
    from .pinning import pinning_log_partition

    if params.beta == 0:
        return 0.0, 0.0, 0.0, True
    pot, h, grid = difference_walk_setup(spec, params)
    log_y = pinning_log_partition(pot, h, grid, params.dt, params.n_steps, cutoff=params.kernel_cutoff)
    pin = log_y / params.t
    lw = log_w_samples(spec, params, realizations, rng, group)
    value, rel_se = mean_log_estimate(2.0 * lw)
    share = heavy_tail_share(2.0 * lw)
    reliable = share <= 0.5
    if not reliable:
        warnings.warn(f"top realization carries {share:.2f} of the W^2 sum; estimate unreliable",
                      HeavyTailWarning, stacklevel=2)
    return value / params.t, pin, rel_se / params.t, reliable
