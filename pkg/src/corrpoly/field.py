"""Lattice realizations of the space-time Gaussian environment.

A field is a stack of ``n`` independent slices.  Slice ``k`` holds the
increment of the environment over one time step ``dt`` at every lattice
site; its spatial covariance is ``dt * Q(x - y)``.  Slices are synthesised
by circulant embedding on a torus padded by ``pad_factor`` along each axis.
"""
from __future__ import annotations

import json
import struct
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .covariance import CovarianceSpec, covariance_matrix, covariance_row, eval_radial
from .errors import EmbeddingClipWarning, SynthesisError
from .seeding import FIELD, as_streams

CLIP_ERROR = 1e-4
CLIP_SILENT = 1e-12


@dataclass(frozen=True)
class Grid:
    """Cubic lattice ``{-L..L}^d`` scaled by ``spacing``.

    ``half_width`` may be 0 (a single site); everything else needs at least 1.
    """

    dimension: int = 1
    half_width: int = 1
    spacing: float = 1.0
    boundary: str = "reflecting"

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("grid dimension must be >= 1")
        if self.half_width < 0:
            raise ValueError("half_width must be >= 0")
        if not self.spacing > 0:
            raise ValueError("spacing must be positive")
        if self.boundary not in ("reflecting", "absorbing"):
            raise ValueError(f"unknown boundary {self.boundary!r}")

    @property
    def sites_per_axis(self) -> int:
        return 2 * self.half_width + 1

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.sites_per_axis,) * self.dimension

    @property
    def n_sites(self) -> int:
        return self.sites_per_axis**self.dimension

    def axis_positions(self) -> np.ndarray:
        return self.spacing * np.arange(-self.half_width, self.half_width + 1)

    def flat_index(self, site) -> int:
        """Flat (row-major) index of a site given as lattice coordinates in [-L, L]^d."""
        site = np.atleast_1d(np.asarray(site, dtype=int))
        if site.shape != (self.dimension,) or np.any(np.abs(site) > self.half_width):
            raise ValueError(f"site {site.tolist()} is outside the grid")
        return int(np.ravel_multi_index(tuple(site + self.half_width), self.shape))

    def site_coords(self, flat) -> np.ndarray:
        """Lattice coordinates for flat indices; shape ``flat.shape + (d,)``."""
        idx = np.unravel_index(np.asarray(flat), self.shape)
        return np.stack(idx, axis=-1) - self.half_width

    def positions(self) -> np.ndarray:
        """Positions of all sites in flat order, shape ``(n_sites, d)``."""
        return self.spacing * self.site_coords(np.arange(self.n_sites))

    def replace(self, **changes) -> "Grid":
        data = self.to_dict()
        data.update(changes)
        return Grid(**data)

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "half_width": self.half_width,
            "spacing": self.spacing,
            "boundary": self.boundary,
        }


@dataclass(frozen=True)
class _TorusGrid:
    dimension: int
    sites_per_axis: int
    spacing: float


@dataclass
class SpaceTimeField:
    grid: Grid
    n_steps: int
    dt: float
    slices: np.ndarray  # shape (n_steps,) + grid.shape
    spec: CovarianceSpec | None = None
    seed: int | None = None
    key: tuple[int, ...] = ()
    clipped_mass: float = 0.0

    def __post_init__(self):
        expected = (self.n_steps,) + self.grid.shape
        if self.slices.shape != expected:
            raise ValueError(f"slices have shape {self.slices.shape}, expected {expected}")

    @property
    def t(self) -> float:
        return self.n_steps * self.dt

    def flat_slices(self) -> np.ndarray:
        return self.slices.reshape(self.n_steps, self.grid.n_sites)

    def with_slices(self, slices: np.ndarray) -> "SpaceTimeField":
        return SpaceTimeField(
            self.grid, self.n_steps, self.dt, slices, self.spec, self.seed, self.key, self.clipped_mass
        )


@lru_cache(maxsize=32)
def _embedding(spec: CovarianceSpec, grid: Grid, pad_factor: int):
    if not spec.usable_as_covariance:
        raise ValueError(f"{spec.family} is not a valid covariance; use it as a pinning potential")
    if spec.dimension != grid.dimension:
        raise ValueError("grid and covariance dimensions differ")
    if pad_factor < 2:
        raise ValueError("pad factor must be >= 2")
    torus = _TorusGrid(grid.dimension, pad_factor * grid.sites_per_axis, grid.spacing)
    row = covariance_row(spec, torus)
    # row is symmetric under j -> M - j on every axis, so its DFT is real
    eig = np.fft.rfftn(row).real
    full = np.fft.fftn(row).real
    negative = -full[full < 0].sum()
    rel = negative / np.abs(full).sum()
    if rel > CLIP_ERROR:
        raise SynthesisError(
            f"circulant embedding has negative spectral mass {rel:.3e} (relative L1) "
            f"above the {CLIP_ERROR:g} limit; clipped mass would distort the covariance"
        )
    clipped = np.clip(eig, 0.0, None)
    if negative > 0:
        # restore Q(0): mean of the full spectrum equals row[0]
        full_clipped = np.clip(full, 0.0, None)
        clipped *= full.sum() / full_clipped.sum()
    eig.setflags(write=False)
    clipped.setflags(write=False)
    return torus.sites_per_axis, np.sqrt(clipped), float(rel)


def embedding_spectrum(spec: CovarianceSpec, grid: Grid, pad_factor: int = 2) -> np.ndarray:
    """Eigenvalues of the padded circulant covariance, before clipping."""
    torus = _TorusGrid(grid.dimension, pad_factor * grid.sites_per_axis, grid.spacing)
    return np.fft.fftn(covariance_row(spec, torus)).real


def _synthesize(noise: np.ndarray, sqrt_eig: np.ndarray, m: int, grid: Grid, dt: float) -> np.ndarray:
    """Map white noise of shape ``batch + (m,)*d`` to correlated slices on ``grid``."""
    d = grid.dimension
    axes = tuple(range(-d, 0))
    spec = np.fft.rfftn(noise, axes=axes)
    spec *= sqrt_eig
    out = np.fft.irfftn(spec, s=(m,) * d, axes=axes)
    n = grid.sites_per_axis
    out = out[(Ellipsis,) + (slice(0, n),) * d]
    return np.sqrt(dt) * out


def _check_clip(rel: float):
    if rel > CLIP_SILENT:
        warnings.warn(
            f"circulant embedding clipped negative spectral mass {rel:.3e} (relative L1) and rescaled",
            EmbeddingClipWarning,
            stacklevel=3,
        )


def sample_slice(spec: CovarianceSpec, grid: Grid, dt: float, rng: np.random.Generator, pad_factor: int = 2):
    """One centered Gaussian slice with covariance ``dt * Q(x - y)``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    m, sqrt_eig, rel = _embedding(spec, grid, pad_factor)
    _check_clip(rel)
    noise = rng.standard_normal((m,) * grid.dimension)
    return _synthesize(noise, sqrt_eig, m, grid, dt)


def sample_field(
    spec: CovarianceSpec,
    grid: Grid,
    n_steps: int,
    dt: float,
    rng,
    realization: int = 0,
    group: int = 0,
    pad_factor: int = 2,
) -> SpaceTimeField:
    """Field of ``n_steps`` independent slices.

    Slice ``k`` is drawn from stream ``(FIELD, group, realization, k)`` of
    ``rng`` (a :class:`~corrpoly.seeding.Streams` or an integer seed), so the
    result depends only on these numbers and the parameters.
    """
    if n_steps < 0:
        raise ValueError("n_steps must be >= 0")
    if not dt > 0:
        raise ValueError("dt must be positive")
    streams = as_streams(rng)
    m, sqrt_eig, rel = _embedding(spec, grid, pad_factor)
    if n_steps:
        _check_clip(rel)
    shape = (m,) * grid.dimension
    noise = np.empty((n_steps,) + shape)
    for k in range(n_steps):
        noise[k] = streams.generator(FIELD, group, realization, k).standard_normal(shape)
    slices = _synthesize(noise, sqrt_eig, m, grid, dt) if n_steps else np.empty((0,) + grid.shape)
    return SpaceTimeField(
        grid, n_steps, dt, np.ascontiguousarray(slices), spec, streams.master_seed,
        (group, realization), rel,
    )


# --- Gaussian tilting -------------------------------------------------------


@dataclass(frozen=True)
class TiltRegion:
    """Steps ``[k0, k1)`` times a box of sites (inclusive lattice bounds per axis)."""

    step_range: tuple[int, int]
    box: tuple[tuple[int, int], ...]

    def __post_init__(self):
        k0, k1 = self.step_range
        if k1 <= k0:
            raise ValueError("tilt region has an empty step range")
        for lo, hi in self.box:
            if hi < lo:
                raise ValueError("tilt region has an empty box")

    def box_slices(self, grid: Grid) -> tuple[slice, ...]:
        if len(self.box) != grid.dimension:
            raise ValueError("tilt box dimension differs from grid")
        out = []
        for lo, hi in self.box:
            if lo < -grid.half_width or hi > grid.half_width:
                raise ValueError("tilt box leaves the grid")
            out.append(slice(lo + grid.half_width, hi + grid.half_width + 1))
        return tuple(out)


@dataclass
class TiltShift:
    profile: np.ndarray  # per-site shift, grid shape, applied on every step in range
    step_range: tuple[int, int]
    normalizer: float

    def full(self, n_steps: int) -> np.ndarray:
        out = np.zeros((n_steps,) + self.profile.shape)
        k0, k1 = self.step_range
        out[k0:k1] = self.profile
        return out


def compute_tilt_shift(spec: CovarianceSpec, grid: Grid, region: TiltRegion, dt: float) -> TiltShift:
    """Mean shift ``E[Omega * omega_k(x)]`` for the block average ``Omega`` over ``region``.

    ``Omega = sum_{k in range, y in box} a^d omega_k(y) / normalizer`` is a
    standard Gaussian, with ``normalizer**2 = |range| dt a^{2d} sum_{x,y in box} Q(x-y)``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    box = region.box_slices(grid)
    k0, k1 = region.step_range
    if k0 < 0:
        raise ValueError("tilt step range starts before step 0")
    pos = grid.positions()
    in_box = np.zeros(grid.shape, dtype=bool)
    in_box[box] = True
    box_pos = pos[in_box.ravel()]
    # sum over box sites of Q(x - y), for every grid site x
    conv = np.zeros(grid.n_sites)
    for y in box_pos:
        diff = pos - y
        conv += eval_radial(spec, np.sqrt(np.einsum("ij,ij->i", diff, diff)))
    vol = grid.spacing**grid.dimension
    steps = k1 - k0
    double_sum = conv[in_box.ravel()].sum()
    normalizer = np.sqrt(steps * dt * vol * vol * double_sum)
    profile = (dt * vol * conv / normalizer).reshape(grid.shape)
    return TiltShift(profile, (k0, k1), float(normalizer))


def omega_variance(spec: CovarianceSpec, grid: Grid, region: TiltRegion, dt: float, shift: TiltShift) -> float:
    """Variance of the lattice block average implied by ``shift`` (should be 1)."""
    box = region.box_slices(grid)
    vol = grid.spacing**grid.dimension
    steps = region.step_range[1] - region.step_range[0]
    return float(steps * vol * shift.profile[box].sum() / shift.normalizer)


def tilt_field(fld: SpaceTimeField, region: TiltRegion, sign: int = -1) -> SpaceTimeField:
    """Coupled field ``omega + sign * shift``; same covariance, shifted mean."""
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    if fld.spec is None:
        raise ValueError("field carries no covariance spec")
    if region.step_range[1] > fld.n_steps:
        raise ValueError("tilt step range exceeds the field length")
    shift = compute_tilt_shift(fld.spec, fld.grid, region, fld.dt)
    k0, k1 = shift.step_range
    slices = fld.slices.copy()
    slices[k0:k1] += sign * shift.profile
    return fld.with_slices(slices)


# --- binary dump --------------------------------------------------------------

_MAGIC = b"CPFIELD1"


def write_field(path, fld: SpaceTimeField) -> None:
    """Header (JSON, length-prefixed) then slices as little-endian float64, row-major."""
    header = {
        "d": fld.grid.dimension,
        "L": fld.grid.half_width,
        "a": fld.grid.spacing,
        "boundary": fld.grid.boundary,
        "n": fld.n_steps,
        "dt": fld.dt,
        "seed": fld.seed,
        "key": list(fld.key),
        "spec": fld.spec.to_dict() if fld.spec is not None else None,
    }
    blob = json.dumps(header, sort_keys=True).encode()
    data = np.ascontiguousarray(fld.slices, dtype="<f8")
    with open(Path(path), "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(data.tobytes(order="C"))


def read_field(path) -> SpaceTimeField:
    raw = Path(path).read_bytes()
    if raw[: len(_MAGIC)] != _MAGIC:
        raise ValueError("not a field dump")
    off = len(_MAGIC)
    (hlen,) = struct.unpack("<Q", raw[off : off + 8])
    off += 8
    header = json.loads(raw[off : off + hlen])
    off += hlen
    grid = Grid(header["d"], header["L"], header["a"], header["boundary"])
    slices = np.frombuffer(raw[off:], dtype="<f8").astype(float).reshape((header["n"],) + grid.shape)
    spec = CovarianceSpec.from_dict(header["spec"]) if header["spec"] else None
    return SpaceTimeField(grid, header["n"], header["dt"], slices, spec, header["seed"], tuple(header["key"]))


def dense_covariance(spec: CovarianceSpec, grid: Grid, dt: float) -> np.ndarray:
    """Exact site covariance ``dt * Q(x - y)`` over the grid (test oracle)."""
    return dt * covariance_matrix(spec, grid.positions())
