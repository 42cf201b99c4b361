"""Brute-force oracle suites, run by ``corrpoly selftest``.

Each check compares a production routine with an independent slow
computation on a problem small enough to solve exhaustively.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import _core, _transfer_py
from .covariance import CovarianceSpec, eval_radial
from .field import Grid, SpaceTimeField, _embedding
from .pinning import PotentialSpec, generator_matrix, principal_eigenvalue, square_well_eigenvalue
from .polymer import CorridorSpec, PolymerParams, forward_pass, restricted_log_partition, walk_kernel


@dataclass(frozen=True)
class Check:
    name: str
    error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.error <= self.tolerance)


def enumerate_log_z(slices: np.ndarray, beta: float, trans: np.ndarray, start: int) -> float:
    """``log Z`` by summing over every site sequence.

    ``trans[x, y]`` is the one-step probability ``x -> y`` and ``slices[k]``
    is collected at the site reached by step ``k + 1``.
    """
    n, sites = slices.shape
    logs = []
    for path in itertools.product(range(sites), repeat=n):
        prev = start
        lp = 0.0
        for k, y in enumerate(path):
            p = trans[prev, y]
            if p <= 0:
                lp = -math.inf
                break
            lp += math.log(p) + beta * slices[k, y]
            prev = y
        if lp > -math.inf:
            logs.append(lp)
    if not logs:
        return -math.inf
    top = max(logs)
    return top + math.log(sum(math.exp(v - top) for v in logs))


def _dense_kernel(grid: Grid, dt: float) -> np.ndarray:
    band = walk_kernel(grid, dt).band
    n = grid.sites_per_axis
    b = (band.shape[1] - 1) // 2
    trans = np.zeros((n, n))
    for y in range(n):
        for j in range(band.shape[1]):
            x = y + j - b
            if 0 <= x < n:
                trans[x, y] = band[y, j]
    return trans


def check_enumeration(seed: int = 11) -> Check:
    grid = Grid(1, 3, 1.0)
    trans = _dense_kernel(grid, 1.0)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(5):
        slices = rng.normal(size=(4, grid.n_sites))
        fld = SpaceTimeField(grid, 4, 1.0, slices.copy(), CovarianceSpec(), 0, (0, 0), 0.0)
        for beta in (0.0, 0.5, 2.0):
            params = PolymerParams(beta, 4, 1.0, grid)
            got = forward_pass(fld, params).log_z
            ref = enumerate_log_z(slices, beta, trans, grid.flat_index((0,)))
            worst = max(worst, abs(got - ref))
    return Check("transfer log Z vs path enumeration", worst, 1e-10)


def check_corridor_additivity(seed: int = 12) -> Check:
    grid = Grid(1, 3, 1.0)
    rng = np.random.default_rng(seed)
    slices = rng.normal(size=(4, grid.n_sites))
    fld = SpaceTimeField(grid, 4, 1.0, slices, CovarianceSpec(), 0, (0, 0), 0.0)
    params = PolymerParams(1.0, 4, 1.0, grid)
    total = forward_pass(fld, params).log_z
    parts = [restricted_log_partition(fld, params, CorridorSpec.final_box(4, [box]))
             for box in ((-3, -1), (0, 0), (1, 3))]
    top = max(parts)
    joined = top + math.log(sum(math.exp(p - top) for p in parts))
    return Check("corridor additivity", abs(joined - total), 1e-10)


def check_backends(seed: int = 13) -> Check:
    grid = Grid(2, 4, 1.0)
    kern = walk_kernel(grid, 1.0)
    rng = np.random.default_rng(seed)
    mult = np.exp(rng.normal(size=(6, grid.n_sites)))
    w0 = np.zeros(grid.n_sites)
    w0[grid.flat_index((0, 0))] = 1.0
    a = _core.forward(kern.bands, grid.shape, w0, mult, 6)[0]
    b = _transfer_py.forward(kern.bands, grid.shape, w0, mult, 6)[0]
    return Check(f"{_core.BACKEND} backend vs numpy fallback", float(np.max(np.abs(a - b))), 1e-12)


def check_dense_eigenvalue() -> Check:
    V = PotentialSpec.indicator(1, 1.0)
    grid = Grid(1, 15, 0.25, "absorbing")
    got = principal_eigenvalue(V, 0.3, grid).f_estimate
    ref = float(np.linalg.eigvalsh(generator_matrix(V, 0.3, grid).toarray())[-1])
    return Check("eigenvalue route vs dense diagonalization (31 sites)", abs(got - ref), 1e-9)


def check_square_well() -> Check:
    V = PotentialSpec.indicator(1, 1.0)
    h = 0.5
    got = principal_eigenvalue(V, h, Grid(1, 399, 0.05, "absorbing")).f_estimate
    ref = square_well_eigenvalue(h, 1.0)
    return Check("eigenvalue route vs square-well oracle (relative)", abs(got / ref - 1.0), 2e-3)


def check_embedding() -> Check:
    """Covariance implied by the synthesis map, from its impulse response."""
    spec = CovarianceSpec(theta=0.5)
    grid = Grid(1, 8, 1.0)
    m, sqrt_eig, _ = _embedding(spec, grid, 2)
    impulse = np.zeros(m)
    impulse[0] = 1.0
    # synthesis is x = C^(1/2) z, so the covariance row is C^(1/2) applied twice
    half = np.fft.irfft(np.fft.rfft(impulse) * sqrt_eig, n=m)
    row = np.fft.irfft(np.fft.rfft(half) * sqrt_eig, n=m)
    n = grid.sites_per_axis
    err = float(np.max(np.abs(row[:n] - eval_radial(spec, np.arange(n) * grid.spacing))))
    return Check("circulant embedding reproduces the covariance", err, 1e-10)


def run_all() -> list[Check]:
    return [
        check_enumeration(),
        check_corridor_additivity(),
        check_backends(),
        check_dense_eigenvalue(),
        check_square_well(),
        check_embedding(),
    ]
