"""Spatial covariance functions with power-law tails.

Three families are supported:

``generalized-cauchy``
    ``Q(x) = (1 + |x|^2 / l^2) ** (-theta / 2)``.  A scale mixture of
    Gaussians, hence positive semidefinite in every dimension.
``indicator-ball``
    ``Q(x) = 1{|x| <= l}``.  Only usable as a pinning potential; it is not a
    valid covariance in general and field synthesis refuses it.
``tabulated``
    Radial table ``(radii, values)`` with linear interpolation, constant past
    the last radius.  PSD is the caller's problem.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

FAMILIES = ("generalized-cauchy", "indicator-ball", "tabulated")


@dataclass(frozen=True)
class CovarianceSpec:
    family: str = "generalized-cauchy"
    theta: float = 1.0
    dimension: int = 1
    length_scale: float = 1.0
    table: tuple[tuple[float, ...], tuple[float, ...]] | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown covariance family {self.family!r}")
        if not self.theta > 0:
            raise ValueError("theta must be positive")
        if int(self.dimension) != self.dimension or self.dimension < 1:
            raise ValueError("dimension must be a positive integer")
        if not self.length_scale > 0:
            raise ValueError("length_scale must be positive")
        if self.family == "tabulated":
            if self.table is None:
                raise ValueError("tabulated family needs a (radii, values) table")
            radii, values = self.table
            if len(radii) != len(values) or len(radii) < 1:
                raise ValueError("table radii and values must have equal nonzero length")
            if radii[0] != 0.0 or values[0] != 1.0:
                raise ValueError("table must start at radius 0 with value 1")
            if np.any(np.diff(radii) <= 0):
                raise ValueError("table radii must be strictly increasing")

    @property
    def usable_as_covariance(self) -> bool:
        return self.family != "indicator-ball"

    def to_dict(self) -> dict:
        out = {
            "family": self.family,
            "theta": self.theta,
            "dimension": self.dimension,
            "length_scale": self.length_scale,
        }
        if self.table is not None:
            out["table"] = [list(self.table[0]), list(self.table[1])]
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "CovarianceSpec":
        table = data.get("table")
        if table is not None:
            table = (tuple(float(r) for r in table[0]), tuple(float(v) for v in table[1]))
        return cls(
            family=data.get("family", "generalized-cauchy"),
            theta=float(data["theta"]),
            dimension=int(data.get("dimension", 1)),
            length_scale=float(data.get("length_scale", 1.0)),
            table=table,
        )


def eval_radial(spec: CovarianceSpec, r) -> np.ndarray:
    """Evaluate Q at Euclidean distance(s) ``r`` (array-like, any shape)."""
    r = np.abs(np.asarray(r, dtype=float))
    if spec.family == "generalized-cauchy":
        s = r / spec.length_scale
        return (1.0 + s * s) ** (-0.5 * spec.theta)
    if spec.family == "indicator-ball":
        return (r <= spec.length_scale).astype(float)
    radii, values = spec.table
    return np.interp(r, radii, values)


def eval_covariance(spec: CovarianceSpec, displacement: Sequence[float]) -> float:
    x = np.atleast_1d(np.asarray(displacement, dtype=float))
    if x.ndim != 1 or x.shape[0] != spec.dimension:
        raise ValueError(
            f"displacement has length {x.shape[0] if x.ndim == 1 else x.shape}, "
            f"expected {spec.dimension}"
        )
    return float(eval_radial(spec, np.sqrt(np.dot(x, x))))


def wrapped_offsets(n: int, spacing: float) -> np.ndarray:
    """Torus distances from site 0 along one axis of ``n`` sites."""
    j = np.arange(n)
    return spacing * np.minimum(j, n - j)


def covariance_row(spec: CovarianceSpec, grid) -> np.ndarray:
    """First row of the periodic covariance on ``grid`` viewed as a torus.

    Entry ``j`` (multi-index over the ``grid.sites_per_axis ** d`` sites,
    counted from the origin corner) is ``Q`` at the wrapped displacement.
    """
    if grid.dimension != spec.dimension:
        raise ValueError("grid and covariance dimensions differ")
    axis = wrapped_offsets(grid.sites_per_axis, grid.spacing)
    r2 = np.zeros((grid.sites_per_axis,) * grid.dimension)
    for ax in range(grid.dimension):
        shape = [1] * grid.dimension
        shape[ax] = -1
        r2 = r2 + axis.reshape(shape) ** 2
    return eval_radial(spec, np.sqrt(r2))


def covariance_matrix(spec: CovarianceSpec, points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None] if spec.dimension == 1 else pts[None, :]
    if pts.shape[1] != spec.dimension:
        raise ValueError("points have the wrong dimension")
    diff = pts[:, None, :] - pts[None, :, :]
    m = eval_radial(spec, np.sqrt(np.einsum("ijk,ijk->ij", diff, diff)))
    # exact symmetry regardless of rounding in the distance computation
    return 0.5 * (m + m.T)
