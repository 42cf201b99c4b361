import math
import warnings

import numpy as np
import pytest

from corrpoly.covariance import CovarianceSpec
from corrpoly.errors import ConvergenceWarning
from corrpoly.field import Grid
from corrpoly.pinning import (
    PinningNumerics,
    PinningResult,
    PotentialSpec,
    auto_grid,
    critical_h_probe,
    generator_matrix,
    localization_length,
    pinning_curve,
    pinning_log_partition,
    principal_eigenvalue,
    square_well_eigenvalue,
    transfer_growth_rate,
)

# bound-state energies of the unit square well, computed to 20 digits with mpmath
SQUARE_WELL = {
    0.02: 0.00075978739302859933539,
    0.05: 0.0044210695355903372487,
    0.1: 0.015898180230041013084,
    0.5: 0.22687658293016412402,
}


# ground state of (1/2) d^2/dx^2 + h / (1 + x^2), by shooting on the Riccati equation
LORENTZIAN = {0.02: 0.0014037215814716986, 0.05: 0.0068393325985678976}


@pytest.mark.parametrize("h", sorted(LORENTZIAN))
def test_lorentzian_well_oracle(h):
    V = PotentialSpec.power_law(2.0, 1, 1.0)
    grid = Grid(1, int(math.ceil(16 / (h * math.pi) / 0.25)), 0.25, "absorbing")
    assert principal_eigenvalue(V, h, grid).f_estimate == pytest.approx(LORENTZIAN[h], rel=1e-3)


@pytest.mark.parametrize("h", sorted(SQUARE_WELL))
def test_square_well_root(h):
    assert square_well_eigenvalue(h) == pytest.approx(SQUARE_WELL[h], rel=1e-12)


def test_square_well_limits():
    assert square_well_eigenvalue(0.0) == 0.0
    # weak-coupling expansion f ~ 2 h^2 radius^2
    assert square_well_eigenvalue(1e-4) == pytest.approx(2e-8, rel=1e-3)
    # radius scaling f_r(h) = f_1(h r^2) / r^2
    assert square_well_eigenvalue(0.3, 2.0) == pytest.approx(square_well_eigenvalue(1.2) / 4, rel=1e-12)


def test_dense_small_grid():
    V = PotentialSpec.indicator(1, 1.0)
    grid = Grid(1, 15, 0.25, "absorbing")
    got = principal_eigenvalue(V, 0.3, grid).f_estimate
    ref = np.linalg.eigvalsh(generator_matrix(V, 0.3, grid).toarray())[-1]
    assert got == pytest.approx(ref, abs=1e-10)


@pytest.mark.parametrize("dim,L", [(1, 150), (2, 20)])
def test_free_dirichlet_eigenvalue(dim, L):
    V = PotentialSpec.indicator(dim, 1.0)
    grid = Grid(dim, L, 0.5, "absorbing")
    res = principal_eigenvalue(V, 0.0, grid)
    exact = dim * (math.cos(math.pi / (2 * L + 2)) - 1) / 0.25
    assert res.f_estimate == pytest.approx(exact, rel=1e-8)
    # the continuum floor sits just below the lattice value
    assert res.dirichlet_floor <= res.f_estimate < 0
    assert res.dirichlet_floor == pytest.approx(exact, rel=0.01)


def test_eigenvalue_routes_share_the_generator():
    V = PotentialSpec.power_law(1.5, 1, 1.0)
    grid = Grid(1, 200, 0.25, "absorbing")
    lu = principal_eigenvalue(V, 0.4, grid).f_estimate
    dense = np.linalg.eigvalsh(generator_matrix(V, 0.4, grid).toarray())[-1]
    assert lu == pytest.approx(dense, rel=1e-9)


def test_generator_2d_is_kron_sum():
    V = PotentialSpec.indicator(2, 1.0)
    grid = Grid(2, 3, 0.5, "absorbing")
    g = generator_matrix(V, 0.7, grid).toarray()
    g1 = generator_matrix(PotentialSpec.indicator(1, 1.0), 0.0, Grid(1, 3, 0.5, "absorbing")).toarray()
    eye = np.eye(7)
    expect = np.kron(g1, eye) + np.kron(eye, g1) + np.diag(0.7 * V.values_on(grid))
    assert np.allclose(g, expect, atol=1e-14)


def test_cell_averaged_indicator_integral():
    V = PotentialSpec.indicator(1, 1.0)
    for a in (0.3, 0.25, 0.07):
        grid = Grid(1, int(3 / a), a)
        assert V.values_on(grid).sum() * a == pytest.approx(2.0, rel=1e-12)


def test_transfer_zero_h():
    V = PotentialSpec.indicator(1, 1.0)
    grid = Grid(1, 40, 0.25)
    assert transfer_growth_rate(V, 0.0, grid, 0.05).f_estimate == 0.0
    assert pinning_log_partition(V, 0.0, grid, 0.05, 100) == 0.0
    assert pinning_log_partition(V, 0.3, grid, 0.05, 0) == 0.0


def test_log_partition_bounds():
    # 0 <= log Y_t <= h t max V
    V = PotentialSpec.power_law(2.0, 1, 1.0)
    grid = Grid(1, 80, 0.25)
    y = pinning_log_partition(V, 0.2, grid, 0.05, 200)
    assert 0 < y < 0.2 * 10.0


@pytest.mark.parametrize("h", [0.5, 1.0])
def test_routes_agree_when_localized(h):
    V = PotentialSpec.indicator(1, 1.0)
    ev = principal_eigenvalue(V, h, Grid(1, 199, 0.1, "absorbing")).f_estimate
    tg = transfer_growth_rate(V, h, Grid(1, 200, 0.1), 0.05, cutoff=6.0)
    assert tg.converged
    assert tg.f_estimate == pytest.approx(ev, rel=0.03)
    assert ev == pytest.approx(square_well_eigenvalue(h), rel=0.01)


def test_transfer_nonconvergence_warns():
    V = PotentialSpec.indicator(1, 1.0)
    with pytest.warns(ConvergenceWarning):
        res = transfer_growth_rate(V, 0.5, Grid(1, 40, 0.25), 0.05, n_steps=20)
    assert not res.converged


def test_scaling_relation_is_exact_on_matched_lattices():
    # V_l(x) = V_1(x / l) gives f_l(h) = f_1(h l^2) / l^2 when the lattice scales too
    l = 0.5
    f1 = principal_eigenvalue(PotentialSpec.power_law(1.5, 1, 1.0), 0.2 * l * l, Grid(1, 300, 0.25, "absorbing"))
    fl = principal_eigenvalue(PotentialSpec.power_law(1.5, 1, l), 0.2, Grid(1, 300, 0.25 * l, "absorbing"))
    assert fl.f_estimate == pytest.approx(f1.f_estimate / l**2, rel=1e-8)


def test_curve_monotone_convex():
    V = PotentialSpec.power_law(1.0, 1, 1.0)
    hs = [0.1, 0.2, 0.3, 0.4, 0.5]
    res = pinning_curve(V, hs, numerics=PinningNumerics(spacing=0.25))
    f = np.array([r.f_estimate for r in res])
    assert np.all(np.diff(f) > 0)
    assert np.all(np.diff(f, 2) > 0)
    assert all(isinstance(r, PinningResult) and r.method == "eigenvalue" for r in res)
    with pytest.raises(ValueError):
        pinning_curve(V, [0.2, 0.1])
    with pytest.raises(ValueError):
        pinning_curve(V, [0.1], method="power")


def test_localization_length_and_grid():
    V = PotentialSpec.power_law(1.0, 2, 1.0)
    assert localization_length(V, 0.01) == pytest.approx(100.0)
    assert localization_length(V, 0.0) == 1.0
    assert localization_length(PotentialSpec.indicator(1, 2.0), 0.1) == pytest.approx(2.0 / 0.4)
    g = auto_grid(V, 0.01, PinningNumerics(spacing=0.5, max_sites_per_axis=101), "absorbing")
    assert g.half_width == 49 and g.boundary == "absorbing"


def test_critical_probe_short_range_3d():
    V = PotentialSpec.power_law(3.0, 3, 1.0)
    verdict, res = critical_h_probe(V, 0.05, (4, 8, 16))
    f = [r.f_estimate for r in res]
    assert verdict == "delocalized-evidence"
    assert f[0] < f[1] < f[2] < 0
    with pytest.raises(ValueError):
        critical_h_probe(V, 0.05, (4, 4))


def test_critical_probe_localized():
    V = PotentialSpec.power_law(0.5, 1, 1.0)
    verdict, res = critical_h_probe(V, 0.05, (50, 100, 200))
    assert verdict == "localized-evidence"
    assert res[-1].f_estimate > 0


def test_scaled_covariance_potential():
    base = CovarianceSpec(theta=1.0)
    V = PotentialSpec.scaled_covariance(base, math.sqrt(2))
    assert V.radial(1.0) == pytest.approx(3 ** -0.5)
    assert V.tail_exponent == 1.0
    assert V.core_length == pytest.approx(1 / math.sqrt(2))
    with pytest.raises(ValueError):
        PotentialSpec("scaled-covariance", 2, base=base)
    with pytest.raises(ValueError):
        PotentialSpec("harmonic")
