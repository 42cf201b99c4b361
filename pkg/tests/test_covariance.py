import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from corrpoly.covariance import CovarianceSpec, covariance_matrix, covariance_row, eval_covariance, eval_radial
from corrpoly.field import Grid


def test_normalization_and_closed_forms():
    spec = CovarianceSpec(theta=2.0)
    assert eval_covariance(spec, [0.0]) == 1.0
    assert eval_covariance(spec, [1.0]) == pytest.approx(0.5, abs=1e-15)


def test_power_tail():
    spec = CovarianceSpec(theta=0.5)
    r = 1e4
    assert eval_covariance(spec, [r]) * r**0.5 == pytest.approx(1.0, rel=1e-3)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        eval_covariance(CovarianceSpec(dimension=2), [1.0])


def test_rejects_bad_specs():
    with pytest.raises(ValueError):
        CovarianceSpec(theta=-1)
    with pytest.raises(ValueError):
        CovarianceSpec(family="bogus")
    assert not CovarianceSpec(family="indicator-ball").usable_as_covariance


def test_roundtrip_dict():
    spec = CovarianceSpec(theta=0.7, dimension=2, length_scale=0.3)
    assert CovarianceSpec.from_dict(spec.to_dict()) == spec


def test_row_small_grids():
    spec = CovarianceSpec(theta=2.0)
    assert np.allclose(covariance_row(spec, Grid(1, 0, 1.0)), [1.0])
    assert np.allclose(covariance_row(spec, Grid(1, 1, 1.0)), [1.0, 0.5, 0.5], atol=1e-15)


def test_row_matches_dense_first_row():
    spec = CovarianceSpec(theta=0.5)
    grid = Grid(1, 2, 1.0)
    row = covariance_row(spec, grid)
    # on a 5-site torus the wrapped offsets are 0, 1, 2, -2, -1
    pts = np.array([[0.0], [1.0], [2.0], [-2.0], [-1.0]])
    dense = covariance_matrix(spec, pts)
    assert np.max(np.abs(row - dense[0])) <= 1e-14


def test_matrix_two_points():
    m = covariance_matrix(CovarianceSpec(theta=2.0), np.array([[0.0], [1.0]]))
    assert np.allclose(m, [[1, 0.5], [0.5, 1]])
    assert np.allclose(np.linalg.eigvalsh(m), [0.5, 1.5])
    assert np.allclose(covariance_matrix(CovarianceSpec(), np.zeros((1, 1))), [[1.0]])


def test_matrix_psd_random_points():
    rng = np.random.default_rng(5)
    pts = rng.uniform(-10, 10, size=(30, 2))
    m = covariance_matrix(CovarianceSpec(theta=1.0, dimension=2), pts)
    assert np.linalg.eigvalsh(m).min() >= -1e-10


@settings(max_examples=40, deadline=None)
@given(
    theta=st.floats(0.1, 4.0),
    ell=st.floats(0.2, 5.0),
    d=st.integers(1, 3),
    n=st.integers(1, 50),
    seed=st.integers(0, 2**32 - 1),
)
def test_psd_property(theta, ell, d, n, seed):
    pts = np.random.default_rng(seed).uniform(-5, 5, size=(n, d))
    m = covariance_matrix(CovarianceSpec(theta=theta, dimension=d, length_scale=ell), pts)
    assert np.allclose(m, m.T)
    assert np.all(np.diag(m) == 1.0)
    assert np.linalg.eigvalsh(m).min() >= -1e-10 * n


@settings(max_examples=40, deadline=None)
@given(theta=st.floats(0.1, 4.0), ell=st.floats(0.1, 10.0))
def test_tail_window(theta, ell):
    spec = CovarianceSpec(theta=theta, length_scale=ell)
    r = 100 * max(1.0, theta) * ell * np.array([1.0, 3.0, 10.0])
    val = eval_radial(spec, r) * (r / ell) ** theta
    assert np.all((val >= 0.99) & (val <= 1.0))


@settings(max_examples=30, deadline=None)
@given(family=st.sampled_from(["generalized-cauchy", "indicator-ball"]), theta=st.floats(0.1, 4.0))
def test_monotone_radial_decay(family, theta):
    spec = CovarianceSpec(family=family, theta=theta)
    v = eval_radial(spec, np.linspace(0, 20, 401))
    assert np.all(np.diff(v) <= 0)
    assert np.all((v >= 0) & (v <= 1))


def test_tabulated_family():
    spec = CovarianceSpec(family="tabulated", table=((0.0, 1.0, 2.0), (1.0, 0.5, 0.25)))
    assert eval_radial(spec, np.array([0.5, 5.0])) == pytest.approx([0.75, 0.25])
    with pytest.raises(ValueError):
        CovarianceSpec(family="tabulated", table=((0.5,), (1.0,)))
