import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from corrpoly.cli import RunConfig, csv_bytes, read_series_csv
from corrpoly.covariance import CovarianceSpec
from corrpoly.estimators import EstimateSeries, fit_exponent
from corrpoly.field import Grid, SpaceTimeField
from corrpoly.polymer import PolymerParams, _fold, forward_pass, walk_kernel

FAST = settings(max_examples=40, deadline=None)


@FAST
@given(L=st.integers(0, 6), z=st.integers(-60, 60))
def test_fold_lands_on_grid(L, z):
    u = _fold(z, L)
    assert -L <= u <= L
    if -L <= z <= L:
        assert u == z


@FAST
@given(L=st.integers(1, 12), a=st.sampled_from([0.25, 0.5, 1.0]), dt=st.floats(0.1, 4.0),
       boundary=st.sampled_from(["reflecting", "absorbing"]))
def test_kernel_rows_are_substochastic(L, a, dt, boundary):
    if dt < a * a / 16 or 4.0 * math.sqrt(dt) < a:
        return
    k = walk_kernel(Grid(1, L, a, boundary), dt)
    out = k.outgoing_mass()
    assert np.all(out <= 1 + 1e-12)
    if boundary == "reflecting":
        assert np.allclose(out, 1.0, atol=1e-12)
    # symmetric per-axis transition matrix
    n = 2 * L + 1
    b = k.half_band
    m = np.zeros((n, n))
    for y in range(n):
        for j in range(2 * b + 1):
            x = y + j - b
            if 0 <= x < n:
                m[x, y] = k.band[y, j]
    assert np.allclose(m, m.T, atol=1e-14)


@FAST
@given(seed=st.integers(0, 2**32), c=st.floats(-3, 3), beta=st.floats(0.1, 2.0))
def test_constant_field_shift(seed, c, beta):
    grid = Grid(1, 4, 1.0)
    slices = np.random.default_rng(seed).normal(size=(5, 9))
    mk = lambda s: SpaceTimeField(grid, 5, 1.0, s, CovarianceSpec(), 0, (0, 0), 0.0)
    p = PolymerParams(beta, 5, 1.0, grid)
    a = forward_pass(mk(slices), p).log_z
    b = forward_pass(mk(slices + c), p).log_z
    assert math.isclose(b - a, beta * c * 5, abs_tol=1e-9)


@FAST
@given(slope=st.floats(-3, 3), scale=st.floats(0.01, 100))
def test_fit_scale_invariance(slope, scale):
    x = np.array([1.0, 2.0, 4.0, 8.0])
    y = scale * x**slope
    fit = fit_exponent(EstimateSeries(x, y, 0.01 * y, 5), n_boot=0)
    assert math.isclose(fit.slope, slope, abs_tol=1e-9)
    assert math.isclose(fit.intercept, math.log(scale), abs_tol=1e-9)


@FAST
@given(vals=st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=6))
def test_csv_roundtrip_exact(tmp_path_factory, vals):
    path = tmp_path_factory.mktemp("csv") / "s.csv"
    x = sorted(vals)
    path.write_bytes(csv_bytes(("x", "y", "se", "n", "flag"), [(v, v / 3, abs(v), 2, "") for v in x]))
    s = read_series_csv(path)
    assert s.x_values.tolist() == x
    assert s.y_values.tolist() == [v / 3 for v in x]


@FAST
@given(theta=st.floats(0.1, 5.0), seed=st.integers(0, 2**64 - 1), betas=st.lists(st.floats(0, 3), max_size=4))
def test_config_text_roundtrip(theta, seed, betas):
    from corrpoly.cli import read_config_file
    import tempfile, os

    cfg = RunConfig(theta=theta, seed=seed, betas=tuple(sorted(betas)))
    with tempfile.NamedTemporaryFile("w", suffix=".cfg", delete=False) as fh:
        fh.write(cfg.to_text())
    try:
        back = RunConfig.from_dict(read_config_file(fh.name))
    finally:
        os.unlink(fh.name)
    assert back == cfg
