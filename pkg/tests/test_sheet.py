import numpy as np
import pytest

import ofbs.sheet as sheet
from ofbs.config import SimConfig
from ofbs.errors import ConfigError, DomainError
from ofbs.kernel import KernelSpec, cell_integral
from ofbs.matfun import OperatorExponent
from ofbs.mdgen import MDArray, gen_rademacher
from ofbs.sheet import (
    CellCache,
    GridField,
    field_csv,
    grid_ensemble,
    increment,
    points_ensemble,
    read_grid_ensemble,
    read_points_ensemble,
    simulate_xn,
    write_grid_ensemble,
    write_points_ensemble,
)
from ofbs.stats import band_fraction, empirical_blocks, exact_sum_blocks


def make_cfg(**kw):
    base = dict(d=1, D=np.array([[0.75]]), n=8, grid_m=4, replicates=100, seed=1)
    base.update(kw)
    return SimConfig(**base)


def all_ones(n, d=1, value=None):
    xi = np.full((n, n, d), (1.0 if value is None else value) / n)
    return MDArray(n=n, d=d, xi=xi, generator="external", seed=0, C_bound=1.0)


# --- simulate_xn ---------------------------------------------------------------


def test_field_vanishes_on_axes():
    cfg = make_cfg()
    fld = simulate_xn(cfg, gen_rademacher(cfg.n, cfg.d, 3))
    assert np.array_equal(fld.values[0, :, :], np.zeros((5, 1)))
    assert np.array_equal(fld.values[:, 0, :], np.zeros((5, 1)))


def test_single_cell_all_ones_value():
    cfg = make_cfg(n=1, grid_m=1)
    fld = simulate_xn(cfg, all_ones(1))
    assert fld.values[1, 1, 0] == pytest.approx((1 / 1.125) ** 2, rel=1e-10)
    assert fld.values[1, 1, 0] == pytest.approx(0.7901, abs=5e-5)


def test_simulate_matches_direct_cell_sum():
    # brute-force oracle: sum cell_integral(n,i,j,t,s) @ eta over the support
    cfg = make_cfg(n=4, grid_m=2)
    arr = gen_rademacher(cfg.n, cfg.d, 17)
    fld = simulate_xn(cfg, arr)
    spec = cfg.kernel_spec()
    for p, t in enumerate((0.0, 0.5, 1.0)):
        for q, s in enumerate((0.0, 0.5, 1.0)):
            it, js = int(np.floor(cfg.n * t)), int(np.floor(cfg.n * s))
            expected = np.zeros(cfg.d)
            for i in range(1, it + 1):
                for j in range(1, js + 1):
                    expected += cell_integral(cfg.n, i, j, t, s, spec) @ arr.xi[i - 1, j - 1]
            assert np.allclose(fld.values[p, q], expected, atol=1e-12)


def test_diagonal_exponent_decouples_components():
    n, m = 4, 4
    rng = np.random.default_rng(8)
    xi = rng.choice([-1.0, 1.0], size=(n, n, 2)) / n
    cfg2 = make_cfg(d=2, D=np.diag([0.8, 0.8]), n=n, grid_m=m)
    fld2 = simulate_xn(cfg2, MDArray(n=n, d=2, xi=xi, generator="external", seed=0, C_bound=1.0))
    for k in range(2):
        cfg1 = make_cfg(d=1, D=np.array([[0.8]]), n=n, grid_m=m)
        arr1 = MDArray(n=n, d=1, xi=xi[:, :, k : k + 1], generator="external", seed=0, C_bound=1.0)
        fld1 = simulate_xn(cfg1, arr1)
        assert np.allclose(fld2.values[:, :, k], fld1.values[:, :, 0], atol=1e-13)


def test_simulate_rejects_mismatched_array():
    cfg = make_cfg(n=8)
    with pytest.raises(DomainError):
        simulate_xn(cfg, gen_rademacher(4, 1, 0))


# --- increments -----------------------------------------------------------------


def test_increment_identities():
    cfg = make_cfg(n=4, grid_m=4)
    fld = simulate_xn(cfg, gen_rademacher(cfg.n, cfg.d, 5))
    zero = increment(fld, 0.25, 0.25, 0.25, 0.75)
    assert np.array_equal(zero, np.zeros(1))
    full = increment(fld, 0.0, 0.0, 0.75, 0.5)
    assert np.allclose(full, fld.values[3, 2], atol=1e-15)
    # vertical split additivity
    left = increment(fld, 0.25, 0.25, 0.5, 0.75)
    right = increment(fld, 0.5, 0.25, 0.75, 0.75)
    both = increment(fld, 0.25, 0.25, 0.75, 0.75)
    assert np.allclose(left + right, both, atol=1e-13)


def test_increment_rejects_off_grid():
    cfg = make_cfg(grid_m=4)
    fld = simulate_xn(cfg, gen_rademacher(cfg.n, cfg.d, 5))
    with pytest.raises(DomainError):
        increment(fld, 0.0, 0.0, 0.3, 0.5)


# --- ensembles -------------------------------------------------------------------


def test_grid_ensemble_deterministic_and_jobs_invariant():
    cfg = make_cfg(replicates=sheet.REPLICATE_CHUNK + 7, n=4, grid_m=2)
    a = grid_ensemble(cfg, jobs=1)
    b = grid_ensemble(cfg, jobs=4)
    assert np.array_equal(a, b)
    assert a.shape == (cfg.replicates, 3, 3, 1)
    c = grid_ensemble(cfg.with_seed(cfg.seed + 1))
    assert not np.array_equal(a, c)


def test_points_ensemble_matches_grid_values():
    cfg = make_cfg(replicates=16, n=8, grid_m=4)
    pts = [(0.5, 0.75), (1.0, 1.0)]
    from_points = points_ensemble(cfg, pts)
    full = grid_ensemble(cfg)
    assert np.allclose(from_points[:, 0, :], full[:, 2, 3, :], atol=1e-13)
    assert np.allclose(from_points[:, 1, :], full[:, 4, 4, :], atol=1e-13)


def test_product_sign_ensemble_runs():
    cfg = make_cfg(generator="product_sign", replicates=32, n=4, grid_m=2)
    values = grid_ensemble(cfg)
    assert values.shape == (32, 3, 3, 1)
    assert np.array_equal(values, grid_ensemble(cfg))


def test_empirical_covariance_matches_exact_sum():
    cfg = make_cfg(n=8, replicates=8000, d=1, seed=2)
    pts = [(0.25, 0.5), (0.5, 0.5), (0.75, 0.25), (1.0, 0.75), (0.5, 1.0), (1.0, 1.0)]
    samples = points_ensemble(cfg, pts)
    emp = empirical_blocks(samples, pts)
    exact = exact_sum_blocks(cfg.n, pts, cfg.kernel_spec())
    assert band_fraction(emp, exact, cfg.replicates) >= 0.95


def test_cell_cache_disk_roundtrip(tmp_path):
    cfg = make_cfg(n=4, grid_m=2)
    spec = cfg.kernel_spec()
    coords = [0.0, 0.5, 1.0]
    fresh = CellCache(spec, cfg.n, coords, grid_m=2, cache_dir=tmp_path)
    assert (tmp_path / next(p.name for p in tmp_path.iterdir())).exists()
    cached = CellCache(spec, cfg.n, coords, grid_m=2, cache_dir=tmp_path)
    assert np.array_equal(fresh.table, cached.table)


# --- file formats -----------------------------------------------------------------


def test_grid_ensemble_file_roundtrip(tmp_path):
    values = np.random.default_rng(0).normal(size=(5, 3, 3, 2))
    path = tmp_path / "ens.bin"
    write_grid_ensemble(path, values, seed=99)
    got, seed = read_grid_ensemble(path)
    assert np.array_equal(got, values)
    assert seed == 99
    with open(path, "r+b") as fh:
        fh.truncate(16)
    with pytest.raises(ConfigError):
        read_grid_ensemble(path)


def test_points_ensemble_file_roundtrip(tmp_path):
    pts = [(0.5, 0.5), (1.0, 0.25)]
    values = np.random.default_rng(1).normal(size=(7, 2, 1))
    path = tmp_path / "pts.bin"
    write_points_ensemble(path, pts, values, seed=5)
    got_pts, got, seed = read_points_ensemble(path)
    assert got_pts == pts
    assert np.array_equal(got, values)
    assert seed == 5


def test_field_csv_layout(tmp_path):
    cfg = make_cfg(n=4, grid_m=2)
    fld = simulate_xn(cfg, gen_rademacher(cfg.n, cfg.d, 5))
    path = tmp_path / "field.csv"
    field_csv(fld, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "t,s,component,value"
    assert len(lines) == 1 + 3 * 3 * 1
    first = lines[1].split(",")
    assert first[:3] == ["0", "0", "1"] and float(first[3]) == 0.0
