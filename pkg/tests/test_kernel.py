import numpy as np
import pytest

from ofbs.errors import DomainError
from ofbs.kernel import (
    KernelSpec,
    axis_cell_table,
    cell_integral,
    cell_table_path,
    cov_blocks,
    cov_integral,
    cov_integral_with_error,
    kernel_eval,
    read_cell_table,
    write_cell_table,
)
from ofbs.matfun import OperatorExponent, mat_power

from conftest import GRID_4x4, scalar_exponent


# --- independent oracle: closed-form axis integral ---------------------------
#
# int_lo^hi (t - u)^A du = (A + I)^{-1} [ (t - lo)^{A+I} - (t - hi)^{A+I} ],
# valid for lo <= hi <= t; a pure matrix-inverse route, no quadrature.


def closed_form_axis_integral(t, lo, hi, A):
    d = A.shape[0]
    AI = A + np.eye(d)
    return np.linalg.solve(AI, mat_power(t - lo, AI) - mat_power(t - hi, AI))


def spec_for(D, **kw):
    return KernelSpec(exponent=OperatorExponent.from_matrix(D), **kw)


# --- KernelSpec -------------------------------------------------------------


def test_spec_rejects_bad_order():
    exp = OperatorExponent.from_matrix([[0.75]])
    with pytest.raises(DomainError):
        KernelSpec(exponent=exp, quad_order=1)
    with pytest.raises(DomainError):
        KernelSpec(exponent=exp, quad_order=65)


# --- kernel_eval ------------------------------------------------------------


def test_kernel_eval_support_convention(scalar_spec):
    assert np.array_equal(kernel_eval(0.5, 0.5, 0.7, 0.1, scalar_spec), np.zeros((1, 1)))
    assert np.array_equal(kernel_eval(0.5, 0.5, 0.5, 0.1, scalar_spec), np.zeros((1, 1)))


def test_kernel_eval_scalar_values(scalar_spec):
    assert kernel_eval(1.0, 1.0, 0.0, 0.0, scalar_spec)[0, 0] == pytest.approx(1.0)
    got = kernel_eval(1.0, 1.0, 0.5, 0.75, scalar_spec)[0, 0]
    assert got == pytest.approx(0.5**0.125 * 0.25**0.125, rel=1e-12)
    assert got == pytest.approx(0.7711, abs=5e-5)


def test_kernel_diagonal_reduces_to_one_parameter_kernel(jordan_spec):
    # on the diagonal (t = s, u = v) the tensor kernel collapses to the
    # one-parameter kernel with exponent D - I/2
    D = jordan_spec.exponent.D
    for t, u in ((0.9, 0.2), (1.0, 0.75), (0.5, 0.49)):
        got = kernel_eval(t, t, u, u, jordan_spec)
        expected = mat_power(t - u, D - np.eye(2) / 2)
        assert np.allclose(got, expected, rtol=1e-12)


# --- cell_integral ----------------------------------------------------------


def test_cell_integral_full_cell_scalar(scalar_spec):
    got = cell_integral(1, 1, 1, 1.0, 1.0, scalar_spec)[0, 0]
    assert got == pytest.approx((1 / 1.125) ** 2, rel=1e-10)


def test_cell_integral_support_zero(scalar_spec):
    # cells beyond floor(n t) are outside the kernel support
    assert np.array_equal(cell_integral(4, 4, 1, 0.6, 1.0, scalar_spec), np.zeros((1, 1)))
    with pytest.raises(DomainError):
        cell_integral(4, 5, 1, 0.6, 1.0, scalar_spec)
    with pytest.raises(DomainError):
        cell_integral(4, 0, 1, 0.6, 1.0, scalar_spec)


def test_cell_integral_diagonal_case():
    spec = spec_for(np.diag([0.75, 0.75]))
    got = cell_integral(1, 1, 1, 1.0, 1.0, spec)
    assert np.allclose(got, (1 / 1.125) ** 2 * np.eye(2), rtol=1e-10)


@pytest.mark.parametrize("D", [np.array([[0.75]]), np.diag([0.6, 0.8]),
                               np.array([[0.7, 0.2], [0.0, 0.7]])])
def test_axis_cell_table_matches_closed_form(D):
    spec = spec_for(D)
    A = spec.exponent.A
    n, t = 8, 0.9
    table = axis_cell_table(n, t, spec)
    k = int(np.floor(n * t))
    for i in range(1, k + 1):
        expected = closed_form_axis_integral(t, (i - 1) / n, i / n, A)
        assert np.allclose(table[i - 1], expected, rtol=1e-11, atol=1e-13)
    assert np.array_equal(table[k:], np.zeros((n - k, *A.shape)))


def test_axis_cell_table_staircase_snaps_argument():
    spec = spec_for(np.diag([0.6, 0.8]))
    from dataclasses import replace

    spec_st = replace(spec, staircase=True)
    n, t = 8, 0.8  # floor(8 * 0.8)/8 = 6/8
    st = axis_cell_table(n, t, spec_st)
    plain = axis_cell_table(n, 6 / 8, spec)
    assert np.allclose(st, plain, atol=1e-15)


# --- cov_integral -----------------------------------------------------------


def test_cov_integral_vanishes_on_axes(scalar_spec):
    assert np.array_equal(cov_integral(0.0, 0.5, 1.0, 1.0, scalar_spec), np.zeros((1, 1)))
    assert np.array_equal(cov_integral(1.0, 1.0, 1.0, 0.0, scalar_spec), np.zeros((1, 1)))


@pytest.mark.parametrize("H,var", [(0.75, 0.64), (0.6, 1 / 1.21)])
def test_cov_integral_scalar_variance(H, var):
    spec = KernelSpec(exponent=scalar_exponent(H))
    got = cov_integral(1.0, 1.0, 1.0, 1.0, spec)[0, 0]
    assert got == pytest.approx(var, abs=1e-10)


@pytest.mark.parametrize("H", [0.55, 0.6, 0.75, 0.9])
def test_cov_integral_scalar_reduction_grid(H):
    # Var X(t, s) = t^(H + 1/2) s^(H + 1/2) / (H + 1/2)^2
    spec = KernelSpec(exponent=scalar_exponent(H))
    for t in (0.25, 0.5, 1.0):
        for s in (0.3, 0.75, 1.0):
            got = cov_integral(t, s, t, s, spec)[0, 0]
            expected = t ** (H + 0.5) * s ** (H + 0.5) / (H + 0.5) ** 2
            assert got == pytest.approx(expected, abs=1e-8)


def test_cov_integral_refinement_consistency(jordan_spec):
    from dataclasses import replace

    val, err = cov_integral_with_error(0.9, 0.7, 0.6, 1.0, jordan_spec)
    doubled = cov_integral(0.9, 0.7, 0.6, 1.0, replace(jordan_spec, quad_order=2 * jordan_spec.quad_order))
    assert np.linalg.norm(doubled - val) <= err


def test_cov_blocks_symmetry_and_psd(diag_spec):
    tensor = cov_blocks(GRID_4x4, diag_spec)
    for k in range(tensor.Q):
        for l in range(tensor.Q):
            assert np.array_equal(tensor.blocks[k, l], tensor.blocks[l, k].T)
    full = tensor.assembled()
    assert np.allclose(full, full.T, atol=1e-14)
    w = np.linalg.eigvalsh(full)
    assert w.min() >= -1e-8 * np.trace(full)
    assert tensor.provenance == "quadrature"


def test_cov_blocks_rejects_duplicates(scalar_spec):
    with pytest.raises(DomainError):
        cov_blocks([(0.5, 0.5), (0.5, 0.5)], scalar_spec)


def test_cov_blocks_diagonal_variance_psd(scalar_spec):
    tensor = cov_blocks([(0.3, 0.8), (0.9, 0.4)], scalar_spec)
    for k in range(tensor.Q):
        blk = tensor.blocks[k, k]
        assert np.linalg.eigvalsh(blk).min() >= -1e-12


# --- on-disk cell table cache ------------------------------------------------


def test_cell_table_cache_roundtrip(tmp_path, diag_spec):
    n, order, m = 4, 12, 2
    table = np.arange((m + 1) * n * 2 * 2, dtype=float).reshape(m + 1, n, 2, 2)
    path = cell_table_path(tmp_path, diag_spec.exponent, n, order, m, False)
    write_cell_table(path, 2, n, order, m, False, table)
    got = read_cell_table(path, 2, n, order, m, False)
    assert np.array_equal(got, table)
    # header mismatch or corruption -> None, never an exception
    assert read_cell_table(path, 2, n, order + 1, m, False) is None
    with open(path, "r+b") as fh:
        fh.truncate(40)
    assert read_cell_table(path, 2, n, order, m, False) is None
    assert read_cell_table(tmp_path / "missing.bin", 2, n, order, m, False) is None
