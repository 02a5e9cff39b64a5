import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ebincurv.field import (Region, SymTensorField, TorusGrid, antisym_generator, assemble_endo,
                            conformal_metric, finite_diff, flat_metric, frame_derivative,
                            frame_from_generator, gram_schmidt_frame, l2_inner, load_field,
                            rotation_exp, save_field, structure_functions, structure_row)


def rotation_frame(res, n=3, twist=1.0):
    grid = TorusGrid(n, res)
    x = grid.coords()
    V = (2 * np.pi * twist * x[0])[..., None, None] * antisym_generator(n, 1, 2)
    return grid, frame_from_generator(grid, flat_metric(grid), V)


def test_grid_basics():
    grid = TorusGrid(2, 8)
    assert grid.shape == (8, 8) and grid.spacing == 1 / 8 and grid.size == 64
    np.testing.assert_allclose(grid.point((4, 2)), [0.5, 0.25])
    with pytest.raises(ValueError):
        TorusGrid(2, 4)


def test_region_validation():
    grid = TorusGrid(2, 8)
    Region("a", (0, 0), (4, 8)).validate(grid)
    assert Region.full(grid).mask(grid).all()
    with pytest.raises(ValueError):
        Region("b", (4, 0), (4, 8)).validate(grid)
    with pytest.raises(ValueError):
        Region("c", (0,), (4,)).validate(grid)


@pytest.mark.parametrize("order", [2, 4])
def test_finite_diff_convergence_order(order):
    errs = []
    for res in (16, 32):
        grid = TorusGrid(1, res)
        x = grid.coords()[0]
        err = finite_diff(np.sin(2 * np.pi * x), grid, 0, order) - 2 * np.pi * np.cos(2 * np.pi * x)
        errs.append(np.max(np.abs(err)))
    assert np.log2(errs[0] / errs[1]) == pytest.approx(order, abs=0.1)
    with pytest.raises(ValueError):
        finite_diff(np.zeros(8), TorusGrid(1, 8), 0, order=3)


def test_frame_derivative_of_coordinate_function():
    grid, frame = rotation_frame(32)
    x = grid.coords()
    f = np.sin(2 * np.pi * x[1])
    d = frame_derivative(f, frame.E, grid)
    expect = 2 * np.pi * np.cos(2 * np.pi * x[1])[..., None] * frame.E[..., 1, :]
    np.testing.assert_allclose(d, expect, atol=1e-3)


@given(st.floats(-0.4, 0.4), st.floats(-0.4, 0.4))
def test_gram_schmidt_frame_orthonormal(a, b):
    grid = TorusGrid(2, 8)
    x = grid.coords()
    g0 = conformal_metric(grid, a * np.sin(2 * np.pi * x[0]) + b * np.cos(2 * np.pi * x[1]))
    assert gram_schmidt_frame(g0).orthonormality_residual(g0.G) < 1e-13


@given(st.floats(-3, 3))
def test_generator_frame_orthonormal(amp):
    grid = TorusGrid(3, 8)
    x = grid.coords()
    g0 = conformal_metric(grid, 0.2 * np.sin(2 * np.pi * x[2]))
    V = (amp * np.sin(2 * np.pi * x[0]))[..., None, None] * antisym_generator(3, 0, 2)
    frame = frame_from_generator(grid, g0, V)
    assert frame.orthonormality_residual(g0.G) < 1e-12


def test_generator_must_be_antisymmetric():
    grid = TorusGrid(2, 8)
    with pytest.raises(ValueError):
        frame_from_generator(grid, flat_metric(grid), np.ones(grid.shape + (2, 2)))


def test_rotation_exp_matches_closed_form():
    th = np.linspace(0, 6, 7)[:, None, None]
    R = rotation_exp(th * antisym_generator(2, 0, 1))
    c, s = np.cos(th[:, 0, 0]), np.sin(th[:, 0, 0])
    np.testing.assert_allclose(R[:, 0, 0], c, atol=1e-13)
    np.testing.assert_allclose(R[:, 0, 1], s, atol=1e-13)


def test_rotation_frame_structure_functions():
    grid, frame = rotation_frame(32)
    c = structure_functions(frame.E, flat_metric(grid).G, grid)
    np.testing.assert_allclose(np.abs(c[..., 0, 1, 2]), 2 * np.pi, rtol=1e-3)
    np.testing.assert_allclose(c, -np.swapaxes(c, -3, -2), atol=1e-14)
    # only the (1, 2, 3) family and its permutations carry the twist
    mask = np.ones((3, 3, 3), bool)
    for i, j, k in [(0, 1, 2), (1, 0, 2), (0, 2, 1), (2, 0, 1)]:
        mask[i, j, k] = False
    assert np.max(np.abs(c[..., mask])) < 1e-12


def test_structure_row_matches_full():
    grid = TorusGrid(3, 8)
    x = grid.coords()
    g0 = conformal_metric(grid, 0.1 * np.cos(2 * np.pi * x[1]))
    V = (np.sin(2 * np.pi * x[0]) + 0.5 * np.cos(2 * np.pi * x[2]))[..., None, None] * antisym_generator(3, 0, 1)
    V += (0.3 * np.sin(2 * np.pi * x[1]))[..., None, None] * antisym_generator(3, 1, 2)
    E = frame_from_generator(grid, g0, V).E
    c = structure_functions(E, g0.G, grid)
    for i in range(3):
        np.testing.assert_allclose(structure_row(E, g0.G, grid, i), c[..., i, :, :], atol=1e-12)


def test_assemble_endo_checks_trace():
    grid = TorusGrid(2, 8)
    frame = gram_schmidt_frame(flat_metric(grid))
    H = assemble_endo(frame, [np.full(grid.shape, -0.5), np.full(grid.shape, 0.5)], [None, None], (1, 1))
    np.testing.assert_allclose(H.spectra(), np.broadcast_to([-0.5, 0.5], grid.shape + (2,)))
    with pytest.raises(ValueError):
        assemble_endo(frame, [np.ones(grid.shape), np.ones(grid.shape)], [None, None], (1, 1))


def test_coordinate_matrix_is_frame_conjugate():
    grid, frame = rotation_frame(8)
    lam = [np.full(grid.shape, v) for v in (-0.5, -0.25, 0.75)]
    H = assemble_endo(frame, lam, [None] * 3, (1, 1, 1))
    G = flat_metric(grid).G
    np.testing.assert_allclose(H.in_frame(frame.E, G), H.Hf, atol=1e-13)


def test_l2_inner_conformal_scaling():
    grid = TorusGrid(2, 16)
    h = SymTensorField(grid, np.broadcast_to(np.eye(2), grid.shape + (2, 2)).copy())
    assert l2_inner(h, h, flat_metric(grid)) == pytest.approx(2.0)
    # tr(g^-1 h g^-1 h) sqrt(det g) is scale-free for h = g in two dimensions
    g = conformal_metric(grid, np.full(grid.shape, 0.3))
    assert l2_inner(SymTensorField(grid, g.G), SymTensorField(grid, g.G), g) == pytest.approx(2 * np.exp(0.6))


@pytest.mark.parametrize("fmt", ["binary", "text"])
def test_field_file_round_trip(tmp_path, fmt, rng):
    grid = TorusGrid(2, 8)
    vals = rng.standard_normal(grid.shape + (2, 2))
    save_field(tmp_path / "f", grid, vals, fmt)
    g2, back = load_field(tmp_path / "f")
    assert g2 == grid
    np.testing.assert_array_equal(back, vals)
