import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ebincurv.cluster import BlockFrame
from ebincurv.curvature import (CurvatureEvaluator, GeodesicSpec, NonSimpleRepresentation,
                                curvature_trace, evolved_frame, geodesic_metric,
                                relative_discrepancy, scalar_curvature_coords,
                                scalar_curvature_frame, type_decomposition, usable_horizon)
from ebincurv.field import (FrameField, MetricField, Region, TorusGrid, antisym_generator,
                            assemble_endo, conformal_metric, finite_diff, flat_metric,
                            frame_from_generator, gram_schmidt_frame, structure_functions)


def laplacian(f, grid):
    return sum(finite_diff(finite_diff(f, grid, a), grid, a) for a in range(grid.n))


def conformal_R(phi, grid):
    """Scalar curvature of exp(2 phi) delta from its analytic formula, derivatives by differences."""
    n = grid.n
    grad2 = sum(finite_diff(phi, grid, a) ** 2 for a in range(n))
    return -np.exp(-2 * phi) * (2 * (n - 1) * laplacian(phi, grid) + (n - 2) * (n - 1) * grad2)


def twisted_block_frame(res, t_amp=0.3, with_blocks=True):
    grid = TorusGrid(3, res)
    x = grid.coords()
    g0 = conformal_metric(grid, 0.05 * np.sin(2 * np.pi * x[2]))
    V = (t_amp * np.sin(2 * np.pi * x[0]))[..., None, None] * antisym_generator(3, 0, 2)
    V += (t_amp * np.cos(2 * np.pi * x[1]))[..., None, None] * antisym_generator(3, 1, 2)
    frame = frame_from_generator(grid, g0, V)
    l1 = -0.4 + 0.05 * np.sin(2 * np.pi * x[1])
    S = None
    if with_blocks:
        s = 0.05 * np.cos(2 * np.pi * x[0])
        S = np.zeros(grid.shape + (2, 2))
        S[..., 0, 0], S[..., 1, 1], S[..., 0, 1], S[..., 1, 0] = s, -s, 0.5 * s, 0.5 * s
    H = assemble_endo(frame, [l1, -2 * l1], [S, None], (2, 1))
    return grid, g0, H, BlockFrame.from_endo(H)


@pytest.mark.parametrize("n", [2, 3])
def test_coordinate_route_matches_conformal_formula(n):
    grid = TorusGrid(n, 32)
    x = grid.coords()
    phi = 0.2 * np.sin(2 * np.pi * x[0]) * np.cos(2 * np.pi * x[1])
    g = conformal_metric(grid, phi)
    expect = conformal_R(phi, grid)
    assert relative_discrepancy(scalar_curvature_coords(g), expect) < 2e-3


def test_frame_route_matches_conformal_formula():
    grid = TorusGrid(2, 32)
    x = grid.coords()
    phi = 0.2 * np.sin(2 * np.pi * x[0]) * np.cos(2 * np.pi * x[1])
    g = conformal_metric(grid, phi)
    R = scalar_curvature_frame(g, gram_schmidt_frame(g))
    assert relative_discrepancy(R, conformal_R(phi, grid)) < 1e-3


def test_product_metric_curvature():
    grid = TorusGrid(3, 32)
    x = grid.coords()
    phi = 0.15 * np.cos(2 * np.pi * (x[0] + x[1]))
    G = np.zeros(grid.shape + (3, 3))
    G[..., 0, 0] = G[..., 1, 1] = np.exp(2 * phi)
    G[..., 2, 2] = 1.0
    R3 = scalar_curvature_coords(MetricField(grid, G))
    surf = TorusGrid(2, 32)
    R2 = conformal_R(phi[..., 0], surf)
    np.testing.assert_allclose(R3, np.broadcast_to(R2[..., None], R3.shape), atol=1e-2)
    assert np.ptp(R3, axis=2).max() < 1e-12


def test_flat_and_constant_rotation_have_zero_curvature():
    grid = TorusGrid(3, 8)
    g = flat_metric(grid)
    assert np.max(np.abs(scalar_curvature_coords(g))) == 0.0
    V = np.broadcast_to(0.7 * antisym_generator(3, 0, 1), grid.shape + (3, 3))
    assert np.max(np.abs(scalar_curvature_frame(g, frame_from_generator(grid, g, V)))) < 1e-12


@settings(max_examples=15)
@given(st.floats(0, 4))
def test_geodesic_preserves_volume(t):
    grid, g0, H, _ = twisted_block_frame(8)
    gt = geodesic_metric(g0, H, t)
    np.testing.assert_allclose(np.linalg.det(gt.G), np.linalg.det(g0.G), rtol=1e-11)
    np.testing.assert_allclose(gt.G, np.swapaxes(gt.G, -1, -2), atol=0)


@settings(max_examples=15)
@given(st.floats(0, 4))
def test_evolved_frame_is_orthonormal(t):
    grid, g0, H, bf = twisted_block_frame(8)
    Et = evolved_frame(bf, t)
    assert Et.orthonormality_residual(geodesic_metric(g0, H, t).G) < 1e-11


def test_frame_and_diagonal_agree_on_rotation_frame():
    grid = TorusGrid(3, 16)
    x = grid.coords()
    g0 = flat_metric(grid)
    V = (2 * np.pi * x[0])[..., None, None] * antisym_generator(3, 1, 2)
    lam = [np.full(grid.shape, v) for v in (-0.5, -0.25, 0.75)]
    H = assemble_endo(frame_from_generator(grid, g0, V), lam, [None] * 3, (1, 1, 1))
    spec = GeodesicSpec(g0, H, (0, 1, 2))
    fr, dg = CurvatureEvaluator(spec, "frame"), CurvatureEvaluator(spec, "diagonal")
    for t in (0.0, 1.0, 2.0):
        assert relative_discrepancy(fr(t), dg(t)) < 1e-10
    # constant brackets: c_123 = c_312 = -c_213 = -c_132 and c_231 = c_321 = 0, so
    # R = -c^2 (e^{(l3-l1-l2)t} + e^{(l2-l1-l3)t}) / 2 + c^2 e^{-l1 t}
    c = structure_functions(H.frame.E, g0.G, grid)
    c123 = c[0, 0, 0, 0, 1, 2]
    assert abs(c123) == pytest.approx(2 * np.pi, rel=1e-2)
    assert np.max(np.abs(c[..., 1, 2, 0])) < 1e-12
    l1, l2, l3, t = -0.5, -0.25, 0.75, 2.0
    expect = -0.5 * c123 ** 2 * (np.exp((l3 - l1 - l2) * t) + np.exp((l2 - l1 - l3) * t)) + c123 ** 2 * np.exp(-l1 * t)
    np.testing.assert_allclose(dg(t), expect, rtol=1e-12)


def test_diagonal_route_converges_to_oracle():
    errs = []
    for res in (16, 32):
        grid, g0, H, bf = twisted_block_frame(res, with_blocks=False)
        spec = GeodesicSpec(g0, H, (1.0,), bf)
        errs.append(relative_discrepancy(CurvatureEvaluator(spec, "diagonal")(1.0),
                                         CurvatureEvaluator(spec, "oracle")(1.0)))
    assert errs[1] < 2e-3
    assert np.log2(errs[0] / errs[1]) > 3


def test_frame_route_with_blocks_converges_to_oracle():
    errs = []
    for res in (16, 32):
        grid, g0, H, bf = twisted_block_frame(res)
        spec = GeodesicSpec(g0, H, (1.0,), bf)
        errs.append(relative_discrepancy(CurvatureEvaluator(spec, "frame")(1.0),
                                         CurvatureEvaluator(spec, "oracle")(1.0)))
    assert errs[1] < 2e-3
    assert np.log2(errs[0] / errs[1]) > 3


def test_diagonal_refuses_blocks():
    grid, g0, H, bf = twisted_block_frame(8)
    with pytest.raises(NonSimpleRepresentation):
        CurvatureEvaluator(GeodesicSpec(g0, H, (0,), bf), "diagonal")(0.0)


def test_type_decomposition_sums_to_evolved_structure():
    t, errs = 1.0, []
    for res in (16, 32):
        grid, g0, H, bf = twisted_block_frame(res)
        terms = type_decomposition(bf, t, g0)
        direct = structure_functions(evolved_frame(bf, t).E, geodesic_metric(g0, H, t).G, grid)
        errs.append(np.max(np.abs(terms.total() - direct)) / np.max(np.abs(direct)))
    # the two routes differ only through the difference operator
    assert errs[1] < 1e-4 and errs[0] / errs[1] > 8
    # at t = 0 the gradient terms vanish
    zero = type_decomposition(bf, 0.0, g0)
    assert np.max(np.abs(zero.II)) < 1e-12 and np.max(np.abs(zero.III)) < 1e-12


def test_trace_horizon_truncates():
    grid = TorusGrid(2, 8)
    frame = gram_schmidt_frame(flat_metric(grid))
    H = assemble_endo(frame, [np.full(grid.shape, -20.0), np.full(grid.shape, 20.0)], [None, None], (1, 1))
    assert usable_horizon(H) == pytest.approx(2.0)
    tr = curvature_trace(GeodesicSpec(flat_metric(grid), H, (0.0, 1.0, 3.0)), "frame")
    assert tr.times == [0.0, 1.0] and tr.truncated and tr.horizon == pytest.approx(2.0)


def test_trace_statistics_and_validation():
    grid, g0, H, bf = twisted_block_frame(8, with_blocks=False)
    spec = GeodesicSpec(g0, H, (0.0, 0.5), bf)
    region = Region("half", (0, 0, 0), (4, 8, 8))
    tr = curvature_trace(spec, "diagonal", region, keep_fields=True)
    R = tr.fields[1][:4]
    assert tr.sup[1] == np.max(R) and tr.inf[1] == np.min(R) and tr.mean[1] == pytest.approx(np.mean(R))
    with pytest.raises(ValueError):
        curvature_trace(GeodesicSpec(g0, H, (1.0, 0.5)), "frame")
    with pytest.raises(ValueError):
        CurvatureEvaluator(spec, "nope")


def test_relative_discrepancy():
    assert relative_discrepancy(np.array([1.0, 3.0]), np.array([1.0, 1.0])) == pytest.approx(1.0)
    assert isinstance(FrameField, type)
