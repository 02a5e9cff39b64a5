import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ebincurv import genericity as gen
from ebincurv.cluster import BlockFrame
from ebincurv.cli import builtins
from ebincurv.cli.scenario import build
from ebincurv.field import (EndoField, Region, TorusGrid, flat_metric, frame_derivative,
                            gram_schmidt_frame, structure_functions)


def matrix_endo(grid, Hf):
    return EndoField(grid, gram_schmidt_frame(flat_metric(grid)), Hf)


def n2_field(res, shift=(0.13, 0.31), amp=1.0):
    grid = TorusGrid(2, res)
    x = grid.coords()
    a = amp * np.sin(2 * np.pi * (x[0] - shift[0]))
    b = np.sin(2 * np.pi * (x[1] - shift[1]))
    return matrix_endo(grid, np.stack([np.stack([a, b], -1), np.stack([b, -a], -1)], -2))


def test_flagged_cells_none_for_separated_spectrum():
    grid = TorusGrid(2, 8)
    H = matrix_endo(grid, np.broadcast_to(np.diag([-1.0, 1.0]), grid.shape + (2, 2)).copy())
    assert not gen.flagged_cells(H, 0.1).any()
    with pytest.raises(ValueError):
        gen.flagged_cells(H, 0.0)


@pytest.mark.parametrize("res", [32, 64])
def test_n2_hits_are_the_common_zeros(res):
    H = n2_field(res)
    hits = gen.singular_locus(H, gen.gradient_scale(H) * H.grid.spacing)
    pts = sorted(tuple(np.round(h.point, 6)) for h in hits)
    expect = sorted((a, b) for a in (0.13, 0.63) for b in (0.31, 0.81))
    assert len(hits) == 4
    np.testing.assert_allclose(pts, expect, atol=1e-4)
    for h in hits:
        assert h.m == (2,) and h.transversal
        assert h.margin == pytest.approx(2 * np.sqrt(2) * np.pi, rel=1e-2)


def test_degenerate_hit_and_repair():
    b = build(builtins.get("degenerate2"))
    gap_tol = gen.gradient_scale(b.H) * b.grid.spacing
    hits = gen.singular_locus(b.H, gap_tol)
    assert hits and not gen.all_transversal(hits)
    assert min(h.margin for h in hits) < gen.default_margin_tol(b.H)
    fixed = gen.perturb_to_generic(b.H, 7, 0.05, gap_tol)
    assert fixed.candidate >= 1 and gen.all_transversal(fixed.hits)
    again = gen.perturb_to_generic(b.H, 7, 0.05, gap_tol)
    assert again.candidate == fixed.candidate
    np.testing.assert_array_equal(again.H.Hf, fixed.H.Hf)
    with pytest.raises(gen.BudgetExhausted):
        gen.perturb_to_generic(b.H, 7, 1e-9, gap_tol, budget=2)
    with pytest.raises(ValueError):
        gen.perturb_to_generic(b.H, 7, 0.0, gap_tol)


def test_transversality_impossible_is_noted():
    grid = TorusGrid(3, 8)
    H = matrix_endo(grid, np.zeros(grid.shape + (3, 3)))
    hits = gen.singular_locus(H, 1e-3)
    assert len(hits) == 1 and hits[0].m == (3,)
    assert not hits[0].transversal and "codimension" in hits[0].note


@settings(max_examples=10)
@given(st.integers(0, 2 ** 31), st.integers(1, 2))
def test_low_frequency_field(seed, modes):
    grid = TorusGrid(2, 8)
    P = gen._low_frequency_field(grid, np.random.default_rng(seed), modes)
    assert np.max(np.sqrt(np.sum(P ** 2, axis=(-1, -2)))) == pytest.approx(1.0)
    np.testing.assert_allclose(np.trace(P, axis1=-2, axis2=-1), 0, atol=1e-14)
    np.testing.assert_array_equal(P, np.swapaxes(P, -1, -2))


def test_cutoff_profile():
    grid = TorusGrid(2, 16)
    region = Region("box", (4, 4), (8, 8))
    psi = gen.cutoff(grid, region)
    assert np.all(psi[4:8, 4:8] == 1.0)
    assert psi[0, 0] == 0.0 and psi[12, 12] == 0.0
    assert np.all((psi >= 0) & (psi <= 1))
    assert np.all(gen.cutoff(grid, Region.full(grid)) == 1.0)


def test_pair_sum():
    row = np.zeros((3, 3))
    row[1, 2], row[2, 1] = 2.0, -2.0
    assert gen.pair_sum(row, [(1, 2)]) == 4.0


def test_posstr_frame_perturbation():
    grid = TorusGrid(5, 8)
    frame = gram_schmidt_frame(flat_metric(grid))
    Hf = np.broadcast_to(np.diag([-2.0, -1.0, 0.0, 1.0, 2.0]), grid.shape + (5, 5)).copy()
    bf = BlockFrame.from_endo(EndoField(grid, frame, Hf), (1,) * 5)
    J = [(j, k) for j in range(1, 5) for k in range(j + 1, 5)]
    region = Region("core", (2,) * 5, (6,) * 5)
    res = gen.posstr_frame_perturbation(bf, region, J, seed=1)
    assert res.candidate >= 1 and res.min_sum > 0
    # eigen data are untouched, the frame stays orthonormal
    np.testing.assert_array_equal(res.block_frame.lambdas, bf.lambdas)
    assert res.block_frame.frame.orthonormality_residual(flat_metric(grid).G) < 1e-12
    with pytest.raises(ValueError):
        gen.posstr_frame_perturbation(bf, region, J[:5], seed=1)
    with pytest.raises(ValueError):
        gen.posstr_frame_perturbation(bf, region, [(0, 1)] + J, seed=1)


def test_spike_conditions_at_origin():
    grid = TorusGrid(3, 32)
    sp = gen.build_3d_spike(grid, 2.0)
    E = sp.H.frame.E
    c = structure_functions(E, flat_metric(grid).G, grid)
    lam = np.stack([sp.H.Hf[..., i, i] for i in range(3)], -1)
    dl = frame_derivative(lam, E, grid)
    p = sp.point
    assert abs(c[p][0, 1, 2]) < 1e-14
    assert abs(dl[p][0, 0]) < 1e-12 and abs(dl[p][1, 0]) < 1e-12
    assert frame_derivative(c[..., 0, 1, 2], E, grid)[p][2] == pytest.approx(1.0, rel=1e-3)
    assert frame_derivative(dl[..., 0, 0], E, grid)[p][0] == pytest.approx(2.1, rel=1e-3)
    assert np.all(lam[..., 0] < 0) and np.all(lam[..., 1] > 0) and np.all(lam[..., 2] > lam[..., 1])
    with pytest.raises(ValueError):
        gen.build_3d_spike(grid, 0.0)
    with pytest.raises(ValueError):
        gen.build_3d_spike(TorusGrid(2, 8), 1.0)


def test_builtin_spike_scenario_matches_construction():
    b = build(builtins.get("spike3"))
    sp = gen.build_3d_spike(b.grid, 1.0)
    np.testing.assert_allclose(b.H.coordinate_matrix(), sp.H.coordinate_matrix(), atol=1e-13)
