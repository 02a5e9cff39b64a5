"""Scalar curvature along ``g_t = g_0(exp(tH) ., .)``.

Three independent routes share the same finite-difference operator:

* ``frame``: Koszul symbols of the evolved orthonormal frame, then the
  frame expression for scalar curvature;
* ``diagonal``: the closed form in eigenvalues and structure functions,
  valid when ``H`` is diagonal in an orthonormal frame;
* ``oracle``: coordinate Christoffel symbols of ``G_t`` and the Ricci trace.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import permutations
from typing import Sequence

import numpy as np

from .cluster import BlockFrame
from .field import (EndoField, FrameField, MetricField, Region, TorusGrid, finite_diff,
                    flat_metric, frame_derivative, structure_functions)
from .symcore import EXP_LIMIT, ExpOverflowError, sym_exp
from .workers import ordered_map

METHODS = ("frame", "diagonal", "oracle")


class NonSimpleRepresentation(ValueError):
    """The closed form needs ``H`` diagonal in its frame."""


def _guard(lam_t: np.ndarray) -> None:
    worst = float(np.max(np.abs(lam_t))) if lam_t.size else 0.0
    if worst > EXP_LIMIT:
        raise ExpOverflowError(worst)


def geodesic_metric(g0: MetricField, H: EndoField, t: float) -> MetricField:
    """Coordinate matrix of ``g_0(exp(tH) ., .)``.

    With ``E`` the ``g_0``-orthonormal frame holding ``H``, ``E^{-1} = E^T G_0``
    and ``G_t = (G_0 E) exp(t Hf) (G_0 E)^T``.
    """
    if t == 0:
        return MetricField(g0.grid, g0.G.copy())
    F = g0.G @ H.frame.E
    Gt = F @ sym_exp(H.Hf, t) @ np.swapaxes(F, -1, -2)
    return MetricField(g0.grid, 0.5 * (Gt + np.swapaxes(Gt, -1, -2)))


def _evolution_factor(bf: BlockFrame, t: float, sign: float = -1.0) -> np.ndarray:
    """``blockdiag(exp(sign * t (lambda_i I + S_i) / 2))``."""
    lam = bf.lambda_per_index()
    _guard(0.5 * t * lam)
    X = sym_exp(bf.S_full(), sign * 0.5 * t)
    return X * np.exp(sign * 0.5 * t * lam)[..., None, :]


def evolved_frame(bf: BlockFrame, t: float) -> FrameField:
    """``g_t``-orthonormal frame ``e_t = E exp(-t Hf / 2)`` (block by block)."""
    return FrameField(bf.grid, bf.frame.E @ _evolution_factor(bf, t))


def christoffel_frame(c: np.ndarray) -> np.ndarray:
    """``G[..., i, j, k] = g(nabla_{e_i} e_j, e_k)`` by the Koszul formula."""
    return 0.5 * (c + np.einsum("...kij->...ijk", c) + np.einsum("...kji->...ijk", c))


def _gamma_row(c: np.ndarray, i: int, j: int) -> np.ndarray:
    """``G[..., i, j, :]`` without forming the full symbol array."""
    return 0.5 * (c[..., i, j, :] + c[..., :, i, j] + c[..., :, j, i])


def scalar_curvature_from_structure(c: np.ndarray, E: np.ndarray, grid: TorusGrid,
                                    order: int = 4) -> np.ndarray:
    """``2 sum e_i(G^i_jj) - sum (G^k_ii G^k_jj + G^j_ik G^j_ki)``.

    The derivative term is summed before differentiating, which is exact
    because the difference operator is linear.
    """
    n = grid.n
    A = np.zeros(grid.shape + (n,))
    for j in range(n):
        A += _gamma_row(c, j, j)  # A[..., i] = sum_j G^i_jj
    div = 0.0
    for m in range(n):
        div = div + np.sum(E[..., m, :] * finite_diff(A, grid, m, order), axis=-1)
    quad = np.sum(A ** 2, axis=-1)
    cross = np.zeros(grid.shape)
    for i in range(n):
        for k in range(n):
            cross += np.sum(_gamma_row(c, i, k) * _gamma_row(c, k, i), axis=-1)
    return 2.0 * div - quad - cross


def scalar_curvature_frame(gt: MetricField, Et: FrameField, order: int = 4) -> np.ndarray:
    c = structure_functions(Et.E, gt.G, gt.grid, order)
    return scalar_curvature_from_structure(c, Et.E, gt.grid, order)


def scalar_curvature_coords(g: MetricField, order: int = 4) -> np.ndarray:
    """Coordinate scalar curvature ``g^ij R_ij`` from finite-difference Christoffels.

    Second derivatives of the metric are taken as differences of the
    differenced Christoffel symbols. Loops keep peak memory near two
    rank-three fields, which matters for n = 5.
    """
    grid = g.grid
    n = grid.n
    G = g.G
    Ginv = np.linalg.inv(G)
    gam = np.zeros(grid.shape + (n, n, n))  # gam[k, i, j] = Gamma^k_ij
    for l in range(n):
        # col[..., a, j] = d_a g_jl and dl[..., i, j] = d_l g_ij
        col = np.stack([finite_diff(G[..., :, l], grid, a, order) for a in range(n)], axis=-2)
        dl = finite_diff(G, grid, l, order)
        low = 0.5 * (col + np.swapaxes(col, -1, -2) - dl)  # Gamma_{l i j}
        del col, dl
        for k in range(n):
            gam[..., k, :, :] += Ginv[..., k, l, None, None] * low
        del low
    Ric = np.zeros(grid.shape + (n, n))
    for k in range(n):
        Ric += finite_diff(gam[..., k, :, :], grid, k, order)
    v = np.einsum("...kki->...i", gam)
    for j in range(n):
        Ric[..., :, j] -= finite_diff(v, grid, j, order)
    for l in range(n):
        Ric += v[..., l, None, None] * gam[..., l, :, :]
    for i in range(n):
        Ni = np.swapaxes(gam[..., :, i, :], -1, -2)  # Ni[k, l] = Gamma^l_ik
        for j in range(n):
            Ric[..., i, j] -= np.sum(gam[..., :, j, :] * Ni, axis=(-1, -2))
    return np.einsum("...ij,...ij->...", Ginv, Ric)


# --- type decomposition ----------------------------------------------------

@dataclass
class TypeTerms:
    I: np.ndarray
    II: np.ndarray
    III: np.ndarray

    def total(self) -> np.ndarray:
        return self.I + self.II + self.III


def type_decomposition(bf: BlockFrame, t: float, g0: MetricField | None = None,
                       order: int = 4, c0: np.ndarray | None = None) -> TypeTerms:
    """Split the evolved structure functions into algebraic and gradient parts.

    Indices are flattened eigen-indices. ``I`` rescales and conjugates the
    time-zero structure functions; ``II`` and ``III`` carry frame derivatives
    of ``exp(-t (lambda_j I + S_j) / 2)`` and vanish unless the second (resp.
    first) leg shares a cluster with the third.
    """
    grid = bf.grid
    g0 = g0 or flat_metric(grid)
    E = bf.frame.E
    if c0 is None:
        c0 = structure_functions(E, g0.G, grid, order)
    lam = bf.lambda_per_index()
    _guard(t * lam)
    S = bf.S_full()
    X = sym_exp(S, -0.5 * t)
    Y = sym_exp(S, 0.5 * t)
    half = 0.5 * t * lam
    # sqrt(alpha_k / (alpha_i alpha_j)) on the flattened legs
    scale = np.exp(half[..., None, None, :] - half[..., :, None, None] - half[..., None, :, None])
    I = scale * np.einsum("...aA,...bB,...cC,...ABC->...abc", X, X, Y, c0, optimize=True)
    f = X * np.exp(-half)[..., None, :]
    df = frame_derivative(f, E, grid, order)  # df[..., p, q, d] = e_d(f[p, q])
    ra = np.exp(half)  # sqrt(alpha) per index
    II = np.einsum("...aA,...BbA,...cB->...abc", X, df, Y, optimize=True)
    II *= ra[..., None, None, :] / ra[..., :, None, None]
    III = -np.einsum("...AaB,...bB,...cA->...abc", df, X, Y, optimize=True)
    III *= ra[..., None, None, :] / ra[..., None, :, None]
    return TypeTerms(I, II, III)


# --- diagonal closed form --------------------------------------------------

@dataclass
class DiagonalClosedForm:
    """Coefficient fields of the closed form, evaluated once at ``t = 0``.

    ``R(t) = sum_PD exp((l_k - l_i - l_j) t) F_pd[i,j,k]
             + sum_i exp(-l_i t) (t^2 F2_i + t F1_i + F0_i)``.
    """

    lam: np.ndarray
    F_pd: np.ndarray
    F2: np.ndarray
    F1: np.ndarray
    F0: np.ndarray
    triplets: list[tuple[int, int, int]]

    def at(self, t: float) -> np.ndarray:
        lam = self.lam
        _guard(t * lam)
        R = np.zeros(lam.shape[:-1])
        for (i, j, k) in self.triplets:
            R += np.exp((lam[..., k] - lam[..., i] - lam[..., j]) * t) * self.F_pd[..., i, j, k]
        R += np.sum(np.exp(-lam * t) * (t * t * self.F2 + t * self.F1 + self.F0), axis=-1)
        return R


def diagonal_closed_form(c: np.ndarray, lam: np.ndarray, E: np.ndarray, grid: TorusGrid,
                         order: int = 4) -> DiagonalClosedForm:
    """Coefficients from time-zero structure functions ``c`` and per-index eigenvalues ``lam``.

    The pairwise-distinct quadratic term pairs ``c[i,j,k]`` with ``c[k,i,j]``.
    """
    n = grid.n
    dl = frame_derivative(lam, E, grid, order)  # dl[..., j, i] = e_i(lambda_j)
    eii = np.einsum("...ii->...i", dl)
    dii = np.einsum("...ii->...i", frame_derivative(eii, E, grid, order))  # e_i(e_i lambda_i)
    cjj = np.einsum("...ijj->...ij", c)  # cjj[i, j] = c_{ijj}
    dcjj = frame_derivative(cjj, E, grid, order)  # [..., i, j, d] = e_d(c_ijj)
    e_cjj = np.einsum("...iji->...ij", dcjj)  # e_i(c_ijj)
    off = ~np.eye(n, dtype=bool)
    F2 = -0.75 * eii ** 2 - 0.25 * np.sum(np.where(off, np.swapaxes(dl, -1, -2) ** 2, 0.0), axis=-1)
    eil = np.swapaxes(dl, -1, -2)  # eil[..., i, j] = e_i(lambda_j)
    F1 = dii + np.sum(np.where(off, cjj * (eil - 2.0 * eii[..., :, None]), 0.0), axis=-1)
    F0 = 2.0 * np.sum(np.where(off, e_cjj - cjj ** 2, 0.0), axis=-1)
    triplets = list(permutations(range(n), 3))
    for (i, j, k) in triplets:
        F0[..., i] += 0.5 * c[..., i, j, k] * c[..., k, i, j] - cjj[..., i, j] * cjj[..., i, k]
    F_pd = -0.25 * c ** 2
    return DiagonalClosedForm(lam, F_pd, F2, F1, F0, triplets)


def diagonal_scalar(c: np.ndarray, lam: np.ndarray, E: np.ndarray, grid: TorusGrid, t: float,
                    order: int = 4) -> np.ndarray:
    return diagonal_closed_form(c, lam, E, grid, order).at(t)


# --- traces ----------------------------------------------------------------

@dataclass
class GeodesicSpec:
    g0: MetricField
    H: EndoField
    times: Sequence[float]
    block_frame: BlockFrame | None = None

    def frame_data(self) -> BlockFrame:
        return self.block_frame or BlockFrame.from_endo(self.H)


@dataclass
class CurvatureTrace:
    times: list[float]
    sup: list[float]
    inf: list[float]
    mean: list[float]
    method: str
    fields: list[np.ndarray] = field(default_factory=list)
    horizon: float | None = None

    @property
    def truncated(self) -> bool:
        return self.horizon is not None


def usable_horizon(H: EndoField) -> float:
    lam = float(np.max(np.abs(H.spectra())))
    return np.inf if lam == 0 else EXP_LIMIT / lam


class CurvatureEvaluator:
    """Evaluates ``R(g_t)`` for one scenario and one method, caching time-zero data."""

    def __init__(self, spec: GeodesicSpec, method: str, order: int = 4):
        if method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        self.spec, self.method, self.order = spec, method, order
        self._closed: DiagonalClosedForm | None = None

    def closed_form(self) -> DiagonalClosedForm:
        if self._closed is None:
            bf = self.spec.frame_data()
            if not bf.is_diagonal():
                raise NonSimpleRepresentation("H has non-zero off-diagonal blocks in its frame")
            c0 = structure_functions(bf.frame.E, self.spec.g0.G, bf.grid, self.order)
            self._closed = diagonal_closed_form(c0, bf.lambda_per_index(), bf.frame.E, bf.grid, self.order)
        return self._closed

    def __call__(self, t: float) -> np.ndarray:
        spec = self.spec
        if self.method == "oracle":
            return scalar_curvature_coords(geodesic_metric(spec.g0, spec.H, t), self.order)
        if self.method == "diagonal":
            return self.closed_form().at(t)
        bf = spec.frame_data()
        gt = geodesic_metric(spec.g0, bf.endo(), t)
        return scalar_curvature_frame(gt, evolved_frame(bf, t), self.order)


def curvature_trace(spec: GeodesicSpec, method: str, region: Region | None = None,
                    order: int = 4, keep_fields: bool = False) -> CurvatureTrace:
    """``R(g_t)`` over ``spec.times`` with region statistics.

    Times beyond the overflow horizon are dropped and the horizon recorded.
    """
    times = [float(t) for t in spec.times]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ValueError("times must be strictly increasing")
    horizon = usable_horizon(spec.H)
    usable = [t for t in times if t <= horizon]
    region = region or Region.full(spec.g0.grid)
    sl = region.slices()
    ev = CurvatureEvaluator(spec, method, order)
    if method == "diagonal" and usable:
        ev.closed_form()

    def one(t):
        R = ev(t)
        Rr = R[sl]
        return float(np.max(Rr)), float(np.min(Rr)), float(np.mean(Rr)), (R if keep_fields else None)

    rows = ordered_map(one, usable)
    trace = CurvatureTrace(usable, [r[0] for r in rows], [r[1] for r in rows], [r[2] for r in rows], method,
                           [r[3] for r in rows] if keep_fields else [],
                           horizon if len(usable) < len(times) else None)
    return trace


def relative_discrepancy(Ra: np.ndarray, Rb: np.ndarray) -> float:
    """``max |Ra - Rb| / (1 + max |Rb|)``."""
    return float(np.max(np.abs(Ra - Rb)) / (1.0 + np.max(np.abs(Rb))))
