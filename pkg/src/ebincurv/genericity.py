"""Singular loci of traceless fields, transversality margins, and perturbation searches."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .cluster import BlockFrame
from .field import (EndoField, FrameField, MetricField, Region, TorusGrid, antisym_generator,
                    finite_diff, flat_metric, gram_schmidt_frame, rotation_exp, structure_row)
from .strata import codim
from .symcore import multiplicity_of, prefix_sums, sym0_orthonormal_basis, sym_sqrt

REFINE_ITERS = 20
MARGIN_TOL_FACTOR = 1e-4
_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


class TransversalityImpossible(ValueError):
    """The stratum has codimension larger than the base dimension."""


class BudgetExhausted(RuntimeError):
    def __init__(self, message: str, best: float):
        self.best = best
        super().__init__(f"{message} (best value {best:.3g})")


@dataclass
class SingularHit:
    cell: tuple[int, ...]
    point: np.ndarray
    m: tuple[int, ...]
    gap: float
    cells: int
    transversal: bool = False
    margin: float = 0.0
    note: str = ""


# --- interpolation helpers -------------------------------------------------

def _interp(F: np.ndarray, grid: TorusGrid, x: np.ndarray) -> np.ndarray:
    """Periodic multilinear interpolation of a grid field at a point ``x``."""
    u = np.asarray(x, dtype=float) * grid.res
    base = np.floor(u).astype(int)
    frac = u - base
    out = 0.0
    for corner in range(2 ** grid.n):
        bits = [(corner >> a) & 1 for a in range(grid.n)]
        w = np.prod([frac[a] if b else 1.0 - frac[a] for a, b in enumerate(bits)])
        if w == 0.0:
            continue
        idx = tuple((base[a] + bits[a]) % grid.res for a in range(grid.n))
        out = out + w * F[idx]
    return np.asarray(out)


def _min_gap(S: np.ndarray) -> float:
    w = np.linalg.eigvalsh(0.5 * (S + S.T))
    return float(np.min(np.diff(w)))


def gradient_scale(H: EndoField, order: int = 4) -> float:
    """``sup_x sqrt(sum_d |d_d Hf|_F^2)``; sets the default margin tolerance."""
    tot = 0.0
    for a in range(H.grid.n):
        tot = tot + np.sum(finite_diff(H.Hf, H.grid, a, order) ** 2, axis=(-1, -2))
    return float(np.sqrt(np.max(tot)))


def default_margin_tol(H: EndoField) -> float:
    return MARGIN_TOL_FACTOR * gradient_scale(H)


# --- singular locus --------------------------------------------------------

def flagged_cells(H: EndoField, gap_tol: float) -> np.ndarray:
    """Boolean grid mask where the smallest consecutive eigenvalue gap is below ``gap_tol``."""
    if gap_tol <= 0:
        raise ValueError("gap_tol must be positive")
    w = np.linalg.eigvalsh(H.Hf)
    return np.min(np.diff(w, axis=-1), axis=-1) < gap_tol


def _components(mask: np.ndarray) -> list[list[tuple[int, ...]]]:
    """Face-connected components of ``mask`` on the periodic grid, in scan order."""
    shape = mask.shape
    seen = np.zeros(shape, dtype=bool)
    comps = []
    for start in map(tuple, np.argwhere(mask)):
        if seen[start]:
            continue
        seen[start] = True
        comp, queue = [], deque([start])
        while queue:
            cell = queue.popleft()
            comp.append(cell)
            for a in range(len(shape)):
                for step in (-1, 1):
                    nb = list(cell)
                    nb[a] = (nb[a] + step) % shape[a]
                    nb = tuple(nb)
                    if mask[nb] and not seen[nb]:
                        seen[nb] = True
                        queue.append(nb)
        comps.append(comp)
    return comps


def _line_search(gap_at, iters: int) -> tuple[float, float]:
    """Golden-section minimisation of ``gap_at(s)`` over ``s`` in ``[-1, 1]``; keeps ``s = 0`` if better."""
    lo, hi = -1.0, 1.0
    x1 = hi - _GOLDEN * (hi - lo)
    x2 = lo + _GOLDEN * (hi - lo)
    f1, f2 = gap_at(x1), gap_at(x2)
    for _ in range(iters):
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _GOLDEN * (hi - lo)
            f1 = gap_at(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _GOLDEN * (hi - lo)
            f2 = gap_at(x2)
    s, f = (x1, f1) if f1 <= f2 else (x2, f2)
    f0 = gap_at(0.0)
    return (0.0, f0) if f0 <= f else (s, f)


def refine_point(H: EndoField, cell: Sequence[int], iters: int = REFINE_ITERS) -> tuple[np.ndarray, float]:
    """Move from a grid point along each axis in turn, over the two incident edges.

    ``H`` is linearly interpolated, so each search sees the field along
    actual grid edges (or their parallels through the current point).
    """
    grid = H.grid
    point = grid.point(cell)
    for a in range(grid.n):
        def gap_at(s, a=a, base=point.copy()):
            q = base.copy()
            q[a] += s * grid.spacing
            return _min_gap(_interp(H.Hf, grid, q % 1.0))
        s, _ = _line_search(gap_at, iters)
        point[a] += s * grid.spacing
    point %= 1.0
    return point, _min_gap(_interp(H.Hf, grid, point))


def singular_locus(H: EndoField, gap_tol: float, margin_tol: float | None = None,
                   iters: int = REFINE_ITERS, with_margin: bool = True) -> list[SingularHit]:
    """Connected groups of near-degenerate cells, each refined to one point.

    Within a group the cell of smallest gap is refined by per-axis line
    searches; the refined point gives the location, multiplicity and gap.
    """
    grid = H.grid
    mask = flagged_cells(H, gap_tol)
    w = np.linalg.eigvalsh(H.Hf)
    gaps = np.min(np.diff(w, axis=-1), axis=-1)
    margin_tol = default_margin_tol(H) if margin_tol is None and with_margin else margin_tol
    hits = []
    for comp in _components(mask):
        cell = min(comp, key=lambda c: (gaps[c], c))
        point, f = refine_point(H, cell, iters)
        lam = np.linalg.eigvalsh(_interp(H.Hf, grid, point))
        hit = SingularHit(tuple(int(i) for i in cell), point, multiplicity_of(lam, gap_tol), f, len(comp))
        if with_margin:
            try:
                hit.margin = transversality_margin(H, hit)
                hit.transversal = hit.margin > margin_tol
            except TransversalityImpossible as exc:
                hit.note = str(exc)
        hits.append(hit)
    return hits


# --- transversality --------------------------------------------------------

def _sym0_coords(B: np.ndarray) -> np.ndarray:
    k = B.shape[-1]
    basis = sym0_orthonormal_basis(k)
    B0 = B - np.trace(B) / k * np.eye(k)
    return np.einsum("dij,ij->d", basis, B0)


def transversality_margin(H: EndoField, hit: SingularHit, order: int = 4) -> float:
    """Smallest singular value of ``x -> (S_1(x), ..., S_r(x))`` at the hit.

    The blocks are read in the cluster basis fixed at the hit point, which
    agrees with any smooth block-diagonalising frame to first order. Inputs
    are coordinate directions, outputs Frobenius-orthonormal ``Sym_0``
    coordinates of the multiple clusters.
    """
    m = hit.m
    n = H.grid.n
    need = codim(m)
    if need > n:
        raise TransversalityImpossible(f"stratum {m} has codimension {need} > {n}")
    if need == 0:
        return float("inf")
    Hp = _interp(H.Hf, H.grid, hit.point)
    _, Q = np.linalg.eigh(0.5 * (Hp + Hp.T))
    M = prefix_sums(m)
    J = np.zeros((need, n))
    for d in range(n):
        dH = _interp(finite_diff(H.Hf, H.grid, d, order), H.grid, hit.point)
        rows = []
        for i, k in enumerate(m):
            if k > 1:
                Qi = Q[:, M[i]:M[i + 1]]
                rows.append(_sym0_coords(Qi.T @ dH @ Qi))
        J[:, d] = np.concatenate(rows)
    return float(np.linalg.svd(J, compute_uv=False)[-1])


def all_transversal(hits: Sequence[SingularHit]) -> bool:
    return all(h.transversal for h in hits)


# --- perturbations ---------------------------------------------------------

def _low_frequency_field(grid: TorusGrid, rng: np.random.Generator, modes: int = 1) -> np.ndarray:
    """Random traceless symmetric field built from Fourier modes of degree at most ``modes``.

    Rescaled so the pointwise Frobenius norm peaks at exactly one.
    """
    n = grid.n
    x = grid.coords()
    P = np.zeros(grid.shape + (n, n))
    for a in range(n):
        for freq in range(modes + 1):
            for trig in ((np.cos,) if freq == 0 else (np.cos, np.sin)):
                A = rng.standard_normal((n, n))
                A = 0.5 * (A + A.T)
                A -= np.trace(A) / n * np.eye(n)
                P += trig(2 * np.pi * freq * x[a])[..., None, None] * A
    P = 0.5 * (P + np.swapaxes(P, -1, -2))
    P -= (np.trace(P, axis1=-2, axis2=-1) / n)[..., None, None] * np.eye(n)
    peak = float(np.max(np.sqrt(np.sum(P ** 2, axis=(-1, -2)))))
    return P / peak


@dataclass
class GenericResult:
    H: EndoField
    candidate: int
    hits: list[SingularHit]


def perturb_to_generic(H: EndoField, seed: int, magnitude: float, gap_tol: float,
                       margin_tol: float | None = None, budget: int = 16) -> GenericResult:
    """First field in ``H, H + P_1, H + P_2, ...`` whose hits are all transversal.

    ``P_k`` is drawn from ``default_rng([seed, k])`` and has sup Frobenius
    norm exactly ``magnitude``.
    """
    if magnitude <= 0:
        raise ValueError("magnitude must be positive")
    margin_tol = default_margin_tol(H) if margin_tol is None else margin_tol
    best = -np.inf
    for k in range(budget + 1):
        if k == 0:
            cand = H
        else:
            P = magnitude * _low_frequency_field(H.grid, np.random.default_rng([seed, k]))
            cand = EndoField(H.grid, H.frame, H.Hf + P, None)
        hits = singular_locus(cand, gap_tol, margin_tol)
        worst = min((h.margin for h in hits), default=np.inf)
        best = max(best, worst)
        if all_transversal(hits):
            return GenericResult(cand, k, hits)
    raise BudgetExhausted(f"no transversal candidate within {budget} perturbations", best)


def cutoff(grid: TorusGrid, region: Region, width: int = 2) -> np.ndarray:
    """Smooth periodic cutoff equal to one on ``region`` and zero ``width`` cells beyond it."""
    psi = np.ones(grid.shape)
    idx = np.arange(grid.res)
    for a in range(grid.n):
        lo, hi = region.lo[a], region.hi[a]
        if hi - lo >= grid.res:
            continue
        # periodic distance in cells outside [lo, hi - 1]
        d = np.minimum((lo - idx) % grid.res, (idx - (hi - 1)) % grid.res).astype(float)
        inside = ((idx - lo) % grid.res) < (hi - lo)
        d[inside] = 0.0
        s = np.clip(d / width, 0.0, 1.0)
        prof = np.where(s >= 1.0, 0.0, np.cos(0.5 * np.pi * s) ** 2)
        shape = [1] * grid.n
        shape[a] = grid.res
        psi = psi * prof.reshape(shape)
    return psi


def pair_sum(c_row: np.ndarray, pairs: Iterable[tuple[int, int]]) -> np.ndarray:
    """``sum_{(j,k) in pairs} c[first, j, k]^2`` from a single structure-function row."""
    out = np.zeros(c_row.shape[:-2])
    for j, k in pairs:
        out += c_row[..., j, k] ** 2
    return out


@dataclass
class FramePerturbation:
    block_frame: BlockFrame
    candidate: int
    min_sum: float


def posstr_frame_perturbation(bf: BlockFrame, region: Region, J: Sequence[tuple[int, int]], seed: int,
                              g0: MetricField | None = None, amplitude: float = 0.05,
                              budget: int = 16, floor: float = 1e-10, order: int = 4) -> FramePerturbation:
    """Rotate the frame by ``exp(psi V)`` until the ``J`` pair sum is positive on ``region``.

    ``J`` holds 0-based pairs ``(j, k)`` with ``0 < j < k``. The eigenvalue
    and block data of ``bf`` are reused unchanged. ``V`` is a seeded
    combination of single-mode generators and ``psi`` a cutoff equal to one
    on the region.
    """
    grid = bf.grid
    n = grid.n
    J = [tuple(p) for p in J]
    if len(J) <= n:
        raise ValueError(f"need more than {n} index pairs, got {len(J)}")
    if any(not 0 < j < k < n for j, k in J):
        raise ValueError("pairs must satisfy 0 < j < k < n")
    g0 = g0 or flat_metric(grid)
    sl = region.slices()

    def score(E):
        row = structure_row(E, g0.G, grid, 0, order)
        return float(np.min(pair_sum(row, J)[sl]))

    best = score(bf.frame.E)
    if best > floor:
        return FramePerturbation(bf, 0, best)
    psi = cutoff(grid, region)
    x = grid.coords()
    root, iroot = sym_sqrt(g0.G), sym_sqrt(g0.G, inverse=True)
    for k in range(1, budget + 1):
        rng = np.random.default_rng([seed, k])
        V = np.zeros(grid.shape + (n, n))
        for a in range(n):
            for b in range(a + 1, n):
                coef = rng.standard_normal((n, 2))
                f = sum(coef[d, 0] * np.sin(2 * np.pi * x[d]) + coef[d, 1] * np.cos(2 * np.pi * x[d])
                        for d in range(n))
                V += f[..., None, None] * antisym_generator(n, a, b)
        V *= amplitude * psi[..., None, None]
        E = iroot @ rotation_exp(V) @ root @ bf.frame.E
        s = score(E)
        best = max(best, s)
        if s > floor:
            return FramePerturbation(replace(bf, frame=FrameField(grid, E)), k, s)
    raise BudgetExhausted(f"pair sum not positive on {region.name} within {budget} candidates", best)


# --- the dimension-three construction --------------------------------------

@dataclass
class Spike:
    H: EndoField
    point: tuple[int, ...]
    constant: float


def build_3d_spike(grid: TorusGrid, C: float, g0: MetricField | None = None) -> Spike:
    """Diagonal ``H`` on flat T^3 whose curvature at the origin grows like ``t exp(-lambda_1 t)``.

    The frame rotates in the (e2, e3) plane by
    ``theta = -sin(2 pi x1) sin(2 pi x3) / (4 pi^2)``, so ``c_123`` vanishes
    at the origin while its ``e3`` derivative there is one. The first
    eigenvalue is convex along ``x1`` with ``e1 e1 lambda_1 = 1.05 C`` at the
    origin; constants keep ``lambda_1 < 0 < lambda_2 < lambda_3`` everywhere.
    """
    if C <= 0:
        raise ValueError("C must be positive")
    if grid.n != 3:
        raise ValueError("the construction lives on T^3")
    g0 = g0 or flat_metric(grid)
    x1, x2, x3 = grid.coords()
    tp = 2 * np.pi
    theta = -np.sin(tp * x1) * np.sin(tp * x3) / tp ** 2
    V = theta[..., None, None] * antisym_generator(3, 1, 2)
    root, iroot = sym_sqrt(g0.G), sym_sqrt(g0.G, inverse=True)
    E = iroot @ rotation_exp(V) @ root @ gram_schmidt_frame(g0).E
    A = 1.05 * C / tp ** 2
    lam1 = -(2 * A + 1) + A * (1 - np.cos(tp * x1))
    lam2 = 0.2 + np.sin(tp * x1) * np.sin(tp * x2) / tp ** 2
    lam3 = -lam1 - lam2
    Hf = np.zeros(grid.shape + (3, 3))
    for i, lam in enumerate((lam1, lam2, lam3)):
        Hf[..., i, i] = lam
    return Spike(EndoField(grid, FrameField(grid, E), Hf, (1, 1, 1)), (0, 0, 0), C)
