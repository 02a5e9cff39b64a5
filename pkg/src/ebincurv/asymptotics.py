"""Decay diagnostics: positivity sums, membership, predicted exponents, fits, growth-bound audits.

Constants used by :func:`bound_audit`
-------------------------------------
Lower bound: ``C1 = 1``, ``C2 = 1``. The type-I term is
``ratio * (X (x) X (x) Y) c0`` with ``X = exp(-tS/2)`` and ``Y = exp(tS/2)``
on the three legs; the smallest singular value of that Kronecker product is
at least ``exp(-3 |S| t / 2) >= exp(-3 |S| t)``, so squaring gives the bound
with unit constants.

Upper bound: ``C1~ = 1``, ``C2~ = 1`` and
``C(h) = sup |grad lambda| + sup |grad S|``, where gradients are frame
derivatives, ``|grad lambda|`` is the Euclidean norm over directions and
``|grad S|`` the square root of the summed squared Frobenius norms. ``C1~``
is the smallest constant making the bound tight at ``t = 0`` on constant
data, where ``C(h) = 0`` and type I equals ``c0``.

``|S|`` is the pointwise maximum operator norm of the blocks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .cluster import (BlockFrame, ClusterSpec, EPS_DIVISOR, NoAdmissibleClustering,
                      ClusterHypothesisError, block_decompose, propose_clustering)
from .curvature import CurvatureTrace, type_decomposition
from .field import EndoField, MetricField, Region, flat_metric, frame_derivative, structure_functions
from .symcore import prefix_sums

ACTIVE_THRESHOLD = 1e-8
LOWER_C1 = 1.0
LOWER_C2 = 1.0
UPPER_C1 = 1.0
UPPER_C2 = 1.0


class DeltaConditionError(ValueError):
    """The first-cluster positivity sum vanishes somewhere on the region."""


class DecayFitError(ValueError):
    def __init__(self, message: str, t: float | None = None):
        self.t = t
        super().__init__(message)


def _cluster_slices(m: Sequence[int]) -> list[slice]:
    M = prefix_sums(m)
    return [slice(M[i], M[i + 1]) for i in range(len(m))]


def first_cluster_sum(c: np.ndarray, m: Sequence[int], first_leg: slice | None = None) -> np.ndarray:
    """``sum_{j<k} sum (c[1_a, j_b, k_c])^2`` pointwise, ``a`` ranging over ``first_leg``."""
    sl = _cluster_slices(m)
    first = first_leg if first_leg is not None else sl[0]
    total = np.zeros(c.shape[:-3])
    for j in range(len(m)):
        for k in range(j + 1, len(m)):
            total += np.sum(c[..., first, sl[j], sl[k]] ** 2, axis=(-1, -2, -3))
    return total


@dataclass
class DeltaReport:
    delta: float
    witness: tuple[int, ...] | None


def _inf_with_witness(values: np.ndarray, region: Region) -> DeltaReport:
    sub = values[region.slices()]
    flat = int(np.argmin(sub))
    local = np.unravel_index(flat, sub.shape)
    return DeltaReport(float(sub.flat[flat]), tuple(int(a + b) for a, b in zip(region.lo, local)))


def delta_condition(c: np.ndarray, spec: ClusterSpec, region: Region) -> DeltaReport:
    """Infimum over ``region`` of the first-cluster sum (all first-cluster legs)."""
    return _inf_with_witness(first_cluster_sum(c, spec.m), region)


def posstr_sum(c: np.ndarray, m: Sequence[int]) -> np.ndarray:
    """The first-cluster sum restricted to the first frame vector."""
    return first_cluster_sum(c, m, slice(0, 1))


@dataclass
class RegionMembership:
    region: str
    member: bool
    reason: str
    m: tuple[int, ...] | None = None
    min_sum: float | None = None
    witness: tuple[int, ...] | None = None


@dataclass
class MembershipReport:
    member: bool
    regions: list[RegionMembership]


def y_membership(H: EndoField, cover: Sequence[Region], g0: MetricField | None = None,
                 eps_divisor: float = EPS_DIVISOR, order: int = 4) -> MembershipReport:
    """Per region: an admissible clustering exists and the first-vector sum is positive everywhere."""
    g0 = g0 or flat_metric(H.grid)
    covered = np.zeros(H.grid.shape, dtype=bool)
    for reg in cover:
        reg.validate(H.grid)
        covered |= reg.mask(H.grid)
    if not covered.all():
        raise ValueError("cover does not cover the grid")
    out = []
    for reg in cover:
        try:
            spec = propose_clustering(H, reg, eps_divisor)
            bf = block_decompose(H, spec, reg, g0)
        except (NoAdmissibleClustering, ClusterHypothesisError) as exc:
            out.append(RegionMembership(reg.name, False, f"{type(exc).__name__}: {exc}"))
            continue
        c = structure_functions(bf.frame.E, g0.G, H.grid, order)
        rep = _inf_with_witness(posstr_sum(c, spec.m), reg)
        ok = rep.delta > 0
        out.append(RegionMembership(reg.name, ok, "positive" if ok else "first-vector sum vanishes",
                                    spec.m, rep.delta, None if ok else rep.witness))
    return MembershipReport(all(r.member for r in out), out)


@dataclass
class RatePrediction:
    rate: float
    floor: float
    active: list[tuple[int, int, int]]
    exponents: dict[tuple[int, int, int], float] = field(default_factory=dict)


def predicted_rate(spec: ClusterSpec, c: np.ndarray, lam: np.ndarray, region: Region,
                   threshold: float = ACTIVE_THRESHOLD) -> RatePrediction:
    """Largest ``inf_region(lambda_k - lambda_i - lambda_j)`` over active pairwise-distinct triplets.

    ``lam`` holds per-index eigenvalues (grid + ``(n,)``). A triplet is
    active when its region-max ``c^2`` exceeds ``threshold`` times the
    overall max.
    """
    sl = region.slices()
    delta = delta_condition(c, spec, region)
    if delta.delta <= 0:
        raise DeltaConditionError(f"positivity sum vanishes at {delta.witness}")
    c2 = np.max((c[sl] ** 2).reshape(-1, *c.shape[-3:]), axis=0)
    top = float(np.max(c2))
    n = c.shape[-1]
    lr = lam[sl]
    exps = {}
    for i in range(n):
        for j in range(n):
            for k in range(n):
                if len({i, j, k}) == 3 and c2[i, j, k] > threshold * top:
                    exps[(i, j, k)] = float(np.min(lr[..., k] - lr[..., i] - lr[..., j]))
    floor = -spec.lambda_star[0] + spec.r / 2
    rate = max(exps.values()) if exps else -np.inf
    return RatePrediction(rate, floor, sorted(exps), exps)


@dataclass
class DecayFit:
    window: tuple[float, float]
    C1: float
    C2: float
    residual: float
    samples: int


def fit_decay(trace: CurvatureTrace, window: tuple[float, float], min_samples: int = 5) -> DecayFit:
    """Least-squares line through ``(t, log(-sup R))`` on ``window``."""
    lo, hi = window
    if hi <= lo:
        raise ValueError("window must satisfy t_hi > t_lo")
    t = np.asarray(trace.times)
    s = np.asarray(trace.sup)
    mask = (t >= lo) & (t <= hi)
    if int(mask.sum()) < min_samples:
        raise DecayFitError(f"window holds {int(mask.sum())} samples, need {min_samples}")
    bad = np.nonzero(mask & (s >= 0))[0]
    if bad.size:
        raise DecayFitError("sup R is nonnegative inside the window", float(t[bad[0]]))
    tw, y = t[mask], np.log(-s[mask])
    slope, icpt = np.polyfit(tw, y, 1)
    resid = float(np.sqrt(np.mean((y - (slope * tw + icpt)) ** 2)))
    return DecayFit((lo, hi), float(np.exp(icpt)), float(slope), resid, int(mask.sum()))


@dataclass
class BoundAuditReport:
    samples: int
    lower_violations: int
    upper_violations: int
    worst_lower_ratio: float  # min lhs / rhs, >= 1 means satisfied
    worst_upper_ratio: float  # max lhs / rhs, <= 1 means satisfied
    C_h: float
    S_norm: float
    constants: dict

    @property
    def passed(self) -> bool:
        return self.lower_violations == 0 and self.upper_violations == 0


def gradient_constant(bf: BlockFrame, order: int = 4) -> float:
    """``sup |grad lambda| + sup |grad S|`` in frame derivatives."""
    E = bf.frame.E
    dl = frame_derivative(bf.lambdas, E, bf.grid, order)  # [..., l, d]
    gl = float(np.max(np.sqrt(np.sum(dl ** 2, axis=-1))))
    gs = 0.0
    for B in bf.blocks:
        if B.shape[-1] > 1:
            dB = frame_derivative(B, E, bf.grid, order)
            gs = max(gs, float(np.max(np.sqrt(np.sum(dB ** 2, axis=(-3, -2, -1))))))
    return gl + gs


def bound_audit(bf: BlockFrame, times: Sequence[float], samples: int = 10_000, seed: int = 0,
                g0: MetricField | None = None, order: int = 4, rel_tol: float = 1e-12,
                abs_tol: float = 1e-13) -> BoundAuditReport:
    """Check both growth bounds on ``samples`` random (point, time, index family) tuples.

    Lower-bound families are cluster triples, upper-bound families are
    flattened index triples; each sample draws one of each.
    """
    if bf.spec is None:
        raise ValueError("bound audit needs a BlockFrame with a ClusterSpec")
    g0 = g0 or flat_metric(bf.grid)
    Snorm = float(np.max(bf.S_norm()))
    if Snorm > 4 * bf.spec.eps:
        raise ValueError(f"|S| = {Snorm:.3g} exceeds 4 eps = {4 * bf.spec.eps:.3g}")
    grid = bf.grid
    n, L = grid.n, len(bf.m)
    sl = _cluster_slices(bf.m)
    c0 = structure_functions(bf.frame.E, g0.G, grid, order)
    Ch = gradient_constant(bf, order)
    rng = np.random.default_rng(seed)
    times = [float(t) for t in times]
    t_idx = rng.integers(0, len(times), samples)
    pts = rng.integers(0, grid.res, (samples, grid.n))
    fam = rng.integers(0, L, (samples, 3))
    flat_fam = rng.integers(0, n, (samples, 3))
    lower_bad = upper_bad = 0
    worst_lo, worst_up = np.inf, 0.0
    lam = bf.lambdas
    snorm_field = bf.S_norm()
    pi = np.repeat(np.arange(L), bf.m)
    for ti, t in enumerate(times):
        sel = np.nonzero(t_idx == ti)[0]
        if sel.size == 0:
            continue
        terms = type_decomposition(bf, t, g0, order, c0=c0)
        for s in sel:
            p = tuple(pts[s])
            i, j, k = fam[s]
            Ip = terms.I[p][sl[i], sl[j], sl[k]]
            cp = c0[p][sl[i], sl[j], sl[k]]
            sp = float(snorm_field[p])
            weight = np.exp((lam[p][k] - lam[p][i] - lam[p][j]) * t)
            rhs = LOWER_C1 * weight * np.exp(-3 * LOWER_C2 * sp * t) * float(np.sum(cp ** 2))
            lhs = float(np.sum(Ip ** 2))
            if rhs > 0:
                worst_lo = min(worst_lo, lhs / rhs)
            if lhs < rhs * (1 - rel_tol) - abs_tol ** 2:
                lower_bad += 1
            a, b, cc = flat_fam[s]
            ci, cj, ck = pi[a], pi[b], pi[cc]
            lhs_u = abs(terms.I[p][a, b, cc]) + abs(terms.II[p][a, b, cc]) + abs(terms.III[p][a, b, cc])
            cmax = float(np.max(np.abs(c0[p][sl[ci], sl[cj], sl[ck]])))
            rhs_u = (UPPER_C1 * (1 + t) * np.sqrt(np.exp((lam[p][ck] - lam[p][ci] - lam[p][cj]) * t))
                     * np.exp(3 * UPPER_C2 * sp * t) * (cmax + Ch))
            if rhs_u > 0:
                worst_up = max(worst_up, lhs_u / rhs_u)
            if lhs_u > rhs_u * (1 + rel_tol) + abs_tol:
                upper_bad += 1
        del terms
    return BoundAuditReport(samples, lower_bad, upper_bad, float(worst_lo), float(worst_up), Ch, Snorm,
                            {"C1": LOWER_C1, "C2": LOWER_C2, "C1_tilde": UPPER_C1, "C2_tilde": UPPER_C2})
