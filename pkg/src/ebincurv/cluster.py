"""Eigenvalue clustering and block-diagonalising orthonormal frames."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .field import EndoField, FrameField, MetricField, Region, TorusGrid, flat_metric
from .symcore import check_multiplicity, fix_signs, op_norm, prefix_sums

# Frame-growth bound constants, fixed at one (checked by the audit in asymptotics).
C2 = 1.0
C2_TILDE = 1.0
EPS_DIVISOR = 12000.0 * (C2 + C2_TILDE)


class NoAdmissibleClustering(ValueError):
    """No clustering with at least two clusters satisfies the interval hypothesis."""


class ClusterHypothesisError(ValueError):
    def __init__(self, message: str, location: tuple[int, ...] | None = None):
        self.location = location
        super().__init__(message if location is None else f"{message} at grid index {location}")


@dataclass(frozen=True)
class ClusterSpec:
    m: tuple[int, ...]
    lambda_star: tuple[float, ...]
    r: float
    eps: float

    @classmethod
    def from_centers(cls, m: Sequence[int], centers: Sequence[float],
                     eps_divisor: float = EPS_DIVISOR) -> "ClusterSpec":
        m = check_multiplicity(m)
        c = np.asarray(centers, dtype=float)
        c = c - np.dot(m, c) / sum(m)
        gaps = np.diff(c)
        if len(gaps) == 0 or np.min(gaps) <= 0:
            raise NoAdmissibleClustering("cluster centres must be strictly increasing with L >= 2")
        r = float(np.min(gaps))
        return cls(m, tuple(float(x) for x in c), r, r / eps_divisor)

    @property
    def L(self) -> int:
        return len(self.m)

    def per_index(self) -> np.ndarray:
        return np.repeat(self.lambda_star, self.m)


@dataclass
class HypothesisReport:
    holds: bool
    margin: float
    witness: tuple[int, ...] | None = None


def _region_spectra(H: EndoField, region: Region) -> np.ndarray:
    w = np.linalg.eigvalsh(H.Hf[region.slices()])
    return w.reshape(-1, H.grid.n)


def check_cluster_hypothesis(H: EndoField, spec: ClusterSpec, region: Region) -> HypothesisReport:
    """Exactly ``m_i`` eigenvalues in each open interval ``(lambda*_i - eps, lambda*_i + eps)``.

    Sorted eigenvalues are compared against the per-index centres; intervals
    are disjoint because ``eps < r / 2``.
    """
    w = np.linalg.eigvalsh(H.Hf[region.slices()])
    dist = np.abs(w - spec.per_index())
    slack = spec.eps - dist  # positive inside the open interval
    worst = np.min(slack, axis=-1)
    flat = int(np.argmin(worst))
    margin = float(worst.flat[flat])
    if margin > 0:
        return HypothesisReport(True, margin)
    local = np.unravel_index(flat, worst.shape)
    loc = tuple(int(a + b) for a, b in zip(region.lo, local))
    return HypothesisReport(False, margin, loc)


def propose_clustering(H: EndoField, region: Region, eps_divisor: float = EPS_DIVISOR) -> ClusterSpec:
    """Cut the pooled sorted spectrum at its widest gaps until the hypothesis holds.

    Candidate cuts are eigen-index boundaries ranked by their worst-case gap
    over the region; the first prefix of that ranking whose clustering passes
    :func:`check_cluster_hypothesis` wins, so fewer clusters are preferred.
    """
    w = _region_spectra(H, region)
    n = w.shape[1]
    if n < 2:
        raise NoAdmissibleClustering("dimension one has a single cluster")
    sep = np.min(w[:, 1:], axis=0) - np.max(w[:, :-1], axis=0)  # worst gap above index q
    order = sorted(range(n - 1), key=lambda q: (-sep[q], q))
    for L in range(2, n + 1):
        cuts = sorted(q + 1 for q in order[:L - 1])
        if any(sep[c - 1] <= 0 for c in cuts):
            break
        edges = [0, *cuts, n]
        m = tuple(b - a for a, b in zip(edges, edges[1:]))
        centers = [float(np.mean(w[:, a:b])) for a, b in zip(edges, edges[1:])]
        spec = ClusterSpec.from_centers(m, centers, eps_divisor)
        if check_cluster_hypothesis(H, spec, region).holds:
            return spec
    raise NoAdmissibleClustering("no clustering with L >= 2 satisfies the interval hypothesis")


def spectral_projector(S: np.ndarray, interval: tuple[float, float], margin: float = 1e-9) -> np.ndarray:
    """Orthogonal projector onto eigenvectors of ``S`` with eigenvalue in ``interval``."""
    lo, hi = interval
    w, Q = np.linalg.eigh(np.asarray(S, dtype=float))
    scale = margin * (1.0 + np.max(np.abs(w)))
    if np.any(np.abs(w - lo) < scale) or np.any(np.abs(w - hi) < scale):
        raise ValueError("an eigenvalue lies on the interval boundary")
    inside = (w > lo) & (w < hi)
    Qi = Q[:, inside]
    P = Qi @ Qi.T
    return 0.5 * (P + P.T)


@dataclass
class BlockFrame:
    """Orthonormal frame in which ``H`` is block diagonal with blocks ``lambda_i I + S_i``."""

    frame: FrameField
    lambdas: np.ndarray  # grid + (L,)
    blocks: list[np.ndarray]  # grid + (m_i, m_i), trace free
    m: tuple[int, ...]
    spec: ClusterSpec | None = None
    region: Region | None = None

    @property
    def grid(self) -> TorusGrid:
        return self.frame.grid

    def lambda_per_index(self) -> np.ndarray:
        return np.repeat(self.lambdas, self.m, axis=-1)

    def S_full(self) -> np.ndarray:
        n = self.grid.n
        out = np.zeros(self.grid.shape + (n, n))
        M = prefix_sums(self.m)
        for i, B in enumerate(self.blocks):
            out[..., M[i]:M[i + 1], M[i]:M[i + 1]] = B
        return out

    def Hf(self) -> np.ndarray:
        lam = self.lambda_per_index()
        return self.S_full() + lam[..., None] * np.eye(self.grid.n)

    def endo(self) -> EndoField:
        return EndoField(self.grid, self.frame, self.Hf(), self.m)

    def S_norm(self) -> np.ndarray:
        """Pointwise ``max_i |S_i|_op``."""
        norms = [op_norm(B) for B in self.blocks]
        return np.max(np.stack(norms, axis=-1), axis=-1)

    def is_diagonal(self) -> bool:
        return all(np.all(B == 0) for B in self.blocks)

    @classmethod
    def from_endo(cls, H: EndoField, m: Sequence[int] | None = None) -> "BlockFrame":
        """Read blocks straight off ``H.Hf``; no spectral computation."""
        m = check_multiplicity(m if m is not None else (H.m or (1,) * H.grid.n), H.grid.n)
        M = prefix_sums(m)
        lams, blocks = [], []
        for i, k in enumerate(m):
            B = H.Hf[..., M[i]:M[i + 1], M[i]:M[i + 1]]
            lam = np.trace(B, axis1=-2, axis2=-1) / k
            S = B - lam[..., None, None] * np.eye(k)
            if k == 1:
                S = np.zeros_like(S)
            lams.append(lam)
            blocks.append(S)
        return cls(H.frame, np.stack(lams, axis=-1), blocks, m)

    def invariants(self, H: EndoField | None = None, g0: MetricField | None = None) -> dict:
        """Residuals of the block-frame invariants over ``region`` (whole grid if unset)."""
        region = self.region or Region.full(self.grid)
        sl = region.slices()
        out: dict = {}
        G = (g0 or flat_metric(self.grid)).G
        out["orthonormality"] = FrameField(self.grid, self.frame.E[sl]).orthonormality_residual(G[sl])
        if self.spec is not None:
            lam = self.lambdas[sl]
            out["min_gap"] = float(np.min(np.diff(lam, axis=-1))) if self.spec.L > 1 else float("inf")
            out["max_center_dev"] = float(np.max(np.abs(lam - np.asarray(self.spec.lambda_star))))
            out["max_S_op"] = float(np.max(self.S_norm()[sl]))
            out["gap_ok"] = out["min_gap"] >= self.spec.r / 2
            out["center_ok"] = out["max_center_dev"] <= self.spec.eps
            out["S_ok"] = out["max_S_op"] <= 4 * self.spec.eps
        if H is not None:
            Hfr = H.in_frame(self.frame.E[sl], G[sl]) if H.frame is not self.frame else H.Hf[sl]
            mask = np.ones((self.grid.n, self.grid.n), dtype=bool)
            M = prefix_sums(self.m)
            for i in range(len(self.m)):
                mask[M[i]:M[i + 1], M[i]:M[i + 1]] = False
            scale = float(np.max(np.abs(Hfr))) or 1.0
            out["offblock"] = float(np.max(np.abs(Hfr[..., mask]))) / scale
        return out


def _gram_schmidt_columns(B: np.ndarray) -> np.ndarray:
    """Classical Gram-Schmidt on stacked column sets, fixed column order."""
    out = np.zeros_like(B)
    for c in range(B.shape[-1]):
        v = B[..., :, c].copy()
        for p in range(c):
            u = out[..., :, p]
            v -= np.sum(u * v, axis=-1, keepdims=True) * u
        out[..., :, c] = v / np.linalg.norm(v, axis=-1, keepdims=True)
    return out


def block_decompose(H: EndoField, spec: ClusterSpec, region: Region | None = None,
                    g0: MetricField | None = None) -> BlockFrame:
    """Smooth block-diagonalising frame for ``H`` built numerically from eigenvectors.

    Cluster projectors come from sorted eigenvectors grouped by ``spec.m``.
    Inside each cluster a reference basis at the region anchor is carried
    along grid axes in fixed order, projecting the previous basis through the
    local projector and re-orthonormalising. The frame is built on the whole
    torus; invariants and the hypothesis are required on ``region`` only.
    """
    grid = H.grid
    region = region or Region.full(grid)
    rep = check_cluster_hypothesis(H, spec, region)
    if not rep.holds:
        raise ClusterHypothesisError("cluster hypothesis violated", rep.witness)
    n = grid.n
    m = spec.m
    M = prefix_sums(m)
    # Work in the orthonormal frame that stores H; the new frame is E_H @ U.
    w, Q = np.linalg.eigh(H.Hf)
    U = np.zeros_like(Q)
    anchor = region.anchor()
    for i in range(len(m)):
        sl = slice(M[i], M[i + 1])
        Qi = Q[..., :, sl]
        P = Qi @ np.swapaxes(Qi, -1, -2)
        B = np.zeros(grid.shape + (n, m[i]))
        B[anchor] = fix_signs(Q[anchor][:, sl])
        for axis in range(n):
            base = list(anchor)
            for step in range(1, grid.res):
                src = base.copy()
                dst = base.copy()
                src[axis] = (anchor[axis] + step - 1) % grid.res
                dst[axis] = (anchor[axis] + step) % grid.res
                idx_src = _swept_index(src, axis, anchor, n)
                idx_dst = _swept_index(dst, axis, anchor, n)
                B[idx_dst] = _gram_schmidt_columns(P[idx_dst] @ B[idx_src])
        U[..., :, sl] = B
    E = H.frame.E @ U
    Hnew = np.swapaxes(U, -1, -2) @ H.Hf @ U
    lams, blocks = [], []
    for i, k in enumerate(m):
        Bk = Hnew[..., M[i]:M[i + 1], M[i]:M[i + 1]]
        Bk = 0.5 * (Bk + np.swapaxes(Bk, -1, -2))
        lam = np.trace(Bk, axis1=-2, axis2=-1) / k
        S = Bk - lam[..., None, None] * np.eye(k)
        lams.append(lam)
        blocks.append(S if k > 1 else np.zeros_like(S))
    return BlockFrame(FrameField(grid, E), np.stack(lams, axis=-1), blocks, m, spec, region)


def _swept_index(pos: list[int], axis: int, anchor: tuple[int, ...], n: int) -> tuple:
    """Index of the slab at ``pos[axis]``: lower axes free, higher axes at the anchor."""
    return tuple(slice(None) if a < axis else (pos[a] if a == axis else anchor[a]) for a in range(n))
