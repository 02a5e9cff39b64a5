"""Pointwise linear algebra on traceless symmetric matrices.

Everything here acts on small dense ``numpy`` arrays (``n <= 8``) and is pure.
Functions that make sense on stacks of matrices accept arrays of shape
``(..., n, n)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

MAX_DIM = 8
EXP_LIMIT = 40.0


class DimensionError(ValueError):
    """Raised when matrix or coordinate sizes do not match."""


class TraceError(ValueError):
    """Raised when an input that must be trace free is not."""


class ExpOverflowError(FloatingPointError):
    """Raised when ``exp(t * lambda)`` leaves the safe double range."""

    def __init__(self, exponent: float):
        self.exponent = float(exponent)
        super().__init__(f"exponent t*lambda = {exponent:.6g} exceeds +/-{EXP_LIMIT}")


@dataclass(frozen=True)
class Spectrum:
    """Ascending eigenvalues and matching orthonormal eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


@dataclass(frozen=True)
class NormalFormCoords:
    """Coordinates ``b`` of a block in ``Sym_0(m)``; ``len(b) == d_of(m)``."""

    m: int
    b: np.ndarray

    def __post_init__(self):
        if len(self.b) != d_of(self.m):
            raise DimensionError(f"expected {d_of(self.m)} coordinates for m={self.m}, got {len(self.b)}")


def d_of(k: int) -> int:
    """Dimension of ``Sym_0(k)``: ``k(k+1)/2 - 1``."""
    if k < 1:
        raise ValueError("k must be positive")
    return k * (k + 1) // 2 - 1


def check_multiplicity(parts: Sequence[int], n: int | None = None) -> tuple[int, ...]:
    """Validate and normalise a multiplicity vector to a tuple."""
    m = tuple(int(p) for p in parts)
    if not m or any(p < 1 for p in m):
        raise ValueError(f"multiplicity parts must be positive: {parts!r}")
    if n is not None and sum(m) != n:
        raise DimensionError(f"multiplicity {m} does not sum to {n}")
    return m


def prefix_sums(m: Sequence[int]) -> tuple[int, ...]:
    """``(M_0, M_1, ..., M_L)`` with ``M_0 = 0``."""
    out = [0]
    for p in m:
        out.append(out[-1] + p)
    return tuple(out)


def frobenius_norm(S: np.ndarray) -> float:
    return float(np.sqrt(np.sum(np.asarray(S) ** 2)))


def op_norm(S: np.ndarray) -> np.ndarray:
    """Largest singular value; for symmetric input the largest ``|eigenvalue|``.

    Works on stacks, returning an array of norms.
    """
    S = np.asarray(S, dtype=float)
    if S.shape[-1] == 0:
        return np.zeros(S.shape[:-2])
    w = np.linalg.eigvalsh(0.5 * (S + np.swapaxes(S, -1, -2)))
    return np.max(np.abs(w), axis=-1)


def default_gap_tol(S: np.ndarray) -> float:
    return 1e-6 * (1.0 + frobenius_norm(S))


def _square(S: np.ndarray) -> np.ndarray:
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {S.shape}")
    return S


def check_traceless(S: np.ndarray) -> np.ndarray:
    """Return ``S`` as a float array after checking symmetry and trace."""
    S = _square(S)
    if not np.array_equal(S, S.T):
        raise ValueError("matrix is not symmetric")
    if abs(np.trace(S)) > 1e-12 * (1.0 + frobenius_norm(S)):
        raise TraceError(f"trace {np.trace(S):.3g} is not zero")
    return S


def frobenius_inner(S1: np.ndarray, S2: np.ndarray) -> float:
    """``tr(S1 @ S2)`` for symmetric inputs."""
    S1, S2 = _square(S1), _square(S2)
    if S1.shape != S2.shape:
        raise DimensionError(f"shapes differ: {S1.shape} vs {S2.shape}")
    return float(np.sum(S1 * S2.T))


def fix_signs(Q: np.ndarray) -> np.ndarray:
    """Flip eigenvector columns so the largest-magnitude entry is positive.

    Ties go to the lowest row index. Works on stacks ``(..., n, n)``.
    """
    idx = np.argmax(np.abs(Q), axis=-2)  # argmax returns the first maximiser
    pivot = np.take_along_axis(Q, idx[..., None, :], axis=-2)
    sign = np.where(pivot < 0, -1.0, 1.0)
    return Q * sign


def sorted_eigen(S: np.ndarray) -> Spectrum:
    """Ascending spectrum with the deterministic sign convention of :func:`fix_signs`."""
    S = _square(S)
    if not np.all(np.isfinite(S)):
        raise ValueError("matrix has non-finite entries")
    w, Q = np.linalg.eigh(S)
    return Spectrum(w, fix_signs(Q))


def sorted_eigen_batch(S: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Stacked version of :func:`sorted_eigen` returning ``(w, Q)`` arrays."""
    S = np.asarray(S, dtype=float)
    if not np.all(np.isfinite(S)):
        raise ValueError("matrix field has non-finite entries")
    w, Q = np.linalg.eigh(S)
    return w, fix_signs(Q)


def multiplicity_of(spec: Spectrum | np.ndarray, gap_tol: float) -> tuple[int, ...]:
    """Run lengths of eigenvalues closer than ``gap_tol`` to their successor."""
    if gap_tol <= 0:
        raise ValueError("gap_tol must be positive")
    lam = spec.eigenvalues if isinstance(spec, Spectrum) else np.asarray(spec, dtype=float)
    parts = [1]
    for gap in np.diff(lam):
        if gap < gap_tol:
            parts[-1] += 1
        else:
            parts.append(1)
    return tuple(parts)


def diag_rep(lam: Sequence[float], tol: float = 1e-10) -> np.ndarray:
    """Diagonal representative ``diag(lam)`` of an orbit; ``lam`` must sum to zero."""
    lam = np.asarray(lam, dtype=float)
    if abs(lam.sum()) > tol * (1.0 + np.linalg.norm(lam)):
        raise TraceError(f"eigenvalues sum to {lam.sum():.3g}, not zero")
    return np.diag(lam)


@dataclass(frozen=True)
class NormalSplit:
    """Orthogonal pieces of a matrix relative to a block pattern."""

    block_traceless: list[np.ndarray]
    diag_scalars: np.ndarray
    offdiag: np.ndarray


def blockdiag(blocks: Sequence[np.ndarray]) -> np.ndarray:
    n = sum(b.shape[0] for b in blocks)
    out = np.zeros((n, n))
    pos = 0
    for b in blocks:
        k = b.shape[0]
        out[pos:pos + k, pos:pos + k] = b
        pos += k
    return out


def normal_space_split(S: np.ndarray, m: Sequence[int]) -> NormalSplit:
    """Split ``S`` into block-traceless, block-scalar and off-block parts."""
    S = _square(S)
    m = check_multiplicity(m)
    if sum(m) != S.shape[0]:
        raise DimensionError(f"multiplicity {m} does not match dimension {S.shape[0]}")
    M = prefix_sums(m)
    blocks, mus = [], []
    off = S.copy()
    for i, k in enumerate(m):
        sl = slice(M[i], M[i + 1])
        B = S[sl, sl]
        mu = np.trace(B) / k
        blocks.append(B - mu * np.eye(k))
        mus.append(mu)
        off[sl, sl] = 0.0
    return NormalSplit(blocks, np.array(mus), off)


def _layout(m: int) -> list[tuple[int, int]]:
    """Row-major upper-triangle positions; the final one is the closing diagonal."""
    return [(r, c) for r in range(m) for c in range(r, m)]


def normal_form_embed(coords: NormalFormCoords | Sequence[float], m: int | None = None) -> np.ndarray:
    """Lay coordinates ``b`` into a traceless symmetric ``m x m`` matrix.

    The upper triangle is filled row by row with ``b``; the last diagonal entry
    closes the trace.
    """
    if isinstance(coords, NormalFormCoords):
        m, b = coords.m, np.asarray(coords.b, dtype=float)
    else:
        b = np.asarray(coords, dtype=float)
        if m is None:
            raise ValueError("m is required when passing raw coordinates")
        if len(b) != d_of(m):
            raise DimensionError(f"expected {d_of(m)} coordinates for m={m}, got {len(b)}")
    S = np.zeros((m, m))
    pos = _layout(m)
    for (r, c), v in zip(pos[:-1], b):
        S[r, c] = v
        S[c, r] = v
    S[m - 1, m - 1] = -sum(S[k, k] for k in range(m - 1))
    return S


def normal_form_extract(S: np.ndarray) -> NormalFormCoords:
    """Inverse of :func:`normal_form_embed`."""
    S = check_traceless(S)
    m = S.shape[0]
    b = np.array([S[r, c] for r, c in _layout(m)[:-1]])
    return NormalFormCoords(m, b)


def sym0_orthonormal_basis(m: int) -> np.ndarray:
    """Frobenius-orthonormal basis of ``Sym_0(m)``, shape ``(d_of(m), m, m)``."""
    basis = []
    for r in range(m):
        for c in range(r + 1, m):
            E = np.zeros((m, m))
            E[r, c] = E[c, r] = 1.0 / np.sqrt(2.0)
            basis.append(E)
    for k in range(1, m):
        # Helmert-style traceless diagonals
        v = np.zeros(m)
        v[:k] = 1.0
        v[k] = -k
        basis.append(np.diag(v / np.linalg.norm(v)))
    return np.array(basis).reshape(d_of(m), m, m)


def sym_exp(S: np.ndarray, t: float = 1.0) -> np.ndarray:
    """``exp(t S)`` for symmetric ``S`` (stacks allowed) via eigendecomposition."""
    S = np.asarray(S, dtype=float)
    w, Q = np.linalg.eigh(S)
    x = t * w
    if x.size:
        worst = x.flat[np.argmax(np.abs(x))]
        if not np.isfinite(worst) or abs(worst) > EXP_LIMIT:
            raise ExpOverflowError(worst)
    return (Q * np.exp(x)[..., None, :]) @ np.swapaxes(Q, -1, -2)


def sym_sqrt(G: np.ndarray, inverse: bool = False) -> np.ndarray:
    """Unique SPD square root (or its inverse) of stacked SPD matrices."""
    w, Q = np.linalg.eigh(np.asarray(G, dtype=float))
    if np.any(w <= 0):
        raise np.linalg.LinAlgError("matrix is not positive definite")
    s = w ** (-0.5 if inverse else 0.5)
    return (Q * s[..., None, :]) @ np.swapaxes(Q, -1, -2)
