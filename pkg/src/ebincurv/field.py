"""Fields on the flat periodic torus ``[0, 1)^n``.

Arrays are stored grid-first: a scalar field has shape ``(res,) * n`` and a
matrix field ``(res,) * n + (n, n)``. Derivatives are periodic central
differences applied with ``np.roll``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .symcore import check_multiplicity, prefix_sums, sym_sqrt

MIN_RES = 8


@dataclass(frozen=True)
class TorusGrid:
    n: int
    res: int

    def __post_init__(self):
        if self.res < MIN_RES:
            raise ValueError(f"res must be at least {MIN_RES}")
        if self.n < 1:
            raise ValueError("dimension must be positive")

    @property
    def spacing(self) -> float:
        return 1.0 / self.res

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.res,) * self.n

    @property
    def size(self) -> int:
        return self.res ** self.n

    def coords(self) -> list[np.ndarray]:
        """Coordinate arrays ``x_1 .. x_n``, each of grid shape."""
        x = np.arange(self.res) / self.res
        return list(np.meshgrid(*([x] * self.n), indexing="ij"))

    def point(self, index: Sequence[int]) -> np.ndarray:
        return np.asarray(index, dtype=float) / self.res


@dataclass(frozen=True)
class Region:
    """Axis-aligned box of grid indices ``[lo, hi)`` per axis."""

    name: str
    lo: tuple[int, ...]
    hi: tuple[int, ...]

    @classmethod
    def full(cls, grid: TorusGrid, name: str = "all") -> "Region":
        return cls(name, (0,) * grid.n, (grid.res,) * grid.n)

    def slices(self) -> tuple[slice, ...]:
        return tuple(slice(a, b) for a, b in zip(self.lo, self.hi))

    def mask(self, grid: TorusGrid) -> np.ndarray:
        m = np.zeros(grid.shape, dtype=bool)
        m[self.slices()] = True
        return m

    def anchor(self) -> tuple[int, ...]:
        return tuple(self.lo)

    def validate(self, grid: TorusGrid) -> None:
        if len(self.lo) != grid.n or len(self.hi) != grid.n:
            raise ValueError(f"region {self.name} has wrong dimension")
        if any(not 0 <= a < b <= grid.res for a, b in zip(self.lo, self.hi)):
            raise ValueError(f"region {self.name} is empty or out of range")


# --- finite differences ----------------------------------------------------

def finite_diff(f: np.ndarray, grid: TorusGrid, axis: int, order: int = 4) -> np.ndarray:
    """Periodic central difference of ``f`` along grid ``axis``."""
    h = grid.spacing
    if order == 2:
        return (np.roll(f, -1, axis) - np.roll(f, 1, axis)) / (2 * h)
    if order == 4:
        return (8 * (np.roll(f, -1, axis) - np.roll(f, 1, axis))
                - (np.roll(f, -2, axis) - np.roll(f, 2, axis))) / (12 * h)
    raise ValueError("order must be 2 or 4")


def gradient(f: np.ndarray, grid: TorusGrid, order: int = 4) -> np.ndarray:
    """Coordinate gradient; the derivative index is appended last."""
    return np.stack([finite_diff(f, grid, a, order) for a in range(grid.n)], axis=-1)


def frame_derivative(f: np.ndarray, E: np.ndarray, grid: TorusGrid, order: int = 4) -> np.ndarray:
    """``e_i(f)`` for every frame vector, stacked on a new last axis.

    ``f`` may carry trailing component axes; ``E`` has shape grid + ``(n, n)``
    with frame vectors as columns.
    """
    extra = f.ndim - grid.n
    out = 0.0
    for m in range(grid.n):
        d = finite_diff(f, grid, m, order)
        w = E[..., m, :].reshape(grid.shape + (1,) * extra + (grid.n,))
        out = out + d[..., None] * w
    return out


# --- field containers ------------------------------------------------------

@dataclass
class MetricField:
    grid: TorusGrid
    G: np.ndarray

    def check(self, floor: float = 1e-8) -> None:
        if not np.allclose(self.G, np.swapaxes(self.G, -1, -2), rtol=0, atol=1e-12):
            raise ValueError("metric is not symmetric")
        if np.min(np.linalg.eigvalsh(self.G)) < floor:
            raise ValueError("metric is not positive definite")

    def inverse(self) -> np.ndarray:
        return np.linalg.inv(self.G)

    def volume_density(self) -> np.ndarray:
        return np.sqrt(np.linalg.det(self.G))


@dataclass
class FrameField:
    grid: TorusGrid
    E: np.ndarray

    def orthonormality_residual(self, G: np.ndarray) -> float:
        n = self.grid.n
        R = np.swapaxes(self.E, -1, -2) @ G @ self.E - np.eye(n)
        return float(np.max(np.sqrt(np.sum(R ** 2, axis=(-1, -2)))))


@dataclass
class EndoField:
    """Self-adjoint trace-free endomorphism given by its matrix ``Hf`` in ``frame``.

    ``m`` optionally records the block pattern of ``Hf`` in that frame.
    """

    grid: TorusGrid
    frame: FrameField
    Hf: np.ndarray
    m: tuple[int, ...] | None = None

    def coordinate_matrix(self) -> np.ndarray:
        """Matrix of ``H`` acting on coordinate vectors: ``E Hf E^T G``."""
        E = self.frame.E
        return E @ self.Hf @ np.linalg.inv(E)

    def in_frame(self, E: np.ndarray, G: np.ndarray) -> np.ndarray:
        """Matrix of ``H`` in another ``G``-orthonormal frame ``E``."""
        Hc = self.coordinate_matrix()
        return np.swapaxes(E, -1, -2) @ G @ Hc @ E

    def spectra(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.Hf)


@dataclass
class SymTensorField:
    grid: TorusGrid
    h: np.ndarray


def flat_metric(grid: TorusGrid) -> MetricField:
    G = np.broadcast_to(np.eye(grid.n), grid.shape + (grid.n, grid.n)).copy()
    return MetricField(grid, G)


def conformal_metric(grid: TorusGrid, phi: np.ndarray) -> MetricField:
    """``g = exp(2 phi) * delta``."""
    w = np.exp(2.0 * phi)[..., None, None]
    return MetricField(grid, w * np.eye(grid.n))


def gram_schmidt_frame(g0: MetricField) -> FrameField:
    """Gram-Schmidt of the coordinate basis: ``E = L^{-T}`` for ``G = L L^T``."""
    L = np.linalg.cholesky(g0.G)
    E = np.swapaxes(np.linalg.inv(L), -1, -2)
    return FrameField(g0.grid, E)


def rotation_exp(V: np.ndarray) -> np.ndarray:
    """``exp(V)`` for stacked antisymmetric ``V`` through the Hermitian ``iV``."""
    V = np.asarray(V, dtype=float)
    if V.ndim > 2 and V.shape[0] > 1 and V[0].size > 2 ** 16:
        # complex temporaries are large; go slab by slab
        return np.stack([rotation_exp(v) for v in V])
    w, Q = np.linalg.eigh(1j * V)
    R = (Q * np.exp(-1j * w)[..., None, :]) @ np.conj(np.swapaxes(Q, -1, -2))
    return R.real


def antisym_generator(n: int, a: int, b: int) -> np.ndarray:
    """``J_ab = E_ab - E_ba`` (0-based ``a``, ``b``)."""
    J = np.zeros((n, n))
    J[a, b], J[b, a] = 1.0, -1.0
    return J


def frame_from_generator(grid: TorusGrid, g0: MetricField, V: np.ndarray) -> FrameField:
    """``E = G^{-1/2} exp(V) G^{1/2} E0`` with ``E0`` the Gram-Schmidt frame."""
    if not np.allclose(V, -np.swapaxes(V, -1, -2), rtol=0, atol=1e-13):
        raise ValueError("generator field must be antisymmetric")
    E0 = gram_schmidt_frame(g0).E
    if np.all(V == 0):
        return FrameField(grid, E0)
    root = sym_sqrt(g0.G)
    iroot = sym_sqrt(g0.G, inverse=True)
    return FrameField(grid, iroot @ rotation_exp(V) @ root @ E0)


def structure_functions(E: np.ndarray, G: np.ndarray, grid: TorusGrid, order: int = 4) -> np.ndarray:
    """``c[..., i, j, k] = g([e_i, e_j], e_k)`` with ``[X, Y] = DY.X - DX.Y``."""
    n = grid.n
    F = G @ E  # lowers the frame index: F[l, k] = g(d_l, e_k)
    W = np.zeros(grid.shape + (n, n, n))
    for m in range(n):
        dE = finite_diff(E, grid, m, order)
        P = np.swapaxes(dE, -1, -2) @ F  # P[j, k] = g(d_m e_j, e_k)
        del dE
        for i in range(n):
            W[..., i, :, :] += E[..., m, i, None, None] * P
        del P
    for i in range(n):
        W[..., i, i, :] = 0.0
        for j in range(i + 1, n):
            d = W[..., i, j, :] - W[..., j, i, :]
            W[..., i, j, :] = d
            W[..., j, i, :] = -d
    return W


def structure_row(E: np.ndarray, G: np.ndarray, grid: TorusGrid, i: int, order: int = 4) -> np.ndarray:
    """``c[..., i, :, :]`` alone, for when the full rank-three field is too large."""
    n = grid.n
    F = G @ E
    row = np.zeros(grid.shape + (n, n))
    for m in range(n):
        P = np.swapaxes(finite_diff(E, grid, m, order), -1, -2) @ F  # P[j, k] = g(d_m e_j, e_k)
        row += E[..., m, i, None, None] * P
        row -= E[..., m, :, None] * P[..., i, None, :]
    return row


def assemble_endo(frame: FrameField, lambdas: Sequence[np.ndarray], blocks: Sequence[np.ndarray | None],
                  m: Sequence[int], tol: float = 1e-10) -> EndoField:
    """Block-diagonal ``H`` with blocks ``lambda_i I + S_i`` in ``frame``."""
    m = check_multiplicity(m, frame.grid.n)
    grid = frame.grid
    n = grid.n
    M = prefix_sums(m)
    Hf = np.zeros(grid.shape + (n, n))
    for i, k in enumerate(m):
        sl = slice(M[i], M[i + 1])
        lam = np.broadcast_to(np.asarray(lambdas[i], dtype=float), grid.shape)
        Hf[..., sl, sl] = lam[..., None, None] * np.eye(k)
        if blocks[i] is not None:
            Hf[..., sl, sl] += blocks[i]
    tr = np.trace(Hf, axis1=-2, axis2=-1)
    if np.max(np.abs(tr)) > tol * (1.0 + np.max(np.abs(Hf))):
        raise ValueError(f"trace violation {np.max(np.abs(tr)):.3g}")
    return EndoField(grid, frame, Hf, m)


def l2_inner(h: SymTensorField, k: SymTensorField, g: MetricField) -> float:
    """``int tr(G^-1 h G^-1 k) sqrt(det G) dx`` by the periodic rectangle rule."""
    Ginv = np.linalg.inv(g.G)
    A = Ginv @ h.h
    B = Ginv @ k.h
    integrand = np.einsum("...ij,...ji->...", A, B) * np.sqrt(np.linalg.det(g.G))
    return float(np.mean(integrand))


# --- serialization ---------------------------------------------------------

def save_field(path: str | Path, grid: TorusGrid, values: np.ndarray, fmt: str = "binary") -> None:
    """Write a header line of JSON followed by row-major little-endian data.

    ``binary`` appends raw float64 bytes; ``text`` appends one value per line
    with 17 significant digits.
    """
    values = np.ascontiguousarray(values, dtype="<f8")
    comp = list(values.shape[grid.n:])
    header = {"dimension": grid.n, "res": grid.res, "components": comp,
              "count": int(np.prod(comp, dtype=int)), "format": fmt}
    with open(path, "wb") as fh:
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode())
        if fmt == "binary":
            fh.write(values.tobytes())
        elif fmt == "text":
            fh.write("\n".join(f"{v:.17g}" for v in values.ravel()).encode())
            fh.write(b"\n")
        else:
            raise ValueError(f"unknown field format {fmt!r}")


def load_field(path: str | Path) -> tuple[TorusGrid, np.ndarray]:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode())
        body = fh.read()
    grid = TorusGrid(int(header["dimension"]), int(header["res"]))
    shape = grid.shape + tuple(header["components"])
    if header["format"] == "binary":
        data = np.frombuffer(body, dtype="<f8")
    else:
        data = np.array([float(x) for x in body.decode().split()])
    return grid, data.reshape(shape).astype(float)
