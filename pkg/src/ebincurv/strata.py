"""Combinatorics of eigenvalue multiplicity faces of ``Sym_0(n)``.

A multiplicity is a tuple of positive integers summing to ``n``; it labels the
face of matrices whose sorted eigenvalues come in runs of those lengths.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

from .symcore import check_multiplicity, d_of, multiplicity_of, prefix_sums

Multiplicity = tuple[int, ...]
Triplet = tuple[int, int, int]


@dataclass(frozen=True)
class FaceDescriptor:
    m: Multiplicity
    n: int
    codim: int
    orbit_space_dim: int


def codim(m: Sequence[int]) -> int:
    return sum(d_of(k) for k in m)


def describe(m: Sequence[int]) -> FaceDescriptor:
    m = check_multiplicity(m)
    return FaceDescriptor(m, sum(m), codim(m), len(m) - 1)


@lru_cache(maxsize=None)
def compositions(n: int) -> tuple[Multiplicity, ...]:
    """All ordered compositions of ``n`` in lexicographic order."""
    if n == 0:
        return ((),)
    out = []
    for first in range(1, n + 1):
        for rest in compositions(n - first):
            out.append((first,) + rest)
    return tuple(sorted(out))


def enumerate_multiplicities(n: int, max_codim: int) -> list[FaceDescriptor]:
    """Faces with ``codim <= max_codim``, sorted by codim descending then lexicographically."""
    if n < 2:
        raise ValueError("n must be at least 2")
    faces = [describe(m) for m in compositions(n) if codim(m) <= max_codim]
    return sorted(faces, key=lambda f: (-f.codim, f.m))


def _merge(mt: Multiplicity, cuts: Iterable[int]) -> Multiplicity:
    """Sum consecutive parts of ``mt`` between the given cut positions."""
    edges = (0, *cuts, len(mt))
    return tuple(sum(mt[a:b]) for a, b in zip(edges, edges[1:]))


def leq(m: Sequence[int], mt: Sequence[int]) -> bool:
    """Partial order: ``m`` is obtained from ``mt`` by merging adjacent parts.

    Decided by trying every surjective non-decreasing map from the parts of
    ``mt`` onto the parts of ``m``; such a map is fixed by ``L - 1`` cut
    positions among the ``L~ - 1`` gaps.
    """
    m, mt = check_multiplicity(m), check_multiplicity(mt)
    if sum(m) != sum(mt):
        raise ValueError(f"dimension mismatch: {m} vs {mt}")
    L, Lt = len(m), len(mt)
    if L > Lt:
        return False
    return any(_merge(mt, cuts) == m for cuts in combinations(range(1, Lt), L - 1))


def closure_boundary(mt: Sequence[int]) -> set[Multiplicity]:
    """Faces strictly below ``mt``: those lying in the closure of its face."""
    mt = check_multiplicity(mt)
    return {m for m in compositions(sum(mt)) if m != mt and leq(m, mt)}


def pi_map(m: Sequence[int]) -> tuple[int, ...]:
    """Cluster index (1-based) of each eigen-index ``1..n``."""
    m = check_multiplicity(m)
    return tuple(c + 1 for c, k in enumerate(m) for _ in range(k))


def cluster_of(m: Sequence[int], i: int) -> int:
    """``pi(i)`` for a single 1-based eigen-index."""
    M = prefix_sums(m)
    if not 1 <= i <= M[-1]:
        raise IndexError(f"index {i} outside 1..{M[-1]}")
    return next(c for c in range(1, len(M)) if M[c - 1] < i <= M[c])


def enumerate_triplets(m: Sequence[int]) -> list[Triplet]:
    """Eigen-index triplets ``(1, b, c)`` with ``1 < b`` and ``pi(b) < pi(c)``.

    Pairs are canonicalised to ``b < c``; when ``pi(b) < pi(c)`` this is
    automatic because eigen-indices are ordered by cluster.
    """
    pi = pi_map(m)
    n = len(pi)
    found = set()
    for b in range(2, n + 1):
        for c in range(2, n + 1):
            if b != c and pi[b - 1] < pi[c - 1]:
                found.add((1, min(b, c), max(b, c)))
    return sorted(found)


@dataclass
class TripletBoundReport:
    n: int
    checked: int
    min_count: int
    violators: list[tuple[Multiplicity, int]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violators


def verify_triplet_bound(n: int) -> TripletBoundReport:
    """Every face of codim ``<= n`` must carry at least ``n + 1`` triplets."""
    if n < 6:
        raise ValueError("the triplet bound is only claimed for n >= 6")
    faces = enumerate_multiplicities(n, n)
    counts = [(f.m, len(enumerate_triplets(f.m))) for f in faces]
    return TripletBoundReport(
        n=n,
        checked=len(counts),
        min_count=min(c for _, c in counts),
        violators=[(m, c) for m, c in counts if c < n + 1],
    )


# --- approximability side of the closure relation -------------------------

def face_distance(lam: Sequence[float], mt: Sequence[int]) -> float:
    """Frobenius distance from ``diag(lam)`` to the closure of the face ``mt``.

    By the Hoffman-Wielandt inequality no matrix with sorted spectrum ``mu``
    is closer than ``|mu - lam|``; the nearest spectra constant on the runs of
    ``mt`` are the run means, which are attained by diagonal matrices.
    """
    lam = np.sort(np.asarray(lam, dtype=float))
    M = prefix_sums(mt)
    sq = 0.0
    for a, b in zip(M, M[1:]):
        seg = lam[a:b]
        sq += float(np.sum((seg - seg.mean()) ** 2))
    return float(np.sqrt(sq))


def split_spectrum(lam: Sequence[float], m: Sequence[int], mt: Sequence[int], delta: float,
                   rng: np.random.Generator | None = None) -> np.ndarray:
    """Perturb ``lam`` (multiplicity ``m``) into a spectrum of multiplicity ``mt``.

    Each cluster of ``m`` is split into the runs of ``mt`` it contains using
    strictly increasing offsets of size at most ``delta`` whose weighted mean is
    zero, so the trace stays zero and ordering is preserved.
    """
    lam = np.asarray(lam, dtype=float)
    m, mt = check_multiplicity(m), check_multiplicity(mt)
    if not leq(m, mt):
        raise ValueError(f"{m} is not below {mt}")
    out = lam.copy()
    M = prefix_sums(m)
    Mt = prefix_sums(mt)
    for a, b in zip(M, M[1:]):
        runs = [(s, e) for s, e in zip(Mt, Mt[1:]) if a <= s and e <= b]
        if len(runs) == 1:
            continue
        if rng is None:
            steps = np.arange(len(runs), dtype=float)
        else:
            steps = np.cumsum(rng.uniform(0.5, 1.0, len(runs)))
        sizes = np.array([e - s for s, e in runs], dtype=float)
        steps = steps - np.dot(sizes, steps) / sizes.sum()
        steps *= delta / max(np.max(np.abs(steps)), 1e-300)
        for (s, e), off in zip(runs, steps):
            out[s:e] += off
    return out


# --- Whitney (a) containment ----------------------------------------------

def _sym0_coords(S: np.ndarray) -> np.ndarray:
    """Frobenius-isometric coordinates of a symmetric matrix (upper triangle)."""
    n = S.shape[-1]
    iu = np.triu_indices(n)
    w = np.where(iu[0] == iu[1], 1.0, np.sqrt(2.0))
    return S[..., iu[0], iu[1]] * w


def normal_space_basis(lam: Sequence[float], gap_tol: float = 1e-9) -> np.ndarray:
    """Orthonormal basis of the normal space to the face through ``diag(lam)``.

    Computed numerically as the orthogonal complement, inside ``Sym_0(n)``, of
    the face tangent directions: commutators ``[A, D]`` with ``A``
    antisymmetric, and trace-free shifts constant on each eigenvalue run.
    Returned as coordinate vectors.
    """
    lam = np.asarray(lam, dtype=float)
    n = len(lam)
    D = np.diag(lam)
    m = multiplicity_of(np.sort(lam), gap_tol)
    M = prefix_sums(m)
    tangent = []
    for a in range(n):
        for b in range(a + 1, n):
            A = np.zeros((n, n))
            A[a, b], A[b, a] = 1.0, -1.0
            tangent.append(_sym0_coords(A @ D - D @ A))
    for i in range(len(m)):
        shift = np.zeros(n)
        shift[M[i]:M[i + 1]] = 1.0
        shift -= shift.mean()
        tangent.append(_sym0_coords(np.diag(shift)))
    # trace direction is excluded from Sym_0(n)
    tangent.append(_sym0_coords(np.eye(n)))
    T = np.array(tangent)
    u, s, vt = np.linalg.svd(T, full_matrices=True)
    rank = int(np.sum(s > 1e-9 * max(1.0, s.max())))
    return vt[rank:]


def whitney_a_check(m: Sequence[int], mt: Sequence[int], lam: Sequence[float], delta: float,
                    rng: np.random.Generator | None = None, gap_tol: float = 1e-9) -> float:
    """Residual of the normal-space containment at a nearby point of the upper face.

    ``lam`` has multiplicity ``m``; a spectrum of multiplicity ``mt`` within
    ``delta`` is sampled and the largest distance of its normal basis vectors
    from the normal space at ``lam`` is returned.
    """
    m, mt = check_multiplicity(m), check_multiplicity(mt)
    lam = np.sort(np.asarray(lam, dtype=float))
    if multiplicity_of(lam, gap_tol) != m:
        raise ValueError(f"lambda has multiplicity {multiplicity_of(lam, gap_tol)}, expected {m}")
    if not leq(m, mt):
        raise ValueError(f"{m} is not below {mt}")
    lt = split_spectrum(lam, m, mt, delta, rng)
    low = normal_space_basis(lam, gap_tol)
    high = normal_space_basis(lt, min(gap_tol, 0.01 * delta))
    if high.size == 0:
        return 0.0
    proj = high @ low.T @ low
    return float(np.max(np.linalg.norm(high - proj, axis=1)))


def adjacent_pairs(n: int) -> list[tuple[Multiplicity, Multiplicity]]:
    """Pairs ``m < mt`` where ``mt`` splits exactly one part of ``m`` in two."""
    pairs = []
    for mt in compositions(n):
        for cut in range(1, len(mt)):
            m = mt[:cut - 1] + (mt[cut - 1] + mt[cut],) + mt[cut + 1:]
            pairs.append((m, mt))
    return sorted(set(pairs))


# --- reference tables ------------------------------------------------------

def _t(*codes: int) -> tuple[Triplet, ...]:
    return tuple((c // 100, c // 10 % 10, c % 10) for c in codes)


REFERENCE_TABLES: dict[int, dict[Multiplicity, tuple[Triplet, ...]]] = {
    4: {
        (2, 2): _t(123, 124),
        (1, 1, 2): _t(123, 124),
        (1, 2, 1): _t(124, 134),
        (2, 1, 1): _t(123, 124, 134),
        (1, 1, 1, 1): _t(123, 124, 134),
    },
    5: {
        (1, 1, 3): _t(123, 124, 125),
        (1, 3, 1): _t(125, 135, 145),
        (3, 1, 1): _t(124, 125, 134, 135),
        (1, 2, 2): _t(124, 125, 134, 135),
        (2, 1, 2): _t(123, 124, 125, 134, 135),
        (2, 2, 1): _t(123, 124, 125, 135, 145),
        (1, 1, 1, 2): _t(123, 124, 125, 134, 135),
        (1, 1, 2, 1): _t(123, 124, 125, 135, 145),
        (1, 2, 1, 1): _t(124, 125, 134, 135, 145),
        (2, 1, 1, 1): _t(123, 124, 125, 134, 135, 145),
        (1, 1, 1, 1, 1): _t(123, 124, 125, 134, 135, 145),
    },
}

# The dimension six table lists seven witnessing triplets per face, which is
# all the counting argument needs. Rows are checked as subsets.
REFERENCE_TABLE_6: dict[Multiplicity, tuple[Triplet, ...]] = {
    (3, 1, 1, 1): _t(124, 125, 126, 134, 135, 136, 145),
    (1, 3, 1, 1): _t(125, 126, 135, 136, 145, 146, 156),
    (1, 1, 3, 1): _t(123, 124, 125, 126, 136, 146, 156),
    (1, 1, 1, 3): _t(123, 124, 125, 126, 134, 135, 136),
    (2, 2, 2): _t(123, 124, 125, 126, 135, 136, 145),
    (2, 2, 1, 1): _t(123, 124, 125, 126, 135, 136, 145),
    (2, 1, 2, 1): _t(123, 124, 125, 126, 135, 136, 146),
    (2, 1, 1, 2): _t(123, 124, 125, 126, 135, 136, 145),
    (1, 2, 2, 1): _t(124, 125, 126, 134, 135, 136, 146),
    (1, 2, 1, 2): _t(124, 125, 126, 134, 135, 136, 146),
    (1, 1, 2, 2): _t(123, 124, 125, 126, 135, 136, 146),
    (2, 1, 1, 1, 1): _t(123, 124, 125, 126, 134, 135, 136),
    (1, 2, 1, 1, 1): _t(124, 125, 126, 134, 135, 136, 145),
    (1, 1, 2, 1, 1): _t(123, 124, 125, 126, 135, 136, 145),
    (1, 1, 1, 2, 1): _t(123, 124, 125, 126, 134, 135, 136),
    (1, 1, 1, 1, 2): _t(123, 124, 125, 126, 134, 135, 136),
    (1, 1, 1, 1, 1, 1): _t(123, 124, 125, 126, 134, 135, 136),
}


@dataclass
class TableCheck:
    n: int
    passed: bool
    problems: list[str]


def check_reference_table(n: int) -> TableCheck:
    """Compare enumeration against the embedded table for ``n`` in ``{4, 5, 6}``.

    For ``n = 4, 5`` the face list and every triplet set must match exactly.
    For ``n = 6`` the face list must match, each listed triplet must be
    allowable and each face must have at least seven triplets.
    """
    problems = []
    faces = {f.m for f in enumerate_multiplicities(n, n)}
    if n in REFERENCE_TABLES:
        table, exact = REFERENCE_TABLES[n], True
    elif n == 6:
        table, exact = REFERENCE_TABLE_6, False
    else:
        raise ValueError(f"no reference table for n={n}")
    if faces != set(table):
        problems.append(f"faces differ: extra={sorted(faces - set(table))} missing={sorted(set(table) - faces)}")
    for m, listed in table.items():
        got = enumerate_triplets(m)
        if exact and tuple(got) != listed:
            problems.append(f"{m}: computed {got}, table {list(listed)}")
        if not exact:
            if not set(listed) <= set(got):
                problems.append(f"{m}: listed triplets {sorted(set(listed) - set(got))} not allowable")
            if len(got) < 7:
                problems.append(f"{m}: only {len(got)} triplets")
    return TableCheck(n, not problems, problems)
