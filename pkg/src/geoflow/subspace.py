"""PCA subspaces and Grassmannian geometry.

A :class:`Subspace` is a point on Gr(d, D) stored through an orthonormal
D x d basis.  The helpers here produce the pieces the geodesic flow needs:
orthogonal completion, principal angles and the cosine-sine decomposition
of a pair of subspaces.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import subspace_angles

from .errors import DimensionError, InputError, RankDeficientError, UnsupportedDimensionError

ORTHO_TOL = 1e-10
ANGLE_FLOOR = 1e-7
RIGHT_ANGLE_TOL = 1e-12  # cosines below this count as exact right angles


@dataclass(frozen=True)
class Subspace:
    basis: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.basis, dtype=float)
        if b.ndim != 2:
            raise InputError("basis must be a 2-D array")
        D, d = b.shape
        if not 1 <= d <= D:
            raise InputError(f"need 1 <= d <= D, got d={d}, D={D}")
        err = np.linalg.norm(b.T @ b - np.eye(d))
        if not err <= ORTHO_TOL:
            raise InputError(f"basis columns are not orthonormal (error {err:.2e})")
        object.__setattr__(self, "basis", b)

    @property
    def ambient_dim(self) -> int:
        return self.basis.shape[0]

    @property
    def sub_dim(self) -> int:
        return self.basis.shape[1]


@dataclass(frozen=True)
class Completion:
    q: np.ndarray  # D x D, first d columns are the subspace basis
    r: np.ndarray  # D x (D - d), orthogonal complement


@dataclass(frozen=True)
class CsDecomposition:
    v1: np.ndarray
    v2_tilde: np.ndarray
    v: np.ndarray
    angles: np.ndarray  # ascending, in [0, pi/2]


def _fix_signs(m):
    """Flip columns so each column's largest-magnitude entry is non-negative."""
    if m.shape[1] == 0:
        return m
    rows = np.argmax(np.abs(m), axis=0)  # first index wins ties
    signs = np.where(m[rows, np.arange(m.shape[1])] < 0, -1.0, 1.0)
    return m * signs


def fit_pca(data, d: int) -> Subspace:
    """Top-``d`` principal directions of the column-centred data."""
    x = np.asarray(data, dtype=float)
    if x.ndim != 2:
        raise InputError("data must be an N x D matrix")
    if not np.all(np.isfinite(x)):
        raise InputError("data contains non-finite values")
    n, D = x.shape
    if n < 2:
        raise InputError(f"need at least 2 samples, got {n}")
    if not 1 <= d <= min(D, n - 1):
        raise InputError(f"d={d} outside [1, min(D, N-1)] = [1, {min(D, n - 1)}]")
    xc = x - x.mean(axis=0)
    _, s, vt = np.linalg.svd(xc, full_matrices=False)
    tol = max(n, D) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    rank = int(np.sum(s > tol)) if s.size and s[0] > 0 else 0
    if rank < d:
        raise RankDeficientError(d, rank)
    return Subspace(_fix_signs(vt[:d].T.copy()))


def explained_variance_dim(data, fraction: float, cap: int | None = None) -> int:
    """Smallest d whose leading components explain ``fraction`` of the variance."""
    x = np.asarray(data, dtype=float)
    s = np.linalg.svd(x - x.mean(axis=0), compute_uv=False)
    var = s**2
    if var.sum() <= 0:
        raise RankDeficientError(1, 0)
    cum = np.cumsum(var) / var.sum()
    d = int(np.searchsorted(cum, fraction - 1e-12) + 1)
    d = min(d, len(s))
    if cap is not None:
        d = min(d, cap)
    return d


def complete(s: Subspace) -> Completion:
    """Orthogonal completion of ``s`` via a full QR factorisation."""
    d = s.sub_dim
    qfull, _ = np.linalg.qr(s.basis, mode="complete")
    r = _fix_signs(qfull[:, d:].copy())
    q = np.hstack([s.basis, r])
    return Completion(q=q, r=r)


def _check_pair(s1, s2):
    if s1.ambient_dim != s2.ambient_dim:
        raise DimensionError(
            f"ambient dimensions differ: {s1.ambient_dim} vs {s2.ambient_dim}"
        )


def principal_angles(s1: Subspace, s2: Subspace) -> np.ndarray:
    """Principal angles, ascending.

    Uses the combined sine/cosine algorithm so small angles are resolved to
    working precision (arccos alone bottoms out near 1e-8).
    """
    _check_pair(s1, s2)
    return np.sort(subspace_angles(s1.basis, s2.basis))


def cs_decompose(s1: Subspace, s2: Subspace, comp: Completion | None = None) -> CsDecomposition:
    """Cosine-sine decomposition of the pair (s1, s2).

    Returns ``v1, v2_tilde, v, angles`` with
    ``s1.T @ s2 = v1 diag(cos) v.T`` and ``r1.T @ s2 = -v2_tilde diag(sin) v.T``.
    """
    _check_pair(s1, s2)
    D, d = s1.basis.shape
    if s2.sub_dim != d:
        raise DimensionError(f"sub-dimensions differ: {d} vs {s2.sub_dim}")
    if d > D - d:
        raise UnsupportedDimensionError(
            f"d={d} exceeds D-d={D - d}: the flow kernel needs d no greater than half "
            f"the ambient feature dimension (D={D})"
        )
    if comp is None:
        comp = complete(s1)
    u, cos, vt = np.linalg.svd(s1.basis.T @ s2.basis)
    cos = np.clip(cos, 0.0, 1.0)
    angles = np.arccos(cos)  # singular values descend, so angles ascend
    v = vt.T
    right = cos <= RIGHT_ANGLE_TOL
    if np.any(right):
        # at a right angle both rotation senses are geodesics; rounding would
        # pick one, so orient each pair toward the sign-fixed directions
        for k in np.flatnonzero(right):
            if _fix_signs(s1.basis @ u[:, k:k + 1])[0, 0] != (s1.basis @ u[:, k])[0]:
                u[:, k] = -u[:, k]
            if _fix_signs(s2.basis @ v[:, k:k + 1])[0, 0] != (s2.basis @ v[:, k])[0]:
                v[:, k] = -v[:, k]
    w = comp.r.T @ s2.basis @ v  # columns have norm sin(theta)
    norms = np.linalg.norm(w, axis=0)
    big = angles > ANGLE_FLOOR
    v2 = np.zeros((D - d, d))
    v2[:, big] = -w[:, big] / norms[big]
    if not np.all(big):
        v2 = _complete_columns(v2, big)
    return CsDecomposition(v1=u, v2_tilde=v2, v=v, angles=angles)


def _complete_columns(m, filled):
    """Fill the columns of ``m`` not in ``filled`` with orthonormal directions."""
    m = m.copy()
    rows = m.shape[0]
    have = [m[:, k] for k in np.flatnonzero(filled)]
    for k in np.flatnonzero(~filled):
        basis = np.array(have).T if have else np.zeros((rows, 0))
        best, best_norm = None, -1.0
        for e in np.eye(rows):
            cand = e - basis @ (basis.T @ e) if basis.size else e
            nrm = np.linalg.norm(cand)
            if nrm > best_norm + 1e-12:
                best, best_norm = cand, nrm
        col = best / best_norm
        col = col - basis @ (basis.T @ col) if basis.size else col
        col /= np.linalg.norm(col)
        m[:, k] = col
        have.append(col)
    return m


def leading_cosine(s1: Subspace, s2: Subspace) -> float:
    """|cos| of the angle between the leading basis directions."""
    _check_pair(s1, s2)
    c = abs(float(s1.basis[:, 0] @ s2.basis[:, 0]))
    return min(c, 1.0)
