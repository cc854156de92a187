"""Geodesic flow between two subspaces and the geodesic flow kernel.

The kernel matrix is the exact integral of the projections onto every
subspace along the flow,

    G = int_0^1 Phi(t) Phi(t)^T dt,

assembled in closed form from per-angle integrals of cos^2, cos*sin and
sin^2.  ``embedding`` is a square root of G so that x^T G y equals the
ordinary inner product of the embedded vectors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, InputError
from .subspace import (
    ANGLE_FLOOR,
    Completion,
    CsDecomposition,
    Subspace,
    complete,
    cs_decompose,
)


@dataclass(frozen=True)
class FlowKernel:
    g: np.ndarray
    embedding: np.ndarray
    angles: np.ndarray

    @property
    def dim(self) -> int:
        return self.g.shape[0]


def flow_point(cs: CsDecomposition, comp: Completion, t: float) -> Subspace:
    """Subspace reached at time ``t`` along the geodesic from S1 to S2."""
    if not 0.0 <= t <= 1.0:
        raise InputError(f"t={t} outside [0, 1]")
    top = cs.v1 * np.cos(t * cs.angles)
    bottom = -cs.v2_tilde * np.sin(t * cs.angles)
    return Subspace(comp.q @ np.vstack([top, bottom]))


def flow_integrals(angles):
    """Per-angle integrals over t in [0, 1] of cos^2, cos*sin and sin^2 of t*theta."""
    th = np.asarray(angles, dtype=float)
    small = th <= ANGLE_FLOOR
    safe = np.where(small, 1.0, th)
    half_sinc = 0.5 * np.sinc(2.0 * th / np.pi)  # sin(2th)/(4th) with the th->0 limit
    cc = 0.5 + half_sinc
    ss = 0.5 - half_sinc
    cs = np.where(small, 0.0, np.sin(th) ** 2 / (2.0 * safe))
    cc = np.where(small, 1.0, cc)
    ss = np.where(small, 0.0, ss)
    return cc, cs, ss


def build_kernel(s1: Subspace, s2: Subspace) -> FlowKernel:
    comp = complete(s1)
    cs = cs_decompose(s1, s2, comp)
    cc, cxs, ss = flow_integrals(cs.angles)
    d = s1.sub_dim
    p1 = comp.q[:, :d] @ cs.v1
    p2 = comp.r @ cs.v2_tilde
    cross = (p1 * cxs) @ p2.T
    g = (p1 * cc) @ p1.T + (p2 * ss) @ p2.T - cross - cross.T
    g = 0.5 * (g + g.T)
    w, u = np.linalg.eigh(g)
    w = np.clip(w, 0.0, None)
    emb = np.sqrt(w)[:, None] * u.T
    return FlowKernel(g=g, embedding=emb, angles=cs.angles)


def kernel_value(k: FlowKernel, x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != (k.dim,) or y.shape != (k.dim,):
        raise DimensionError(f"expected vectors of length {k.dim}, got {x.shape} and {y.shape}")
    return float(x @ k.g @ y)


def embed(k: FlowKernel, data) -> np.ndarray:
    """Map each row x to ``embedding @ x``."""
    x = np.asarray(data, dtype=float)
    if x.ndim != 2 or x.shape[1] != k.dim:
        raise DimensionError(f"expected N x {k.dim} data, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InputError("data contains non-finite values")
    return x @ k.embedding.T
