"""Statistical pre-alignment of domains and chain-level diagnostics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateFeatureError, DimensionError, InputError, SelectionFailureError
from .subspace import fit_pca, leading_cosine

MIX_GRID = np.round(np.arange(101) / 100.0, 2)
N_BOOTSTRAP = 20


# -- normal-condition alignment ---------------------------------------------


@dataclass(frozen=True)
class NcaTransform:
    mean: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        if not np.all(self.scale > 0):
            raise InputError("NCA scale entries must be positive")


def nca_fit(healthy_labelled) -> NcaTransform:
    """Per-feature mean and sample standard deviation of the labelled healthy set."""
    x = np.asarray(healthy_labelled, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise InputError("need an M x D matrix with M >= 2")
    if not np.all(np.isfinite(x)):
        raise InputError("healthy data contains non-finite values")
    mean = x.mean(axis=0)
    scale = x.std(axis=0, ddof=1)
    bad = np.flatnonzero(scale <= 1e-14 * np.maximum(1.0, np.abs(mean)))
    if bad.size:
        raise DegenerateFeatureError(int(bad[0]))
    return NcaTransform(mean=mean, scale=scale)


def nca_apply(t: NcaTransform, data) -> np.ndarray:
    x = np.asarray(data, dtype=float)
    if x.ndim != 2 or x.shape[1] != t.mean.shape[0]:
        raise DimensionError(f"expected N x {t.mean.shape[0]} data, got {x.shape}")
    return (x - t.mean) / t.scale


# -- weighted RMS normalisation for FRF magnitudes --------------------------


@dataclass(frozen=True)
class WrmsConfig:
    mix: float = 0.53
    epsilon: float = 1e-12

    def __post_init__(self):
        if not 0.0 <= self.mix <= 1.0:
            raise InputError(f"mix={self.mix} outside [0, 1]")
        if not self.epsilon > 0:
            raise InputError("epsilon must be positive")


def wrms_normalise(cfg: WrmsConfig, frfs) -> np.ndarray:
    """Scale each FRF by a blend of its own RMS and the dataset-wide RMS.

    The reference RMS is taken over every entry of ``frfs``; no class
    information is used.
    """
    h = np.asarray(frfs, dtype=float)
    if h.ndim != 2 or h.size == 0:
        raise InputError("frfs must be a non-empty N x F matrix")
    if not np.all(np.isfinite(h)) or np.any(h < 0):
        raise InputError("FRF magnitudes must be finite and non-negative")
    rms_row = np.sqrt(np.mean(h**2, axis=1, keepdims=True))
    rms_ref = np.sqrt(np.mean(h**2))
    return h / (cfg.mix * rms_row + (1.0 - cfg.mix) * rms_ref + cfg.epsilon)


def _leading_direction(x):
    return fit_pca(x, 1).basis[:, 0]


def mix_stability(frfs_source, rng: np.random.Generator, grid=MIX_GRID, n_boot=N_BOOTSTRAP):
    """Mean |cosine| between bootstrap and full-data leading PCA directions, per mix."""
    h = np.asarray(frfs_source, dtype=float)
    n = h.shape[0]
    if n < 10:
        raise InputError(f"need at least 10 source FRFs, got {n}")
    # same resamples for every grid point so the scan is comparable
    idx = rng.integers(0, n, size=(n_boot, n))
    scores = np.empty(len(grid))
    for g, mix in enumerate(grid):
        hn = wrms_normalise(WrmsConfig(mix=float(mix)), h)
        ref = _leading_direction(hn)
        cos = [abs(_leading_direction(hn[rows]) @ ref) for rows in idx]
        scores[g] = float(np.mean(cos))
    return scores


def select_mix(frfs_source, threshold: float = 0.95, rng: np.random.Generator | None = None,
               seed: int = 0) -> float:
    """Smallest mix on the 0.01 grid whose leading direction is bootstrap-stable."""
    if rng is None:
        rng = np.random.default_rng(seed)
    scores = mix_stability(frfs_source, rng)
    ok = np.flatnonzero(scores >= threshold)
    if ok.size == 0:
        raise SelectionFailureError(float(scores.max()), threshold)
    return float(MIX_GRID[ok[0]])


# -- chain diagnostics ------------------------------------------------------


def alignment_curve(chain_data, d: int = 1):
    """Leading-direction cosines along a chain.

    Returns ``(local, drift)``, one entry per hop.  ``local[h]`` compares the
    hop's source with its target; ``drift[h]`` compares the hop's target with
    the original source, so the last entry is the final target and the
    first entry coincides with ``local[0]``.
    """
    if len(chain_data) < 2:
        raise InputError("need at least two domains")
    subs = [fit_pca(x, d) for x in chain_data]
    local = np.array([leading_cosine(subs[h], subs[h + 1]) for h in range(len(subs) - 1)])
    drift = np.array([leading_cosine(subs[0], subs[h + 1]) for h in range(len(subs) - 1)])
    return local, drift


@dataclass(frozen=True)
class PathLengthReport:
    hop_distances: np.ndarray
    total: float
    direct: float

    @property
    def triangle_ok(self) -> bool:
        return self.total >= self.direct - 1e-9 * max(self.total, 1.0)


def _psd_sqrt(c):
    w, u = np.linalg.eigh(c)
    return (u * np.sqrt(np.clip(w, 0.0, None))) @ u.T


def _check_cov(c, name):
    c = np.asarray(c, dtype=float)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise DimensionError(f"{name} must be square")
    scale = max(1.0, float(np.max(np.abs(c))) if c.size else 1.0)
    if np.max(np.abs(c - c.T)) > 1e-9 * scale:
        raise InputError(f"{name} is not symmetric")
    w = np.linalg.eigvalsh(c)
    if w.min() < -1e-9 * max(1.0, w.max()):
        raise InputError(f"{name} is indefinite (min eigenvalue {w.min():.3e})")
    return 0.5 * (c + c.T)


def gaussian_w2(mu1, cov1, mu2, cov2) -> float:
    """2-Wasserstein distance between two Gaussians."""
    mu1 = np.atleast_1d(np.asarray(mu1, dtype=float))
    mu2 = np.atleast_1d(np.asarray(mu2, dtype=float))
    c1 = _check_cov(np.atleast_2d(cov1), "cov1")
    c2 = _check_cov(np.atleast_2d(cov2), "cov2")
    if not (mu1.shape == mu2.shape and c1.shape == c2.shape == (mu1.size, mu1.size)):
        raise DimensionError("mean/covariance shapes do not agree")
    r2 = _psd_sqrt(c2)
    cross = _psd_sqrt(r2 @ c1 @ r2)
    w2 = float(np.sum((mu1 - mu2) ** 2) + np.trace(c1) + np.trace(c2) - 2.0 * np.trace(cross))
    return float(np.sqrt(max(w2, 0.0)))


def gaussian_fit(x):
    x = np.asarray(x, dtype=float)
    mu = x.mean(axis=0)
    cov = np.atleast_2d(np.cov(x, rowvar=False))
    D = cov.shape[0]
    # ridge keeps replicated-noise data away from numerical rank deficiency
    cov = cov + (1e-9 * np.trace(cov) / D) * np.eye(D)
    return mu, cov


def path_length(chain_data) -> PathLengthReport:
    if len(chain_data) < 2:
        raise InputError("need at least two domains")
    fits = [gaussian_fit(x) for x in chain_data]
    hops = np.array([gaussian_w2(*fits[h], *fits[h + 1]) for h in range(len(fits) - 1)])
    direct = gaussian_w2(*fits[0], *fits[-1])
    return PathLengthReport(hop_distances=hops, total=float(hops.sum()), direct=direct)
