"""Parametric beam structure families and synthetic SHM feature datasets.

Structures are Euler-Bernoulli beams (Hermite cubic elements, two DOFs per
node) resting on elastic supports.  A morph parameter ``alpha`` grows an
extra support out of nothing and slides it along the deck, which turns a
two-span bridge into a three-span one.  Damage is a local loss of bending
stiffness on the deck or a softened support.  Features are noisy natural
frequencies or FRF magnitudes, replicated per health class.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.linalg import cholesky, eigh, solve_triangular

from .errors import CoverageError, EmptyPatchError, ExcludedConfigurationError, InputError

CLASS_NAMES = ("healthy", "d1", "d2")

# Table-1 style defaults: 32 m steel deck, 7 m x 0.7 m section, concrete columns
DECK_LENGTH = 32.0
DECK_E = 2.0e11
DECK_RHO = 7850.0
DECK_WIDTH = 7.0
DECK_DEPTH = 0.7
COLUMN_E = 1.9e10
COLUMN_RHO = 2392.0
COLUMN_SECTION = (3.0, 1.0)  # width, thickness
COLUMN_HEIGHT = 5.0
GROUND_SPRING = 1.0e12


def rect_inertia(width, depth):
    return width * depth**3 / 12.0


def cut_section_inertia(width, depth, cut_width_frac, cut_depth_frac):
    """Second moment of area of a rectangle with a top corner notch removed.

    The notch spans ``cut_width_frac`` of the width and ``cut_depth_frac``
    of the depth from the top face; composite centroid by parallel axes.
    """
    cut_d = cut_depth_frac * depth
    lower_d = depth - cut_d
    parts = [  # (b, h, centroid height)
        (width, lower_d, lower_d / 2.0),
        ((1.0 - cut_width_frac) * width, cut_d, lower_d + cut_d / 2.0),
    ]
    area = sum(b * h for b, h, _ in parts)
    ybar = sum(b * h * y for b, h, y in parts) / area
    return sum(b * h**3 / 12.0 + b * h * (y - ybar) ** 2 for b, h, y in parts)


def default_ei_factor():
    """EI ratio for the 70 %-width, 40 %-depth deck notch."""
    return cut_section_inertia(DECK_WIDTH, DECK_DEPTH, 0.7, 0.4) / rect_inertia(DECK_WIDTH, DECK_DEPTH)


def column_axial_stiffness():
    """Column axial stiffness in series with its ground springs (N/m)."""
    a = COLUMN_SECTION[0] * COLUMN_SECTION[1]
    k_col = COLUMN_E * a / COLUMN_HEIGHT
    return 1.0 / (1.0 / k_col + 1.0 / GROUND_SPRING)


def column_mass():
    return COLUMN_RHO * COLUMN_SECTION[0] * COLUMN_SECTION[1] * COLUMN_HEIGHT


@dataclass(frozen=True)
class Support:
    position: float  # fraction of span
    stiffness: float  # N/m
    mass: float = 0.0  # kg


@dataclass(frozen=True)
class PointMass:
    position: float
    mass: float


@dataclass(frozen=True)
class StructureParams:
    deck_length: float = DECK_LENGTH
    deck_ei: float = DECK_E * rect_inertia(DECK_WIDTH, DECK_DEPTH)
    deck_rho_a: float = DECK_RHO * DECK_WIDTH * DECK_DEPTH
    n_elements: int = 100
    supports: tuple = ()
    boundary_springs: float = GROUND_SPRING
    point_masses: tuple = ()
    damping_ratio: float = 0.01
    ei_scale: tuple | None = None  # per-element EI multipliers, None = uniform

    def __post_init__(self):
        if self.n_elements < 10:
            raise InputError("n_elements must be >= 10")
        if not (self.deck_length > 0 and self.deck_ei > 0 and self.deck_rho_a > 0):
            raise InputError("deck length, EI and rho*A must be positive")
        if self.boundary_springs < 0 or not self.damping_ratio > 0:
            raise InputError("boundary springs must be >= 0 and damping ratio > 0")
        for s in self.supports:
            if not 0.0 <= s.position <= 1.0 or s.stiffness < 0 or s.mass < 0:
                raise InputError(f"invalid support {s}")
        for pm in self.point_masses:
            if not 0.0 <= pm.position <= 1.0 or pm.mass < 0:
                raise InputError(f"invalid point mass {pm}")
        if self.ei_scale is not None and len(self.ei_scale) != self.n_elements:
            raise InputError("ei_scale needs one entry per element")

    @property
    def n_dof(self) -> int:
        return 2 * (self.n_elements + 1)

    def element_ei(self) -> np.ndarray:
        ei = np.full(self.n_elements, self.deck_ei)
        if self.ei_scale is not None:
            ei = ei * np.asarray(self.ei_scale)
        return ei


def uniform_beam(n_elements=100, supports=(), boundary_springs=GROUND_SPRING, **kw) -> StructureParams:
    return StructureParams(n_elements=n_elements, supports=tuple(supports),
                           boundary_springs=boundary_springs, **kw)


def case1_base(n_elements=100) -> StructureParams:
    """Two-span bridge: deck on end springs plus a full column at midspan."""
    mid = Support(0.5, column_axial_stiffness(), column_mass())
    return StructureParams(n_elements=n_elements, supports=(mid,))


# -- finite elements ---------------------------------------------------------


def element_matrices(ei, rho_a, le):
    k = ei / le**3 * np.array([
        [12.0, 6 * le, -12.0, 6 * le],
        [6 * le, 4 * le**2, -6 * le, 2 * le**2],
        [-12.0, -6 * le, 12.0, -6 * le],
        [6 * le, 2 * le**2, -6 * le, 4 * le**2],
    ])
    m = rho_a * le / 420.0 * np.array([
        [156.0, 22 * le, 54.0, -13 * le],
        [22 * le, 4 * le**2, 13 * le, -3 * le**2],
        [54.0, 13 * le, 156.0, -22 * le],
        [-13 * le, -3 * le**2, -22 * le, 4 * le**2],
    ])
    return k, m


def _locate(params, position):
    """Element index, local DOF slice and Hermite displacement weights at ``position``."""
    le = params.deck_length / params.n_elements
    x = position * params.n_elements
    e = min(int(np.floor(x)), params.n_elements - 1)
    xi = x - e
    n = np.array([
        1 - 3 * xi**2 + 2 * xi**3,
        le * (xi - 2 * xi**2 + xi**3),
        3 * xi**2 - 2 * xi**3,
        le * (-(xi**2) + xi**3),
    ])
    # snap exact nodal hits so nodal loads land on a single diagonal entry
    n[np.abs(n) < 1e-14] = 0.0
    n[np.abs(n - 1.0) < 1e-14] = 1.0
    return e, slice(2 * e, 2 * e + 4), n


def assemble(params: StructureParams):
    """Global stiffness and mass matrices."""
    nd = params.n_dof
    le = params.deck_length / params.n_elements
    k = np.zeros((nd, nd))
    m = np.zeros((nd, nd))
    _, m_e = element_matrices(1.0, params.deck_rho_a, le)
    k_unit, _ = element_matrices(1.0, 1.0, le)
    for e, ei in enumerate(params.element_ei()):
        sl = slice(2 * e, 2 * e + 4)
        k[sl, sl] += ei * k_unit
        m[sl, sl] += m_e
    k[0, 0] += params.boundary_springs
    k[nd - 2, nd - 2] += params.boundary_springs
    # point attachments are spread with the cubic shape functions, so they
    # move continuously with position instead of jumping between nodes
    for s in params.supports:
        _, sl, n = _locate(params, s.position)
        k[sl, sl] += s.stiffness * np.outer(n, n)
        m[sl, sl] += s.mass * np.outer(n, n)
    for pm in params.point_masses:
        _, sl, n = _locate(params, pm.position)
        m[sl, sl] += pm.mass * np.outer(n, n)
    return k, m


def solve_modes(k_matrix, m_matrix, n_modes: int):
    """Natural frequencies (Hz, ascending) and mass-normalised mode shapes.

    Cholesky reduction M = L L^T turns K phi = w^2 M phi into the standard
    symmetric problem (L^-1 K L^-T) y = w^2 y.
    """
    k = np.asarray(k_matrix, dtype=float)
    m = np.asarray(m_matrix, dtype=float)
    nd = k.shape[0]
    if not 1 <= n_modes <= nd:
        raise InputError(f"n_modes={n_modes} outside [1, {nd}]")
    try:
        low = cholesky(m, lower=True)
    except np.linalg.LinAlgError as exc:
        raise InputError("mass matrix is not positive definite") from exc
    a = solve_triangular(low, k, lower=True)
    a = solve_triangular(low, a.T, lower=True)
    a = 0.5 * (a + a.T)
    w2, y = eigh(a, subset_by_index=[0, n_modes - 1])
    phi = solve_triangular(low.T, y, lower=False)
    freqs = np.sqrt(np.clip(w2, 0.0, None)) / (2.0 * np.pi)
    return freqs, phi


def shape_at(params, phi, position):
    """Interpolated transverse displacement of each mode at ``position``."""
    _, sl, n = _locate(params, position)
    return n @ phi[sl]


# -- morphing and damage -----------------------------------------------------


@dataclass(frozen=True)
class MorphSpec:
    moving_support_start: float = 0.5
    moving_support_end: float = 0.75
    full_stiffness: float = field(default_factory=column_axial_stiffness)
    full_mass: float = field(default_factory=column_mass)
    alpha_floor: float = 0.1


def morph(base: StructureParams, spec: MorphSpec, alpha: float) -> StructureParams:
    """Add the moving support for morph parameter ``alpha``.

    ``alpha == 0`` is the unmorphed source (the support carries no stiffness
    or mass).  Values strictly between 0 and ``alpha_floor`` put the
    support on top of the fixed one and are rejected.
    """
    if not 0.0 <= alpha <= 1.0:
        raise InputError(f"alpha={alpha} outside [0, 1]")
    if 0.0 < alpha < spec.alpha_floor:
        raise ExcludedConfigurationError(alpha, spec.alpha_floor)
    pos = spec.moving_support_start + alpha * (spec.moving_support_end - spec.moving_support_start)
    moving = Support(pos, alpha * spec.full_stiffness, alpha * spec.full_mass)
    return replace(base, supports=tuple(base.supports) + (moving,))


@dataclass(frozen=True)
class DamageSpec:
    kind: str = "deck_patch"  # or "support_cut"
    centre: float = 0.85
    extent: float = 0.05
    ei_factor: float = field(default_factory=default_ei_factor)
    support_index: int = 0
    stiffness_factor: float = 1.0

    def __post_init__(self):
        if self.kind not in ("deck_patch", "support_cut"):
            raise InputError(f"unknown damage kind {self.kind!r}")
        if self.kind == "deck_patch":
            if not 0.0 < self.ei_factor <= 1.0:
                raise InputError("ei_factor must lie in (0, 1]")
            lo, hi = self.centre - self.extent / 2, self.centre + self.extent / 2
            if self.extent <= 0 or lo < -1e-12 or hi > 1 + 1e-12:
                raise InputError("damage patch must lie within [0, 1]")
        elif not 0.0 < self.stiffness_factor <= 1.0:
            raise InputError("stiffness_factor must lie in (0, 1]")


def patch_elements(params: StructureParams, centre: float, extent: float) -> np.ndarray:
    n = params.n_elements
    centroids = (np.arange(n) + 0.5) / n
    tol = 1e-12
    return np.flatnonzero((centroids >= centre - extent / 2 - tol) & (centroids <= centre + extent / 2 + tol))


def apply_damage(params: StructureParams, d: DamageSpec) -> StructureParams:
    if d.kind == "deck_patch":
        idx = patch_elements(params, d.centre, d.extent)
        if idx.size == 0:
            raise EmptyPatchError(f"no element centroid inside patch {d.centre}+/-{d.extent / 2}")
        scale = np.ones(params.n_elements) if params.ei_scale is None else np.array(params.ei_scale)
        scale[idx] *= d.ei_factor
        return replace(params, ei_scale=tuple(scale.tolist()))
    supports = list(params.supports)
    if not 0 <= d.support_index < len(supports):
        raise InputError(f"support_index {d.support_index} out of range")
    s = supports[d.support_index]
    supports[d.support_index] = replace(s, stiffness=s.stiffness * d.stiffness_factor)
    return replace(params, supports=tuple(supports))


# -- datasets ------------------------------------------------------------------


@dataclass
class DomainDataset:
    features: np.ndarray
    labels: np.ndarray  # integer codes into CLASS_NAMES
    labelled_mask: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        self.labelled_mask = np.asarray(self.labelled_mask, dtype=bool)
        n = self.features.shape[0]
        if self.labels.shape != (n,) or self.labelled_mask.shape != (n,):
            raise InputError("labels and mask must have one entry per sample")
        if not np.all(np.isfinite(self.features)):
            raise InputError("features must be finite")

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


def natural_frequencies(params: StructureParams, n_modes: int) -> np.ndarray:
    k, m = assemble(params)
    return solve_modes(k, m, n_modes)[0]


def replicate_with_noise(clean, n_reps, noise_frac, rng):
    clean = np.asarray(clean, dtype=float)
    if noise_frac < 0:
        raise InputError("noise_frac must be >= 0")
    noise = rng.standard_normal((n_reps, clean.size)) * (noise_frac * clean)
    return clean[None, :] + noise


def frequency_features(params: StructureParams, n_modes: int, n_reps: int, noise_frac: float,
                       seed, label: int = 0) -> DomainDataset:
    """One class of noisy natural-frequency samples."""
    if n_modes < 1:
        raise InputError("n_modes must be >= 1")
    clean = natural_frequencies(params, n_modes)
    rng = np.random.default_rng(seed)
    x = replicate_with_noise(clean, n_reps, noise_frac, rng)
    return DomainDataset(x, np.full(n_reps, label), np.zeros(n_reps, bool),
                         {"feature_kind": "frequency"})


def receptance(params: StructureParams, sensor: float, drive: float, freqs_hz, f_max=None):
    """Complex receptance between two deck positions by modal superposition.

    Uses every mode up to ``f_max`` (default twice the top of ``freqs_hz``).
    """
    freqs_hz = np.asarray(freqs_hz, dtype=float)
    f_max = 2.0 * freqs_hz.max() if f_max is None else f_max
    k, m = assemble(params)
    fn, phi = solve_modes(k, m, params.n_dof)
    if fn[-1] < f_max:
        raise CoverageError(
            f"modes reach {fn[-1]:.3g} Hz but the band needs coverage to {f_max:.3g} Hz"
        )
    keep = fn <= f_max
    wr = 2 * np.pi * fn[keep]
    a = shape_at(params, phi[:, keep], sensor) * shape_at(params, phi[:, keep], drive)
    w = 2 * np.pi * freqs_hz[:, None]
    z = params.damping_ratio
    return np.sum(a / (wr**2 - w**2 + 2j * z * wr * w), axis=1)


def noisy_magnitudes(clean_complex, n_reps, snr_db, rng):
    """Add complex Gaussian noise at the requested SNR, then take magnitudes."""
    h = np.asarray(clean_complex)
    sigma = np.sqrt(np.mean(np.abs(h) ** 2) / 10 ** (snr_db / 10.0))
    noise = (rng.standard_normal((n_reps, h.size)) + 1j * rng.standard_normal((n_reps, h.size)))
    return np.abs(h[None, :] + noise * (sigma / np.sqrt(2.0)))


def frf_features(params: StructureParams, sensors: Sequence[float], drive: float, band, n_points: int,
                 n_reps: int, noise_snr_db: float, seed, label: int = 0) -> list:
    """Noisy FRF-magnitude datasets, one per sensor."""
    if n_points < 8:
        raise InputError("n_points must be >= 8")
    f_lo, f_hi = band
    grid = np.linspace(f_lo, f_hi, n_points)
    ss = np.random.SeedSequence(seed) if not isinstance(seed, np.random.SeedSequence) else seed
    out = []
    for s_idx, (sensor, child) in enumerate(zip(sensors, ss.spawn(len(sensors)))):
        h = receptance(params, sensor, drive, grid)
        x = noisy_magnitudes(h, n_reps, noise_snr_db, np.random.default_rng(child))
        out.append(DomainDataset(x, np.full(n_reps, label), np.zeros(n_reps, bool),
                                 {"feature_kind": "frf", "sensor": s_idx}))
    return out


# -- chains of structures ------------------------------------------------------

MASK_STREAM = 99


@dataclass(frozen=True)
class FeatureConfig:
    kind: str = "frequency"  # or "frf"
    n_modes: int = 15
    n_reps: int = 100
    noise_frac: float = 0.008
    labelled_fraction: float = 0.2
    sensors: tuple = (0.15, 0.35, 0.65, 0.9)
    drive: float = 0.3
    band: tuple = (1.0, 60.0)
    n_points: int = 64
    snr_db: float = 35.0

    def __post_init__(self):
        if self.kind not in ("frequency", "frf"):
            raise InputError(f"unknown feature kind {self.kind!r}")
        if self.n_reps < 2 or not 0.0 <= self.labelled_fraction <= 1.0:
            raise InputError("need n_reps >= 2 and labelled_fraction in [0, 1]")


@dataclass(frozen=True)
class StructureRecord:
    """Clean (noise-free) features of one structure, per class and sensor."""

    index: int
    alpha: float
    clean: dict  # class code -> array (n_sensors, F); complex for FRF features


def clean_record(index, alpha, params, damage_specs, cfg: FeatureConfig) -> StructureRecord:
    variants = [params] + [apply_damage(params, d) for d in damage_specs]
    clean = {}
    for code, p in enumerate(variants):
        if cfg.kind == "frequency":
            clean[code] = natural_frequencies(p, cfg.n_modes)[None, :]
        else:
            if cfg.n_points < 8:
                raise InputError("n_points must be >= 8")
            grid = np.linspace(cfg.band[0], cfg.band[1], cfg.n_points)
            clean[code] = np.array([receptance(p, s, cfg.drive, grid) for s in cfg.sensors])
    return StructureRecord(index=index, alpha=float(alpha), clean=clean)


def _seq(seed, *key):
    base = list(seed) if isinstance(seed, (tuple, list)) else [int(seed)]
    return np.random.SeedSequence([int(v) for v in base] + [int(k) for k in key])


@dataclass(frozen=True)
class ChainFamily:
    """Clean features for an ordered family of structures plus the noise recipe.

    ``realise(seed)`` draws one Monte-Carlo realisation: fresh noise for
    every (structure, class) and a fresh labelled-healthy subset for every
    structure except the source, which is fully labelled.
    """

    records: tuple
    features: FeatureConfig

    @property
    def indices(self):
        return [r.index for r in self.records]

    @property
    def source_index(self):
        return self.records[0].index

    @property
    def n_sensors(self):
        return next(iter(self.records[0].clean.values())).shape[0]

    def record(self, index) -> StructureRecord:
        for r in self.records:
            if r.index == index:
                return r
        raise InputError(f"no structure with index {index}")

    def realise_structure(self, index, seed) -> list:
        rec = self.record(index)
        cfg = self.features
        per_sensor = [[] for _ in range(self.n_sensors)]
        labels = []
        for code in sorted(rec.clean):
            rng = np.random.default_rng(_seq(seed, index, code))
            for s, clean in enumerate(rec.clean[code]):
                if cfg.kind == "frequency":
                    x = replicate_with_noise(clean, cfg.n_reps, cfg.noise_frac, rng)
                else:
                    x = noisy_magnitudes(clean, cfg.n_reps, cfg.snr_db, rng)
                per_sensor[s].append(x)
            labels.append(np.full(cfg.n_reps, code))
        labels = np.concatenate(labels)
        mask = np.zeros(labels.size, bool)
        if index == self.source_index:
            mask[:] = True
        else:
            healthy = np.flatnonzero(labels == 0)
            n_lab = int(round(cfg.labelled_fraction * healthy.size))
            rng = np.random.default_rng(_seq(seed, index, MASK_STREAM))
            mask[np.sort(rng.choice(healthy, n_lab, replace=False))] = True
        return [
            DomainDataset(np.vstack(parts), labels.copy(), mask.copy(),
                          {"structure_index": index, "feature_kind": cfg.kind, "sensor": s})
            for s, parts in enumerate(per_sensor)
        ]

    def realise(self, seed, indices=None) -> dict:
        """Map structure index -> list of per-sensor datasets."""
        indices = self.indices if indices is None else indices
        return {i: self.realise_structure(i, seed) for i in indices}


def chain_family(base: StructureParams, spec: MorphSpec, damage_specs, alphas,
                 cfg: FeatureConfig) -> ChainFamily:
    alphas = [float(a) for a in alphas]
    if any(b <= a for a, b in zip(alphas, alphas[1:])):
        raise InputError("alphas must be strictly ascending")
    records = tuple(
        clean_record(i + 1, a, morph(base, spec, a), damage_specs, cfg)
        for i, a in enumerate(alphas)
    )
    return ChainFamily(records=records, features=cfg)


def build_chain(base, spec, damage_specs, alphas, cfg: FeatureConfig, seed) -> list:
    """Noisy datasets for every structure; index 1 is the source, the last the target."""
    fam = chain_family(base, spec, damage_specs, alphas, cfg)
    out = fam.realise(seed)
    return [out[i] for i in fam.indices]


def default_alphas(n_intermediate=16, floor=0.1, top=0.95):
    """Source, ``n_intermediate`` evenly spaced interior values, target."""
    return [0.0] + [float(a) for a in np.linspace(floor, top, n_intermediate)] + [1.0]
