"""Run configuration: one YAML document validated before any computation."""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path
from typing import Literal, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .chain import ChainSpec, VarianceRule
from .errors import ConfigError, ExcludedConfigurationError
from . import structfam as sf


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SupportCfg(_Strict):
    position: float = Field(ge=0.0, le=1.0)
    stiffness: float = Field(ge=0.0)
    mass: float = Field(default=0.0, ge=0.0)


class PointMassCfg(_Strict):
    position: float = Field(ge=0.0, le=1.0)
    mass: float = Field(ge=0.0)


class StructureCfg(_Strict):
    deck_length: float = Field(default=sf.DECK_LENGTH, gt=0)
    deck_ei: float = Field(default=sf.DECK_E * sf.rect_inertia(sf.DECK_WIDTH, sf.DECK_DEPTH), gt=0)
    deck_rho_a: float = Field(default=sf.DECK_RHO * sf.DECK_WIDTH * sf.DECK_DEPTH, gt=0)
    n_elements: int = Field(default=100, ge=10)
    boundary_springs: float = Field(default=sf.GROUND_SPRING, ge=0)
    damping_ratio: float = Field(default=0.01, gt=0)
    supports: list[SupportCfg] | None = None  # None: midspan column
    point_masses: list[PointMassCfg] = []

    def params(self) -> sf.StructureParams:
        if self.supports is None:
            supports = (sf.Support(0.5, sf.column_axial_stiffness(), sf.column_mass()),)
        else:
            supports = tuple(sf.Support(s.position, s.stiffness, s.mass) for s in self.supports)
        return sf.StructureParams(
            deck_length=self.deck_length, deck_ei=self.deck_ei, deck_rho_a=self.deck_rho_a,
            n_elements=self.n_elements, supports=supports, boundary_springs=self.boundary_springs,
            point_masses=tuple(sf.PointMass(p.position, p.mass) for p in self.point_masses),
            damping_ratio=self.damping_ratio,
        )


class MorphCfg(_Strict):
    start: float = Field(default=0.5, ge=0.0, le=1.0)
    end: float = Field(default=0.75, ge=0.0, le=1.0)
    full_stiffness: float = Field(default_factory=sf.column_axial_stiffness, ge=0)
    full_mass: float = Field(default_factory=sf.column_mass, ge=0)
    alpha_floor: float = Field(default=0.1, ge=0.0, lt=1.0)
    n_intermediates: int = Field(default=16, ge=0)
    alphas: list[float] | None = None

    def spec(self) -> sf.MorphSpec:
        return sf.MorphSpec(self.start, self.end, self.full_stiffness, self.full_mass, self.alpha_floor)

    def alpha_list(self) -> list:
        if self.alphas is not None:
            return list(self.alphas)
        return sf.default_alphas(self.n_intermediates, self.alpha_floor)

    @model_validator(mode="after")
    def _check_alphas(self):
        alphas = self.alpha_list()
        if len(alphas) < 2:
            raise ValueError("morph needs at least a source and a target alpha")
        for a in alphas:
            if not 0.0 <= a <= 1.0:
                raise ValueError(f"alpha={a} outside [0, 1]")
            if 0.0 < a < self.alpha_floor:
                raise ValueError(str(ExcludedConfigurationError(a, self.alpha_floor)))
        if any(b <= a for a, b in zip(alphas, alphas[1:])):
            raise ValueError("alphas must be strictly ascending")
        return self


class DamageCfg(_Strict):
    kind: Literal["deck_patch", "support_cut"] = "deck_patch"
    centre: float = 0.85
    extent: float = 0.05
    ei_factor: float = Field(default_factory=sf.default_ei_factor, gt=0, le=1)
    support_index: int = 0
    stiffness_factor: float = Field(default=1.0, gt=0, le=1)

    def spec(self) -> sf.DamageSpec:
        return sf.DamageSpec(self.kind, self.centre, self.extent, self.ei_factor,
                             self.support_index, self.stiffness_factor)

    @model_validator(mode="after")
    def _check(self):
        self.spec()
        return self


class FeatureCfg(_Strict):
    kind: Literal["frequency", "frf"] = "frequency"
    n_modes: int = Field(default=15, ge=1)
    n_reps: int = Field(default=100, ge=2)
    noise_frac: float = Field(default=0.008, ge=0)
    labelled_fraction: float = Field(default=0.2, ge=0, le=1)
    sensors: list[float] = [0.15, 0.35, 0.65, 0.9]
    drive: float = Field(default=0.3, ge=0, le=1)
    band: tuple[float, float] = (1.0, 60.0)
    n_points: int = Field(default=64, ge=8)
    snr_db: float = 35.0

    def config(self) -> sf.FeatureConfig:
        return sf.FeatureConfig(self.kind, self.n_modes, self.n_reps, self.noise_frac,
                                self.labelled_fraction, tuple(self.sensors), self.drive,
                                tuple(self.band), self.n_points, self.snr_db)

    @property
    def n_features(self) -> int:
        return self.n_modes if self.kind == "frequency" else self.n_points


class VarianceCfg(_Strict):
    variance_threshold: float = Field(default=0.95, gt=0, le=1)
    cap: int = Field(default=30, ge=1)


class ChainCfg(_Strict):
    methods: list[Literal["linear", "gfk"]] = ["linear", "gfk"]
    subspace_dim: Union[int, VarianceCfg] = 5
    aligner: Literal["nca", "wrms", "none"] = "nca"
    svm_c: float = Field(default=1.0, gt=0)
    wrms_mix: float = Field(default=0.53, ge=0, le=1)
    margin_threshold: float | None = None
    chains: list[Union[Literal["direct", "all"], list[int]]] = ["direct", "all"]

    @field_validator("subspace_dim")
    @classmethod
    def _positive(cls, v):
        if isinstance(v, int) and v < 1:
            raise ValueError("subspace_dim must be >= 1")
        return v


class SearchCfg(_Strict):
    k_values: list[int] = [0, 1, 2, 3, 4]
    n_chains: int = Field(default=60, ge=1)
    n_realisations: int = Field(default=100, ge=1)


class HarnessCfg(_Strict):
    n_realisations: int | None = Field(default=100, ge=1)
    sem_target: float | None = Field(default=None, gt=0)
    min_realisations: int = Field(default=25, ge=2)
    max_realisations: int = Field(default=1000, ge=2)
    batch: int = Field(default=25, ge=1)

    @model_validator(mode="after")
    def _one_rule(self):
        if (self.n_realisations is None) == (self.sem_target is None):
            raise ValueError("set exactly one of n_realisations or sem_target (the other to null)")
        if self.max_realisations < self.min_realisations:
            raise ValueError("max_realisations must be >= min_realisations")
        return self


class RunConfig(_Strict):
    seed: int = Field(default=0, ge=0, lt=2**64)
    output: str = "out"
    jobs: int | None = Field(default=None, ge=1)
    structure: StructureCfg = StructureCfg()
    morph: MorphCfg = MorphCfg()
    damage: list[DamageCfg] = [DamageCfg()]
    features: FeatureCfg = FeatureCfg()
    chain: ChainCfg = ChainCfg()
    search: SearchCfg = SearchCfg()
    harness: HarnessCfg = HarnessCfg()

    @model_validator(mode="after")
    def _cross_checks(self):
        n = len(self.morph.alpha_list())
        for c in self.chain.chains:
            if isinstance(c, list) and (len(c) < 2 or c[0] != 1 or c[-1] != n
                                        or any(b <= a for a, b in zip(c, c[1:]))):
                raise ValueError(f"chain {c} must ascend strictly from 1 to {n}")
        return self

    def check_search(self):
        pool = len(self.morph.alpha_list()) - 2
        for k in self.search.k_values:
            if not 0 <= k <= pool:
                raise ConfigError(f"search.k_values: k={k} outside [0, {pool}]")

    # -- derived objects ---------------------------------------------------------

    def alphas(self) -> list:
        alphas = self.morph.alpha_list()
        floor = self.morph.alpha_floor
        for a in alphas:
            if 0.0 < a < floor:
                raise ExcludedConfigurationError(a, floor)
        return alphas

    def family(self) -> sf.ChainFamily:
        return sf.chain_family(self.structure.params(), self.morph.spec(),
                               [d.spec() for d in self.damage], self.alphas(),
                               self.features.config())

    def chain_indices(self) -> list:
        n = len(self.morph.alpha_list())
        out = []
        for c in self.chain.chains:
            if c == "direct":
                out.append((1, n))
            elif c == "all":
                out.append(tuple(range(1, n + 1)))
            else:
                out.append(tuple(c))
        return out

    def chain_spec(self, indices, method) -> ChainSpec:
        d = self.chain.subspace_dim
        dim = d if isinstance(d, int) else VarianceRule(d.variance_threshold, d.cap)
        return ChainSpec(tuple(indices), method, dim, self.chain.aligner,
                         self.features.labelled_fraction, self.chain.svm_c,
                         self.chain.wrms_mix, self.chain.margin_threshold)

    def generation_digest(self) -> str:
        """Hash of every block that shapes the generated datasets."""
        doc = self.model_dump(include={"seed", "structure", "morph", "damage", "features"}, mode="json")
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


# -- loading ----------------------------------------------------------------------


def _node_at(node, loc):
    """Deepest YAML node along ``loc``; falls back to the nearest ancestor."""
    for key in loc:
        if isinstance(node, yaml.MappingNode):
            nxt = None
            for k, v in node.value:
                if k.value == str(key):
                    nxt = v
                    break
            if nxt is None:
                return node, False
            node = nxt
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
        else:
            return node, False
    return node, True


def _key_node(root, loc):
    """Node of the mapping key named by the last element of ``loc``, if present."""
    parent, ok = _node_at(root, loc[:-1])
    if ok and isinstance(parent, yaml.MappingNode):
        for k, _ in parent.value:
            if k.value == str(loc[-1]):
                return k
    return None


def _set_path(doc, path, value):
    keys = path.split(".")
    cur = doc
    for k in keys[:-1]:
        if isinstance(cur, list):
            k = int(k)
            cur = cur[k]
            continue
        if k not in cur or cur[k] is None:
            cur[k] = {}
        cur = cur[k]
    last = keys[-1]
    if isinstance(cur, list):
        cur[int(last)] = value
    else:
        cur[last] = value


def parse_overrides(items) -> list:
    out = []
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"--set {item!r}: expected key=value")
        key, raw = item.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"--set {item!r}: empty key")
        try:
            value = yaml.safe_load(raw) if raw.strip() else None
        except yaml.YAMLError as exc:
            raise ConfigError(f"--set {key}: cannot parse value {raw!r} ({exc})") from exc
        out.append((key, value))
    return out


def load_config(path=None, overrides=(), text: str | None = None) -> RunConfig:
    """Load, override and validate; errors carry file:line positions."""
    label = "<config>"
    if text is None and path is not None:
        label = str(path)
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"{label}: cannot read config ({exc.strerror})") from exc
    text = text or ""
    try:
        root = yaml.compose(text)
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{label}:{mark.line + 1}" if mark else label
        raise ConfigError(f"{where}: YAML syntax error: {getattr(exc, 'problem', exc)}") from exc
    doc = {} if doc is None else doc
    if not isinstance(doc, dict):
        raise ConfigError(f"{label}:1: top level must be a mapping")
    doc = copy.deepcopy(doc)
    set_keys = {}
    for key, value in overrides:
        try:
            _set_path(doc, key, value)
        except (KeyError, IndexError, ValueError, TypeError) as exc:
            raise ConfigError(f"--set {key}: no such location ({exc})") from exc
        set_keys[tuple(key.split("."))] = key
    try:
        return RunConfig.model_validate(doc)
    except ValidationError as exc:
        lines = []
        for err in exc.errors():
            loc = _clean_loc(doc, err["loc"], err["type"] == "extra_forbidden")
            lines.append(_describe(root, label, loc, err, set_keys))
        raise ConfigError("\n".join(dict.fromkeys(lines))) from None
    except ValueError as exc:
        raise ConfigError(f"{label}: {exc}") from None


def _clean_loc(doc, loc, extra):
    """Drop the union-member tags pydantic inserts into error locations."""
    out = []
    cur = doc
    for n, p in enumerate(loc):
        if isinstance(cur, dict) and p in cur:
            cur = cur[p]
        elif isinstance(cur, list) and isinstance(p, int) and p < len(cur):
            cur = cur[p]
        elif extra and n == len(loc) - 1:
            pass
        else:
            continue
        out.append(p)
    return tuple(out)


def _describe(root, label, loc, err, set_keys):
    dotted = ".".join(str(p) for p in loc) or "(top level)"
    msg = err["msg"]
    if err["type"] == "extra_forbidden":
        msg = f"unknown key '{loc[-1]}'"
    for n in range(len(loc), 0, -1):
        if tuple(str(p) for p in loc[:n]) in set_keys:
            return f"--set {set_keys[tuple(str(p) for p in loc[:n])]}: {dotted}: {msg}"
    where = label
    if root is not None and loc:
        node = _key_node(root, loc) if err["type"] == "extra_forbidden" else None
        if node is None:
            node, _ = _node_at(root, loc)
        where = f"{label}:{node.start_mark.line + 1}"
    elif root is not None:
        where = f"{label}:1"
    return f"{where}: {dotted}: {msg}"
