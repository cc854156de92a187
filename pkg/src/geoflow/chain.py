"""Sequential transfer along a chain of structures.

Datasets are normalised once per realisation (see :func:`align_domain`)
before any hop runs.  A hop projects source and target into a common
space (source PCA for the linear method, the geodesic flow kernel
embedding for ``gfk``), trains a linear SVM on the source labels and
pseudo-labels the target.  The pseudo-labelled target then becomes the
next hop's source.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .align import WrmsConfig, nca_apply, nca_fit, wrms_normalise
from .classify import svm_predict, svm_train
from .errors import DimensionError, InputError
from .gfk import build_kernel, embed
from .structfam import DomainDataset
from .subspace import explained_variance_dim, fit_pca, leading_cosine

SEARCH_CAVEAT = (
    "label-informed chain selection: target labels were used to rank chains, "
    "so this search is not intended as deployable in practice"
)


@dataclass(frozen=True)
class VarianceRule:
    threshold: float = 0.95
    cap: int = 30

    def __post_init__(self):
        if not 0.0 < self.threshold <= 1.0 or self.cap < 1:
            raise InputError("variance threshold must lie in (0, 1] and cap >= 1")


@dataclass(frozen=True)
class ChainSpec:
    structure_indices: tuple
    method: str = "gfk"
    subspace_dim: int | VarianceRule = 5
    aligner: str = "nca"
    labelled_healthy_fraction: float = 0.2
    svm_c: float = 1.0
    wrms_mix: float = 0.53
    margin_threshold: float | None = None  # off: every prediction is propagated

    def __post_init__(self):
        idx = tuple(int(i) for i in self.structure_indices)
        object.__setattr__(self, "structure_indices", idx)
        if len(idx) < 2:
            raise InputError("a chain needs a source and a target")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise InputError(f"structure indices must be strictly ascending: {list(idx)}")
        if self.method not in ("linear", "gfk"):
            raise InputError(f"unknown method {self.method!r} (expected 'linear' or 'gfk')")
        if self.aligner not in ("nca", "wrms", "none"):
            raise InputError(f"unknown aligner {self.aligner!r}")
        if isinstance(self.subspace_dim, int) and self.subspace_dim < 1:
            raise InputError("subspace_dim must be >= 1")
        if not self.svm_c > 0:
            raise InputError("svm_c must be positive")

    @property
    def k(self) -> int:
        return len(self.structure_indices) - 2

    @property
    def notation(self) -> str:
        return chain_notation(self.structure_indices)


def chain_notation(indices) -> str:
    return "[" + " ".join(str(int(i)) for i in indices) + "]"


@dataclass(frozen=True)
class HopRecord:
    source_index: int
    target_index: int
    cosine_to_target: float
    cosine_to_origin: float
    pseudo_label_counts: tuple
    classifier_collapsed: bool


@dataclass
class ChainResult:
    final_accuracy: float
    confusion: np.ndarray
    hops: list
    realisation_seed: tuple = ()
    n_unlabelled: int = 0


# -- preprocessing ---------------------------------------------------------------


def align_domain(ds: DomainDataset, spec: ChainSpec) -> DomainDataset:
    """Normalise one domain with the chain's aligner."""
    if spec.aligner == "none":
        x = ds.features
    elif spec.aligner == "nca":
        healthy = ds.labelled_mask & (ds.labels == 0)
        x = nca_apply(nca_fit(ds.features[healthy]), ds.features)
    else:
        x = wrms_normalise(WrmsConfig(mix=spec.wrms_mix), ds.features)
    return replace(ds, features=x)


def resolve_dim(spec: ChainSpec, source: DomainDataset) -> int:
    """Subspace dimension: explicit d, else variance rule then cap; d <= D/2 for gfk last."""
    D = source.dim
    if isinstance(spec.subspace_dim, VarianceRule):
        healthy = source.features[source.labels == 0]
        d = explained_variance_dim(healthy, spec.subspace_dim.threshold, spec.subspace_dim.cap)
    else:
        d = int(spec.subspace_dim)
    if spec.method == "gfk":
        d = min(d, D // 2)
    if d < 1:
        raise DimensionError(f"no admissible subspace dimension for D={D}")
    return d


# -- one hop -----------------------------------------------------------------------


def _project(spec, d, xs, xt):
    if spec.method == "linear":
        basis = fit_pca(xs, d).basis
        mu = xs.mean(axis=0)
        return (xs - mu) @ basis, (xt - mu) @ basis
    k = build_kernel(fit_pca(xs, d), fit_pca(xt, d))
    return embed(k, xs), embed(k, xt)


def run_hop(source: DomainDataset, target: DomainDataset, spec: ChainSpec, d: int,
            train_mask=None, n_classes: int | None = None):
    """Transfer labels from ``source`` to ``target``.

    ``source.labels`` are the (pseudo-)labels to train on.  Only the
    labelled entries of ``target.labels`` are read; they are kept as fixed
    labels.  Returns ``(predicted, margins, record)``.
    """
    if source.dim != target.dim:
        raise DimensionError(f"feature dimensions differ: {source.dim} vs {target.dim}")
    if n_classes is None:
        n_classes = int(max(source.labels.max(), target.labels.max())) + 1
    train = np.ones(source.n_samples, bool) if train_mask is None else np.asarray(train_mask, bool)
    ys = source.labels[train]
    xs_all, xt = _project(spec, d, source.features, target.features)
    classes = np.unique(ys)
    if classes.size < 2:
        # constant fallback: keep the chain running, flag it
        values, counts = np.unique(source.labels, return_counts=True)
        pred = np.full(target.n_samples, values[np.argmax(counts)])
        margins = np.zeros(target.n_samples)
    else:
        model = svm_train(xs_all[train], ys, c=spec.svm_c)
        pred, margins = svm_predict(model, xt)
        pred = np.asarray(pred, dtype=int)
        if margins.ndim == 2:
            top2 = np.sort(margins, axis=1)[:, -2:]
            margins = top2[:, 1] - top2[:, 0]
        else:
            margins = np.abs(margins)
    pred = np.where(target.labelled_mask, target.labels, pred)
    unl = ~target.labelled_mask
    collapsed = bool(unl.any() and np.unique(pred[unl]).size == 1)
    lead_s = fit_pca(source.features, 1)
    lead_t = fit_pca(target.features, 1)
    rec = HopRecord(
        source_index=int(source.meta.get("structure_index", -1)),
        target_index=int(target.meta.get("structure_index", -1)),
        cosine_to_target=leading_cosine(lead_s, lead_t),
        cosine_to_origin=float("nan"),
        pseudo_label_counts=tuple(int(c) for c in np.bincount(pred, minlength=n_classes)),
        classifier_collapsed=collapsed,
    )
    return pred, margins, rec


# -- a whole chain -------------------------------------------------------------------


def score(truth, pred, labelled_mask, n_classes: int):
    """Accuracy, confusion counts and count over the unlabelled samples only."""
    unl = ~np.asarray(labelled_mask, bool)
    confusion = np.zeros((n_classes, n_classes), dtype=int)
    np.add.at(confusion, (np.asarray(truth)[unl], np.asarray(pred)[unl]), 1)
    n_unl = int(unl.sum())
    acc = float(np.trace(confusion) / n_unl) if n_unl else float("nan")
    return acc, confusion, n_unl


def propagate(chain_data, spec: ChainSpec, realisation_seed=(), aligned: bool = False) -> ChainResult:
    """Run every hop of the chain and score the final target.

    ``chain_data`` lists one dataset per entry of ``spec.structure_indices``;
    the first must be fully labelled.  With ``aligned=True`` the datasets
    are taken as already normalised.
    """
    if len(chain_data) != len(spec.structure_indices):
        raise InputError("chain_data must hold one dataset per structure index")
    if not np.all(chain_data[0].labelled_mask):
        raise InputError("the source dataset must be fully labelled")
    doms = list(chain_data) if aligned else [align_domain(ds, spec) for ds in chain_data]
    n_classes = int(max(ds.labels.max() for ds in doms)) + 1
    d = resolve_dim(spec, doms[0])
    origin = fit_pca(doms[0].features, 1)
    current = doms[0]
    train_mask = None
    hops = []
    for target in doms[1:]:
        pred, margins, rec = run_hop(current, target, spec, d, train_mask, n_classes)
        rec = replace(rec, cosine_to_origin=leading_cosine(origin, fit_pca(target.features, 1)))
        hops.append(rec)
        if np.any(pred[target.labelled_mask] != target.labels[target.labelled_mask]):
            raise AssertionError("labelled-healthy samples were relabelled")
        if spec.margin_threshold is None:
            train_mask = None
        else:
            train_mask = target.labelled_mask | (margins >= spec.margin_threshold)
        current = replace(target, labels=pred, labelled_mask=target.labelled_mask.copy())
    acc, confusion, n_unl = score(chain_data[-1].labels, current.labels, chain_data[-1].labelled_mask,
                                  n_classes)
    return ChainResult(final_accuracy=acc, confusion=confusion, hops=hops,
                       realisation_seed=tuple(realisation_seed), n_unlabelled=n_unl)


# -- chain enumeration and search ------------------------------------------------------


def enumerate_chains(pool, k: int, n_chains: int, seed, source: int | None = None,
                     target: int | None = None) -> list:
    """Distinct sorted k-subsets of ``pool`` framed by source and target.

    When every subset fits within ``n_chains`` all of them are returned in
    lexicographic order; otherwise ``n_chains`` distinct subsets are drawn
    uniformly and returned sorted.
    """
    pool = sorted(int(p) for p in pool)
    if len(set(pool)) != len(pool):
        raise InputError("intermediate pool contains duplicates")
    if not 0 <= k <= len(pool):
        raise InputError(f"k={k} outside [0, {len(pool)}]")
    if n_chains < 1:
        raise InputError("n_chains must be >= 1")
    head = [] if source is None else [int(source)]
    tail = [] if target is None else [int(target)]
    if math.comb(len(pool), k) <= n_chains:
        subsets = [tuple(c) for c in itertools.combinations(pool, k)]
    else:
        rng = np.random.default_rng(seed)
        seen = set()
        while len(seen) < n_chains:
            seen.add(tuple(sorted(int(v) for v in rng.choice(pool, k, replace=False))))
        subsets = sorted(seen)
    return [tuple(head + list(s) + tail) for s in subsets]


@dataclass
class ChainScore:
    indices: tuple
    accuracies: np.ndarray

    @property
    def mean(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def std(self) -> float:
        return float(np.std(self.accuracies, ddof=1)) if self.accuracies.size > 1 else 0.0


@dataclass
class SearchResult:
    k: int
    best: ChainScore
    candidates: list
    exhaustive: bool
    caveat: str = field(default=SEARCH_CAVEAT)


def best_chain(scores) -> ChainScore:
    """Highest mean accuracy; ties by smaller std, then lexicographic indices."""
    return min(scores, key=lambda s: (-s.mean, s.std, s.indices))


def search_chains(family, spec: ChainSpec, k_values, n_chains: int, n_realisations: int, seed,
                  stage: int = 0, jobs: int = 1) -> list:
    """Evaluate candidate chains for each k and keep the best.

    ``family`` provides ``indices`` (source first, target last) and
    ``realise(seed)``; one realisation is drawn per Monte-Carlo run and
    shared by every candidate (common random numbers), so candidates are
    ranked on identical noise.
    """
    from .harness import evaluate_chains  # local import: harness builds on this module

    idx = list(family.indices)
    src, tgt, pool = idx[0], idx[-1], idx[1:-1]
    per_k = {}
    for k in k_values:
        cands = enumerate_chains(pool, k, n_chains, seed=(seed, k), source=src, target=tgt)
        per_k[k] = (cands, math.comb(len(pool), k) <= n_chains)
    specs = [replace(spec, structure_indices=c) for cands, _ in per_k.values() for c in cands]
    results = evaluate_chains(family, specs, range(n_realisations), seed, stage, jobs)
    out = []
    pos = 0
    for k in k_values:
        cands, exhaustive = per_k[k]
        scores = []
        for c in cands:
            accs = np.array([r.final_accuracy for r in results[pos]])
            scores.append(ChainScore(c, accs))
            pos += 1
        out.append(SearchResult(k=k, best=best_chain(scores), candidates=scores, exhaustive=exhaustive))
    return out
