import math
from collections import Counter
from dataclasses import replace

import numpy as np
import pytest

from geoflow.chain import (
    SEARCH_CAVEAT,
    ChainScore,
    ChainSpec,
    VarianceRule,
    best_chain,
    chain_notation,
    enumerate_chains,
    propagate,
    resolve_dim,
    run_hop,
    search_chains,
)
from geoflow.errors import DimensionError, InputError
from geoflow.structfam import ChainFamily, DomainDataset, FeatureConfig, StructureRecord


def two_class(seed, healthy_at=0.0, damage_at=10.0, scale=(0.5, 0.1), n=100):
    rng = np.random.default_rng(seed)
    x = np.vstack([rng.normal([healthy_at, 0.0], scale, (n, 2)),
                   rng.normal([damage_at, 0.0], scale, (n, 2))])
    return x, np.repeat([0, 1], n)


def labelled_source(x, y, index=1):
    return DomainDataset(x, y, np.ones(len(y), bool), {"structure_index": index})


def partial_target(x, y, n_labelled=20, seed=0, index=2):
    rng = np.random.default_rng(seed)
    mask = np.zeros(len(y), bool)
    mask[rng.choice(np.flatnonzero(y == 0), n_labelled, replace=False)] = True
    return DomainDataset(x, y, mask, {"structure_index": index})


def quarter_turn(x):
    # (x, y) -> (-y, x)
    return np.c_[-x[:, 1], x[:, 0]]


def blobs(seed, shift=0.0, n=60, d=6):
    rng = np.random.default_rng(seed)
    centres = np.zeros((3, d))
    centres[1, 0] = 10.0
    centres[2, 1] = 10.0
    scale = np.linspace(1.0, 0.3, d)
    x = np.vstack([c + shift + rng.standard_normal((n, d)) * scale for c in centres])
    return x, np.repeat([0, 1, 2], n)


class TestSpec:
    def test_notation(self):
        assert chain_notation([1, 4, 12, 13, 18]) == "[1 4 12 13 18]"
        spec = ChainSpec((1, 4, 18))
        assert spec.k == 1 and spec.notation == "[1 4 18]"

    @pytest.mark.parametrize("kw", [
        dict(structure_indices=(1,)),
        dict(structure_indices=(1, 3, 3, 18)),
        dict(structure_indices=(5, 2)),
        dict(structure_indices=(1, 2), method="kernel"),
        dict(structure_indices=(1, 2), aligner="zscore"),
        dict(structure_indices=(1, 2), subspace_dim=0),
        dict(structure_indices=(1, 2), svm_c=0.0),
    ])
    def test_invalid(self, kw):
        with pytest.raises(InputError):
            ChainSpec(**kw)

    def test_variance_rule_bounds(self):
        with pytest.raises(InputError):
            VarianceRule(threshold=0.0)
        with pytest.raises(InputError):
            VarianceRule(cap=0)


class TestResolveDim:
    def source(self, d=8):
        x, y = blobs(0, d=d)
        return labelled_source(x, y)

    def test_explicit(self):
        assert resolve_dim(ChainSpec((1, 2), method="linear", subspace_dim=6), self.source()) == 6

    def test_gfk_half_cap_applied_last(self):
        assert resolve_dim(ChainSpec((1, 2), method="gfk", subspace_dim=6), self.source()) == 4

    def test_variance_rule_on_healthy(self):
        src = self.source()
        healthy = src.features[src.labels == 0]
        s = np.linalg.svd(healthy - healthy.mean(0), compute_uv=False) ** 2
        want = int(np.searchsorted(np.cumsum(s) / s.sum(), 0.9) + 1)
        spec = ChainSpec((1, 2), method="linear", subspace_dim=VarianceRule(0.9, 30))
        assert resolve_dim(spec, src) == want
        capped = ChainSpec((1, 2), method="linear", subspace_dim=VarianceRule(0.9, 2))
        assert resolve_dim(capped, src) == min(want, 2)

    def test_no_admissible_dim(self):
        x = np.random.default_rng(0).standard_normal((20, 1))
        src = labelled_source(x, np.repeat([0, 1], 10))
        with pytest.raises(DimensionError):
            resolve_dim(ChainSpec((1, 2), method="gfk", subspace_dim=1), src)


class TestRunHop:
    @pytest.mark.parametrize("method", ["linear", "gfk"])
    def test_self_transfer(self, method):
        x, y = blobs(3)
        src = labelled_source(x, y)
        tgt = partial_target(x, y)
        res = propagate([src, tgt], ChainSpec((1, 2), method=method, subspace_dim=2, aligner="none"))
        assert res.final_accuracy == 1.0

    def test_quarter_turn(self):
        # target = the source samples rotated by 90 degrees; d=1
        lin, gfk = [], []
        for seed in range(20):
            x, y = two_class(seed)
            src = labelled_source(x, y)
            tgt = partial_target(quarter_turn(x), y, seed=seed)
            for method, out in (("linear", lin), ("gfk", gfk)):
                spec = ChainSpec((1, 2), method=method, subspace_dim=1, aligner="none")
                out.append(propagate([src, tgt], spec))
        # linear: every target sample projects near the healthy centre, so it collapses
        for r in lin:
            assert r.confusion.tolist() == [[80, 0], [100, 0]]
            assert r.final_accuracy == pytest.approx(80 / 180)
            assert r.hops[0].classifier_collapsed
        assert min(r.final_accuracy for r in gfk) >= 0.95

    def test_swapped_classes_collapse_to_damage(self):
        x, y = two_class(4, healthy_at=10.0, damage_at=0.0)
        src = labelled_source(x, y)
        tgt = partial_target(quarter_turn(x), y, seed=4)
        spec = ChainSpec((1, 2), method="linear", subspace_dim=1, aligner="none")
        pred, _, rec = run_hop(src, tgt, spec, d=1)
        # labelled healthy keep their label; every unlabelled sample goes to damage
        assert np.all(pred[tgt.labelled_mask] == 0)
        assert np.all(pred[~tgt.labelled_mask] == 1)
        assert rec.pseudo_label_counts == (20, 180)
        res = propagate([src, tgt], spec)
        assert res.final_accuracy == pytest.approx(100 / 180)

    def test_single_class_source_falls_back(self):
        x, _ = blobs(1)
        y = np.zeros(len(x), int)
        src = DomainDataset(x, y, np.ones(len(y), bool), {"structure_index": 1})
        tgt = partial_target(*blobs(2))
        pred, margins, rec = run_hop(src, tgt, ChainSpec((1, 2), method="linear", subspace_dim=2), 2,
                                     n_classes=3)
        assert np.all(pred == 0) and np.all(margins == 0)
        assert rec.classifier_collapsed
        assert rec.pseudo_label_counts == (len(y), 0, 0)

    def test_dimension_mismatch(self):
        a = labelled_source(*blobs(0, d=6))
        b = partial_target(*blobs(0, d=5))
        with pytest.raises(DimensionError):
            run_hop(a, b, ChainSpec((1, 2)), 2)

    def test_cosines_in_range(self):
        x, y = blobs(5)
        chain = [labelled_source(x, y)] + [partial_target(*blobs(6 + i, shift=0.3 * i), seed=i, index=2 + i)
                                          for i in range(4)]
        res = propagate(chain, ChainSpec((1, 2, 3, 4, 5), method="gfk", subspace_dim=2, aligner="nca"))
        for h in res.hops:
            assert 0.0 <= h.cosine_to_target <= 1.0
            assert 0.0 <= h.cosine_to_origin <= 1.0
        assert [h.target_index for h in res.hops] == [2, 3, 4, 5]
        assert res.hops[0].cosine_to_origin == pytest.approx(res.hops[0].cosine_to_target)


class TestPropagate:
    def chain(self, n=4, seed=0):
        x, y = blobs(seed)
        return [labelled_source(x, y)] + [partial_target(x, y, seed=i, index=2 + i) for i in range(n - 1)]

    @pytest.mark.parametrize("method", ["linear", "gfk"])
    def test_identical_chain(self, method):
        res = propagate(self.chain(), ChainSpec((1, 2, 3, 4), method=method, subspace_dim=2))
        assert res.final_accuracy == 1.0
        assert res.n_unlabelled == 180 - 20
        assert res.confusion.sum(axis=1).tolist() == [40, 60, 60]

    def test_identical_data_gfk_matches_linear(self):
        chain = self.chain(2)
        spec = ChainSpec((1, 2), subspace_dim=2, aligner="none")
        a = propagate(chain, replace(spec, method="linear"))
        b = propagate(chain, replace(spec, method="gfk"))
        np.testing.assert_array_equal(a.confusion, b.confusion)

    def test_accuracy_matches_confusion(self):
        rng = np.random.default_rng(9)
        for seed in range(10):
            chain = [labelled_source(*blobs(seed))] + [
                partial_target(*blobs(seed + 50 + i, shift=rng.uniform(0, 2)), seed=i, index=2 + i)
                for i in range(3)
            ]
            res = propagate(chain, ChainSpec((1, 2, 3, 4), method="linear", subspace_dim=2))
            assert res.final_accuracy * res.n_unlabelled == np.trace(res.confusion)
            truth = chain[-1].labels[~chain[-1].labelled_mask]
            assert res.confusion.sum(axis=1).tolist() == np.bincount(truth, minlength=3).tolist()

    def test_reproducible(self):
        spec = ChainSpec((1, 2, 3, 4), method="gfk", subspace_dim=2)
        a = propagate(self.chain(seed=4), spec, realisation_seed=(1, 2, 3))
        b = propagate(self.chain(seed=4), spec, realisation_seed=(1, 2, 3))
        assert a.final_accuracy == b.final_accuracy
        np.testing.assert_array_equal(a.confusion, b.confusion)
        assert a.hops == b.hops and a.realisation_seed == (1, 2, 3)

    def test_source_must_be_labelled(self):
        chain = self.chain()
        chain[0] = partial_target(chain[0].features, chain[0].labels)
        with pytest.raises(InputError):
            propagate(chain, ChainSpec((1, 2, 3, 4)))

    def test_length_mismatch(self):
        with pytest.raises(InputError):
            propagate(self.chain(3), ChainSpec((1, 2, 3, 4)))

    def test_margin_hook(self):
        # an impossible margin leaves only the labelled healthy subset for the next hop
        x, y = blobs(0)
        chain = [labelled_source(x, y)] + [partial_target(*blobs(10 + i), seed=i, index=2 + i) for i in range(2)]
        base = ChainSpec((1, 2, 3), method="linear", subspace_dim=2)
        off = propagate(chain, base)
        on = propagate(chain, replace(base, margin_threshold=1e9))
        assert not off.hops[1].classifier_collapsed
        assert on.hops[1].classifier_collapsed
        assert on.final_accuracy == pytest.approx(40 / 160)


class TestEnumerate:
    def test_k0(self):
        assert enumerate_chains(range(2, 18), 0, 60, seed=0, source=1, target=18) == [(1, 18)]

    def test_exhaustive(self):
        out = enumerate_chains([2, 3, 4], 2, 10, seed=0, source=1, target=5)
        assert out == [(1, 2, 3, 5), (1, 2, 4, 5), (1, 3, 4, 5)]

    def test_sampled_distinct_sorted(self):
        out = enumerate_chains(range(2, 18), 3, 60, seed=7, source=1, target=18)
        assert len(out) == 60 == len(set(out))
        for c in out:
            assert all(b > a for a, b in zip(c, c[1:]))
            assert c[0] == 1 and c[-1] == 18
        assert out == enumerate_chains(range(2, 18), 3, 60, seed=7, source=1, target=18)
        assert out != enumerate_chains(range(2, 18), 3, 60, seed=8, source=1, target=18)

    def test_uniform_over_subsets(self):
        # pool of 6, k=2: 15 subsets, draw 5 per seed; each subset should appear ~1/3 of the time
        counts = Counter()
        n_seeds = 3000
        for s in range(n_seeds):
            counts.update(enumerate_chains(range(6), 2, 5, seed=s))
        assert len(counts) == math.comb(6, 2)
        p = 5 / 15
        sd = math.sqrt(n_seeds * p * (1 - p))
        for c in counts.values():
            assert abs(c - n_seeds * p) < 5 * sd

    @pytest.mark.parametrize("pool,k,n", [([1, 2], 3, 5), ([1, 1, 2], 1, 5), ([1, 2], 1, 0), ([1, 2], -1, 5)])
    def test_errors(self, pool, k, n):
        with pytest.raises(InputError):
            enumerate_chains(pool, k, n, seed=0)


def toy_family(n_structures=5, noise=0.02):
    # three classes of 6 "frequencies" drifting slowly along the chain
    base = np.linspace(10.0, 60.0, 6)
    records = []
    for i in range(n_structures):
        drift = 1.0 + 0.08 * i * np.linspace(0.0, 1.0, 6)
        clean = {0: base * drift, 1: base * drift * np.r_[0.9, np.ones(5)], 2: base * drift * np.r_[1, 0.9, np.ones(4)]}
        records.append(StructureRecord(index=i + 1, alpha=i / (n_structures - 1),
                                       clean={c: v[None, :] for c, v in clean.items()}))
    return ChainFamily(tuple(records), FeatureConfig(n_reps=30, noise_frac=noise))


class TestSearch:
    def test_best_chain_ties(self):
        a = ChainScore((1, 3, 5), np.array([1.0, 1.0]))
        b = ChainScore((1, 2, 5), np.array([1.0, 1.0]))
        c = ChainScore((1, 4, 5), np.array([0.9, 1.1]))
        assert best_chain([a, b, c]).indices == (1, 2, 5)
        d = ChainScore((1, 2, 5), np.array([0.5, 0.5]))
        assert best_chain([d, c]).indices == (1, 4, 5)

    def test_search(self):
        fam = toy_family()
        spec = ChainSpec((1, 5), method="linear", subspace_dim=2)
        out = search_chains(fam, spec, [0, 1, 2], n_chains=2, n_realisations=3, seed=5)
        assert [r.k for r in out] == [0, 1, 2]
        assert out[0].exhaustive and [c.indices for c in out[0].candidates] == [(1, 5)]
        assert out[0].best.indices == (1, 5)
        assert not out[1].exhaustive and len(out[1].candidates) == 2
        assert not out[2].exhaustive
        for r in out:
            assert r.caveat == SEARCH_CAVEAT
            assert r.best.accuracies.shape == (3,)
            assert r.best.mean == max(c.mean for c in r.candidates)
        again = search_chains(fam, spec, [0, 1, 2], n_chains=2, n_realisations=3, seed=5)
        assert [r.best.indices for r in again] == [r.best.indices for r in out]

    def test_caveat_text(self):
        assert "not intended as deployable in practice" in SEARCH_CAVEAT
