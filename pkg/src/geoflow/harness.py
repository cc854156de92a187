"""Monte-Carlo driver: realisation loops, SEM stopping and report tables."""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .chain import ChainResult, ChainSpec, align_domain, chain_notation, propagate
from .dataio import atomic_write_text, json_text
from .errors import InputError

SEARCH_STAGE = 0
EVAL_STAGE = 1


def realisation_seed(master_seed, stage: int, r: int) -> tuple:
    # no chain id here: every chain sees the same noise in realisation r
    return (int(master_seed), int(stage), int(r))


# -- evaluating chains ----------------------------------------------------------------


def _one_realisation(family, specs, seed, sensors):
    needed = sorted({i for s in specs for i in s.structure_indices})
    data = family.realise(seed, needed)
    cache = {}
    out = []
    for spec in specs:
        per_sensor = []
        for s in sensors:
            key = (spec.aligner, spec.wrms_mix, s)
            aligned = cache.setdefault(key, {})
            doms = []
            for i in spec.structure_indices:
                if i not in aligned:
                    aligned[i] = align_domain(data[i][s], spec)
                doms.append(aligned[i])
            per_sensor.append(propagate(doms, spec, realisation_seed=seed, aligned=True))
        out.append(per_sensor)
    return out


def _run_block(args):
    family, specs, seeds, sensors = args
    return [_one_realisation(family, specs, seed, sensors) for seed in seeds]


def evaluate_chains(family, specs, realisations, master_seed, stage=EVAL_STAGE, jobs: int = 1,
                    sensor: int = 0):
    """Results[spec][realisation] for one sensor, order-independent of ``jobs``."""
    res = evaluate_chains_sensors(family, specs, realisations, master_seed, stage, jobs, (sensor,))
    return [[r[0] for r in per_spec] for per_spec in res]


def evaluate_chains_sensors(family, specs, realisations, master_seed, stage=EVAL_STAGE, jobs=1,
                            sensors=(0,)):
    seeds = [realisation_seed(master_seed, stage, r) for r in realisations]
    specs = list(specs)
    if jobs > 1 and len(seeds) > 1:
        chunks = [seeds[i::jobs] for i in range(jobs)]
        chunks = [c for c in chunks if c]
        with ProcessPoolExecutor(max_workers=len(chunks)) as pool:
            parts = list(pool.map(_run_block, [(family, specs, c, tuple(sensors)) for c in chunks]))
        by_seed = {}
        for chunk, part in zip(chunks, parts):
            by_seed.update(dict(zip(chunk, part)))
        rows = [by_seed[s] for s in seeds]
    else:
        rows = _run_block((family, specs, seeds, tuple(sensors)))
    # rows[r][spec][sensor] -> [spec][r][sensor]
    return [[rows[r][j] for r in range(len(seeds))] for j in range(len(specs))]


# -- stopping rule -----------------------------------------------------------------------


def mean(values) -> float:
    # exactly rounded sums make the result independent of realisation order
    v = np.asarray(values, dtype=float)
    return math.fsum(v) / v.size


def sample_std(values) -> float:
    v = np.sort(np.asarray(values, dtype=float))
    if v.size < 2:
        return 0.0
    m = mean(v)
    return math.sqrt(math.fsum((v - m) ** 2) / (v.size - 1))


def sem(values) -> float:
    v = np.asarray(values, dtype=float)
    return sample_std(v) / math.sqrt(v.size) if v.size else float("inf")


@dataclass(frozen=True)
class StopRule:
    n_realisations: int | None = None
    sem_target: float | None = None
    min_realisations: int = 25
    max_realisations: int = 1000
    batch: int = 25

    def __post_init__(self):
        if (self.n_realisations is None) == (self.sem_target is None):
            raise InputError("give exactly one of n_realisations or sem_target")
        if self.n_realisations is not None and self.n_realisations < 1:
            raise InputError("n_realisations must be >= 1")
        if self.sem_target is not None:
            if not self.sem_target > 0:
                raise InputError("sem_target must be positive")
            if not self.max_realisations >= self.min_realisations >= 2 or self.batch < 1:
                raise InputError("need max >= min >= 2 and batch >= 1")


def run_until(rule: StopRule, run_batch):
    """Call ``run_batch(start, count) -> list of accuracies`` until the rule stops.

    Returns ``(accuracies, converged)``.  With a SEM target, the check is
    made after each completed batch once ``min_realisations`` is reached.
    """
    if rule.n_realisations is not None:
        return list(run_batch(0, rule.n_realisations)), True
    accs = []
    while len(accs) < rule.max_realisations:
        count = min(rule.batch, rule.max_realisations - len(accs))
        accs.extend(run_batch(len(accs), count))
        if len(accs) >= rule.min_realisations and sem(accs) < rule.sem_target:
            return accs, True
    return accs, False


# -- aggregation ---------------------------------------------------------------------------


@dataclass
class ConfusionReport:
    mean: np.ndarray
    row_totals: np.ndarray
    recall: np.ndarray


def confusion_report(results) -> ConfusionReport:
    results = list(results)
    if not results:
        raise InputError("need at least one result")
    shapes = {r.confusion.shape for r in results}
    if len(shapes) != 1:
        raise InputError(f"inconsistent class sets: confusion shapes {sorted(shapes)}")
    total = np.sum([r.confusion for r in results], axis=0)  # integer counts: exact
    avg = total / len(results)
    totals = avg.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        recall = np.where(totals > 0, np.diag(avg) / np.where(totals > 0, totals, 1.0), np.nan)
    return ConfusionReport(mean=avg, row_totals=totals, recall=recall)


@dataclass(frozen=True)
class SummaryRow:
    k: int
    method: str
    acc_mean_pct: float
    acc_std_pct: float
    chain: str
    n_real: int
    converged: bool = True


@dataclass
class SummaryTable:
    rows: list = field(default_factory=list)
    header: str = ""

    COLUMNS = ("k", "method", "acc_mean_pct", "acc_std_pct", "chain", "n_real")

    def _cells(self, r):
        return [str(r.k), r.method, f"{r.acc_mean_pct:.2f}", f"{r.acc_std_pct:.2f}", r.chain, str(r.n_real)]

    def to_csv(self) -> str:
        lines = [",".join(self.COLUMNS)]
        for r in self.rows:
            cells = self._cells(r)
            cells[4] = f'"{cells[4]}"' if "," in cells[4] else cells[4]
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        table = [list(self.COLUMNS)] + [self._cells(r) for r in self.rows]
        widths = [max(len(row[j]) for row in table) for j in range(len(self.COLUMNS))]
        out = [self.header] if self.header else []
        for row in table:
            out.append("  ".join(c.rjust(w) if j not in (1, 4) else c.ljust(w)
                                 for j, (c, w) in enumerate(zip(row, widths))).rstrip())
        flagged = [r for r in self.rows if not r.converged]
        for r in flagged:
            out.append(f"NOT CONVERGED: k={r.k} {r.method} {r.chain} after {r.n_real} realisations")
        return "\n".join(out) + "\n"


def chain_report(spec: ChainSpec, results) -> dict:
    """JSON-ready report for one chain over many realisations."""
    accs = np.array([r.final_accuracy for r in results])
    n_hops = len(results[0].hops)
    per_hop = []
    for h in range(n_hops):
        recs = [r.hops[h] for r in results]
        per_hop.append({
            "source_index": recs[0].source_index,
            "target_index": recs[0].target_index,
            "cosine_to_target": round(mean([x.cosine_to_target for x in recs]), 6),
            "cosine_to_origin": round(mean([x.cosine_to_origin for x in recs]), 6),
            "pseudo_label_counts": [round(float(v), 6) for v in
                                    np.mean([x.pseudo_label_counts for x in recs], axis=0)],
            "classifier_collapsed": round(float(np.mean([x.classifier_collapsed for x in recs])), 6),
        })
    conf = confusion_report(results)
    spec_doc = {
        "structure_indices": list(spec.structure_indices),
        "chain": spec.notation,
        "method": spec.method,
        "subspace_dim": spec.subspace_dim if isinstance(spec.subspace_dim, int)
        else {"variance_threshold": spec.subspace_dim.threshold, "cap": spec.subspace_dim.cap},
        "aligner": spec.aligner,
        "labelled_healthy_fraction": spec.labelled_healthy_fraction,
        "svm_c": spec.svm_c,
    }
    return {
        "spec": spec_doc,
        "per_hop": per_hop,
        "accuracy_mean": round(mean(accs), 6),
        "accuracy_std": round(sample_std(accs), 6),
        "n_realisations": int(accs.size),
        "confusion_mean": [[round(float(v), 6) for v in row] for row in conf.mean],
        "recall": [None if np.isnan(v) else round(float(v), 6) for v in conf.recall],
    }


def alignment_csv(results) -> str:
    """Mean hop cosines: ``hop,cos_src_tgt,cos_src_origin``."""
    lines = ["hop,cos_src_tgt,cos_src_origin"]
    for h in range(len(results[0].hops)):
        a = mean([r.hops[h].cosine_to_target for r in results])
        b = mean([r.hops[h].cosine_to_origin for r in results])
        lines.append(f"{h + 1},{a:.6f},{b:.6f}")
    return "\n".join(lines) + "\n"


# -- experiments ------------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    chains: tuple
    stop: StopRule
    master_seed: int = 0
    stage: int = EVAL_STAGE
    sensors: tuple = (0,)
    out_dir: str | None = None
    jobs: int = 1
    header: str = ""


@dataclass
class ChainRun:
    spec: ChainSpec
    sensor: int
    results: list
    converged: bool

    @property
    def accuracies(self):
        return np.array([r.final_accuracy for r in self.results])


@dataclass
class ExperimentOutput:
    table: SummaryTable
    runs: list

    @property
    def converged(self) -> bool:
        return all(r.converged for r in self.runs)


def _method_label(spec, sensor, n_sensors):
    return spec.method if n_sensors == 1 else f"{spec.method}/s{sensor}"


def run_experiment(cfg: ExperimentConfig, family) -> ExperimentOutput:
    runs = []
    rows = []
    n_sensors = len(cfg.sensors)
    for spec in cfg.chains:
        for sensor in cfg.sensors:
            store = []

            def batch(start, count, spec=spec, sensor=sensor, store=store):
                res = evaluate_chains(family, [spec], range(start, start + count),
                                      cfg.master_seed, cfg.stage, cfg.jobs, sensor)[0]
                store.extend(res)
                return [r.final_accuracy for r in res]

            accs, ok = run_until(cfg.stop, batch)
            run = ChainRun(spec=spec, sensor=sensor, results=store, converged=ok)
            runs.append(run)
            a = np.asarray(accs)
            rows.append(SummaryRow(
                k=spec.k, method=_method_label(spec, sensor, n_sensors),
                acc_mean_pct=100.0 * mean(a), acc_std_pct=100.0 * sample_std(a),
                chain=spec.notation, n_real=int(a.size), converged=ok,
            ))
    out = ExperimentOutput(table=SummaryTable(rows=rows, header=cfg.header), runs=runs)
    if cfg.out_dir is not None:
        write_outputs(out, cfg.out_dir)
    return out


def _run_name(run: ChainRun, n_sensors: int) -> str:
    idx = "-".join(str(i) for i in run.spec.structure_indices)
    tag = f"_s{run.sensor}" if n_sensors > 1 else ""
    return f"{run.spec.method}_k{run.spec.k}_{idx}{tag}"


def write_outputs(out: ExperimentOutput, out_dir) -> None:
    out_dir = Path(out_dir)
    atomic_write_text(out_dir / "summary.csv", out.table.to_csv())
    atomic_write_text(out_dir / "summary.txt", out.table.to_text())
    n_sensors = len({r.sensor for r in out.runs})
    for run in out.runs:
        name = _run_name(run, n_sensors)
        doc = chain_report(run.spec, run.results)
        doc["converged"] = run.converged
        if run.sensor or n_sensors > 1:
            doc["sensor"] = run.sensor
        atomic_write_text(out_dir / "reports" / f"{name}.json", json_text(doc))
        atomic_write_text(out_dir / "alignment" / f"{name}.csv", alignment_csv(run.results))


def default_jobs() -> int:
    try:
        return max(1, int(os.environ.get("GEOFLOW_JOBS", "1")))
    except ValueError:
        return 1


__all__ = [
    "ChainResult", "ChainRun", "ConfusionReport", "ExperimentConfig", "ExperimentOutput",
    "StopRule", "SummaryRow", "SummaryTable", "alignment_csv", "chain_notation", "chain_report",
    "confusion_report", "evaluate_chains", "run_experiment", "run_until", "sem", "write_outputs",
]
