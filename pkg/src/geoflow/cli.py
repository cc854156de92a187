"""Command-line front end: ``geoflow {generate,diagnose,transfer,search}``."""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .align import alignment_curve, path_length, select_mix
from .chain import SEARCH_CAVEAT, align_domain, chain_notation, search_chains
from .config import RunConfig, load_config, parse_overrides
from .dataio import atomic_write_text, json_text, read_dataset_csv, read_json, write_dataset_csv
from .errors import ConfigError, DataError, ExcludedConfigurationError, GeoflowError
from .harness import (
    EVAL_STAGE,
    SEARCH_STAGE,
    ExperimentConfig,
    StopRule,
    run_experiment,
    write_outputs,
)
from .structfam import ChainFamily, StructureRecord

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_DATA, EXIT_NOT_CONVERGED = 0, 1, 2, 3, 4
GENERATE_STAGE = 2
MANIFEST = "manifest.json"


# -- dataset files ----------------------------------------------------------------------


def dataset_name(index: int, sensor: int, n_sensors: int) -> str:
    tag = f"_sensor_{sensor}" if n_sensors > 1 else ""
    return f"structure_{index:02d}{tag}.csv"


def _encode_clean(arr):
    arr = np.asarray(arr)
    if np.iscomplexobj(arr):
        return {"re": arr.real.tolist(), "im": arr.imag.tolist()}
    return {"re": arr.tolist()}


def _decode_clean(doc):
    re = np.array(doc["re"], dtype=float)
    return re + 1j * np.array(doc["im"], dtype=float) if "im" in doc else re


def cmd_generate(cfg: RunConfig, jobs: int) -> int:
    out = Path(cfg.output)
    fam = cfg.family()
    seed = (cfg.seed, GENERATE_STAGE, 0)
    data = fam.realise(seed)
    files = []
    for rec in fam.records:
        for s, ds in enumerate(data[rec.index]):
            name = dataset_name(rec.index, s, fam.n_sensors)
            write_dataset_csv(out / "datasets" / name, ds)
            files.append({"structure_index": rec.index, "alpha": rec.alpha, "sensor": s,
                          "path": f"datasets/{name}", "n_samples": ds.n_samples, "n_features": ds.dim})
    manifest = {
        "version": __version__,
        "numpy": np.__version__,
        "config_digest": cfg.generation_digest(),
        "seeds": {"master": cfg.seed, "dataset_realisation": list(seed)},
        "config": cfg.model_dump(mode="json"),
        "n_sensors": fam.n_sensors,
        "files": files,
        "clean_features": [
            {"structure_index": r.index, "alpha": r.alpha,
             "classes": {str(c): _encode_clean(v) for c, v in sorted(r.clean.items())}}
            for r in fam.records
        ],
    }
    atomic_write_text(out / MANIFEST, json_text(manifest))
    print(f"wrote {len(files)} dataset files and {MANIFEST} to {out}")
    return EXIT_OK


def load_manifest(cfg: RunConfig) -> dict:
    path = Path(cfg.output) / MANIFEST
    if not path.exists():
        raise DataError(f"{path} not found; run 'geoflow generate' first")
    man = read_json(path)
    if man.get("config_digest") != cfg.generation_digest():
        raise DataError(f"{path} was generated from a different configuration; rerun 'geoflow generate'")
    return man


def family_from_manifest(cfg: RunConfig, man: dict) -> ChainFamily:
    records = tuple(
        StructureRecord(index=int(e["structure_index"]), alpha=float(e["alpha"]),
                        clean={int(c): _decode_clean(v) for c, v in e["classes"].items()})
        for e in man["clean_features"]
    )
    return ChainFamily(records=records, features=cfg.features.config())


# -- commands ------------------------------------------------------------------------------


def cmd_diagnose(cfg: RunConfig, jobs: int) -> int:
    man = load_manifest(cfg)
    out = Path(cfg.output) / "diagnose"
    n_sensors = int(man["n_sensors"])
    indices = sorted({int(f["structure_index"]) for f in man["files"]})
    spec = cfg.chain_spec(indices, cfg.chain.methods[0])
    report = {"chain": chain_notation(indices), "sensors": []}
    for s in range(n_sensors):
        doms = []
        for i in indices:
            path = Path(cfg.output) / "datasets" / dataset_name(i, s, n_sensors)
            doms.append(align_domain(read_dataset_csv(path), spec))
        local, drift = alignment_curve([d.features for d in doms], d=1)
        lines = ["hop,cos_src_tgt,cos_src_origin"]
        lines += [f"{h + 1},{a:.6f},{b:.6f}" for h, (a, b) in enumerate(zip(local, drift))]
        atomic_write_text(out / f"alignment_s{s}.csv", "\n".join(lines) + "\n")
        pl = path_length([d.features for d in doms])
        entry = {
            "sensor": s,
            "hop_distances": [round(float(v), 9) for v in pl.hop_distances],
            "total": round(pl.total, 9),
            "direct": round(pl.direct, 9),
            "triangle_ok": pl.triangle_ok,
        }
        if cfg.features.kind == "frf":
            raw = read_dataset_csv(Path(cfg.output) / "datasets" / dataset_name(indices[0], s, n_sensors))
            try:
                entry["selected_mix"] = select_mix(raw.features, seed=cfg.seed)
            except GeoflowError as exc:
                entry["selected_mix"] = None
                entry["mix_selection_error"] = str(exc)
        report["sensors"].append(entry)
        status = "holds" if pl.triangle_ok else "VIOLATED"
        print(f"sensor {s}: path length {pl.total:.6g} >= direct {pl.direct:.6g}: triangle inequality {status}")
    atomic_write_text(out / "path_length.json", json_text(report))
    return EXIT_OK


def _stop_rule(cfg: RunConfig) -> StopRule:
    h = cfg.harness
    return StopRule(h.n_realisations, h.sem_target, h.min_realisations, h.max_realisations, h.batch)


def cmd_transfer(cfg: RunConfig, jobs: int) -> int:
    fam = family_from_manifest(cfg, load_manifest(cfg))
    specs = tuple(cfg.chain_spec(idx, m) for idx in cfg.chain_indices() for m in cfg.chain.methods)
    ecfg = ExperimentConfig(chains=specs, stop=_stop_rule(cfg), master_seed=cfg.seed, stage=EVAL_STAGE,
                            sensors=tuple(range(fam.n_sensors)), out_dir=str(Path(cfg.output) / "transfer"),
                            jobs=jobs)
    res = run_experiment(ecfg, fam)
    sys.stdout.write(res.table.to_text())
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def cmd_search(cfg: RunConfig, jobs: int) -> int:
    cfg.check_search()
    fam = family_from_manifest(cfg, load_manifest(cfg))
    out = Path(cfg.output) / "search"
    best = []
    candidates = {}
    for method in cfg.chain.methods:
        spec = cfg.chain_spec((fam.indices[0], fam.indices[-1]), method)
        found = search_chains(fam, spec, cfg.search.k_values, cfg.search.n_chains,
                              cfg.search.n_realisations, cfg.seed, stage=SEARCH_STAGE, jobs=jobs)
        for r in found:
            best.append(replace(spec, structure_indices=r.best.indices))
            candidates[f"{method}_k{r.k}"] = {
                "exhaustive": r.exhaustive,
                "n_candidates": len(r.candidates),
                "best": chain_notation(r.best.indices),
                "candidates": [{"chain": chain_notation(c.indices), "accuracy_mean": round(c.mean, 6),
                                "accuracy_std": round(c.std, 6)} for c in r.candidates],
            }
    header = f"# {SEARCH_CAVEAT}"
    notes = [f"# k={k.split('_k')[1]} {k.split('_k')[0]}: exhaustive over all {v['n_candidates']} chains"
             for k, v in candidates.items() if v["exhaustive"]]
    ecfg = ExperimentConfig(chains=tuple(best), stop=_stop_rule(cfg), master_seed=cfg.seed, stage=EVAL_STAGE,
                            sensors=tuple(range(fam.n_sensors)), out_dir=None, jobs=jobs,
                            header="\n".join([header] + notes))
    res = run_experiment(ecfg, fam)
    write_outputs(res, out)
    atomic_write_text(out / "candidates.json", json_text({"caveat": SEARCH_CAVEAT,
                                                          "search_realisations": cfg.search.n_realisations,
                                                          "results": candidates}))
    sys.stdout.write(res.table.to_text())
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


COMMANDS = {"generate": cmd_generate, "diagnose": cmd_diagnose, "transfer": cmd_transfer, "search": cmd_search}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML run configuration")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config leaf, e.g. --set features.noise_frac=0.01 (repeatable)")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--out", help="output directory (overrides the config)")
    common.add_argument("--jobs", type=int, help="worker processes (default: $GEOFLOW_JOBS, then config)")
    p = argparse.ArgumentParser(prog="geoflow", description=__doc__)
    p.add_argument("--version", action="version", version=f"geoflow {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common], help="synthesise the structure chain datasets")
    sub.add_parser("diagnose", parents=[common], help="alignment curves and path-length check")
    sub.add_parser("transfer", parents=[common], help="run the configured chains")
    sub.add_parser("search", parents=[common], help="label-informed best-chain search per k")
    return p


def _jobs(args, cfg) -> int:
    if args.jobs is not None:
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        return args.jobs
    env = os.environ.get("GEOFLOW_JOBS")
    if env:
        try:
            v = int(env)
        except ValueError:
            raise ConfigError(f"GEOFLOW_JOBS={env!r} is not an integer") from None
        if v < 1:
            raise ConfigError("GEOFLOW_JOBS must be >= 1")
        return v
    return cfg.jobs or 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        overrides = parse_overrides(args.overrides)
        if args.seed is not None:
            overrides.append(("seed", args.seed))
        if args.out is not None:
            overrides.append(("output", args.out))
        cfg = load_config(args.config, overrides)
        jobs = _jobs(args, cfg)
        return COMMANDS[args.command](cfg, jobs)
    except (ConfigError, ExcludedConfigurationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except GeoflowError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
