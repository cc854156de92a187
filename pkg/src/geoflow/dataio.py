"""File formats: dataset CSVs, JSON documents, atomic writes."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import DataError
from .structfam import CLASS_NAMES, DomainDataset


def atomic_write_text(path, text: str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def fmt_float(v: float) -> str:
    return format(float(v), ".17g")


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def json_text(doc) -> str:
    return json.dumps(to_jsonable(doc), indent=2, sort_keys=True) + "\n"


def write_json(path, doc) -> None:
    atomic_write_text(path, json_text(doc))


def read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise DataError(f"missing file {path}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from exc


def dataset_csv_text(ds: DomainDataset) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["structure_index", "sample_id", "class", "labelled"] + [f"feat_{j}" for j in range(ds.dim)])
    idx = int(ds.meta.get("structure_index", 0))
    for i in range(ds.n_samples):
        w.writerow([idx, i, CLASS_NAMES[ds.labels[i]], int(ds.labelled_mask[i])]
                   + [fmt_float(v) for v in ds.features[i]])
    return buf.getvalue()


def write_dataset_csv(path, ds: DomainDataset) -> None:
    atomic_write_text(path, dataset_csv_text(ds))


def read_dataset_csv(path, meta=None) -> DomainDataset:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except FileNotFoundError as exc:
        raise DataError(f"missing dataset file {path}") from exc
    if not rows:
        raise DataError(f"{path}: empty file")
    header = rows[0]
    if header[:4] != ["structure_index", "sample_id", "class", "labelled"]:
        raise DataError(f"{path}: unexpected header {header[:4]}")
    n_feat = len(header) - 4
    if header[4:] != [f"feat_{j}" for j in range(n_feat)] or n_feat < 1:
        raise DataError(f"{path}: feature columns must be feat_0..feat_{{D-1}}")
    feats, labels, mask, sidx = [], [], [], set()
    for line, r in enumerate(rows[1:], start=2):
        if len(r) != len(header):
            raise DataError(f"{path}:{line}: expected {len(header)} fields, got {len(r)}")
        try:
            sidx.add(int(r[0]))
            labels.append(CLASS_NAMES.index(r[2]))
            if r[3] not in ("0", "1"):
                raise ValueError(f"labelled must be 0 or 1, got {r[3]!r}")
            mask.append(r[3] == "1")
            feats.append([float(v) for v in r[4:]])
        except ValueError as exc:
            raise DataError(f"{path}:{line}: {exc}") from exc
    if len(sidx) > 1:
        raise DataError(f"{path}: mixed structure indices {sorted(sidx)}")
    m = {"structure_index": sidx.pop() if sidx else 0}
    m.update(meta or {})
    try:
        return DomainDataset(np.array(feats), np.array(labels), np.array(mask), m)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc
