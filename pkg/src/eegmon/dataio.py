"""Dataset file formats: JSONL blocks, CSV import, feature matrix export.

The native dataset format is newline-delimited JSON, one block per line:

    {"subject_id": "s01", "block_id": "b00", "label": 0, "sample_rate": 250.0,
     "samples": [...], "aux": {"delta": [...], ..., "meditation": [...]}}

All writers emit keys in a fixed order and floats via repr so identical
data produces byte-identical files.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .core import AUX_CHANNELS, EegRecord, Segment


def _float_list(arr) -> list[float]:
    return [float(v) for v in np.asarray(arr, dtype=np.float64)]


def write_records(path, records: list[EegRecord]) -> None:
    path = Path(path)
    with path.open("w") as fh:
        for rec in records:
            obj = {
                "subject_id": rec.subject_id,
                "block_id": rec.block_id,
                "label": rec.label,
                "sample_rate": rec.sample_rate,
                "samples": _float_list(rec.samples),
            }
            if rec.aux:
                obj["aux"] = {k: _float_list(v) for k, v in rec.aux.items()}
            fh.write(json.dumps(obj) + "\n")


def read_records(path) -> list[EegRecord]:
    path = Path(path)
    out = []
    with path.open() as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            aux = {
                k: np.asarray(v, dtype=np.float64)
                for k, v in obj.get("aux", {}).items()
            }
            out.append(
                EegRecord(
                    samples=np.asarray(obj["samples"], dtype=np.float64),
                    sample_rate=float(obj.get("sample_rate", 250.0)),
                    subject_id=str(obj["subject_id"]),
                    block_id=str(obj["block_id"]),
                    label=obj.get("label"),
                    aux=aux,
                )
            )
    return out


def import_csv(path, sample_rate: float = 250.0) -> list[EegRecord]:
    """Import long-format CSV: subject_id,block_id,label,t,eeg_uv[,aux...].

    Rows must be grouped by (subject_id, block_id) and time-ordered within
    a group; aux columns are optional but must be consistent per file.
    """
    path = Path(path)
    blocks: dict[tuple[str, str], dict] = {}
    order: list[tuple[str, str]] = []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        aux_cols = [c for c in (reader.fieldnames or []) if c in AUX_CHANNELS]
        for row in reader:
            key = (row["subject_id"], row["block_id"])
            if key not in blocks:
                label = row.get("label", "")
                blocks[key] = {
                    "label": int(label) if label not in ("", None) else None,
                    "samples": [],
                    "aux": {c: [] for c in aux_cols},
                }
                order.append(key)
            blocks[key]["samples"].append(float(row["eeg_uv"]))
            for c in aux_cols:
                blocks[key]["aux"][c].append(float(row[c]))
    out = []
    for key in order:
        blk = blocks[key]
        aux = {
            c: np.asarray(v, dtype=np.float64)
            for c, v in blk["aux"].items()
            if len(v) == len(blk["samples"])
        }
        out.append(
            EegRecord(
                samples=np.asarray(blk["samples"], dtype=np.float64),
                sample_rate=sample_rate,
                subject_id=key[0],
                block_id=key[1],
                label=blk["label"],
                aux=aux,
            )
        )
    return out


def write_segments(path, segments: list[Segment]) -> None:
    """Persist processed segments, one JSON object per line."""
    path = Path(path)
    with path.open("w") as fh:
        for seg in segments:
            obj = {
                "subject_id": seg.subject_id,
                "block_id": seg.block_id,
                "start": seg.start,
                "label": seg.label,
                "sample_rate": seg.sample_rate,
                "samples": _float_list(seg.samples),
            }
            if seg.aux:
                obj["aux"] = {k: float(v) for k, v in seg.aux.items()}
            fh.write(json.dumps(obj) + "\n")


def read_segments(path) -> list[Segment]:
    path = Path(path)
    out = []
    with path.open() as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            out.append(
                Segment(
                    samples=np.asarray(obj["samples"], dtype=np.float64),
                    subject_id=str(obj["subject_id"]),
                    block_id=str(obj["block_id"]),
                    start=int(obj["start"]),
                    label=obj.get("label"),
                    aux={k: float(v) for k, v in obj.get("aux", {}).items()},
                    sample_rate=float(obj.get("sample_rate", 250.0)),
                )
            )
    return out


def write_feature_matrix(path, names: list[str], matrix: np.ndarray,
                         subjects: list[str], labels: list[int]) -> None:
    """Feature matrix CSV: manifest columns plus subject_id and label."""
    path = Path(path)
    matrix = np.asarray(matrix, dtype=np.float64)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(names) + ["subject_id", "label"])
        for i in range(matrix.shape[0]):
            writer.writerow(
                [repr(float(v)) for v in matrix[i]] + [subjects[i], labels[i]]
            )


def read_feature_matrix(path):
    """Inverse of write_feature_matrix: (names, matrix, subjects, labels)."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        names = header[:-2]
        rows, subjects, labels = [], [], []
        for row in reader:
            rows.append([float(v) for v in row[: len(names)]])
            subjects.append(row[-2])
            labels.append(int(row[-1]))
    matrix = np.asarray(rows, dtype=np.float64)
    return names, matrix, subjects, labels


def write_json(path, obj) -> None:
    """Deterministic pretty JSON writer used for models and reports."""
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=False) + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())


def append_jsonl(path, obj) -> None:
    with Path(path).open("a") as fh:
        fh.write(json.dumps(obj) + "\n")


def read_jsonl(path) -> list:
    out = []
    with Path(path).open() as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out
