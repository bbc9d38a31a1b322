"""Result records: one JSON object per line, plus a CSV projection.

Records are append-only so a crashed sweep resumes by skipping the config
points that already have a record.  Bit-identical reruns produce bit-identical
records once the elapsed timings are stripped; `strip_volatile` implements
exactly that comparison key.
"""

from __future__ import annotations

import csv
import json

SCHEMA_VERSION = 1

_CSV_COLUMNS = [
    "command",
    "dataset.source",
    "dataset.classes",
    "bound.slices",
    "model.inducing",
    "model.lengthscale",
    "model.variance",
    "model.c",
    "accuracy",
    "gap",
    "certified_min_inputs",
    "cum1",
    "cum2",
    "cum3",
    "cum4",
    "attack_min_inputs",
    "oracle_max",
    "elapsed_total",
]


def make_record(command: str, cfg: dict, **payload) -> dict:
    record = {
        "schema": SCHEMA_VERSION,
        "command": command,
        "config": {k: cfg[k] for k in sorted(cfg)},
    }
    record.update(payload)
    return record


def write_records(path, records, append: bool = False) -> None:
    mode = "a" if append else "w"
    with open(path, mode, encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_records(path) -> list:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out


def strip_volatile(record: dict) -> dict:
    """Copy of a record without timing fields, for determinism comparisons."""

    def scrub(obj):
        if isinstance(obj, dict):
            return {k: scrub(v) for k, v in obj.items() if k not in ("elapsed", "elapsed_total")}
        if isinstance(obj, list):
            return [scrub(v) for v in obj]
        return obj

    return scrub(record)


def config_core(record: dict) -> tuple:
    """Hashable view of the dataset/model part of a record's config.

    Two records describe the same fitted model iff their cores match; used to
    pair certify records with attack/oracle records for sandwich checks.
    """
    cfg = record.get("config", {})
    keys = [k for k in cfg if k.startswith("dataset.") or k.startswith("model.")]
    return tuple((k, repr(cfg[k])) for k in sorted(keys))


def _get(record: dict, dotted: str):
    if dotted in record:
        return record[dotted]
    return record.get("config", {}).get(dotted)


def project_csv(records, path) -> None:
    """Write the flat table view of a record stream."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_CSV_COLUMNS)
        for rec in records:
            cums = rec.get("sorted_cumulative") or []
            attack = rec.get("attack") or {}
            oracle = rec.get("oracle") or {}
            elapsed = rec.get("elapsed") or {}
            row = []
            for col in _CSV_COLUMNS:
                if col == "command":
                    row.append(rec.get("command"))
                elif col.startswith(("dataset.", "bound.", "model.")):
                    row.append(_get(rec, col))
                elif col in ("accuracy", "gap", "certified_min_inputs"):
                    row.append(rec.get(col))
                elif col.startswith("cum"):
                    k = int(col[3:]) - 1
                    row.append(cums[k] if k < len(cums) else None)
                elif col == "attack_min_inputs":
                    row.append(attack.get("min_inputs"))
                elif col == "oracle_max":
                    row.append(oracle.get("max_change"))
                elif col == "elapsed_total":
                    row.append(elapsed.get("total"))
                else:
                    row.append(None)
            writer.writerow(row)
