"""Strict readers for the harness file formats.

Schema violations raise SchemaError with a column-level diagnostic; the CLI
turns that into a nonzero exit.
"""

from __future__ import annotations

import csv
import json

RATES_HEADER = ["l1", "l2", "eF", "stderr", "m"]
SWEEP_HEADER = ["method", "epsilon", "error_sq", "cost", "walltime_s", "seed",
                "replicate"]
FIT_KEYS = {"B1bar", "B2bar", "B3bar", "c1", "c2", "dominates"}


class SchemaError(ValueError):
    """An input file does not match its documented schema."""


def _check_header(got, expected, path) -> None:
    if got != expected:
        raise SchemaError(
            f"{path}: bad columns {got}, expected {expected}"
        )


def read_rates(path) -> dict:
    """(l1, l2) -> (eF, stderr, m)."""
    grid = {}
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        _check_header(reader.fieldnames, RATES_HEADER, path)
        for row in reader:
            grid[(int(row["l1"]), int(row["l2"]))] = (
                float(row["eF"]), float(row["stderr"]), int(row["m"])
            )
    return grid


def read_sweep(path) -> list[dict]:
    rows = []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        _check_header(reader.fieldnames, SWEEP_HEADER, path)
        for row in reader:
            rows.append({
                "method": row["method"],
                "epsilon": float(row["epsilon"]),
                "error_sq": float(row["error_sq"]),
                "cost": float(row["cost"]),
            })
    return rows


def read_fit(path) -> dict:
    with open(path) as f:
        doc = json.load(f)
    if not FIT_KEYS <= set(doc):
        raise SchemaError(
            f"{path}: missing fit fields {sorted(FIT_KEYS - set(doc))}"
        )
    return doc
