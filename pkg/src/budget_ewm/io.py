"""CSV ingestion/emission and a diffable JSON writer.

Floats are written with 17 significant digits so every file round-trips
bit-exactly. Parsing uses ``float()`` which is locale-independent and
rejects thousands separators.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ConfigError, InvalidInputError
from .moments import MomentTable
from .policy import enumerate_grid
from .scoring import RawSample, ScoredSample

RAW_COLUMNS = ("y", "c", "m", "d", "income", "group")
SCORE_COLUMNS = ("gamma_star", "r_star", "income", "group")


def fmt_float(x: float) -> str:
    x = float(x)
    if not math.isfinite(x):
        raise InvalidInputError(f"cannot serialize non-finite value {x}")
    if x == 0:
        return "0"
    return "%.17g" % x


def dumps_json(obj: Any, indent: int = 2) -> str:
    """JSON with insertion-ordered keys and 17-significant-digit floats."""
    def enc(o, level):
        pad = " " * (indent * (level + 1))
        end = " " * (indent * level)
        if o is None:
            return "null"
        if isinstance(o, (bool, np.bool_)):
            return "true" if o else "false"
        if isinstance(o, (int, np.integer)):
            return str(int(o))
        if isinstance(o, (float, np.floating)):
            return fmt_float(o)
        if isinstance(o, str):
            return json.dumps(o)
        if isinstance(o, dict):
            if not o:
                return "{}"
            items = [f"{pad}{json.dumps(str(k))}: {enc(v, level + 1)}" for k, v in o.items()]
            return "{\n" + ",\n".join(items) + "\n" + end + "}"
        if isinstance(o, (list, tuple, np.ndarray)):
            seq = list(o)
            if not seq:
                return "[]"
            if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq):
                return "[" + ", ".join(enc(v, level + 1) for v in seq) + "]"
            return "[\n" + ",\n".join(pad + enc(v, level + 1) for v in seq) + "\n" + end + "]"
        raise TypeError(f"cannot serialize {type(o).__name__}")

    return enc(obj, 0) + "\n"


def write_text(path, text: str):
    if path is None or str(path) == "-":
        import sys
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _parse_float(value: str, row: int, col: str) -> float:
    if value is None or value.strip() == "":
        raise InvalidInputError(f"row {row}: missing value in column {col!r}")
    try:
        x = float(value)
    except ValueError:
        raise InvalidInputError(f"row {row}: column {col!r} is not a number: {value!r}") from None
    if not math.isfinite(x):
        raise InvalidInputError(f"row {row}: column {col!r} is not finite: {value!r}")
    return x


def _parse_binary(value: str, row: int, col: str) -> int:
    x = _parse_float(value, row, col)
    if x not in (0.0, 1.0):
        raise InvalidInputError(f"row {row}: column {col!r} must be 0 or 1, got {value!r}")
    return int(x)


def _parse_group(value: str, row: int, n_groups: int | None) -> int:
    x = _parse_float(value, row, "group")
    if x != int(x) or x < 0:
        raise InvalidInputError(f"row {row}: group must be a nonnegative integer, got {value!r}")
    g = int(x)
    return min(g, n_groups - 1) if n_groups else g


def _reader(path):
    try:
        handle = open(path, newline="", encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"file not found: {path}") from None
    return handle


def _check_header(header, required, path):
    if header is None:
        raise InvalidInputError(f"{path}: empty file, header required")
    missing = [c for c in required if c not in header]
    if missing:
        raise InvalidInputError(f"{path}: missing columns {missing}")


def read_raw_csv(path, n_groups: int | None = None) -> RawSample:
    """Experimental records. Groups at or above ``n_groups - 1`` go to the top bucket.

    Row numbers in errors count the header as row 1.
    """
    with _reader(path) as handle:
        reader = csv.DictReader(handle)
        _check_header(reader.fieldnames, RAW_COLUMNS, path)
        v_cols = [c for c in reader.fieldnames if c.startswith("v_")]
        cols = {c: [] for c in (*RAW_COLUMNS, "v")}
        for row_no, row in enumerate(reader, start=2):
            if None in row or any(row[c] is None for c in reader.fieldnames):
                raise InvalidInputError(f"row {row_no}: wrong number of fields")
            d = _parse_binary(row["d"], row_no, "d")
            m = _parse_binary(row["m"], row_no, "m")
            c = _parse_float(row["c"], row_no, "c")
            income = _parse_float(row["income"], row_no, "income")
            if m > d:
                raise InvalidInputError(f"row {row_no}: m=1 requires d=1")
            if d == 0 and c != 0:
                raise InvalidInputError(f"row {row_no}: c must be 0 when d=0")
            if income < 0:
                raise InvalidInputError(f"row {row_no}: income must be nonnegative")
            for col in v_cols:
                if row[col].strip() == "":
                    raise InvalidInputError(f"row {row_no}: missing value in column {col!r}")
            cols["y"].append(_parse_float(row["y"], row_no, "y"))
            cols["c"].append(c)
            cols["m"].append(m)
            cols["d"].append(d)
            cols["income"].append(income)
            cols["group"].append(_parse_group(row["group"], row_no, n_groups))
            cols["v"].append("|".join(row[col] for col in v_cols) if v_cols else "0")
    if not cols["y"]:
        raise InvalidInputError(f"{path}: no data rows")
    return RawSample(**cols)


def read_scores_csv(path, n_groups: int | None = None) -> ScoredSample:
    with _reader(path) as handle:
        reader = csv.DictReader(handle)
        _check_header(reader.fieldnames, SCORE_COLUMNS, path)
        gamma, r, income, group = [], [], [], []
        for row_no, row in enumerate(reader, start=2):
            if None in row or any(row[c] is None for c in SCORE_COLUMNS):
                raise InvalidInputError(f"row {row_no}: wrong number of fields")
            gamma.append(_parse_float(row["gamma_star"], row_no, "gamma_star"))
            r.append(_parse_float(row["r_star"], row_no, "r_star"))
            inc = _parse_float(row["income"], row_no, "income")
            if inc < 0:
                raise InvalidInputError(f"row {row_no}: income must be nonnegative")
            income.append(inc)
            group.append(_parse_group(row["group"], row_no, n_groups))
    if not gamma:
        raise InvalidInputError(f"{path}: no data rows")
    return ScoredSample(gamma, r, income, group)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def scores_csv(scores: ScoredSample) -> str:
    rows = ((fmt_float(g), fmt_float(r), fmt_float(x), str(int(j)))
            for g, r, x, j in zip(scores.gamma_star, scores.r_star, scores.income, scores.group))
    return _csv_text(SCORE_COLUMNS, rows)


def curves_csv(table: MomentTable) -> str:
    """Per-policy curves: one threshold column per group, then w_hat, b_hat, sigma_b."""
    J = table.grid.n_groups
    header = [f"threshold_{j}" for j in range(J)] + ["w_hat", "b_hat", "sigma_b"]
    rows = ([*(fmt_float(t) for t in ts), fmt_float(w), fmt_float(b), fmt_float(s)]
            for ts, w, b, s in zip(table.grid.thresholds, table.w_hat, table.b_hat, table.sigma_b))
    return _csv_text(header, rows)


def iterations_csv(rows, n_groups: int) -> str:
    header = ["iteration", "rule"] + [f"threshold_{j}" for j in range(n_groups)] + \
        ["welfare", "budget", "feasible", "fell_back_to_null"]
    body = ([str(r.iteration), r.rule, *(fmt_float(t) for t in r.thresholds), fmt_float(r.welfare),
             fmt_float(r.budget), str(int(r.feasible)), str(int(r.fell_back_to_null))] for r in rows)
    return _csv_text(header, body)


def moment_table_dict(table: MomentTable) -> dict:
    return {
        "cutoffs": [list(c) for c in table.grid.cutoffs],
        "n": table.n,
        "w_hat": table.w_hat.tolist(),
        "b_hat": table.b_hat.tolist(),
        "sigma_b": table.sigma_b.tolist(),
        "cov_b": table.cov_b.tolist(),
    }


def read_moment_table(path) -> MomentTable:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"{path}: not valid JSON ({exc})") from None
    try:
        grid = enumerate_grid(data["cutoffs"])
        return MomentTable(grid, int(data["n"]), data["w_hat"], data["b_hat"], cov_b=data["cov_b"])
    except KeyError as exc:
        raise InvalidInputError(f"{path}: missing field {exc.args[0]!r}") from None
