"""Result rows and their CSV / JSON-lines files."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List, Optional

METRICS = ("rel-loss-sp", "rel-loss-fk", "l-est", "l-sub", "match-rate", "cum-regret", "mistakes")
HEADER = ("trial", "method", "hyperparams", "metric", "value", "runtime_ms")
FORMATS = ("csv", "jsonl")


@dataclass
class ResultRow:
    """One measurement.  Failed trials carry ``hyperparams["error"]`` and a NaN value."""

    trial: int
    method: str
    metric: str
    value: float
    hyperparams: dict = field(default_factory=dict)
    runtime_ms: Optional[float] = None

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r}")
        self.value = float(self.value)

    @property
    def failed(self) -> bool:
        return "error" in self.hyperparams


def _hp(hp: dict) -> str:
    return json.dumps(hp, sort_keys=True, separators=(",", ":"))


def _num(x: Optional[float]) -> str:
    return "" if x is None else repr(float(x))


def sort_rows(rows: Iterable[ResultRow]) -> List[ResultRow]:
    """Stable sort by (trial, method); the order within a pair is kept."""
    return sorted(rows, key=lambda r: (r.trial, r.method))


def format_rows(rows: Iterable[ResultRow], fmt: str = "csv") -> str:
    rows = sort_rows(rows)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(HEADER)
        for r in rows:
            w.writerow([r.trial, r.method, _hp(r.hyperparams), r.metric, _num(r.value), _num(r.runtime_ms)])
        return buf.getvalue()
    if fmt == "jsonl":
        out = []
        for r in rows:
            rec = {
                "trial": r.trial, "method": r.method, "hyperparams": r.hyperparams,
                "metric": r.metric, "value": r.value, "runtime_ms": r.runtime_ms,
            }
            out.append(json.dumps(rec, sort_keys=True) + "\n")
        return "".join(out)
    raise ValueError(f"unknown format {fmt!r}")


def emit(rows: Iterable[ResultRow], fmt: str, path) -> Path:
    """Write rows sorted by (trial, method); identical rows give identical bytes."""
    path = Path(path)
    text = format_rows(rows, fmt)
    try:
        with path.open("w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc
    return path


def parse_rows(text: str, fmt: str = "csv") -> List[ResultRow]:
    rows = []
    if fmt == "csv":
        reader = csv.reader(io.StringIO(text, newline=""))
        header = next(reader, None)
        if header is None:
            return rows
        if tuple(header) != HEADER:
            raise ValueError(f"unexpected CSV header {header}")
        for rec in reader:
            trial, method, hp, metric, value, runtime = rec
            rows.append(ResultRow(
                int(trial), method, metric, float(value), json.loads(hp),
                float(runtime) if runtime else None,
            ))
        return rows
    if fmt == "jsonl":
        for line in text.splitlines():
            if line.strip():
                rec = json.loads(line)
                rows.append(ResultRow(
                    rec["trial"], rec["method"], rec["metric"], rec["value"],
                    rec["hyperparams"], rec["runtime_ms"],
                ))
        return rows
    raise ValueError(f"unknown format {fmt!r}")


def read_results(path, fmt: Optional[str] = None) -> List[ResultRow]:
    path = Path(path)
    fmt = fmt or ("jsonl" if path.suffix == ".jsonl" else "csv")
    try:
        with path.open(encoding="utf-8", newline="") as fh:
            text = fh.read()
    except OSError as exc:
        raise OSError(f"cannot read results from {path}: {exc}") from exc
    return parse_rows(text, fmt)
