"""Per-step training records and their CSV / JSONL serialisation."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Iterable, Sequence


def fmt_float(x: float) -> str:
    """Floats are written with 9 significant digits."""
    return format(float(x), ".9g")


@dataclass(frozen=True)
class StepRecord:
    seed: int
    strategy: str
    step: int
    mean_rewards: tuple[float, ...]
    weights: tuple[float, ...]
    pivot: int
    retained: float
    scalarized: float

    @property
    def n_dims(self) -> int:
        return len(self.mean_rewards)

    def rounded(self) -> "StepRecord":
        """The record as it reads back after a trip through the text formats."""
        r = lambda x: float(fmt_float(x))  # noqa: E731
        return StepRecord(
            self.seed,
            self.strategy,
            self.step,
            tuple(map(r, self.mean_rewards)),
            tuple(map(r, self.weights)),
            self.pivot,
            r(self.retained),
            r(self.scalarized),
        )


def step_header(D: int) -> list[str]:
    return (
        ["seed", "strategy", "step"]
        + [f"mean_r_{d}" for d in range(D)]
        + [f"w_{d}" for d in range(D)]
        + ["pivot", "retained", "scalarized"]
    )


def _step_row(rec: StepRecord) -> dict[str, object]:
    row: dict[str, object] = {"seed": rec.seed, "strategy": rec.strategy, "step": rec.step}
    for d, v in enumerate(rec.mean_rewards):
        row[f"mean_r_{d}"] = fmt_float(v)
    for d, v in enumerate(rec.weights):
        row[f"w_{d}"] = fmt_float(v)
    row.update(pivot=rec.pivot, retained=fmt_float(rec.retained), scalarized=fmt_float(rec.scalarized))
    return row


def _record_from_row(row: dict) -> StepRecord:
    D = sum(1 for k in row if k.startswith("mean_r_"))
    return StepRecord(
        seed=int(row["seed"]),
        strategy=str(row["strategy"]),
        step=int(row["step"]),
        mean_rewards=tuple(float(row[f"mean_r_{d}"]) for d in range(D)),
        weights=tuple(float(row[f"w_{d}"]) for d in range(D)),
        pivot=int(row["pivot"]),
        retained=float(row["retained"]),
        scalarized=float(row["scalarized"]),
    )


def write_step_records(records: Sequence[StepRecord], fh, fmt: str = "csv") -> None:
    if not records:
        return
    if fmt == "csv":
        writer = csv.DictWriter(fh, fieldnames=step_header(records[0].n_dims), lineterminator="\n")
        writer.writeheader()
        for rec in records:
            writer.writerow(_step_row(rec))
    elif fmt == "jsonl":
        for rec in records:
            row = _step_row(rec)
            # numbers stay numbers in JSON; the 9-digit formatting still applies
            out = {k: (json.loads(v) if isinstance(v, str) and k != "strategy" else v) for k, v in row.items()}
            fh.write(json.dumps(out) + "\n")
    else:
        raise ValueError(f"unknown output format {fmt!r}")


def read_step_records(fh, fmt: str = "csv") -> list[StepRecord]:
    if fmt == "csv":
        return [_record_from_row(row) for row in csv.DictReader(fh)]
    if fmt == "jsonl":
        return [_record_from_row(json.loads(line)) for line in fh if line.strip()]
    raise ValueError(f"unknown output format {fmt!r}")


def dumps_step_records(records: Sequence[StepRecord], fmt: str = "csv") -> str:
    buf = io.StringIO()
    write_step_records(records, buf, fmt)
    return buf.getvalue()


def write_dict_rows(rows: Iterable[dict], fh, columns: Sequence[str]) -> None:
    """Generic CSV writer for report rows; floats get the 9-digit format."""
    writer = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (fmt_float(v) if isinstance(v, float) else v) for k, v in row.items()})

