"""Per-episode metrics rows and their CSV encoding."""
from __future__ import annotations

import csv
from dataclasses import astuple, dataclass, fields
from pathlib import Path
from typing import Iterable, Optional, Sequence


@dataclass(frozen=True)
class MetricsRecord:
    global_step: int
    episode_index: int
    episode_return: float
    success: bool
    running_success_rate: float
    epsilon: float
    loss: Optional[float]  # exponential moving average; None before the first update


FIELDS = tuple(f.name for f in fields(MetricsRecord))


def running_success_rate(flags: Sequence, window: int = 100) -> float:
    """Mean of the last min(window, n) success flags; 0.0 for an empty history."""
    if window < 1:
        raise ValueError("window must be positive")
    tail = list(flags)[-window:]
    return sum(bool(f) for f in tail) / len(tail) if tail else 0.0


def _encode(rec: MetricsRecord) -> list:
    row = []
    for value in astuple(rec):
        if value is None:
            row.append("")
        elif isinstance(value, bool):
            row.append(int(value))
        elif isinstance(value, float):
            row.append(repr(value))
        else:
            row.append(value)
    return row


def _decode(row: dict) -> MetricsRecord:
    return MetricsRecord(
        global_step=int(row["global_step"]),
        episode_index=int(row["episode_index"]),
        episode_return=float(row["episode_return"]),
        success=bool(int(row["success"])),
        running_success_rate=float(row["running_success_rate"]),
        epsilon=float(row["epsilon"]),
        loss=None if row["loss"] == "" else float(row["loss"]),
    )


class MetricsWriter:
    """Append-only CSV sink; the header is written once, every row is flushed."""

    def __init__(self, path, truncate_to: Optional[int] = None):
        self.path = Path(path)
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            if truncate_to is not None and self.path.exists():
                _truncate_rows(self.path, truncate_to)
            fresh = not self.path.exists() or self.path.stat().st_size == 0
            self._fh = self.path.open("a", newline="")
        except OSError as exc:
            raise OSError(f"cannot open metrics file {self.path}: {exc}") from exc
        self._writer = csv.writer(self._fh, lineterminator="\n")
        if fresh:
            self._writer.writerow(FIELDS)
            self._fh.flush()

    def write(self, rec: MetricsRecord) -> None:
        try:
            self._writer.writerow(_encode(rec))
            self._fh.flush()
        except OSError as exc:
            raise OSError(f"cannot write metrics file {self.path}: {exc}") from exc

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> "MetricsWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def _truncate_rows(path: Path, keep: int) -> None:
    """Keep the header and the first ``keep`` data rows."""
    lines = path.read_text().splitlines(keepends=True)
    path.write_text("".join(lines[: 1 + keep]))


def export_metrics(records: Iterable[MetricsRecord], path) -> None:
    """Append records to ``path`` (creating it with a header row if needed)."""
    with MetricsWriter(path) as writer:
        for rec in records:
            writer.write(rec)


def read_metrics(path) -> list[MetricsRecord]:
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            return [_decode(row) for row in csv.DictReader(fh)]
    except OSError as exc:
        raise OSError(f"cannot read metrics file {path}: {exc}") from exc
