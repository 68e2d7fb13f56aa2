"""Append-only usage log: order, exercise, pseudonym, and score per submission.

One comma-separated line per record, no header::

    sequence,iso-timestamp,pseudonym,exercise_id,score_percent

Sequence numbers are global and strictly increasing in file order. Appends
are serialized and fsynced so a record is durable before the grading
response goes out. Pseudonyms are hex tokens, so no field ever needs
quoting.
"""

import os
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

__all__ = [
    "UsageRecord",
    "UsageLog",
    "read_records",
    "submissions_by_student",
    "UsageLogError",
    "StorageFailure",
    "CorruptLog",
]


class UsageLogError(Exception):
    pass


class StorageFailure(UsageLogError):
    pass


class CorruptLog(UsageLogError):
    pass


@dataclass(frozen=True)
class UsageRecord:
    sequence: int
    timestamp: str
    pseudonym: str
    exercise_id: int
    score_percent: float

    def __post_init__(self) -> None:
        if self.sequence < 1:
            raise ValueError("sequence must be positive")
        if self.exercise_id < 1:
            raise ValueError("exercise_id must be positive")
        if not 0 <= self.score_percent <= 100:
            raise ValueError(f"score_percent {self.score_percent} outside [0, 100]")
        if "," in self.pseudonym or not self.pseudonym:
            raise ValueError("pseudonym must be a non-empty comma-free token")
        try:
            datetime.fromisoformat(self.timestamp)
        except ValueError:
            raise ValueError(f"timestamp {self.timestamp!r} is not ISO-8601") from None

    def as_line(self) -> str:
        # repr keeps the float round-trippable through read_records
        return f"{self.sequence},{self.timestamp},{self.pseudonym},{self.exercise_id},{self.score_percent!r}"


def _parse_line(line: str, line_no: int) -> UsageRecord:
    parts = line.split(",")
    if len(parts) != 5:
        raise CorruptLog(f"line {line_no}: expected 5 fields, found {len(parts)}")
    try:
        record = UsageRecord(
            sequence=int(parts[0]),
            timestamp=parts[1],
            pseudonym=parts[2],
            exercise_id=int(parts[3]),
            score_percent=float(parts[4]),
        )
    except ValueError as exc:
        raise CorruptLog(f"line {line_no}: {exc}") from exc
    return record


def read_records(source: str | Path) -> list[UsageRecord]:
    """Parse a log file (or raw text) and enforce the sequence invariant.

    A missing file reads as an empty log.

    Raises:
        CorruptLog: malformed line, invalid field, or non-increasing sequence.
    """
    if isinstance(source, Path):
        text = Path(source).read_text(encoding="utf-8") if source.exists() else ""
    else:
        text = source
    records = []
    last_sequence = 0
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        record = _parse_line(line, line_no)
        if record.sequence <= last_sequence:
            raise CorruptLog(
                f"line {line_no}: sequence {record.sequence} not above previous {last_sequence}"
            )
        last_sequence = record.sequence
        records.append(record)
    return records


class UsageLog:
    """Writer over a log file; appends are serialized and durable."""

    def __init__(self, path: str | Path):
        self._path = Path(path)
        self._lock = threading.Lock()
        if self._path.exists():
            existing = read_records(self._path)
            self._next_sequence = existing[-1].sequence + 1 if existing else 1
        else:
            self._next_sequence = 1

    @property
    def path(self) -> Path:
        return self._path

    def append(
        self,
        pseudonym: str,
        exercise_id: int,
        score_percent: float,
        timestamp: str | None = None,
    ) -> UsageRecord:
        """Persist one record under the next sequence number.

        Raises:
            ValueError: field outside its allowed range.
            StorageFailure: the write could not be made durable.
        """
        with self._lock:
            record = UsageRecord(
                sequence=self._next_sequence,
                timestamp=timestamp or datetime.now(timezone.utc).isoformat(),
                pseudonym=pseudonym,
                exercise_id=exercise_id,
                score_percent=score_percent,
            )
            try:
                with open(self._path, "a", encoding="utf-8") as handle:
                    handle.write(record.as_line() + "\n")
                    handle.flush()
                    os.fsync(handle.fileno())
            except OSError as exc:
                raise StorageFailure(f"could not append to {self._path}: {exc}") from exc
            self._next_sequence += 1
            return record


def submissions_by_student(records) -> dict[str, dict[int, list[float]]]:
    """Group scores per pseudonym and exercise, ordered by sequence.

    The first element of each score list is the initial submission, the last
    the final one.
    """
    grouped: dict[str, dict[int, list[float]]] = {}
    for record in sorted(records, key=lambda r: r.sequence):
        grouped.setdefault(record.pseudonym, {}).setdefault(record.exercise_id, []).append(
            record.score_percent
        )
    return grouped
