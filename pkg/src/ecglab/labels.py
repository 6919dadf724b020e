"""Blood-test events and their {-1, 0, 1} label vectors.

Label coding per indicator-direction class: -1 not tested, 0 tested and
normal, 1 tested and abnormal. Thresholds are strict, so a value equal to the
threshold is normal.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from ._util import to_iso, to_micros
from .errors import ConfigError, DataError, FormatError

DIRECTIONS = ("below", "above")
MISSING = -1


@dataclass(frozen=True)
class ThresholdEntry:
    class_id: int
    lab_name: str
    direction: str
    threshold: float
    unit: str = ""

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise ConfigError(f"direction must be one of {DIRECTIONS}, got {self.direction!r}")
        if not math.isfinite(self.threshold):
            raise ConfigError(f"threshold for {self.lab_name} {self.direction} is not finite")

    @property
    def range_label(self):
        """Table-style range text, e.g. ``<3.5 (mmol/L)``."""
        sign = "<" if self.direction == "below" else ">"
        return f"{sign}{self.threshold} ({self.unit})" if self.unit else f"{sign}{self.threshold}"


@dataclass(frozen=True)
class ThresholdTable:
    entries: tuple

    def __post_init__(self):
        entries = tuple(sorted(self.entries, key=lambda e: e.class_id))
        if not entries:
            raise ConfigError("threshold table is empty")
        if [e.class_id for e in entries] != list(range(len(entries))):
            raise ConfigError("class ids must be exactly 0..C-1")
        seen = set()
        for e in entries:
            key = (e.lab_name, e.direction)
            if key in seen:
                raise ConfigError(f"duplicate threshold entry {e.lab_name}, {e.direction}")
            seen.add(key)
        object.__setattr__(self, "entries", entries)

    @property
    def n_classes(self):
        return len(self.entries)

    C = n_classes

    def by_lab(self):
        out = {}
        for e in self.entries:
            out.setdefault(e.lab_name, []).append(e)
        return out

    def unit_of(self, lab_name):
        return self.by_lab()[lab_name][0].unit


def load_thresholds(path) -> ThresholdTable:
    path = Path(path)
    entries = []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        need = {"class_id", "lab_name", "direction", "threshold", "unit"}
        if reader.fieldnames is None or not need <= set(reader.fieldnames):
            raise ConfigError(f"{path}: threshold config needs columns {sorted(need)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                class_id = int(row["class_id"])
                threshold = float(row["threshold"])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from exc
            try:
                entries.append(ThresholdEntry(class_id, row["lab_name"], row["direction"],
                                              threshold, row["unit"] or ""))
            except ConfigError as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from exc
    try:
        return ThresholdTable(tuple(entries))
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def write_thresholds(table: ThresholdTable, path):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["class_id", "lab_name", "direction", "threshold", "unit"])
        for e in table.entries:
            w.writerow([e.class_id, e.lab_name, e.direction, repr(e.threshold), e.unit])
    return path


def default_thresholds() -> ThresholdTable:
    """The bundled 108-class table (analyte, direction, cut-off)."""
    with resources.as_file(resources.files("ecglab.data") / "thresholds_108.csv") as p:
        return load_thresholds(p)


def classify_value(value, entry: ThresholdEntry) -> int:
    value = float(value)
    if not math.isfinite(value):
        raise DataError(f"non-finite value {value} for {entry.lab_name}")
    if entry.direction == "below":
        return int(value < entry.threshold)
    return int(value > entry.threshold)


@dataclass
class BloodTestEvent:
    visit_id: str
    timestamp: int
    results: dict = field(default_factory=dict)
    labels: np.ndarray | None = None

    @property
    def key(self):
        return (self.visit_id, self.timestamp)


def group_blood_tests(rows) -> list[BloodTestEvent]:
    """One event per distinct ``(visit_id, timestamp)``, in first-seen order.

    ``rows`` yields ``(visit_id, timestamp, lab_name, value)``; a repeated
    analyte within an event keeps the last value.
    """
    events = {}
    for visit_id, ts, lab_name, value in rows:
        key = (visit_id, to_micros(ts))
        ev = events.get(key)
        if ev is None:
            ev = events[key] = BloodTestEvent(visit_id, key[1])
        ev.results[lab_name] = value
    return list(events.values())


def encode_labels(event: BloodTestEvent, table: ThresholdTable) -> np.ndarray:
    """Label vector of length C. A measured analyte fills all of its direction classes."""
    out = np.full(table.n_classes, MISSING, dtype=np.int8)
    for e in table.entries:
        if e.lab_name in event.results:
            out[e.class_id] = classify_value(event.results[e.lab_name], e)
    return out


def encode_events(events, table: ThresholdTable):
    """Encode in place and return the stacked N x C label matrix."""
    for ev in events:
        ev.labels = encode_labels(ev, table)
    if not events:
        return np.empty((0, table.n_classes), dtype=np.int8)
    return np.stack([ev.labels for ev in events])


def read_lab_rows(path, table: ThresholdTable | None = None):
    """Parse the lab events CSV into ``(visit_id, micros, lab_name, value)`` tuples.

    With a table, analytes it does not know are skipped and a unit that
    disagrees with the table is a :class:`DataError` naming the row.
    """
    path = Path(path)
    units = {name: es[0].unit for name, es in table.by_lab().items()} if table else None
    rows = []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        need = {"visit_id", "timestamp", "lab_name", "value", "unit"}
        if reader.fieldnames is None or not need <= set(reader.fieldnames):
            raise FormatError(f"{path}: lab CSV needs columns {sorted(need)}")
        for lineno, row in enumerate(reader, start=2):
            name = row["lab_name"]
            if units is not None:
                if name not in units:
                    continue
                if row["unit"] != units[name]:
                    raise DataError(f"{path}:{lineno}: unit {row['unit']!r} for {name}, "
                                    f"threshold table uses {units[name]!r}")
            try:
                ts = to_micros(row["timestamp"])
                value = float(row["value"])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
            if not math.isfinite(value):
                raise DataError(f"{path}:{lineno}: non-finite value for {name}")
            rows.append((row["visit_id"], ts, name, value))
    return rows


def write_events(events, path):
    """Encoded events as CSV: visit_id, timestamp, then one column per class."""
    path = Path(path)
    n_classes = len(events[0].labels) if events else 0
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["visit_id", "timestamp"] + [f"c{j}" for j in range(n_classes)])
        for ev in events:
            w.writerow([ev.visit_id, to_iso(ev.timestamp)] + [int(v) for v in ev.labels])
    return path


def read_events(path) -> list[BloodTestEvent]:
    path = Path(path)
    events = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:2] != ["visit_id", "timestamp"]:
            raise FormatError(f"{path}: events file needs visit_id, timestamp header")
        for lineno, row in enumerate(reader, start=2):
            try:
                labels = np.array([int(v) for v in row[2:]], dtype=np.int8)
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
            if len(labels) != len(header) - 2 or not np.isin(labels, (-1, 0, 1)).all():
                raise FormatError(f"{path}:{lineno}: bad label row")
            events.append(BloodTestEvent(row[0], to_micros(row[1]), labels=labels))
    return events
