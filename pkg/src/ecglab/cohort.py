"""Visit-level train/test split, event/segment pairing, and test-set subsampling."""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from ._util import substream
from .errors import FormatError
from .labels import BloodTestEvent
from .waveform import Segment, WindowSpec, extract_segments


@dataclass(frozen=True)
class SplitAssignment:
    train_visits: frozenset
    test_visits: frozenset
    seed: int

    def assignment(self, visit_id):
        if visit_id in self.train_visits:
            return "train"
        if visit_id in self.test_visits:
            return "test"
        raise KeyError(visit_id)


@dataclass(frozen=True, eq=False)
class PairedSample:
    segment: Segment
    event: BloodTestEvent
    window: WindowSpec


def parse_ratio(text):
    """``"4:1"`` -> ``(4, 1)``."""
    try:
        a, b = (int(p) for p in str(text).split(":"))
    except ValueError as exc:
        raise ValueError(f"ratio must look like 4:1, got {text!r}") from exc
    if a <= 0 or b <= 0:
        raise ValueError("ratio parts must be positive")
    return a, b


def split_by_visit(visits, ratio=(4, 1), seed=0) -> SplitAssignment:
    """Uniform random visit-level split; the test share is rounded half-up."""
    visits = sorted(set(visits))
    if not visits:
        raise ValueError("cannot split an empty visit set")
    train_parts, test_parts = ratio
    if train_parts <= 0 or test_parts <= 0:
        raise ValueError("ratio parts must be positive")
    n_test = math.floor(len(visits) * test_parts / (train_parts + test_parts) + 0.5)
    order = substream(seed, "split").permutation(len(visits))
    test = frozenset(visits[i] for i in order[:n_test])
    train = frozenset(visits) - test
    return SplitAssignment(train, test, seed)


def write_split(split: SplitAssignment, path, extra_meta=None):
    """Split CSV plus a ``<name>.meta.json`` sidecar holding the seed."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["visit_id", "assignment"])
        for v in sorted(split.train_visits | split.test_visits):
            w.writerow([v, split.assignment(v)])
    meta = {"seed": split.seed, "n_train": len(split.train_visits),
            "n_test": len(split.test_visits), **(extra_meta or {})}
    meta_path = path.with_suffix(".meta.json")
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path, meta_path


def read_split(path) -> SplitAssignment:
    path = Path(path)
    train, test = set(), set()
    with path.open(newline="") as fh:
        for lineno, row in enumerate(csv.DictReader(fh), start=2):
            bucket = {"train": train, "test": test}.get(row.get("assignment"))
            if bucket is None:
                raise FormatError(f"{path}:{lineno}: assignment must be train or test")
            bucket.add(row["visit_id"])
    if train & test:
        raise FormatError(f"{path}: visits assigned to both sets")
    meta_path = path.with_suffix(".meta.json")
    seed = json.loads(meta_path.read_text())["seed"] if meta_path.exists() else 0
    return SplitAssignment(frozenset(train), frozenset(test), seed)


def _pairs_for_visit(events, recordings, win):
    out = []
    for ev in events:
        for rec in recordings:
            for seg in extract_segments(rec, ev.timestamp, win):
                out.append(PairedSample(seg, ev, win))
    return out


def pair_segments(events, recordings, win: WindowSpec, threads=1) -> list[PairedSample]:
    """Pair each event with every segment of its visit inside ``win``.

    ``recordings`` maps visit_id to a list of recordings. Events that end up
    with no segment simply contribute nothing. Output order follows
    ``events``, then recording order, then time, whatever ``threads`` is.
    """
    by_visit = {}
    for ev in events:
        by_visit.setdefault(ev.visit_id, []).append(ev)
    jobs = [(evs, recordings.get(v, ())) for v, evs in by_visit.items()]
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            chunks = list(pool.map(lambda j: _pairs_for_visit(j[0], j[1], win), jobs))
    else:
        chunks = [_pairs_for_visit(evs, recs, win) for evs, recs in jobs]
    # restore the caller's event order
    rank = {id(ev): i for i, ev in enumerate(events)}
    pairs = [p for chunk in chunks for p in chunk]
    pairs.sort(key=lambda p: rank[id(p.event)])
    return pairs


def group_by_event(pairs):
    """``{event key: [pairs...]}`` preserving first-seen order."""
    groups = {}
    for p in pairs:
        groups.setdefault(p.event.key, []).append(p)
    return groups


def sample_test_segments(groups, max_n=200, seed=0) -> list[PairedSample]:
    """Cap each event at ``max_n`` pairs by uniform sampling without replacement.

    ``groups`` is a mapping or iterable of per-event pair lists. Each event
    draws from its own stream keyed on ``(seed, visit_id, timestamp)``;
    retained pairs keep their original order.
    """
    if isinstance(groups, dict):
        groups = groups.values()
    out = []
    for group in groups:
        group = list(group)
        if len(group) <= max_n:
            out.extend(group)
            continue
        ev = group[0].event
        rng = substream(seed, "sampling", ev.visit_id, ev.timestamp)
        keep = sorted(rng.choice(len(group), size=max_n, replace=False))
        out.extend(group[i] for i in keep)
    return out
