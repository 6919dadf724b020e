"""End-to-end glue: ingest -> split -> pair -> train -> evaluate."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import cohort, labels, metrics, model
from .waveform import SAMPLE_RATE, WindowSpec, load_recordings, zscore

WINDOWS = (3600, 1800, 900)


@dataclass
class Dataset:
    table: labels.ThresholdTable
    events: list
    recordings: dict

    @property
    def visits(self):
        return sorted({e.visit_id for e in self.events} | set(self.recordings))

    def events_for(self, visits):
        visits = set(visits)
        return [e for e in self.events if e.visit_id in visits]


def ingest(manifest_path, labs_path, thresholds_path, sample_rate=SAMPLE_RATE) -> Dataset:
    table = labels.load_thresholds(thresholds_path)
    rows = labels.read_lab_rows(labs_path, table)
    events = labels.group_blood_tests(rows)
    events.sort(key=lambda e: (e.visit_id, e.timestamp))
    labels.encode_events(events, table)
    recordings = load_recordings(manifest_path, expected_rate=sample_rate)
    return Dataset(table, events, recordings)


def load_dataset(events_path, manifest_path, thresholds_path, sample_rate=SAMPLE_RATE) -> Dataset:
    """Like :func:`ingest` but reads already-encoded events."""
    table = labels.load_thresholds(thresholds_path)
    events = labels.read_events(events_path)
    return Dataset(table, events, load_recordings(manifest_path, expected_rate=sample_rate))


def train_pairs(ds: Dataset, split: cohort.SplitAssignment, window=3600, threads=1):
    """All training pairs (no per-event cap)."""
    evs = ds.events_for(split.train_visits)
    return cohort.pair_segments(evs, ds.recordings, WindowSpec(window), threads=threads)


def test_pairs(ds: Dataset, split: cohort.SplitAssignment, window, max_n=200, seed=0, threads=1):
    evs = ds.events_for(split.test_visits)
    pairs = cohort.pair_segments(evs, ds.recordings, WindowSpec(window), threads=threads)
    return cohort.sample_test_segments(cohort.group_by_event(pairs), max_n=max_n, seed=seed)


def score_pairs(pairs, net):
    """Per-segment probabilities in pair order (z-scored on the fly, chunked)."""
    out = []
    step = 1024
    for i in range(0, len(pairs), step):
        chunk = pairs[i:i + step]
        X = zscore(np.stack([p.segment.values for p in chunk])).astype(np.float32)
        out.append(model.predict(X, net))
    if not out:
        return np.empty((0, net.cfg.n_classes))
    return np.concatenate(out)


def evaluate(pairs, net, table, window, n_boot=metrics.N_BOOT, seed=0):
    """Event-level results (mean segment probability per event) for one window."""
    if not pairs:
        return [metrics.IndicatorResult(e.class_id, window, 0, 0, lab_name=e.lab_name,
                                        range=e.range_label) for e in table.entries]
    seg_probs = score_pairs(pairs, net)
    seg_labels = np.stack([p.event.labels for p in pairs])
    groups = {}
    for i, p in enumerate(pairs):
        groups.setdefault(p.event.key, (p.event, []))[1].append(i)
    ev_probs = np.stack([metrics.aggregate_event_scores(seg_probs[idx]) for _, idx in groups.values()])
    ev_labels = np.stack([ev.labels for ev, _ in groups.values()])
    return metrics.evaluate_window(ev_probs, ev_labels, table, window,
                                   segment_probs=seg_probs, segment_labels=seg_labels,
                                   n_boot=n_boot, seed=seed)
