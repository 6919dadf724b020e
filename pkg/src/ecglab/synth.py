"""Synthetic cohort with planted ECG-label associations.

Every visit gets ``events_per_visit`` blood tests spaced far enough apart
that their 1 h windows never overlap, and ``recordings_per_visit`` short
recordings, each anchored near one event (round-robin).

Waveform model for a recording anchored at event ``e``::

    x(t) = beat(t) + wander(t) + sum_j a_ej * sin(2*pi*f_j*t + phi_j) + noise

``beat`` is a periodic sum-of-Gaussians P/QRS/T template at a per-recording
heart rate, ``f_j`` is a class-specific tone frequency and the planted
feature is the tone amplitude

    a_ej = |feature_base + effect_j * feature_shift * y_ej + N(0, feature_jitter^2)|

with ``y_ej`` the event's true 0/1 label. For ``effect_j = 0`` the amplitude
is independent of the label. The best achievable AUC for class ``j`` from
the amplitude alone is about ``Phi(effect_j * feature_shift /
(feature_jitter * sqrt(2)))`` (see :func:`amplitude_auc_ceiling`).
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import norm

from ._util import MICROS, substream, to_iso, to_micros
from .labels import ThresholdEntry, ThresholdTable, default_thresholds, write_thresholds
from .waveform import Recording, write_manifest, write_recording

GAIN = 0.001  # mV per count
BASE_TIME = "2021-01-01T00:00:00"

# (relative position in the RR interval, width s, amplitude mV)
BEAT_WAVES = (
    (-0.20, 0.025, 0.15),   # P
    (-0.025, 0.010, -0.10),  # Q
    (0.0, 0.012, 1.00),     # R
    (0.025, 0.010, -0.25),  # S
    (0.28, 0.045, 0.30),    # T
)


def _per_class(value, n, name):
    arr = np.broadcast_to(np.asarray(value, dtype=float), (n,)).copy()
    if ((arr < 0) | (arr > 1)).any():
        raise ValueError(f"{name} must lie in [0, 1]")
    return tuple(float(v) for v in arr)


@dataclass(frozen=True)
class SynthConfig:
    n_visits: int = 50
    recordings_per_visit: int = 2
    events_per_visit: int = 2
    sample_rate: int = 500
    n_classes: int = 8
    effect_sizes: tuple = (1.0, 1.0, 0.3, 0.3, 0.0, 0.0, 0.0, 0.0)
    noise_std: float = 0.05
    missing_prob: tuple | float = 0.2
    abnormal_rate: tuple | float = 0.5
    seed: int = 0
    recording_seconds: tuple = (40.0, 80.0)
    anchor_jitter: float = 1200.0
    event_spacing: float = 3 * 3600.0
    feature_base: float = 0.10
    feature_shift: float = 0.10
    feature_jitter: float = 0.025
    tone_band: tuple = (4.0, 40.0)
    heart_rate: tuple = (55.0, 95.0)

    def __post_init__(self):
        if self.n_visits < 1 or self.events_per_visit < 1 or self.recordings_per_visit < 0:
            raise ValueError("need at least one visit and one event per visit")
        if self.sample_rate <= 0 or self.n_classes < 1:
            raise ValueError("sample_rate and n_classes must be positive")
        object.__setattr__(self, "effect_sizes",
                           _per_class(self.effect_sizes, self.n_classes, "effect_sizes"))
        object.__setattr__(self, "missing_prob",
                           _per_class(self.missing_prob, self.n_classes, "missing_prob"))
        object.__setattr__(self, "abnormal_rate",
                           _per_class(self.abnormal_rate, self.n_classes, "abnormal_rate"))
        if self.noise_std < 0 or self.feature_jitter < 0:
            raise ValueError("noise levels must be non-negative")
        if self.event_spacing <= 2 * 3600 + self.anchor_jitter + self.recording_seconds[1]:
            raise ValueError("event_spacing too small: 1 h windows of one visit would overlap")

    @property
    def tone_frequencies(self):
        lo, hi = self.tone_band
        if self.n_classes == 1:
            return np.array([lo])
        return lo + (hi - lo) * np.arange(self.n_classes) / (self.n_classes - 1)


def amplitude_auc_ceiling(cfg: SynthConfig):
    """Per-class AUC of an ideal amplitude reader (ignores the |.| fold, which is tiny)."""
    d = np.asarray(cfg.effect_sizes) * cfg.feature_shift
    if cfg.feature_jitter == 0:
        return np.where(d > 0, 1.0, 0.5)
    return norm.cdf(d / (cfg.feature_jitter * np.sqrt(2)))


def synth_thresholds(n_classes) -> ThresholdTable:
    """One analyte per class, taken in order from the bundled table (distinct names)."""
    picked, seen = [], set()
    for e in default_thresholds().entries:
        if e.lab_name in seen or e.threshold == 0:
            continue
        seen.add(e.lab_name)
        picked.append(ThresholdEntry(len(picked), e.lab_name, e.direction, e.threshold, e.unit))
        if len(picked) == n_classes:
            return ThresholdTable(tuple(picked))
    raise ValueError(f"at most {len(picked)} synthetic classes are supported")


def beat_template(sample_rate, rr_seconds):
    t = (np.arange(int(round(rr_seconds * sample_rate))) / sample_rate) - rr_seconds / 2
    out = np.zeros_like(t)
    for pos, width, amp in BEAT_WAVES:
        out += amp * np.exp(-0.5 * ((t - pos) / width) ** 2)
    return out


def _lab_value(rng, entry, abnormal):
    scale = max(abs(entry.threshold), 1.0)
    off = scale * rng.uniform(0.02, 0.5)
    below = entry.direction == "below"
    # abnormal lands on the flagged side of the cut, normal on the other
    return round(entry.threshold + (-off if below == bool(abnormal) else off), 4)


def _visit(cfg: SynthConfig, table, idx, base_micros):
    rng = substream(cfg.seed, "synth", idx)
    vid = f"V{idx:06d}"
    C = cfg.n_classes
    fs = cfg.sample_rate
    start = base_micros + idx * 86400 * MICROS + int(rng.integers(0, 3600)) * MICROS
    events = []
    for k in range(cfg.events_per_visit):
        ts = start + int(round(k * cfg.event_spacing * MICROS)) + int(rng.integers(0, 1000)) * 1000
        y = (rng.random(C) < np.asarray(cfg.abnormal_rate)).astype(np.int8)
        missing = rng.random(C) < np.asarray(cfg.missing_prob)
        amp = np.abs(cfg.feature_base + np.asarray(cfg.effect_sizes) * cfg.feature_shift * y
                     + rng.normal(0.0, cfg.feature_jitter, C))
        labs = [(table.entries[j], _lab_value(rng, table.entries[j], y[j]))
                for j in range(C) if not missing[j]]
        events.append({"timestamp": ts, "y": y, "missing": missing, "amp": amp, "labs": labs})

    freqs = cfg.tone_frequencies
    recs = []
    for r in range(cfg.recordings_per_visit):
        ev = events[r % len(events)]
        dur = rng.uniform(*cfg.recording_seconds)
        n = int(round(dur * fs))
        center = ev["timestamp"] + int(round(rng.uniform(-cfg.anchor_jitter, cfg.anchor_jitter) * MICROS))
        rec_start = center - n * MICROS // (2 * fs)
        t = np.arange(n) / fs
        rr = 60.0 / rng.uniform(*cfg.heart_rate)
        tmpl = beat_template(fs, rr)
        shift = int(rng.integers(0, len(tmpl)))
        x = np.resize(np.roll(tmpl, shift), n)
        x += 0.05 * np.sin(2 * np.pi * rng.uniform(0.15, 0.35) * t + rng.uniform(0, 2 * np.pi))
        phases = rng.uniform(0, 2 * np.pi, C)
        x += (ev["amp"][:, None] * np.sin(2 * np.pi * freqs[:, None] * t + phases[:, None])).sum(0)
        x += rng.normal(0.0, cfg.noise_std, n)
        raw = np.clip(np.round(x / GAIN), -32768, 32767).astype("<i2")
        recs.append(Recording(vid, int(rec_start), fs, GAIN, raw))
    return vid, events, recs


@dataclass
class CohortManifest:
    out_dir: Path
    waveform_manifest: Path
    labs: Path
    thresholds: Path
    ground_truth: Path
    config: Path
    files: list = field(default_factory=list)


def generate_cohort(cfg: SynthConfig, out_dir, threads=1) -> CohortManifest:
    """Write waveforms, manifest, lab CSV, threshold CSV and ground truth under ``out_dir``."""
    out = Path(out_dir)
    wdir = out / "waveforms"
    wdir.mkdir(parents=True, exist_ok=True)
    table = synth_thresholds(cfg.n_classes)
    base = to_micros(BASE_TIME)

    def work(i):
        return _visit(cfg, table, i, base)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            visits = list(pool.map(work, range(cfg.n_visits)))
    else:
        visits = [work(i) for i in range(cfg.n_visits)]

    entries, files = [], []
    for vid, _, recs in visits:
        for r, rec in enumerate(recs):
            rel = Path("waveforms") / f"{vid}_{r:02d}.ecgw"
            write_recording(rec, out / rel)
            entries.append((vid, rel))
            files.append(out / rel)

    m = CohortManifest(out, out / "manifest.csv", out / "labs.csv", out / "thresholds.csv",
                       out / "ground_truth.csv", out / "synth_config.json", files)
    write_manifest(entries, m.waveform_manifest)
    write_thresholds(table, m.thresholds)
    with m.labs.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["visit_id", "timestamp", "lab_name", "value", "unit"])
        for vid, events, _ in visits:
            for ev in events:
                for entry, value in ev["labs"]:
                    w.writerow([vid, to_iso(ev["timestamp"]), entry.lab_name, repr(value), entry.unit])
    with m.ground_truth.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["visit_id", "timestamp", "class_id", "true_label", "planted_feature"])
        for vid, events, _ in visits:
            for ev in events:
                for j in range(cfg.n_classes):
                    w.writerow([vid, to_iso(ev["timestamp"]), j, int(ev["y"][j]),
                                f"{ev['amp'][j]:.9f}"])
    m.config.write_text(json.dumps(asdict(cfg), indent=2, sort_keys=True) + "\n")
    m.files += [m.waveform_manifest, m.labs, m.thresholds, m.ground_truth, m.config]
    return m


def read_ground_truth(path):
    """``{(visit_id, micros): (labels int8[C], features float[C])}``."""
    rows = {}
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            key = (row["visit_id"], to_micros(row["timestamp"]))
            rows.setdefault(key, []).append((int(row["class_id"]), int(row["true_label"]),
                                             float(row["planted_feature"])))
    out = {}
    for key, items in rows.items():
        items.sort()
        out[key] = (np.array([i[1] for i in items], dtype=np.int8),
                    np.array([i[2] for i in items]))
    return out
