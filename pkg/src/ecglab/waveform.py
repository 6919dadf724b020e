"""Single-lead waveform files, recordings, and windowed 10-second segments.

Binary layout (little-endian)::

    magic "ECGW" | version u16 | sample_rate u32 | gain f64 | start_time_micros i64
    | n_samples u64 | visit_id_len u16 | visit_id utf-8 | n_samples x i16

Timestamps are integer microseconds since the Unix epoch throughout.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._util import MICROS
from .errors import FormatError, IntegrityError

MAGIC = b"ECGW"
VERSION = 1
_HEADER = struct.Struct("<4sHIdqQH")

SAMPLE_RATE = 500
SEG_SECONDS = 10
FLAT_STD = 1e-8
NORMALIZATIONS = ("raw", "zscore")


@dataclass(frozen=True, eq=False)
class Recording:
    """One continuous recording.

    ``raw`` holds the stored int16 counts; ``samples`` (millivolts) is
    ``raw * gain`` and is computed once.
    """

    visit_id: str
    start_time: int
    sample_rate: int
    gain: float
    raw: np.ndarray
    samples: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        raw = np.ascontiguousarray(self.raw, dtype="<i2")
        if raw.ndim != 1 or raw.size == 0:
            raise ValueError("recording needs a non-empty 1-D sample array")
        raw.setflags(write=False)
        samples = raw * float(self.gain)
        samples.setflags(write=False)
        object.__setattr__(self, "raw", raw)
        object.__setattr__(self, "samples", samples)

    @property
    def n_samples(self):
        return self.raw.size

    @property
    def duration(self):
        return self.n_samples / self.sample_rate

    @property
    def end_time(self):
        """Exclusive end: the instant one sample period after the last sample."""
        return self.start_time + self.n_samples * MICROS // self.sample_rate


@dataclass(frozen=True)
class WindowSpec:
    half_width: float
    seg_seconds: float = SEG_SECONDS

    def __post_init__(self):
        if not self.half_width > 0:
            raise ValueError("half_width must be positive")
        if not self.seg_seconds > 0:
            raise ValueError("seg_seconds must be positive")

    @property
    def half_width_micros(self):
        return int(round(self.half_width * MICROS))


@dataclass(frozen=True, eq=False)
class Segment:
    visit_id: str
    recording_offset: int
    start_time: int
    values: np.ndarray
    normalization: str = "raw"

    def key(self):
        """Identity of the underlying slice, independent of normalization."""
        return (self.visit_id, self.start_time, self.recording_offset, len(self.values))


def encode_recording(rec: Recording) -> bytes:
    vid = rec.visit_id.encode("utf-8")
    header = _HEADER.pack(MAGIC, VERSION, rec.sample_rate, rec.gain, rec.start_time,
                          rec.n_samples, len(vid))
    return header + vid + rec.raw.astype("<i2", copy=False).tobytes()


def decode_recording(buf: bytes, name="<bytes>", expected_rate=None) -> Recording:
    if len(buf) < _HEADER.size:
        raise FormatError(f"{name}: truncated header")
    magic, version, rate, gain, start, n, vid_len = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise FormatError(f"{name}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{name}: unsupported version {version}")
    if rate == 0:
        raise FormatError(f"{name}: sample_rate is zero")
    if not np.isfinite(gain) or gain <= 0:
        raise FormatError(f"{name}: gain must be positive and finite, got {gain}")
    if n == 0:
        raise FormatError(f"{name}: header declares zero samples")
    if expected_rate is not None and rate != expected_rate:
        raise FormatError(f"{name}: sample_rate {rate} Hz, expected {expected_rate} Hz")
    off = _HEADER.size
    if len(buf) < off + vid_len:
        raise FormatError(f"{name}: truncated visit id")
    try:
        visit_id = buf[off:off + vid_len].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"{name}: visit id is not utf-8") from exc
    body = buf[off + vid_len:]
    if len(body) != 2 * n:
        raise IntegrityError(
            f"{name}: header declares {n} samples, body holds {len(body) / 2:g}")
    raw = np.frombuffer(body, dtype="<i2")
    return Recording(visit_id, start, rate, gain, raw)


def load_recording(path, expected_rate=None) -> Recording:
    path = Path(path)
    return decode_recording(path.read_bytes(), name=str(path), expected_rate=expected_rate)


def write_recording(rec: Recording, path):
    path = Path(path)
    path.write_bytes(encode_recording(rec))
    return path


def read_manifest(path):
    """Return ``[(visit_id, path), ...]``; relative paths resolve against the manifest."""
    path = Path(path)
    out = []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"visit_id", "path"} <= set(reader.fieldnames):
            raise FormatError(f"{path}: manifest needs columns visit_id, path")
        for lineno, row in enumerate(reader, start=2):
            if not row["visit_id"] or not row["path"]:
                raise FormatError(f"{path}:{lineno}: empty visit_id or path")
            p = Path(row["path"])
            out.append((row["visit_id"], p if p.is_absolute() else path.parent / p))
    return out


def write_manifest(entries, path):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["visit_id", "path"])
        for visit_id, p in entries:
            w.writerow([visit_id, Path(p).as_posix()])
    return path


def load_recordings(manifest_path, expected_rate=SAMPLE_RATE):
    """Load every file in a manifest; returns ``{visit_id: [Recording, ...]}``.

    Recordings of one visit are ordered by start time.
    """
    by_visit = {}
    for visit_id, p in read_manifest(manifest_path):
        rec = load_recording(p, expected_rate=expected_rate)
        if rec.visit_id != visit_id:
            raise IntegrityError(f"{p}: file visit id {rec.visit_id!r} != manifest {visit_id!r}")
        by_visit.setdefault(visit_id, []).append(rec)
    for recs in by_visit.values():
        recs.sort(key=lambda r: (r.start_time, r.n_samples))
    return by_visit


def _ceil_div(a, b):
    return -(-a // b)


def extract_segments(rec: Recording, center: int, win: WindowSpec) -> list[Segment]:
    """All segments of ``rec`` lying inside ``center +/- half_width``.

    The recording is cut into consecutive ``L``-sample slices starting at its
    first sample; a slice is kept when its whole span falls in the window,
    which is closed at both ends. Because the grid belongs to the recording,
    a narrower window around the same center always selects a subset of a
    wider one. When the recording starts inside the window this is the same
    as tiling the recording/window intersection from its left edge; a
    trailing partial slice is dropped either way. Sample ``i`` sits at
    ``start_time + i * 1e6 / sample_rate`` and a slice spans
    ``[t_first, t_first + L / rate]``.
    """
    fs = rec.sample_rate
    seg_len = int(round(win.seg_seconds * fs))
    lo = max(rec.start_time, center - win.half_width_micros)
    hi = center + win.half_width_micros
    # exact integer arithmetic in units of 1/(fs * 1e6) s
    first = _ceil_div((lo - rec.start_time) * fs, MICROS)
    first = _ceil_div(first, seg_len) * seg_len
    last_end = min(rec.n_samples, ((hi - rec.start_time) * fs) // MICROS)
    if last_end - first < seg_len:
        return []
    n_seg = (last_end - first) // seg_len
    out = []
    for k in range(n_seg):
        i0 = first + k * seg_len
        out.append(Segment(
            visit_id=rec.visit_id,
            recording_offset=i0,
            start_time=rec.start_time + i0 * MICROS // fs,
            values=rec.samples[i0:i0 + seg_len],
        ))
    return out


def zscore(values):
    """Per-row z-score with population std; flat rows (std < 1e-8) become zeros."""
    x = np.asarray(values, dtype=np.float64)
    mean = x.mean(axis=-1, keepdims=True)
    std = x.std(axis=-1, keepdims=True)
    flat = std < FLAT_STD
    return np.where(flat, 0.0, (x - mean) / np.where(flat, 1.0, std))


def normalize_segment(seg: Segment, policy="zscore") -> Segment:
    if policy not in NORMALIZATIONS:
        raise ValueError(f"unknown normalization {policy!r}")
    if policy == "raw":
        values = np.asarray(seg.values, dtype=np.float64)
    else:
        values = zscore(seg.values)
    return Segment(seg.visit_id, seg.recording_offset, seg.start_time, values, policy)
