"""
A synthetic cohort, one visit at a time
=======================================

Generate a small cohort, load one recording back from disk and cut it into
10-second segments around a blood-test event.
"""

import tempfile

import numpy as np

from ecglab import labels, synth
from ecglab.waveform import WindowSpec, extract_segments, load_recordings, normalize_segment

out = tempfile.mkdtemp(prefix="ecglab-demo-")
cfg = synth.SynthConfig(n_visits=6, events_per_visit=2, recordings_per_visit=3, seed=0)
m = synth.generate_cohort(cfg, out)
print("cohort written to", out)
print("class tone frequencies (Hz):", np.round(cfg.tone_frequencies, 1))
print("ideal amplitude-reader AUC per class:", np.round(synth.amplitude_auc_ceiling(cfg), 3))

# the lab table is plain CSV; grouping by (visit, timestamp) gives events
table = labels.load_thresholds(m.thresholds)
events = labels.group_blood_tests(labels.read_lab_rows(m.labs, table))
labels.encode_events(events, table)
ev = events[0]
print("\nfirst event:", ev.visit_id, ev.timestamp, "labels:", ev.labels.tolist())

# recordings of that visit, and the segments each contributes to a 1 h window
recs = load_recordings(m.waveform_manifest)[ev.visit_id]
for rec in recs:
    segs = extract_segments(rec, ev.timestamp, WindowSpec(3600))
    print(f"recording at {(rec.start_time - ev.timestamp) / 1e6:+8.1f} s, "
          f"{rec.duration:5.1f} s long -> {len(segs)} segments")

# z-scored segments have zero mean and unit spread
seg = normalize_segment(extract_segments(recs[0], ev.timestamp, WindowSpec(3600))[0])
print("\nz-scored segment mean/std:", round(seg.values.mean(), 12), round(seg.values.std(), 12))
