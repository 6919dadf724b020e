"""
From scores to a stratified report
==================================

Per-indicator AUC with a bootstrap interval, a Youden operating point, and
the strong / moderate / weak buckets.
"""

import numpy as np

from ecglab import metrics
from ecglab.synth import synth_thresholds

rng = np.random.default_rng(0)
table = synth_thresholds(4)
n = 400

# labels with some untested rows, scores that carry decreasing signal
labels = rng.integers(0, 2, size=(n, 4))
labels[rng.random((n, 4)) < 0.3] = -1
signal = np.array([2.0, 0.6, 0.25, 0.0])
probs = 1 / (1 + np.exp(-(signal * (labels == 1) + rng.normal(size=(n, 4)))))

results = metrics.evaluate_window(probs, labels, table, window=3600, n_boot=500, seed=0)
for r in metrics.sort_results(results):
    print(f"{r.lab_name:<14} {r.range:<22} AUC {r.auc:.3f} "
          f"[{r.ci_low:.3f}, {r.ci_high:.3f}]  {metrics.stratum(r.auc)}")

print("\nbucket counts (strong, moderate, weak):", metrics.stratify(results).counts())
print()
print(metrics.format_markdown(results, title="Demo window"))
