"""
End to end with the command line
================================

The same steps a user runs from a shell, driven from Python. Training is
kept short here; see the README for realistic settings.
"""

import tempfile
from pathlib import Path

from ecglab import cli

work = Path(tempfile.mkdtemp(prefix="ecglab-run-"))
common = ["--out", str(work), "--seed", "3"]

for step in (["synth", "--visits", "40"],
             ["ingest"],
             ["split", "--ratio", "4:1"],
             ["train", "--epochs", "3", "--batch-size", "32", "--lr", "1e-3"],
             ["eval", "--boot", "200"],
             ["report"]):
    print("ecglab", " ".join(step))
    assert cli.main(step + common) == 0

print()
print((work / "report.md").read_text())
print("artifacts in", work)
