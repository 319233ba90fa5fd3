"""
Command-line pipeline
=====================

The same steps from the shell: generate a scenario suite, score one pair,
then build a comparison table against the reference. Here the commands go
through ``cli.main`` so the script is self-contained; from a shell use
``wasabi gen ...`` and so on.
"""

# %%
import json
import tempfile
from pathlib import Path

import numpy as np

from wasabi_metric import cli

work = Path(tempfile.mkdtemp(prefix="wasabi-demo-"))
d = 6
mean = np.linspace(0.003, 0.015, d)
suite = {
    "base": {"name": "cohort", "mean": mean.tolist(), "cov": np.diag((0.1 * mean) ** 2).tolist(), "n": 800},
    "effect_sizes": [0, 0.3, 0.8],
}
(work / "suite.json").write_text(json.dumps(suite))

# %%
cli.main(["-q", "gen", str(work / "suite.json"), "--out-dir", str(work), "--out", str(work / "manifest.json")])
manifest = json.loads((work / "manifest.json").read_text())
print("ground truth:", manifest["ground_truth_w2"])

# %%
cli.main(["-q", "compute", manifest["reference"], manifest["files"][-1]["path"]])

# %%
cands = [f["path"] for f in manifest["files"][1:]]
cli.main(["-q", "compare", manifest["reference"], *cands, "--sample-size", "200", "--repeats", "50",
          "--metric", "wasabi", "--metric", "mmd", "--format", "text"])
