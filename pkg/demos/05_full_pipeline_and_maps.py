"""Run the whole pipeline at ci scale and open the resulting glyph maps.

Produces every artifact the explorer serves: params.csv, vessels.voxl, the
trained checkpoint, features, embeddings, clusters, SVG maps, and the
quantitative comparison report.
"""

import json
from pathlib import Path

from vesselspace.pipeline import artifact_path, preset_config, run_all

out_dir = Path("demo_run")
config = preset_config("ci", seed=1)
written = run_all(config, out_dir)

for stage, paths in written.items():
    for path in paths:
        print(f"{stage:9s} -> {path}")

report = json.loads(artifact_path(out_dir, "report").read_text())
print("\ncomparison report:")
print(json.dumps(report, indent=2))

print(
    "\nnext: serve the interactive explorer with\n"
    f"  vesselspace serve --snapshot-dir {out_dir} --port 8080"
)
