//! Matplotlib script generation. The scripts read only the CSVs written by
//! a run.

use super::config::{ScenarioConfig, ScenarioKind};

const LABELING: &str = r##"import csv
import sys
from collections import defaultdict

import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else "{output}"
acc = defaultdict(list)
with open(path) as f:
    rows = csv.DictReader(line for line in f if not line.startswith("#"))
    for row in rows:
        if row["status"] == "ok":
            acc[(row["algorithm"], int(row["budget_per_task"]))].append(float(row["error_rate"]))

fig, ax = plt.subplots(figsize=(5, 4))
for alg in sorted({a for a, _ in acc}):
    xs = sorted(b for a, b in acc if a == alg)
    ys = [sum(acc[(alg, b)]) / len(acc[(alg, b)]) for b in xs]
    ax.semilogy(xs, [max(y, 1e-5) for y in ys], marker="o", label=alg)
ax.set_xlabel("number of queries per task")
ax.set_ylabel("probability of error")
ax.set_title("{id}")
ax.legend()
fig.tight_layout()
fig.savefig(path.rsplit(".", 1)[0] + ".png", dpi=150)
"##;

const SPECTRUM: &str = r##"import csv
import sys
from collections import defaultdict

import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else "{output}"
pts = defaultdict(list)
with open(path) as f:
    rows = csv.DictReader(line for line in f if not line.startswith("#"))
    for row in rows:
        pts[int(row["ell"])].append((float(row["re"]), float(row["im"])))

fig, axes = plt.subplots(1, len(pts), figsize=(5 * len(pts), 4), squeeze=False)
for ax, ell in zip(axes[0], sorted(pts, reverse=True)):
    re, im = zip(*pts[ell])
    ax.scatter(re, im, s=2)
    ax.set_aspect("equal")
    ax.set_xlabel("Re")
    ax.set_ylabel("Im")
    ax.set_title("ell = r = %d" % ell)
fig.tight_layout()
fig.savefig(path.rsplit(".", 1)[0] + ".png", dpi=150)
"##;

pub fn script(cfg: &ScenarioConfig) -> String {
    let tpl = match cfg.scenario.kind {
        ScenarioKind::Labeling => LABELING,
        ScenarioKind::Spectrum => SPECTRUM,
    };
    tpl.replace("{output}", &cfg.scenario.output.display().to_string())
        .replace("{id}", &cfg.scenario.id)
}
