"""Plot mean and worst-case per-UE rate against the pairing budget.

Usage: python scripts/plot_rates.py results/dense_4x4.summary.json [out.png]

Needs matplotlib, which is not a package dependency.
"""

import json
import sys
from collections import defaultdict

import matplotlib.pyplot as plt


def main(argv):
    summary = json.loads(open(argv[0]).read())
    curves = defaultdict(list)
    for row in summary["schemes"]:
        if row["mean_rate_bps"] is not None:
            curves[row["scheme"]].append((row["b_tot"], row["mean_rate_bps"], row["worst_rate_bps"]))
    fig, (ax_mean, ax_worst) = plt.subplots(1, 2, figsize=(10, 4), sharex=True)
    for scheme, pts in curves.items():
        pts.sort()
        b = [p[0] for p in pts]
        ax_mean.plot(b, [p[1] / 1e3 for p in pts], marker="o", label=scheme)
        ax_worst.plot(b, [p[2] / 1e3 for p in pts], marker="o", label=scheme)
    ax_mean.set_title("mean per-UE rate")
    ax_worst.set_title("worst-drop per-UE rate")
    for ax in (ax_mean, ax_worst):
        ax.set_xlabel("b_tot")
        ax.set_ylabel("kbit/s")
        ax.grid(alpha=0.3)
    ax_mean.legend()
    fig.tight_layout()
    out = argv[1] if len(argv) > 1 else "rates.png"
    fig.savefig(out, dpi=120)
    print(f"wrote {out}")


if __name__ == "__main__":
    main(sys.argv[1:])
