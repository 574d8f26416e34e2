"""Plot normalized distance per grid cell from a ``spikefit grid`` summary CSV.

    python scripts/plot_grid.py runs/grid/summary.csv -o grid.png

Needs the optional ``plot`` extra (pandas, matplotlib).
"""

import argparse

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("summary")
    ap.add_argument("-o", "--output", default="grid.png")
    args = ap.parse_args()

    df = pd.read_csv(args.summary)
    cells = list(dict.fromkeys(df["cell"]))
    fig, ax = plt.subplots(figsize=(max(6, len(cells) * 0.6), 4))
    for method, g in df.groupby("method"):
        g = g.set_index("cell").reindex(cells)
        ax.errorbar(range(len(cells)), g["mean"], yerr=g["std"], marker="o", capsize=3, label=method)
    ax.set_xticks(range(len(cells)), cells, rotation=45, ha="right")
    ax.set_ylabel("normalized distance (%)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(args.output, dpi=120)


if __name__ == "__main__":
    main()
