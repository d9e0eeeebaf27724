"""Plot mean cumulative regret per agent from one or more trace CSVs.

usage: python docs/plot_regret.py out/simulate/trace.csv [more.csv ...] [-o regret.png]
"""
import argparse

import matplotlib.pyplot as plt
import pandas as pd

ap = argparse.ArgumentParser()
ap.add_argument("traces", nargs="+")
ap.add_argument("-o", "--output", default="regret.png")
args = ap.parse_args()

df = pd.concat(pd.read_csv(p, comment="#") for p in args.traces)
stats = df.groupby(["agent", "timestep"])["cum_regret"].agg(["mean", "sem"]).reset_index()
for agent, g in stats.groupby("agent"):
    plt.plot(g["timestep"], g["mean"], label=agent)
    plt.fill_between(g["timestep"], g["mean"] - 2 * g["sem"], g["mean"] + 2 * g["sem"], alpha=0.2)
plt.xlabel("t")
plt.ylabel("cumulative regret")
plt.legend()
plt.savefig(args.output, dpi=150)
