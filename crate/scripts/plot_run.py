#!/usr/bin/env python3
"""Plot a `quatmpc run` log: attitude tracking error, position and solve time.

    python3 scripts/plot_run.py out/trot_attitude.csv [-o trot.png]

Needs pandas, numpy and matplotlib.
"""
import argparse

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd


def attitude_error_deg(df):
    q = df[["q_s", "q_x", "q_y", "q_z"]].to_numpy()
    qr = df[["ref_q_s", "ref_q_x", "ref_q_y", "ref_q_z"]].to_numpy()
    dot = np.abs(np.sum(q * qr, axis=1)).clip(max=1.0)
    return np.degrees(2.0 * np.arccos(dot))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("csv")
    ap.add_argument("-o", "--output", help="image path (default: <csv>.png)")
    args = ap.parse_args()

    df = pd.read_csv(args.csv)
    t = df["time"]
    ticks = df[df["status"] != "held"]

    fig, ax = plt.subplots(3, 1, sharex=True, figsize=(8, 8))
    ax[0].plot(t, attitude_error_deg(df))
    ax[0].set_ylabel("attitude error [deg]")
    for c in "xyz":
        ax[1].plot(t, df[f"r_{c}"], label=c)
        ax[1].plot(t, df[f"ref_r_{c}"], "--", color=ax[1].lines[-1].get_color())
    ax[1].set_ylabel("position [m]")
    ax[1].legend(loc="upper right")
    ax[2].plot(ticks["time"], ticks["solve_ms"], ".", ms=2)
    ax[2].set_ylabel("solve [ms]")
    ax[2].set_xlabel("time [s]")
    fig.tight_layout()
    fig.savefig(args.output or args.csv.rsplit(".", 1)[0] + ".png", dpi=120)


if __name__ == "__main__":
    main()
