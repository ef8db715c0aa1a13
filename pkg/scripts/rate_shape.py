"""Measured test loss along T for the polynomial (alpha=1) and logistic losses.

Prints the sweep table behind the rate-shape check, next to the tabulated
rate curves, and writes both as CSV into --out.
"""

import argparse
import csv
from pathlib import Path

import numpy as np

from selfbound.bounds import table_rate_curves
from selfbound.data import population_sample_stats, sample_dataset
from selfbound.losses import make_loss
from selfbound.optim import OptimizerConfig, run_gd


def sweep(model, eta, Ts, args, seed):
    ds = sample_dataset(args.dim, args.n, args.gamma, seed)
    traj = run_gd(ds, model, OptimizerConfig(step_eta=eta, steps_T=max(Ts), record_cadence=1))
    return [population_sample_stats(model, traj.iterates[T - 1], ds.distribution, args.test_size, 7 + seed)
            for T in Ts]


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=256)
    p.add_argument("--dim", type=int, default=20)
    p.add_argument("--gamma", type=float, default=0.25)
    p.add_argument("--seeds", type=int, default=3)
    p.add_argument("--test-size", type=int, default=100_000)
    p.add_argument("--out", default="out/rate_shape")
    args = p.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    n = args.n
    Ts = [n // 4, n // 2, n, 2 * n, 4 * n, 16 * n, 64 * n]
    rows = []
    for name, model, eta in (("polynomial", make_loss("polynomial", alpha=1), 0.25),
                             ("logistic", make_loss("logistic"), 0.5)):
        curve = table_rate_curves(name, args.gamma, "T", Ts, fixed=n, alpha=1)
        for seed in range(args.seeds):
            stats = sweep(model, eta, Ts, args, seed)
            for T, (mean, se, err), rate in zip(Ts, stats, curve):
                rows.append([name, seed, T, mean, se, err, rate["rate"]])
            losses = np.array([s[0] for s in stats])
            print(f"{name:<11} seed {seed}: loss(T=n)/min = {losses[2] / losses.min():.2f}, "
                  f"argmin T = {Ts[int(losses.argmin())]} ({Ts[int(losses.argmin())] // n}n)")
            print("   " + "  ".join(f"T={T}:{m:.4f}" for T, (m, _, _) in zip(Ts, stats)))
    with open(out / "rate_shape.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["loss", "seed", "T", "test_loss", "stderr", "zero_one_error", "rate_curve"])
        for r in rows:
            w.writerow(r[:3] + [format(float(v), ".17g") for v in r[3:]])
    print(f"wrote {out / 'rate_shape.csv'}")


if __name__ == "__main__":
    main()
