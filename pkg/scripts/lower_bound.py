"""1-D GD on the completed polynomial tail against its floor and upper envelope."""

import argparse

import numpy as np

from selfbound.optim import lower_bound_run


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--T", type=int, default=100_000)
    p.add_argument("--alphas", type=float, nargs="+", default=[1, 2, 3])
    args = p.parse_args()
    for alpha in args.alphas:
        tr = lower_bound_run(alpha, args.T)
        slack = tr.risk / tr.floor
        print(f"alpha={alpha:g}: a={tr.floor_constant:.6f}, floor violations {tr.floor_violations}, "
              f"envelope violations {tr.envelope_violations}, min risk/floor {slack.min():.3f}")
        for t in np.unique(np.geomspace(1, args.T, 6).astype(int)):
            print(f"   t={t:>7}  risk={tr.risk[t - 1]:.6g}  floor={tr.floor[t - 1]:.6g}  "
                  f"envelope={tr.upper_envelope[t - 1]:.6g}")


if __name__ == "__main__":
    main()
