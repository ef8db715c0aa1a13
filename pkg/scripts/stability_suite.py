"""Empirical LOO stability against the GD, SGD and adaptive-exponential bounds.

Usage: python scripts/stability_suite.py [--seeds 5] [--n 32] [--dim 20] [--gamma 0.25]
"""

import argparse

from selfbound.bounds import corollary_delta
from selfbound.data import sample_dataset
from selfbound.losses import make_loss
from selfbound.optim import OptimizerConfig
from selfbound.stability import (empirical_stability_exp_adaptive, empirical_stability_gd,
                                 empirical_stability_sgd)


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--n", type=int, default=32)
    p.add_argument("--dim", type=int, default=20)
    p.add_argument("--gamma", type=float, default=0.25)
    args = p.parse_args()

    print(f"{'setting':<28}{'T':>7}{'seed':>6}{'emp l1':>12}{'bound l1':>12}{'ratio':>8}")
    for T in (100, 1000, 10_000):
        cases = [
            ("gd logistic", make_loss("logistic"), 0.5),
            ("gd polynomial a=2", make_loss("polynomial", alpha=2), 1 / 12),
            ("gd superexp a=2", make_loss("superexp", alpha=2, delta=corollary_delta("superexp", T)), "auto"),
        ]
        for seed in range(args.seeds):
            ds = sample_dataset(args.dim, args.n, args.gamma, seed)
            for name, model, eta in cases:
                rep = empirical_stability_gd(ds, model, OptimizerConfig(step_eta=eta, steps_T=T))
                print(f"{name:<28}{T:>7}{seed:>6}{rep.empirical_l1:>12.4g}{rep.bound_l1:>12.4g}{rep.ratio_l1:>8.3f}")
            rep = empirical_stability_exp_adaptive(ds, OptimizerConfig(step_eta=1.0, steps_T=T))
            print(f"{'gd exponential (eta=1)':<28}{T:>7}{seed:>6}{rep.empirical_l1:>12.4g}"
                  f"{rep.bound_l1:>12.4g}{rep.ratio_l1:>8.3f}")
    ds = sample_dataset(args.dim, args.n, args.gamma, 0)
    rep = empirical_stability_sgd(ds, make_loss("logistic"), OptimizerConfig(step_eta=0.5, steps_T=2000), 20)
    print(f"sgd logistic, T=2000, R=20: l1 {rep.empirical_l1:.4g} +- {rep.stderr_l1:.2g}, "
          f"bound {rep.bound_l1:.4g}, ratio {rep.ratio_l1:.3f}")


if __name__ == "__main__":
    main()
