"""Compare interface-node search variants on one geometry.

The two-digit codes pick the intermediate reconstruction (1: linear,
2: gradient-corrected) and the search direction for the outer and
higher-order nodes; 3D codes carry an A/B/C prefix for the inner-node
strategy.  Defaults reproduce the 2D ranking experiment at p = 5 where
the simplest variants lose roughly one order of convergence.
"""

import argparse

from cutmesh import InsufficientDataError, StudyConfig, estimate_rate, run_combined_study


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--variants", nargs="+", default=["11", "12", "13", "14", "23"])
    ap.add_argument("--order", type=int, default=5)
    ap.add_argument("--levelset", default="circle")
    ap.add_argument("--dimension", type=int, default=2, choices=[2, 3])
    ap.add_argument("--resolutions", type=int, nargs="+", default=[6, 10, 20, 30, 50])
    args = ap.parse_args()

    print(f"{args.levelset} p={args.order}, n={args.resolutions}")
    for code in args.variants:
        cfg = StudyConfig(dimension=args.dimension, order=args.order,
                          resolutions=tuple(args.resolutions),
                          level_set=args.levelset, variant=code)
        ifc, _ = run_combined_study(cfg)
        finest = ifc[-1].errors["eps_1"]
        try:
            slope = f"{estimate_rate(ifc, 'eps_1').slope:5.2f}"
        except InsufficientDataError:
            slope = "  n/a"
        print(f"  variant {code:>4s}: rate {slope}   eps_1({ifc[-1].n}) = {finest:.3e}")


if __name__ == "__main__":
    main()
