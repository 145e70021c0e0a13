"""Forward vs backward invariance: bounds from the formulas, chain estimates and a Monte-Carlo reference.

    python3 scripts/invariance_table.py --delta 1e-3 --trials 1000000
"""
import argparse

from markov_abstraction import Box, linear_gaussian_1d
from markov_abstraction.invariance import InvarianceProblem, compare_methods
from markov_abstraction.oracle import mc_invariance


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--delta", type=float, default=1e-3, help="partition size for the chain runs")
    ap.add_argument("--formula-delta", type=float, default=0.7e-4, help="partition size for the bound-only rows")
    ap.add_argument("--horizon", type=int, default=10)
    ap.add_argument("--trials", type=int, default=10**6)
    ap.add_argument("--seed", type=int, default=2024)
    args = ap.parse_args()

    safe = Box([0.0], [1.0])
    for a in (1.2, 0.8):
        k, init = linear_gaussian_1d(a, 0.0, 0.1, 2.4, safe)
        prob = InvarianceProblem(safe, args.horizon, k, init)
        print(f"== a = {a}")
        print(f"-- bounds only, delta = {args.formula_delta:g}")
        print(compare_methods(prob, args.formula_delta, run_chains=False).table())
        print(f"-- chains, delta = {args.delta:g}")
        print(compare_methods(prob, args.delta).table())
        p, se = mc_invariance(k, init, safe, args.horizon, trials=args.trials, rng_seed=args.seed)
        print(f"monte carlo: {p:.6f} +/- {se:.6f} ({args.trials} trajectories)\n")


if __name__ == "__main__":
    main()
