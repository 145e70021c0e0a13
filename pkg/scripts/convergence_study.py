"""Sup-norm error against the analytic density as the partition is refined."""
import argparse

import numpy as np

from markov_abstraction import Box, linear_gaussian_1d
from markov_abstraction.geometry import partition_uniform, support_recursion, truncated_domain
from markov_abstraction.oracle import AnalyticLinGauss
from markov_abstraction.projection import InterpScheme, algorithm1, algorithm2


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--alpha", type=float, default=6.0)
    ap.add_argument("--horizon", type=int, default=5)
    ap.add_argument("--deltas", type=float, nargs="+", default=[0.2, 0.1, 0.05, 0.025, 0.0125])
    args = ap.parse_args()

    schemes = {"constant": None, "linear": InterpScheme.polynomial_1d(2), "quadratic": InterpScheme.polynomial_1d(3)}
    for a in (1.2, 0.8):
        k, init = linear_gaussian_1d(a, 0.0, 0.1, args.alpha, Box([0.0], [1.0]))
        dom = truncated_domain(support_recursion(k.band, init.support, args.horizon))
        x = np.linspace(dom.lower[0], dom.upper[0], 20_000)
        ref = AnalyticLinGauss(a, 0.0, 0.1, 0.0, 1.0).density(args.horizon, x)
        print(f"a = {a}, N = {args.horizon}, alpha = {args.alpha}")
        print(f"{'delta':>8} " + " ".join(f"{name:>22}" for name in schemes))
        prev = {}
        for d in args.deltas:
            part = partition_uniform(dom, target_delta=d)
            cols = []
            for name, scheme in schemes.items():
                if scheme is None:
                    psi = algorithm2(k, init, part, None, args.horizon)[-1]
                else:
                    psi = algorithm1(k, init, part, scheme, args.horizon)[-1]
                err = float(np.max(np.abs(psi(x) - ref)))
                ratio = prev[name] / err if name in prev else float("nan")
                prev[name] = err
                cols.append(f"{err:12.3e} (x{ratio:5.2f})")
            print(f"{part.delta:8.4f} " + " ".join(f"{c:>22}" for c in cols))
        print()


if __name__ == "__main__":
    main()
