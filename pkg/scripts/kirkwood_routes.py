#!/usr/bin/env python3
"""Hard-rod Kirkwood closure: second-order term by the recursion, the closed form and the graph sum.

The graph sum exponentiates the recursion, so its second term is
``tilde_2 + tilde_1^2 / 2``; the last column checks that.
"""
import argparse

from icx.correlations import mu_expansion, rooted_term, tilde_family, truncate
from icx.integrators import Domain, IntegratorConfig, aligned_nodes
from icx.kirkwood import hard_rod, kirkwood_family, mu_graph_expansion, tilde_closed_form


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--radius", type=float, default=3.0)
    ap.add_argument("--densities", type=float, nargs="+", default=[0.01, 0.02, 0.05, 0.1])
    args = ap.parse_args()

    g = hard_rod(1.0)
    cfg = IntegratorConfig("quad", nodes=aligned_nodes(args.radius, 1.0, 600))
    dom = Domain.ball(args.radius, 1)
    print(f"{'rho':>6} {'recursion':>14} {'closed':>14} {'graph':>14} {'t2+t1^2/2':>14} {'2.5rho^2':>12} {'4.5rho^2':>12}")
    for rho in args.densities:
        fam = kirkwood_family(rho, g, 3)
        rhoT = truncate(fam)
        rec = mu_expansion(tilde_family(rhoT), args.radius, 2, cfg, check_halved=False).terms
        closed = rooted_term(tilde_closed_form(g, rhoT, 2), 1, dom, 2, cfg)[0]
        graph = mu_graph_expansion(rho, g, 2, args.radius, cfg, check_halved=False).terms[1]
        print(f"{rho:6.3f} {rec[1]:14.8e} {closed:14.8e} {graph:14.8e} {rec[1] + rec[0] ** 2 / 2:14.8e} "
              f"{2.5 * rho**2:12.6e} {4.5 * rho**2:12.6e}")


if __name__ == "__main__":
    main()
