"""Expansion rate of nearly crystalline Wulff shapes.

A Wulff shape of radius R moves self-similarly with R^4 = R0^4 + 2 c t,
where c = 1 for a consistent pair (gamma, gamma*).  The regularized
l1/linf pairs are only approximately dual, so c < 1 and the error against
the c = 1 radius grows with time.  This fits c from the discrete radii.

    python3 scripts/crystalline_rate.py --eps 1e-2 1e-3 --vertices 100 --steps 100
"""

import argparse

import numpy as np

from anisowillmore import AnisotropyModel, SimplicialSurface, SolverConfig, run_flow, wulff_sample
from anisowillmore.geometry import enclosed_area, perimeter


def fitted_rate(model, m, steps, power):
    X0 = SimplicialSurface.closed_polygon(wulff_sample(model, 1.0, m, spacing="arclength", phase=0.5))
    h0 = perimeter(X0) / m
    traj = run_flow(model, X0, SolverConfig(tau=h0**power, tau_tilde=h0**2, steps=steps))
    # effective radius from the enclosed area, which scales like R^2
    R = np.sqrt([enclosed_area(r.surface) / enclosed_area(X0) for r in traj.records])
    slope = np.polyfit(traj.times, R**4, 1)[0]
    dual_gap = abs(model.dual_norm(model.gamma_derivatives(np.array([[1.0, 0.0]]), 1)[0])[0] - 1.0)
    return slope / 2, dual_gap


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--kind", choices=("reg_l1", "reg_linf"), default="reg_linf")
    ap.add_argument("--eps", type=float, nargs="+", default=[1e-2, 1e-3])
    ap.add_argument("--vertices", type=int, default=100)
    ap.add_argument("--steps", type=int, default=100)
    ap.add_argument("--power", type=int, choices=(1, 2), default=1, help="tau = h0^power")
    args = ap.parse_args()
    print("eps        c      |gamma*(grad gamma(e1)) - 1|")
    for eps in args.eps:
        model = getattr(AnisotropyModel, args.kind)(eps)
        c, gap = fitted_rate(model, args.vertices, args.steps, args.power)
        print(f"{eps:<8.0e} {c:7.4f}  {gap:.3e}")


if __name__ == "__main__":
    main()
