"""Convergence tables for the expanding circle and the 6:1 Wulff ellipse.

Prints our errors and eocs next to the reference columns.  Takes a few
minutes on one core; ``--threads`` spreads the rows over processes.

    python3 scripts/reproduce_tables.py --threads 4
"""

import argparse

from anisowillmore import AnisotropyModel
from anisowillmore.analysis import StudySpec, run_convergence_study

# n -> (h(t), error) per regime
REFERENCE = {
    "circle, tau = h0^2": {4: (4.166e-1, 4.830e-3), 5: (2.096e-1, 1.328e-3), 6: (1.049e-1, 3.403e-4),
                           7: (5.249e-2, 8.561e-5), 8: (2.625e-2, 2.144e-5)},
    "circle, tau = h0": {4: (4.482e-1, 1.916e-2), 5: (2.258e-1, 1.087e-2), 6: (1.132e-1, 5.804e-3),
                         7: (5.668e-2, 3.000e-3), 8: (2.836e-2, 1.525e-3)},
    "ellipse, tau = h0^2": {5: (1.435e0, 1.648e-1), 6: (6.487e-1, 3.476e-2), 7: (3.069e-1, 8.762e-3),
                            8: (1.525e-1, 2.182e-3)},
    "ellipse, tau = h0": {5: (1.274e0, 1.942e-1), 6: (5.875e-1, 7.089e-2), 7: (2.842e-1, 3.424e-2),
                          8: (1.396e-1, 1.724e-3)},  # the last error looks like a typo for 1.724e-2
}


def specs():
    iso, ell = AnisotropyModel.isotropic(), AnisotropyModel.elliptic(6, 1)
    yield "circle, tau = h0^2", StudySpec(iso, (4, 5, 6, 7, 8), 0.1542, power=2)
    yield "circle, tau = h0", StudySpec(iso, (4, 5, 6, 7, 8), 0.3927, power=1)
    yield "ellipse, tau = h0^2", StudySpec(ell, (5, 6, 7, 8), 0.596576, power=2, reference_length=24.172)
    yield "ellipse, tau = h0", StudySpec(ell, (5, 6, 7, 8), 0.77238, power=1, reference_length=24.172)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    for name, spec in specs():
        study = run_convergence_study(spec, workers=args.threads)
        ref = REFERENCE[name]
        print(f"\n{name}, t = {spec.t_final}")
        print(f"{'n':>2} {'h(t)':>10} {'error':>10} {'eoc':>6} | {'ref h(t)':>10} {'ref error':>10}")
        for row in study.rows:
            e = "" if row.eoc is None else f"{row.eoc:.3f}"
            rh, re = ref[row.n]
            print(f"{row.n:>2} {row.h_t:10.3e} {row.error:10.3e} {e:>6} | {rh:10.3e} {re:10.3e}")


if __name__ == "__main__":
    main()
