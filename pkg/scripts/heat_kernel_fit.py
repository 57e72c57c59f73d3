"""Fit the heat-kernel constant C in q(t, ., .) <= C t^-beta and check the eigenvalue bounds.

For each fit window (1e-4, t_max] prints the fitted C and how many of the
first ``--modes`` wedge modes satisfy the eigenvalue lower bound without and
with the factor e, and the eigenfunction sup bound.  The default window
t_max = 1/lambda_1 is the one the library uses.
"""

import argparse
import math

from conexit.spectral import (
    ConeSpec, default_heat_kernel_constants, lemma_bounds_check, sigma_measure, wedge_spectrum,
)


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--angle", type=float, default=math.pi)
    p.add_argument("--modes", type=int, default=20)
    p.add_argument("--t-max", type=float, nargs="+", default=[None, 4.0, 8.0, 16.0])
    args = p.parse_args()

    spec = ConeSpec(2, args.angle)
    modes = wedge_spectrum(spec, args.modes)
    print("t_max       C        lower  lower_e  sup")
    for t_max in args.t_max:
        C, beta = default_heat_kernel_constants(spec, t_max=t_max)
        rows = lemma_bounds_check(modes, C, beta, sigma_measure(spec))
        label = "1/lambda_1" if t_max is None else f"{t_max:g}"
        print(f"{label:<10} {C:8.4f}  {sum(r.lower_ok for r in rows):5d}  {sum(r.lower_ok_with_e for r in rows):7d}"
              f"  {sum(r.sup_ok for r in rows):3d}")


if __name__ == "__main__":
    main()
