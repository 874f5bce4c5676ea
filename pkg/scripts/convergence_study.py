"""Convergence of the deterministic residuals and of the symbol estimator.

Writes three CSV tables to --out:

* representation.csv  residual against the number of r-nodes
* equations.csv       forward/backward residuals against the step h
* symbol.csv          Monte Carlo symbol bias against h, plain and extrapolated
"""

import argparse
import csv
from pathlib import Path

from levycomp.generator import gaussian_bump, levy_symbol
from levycomp.montecarlo import symbol_estimate
from levycomp.orders import hinge
from levycomp.specs import DiffusionCoefficient, LevyMeasure, ProcessSpec, TripletSchedule
from levycomp.spectral import spectral_grid
from levycomp.verify import (backward_equation_residual, forward_equation_residual,
                             representation_residual)


def write(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    print(f"wrote {path}")


def main():
    ap = argparse.ArgumentParser(description="residual and bias convergence tables")
    ap.add_argument("--out", default="out/convergence")
    ap.add_argument("--symbol-paths", type=int, default=200_000)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    a = TripletSchedule.constant(0.0, 1.0)
    b = TripletSchedule.constant(0.0, 4.0)
    jumpy = TripletSchedule.constant(0.0, 1.0, LevyMeasure.atoms([1.0], [1.0]))
    rows = []
    for n in (2, 4, 8, 16, 32, 64, 128):
        rows.append(["brownian 1 vs 4, hinge", n,
                     representation_residual(a, b, hinge(1.0), 0.0, 1.0, n, spectral_grid(b, 0.0, 1.0))])
        rows.append(["brownian vs +poisson, bump", n,
                     representation_residual(a, jumpy, gaussian_bump(1.0), 0.0, 1.0, n,
                                             spectral_grid(jumpy, 0.0, 1.0, n=8192))])
    write(out / "representation.csv", ["case", "r_nodes", "residual"], rows)

    rows = []
    for h in (1e-2, 5e-3, 2e-3, 1e-3, 5e-4, 1e-4, 5e-5):
        rows.append([h, forward_equation_residual(a, gaussian_bump(1.0), 0.0, 1.0, h),
                     backward_equation_residual(a, gaussian_bump(1.0), 0.0, 1.0, h)])
    write(out / "equations.csv", ["h", "forward", "backward"], rows)

    spec = ProcessSpec(TripletSchedule.constant(0.0, 1.0, LevyMeasure.atoms([1.0], [1.0])),
                       DiffusionCoefficient.constant(1.0))
    xi = 1.0
    exact = complex(levy_symbol(spec.schedule.triplet(0.0))(xi))
    rows = []
    for h in (1e-1, 5e-2, 2e-2, 1e-2, 5e-3):
        for rich in (False, True):
            re, im = symbol_estimate(spec, 0.0, 0.0, xi, h, args.symbol_paths, seed=1, richardson=rich)
            rows.append([h, rich, re.mean - exact.real, re.stderr, im.mean - exact.imag, im.stderr])
    write(out / "symbol.csv", ["h", "richardson", "bias_re", "se_re", "bias_im", "se_im"], rows)


if __name__ == "__main__":
    main()
