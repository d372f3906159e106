"""Smoke test for the pyroughbsde extension module.

Build and install with `pip install --no-build-isolation crates/py`, then run
`python crates/py/python/smoke_test.py`.
"""

import math
import os
import sys
import tempfile

import pyroughbsde as rb


def check(cond, what):
    if not cond:
        sys.exit(f"FAIL {what}")
    print(f"ok   {what}")


def main():
    params = rb.Params(0.3, 3.0, 0.5, 2.5, 1)
    check(abs(params.alpha - 0.1) < 1e-12, "derived alpha = delta - d/p")
    accepted, code, _ = rb.validate_params(0.6, 3.0, 0.5, 2.5, 1)
    check(not accepted and code == "beta_range", "beta outside (0, 1/2) is rejected")
    try:
        rb.Params(0.3, 3.0, 0.5, 4.0, 1)
        check(False, "p above q raises")
    except ValueError:
        check(True, "p above q raises")

    grid = rb.Grid(256, 10.0)
    bump = rb.Field.gaussian(grid, width=1.0)
    back = bump.bessel_potential(1.5).bessel_potential(-1.5)
    check(back.max_abs_diff(bump) < 1e-10, "Bessel potential round trip")
    heat = bump.heat(0.3).heat(0.2)
    check(heat.max_abs_diff(bump.heat(0.5)) < 1e-12, "heat semigroup law")

    zero = rb.Driver("zero", grid, params, steps=32)
    free = rb.solve_pde(zero, bump, params)
    check(free.snapshot(0).max_abs_diff(bump.heat(1.0)) < 1e-12, "free solution is the heat flow")

    rough = rb.Driver("fbm_derivative", grid, params, steps=64, amplitude=0.5, seed=17)
    check(rough.certificate()["admissible"], "rough drift is certified")
    sol = rb.solve_pde(rough, bump, params, nonlinearity="saturating_in_z", strength=0.5)
    check(sol.report()["residual"] < 1e-6, f"Picard converged in {sol.iterations} iterations")
    mean, stderr, grid_value = sol.feynman_kac(0.0, [0.0], paths=2000, seed=5)[0]
    gap = abs(mean - grid_value)
    check(gap <= 3 * stderr + 5 * math.sqrt(1 / 64), f"Feynman-Kac {mean:.4f} vs grid {grid_value:.4f}")

    with tempfile.TemporaryDirectory() as tmp:
        cfg = os.path.join(tmp, "config.toml")
        with open(cfg, "w") as fh:
            fh.write(CONFIG)
        code, message, out = rb.run_experiment("validate-params", cfg)
        check(code == 0 and os.path.exists(os.path.join(out, "report.json")), f"validate-params: {message}")
    print("smoke test passed")


CONFIG = """
[params]
beta = 0.3
q = 3.0
delta = 0.5
p = 2.5
d = 1

[grid]
n = 64

[time]
steps = 16

[driver]
kind = "zero"
amplitude = 0.0

[nonlinearity]
kind = "zero"

[terminal]
kind = "gaussian_bump"

[ensemble]
paths = 100
seed = 1

[output]
dir = "out"
"""

if __name__ == "__main__":
    main()
