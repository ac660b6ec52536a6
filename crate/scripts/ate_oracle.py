#!/usr/bin/env python3
"""Brute-force ATE oracle.

Minimises the mean squared translational residual over rotation (axis-angle)
and translation with a generic optimiser from many starting points, then
reports the RMSE. Shares no code with the Rust implementation.

Usage: ate_oracle.py            # prints the frozen fixture values
"""
import itertools

import numpy as np
from scipy.optimize import minimize
from scipy.spatial.transform import Rotation


def ate_brute_force(est, ref, starts=6):
    est = np.asarray(est, dtype=float)
    ref = np.asarray(ref, dtype=float)

    def cost(x):
        r = Rotation.from_rotvec(x[:3]).as_matrix()
        res = est @ r.T + x[3:] - ref
        return np.mean(np.sum(res * res, axis=1))

    best = np.inf
    grid = np.linspace(-np.pi * 0.9, np.pi * 0.9, starts)
    for rx, ry, rz in itertools.product(grid, repeat=3):
        x0 = np.array([rx, ry, rz, 0.0, 0.0, 0.0])
        sol = minimize(cost, x0, method="BFGS", options={"gtol": 1e-14, "maxiter": 500})
        sol = minimize(cost, sol.x, method="Nelder-Mead",
                       options={"xatol": 1e-14, "fatol": 1e-18, "maxiter": 10000})
        best = min(best, sol.fun)
    return float(np.sqrt(best))


FIXTURES = {
    "square_one_vertex_displaced": (
        [[0, 0, 0], [1.4, 0, 0], [1, 1, 0], [0, 1, 0]],
        [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]],
    ),
    "tilted_helix": (
        [[np.cos(k) + 0.05 * k, np.sin(k), 0.3 * k + (0.2 if k == 3 else 0.0)] for k in range(6)],
        [[0.2 + np.cos(k), -0.1 + 0.9 * np.sin(k), 0.3 * k] for k in range(6)],
    ),
}

if __name__ == "__main__":
    for name, (est, ref) in FIXTURES.items():
        print(f"{name} {ate_brute_force(est, ref):.17g}")
