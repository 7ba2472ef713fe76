"""Prüfer phase integrator (numba kernel) for the shooting oracle."""

import math

import numba
import numpy as np


@numba.njit(cache=True)
def phase_at_end(vhalf: np.ndarray, h: float, eps: float, E: float) -> float:
    """Integrate theta' = (cos^2 theta + (E - V) sin^2 theta) / eps by RK4.

    ``vhalf`` holds V sampled at step endpoints and midpoints
    (2 * n_steps + 1 values); theta(0) = 0 is the Dirichlet phase at x = 0.
    """
    n = (vhalf.size - 1) // 2
    theta = 0.0
    for i in range(n):
        v0 = vhalf[2 * i]
        vm = vhalf[2 * i + 1]
        v1 = vhalf[2 * i + 2]

        c = math.cos(theta)
        s = math.sin(theta)
        k1 = (c * c + (E - v0) * s * s) / eps

        t = theta + 0.5 * h * k1
        c = math.cos(t)
        s = math.sin(t)
        k2 = (c * c + (E - vm) * s * s) / eps

        t = theta + 0.5 * h * k2
        c = math.cos(t)
        s = math.sin(t)
        k3 = (c * c + (E - vm) * s * s) / eps

        t = theta + h * k3
        c = math.cos(t)
        s = math.sin(t)
        k4 = (c * c + (E - v1) * s * s) / eps

        theta += h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
    return theta
