"""Compiled inner loops for the radial Cauchy problem.

Both kernels integrate ``u'' = (q - E) u`` with classical fixed-step RK4.
The potential is supplied pre-sampled at the three RK4 stage abscissae of
every sub-step (start, midpoint, end), evaluated one-sidedly so that jumps
placed on sub-step boundaries are integrated without an O(1) local error.
"""
from __future__ import annotations

import warnings

import numpy as np
from numba import njit, prange
from numba.core.errors import NumbaWarning

# an outdated system TBB only means numba falls back to its OpenMP/workqueue layer
warnings.filterwarnings("ignore", message="The TBB threading layer", category=NumbaWarning)


@njit(cache=True, parallel=True)
def rk4_sweep(qa, qm, qb, hs, s, energies, u0, v0, u_out, v_out):
    """Integrate one solution per energy; store (u, u') every ``s`` sub-steps."""
    m = energies.size
    n_out = u_out.shape[1]
    for j in prange(m):
        E = energies[j]
        u = u0[j]
        v = v0[j]
        for i in range(n_out):
            for l in range(s):
                idx = i * s + l
                a = qa[idx] - E
                c = qm[idx] - E
                d = qb[idx] - E
                k1u = v
                k1v = a * u
                k2u = v + 0.5 * hs * k1v
                k2v = c * (u + 0.5 * hs * k1u)
                k3u = v + 0.5 * hs * k2v
                k3v = c * (u + 0.5 * hs * k2u)
                k4u = v + hs * k3v
                k4v = d * (u + hs * k3u)
                u += hs / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u)
                v += hs / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
            u_out[j, i] = u
            v_out[j, i] = v


@njit(cache=True)
def rk4_count_zeros(qa, qm, qb, hs, E, u0, v0):
    """Count sign changes of u over the whole sub-step grid.

    The state is rescaled whenever it grows large; scaling does not move zeros.
    """
    u = u0
    v = v0
    count = 0
    for idx in range(qa.size):
        a = qa[idx] - E
        c = qm[idx] - E
        d = qb[idx] - E
        k1u = v
        k1v = a * u
        k2u = v + 0.5 * hs * k1v
        k2v = c * (u + 0.5 * hs * k1u)
        k3u = v + 0.5 * hs * k2v
        k3v = c * (u + 0.5 * hs * k2u)
        k4u = v + hs * k3v
        k4v = d * (u + hs * k3u)
        un = u + hs / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u)
        vn = v + hs / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        if (u > 0.0 and un <= 0.0) or (u < 0.0 and un >= 0.0):
            count += 1
        u = un
        v = vn
        scale = abs(u) + abs(v)
        if scale > 1e100:
            u /= scale
            v /= scale
    return count


def warm_up() -> None:
    """Trigger compilation on tiny inputs."""
    z = np.zeros(2)
    out = np.empty((1, 1))
    rk4_sweep(z, z, z, 0.1, 2, np.ones(1), np.zeros(1), np.ones(1), out, out.copy())
    rk4_count_zeros(z, z, z, 0.1, 1.0, 0.0, 1.0)
