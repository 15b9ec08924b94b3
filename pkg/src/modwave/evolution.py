"""Time propagators: free, dispersive asymptotic, modified free, and full.

The full evolution ``exp(-itH)`` has two independent implementations: an
eigenfunction expansion (no error accumulation in t) and a Crank-Nicolson
finite-difference scheme used only to certify the former at moderate t.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import fft as sfft
from scipy import sparse
from scipy.sparse import linalg as splinalg

from .numerics_core import WavePacket, odd_fourier_uniform
from .potential import Potential

# e^{ix^2/4t} f_hat_o(x/2t) / sqrt(t) prefactor
KAPPA = -1.0 / ((1 + 1j) * math.sqrt(2 * math.pi))


@dataclass(frozen=True)
class PropagatorConfig:
    dt: float = 0.005
    t_list: tuple = field(default_factory=tuple)
    method: str = "spectral"
    # momentum the step must resolve; None means the packet's own content
    k_max: float | None = None

    def __post_init__(self):
        if not (self.dt > 0):
            raise ValueError(f"dt must be positive, got {self.dt}")
        ts = tuple(float(t) for t in self.t_list)
        if any(t <= 0 for t in ts) or list(ts) != sorted(ts):
            raise ValueError(f"t_list must be positive and sorted, got {ts}")
        object.__setattr__(self, "t_list", ts)
        if self.method not in ("spectral", "finite-difference"):
            raise ValueError(f"unknown method {self.method!r}")


def check_ballistic(f: WavePacket, t: float) -> None:
    """Refuse times at which the packet's fastest part 2bt has left the box."""
    sup = f.support
    if sup is not None and 2.0 * sup[1] * t > f.grid.x_max * (1 + 1e-12):
        raise ValueError(f"ballistic fit violated: 2*b*t = {2 * sup[1] * t:.6g} > "
                         f"x_max = {f.grid.x_max:.6g}")


def free_evolve(f: WavePacket, t: float) -> WavePacket:
    """exp(-itH0) f by the type-I sine transform on the interior nodes.

    Sine mode j has wavenumber k_j = pi j / x_max and picks up exp(-i t k_j^2)
    exactly; x_max is a Dirichlet node.
    """
    if t < 0:
        raise ValueError(f"t must be nonnegative, got {t}")
    g = f.grid
    if t == 0:
        return f.with_values(np.concatenate([f.values[:-1], [0.0]]))
    kj = math.pi * np.arange(1, g.n) / g.x_max
    c = sfft.dst(f.values[:-1], type=1, norm="ortho")
    c *= np.exp(-1j * t * kj ** 2)
    out = np.zeros(g.n, dtype=complex)
    out[:-1] = sfft.idst(c, type=1, norm="ortho")
    return f.with_values(out)


def dispersive_profile(f: WavePacket, t: float) -> WavePacket:
    """kappa exp(i x^2/4t) f_hat_o(x/2t) / sqrt(t) on the grid."""
    if not (t > 0):
        raise ValueError(f"t must be positive, got {t}")
    check_ballistic(f, t)
    g = f.grid
    x = g.x
    w = g.h / (2.0 * t)
    # the grid cannot represent momenta above pi/h; their images are dropped
    i_lo, i_hi = 0, min(g.n, int(2.0 * t * math.pi / g.h ** 2))
    if f.support is not None:
        a, b = f.support
        i_lo = max(i_lo, int(math.floor(2.0 * a * t / g.h)) - 2)
        i_hi = min(i_hi, int(math.ceil(2.0 * b * t / g.h)) + 1)
    vals = np.zeros(g.n, dtype=complex)
    if i_hi > i_lo:
        src = f.with_values(_trim_tail(f.values))
        fo = odd_fourier_uniform(src, (i_lo + 1) * w, w, i_hi - i_lo)
        xs = x[i_lo:i_hi]
        vals[i_lo:i_hi] = KAPPA * np.exp(1j * xs ** 2 / (4.0 * t)) * fo / math.sqrt(t)
    return f.with_values(vals)


def _trim_tail(values: np.ndarray, rel: float = 1e-15) -> np.ndarray:
    """Zero the trailing run of entries below rel * max|f| (shortens transforms)."""
    mag = np.abs(values)
    big = np.nonzero(mag > rel * mag.max())[0] if mag.size else []
    if len(big) == 0:
        return values
    out = values.copy()
    out[big[-1] + 1:] = 0.0
    return out


def modified_phase_factor(p: Potential, t: float) -> np.ndarray:
    return np.exp(-1j * t * p.Q / p.grid.x)


def modified_free(f: WavePacket, p: Potential, t: float) -> WavePacket:
    """U(t) f: the dispersive profile times exp(-i (t/x) Q(x))."""
    prof = dispersive_profile(f, t)
    return prof.with_values(prof.values * modified_phase_factor(p, t))


def _as_times(t) -> tuple[list[float], bool]:
    scalar = np.ndim(t) == 0
    ts = [float(t)] if scalar else [float(v) for v in t]
    if any(v < 0 for v in ts):
        raise ValueError(f"times must be nonnegative, got {ts}")
    return ts, scalar


def full_evolve_spectral(f: WavePacket, sd, eigs, t):
    """exp(-itH) f by the eigenfunction expansion; ``t`` may be a list."""
    from .spectral import generalized_transform, inverse_transform

    ts, scalar = _as_times(t)
    breve, coeffs = generalized_transform(f, sd, eigs)
    E = sd.kgrid.E
    kappa2 = np.array([b.kappa ** 2 for b in sd.bound])
    out = []
    for tv in ts:
        g = breve.values * np.exp(-1j * tv * E)
        c = coeffs * np.exp(1j * tv * kappa2)
        out.append(inverse_transform(type(breve)(breve.grid, g), c, sd, eigs))
    return out[0] if scalar else out


def stencil_average_q(p: Potential, samples: int = 64) -> np.ndarray:
    """q averaged against the kernel of the five-point second difference.

    Summing the stencil (-1, 16, -30, 16, -1)/12 over u gives
    int K(s) u''(x_i + s) ds with K = [16 (h-|s|)_+ - (2h-|s|)_+] / (12 h^2),
    so averaging q with the same K keeps the scheme consistent across jumps of
    q (plain node samples misplace a jump by up to h/2). K has zero second
    moment, so smooth q changes only at O(h^4). q is evened about x = 0.
    """
    g = p.grid
    h = g.h
    s = ((np.arange(samples) + 0.5) / samples * 4.0 - 2.0) * h
    a = np.abs(s)
    K = (16.0 * np.clip(h - a, 0, None) - np.clip(2 * h - a, 0, None)) / (12.0 * h * h)
    K *= 4.0 * h / samples
    acc = np.zeros(g.n)
    for d, w in zip(s, K):
        acc += w * np.asarray(p.fn(np.abs(g.x + d)), dtype=float)
    return acc / K.sum()


def fd_hamiltonian(p: Potential) -> sparse.csc_matrix:
    """-d2/dx2 + q on the interior nodes, 4th-order stencil, stencil-averaged q.

    Odd reflection about both Dirichlet ends gives the boundary rows
    (-29, 16, -1) / 12h^2 and keeps the matrix symmetric.
    """
    g = p.grid
    m = g.n - 1
    c = 1.0 / (12.0 * g.h ** 2)
    main = np.full(m, 30.0 * c)
    main[0] = main[-1] = 29.0 * c
    main += stencil_average_q(p)[:-1]
    off1 = np.full(m - 1, -16.0 * c)
    off2 = np.full(m - 2, 1.0 * c)
    return sparse.diags([off2, off1, main, off1, off2], [-2, -1, 0, 1, 2], format="csc")


def full_evolve_fd(f: WavePacket, p: Potential, t, cfg: PropagatorConfig):
    """exp(-itH) f by Crank-Nicolson; ``t`` may be a sorted list of times.

    Each requested time is reached with the largest step not above cfg.dt
    that divides the interval evenly.
    """
    ts, scalar = _as_times(t)
    if ts != sorted(ts):
        raise ValueError("times must be sorted")
    g = p.grid
    q_max = p.max_abs
    k_res = cfg.k_max if cfg.k_max is not None else _resolved_momentum(f)
    if cfg.dt * (k_res ** 2 + q_max) >= 0.5:
        raise ValueError(f"time step too coarse: dt*(k_max^2 + max|q|) = "
                         f"{cfg.dt * (k_res ** 2 + q_max):.3g} >= 0.5")
    H = fd_hamiltonian(p)
    I = sparse.identity(g.n - 1, dtype=complex, format="csc")
    psi = f.values[:-1].copy()
    out, t_now = [], 0.0
    solvers = {}
    for tv in ts:
        span = tv - t_now
        steps = int(math.ceil(span / cfg.dt - 1e-9)) if span > 0 else 0
        if steps:
            dt = span / steps
            key = round(dt, 15)
            if key not in solvers:
                A = (I + 0.5j * dt * H).tocsc()
                B = (I - 0.5j * dt * H).tocsr()
                solvers[key] = (splinalg.splu(A, permc_spec="NATURAL"), B)
            lu, B = solvers[key]
            for _ in range(steps):
                psi = lu.solve(B @ psi)
        t_now = tv
        out.append(f.with_values(np.concatenate([psi, [0.0]])))
    return out[0] if scalar else out


def _resolved_momentum(f: WavePacket) -> float:
    """Upper edge of the packet's momentum content, used for the step check."""
    if f.support is not None:
        return float(f.support[1])
    g = f.grid
    # fall back to the 1 - 1e-12 energy quantile of the sine spectrum
    c = np.abs(sfft.dst(f.values[:-1], type=1, norm="ortho")) ** 2
    cum = np.cumsum(c)
    j = int(np.searchsorted(cum, (1 - 1e-12) * cum[-1])) + 1
    return math.pi * j / g.x_max


def norm_drift(packets: Sequence[WavePacket], reference: float) -> float:
    return max(abs(pk.norm() - reference) for pk in packets) / reference
