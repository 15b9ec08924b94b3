"""Regular solutions, modified Jost amplitudes, spectral density and bound states.

Conventions (see the package README for the derivation):

* ``u(x, k)`` solves ``-u'' + q u = k^2 u`` with ``u(0) = 0, u'(0) = 1``.
* The WKB phase is ``phi(x) = Q(x) / (2k)`` with ``Q`` the antiderivative of q.
* The modified Jost amplitude is ``jm(x) = (u' - i k u) exp(i(kx - phi))``, so
  that ``u = (conj(jm) e^{i(kx-phi)} - jm e^{-i(kx-phi)}) / (2ik)`` exactly.
* The absolutely continuous density is ``mu(E) = k / (pi |jm(k)|^2)``, with
  ``jm(k)`` the large-x limit of ``jm(x)``; ``dE = 2k dk``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple

import numpy as np

from . import _kernels
from .numerics_core import MomentumGrid, MomentumProfile, WavePacket
from .potential import Potential, antiderivative

QUALITY_TOL = 0.10
_STEP_PHASE = 0.1


class UnresolvedLimit(RuntimeError):
    """The modified Jost amplitude has not settled inside the box."""


@dataclass
class GeneralizedEigenfunction:
    k: float
    u: np.ndarray
    du: np.ndarray


@dataclass
class ModifiedJost:
    k: float
    phi: np.ndarray
    jm: np.ndarray
    jm_limit: complex = 0j
    quality: float = math.inf

    @property
    def resolved(self) -> bool:
        return self.quality <= QUALITY_TOL


class BoundState(NamedTuple):
    kappa: float
    e: WavePacket


def substeps_for(p: Potential, k_max: float, rtol: float | None = None) -> int:
    """RK4 sub-steps per cell so that the step is <= min(h, 0.1/K).

    With ``rtol`` the step is also refined until the predicted free-wave
    phase error over the box, ``rk4_free_error(...)[0]``, is below it.
    """
    K = max(k_max, math.sqrt(max(0.0, -float(np.min(p.q)))))
    s = max(1, math.ceil(p.grid.h * K / _STEP_PHASE - 1e-12))
    if rtol is not None and K > 0:
        hs_max = (120.0 * rtol / (p.grid.x_max * K ** 5)) ** 0.25
        s = max(s, math.ceil(p.grid.h / hs_max - 1e-12))
    return s


def rk4_free_error(x: float, k: float, hs: float) -> tuple[float, float]:
    """Predicted (phase, relative amplitude) error of RK4 for sin(kx) after length x.

    Per step of size hs the amplification factor of RK4 on y' = iky differs
    from exp(ik hs) by (k hs)^5/120 in phase and (k hs)^6/144 in modulus.
    """
    steps = x / hs
    return steps * (k * hs) ** 5 / 120.0, steps * (k * hs) ** 6 / 144.0


def _sweep(stages, hs, s, energies, u0, v0, n_out):
    m = energies.size
    u = np.empty((m, n_out))
    v = np.empty((m, n_out))
    qa, qm, qb = stages
    _kernels.rk4_sweep(qa, qm, qb, hs, s, energies, u0, v0, u, v)
    return u, v


def solve_regular(p: Potential, k: float, substeps: int | None = None,
                  rtol: float = 1e-9) -> GeneralizedEigenfunction:
    """u and u' on the grid; the step meets both min(h, 0.1/k) and ``rtol``."""
    if not (k > 0):
        raise ValueError(f"k must be positive, got {k}")
    s = substeps or substeps_for(p, k, rtol)
    u, v = _sweep(p.stage_samples(s), p.grid.h / s, s, np.array([k * k]),
                  np.zeros(1), np.ones(1), p.grid.n)
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
        raise OverflowError(f"regular solution overflowed at k={k}; E below the potential, "
                            "use find_bound_states")
    return GeneralizedEigenfunction(float(k), u[0], v[0])


def modified_phase(p: Potential, k: float, x) -> float:
    if k == 0:
        raise ValueError("modified phase is singular at k = 0")
    return antiderivative(p, x) / (2.0 * k)


def _jm(u, du, k, x, Q):
    k = np.asarray(k)[..., None] if np.ndim(k) else k
    return (du - 1j * k * u) * np.exp(1j * (k * x - Q / (2.0 * k)))


def limit_window_start(x_max: float, k: float) -> float:
    """Start of the averaging window: last quarter, trimmed to whole periods pi/k."""
    period = math.pi / k
    n_per = math.floor(0.25 * x_max / period)
    if n_per == 0:
        return 0.75 * x_max
    return x_max - n_per * period


def _window_average(x, values, x0):
    sel = x >= x0 - 1e-12
    xs, vs = x[sel], values[sel]
    if xs.size < 2:
        return complex(vs[-1]), 0.0
    avg = np.trapezoid(vs, xs) / (xs[-1] - xs[0])
    dev = float(np.max(np.abs(vs - avg)) / max(abs(avg), 1e-300))
    return complex(avg), dev


def extract_jost(eig: GeneralizedEigenfunction, p: Potential) -> ModifiedJost:
    k = eig.k
    if not (k > 0):
        raise ValueError("extract_jost needs k > 0")
    phi = p.Q / (2.0 * k)
    jm = (eig.du - 1j * k * eig.u) * np.exp(1j * (k * p.grid.x - phi))
    avg, dev = _window_average(p.grid.x, jm, limit_window_start(p.grid.x_max, k))
    return ModifiedJost(k, phi, jm, avg, dev)


def reconstruct_u(mj: ModifiedJost, x: np.ndarray) -> np.ndarray:
    theta = mj.k * x - mj.phi
    return ((np.conj(mj.jm) * np.exp(1j * theta) - mj.jm * np.exp(-1j * theta)) / (2j * mj.k)).real


def jost_limit(mj: ModifiedJost, strict: bool = False) -> complex:
    """Large-x limit of jm(x); ``mj.quality`` holds the residual oscillation."""
    if strict and not mj.resolved:
        raise UnresolvedLimit(f"j_m limit unresolved at k={mj.k:.6g}: residual "
                              f"{mj.quality:.3g} > {QUALITY_TOL}; enlarge x_max")
    return mj.jm_limit


def density_from_limit(k, jm_limit):
    return np.asarray(k) / (math.pi * np.abs(jm_limit) ** 2)


def spectral_density(p: Potential, k: float) -> float:
    mj = extract_jost(solve_regular(p, k), p)
    return float(density_from_limit(k, jost_limit(mj, strict=True)))


# -- bound states ---------------------------------------------------------

def _count_zeros(stages, hs, E):
    qa, qm, qb = stages
    return _kernels.rk4_count_zeros(qa, qm, qb, hs, E, 0.0, 1.0)


def _bisect_level(stages, hs, lo, hi, j):
    """Smallest energy at which the zero count reaches ``j``."""
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _count_zeros(stages, hs, mid) >= j:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 4e-16 * max(1.0, abs(mid)):
            break
    return 0.5 * (lo + hi)


def _eigenfunction(p: Potential, stages, s, E):
    g = p.grid
    hs = g.h / s
    kappa = math.sqrt(-E)
    allowed = np.nonzero(p.q < E)[0]
    i_m = int(allowed[-1]) if allowed.size else 0
    i_m = max(i_m, 1)
    i_r = min(g.n - 1, i_m + int(math.ceil(40.0 / (kappa * g.h))))
    qa, qm, qb = stages
    cut = (i_m + 1) * s
    u_out, v_out = _sweep((qa[:cut], qm[:cut], qb[:cut]), hs, s, np.array([E]),
                          np.zeros(1), np.ones(1), i_m + 1)
    u_out, v_out = u_out[0], v_out[0]
    vals = np.zeros(g.n)
    vals[: i_m + 1] = u_out
    if i_r > i_m:
        lo, hi = cut, (i_r + 1) * s
        back = (qb[lo:hi][::-1].copy(), qm[lo:hi][::-1].copy(), qa[lo:hi][::-1].copy())
        u_in, v_in = _sweep(back, -hs, s, np.array([E]), np.ones(1), -kappa * np.ones(1), i_r - i_m)
        u_in, v_in = u_in[0], v_in[0]     # nodes i_r-1, ..., i_m
        ui, vi = u_in[-1], v_in[-1]
        scale = (u_out[-1] * ui + v_out[-1] * vi) / (ui * ui + vi * vi)
        vals[i_m + 1: i_r] = scale * u_in[:-1][::-1]
        vals[i_r] = scale
    w = g.weights
    vals /= math.sqrt(float(np.sum(w * vals ** 2)))
    return vals


def find_bound_states(p: Potential, e_floor: float = 1e-3, substeps: int | None = None) -> list[BoundState]:
    """Negative eigenvalues below ``-e_floor`` by Sturm counting and bisection.

    Eigenfunctions are joined from an outward solve up to the last classically
    allowed node and an inward (decaying) solve, then L2-normalised.
    """
    s = substeps or substeps_for(p, 0.0)
    stages = p.stage_samples(s)
    hs = p.grid.h / s
    e_lo = float(min(np.min(a) for a in stages)) - 1e-12
    e_hi = -abs(e_floor)
    if e_lo >= e_hi:
        return []
    total = _count_zeros(stages, hs, e_hi)
    states = []
    lo = e_lo
    for j in range(1, total + 1):
        E = _bisect_level(stages, hs, lo, e_hi, j)
        lo = E
        vals = _eigenfunction(p, stages, s, E)
        states.append(BoundState(math.sqrt(-E), WavePacket(p.grid, vals)))
    return states


# -- assembled spectral data ----------------------------------------------

@dataclass
class SpectralData:
    kgrid: MomentumGrid
    mu: np.ndarray
    jm_limit: np.ndarray
    quality: np.ndarray
    bound: list[BoundState] = field(default_factory=list)
    # singular spectrum is assumed empty: chi_Theta == 1 on the k-grid
    theta_flag: str = "ac-support=R+"

    @property
    def resolved(self) -> np.ndarray:
        return self.quality <= QUALITY_TOL

    @property
    def bound_energies(self) -> np.ndarray:
        return -np.array([b.kappa for b in self.bound]) ** 2

    def measure_weights(self) -> np.ndarray:
        """Quadrature weights of d rho on the k-grid: mu(E) 2k dk."""
        k = self.kgrid.k
        return self.mu * 2.0 * k * self.kgrid.weights

    def require_resolved(self, mask: np.ndarray) -> None:
        bad = mask & ~self.resolved
        if np.any(bad):
            ks = self.kgrid.k[bad]
            raise UnresolvedLimit(f"j_m limit unresolved at {bad.sum()} k-node(s) in "
                                  f"[{ks.min():.4g}, {ks.max():.4g}] (worst residual "
                                  f"{self.quality[bad].max():.3g}); enlarge x_max")


class EigenBasis:
    """Regular solutions u(x, k) on the whole k-grid, produced chunk by chunk.

    A single sweep at construction records (u, u') at every chunk start and
    the windowed j_m limits. Later passes regenerate any chunk from its
    checkpoint, which is bit-identical to the first sweep. When the full
    matrix fits in ``cache_bytes`` it is kept instead.
    """

    def __init__(self, p: Potential, kg: MomentumGrid, chunk: int = 4096,
                 substeps: int | None = None, cache_bytes: int = 256 * 2 ** 20):
        self.potential = p
        self.kgrid = kg
        self.chunk = int(chunk)
        self.s = substeps or substeps_for(p, kg.k_max)
        self._stages = p.stage_samples(self.s)
        g = p.grid
        m = kg.m
        self.n_chunks = math.ceil(g.n / self.chunk)
        self._ck_u = np.empty((self.n_chunks, m))
        self._ck_v = np.empty((self.n_chunks, m))
        self._cache = [] if m * g.n * 8 <= cache_bytes else None
        self._energies = kg.k ** 2
        self._sweep_limits()

    @property
    def grid(self):
        return self.potential.grid

    def _run(self, c, ksel, u0, v0):
        i0 = c * self.chunk
        i1 = min(self.grid.n, i0 + self.chunk)
        s = self.s
        qa, qm, qb = self._stages
        sl = slice(i0 * s, i1 * s)
        u, v = _sweep((qa[sl], qm[sl], qb[sl]), self.grid.h / s, s,
                      self._energies[ksel], u0, v0, i1 - i0)
        return i0, i1, u, v

    def _sweep_limits(self):
        g, k = self.grid, self.kgrid.k
        x, Q = g.x, self.potential.Q
        starts = np.array([limit_window_start(g.x_max, kk) for kk in k])
        first = np.searchsorted(x, starts - 1e-12)
        sum_w = np.zeros(k.size)
        sum_j = np.zeros(k.size, dtype=complex)
        i_tail = int(0.75 * g.n) - 1
        stride = max(1, (g.n - i_tail) // 2048)
        samp_x, samp_j = [], []
        u0 = np.zeros(k.size)
        v0 = np.ones(k.size)
        allk = slice(None)
        for c in range(self.n_chunks):
            self._ck_u[c] = u0
            self._ck_v[c] = v0
            i0, i1, u, v = self._run(c, allk, u0, v0)
            if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
                raise OverflowError("regular solution overflowed on the k-grid")
            if self._cache is not None:
                self._cache.append(u)
            u0, v0 = u[:, -1].copy(), v[:, -1].copy()
            if i1 - 1 < i_tail:
                continue
            xs = x[i0:i1]
            jm = _jm(u, v, k, xs, Q[i0:i1])
            idx = np.arange(i0, i1)
            inside = idx[None, :] >= first[:, None]
            w = np.where(inside, g.h, 0.0)
            w[idx[None, :] == first[:, None]] *= 0.5
            if i1 == g.n:
                w[:, -1] *= 0.5
            sum_w += w.sum(axis=1)
            sum_j += (w * jm).sum(axis=1)
            pick = (idx >= i_tail) & ((idx - i_tail) % stride == 0)
            samp_x.append(xs[pick])
            samp_j.append(jm[:, pick])
        limit = sum_j / sum_w
        sx = np.concatenate(samp_x)
        sj = np.concatenate(samp_j, axis=1)
        dev = np.abs(sj - limit[:, None])
        dev[sx[None, :] < starts[:, None] - 1e-12] = 0.0
        self.jm_limit = limit
        self.quality = dev.max(axis=1) / np.abs(limit)
        self.mu = density_from_limit(k, limit)

    def chunks(self, ksel=None, i_lo: int = 0, i_hi: int | None = None) -> Iterator[tuple[int, int, np.ndarray]]:
        """Yield ``(i0, i1, U)`` with ``U[j, i] = u(x_{i0+i}, k_sel[j])``."""
        if ksel is None:
            ksel = slice(None)
        i_hi = self.grid.n if i_hi is None else i_hi
        c_lo = i_lo // self.chunk
        c_hi = math.ceil(i_hi / self.chunk)
        for c in range(c_lo, c_hi):
            if self._cache is not None:
                i0 = c * self.chunk
                u = self._cache[c][ksel]
                yield i0, i0 + u.shape[1], u
            else:
                i0, i1, u, _ = self._run(c, ksel, self._ck_u[c][ksel], self._ck_v[c][ksel])
                yield i0, i1, u

    def u_at(self, j: int) -> np.ndarray:
        """u(x, k_j) on the full grid."""
        out = np.empty(self.grid.n)
        for i0, i1, u in self.chunks(np.array([j])):
            out[i0:i1] = u[0]
        return out

    def forward(self, F: np.ndarray, ksel=None) -> np.ndarray:
        """int u(x, k) F(x) dx for each selected k; ``F`` is (n,) or (n, p)."""
        F = np.asarray(F, dtype=complex)
        vec = F.ndim == 1
        F2 = F[:, None] if vec else F
        rows = np.nonzero(np.any(F2 != 0, axis=1))[0]
        n_k = self.kgrid.m if ksel is None else np.arange(self.kgrid.m)[ksel].size
        out = np.zeros((n_k, F2.shape[1]), dtype=complex)
        if rows.size:
            lo, hi = int(rows[0]), int(rows[-1]) + 1
            wF = self.grid.weights[lo:hi, None] * F2[lo:hi]
            # contiguous real and imaginary blocks keep the products on BLAS
            wr = np.ascontiguousarray(wF.real)
            wi = np.ascontiguousarray(wF.imag)
            for i0, i1, u in self.chunks(ksel, lo, hi):
                a, b = max(i0, lo), min(i1, hi)
                ub = np.ascontiguousarray(u[:, a - i0:b - i0])
                out += ub @ wr[a - lo:b - lo] + 1j * (ub @ wi[a - lo:b - lo])
        return out[:, 0] if vec else out

    def inverse(self, G: np.ndarray, mu: np.ndarray | None = None) -> np.ndarray:
        """int u(x, k) G(k) mu(E) dE for all x; ``G`` is (m,) or (m, p)."""
        G = np.asarray(G, dtype=complex)
        vec = G.ndim == 1
        G2 = G[:, None] if vec else G
        mu = self.mu if mu is None else mu
        coef = (mu * 2.0 * self.kgrid.k * self.kgrid.weights)[:, None] * G2
        active = np.nonzero(np.any(coef != 0, axis=1))[0]
        out = np.zeros((self.grid.n, G2.shape[1]), dtype=complex)
        if active.size:
            cr = np.ascontiguousarray(coef[active].real)
            ci = np.ascontiguousarray(coef[active].imag)
            for i0, i1, u in self.chunks(active):
                out[i0:i1] = u.T @ cr + 1j * (u.T @ ci)
        return out[:, 0] if vec else out


def spectral_decomposition(p: Potential, kg: MomentumGrid, e_floor: float = 1e-3,
                           **basis_kw) -> tuple[SpectralData, EigenBasis]:
    eigs = EigenBasis(p, kg, **basis_kw)
    bound = find_bound_states(p, e_floor=e_floor)
    sd = SpectralData(kg, eigs.mu.copy(), eigs.jm_limit.copy(), eigs.quality.copy(), bound)
    return sd, eigs


def generalized_transform(f: WavePacket, sd: SpectralData, eigs: EigenBasis):
    """(breve f on the k-grid, bound-state coefficients <f, e_j>)."""
    breve = eigs.forward(f.values)
    coeffs = np.array([np.sum(f.grid.weights * b.e.values.real * f.values) for b in sd.bound],
                      dtype=complex)
    return MomentumProfile(sd.kgrid, breve), coeffs


def inverse_transform(g: MomentumProfile, coeffs, sd: SpectralData, eigs: EigenBasis) -> WavePacket:
    vals = eigs.inverse(g.values, sd.mu)
    for c, b in zip(np.asarray(coeffs, dtype=complex), sd.bound):
        vals = vals + c * b.e.values
    return WavePacket(eigs.grid, vals)


def spectral_mass(breve: np.ndarray, coeffs, sd: SpectralData) -> float:
    """sum_j |c_j|^2 + int |breve|^2 d rho."""
    cont = float(np.sum(sd.measure_weights() * np.abs(breve) ** 2))
    return cont + float(np.sum(np.abs(np.asarray(coeffs)) ** 2))
