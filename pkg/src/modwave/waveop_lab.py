"""The wave-limit harness and its auxiliary quantitative checks.

``W_f`` is built directly in spectral space,

    breve W_f(k^2) = f_hat_o(k) jm(k) / (2ik),

which is the closed form with the prefactor -kappa sqrt(2 pi)(1+i) = 1.
The Cesaro discrepancy ``||U(t)f - exp(-itH) W_f||^2`` is evaluated by
polarisation: the norm of U(t)f in physical space plus ``||W_f||^2`` minus
twice the real part of the spectral cross term. Only k-nodes where breve W_f
is nonzero enter the cross term, which keeps the long-time scans cheap.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate

from .evolution import check_ballistic, modified_free
from .numerics_core import (MomentumBump, MomentumProfile, WavePacket, odd_fourier,
                            oscillatory_tail)
from .potential import Potential
from .spectral import EigenBasis, SpectralData, UnresolvedLimit, inverse_transform

SP_CONSTANT = math.sqrt(math.pi / 2) * (1 + 1j)
# values this far below the peak are round-off from the chirp-z transform
_ROUNDOFF = 1e-13


@dataclass
class WaveLimit:
    breve_W: MomentumProfile
    W: WavePacket | None
    coeffs: np.ndarray
    # fraction of ||f||^2 carried by support nodes whose jm limit is flagged
    unresolved_mass: float = 0.0

    @property
    def support(self) -> np.ndarray:
        return self.breve_W.values != 0


@dataclass
class TheoremReport:
    T_list: list[float]
    cesaro: list[float]
    dyadic: list[float]          # (2/T) int_{T/2}^{T} D(t) dt
    t: np.ndarray
    curve: np.ndarray            # D(t) at the midpoint nodes
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"T_list": list(self.T_list), "cesaro": list(self.cesaro),
                "dyadic": list(self.dyadic), "t": self.t.tolist(),
                "curve": self.curve.tolist(), "metadata": self.metadata}


def _profile_of(f) -> MomentumBump:
    if isinstance(f, MomentumBump):
        return f
    if getattr(f, "profile", None) is None:
        raise ValueError("need a packet built from a bump (or the bump itself)")
    return f.profile


def _sparsify(values: np.ndarray) -> np.ndarray:
    """Zero entries at round-off level so sparse row handling can skip them."""
    v = np.array(values, dtype=complex)
    peak = np.max(np.abs(v), axis=0, keepdims=True) if v.size else 0.0
    v[np.abs(v) <= _ROUNDOFF * peak] = 0.0
    return v


def odd_profile_on_grid(f: WavePacket, sd: SpectralData) -> np.ndarray:
    """f_hat_o on the k-grid, exactly zero outside the bump's support."""
    vals = odd_fourier(f, sd.kgrid).values
    if f.support is not None:
        a, b = f.support
        k = sd.kgrid.k
        vals = np.where((k > a) & (k < b), vals, 0.0)
    return vals


def build_wave_limit(f: WavePacket, sd: SpectralData, eigs: EigenBasis | None,
                     unresolved_tol: float = 1e-3) -> WaveLimit:
    """breve W_f = f_hat_o jm / (2ik) and its physical representative.

    Nodes with a flagged jm limit are tolerated only while the share of
    ||f||^2 they carry stays below ``unresolved_tol``; the share is
    independent of jm because |breve W|^2 mu = |f_hat_o|^2 / (4 pi k).
    """
    k = sd.kgrid.k
    F = odd_profile_on_grid(f, sd)
    breve = F * sd.jm_limit / (2j * k)
    mass = np.abs(F) ** 2 / (4 * math.pi * k) * 2 * k * sd.kgrid.weights
    total = float(mass.sum())
    bad = (F != 0) & ~sd.resolved
    share = float(mass[bad].sum() / total) if total > 0 else 0.0
    if share > unresolved_tol:
        ks = k[bad]
        raise UnresolvedLimit(f"j_m limit unresolved on the packet support at {bad.sum()} node(s) "
                              f"in [{ks.min():.4g}, {ks.max():.4g}], carrying {share:.3g} of "
                              f"||f||^2 > {unresolved_tol}; enlarge x_max")
    prof = MomentumProfile(sd.kgrid, breve)
    coeffs = np.zeros(len(sd.bound), dtype=complex)
    W = inverse_transform(prof, coeffs, sd, eigs) if eigs is not None else None
    return WaveLimit(prof, W, coeffs, share)


def breve_psi(f: WavePacket, p: Potential, sd: SpectralData, eigs: EigenBasis, t: float,
              ksel=None) -> MomentumProfile:
    """Generalised transform of U(t) f; nodes outside ``ksel`` are left at zero."""
    U = modified_free(f, p, t)
    vals = np.zeros(sd.kgrid.m, dtype=complex)
    idx = np.arange(sd.kgrid.m) if ksel is None else np.arange(sd.kgrid.m)[ksel]
    vals[idx] = eigs.forward(_sparsify(U.values), idx)
    return MomentumProfile(sd.kgrid, vals)


def cesaro_discrepancy(f: WavePacket, p: Potential, sd: SpectralData, eigs: EigenBasis,
                       T_list: Sequence[float], nodes_per_T0: int = 64,
                       wl: WaveLimit | None = None, batch: int = 32) -> TheoremReport:
    """(1/T) int_0^T ||U(t)f - exp(-itH) W_f||^2 dt for every T in ``T_list``.

    Midpoint rule on one uniform grid with step min(T)/nodes_per_T0, so the
    horizons share nodes and the integrand is never needed at t = 0. Every
    horizon must be an integer multiple of the step.
    """
    Ts = sorted(float(T) for T in T_list)
    if not Ts or Ts[0] <= 0:
        raise ValueError(f"horizons must be positive, got {T_list}")
    dt = Ts[0] / nodes_per_T0
    counts = [int(round(T / dt)) for T in Ts]
    for T, c in zip(Ts, counts):
        if abs(c * dt - T) > 1e-9 * T:
            raise ValueError(f"horizon {T} is not a multiple of the time step {dt}")
    check_ballistic(f, Ts[-1])
    if wl is None:
        wl = build_wave_limit(f, sd, None)
    sel = np.nonzero(wl.support)[0]
    k = sd.kgrid.k[sel]
    rho = sd.measure_weights()[sel]
    Wc = np.conj(wl.breve_W.values[sel])
    W2 = float(np.sum(rho * np.abs(Wc) ** 2))

    t = (np.arange(counts[-1]) + 0.5) * dt
    curve = np.empty(t.size)
    for j0 in range(0, t.size, batch):
        tb = t[j0:j0 + batch]
        cols = np.empty((p.grid.n, tb.size), dtype=complex)
        u_norm2 = np.empty(tb.size)
        for c, tv in enumerate(tb):
            U = modified_free(f, p, tv)
            cols[:, c] = U.values
            u_norm2[c] = U.norm() ** 2
        psi = eigs.forward(_sparsify(cols), sel)
        phase = np.exp(1j * np.outer(k ** 2, tb))
        cross = np.sum((rho * Wc)[:, None] * phase * psi, axis=0)
        curve[j0:j0 + tb.size] = u_norm2 + W2 - 2 * cross.real

    cesaro = [float(np.mean(curve[:c])) for c in counts]
    dyadic = [float(np.mean(curve[c // 2:c])) for c in counts]
    meta = {"potential": p.describe(), "packet": list(f.support or ()),
            "grid": {"x_max": p.grid.x_max, "n": p.grid.n},
            "kgrid": {"k_min": sd.kgrid.k_min, "k_max": sd.kgrid.k_max, "m": sd.kgrid.m},
            "dt": dt, "W_norm2_spectral": W2, "unresolved_mass": wl.unresolved_mass,
            "bound_kappa": [b.kappa for b in sd.bound]}
    return TheoremReport(Ts, cesaro, dyadic, t, curve, meta)


def _endpoint_integral(F: MomentumBump, k: float, t: float) -> complex:
    """2 sqrt(t) int_0^{b-k} F(k+u) exp(i t u^2) du by piecewise adaptive quadrature."""
    b = F.support[1]
    u_hi = b - k
    n_osc = t * u_hi ** 2 / (2 * math.pi) + 1
    pieces = np.linspace(0.0, u_hi, int(min(max(4, 4 * n_osc), 4000)) + 1)
    total = 0j
    for lo, hi in zip(pieces[:-1], pieces[1:]):
        val, _ = integrate.quad(lambda u: complex(F(k + u)) * np.exp(1j * t * u * u), lo, hi,
                                complex_func=True, epsabs=1e-13, epsrel=1e-12, limit=200)
        total += val
    return 2 * math.sqrt(t) * total


def stationary_phase_check(f, k: float, t_list: Sequence[float]) -> list[dict]:
    """Distance of the half-range oscillatory integral to f_hat_o(k) sqrt(pi/2)(1+i).

    With s = 2t(k+u), (e^{itk^2}/sqrt t) int_{2kt}^{2bt} F(s/2t) e^{i(s^2/4t - sk)} ds
    equals 2 sqrt(t) int_0^{b-k} F(k+u) e^{itu^2} du.
    """
    F = _profile_of(f)
    a, b = F.support
    if not (a < k < b):
        raise ValueError(f"k={k} must lie inside the bump support ({a}, {b})")
    limit = complex(F(np.array([k]))[0]) * SP_CONSTANT
    rows = []
    for t in t_list:
        if not (t > 0):
            raise ValueError(f"t must be positive, got {t}")
        val = _endpoint_integral(F, k, float(t))
        rows.append({"t": float(t), "value_re": val.real, "value_im": val.imag,
                     "limit_re": limit.real, "limit_im": limit.imag,
                     "error": abs(val - limit)})
    return rows


@dataclass
class Lemma1Scan:
    t_list: list[float]
    constant: list[float]        # max ratio per t
    critical: list[float]        # max over k of the ratio at x = kt + sqrt(t)
    rows: list[dict]

    @property
    def C(self) -> float:
        return max(self.constant)

    @property
    def variation(self) -> float:
        pos = [c for c in self.constant if c > 0]
        return max(pos) / min(pos) if pos else math.inf

    def to_dict(self) -> dict:
        return {"t_list": self.t_list, "constant": self.constant, "critical": self.critical,
                "C": self.C, "variation": self.variation, "rows": self.rows}


def lemma1_scan(f, t_list: Sequence[float] = (4, 16, 64, 256), k_list: Sequence[float] | None = None,
                offsets: Sequence[float] | None = None) -> Lemma1Scan:
    """|oscillatory tail| / (sqrt t / (x - kt + sqrt t)) over a (t, k, x) scan.

    ``x = kt + r sqrt(t)`` for each offset ``r``; r = 1 is the critical regime.
    """
    F = _profile_of(f)
    a, b = F.support
    if k_list is None:
        k_list = np.linspace(a, b, 7)[1:-1].tolist() + [0.5 * a]
    if offsets is None:
        offsets = [0.05, 0.2, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0]
    if 1.0 not in offsets:
        offsets = sorted(list(offsets) + [1.0])
    rows, constant, critical = [], [], []
    for t in t_list:
        st = math.sqrt(t)
        best, crit = 0.0, 0.0
        for kk in k_list:
            for r in offsets:
                x = kk * t + r * st
                val = abs(oscillatory_tail(F, t, kk, x))
                ratio = val / (st / (x - kk * t + st))
                rows.append({"t": float(t), "k": float(kk), "x": float(x), "abs_tail": val,
                             "ratio": ratio})
                best = max(best, ratio)
                if r == 1.0:
                    crit = max(crit, ratio)
        constant.append(best)
        critical.append(crit)
    return Lemma1Scan([float(t) for t in t_list], constant, critical, rows)


def low_energy_mass(f: WavePacket, p: Potential, sd: SpectralData, eigs: EigenBasis, t: float,
                    delta: float) -> float:
    """||P_[-delta, delta] U(t) f||^2 from bound overlaps and the continuum below delta."""
    if not (delta > sd.kgrid.k_min ** 2):
        raise ValueError(f"delta={delta} is below the resolvable energy k_min^2 = "
                         f"{sd.kgrid.k_min ** 2}")
    U = modified_free(f, p, t)
    total = 0.0
    for b in sd.bound:
        if b.kappa ** 2 <= delta:
            total += abs(np.sum(U.grid.weights * b.e.values * U.values)) ** 2
    sel = np.nonzero(sd.kgrid.E <= delta)[0]
    if sel.size:
        psi = eigs.forward(_sparsify(U.values), sel)
        total += float(np.sum(sd.measure_weights()[sel] * np.abs(psi) ** 2))
    return float(total)


def bound_state_overlaps(f: WavePacket, p: Potential, sd: SpectralData,
                         t_list: Sequence[float]) -> list[dict]:
    """|<U(t) f, e_j>| per time and bound state."""
    rows = []
    if not sd.bound:
        return rows
    for t in t_list:
        U = modified_free(f, p, float(t))
        for j, b in enumerate(sd.bound):
            ov = abs(np.sum(U.grid.weights * b.e.values * U.values))
            rows.append({"t": float(t), "j": j, "kappa": b.kappa, "overlap": float(ov)})
    return rows
