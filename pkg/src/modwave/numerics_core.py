"""Grids, odd-extension Fourier transforms, quadrature and oscillatory tails.

Conventions
-----------
The half-line is discretised by ``x_i = i*h`` for ``i = 1..n`` with
``h = x_max/n``; the Dirichlet node ``x = 0`` is not stored. Integrals over
``[0, x_max]`` use the trapezoid rule with the (zero) value at ``x = 0``
folded in, so every node carries weight ``h`` except the last (``h/2``).

For a function ``f`` on the half-line, ``f_o`` is its odd extension and

    f_hat_o(w) = int f_o(x) exp(i w x) dx = 2i int_0^inf f(x) sin(w x) dx.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from scipy import fft as sfft
from scipy import integrate, special

_CHUNK_ELEMS = 4_000_000


@dataclass(frozen=True)
class RadialGrid:
    x_max: float
    n: int

    def __post_init__(self):
        if not (self.x_max > 0):
            raise ValueError(f"x_max must be positive, got {self.x_max}")
        if self.n < 2:
            raise ValueError(f"need n >= 2 nodes, got {self.n}")

    @property
    def h(self) -> float:
        return self.x_max / self.n

    @cached_property
    def x(self) -> np.ndarray:
        return np.arange(1, self.n + 1) * self.h

    @cached_property
    def weights(self) -> np.ndarray:
        w = np.full(self.n, self.h)
        w[-1] = 0.5 * self.h
        return w

    def index_of(self, x: float) -> int:
        """Index of the node nearest to ``x``."""
        return int(np.clip(round(x / self.h) - 1, 0, self.n - 1))


def make_grid(x_max: float, n: int) -> RadialGrid:
    return RadialGrid(float(x_max), int(n))


@dataclass(frozen=True)
class MomentumGrid:
    k_min: float
    k_max: float
    m: int

    def __post_init__(self):
        if not (0 < self.k_min < self.k_max):
            raise ValueError(f"need 0 < k_min < k_max, got {self.k_min}, {self.k_max}")
        if self.m < 2:
            raise ValueError(f"need m >= 2 momentum nodes, got {self.m}")

    @property
    def dk(self) -> float:
        return (self.k_max - self.k_min) / (self.m - 1)

    @cached_property
    def k(self) -> np.ndarray:
        return np.linspace(self.k_min, self.k_max, self.m)

    @property
    def E(self) -> np.ndarray:
        return self.k ** 2

    @cached_property
    def weights(self) -> np.ndarray:
        """Trapezoid weights for integrals in ``dk``."""
        w = np.full(self.m, self.dk)
        w[0] = w[-1] = 0.5 * self.dk
        return w

    def alias_free_length(self) -> float:
        """Largest x for which k-grid sums of sin(kx) carry no periodic image."""
        return math.pi / self.dk


@dataclass(frozen=True)
class MomentumBump:
    """Smooth profile ``scale * exp(-1/((k-a)(b-k)))`` supported on ``(a, b)``."""

    a: float
    b: float
    scale: float = 1.0

    def __call__(self, k):
        k = np.asarray(k, dtype=float)
        out = np.zeros_like(k)
        inside = (k > self.a) & (k < self.b)
        ki = k[inside]
        out[inside] = self.scale * np.exp(-1.0 / ((ki - self.a) * (self.b - ki)))
        return out

    @property
    def support(self) -> tuple[float, float]:
        return (self.a, self.b)


@dataclass
class WavePacket:
    grid: RadialGrid
    values: np.ndarray
    # odd Fourier transform in closed form, when the packet was built from one
    profile: MomentumBump | None = field(default=None, repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != (self.grid.n,):
            raise ValueError("values must have one entry per grid node")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("wave packet values must be finite")

    def norm(self) -> float:
        return math.sqrt(float(np.sum(self.grid.weights * np.abs(self.values) ** 2)))

    def inner(self, other: "WavePacket") -> complex:
        """<self, other>, antilinear in ``self``."""
        return complex(np.sum(self.grid.weights * np.conj(self.values) * other.values))

    def with_values(self, values) -> "WavePacket":
        return WavePacket(self.grid, values, self.profile)

    @property
    def support(self) -> tuple[float, float] | None:
        return None if self.profile is None else self.profile.support


@dataclass
class MomentumProfile:
    grid: MomentumGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape[0] != self.grid.m:
            raise ValueError("values must have one entry per momentum node")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("momentum profile values must be finite")


def l2_distance(f: WavePacket, g: WavePacket) -> float:
    return f.with_values(f.values - g.values).norm()


def odd_fourier_at(f: WavePacket, omega) -> np.ndarray:
    """f_hat_o at arbitrary momenta by direct trapezoid summation."""
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    x = f.grid.x
    wf = f.grid.weights * f.values
    out = np.zeros(omega.size, dtype=complex)
    step = max(1, _CHUNK_ELEMS // max(omega.size, 1))
    for i0 in range(0, x.size, step):
        s = np.sin(np.outer(omega, x[i0:i0 + step]))
        out += s @ wf[i0:i0 + step]
    return 2j * out


def odd_fourier(f: WavePacket, kg: MomentumGrid) -> MomentumProfile:
    # uniform grid: chirp-z agrees with direct summation to ~1e-12
    return MomentumProfile(kg, odd_fourier_uniform(f, kg.k_min, kg.dk, kg.m))


def odd_fourier_uniform(f: WavePacket, omega0: float, domega: float, count: int) -> np.ndarray:
    """f_hat_o on ``omega0 + l*domega`` (l < count) by a chirp-z (Bluestein) transform.

    With x_j = (j+1) h and beta = domega h, the identity
    l j = (l^2 + j^2 - (l-j)^2)/2 turns sum_j g_j exp(i omega_l x_j) into one
    convolution with the chirp exp(-i beta d^2/2). The chirp spectrum is
    shared between the +omega and -omega passes.
    """
    h = f.grid.h
    g = f.grid.weights * f.values
    nz = np.nonzero(g)[0]
    # trailing zeros contribute nothing; dropping them shortens the FFTs
    g = g[: nz[-1] + 1] if nz.size else g[:1]
    n, m = g.size, int(count)
    beta = domega * h
    j = np.arange(n)
    l = np.arange(m)
    nfft = sfft.next_fast_len(n + m - 1)
    d = np.arange(-(n - 1), m).astype(float)
    chirp_hat = sfft.fft(np.exp(-0.5j * beta * d * d), nfft)
    pre = np.exp(0.5j * beta * j.astype(float) ** 2 + 1j * omega0 * (j + 1) * h)
    post = np.exp(0.5j * beta * l.astype(float) ** 2 + 1j * beta * l)

    def chirp_sum(vals):
        conv = sfft.ifft(sfft.fft(vals * pre, nfft) * chirp_hat)
        return post * conv[n - 1:n - 1 + m]

    return chirp_sum(g) - np.conj(chirp_sum(np.conj(g)))


def inverse_odd_fourier_dst(F: Callable, grid: RadialGrid) -> np.ndarray:
    """Half-line function whose odd transform is the odd profile ``F``.

    f(x) = (-i/pi) int_0^inf F(w) sin(w x) dw, evaluated with the trapezoid
    rule on w_j = pi j / x_max; that sum is a type-I sine transform on the
    interior nodes. The last node (x_max) is a Dirichlet zero.
    """
    n = grid.n
    dw = math.pi / grid.x_max
    w = dw * np.arange(1, n)
    y = sfft.dst(np.asarray(F(w), dtype=float), type=1)
    out = np.zeros(n, dtype=complex)
    out[:-1] = (-1j / math.pi) * 0.5 * dw * y
    return out


def canonical_bump(a: float, b: float) -> MomentumBump:
    if not (a > 0):
        raise ValueError(f"bump lower edge must be positive, got a={a}")
    if not (b > a):
        raise ValueError(f"bump needs b > a, got a={a}, b={b}")
    return MomentumBump(float(a), float(b))


def wave_packet_from_bump(a: float, b: float, grid: RadialGrid) -> WavePacket:
    """Unit-norm packet whose odd transform is a C-infinity bump on [a, b]."""
    bump = canonical_bump(a, b)
    vals = inverse_odd_fourier_dst(bump, grid)
    norm = math.sqrt(float(np.sum(grid.weights * np.abs(vals) ** 2)))
    scaled = MomentumBump(bump.a, bump.b, 1.0 / norm)
    return WavePacket(grid, vals / norm, scaled)


def fresnel_tail(x):
    """int_x^inf exp(i u^2) du."""
    x = np.asarray(x, dtype=float)
    c = math.sqrt(math.pi / 2)
    S, C = special.fresnel(x / c)
    return c * ((0.5 - C) + 1j * (0.5 - S))


def oscillatory_tail(F: Callable, t: float, k: float, x: float, upper: float | None = None,
                     epsabs: float = 1e-10) -> complex:
    """(1/sqrt t) int_x^inf F(s/t) exp(i(s^2/(2t) - s k)) ds.

    ``F`` must vanish beyond ``upper`` (defaults to ``F.b``, the edge of its
    support), which truncates the integral at ``s = upper * t``.
    """
    if not (t > 1 and k > 0):
        raise ValueError(f"need t > 1 and k > 0, got t={t}, k={k}")
    if not (x > k * t):
        raise ValueError(f"need x > k t (x={x}, k t={k * t})")
    if upper is None:
        upper = F.support[1]
    u_lo = x / t - k
    u_hi = upper - k
    if u_lo >= u_hi:
        return 0j
    # s = t (k + u): integral = sqrt(t) e^{-i t k^2 / 2} int F(k+u) e^{i t u^2 / 2} du
    n_osc = t * (u_hi ** 2 - u_lo ** 2) / (4 * math.pi) + 1
    pieces = np.linspace(u_lo, u_hi, int(min(max(4, 4 * n_osc), 4000)) + 1)
    total = 0j
    for lo, hi in zip(pieces[:-1], pieces[1:]):
        val, _ = integrate.quad(lambda u: complex(F(k + u)) * np.exp(0.5j * t * u * u),
                                lo, hi, complex_func=True, epsabs=epsabs / len(pieces),
                                epsrel=1e-12, limit=200)
        total += val
    return complex(math.sqrt(t) * np.exp(-0.5j * t * k * k) * total)
