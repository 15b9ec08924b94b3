import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from modwave.numerics_core import (MomentumBump, MomentumGrid, WavePacket, canonical_bump,
                                   fresnel_tail, l2_distance, make_grid, odd_fourier,
                                   odd_fourier_at, odd_fourier_uniform, oscillatory_tail,
                                   wave_packet_from_bump)


def test_make_grid_examples():
    g = make_grid(10, 10)
    assert g.h == 1.0
    assert np.array_equal(g.x, np.arange(1, 11, dtype=float))
    assert np.allclose(make_grid(1, 2).x, [0.5, 1.0])
    assert abs(make_grid(2000, 2 ** 17).h - 0.0152587890625) < 1e-15


@pytest.mark.parametrize("x_max,n", [(0, 10), (-1, 10), (1, 1), (1, 0)])
def test_make_grid_rejects(x_max, n):
    with pytest.raises(ValueError):
        make_grid(x_max, n)


@given(st.floats(0.1, 1e4), st.integers(2, 5000))
@settings(max_examples=30, deadline=None)
def test_grid_invariants(x_max, n):
    g = make_grid(x_max, n)
    assert g.h > 0
    assert np.all(np.diff(g.x) > 0)
    assert abs(g.x[-1] - x_max) <= 1e-9 * x_max


def test_momentum_grid_invariants():
    kg = MomentumGrid(0.05, 4.0, 512)
    assert np.all(np.diff(kg.E) > 0)
    with pytest.raises(ValueError):
        MomentumGrid(0.0, 1.0, 10)
    with pytest.raises(ValueError):
        MomentumGrid(2.0, 1.0, 10)


def _smooth_compact(grid):
    x = grid.x
    out = np.zeros_like(x)
    inside = (x > 1) & (x < 6)
    out[inside] = np.exp(-1.0 / ((x[inside] - 1) * (6 - x[inside])))
    return WavePacket(grid, out)


def test_odd_fourier_zero_and_real_input():
    g = make_grid(50, 4096)
    kg = MomentumGrid(0.05, 4, 200)
    assert np.all(odd_fourier(WavePacket(g, np.zeros(g.n)), kg).values == 0)
    F = odd_fourier(_smooth_compact(g), kg).values
    assert np.max(np.abs(F.real)) <= 1e-14 * np.max(np.abs(F))


def test_odd_fourier_parseval_direct_quadrature():
    # ||f_o||^2 = 2 ||f||^2 = (1/2pi) int_R |f_hat_o|^2 = (1/pi) int_0^inf |f_hat_o|^2
    g = make_grid(50, 8192)
    f = _smooth_compact(g)
    w = np.linspace(0, 60, 24001)
    F = odd_fourier_at(f, w)
    rhs = integrate.trapezoid(np.abs(F) ** 2, w) / math.pi
    lhs = 2 * f.norm() ** 2
    assert abs(lhs - rhs) / lhs < 1e-6


def test_odd_fourier_chirp_matches_direct_sum():
    g = make_grid(400, 2 ** 15)
    f = wave_packet_from_bump(0.8, 1.6, g)
    kg = MomentumGrid(0.3, 3.0, 301)
    fast = odd_fourier(f, kg).values
    slow = odd_fourier_at(f, kg.k)
    assert np.max(np.abs(fast - slow)) <= 1e-12 * np.max(np.abs(slow))
    w0, dw = 0.9, 1e-4
    part = odd_fourier_uniform(f, w0, dw, 777)
    assert np.allclose(part[::70], odd_fourier_at(f, w0 + dw * np.arange(777)[::70]), rtol=0, atol=1e-12)


@given(st.complex_numbers(max_magnitude=10), st.complex_numbers(max_magnitude=10))
@settings(max_examples=20, deadline=None)
def test_odd_fourier_linear(alpha, beta):
    g = make_grid(40, 1024)
    kg = MomentumGrid(0.1, 3, 64)
    f = _smooth_compact(g)
    h = WavePacket(g, np.sin(g.x) * np.exp(-0.1 * g.x))
    lhs = odd_fourier(WavePacket(g, alpha * f.values + beta * h.values), kg).values
    rhs = alpha * odd_fourier(f, kg).values + beta * odd_fourier(h, kg).values
    assert np.allclose(lhs, rhs, rtol=0, atol=1e-11 * (1 + abs(alpha) + abs(beta)))


def test_wave_packet_from_bump_norm_and_round_trip():
    g = make_grid(400, 2 ** 15)
    f = wave_packet_from_bump(0.8, 1.6, g)
    assert abs(f.norm() - 1) < 1e-6
    kg = MomentumGrid(0.8, 1.6, 801)
    F = odd_fourier(f, kg).values
    B = f.profile(kg.k)
    assert np.linalg.norm(F - B) / np.linalg.norm(B) < 1e-4
    # half-line storage: only x > 0 exists
    assert np.all(g.x > 0)


@pytest.mark.parametrize("a,b", [(0.0, 1.0), (-1.0, 1.0), (1.0, 1.0), (2.0, 1.0)])
def test_wave_packet_from_bump_rejects(a, b):
    with pytest.raises(ValueError):
        wave_packet_from_bump(a, b, make_grid(10, 100))


def test_canonical_bump_shape():
    B = canonical_bump(1.0, 2.0)
    assert B(np.array([0.5, 1.0, 2.0, 2.5])).tolist() == [0, 0, 0, 0]
    assert abs(B(np.array([1.5]))[0] - math.exp(-4)) < 1e-15


def _fresnel_oracle(x):
    val = mpmath.quadosc(lambda u: mpmath.exp(1j * u * u), [x, mpmath.inf],
                         zeros=lambda n: mpmath.sqrt(mpmath.pi * (n + x * x / math.pi)))
    return complex(val)


@pytest.mark.parametrize("x", [0.0, 0.5, 1.0, 3.0, 10.0])
def test_fresnel_tail_brute_force(x):
    assert abs(fresnel_tail(x) - _fresnel_oracle(x)) < 1e-9


def test_fresnel_tail_bound_constant_stable():
    xs = np.linspace(1, 100, 2000)
    c = np.abs(fresnel_tail(xs)) * (1 + xs)
    lo, hi = c[xs <= 10].max(), c[xs >= 10].max()
    assert np.isfinite(c).all()
    assert max(lo, hi) / min(lo, hi) < 2


def test_oscillatory_tail_zero_profile():
    assert oscillatory_tail(MomentumBump(0.8, 1.6, 0.0), 4.0, 1.0, 5.0) == 0


def test_oscillatory_tail_direct_oracle():
    F = MomentumBump(0.8, 1.6, 500.0)
    t, k, x = 4.0, 1.0, 4.5

    def integrand(s, part):
        v = F(np.array([s / t]))[0] * np.exp(1j * (s * s / (2 * t) - s * k))
        return v.real if part == 0 else v.imag

    re = integrate.quad(integrand, x, 1.6 * t, args=(0,), limit=500, epsabs=1e-12)[0]
    im = integrate.quad(integrand, x, 1.6 * t, args=(1,), limit=500, epsabs=1e-12)[0]
    ref = (re + 1j * im) / math.sqrt(t)
    assert abs(oscillatory_tail(F, t, k, x) - ref) < 1e-6


def test_oscillatory_tail_truncation_independent():
    F = MomentumBump(0.8, 1.6, 500.0)
    a = oscillatory_tail(F, 16.0, 1.1, 20.0)
    b = oscillatory_tail(F, 16.0, 1.1, 20.0, upper=2.2)
    assert abs(a - b) < 1e-6


@pytest.mark.parametrize("t,k,x", [(4.0, 1.0, 4.0), (4.0, 1.0, 3.0), (1.0, 1.0, 5.0), (4.0, 0.0, 5.0)])
def test_oscillatory_tail_rejects(t, k, x):
    with pytest.raises(ValueError):
        oscillatory_tail(MomentumBump(0.8, 1.6), t, k, x)


def test_l2_distance_self_zero():
    g = make_grid(10, 100)
    f = WavePacket(g, np.exp(1j * g.x))
    assert l2_distance(f, f) == 0
