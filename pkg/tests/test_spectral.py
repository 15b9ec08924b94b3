import math

import numpy as np
import pytest
from scipy import optimize

from modwave.numerics_core import MomentumGrid, MomentumProfile, make_grid
from modwave.potential import make_potential
from modwave.spectral import (QUALITY_TOL, UnresolvedLimit, _sweep, extract_jost, find_bound_states,
                              generalized_transform, inverse_transform, jost_limit, modified_phase,
                              reconstruct_u, solve_regular, spectral_decomposition, spectral_density,
                              spectral_mass, substeps_for)

GRID = make_grid(200.0, 2 ** 14)


def test_solve_regular_free_exact():
    p = make_potential("zero", GRID)
    for k in (1.0, 4.0):
        eig = solve_regular(p, k)
        assert np.max(np.abs(eig.u - np.sin(k * GRID.x) / k)) < 1e-8
        assert np.max(np.abs(eig.du - np.cos(k * GRID.x))) < 1e-8


def test_solve_regular_constant_closed_form():
    c, k = 0.3, 1.2
    kappa = math.sqrt(k * k - c)
    eig = solve_regular(make_potential("constant", GRID, c=c), k)
    assert np.max(np.abs(eig.u - np.sin(kappa * GRID.x) / kappa)) < 1e-8


def test_solve_regular_rejects_nonpositive_k():
    with pytest.raises(ValueError):
        solve_regular(make_potential("zero", GRID), 0.0)


def test_wronskian_constant():
    p = make_potential("decaying_cos", GRID)
    k = 1.3
    s = substeps_for(p, k, 1e-9)
    st = p.stage_samples(s)
    E = np.array([k * k])
    u1, v1 = _sweep(st, GRID.h / s, s, E, np.zeros(1), np.ones(1), GRID.n)
    u2, v2 = _sweep(st, GRID.h / s, s, E, np.ones(1), np.zeros(1), GRID.n)
    W = u1[0] * v2[0] - v1[0] * u2[0]
    assert np.max(np.abs(W + 1.0)) < 1e-8


def test_modified_phase():
    assert modified_phase(make_potential("zero", GRID), 1.0, 5.0) == 0
    unit = make_potential("step_well", GRID, V0=-1.0, L=1.0)
    assert abs(modified_phase(unit, 1.0, 3.0) - 0.5) < 1e-12
    with pytest.raises(ValueError):
        modified_phase(unit, 0.0, 3.0)


def test_free_jost_is_one():
    p = make_potential("zero", GRID)
    for k in (0.5, 1.0, 3.0):
        mj = extract_jost(solve_regular(p, k), p)
        assert np.max(np.abs(mj.jm - 1)) < 1e-8
        assert abs(jost_limit(mj, strict=True) - 1) < 1e-8


def test_reconstruction_identity():
    p = make_potential("decaying_cos", GRID)
    eig = solve_regular(p, 1.3)
    mj = extract_jost(eig, p)
    assert np.max(np.abs(reconstruct_u(mj, GRID.x) - eig.u)) < 1e-10


@pytest.mark.parametrize("family,params", [("compact_bump", {}), ("step_well", {})])
def test_jost_constant_beyond_compact_support(family, params):
    p = make_potential(family, GRID, **params)
    mj = extract_jost(solve_regular(p, 1.0), p)
    tail = mj.jm[GRID.x > 20]
    assert np.max(np.abs(tail - tail[-1])) < 1e-9 * abs(tail[-1])
    assert abs(jost_limit(mj) - tail[-1]) < 1e-9


def test_jost_settles_off_resonance():
    # |jm| varies by <1% over the last tenth of the box away from k = omega/2
    p = make_potential("decaying_cos", make_grid(1600.0, 2 ** 17))
    mj = extract_jost(solve_regular(p, 1.3), p)
    mod = np.abs(mj.jm[p.grid.x > 0.9 * p.grid.x_max])
    assert (mod.max() - mod.min()) / mod.mean() < 1e-2


@pytest.mark.xfail(strict=True, reason="k = 1 is the resonant momentum omega/2 of the shipped cos families: "
                                       "|jm| still drifts 4-8% over the last tenth of the box")
@pytest.mark.parametrize("c", [0.25, 0.5])
def test_jost_settles_at_resonance(c):
    p = make_potential("decaying_cos", make_grid(1600.0, 2 ** 17), c=c)
    mj = extract_jost(solve_regular(p, 1.0), p)
    mod = np.abs(mj.jm[p.grid.x > 0.9 * p.grid.x_max])
    assert (mod.max() - mod.min()) / mod.mean() < 1e-2


def test_jost_limit_continuous_in_k():
    p = make_potential("decaying_cos", GRID)
    jumps = []
    for m in (256, 512):
        sd, _ = spectral_decomposition(p, MomentumGrid(1.5, 2.5, m))
        jumps.append(np.max(np.abs(np.diff(sd.jm_limit))))
    assert jumps[1] < 0.7 * jumps[0]


def test_unresolved_limit_raises():
    # q ~ cos(2x) resonates at k = 1: the amplitude keeps drifting in a short box
    p = make_potential("decaying_cos", make_grid(60.0, 2 ** 12), c=2.0)
    mj = extract_jost(solve_regular(p, 1.0), p)
    assert mj.quality > QUALITY_TOL
    with pytest.raises(UnresolvedLimit):
        jost_limit(mj, strict=True)
    with pytest.raises(UnresolvedLimit):
        spectral_density(p, 1.0)


def test_spectral_density_free():
    assert abs(spectral_density(make_potential("zero", GRID), 2.0) - 2 / math.pi) < 1e-7


def _well_states(V0, L):
    """kappa_n from K cot(K L) = -kappa, K^2 + kappa^2 = V0."""
    roots = []
    kmax = math.sqrt(V0)
    n = 1
    while (n - 0.5) * math.pi / L < kmax:
        lo = (n - 0.5) * math.pi / L + 1e-12
        hi = min(n * math.pi / L, kmax) - 1e-12
        g = lambda K: K / math.tan(K * L) + math.sqrt(max(V0 - K * K, 0.0))
        K = optimize.brentq(g, lo, hi, xtol=1e-15)
        roots.append(math.sqrt(V0 - K * K))
        n += 1
    return sorted(roots, reverse=True)


@pytest.mark.parametrize("V0,L", [(1.0, 5.0), (2.0, 3.0), (0.5, 9.0)])
def test_square_well_bound_states(V0, L):
    p = make_potential("step_well", GRID, V0=V0, L=L)
    states = find_bound_states(p)
    exact = _well_states(V0, L)
    assert len(states) == len(exact) == math.floor(math.sqrt(V0) * L / math.pi + 0.5)
    for b, kappa in zip(states, exact):
        assert abs(b.kappa - kappa) / kappa < 1e-3
        # tail decay rate
        x, e = GRID.x, np.abs(b.e.values)
        sel = (x > L + 5) & (x < L + 15)
        slope = np.polyfit(x[sel], np.log(e[sel]), 1)[0]
        assert abs(-slope - kappa) / kappa < 0.05
    E = np.array([[np.sum(GRID.weights * a.e.values * b.e.values) for b in states] for a in states])
    assert np.max(np.abs(E - np.eye(len(states)))) < 1e-8
    assert len(find_bound_states(p, substeps=2 * substeps_for(p, 0.0))) == len(states)


def test_no_bound_states_for_repulsive():
    assert find_bound_states(make_potential("compact_bump", GRID)) == []
    assert find_bound_states(make_potential("zero", GRID)) == []


@pytest.fixture(scope="module")
def free_small(small):
    return small.spectral("zero")


def test_free_transform_is_sine_transform(small, free_small):
    from modwave.numerics_core import odd_fourier
    p, sd, eigs = free_small
    breve, coeffs = generalized_transform(small.packet, sd, eigs)
    k = sd.kgrid.k
    ref = odd_fourier(small.packet, sd.kgrid).values / (2j * k)
    assert np.max(np.abs(breve.values - ref)) < 1e-6 * np.max(np.abs(ref))
    assert coeffs.size == 0


def test_inverse_of_zero_is_zero(free_small):
    p, sd, eigs = free_small
    g = inverse_transform(MomentumProfile(sd.kgrid, np.zeros(sd.kgrid.m, complex)), [], sd, eigs)
    assert not np.any(g.values)


def test_bound_state_transform(small):
    p, sd, eigs = small.spectral("step_well", V0=1.0, L=5.0)
    e1 = sd.bound[0].e
    breve, coeffs = generalized_transform(e1, sd, eigs)
    assert abs(coeffs[0] - 1) < 1e-8
    cont = float(np.sum(sd.measure_weights() * np.abs(breve.values) ** 2))
    assert cont < 1e-4


@pytest.mark.parametrize("family,params", [
    ("zero", {}), ("compact_bump", {}), ("decaying_cos", {"c": 0.25}), ("step_well", {}),
])
def test_parseval_small_box(small, family, params):
    p, sd, eigs = small.spectral(family, **params)
    breve, coeffs = generalized_transform(small.packet, sd, eigs)
    assert abs(spectral_mass(breve.values, coeffs, sd) - 1.0) < 1e-3


@pytest.mark.parametrize("family,params", [("zero", {}), ("compact_bump", {})])
def test_round_trip_small_box(small, family, params):
    # pi/dk = 2 x_max: the k-quadrature does not alias back into the box
    p = small.potential(family, **params)
    sd, eigs = spectral_decomposition(p, MomentumGrid(0.01, 4.0, 512))
    breve, coeffs = generalized_transform(small.packet, sd, eigs)
    back = inverse_transform(breve, coeffs, sd, eigs)
    assert np.sqrt(np.sum(GRID.weights * np.abs(back.values - small.packet.values) ** 2)) < 1e-3


_K_RESOLUTION = pytest.mark.xfail(strict=True, reason="dk too coarse near the k = 1 resonance; m = 4096 "
                                                      "brings the error to 7e-4")
_K_TRUNCATION = pytest.mark.xfail(strict=True, reason="the jump at L puts content outside the k-grid [0.01, 4]")


@pytest.mark.parametrize("family,params", [
    ("zero", {}), ("compact_bump", {}),
    pytest.param("decaying_cos", {"c": 0.5, "alpha": 0.75, "omega": 2.0}, marks=_K_RESOLUTION),
    pytest.param("step_well", {"V0": 1.0, "L": 5.0}, marks=_K_TRUNCATION),
])
def test_round_trip_default_preset(default_lab, family, params):
    p, sd, eigs = default_lab.spectral(family, **params)
    f = default_lab.packet
    breve, coeffs = generalized_transform(f, sd, eigs)
    back = inverse_transform(breve, coeffs, sd, eigs)
    assert np.sqrt(np.sum(f.grid.weights * np.abs(back.values - f.values) ** 2)) < 1e-3
