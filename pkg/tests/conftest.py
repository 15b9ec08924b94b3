"""Shared fixtures: grids, packets and cached spectral decompositions.

Three sizes are used: ``small`` (x_max = 200) for fast unit checks,
``quick`` (the CLI's quick preset, x_max = 400) for the harness, and
``default`` (x_max = 1600, n = 2^17) for the acceptance criteria.
"""
from __future__ import annotations

import pytest

from modwave.numerics_core import MomentumGrid, make_grid, wave_packet_from_bump
from modwave.potential import make_potential
from modwave.spectral import spectral_decomposition

A, B = 0.8, 1.6
SIZES = {
    "small": (200.0, 2 ** 14, 0.01, 4.0, 256),
    "quick": (400.0, 2 ** 15, 0.01, 4.0, 512),
    "default": (1600.0, 2 ** 17, 0.01, 4.0, 2048),
}

ACCEPTANCE_LINES: list[str] = []


class Lab:
    def __init__(self, size: str):
        x_max, n, k_min, k_max, m = SIZES[size]
        self.grid = make_grid(x_max, n)
        self.kgrid = MomentumGrid(k_min, k_max, m)
        self.packet = wave_packet_from_bump(A, B, self.grid)
        self._cache = {}

    def potential(self, family: str, **params):
        return make_potential(family, self.grid, **params)

    def spectral(self, family: str, **params):
        key = (family, tuple(sorted(params.items())))
        if key not in self._cache:
            p = self.potential(family, **params)
            sd, eigs = spectral_decomposition(p, self.kgrid)
            self._cache[key] = (p, sd, eigs)
        return self._cache[key]


_LABS: dict[str, Lab] = {}


def get_lab(size: str) -> Lab:
    if size not in _LABS:
        _LABS[size] = Lab(size)
    return _LABS[size]


@pytest.fixture(scope="session")
def small():
    return get_lab("small")


@pytest.fixture(scope="session")
def quick():
    return get_lab("quick")


@pytest.fixture(scope="session")
def default_lab():
    return get_lab("default")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
