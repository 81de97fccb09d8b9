"""Polarized U(1)-symmetric vacuum data and symmetry monitors (D = 3).

The symmetry class: all fields independent of x^3, with
g_13 = g_23 = k_13 = k_23 = 0 and no scalar field.  Together with the
adapted frame (third frame vector parallel to d/dx^3) this forces every
connection coefficient with three distinct indices to vanish, and the
evolution preserves all of these zeros exactly, which is what
check_symmetry verifies during runs.
"""

from __future__ import annotations

import numpy as np

from .frames import metric_from_coframe
from .grid import Grid
from .state import ReducedState


class PolarizationError(ValueError):
    pass


_ALLOWED_G = (("g11", 0, 0), ("g12", 0, 1), ("g22", 1, 1), ("g33", 2, 2))
_ALLOWED_K = (("k11", 0, 0), ("k12", 0, 1), ("k22", 1, 1), ("k33", 2, 2))


def build_polarized_data(grid: Grid, profiles: dict):
    """Assemble (g, k) coordinate data from x^1,x^2-dependent profiles.

    `profiles` maps the allowed component names g11,g12,g22,g33 and
    k11,k12,k22,k33 to fields on the grid (missing entries default to the
    flat/Kasner-free values 1, 0 and 0).  The forbidden components are
    exact zeros by construction.  The returned k does not yet satisfy the
    CMC trace condition; enforce_cmc_trace handles that downstream.
    """
    if grid.dim != 3:
        raise PolarizationError("polarized data construction needs D = 3")
    if 2 in grid.active:
        raise PolarizationError("x^3 must be an inactive coordinate")
    known = {name for name, _, _ in _ALLOWED_G + _ALLOWED_K}
    unknown = set(profiles) - known
    if unknown:
        raise PolarizationError(f"not a polarized component: {sorted(unknown)}")

    g = np.zeros((3, 3) + grid.shape)
    k = np.zeros((3, 3) + grid.shape)
    for i in range(3):
        g[i, i] = 1.0
    for name, i, j in _ALLOWED_G:
        if name in profiles:
            g[i, j] = np.broadcast_to(profiles[name], grid.shape).copy()
            g[j, i] = g[i, j]
    for name, i, j in _ALLOWED_K:
        if name in profiles:
            k[i, j] = np.broadcast_to(profiles[name], grid.shape).copy()
            k[j, i] = k[i, j]

    # SPD: g33 > 0 and the 2x2 block positive definite
    block_det = g[0, 0] * g[1, 1] - g[0, 1] ** 2
    if g[2, 2].min() <= 0 or g[0, 0].min() <= 0 or block_det.min() <= 0:
        raise PolarizationError("metric profiles are not positive definite")
    return g, k


def check_symmetry(grid: Grid, state: ReducedState) -> dict:
    """Sup-norm monitors of the three symmetry properties.

    x3_independence: derivatives of all fields along x^3 (identically zero
    when x^3 is inactive, reported for completeness);
    polarization: the four forbidden metric / second-fundamental-form
    coordinate components, reconstructed from the evolved frame;
    gamma_distinct: the three distinct-index connection coefficients;
    e3_alignment: the components of e_3 off the Killing direction.
    """
    d3 = 0.0
    for f in (state.n, state.k, state.gamma, state.e, state.omega,
              state.e0psi, state.epsi):
        d3 = max(d3, grid.sup(grid.partial(f, 2)))

    g = metric_from_coframe(state.omega)
    kcoord = np.einsum("IJ...,Ii...,Jj...->ij...", state.k,
                       state.omega, state.omega, optimize=True)
    polarization = max(grid.sup(g[0, 2]), grid.sup(g[1, 2]),
                       grid.sup(kcoord[0, 2]), grid.sup(kcoord[1, 2]))

    gam = state.gamma
    gamma_distinct = (grid.sup(gam[0, 1, 2]) + grid.sup(gam[1, 2, 0])
                      + grid.sup(gam[2, 0, 1]))

    e3_alignment = grid.sup(state.e[2, 0]) + grid.sup(state.e[2, 1])
    return {
        "x3_independence": d3,
        "polarization": polarization,
        "gamma_distinct": gamma_distinct,
        "e3_alignment": e3_alignment,
    }
