"""Assembly of perturbed initial data on the t=1 slice.

Coordinate data (g, k, psi, phi) are turned into a ReducedState by
Gram-Schmidt orthonormalization of the coordinate frame, Koszul evaluation
of the connection coefficients, and an elliptic solve for the lapse.  The
CMC trace condition tr k = -1 is always enforced by a pointwise rescaling
of the trace part of k.  Optionally the trace-free part of k is rescaled
pointwise so the Hamiltonian constraint holds exactly on the grid; the
momentum constraint is only monitored, never solved for, so generic data
carry a small momentum residual that the diagnostics track.
"""

from __future__ import annotations

import numpy as np

from .background import KasnerData
from .diagnostics import hamiltonian_residual, momentum_residual
from .frames import gram_schmidt_frame, gram_schmidt_frame_u1, koszul_gamma
from .grid import Grid, frame_derivative
from .lapse import LapseSolveConfig, solve_lapse
from .state import ReducedState


class ConstraintResidualError(ValueError):
    """Initial data rejected: constraint residuals above the threshold."""


def kasner_coordinate_data(grid: Grid, background: KasnerData):
    """Exact Kasner coordinate data on the t=1 slice: g = identity,
    k = -diag(q), psi = 0, phi = B."""
    D = grid.dim
    q = background.exponents
    g = np.zeros((D, D) + grid.shape)
    k = np.zeros((D, D) + grid.shape)
    for i in range(D):
        g[i, i] = 1.0
        k[i, i] = -q[i]
    psi = np.zeros(grid.shape)
    phi = np.full(grid.shape, background.scalar_coeff)
    return g, k, psi, phi


def enforce_cmc_trace(g: np.ndarray, kcoord: np.ndarray, target: float = -1.0):
    """Shift the pure-trace part of k so that g^{ij} k_ij = target pointwise."""
    D = g.shape[0]
    gm = np.moveaxis(g, (0, 1), (-2, -1))
    ginv = np.moveaxis(np.linalg.inv(gm), (-2, -1), (0, 1))
    tr = np.einsum("ij...,ij...->...", ginv, kcoord)
    return kcoord - ((tr - target) / D) * g


def project_hamiltonian(grid: Grid, state: ReducedState,
                        method: str = "auto") -> ReducedState:
    """Zero the Hamiltonian constraint residual by a pointwise rescaling.

    method "scalar": absorb the residual into the scalar-field momentum,
    e0psi := sqrt of everything else in the constraint.  Works whenever the
    background carries a scalar field (the share stays positive near any
    Kasner data with B > 0).

    method "tracefree": rescale the trace-free part of k_IJ instead.  Works
    in vacuum, where the background anisotropy |k_tracefree|^2 =
    (1 - 1/D)/t^2 is bounded away from zero; degenerate for isotropic
    backgrounds.

    "auto" picks "scalar" when the current scalar momentum is bounded away
    from zero everywhere, else "tracefree".
    """
    if method == "auto":
        method = "scalar" if np.min(np.abs(state.e0psi)) > 1e-8 else "tracefree"

    out = state.copy()
    if method == "scalar":
        share = hamiltonian_residual(grid, state) + state.e0psi ** 2
        if share.min() <= 0.0:
            raise ConstraintResidualError(
                "scalar Hamiltonian projection impossible: "
                f"momentum share min {share.min():.3e}")
        out.e0psi = np.sqrt(share)
        return out
    if method != "tracefree":
        raise ValueError(f"unknown projection method {method!r}")

    D = grid.dim
    k = state.k
    tr = np.einsum("CC...->...", k)
    eye = np.eye(D).reshape((D, D) + (1,) * len(grid.shape))
    khat = k - (tr / D) * eye
    khat2 = np.einsum("CD...,CD...->...", khat, khat)
    # residual with k removed: target |khat|^2 = rest - tr^2/D
    rest = hamiltonian_residual(grid, state) + np.einsum("CD...,CD...->...", k, k)
    target = rest - tr ** 2 / D
    if target.min() <= 0.0 or khat2.min() <= 1e-20:
        raise ConstraintResidualError(
            "trace-free Hamiltonian projection impossible: share "
            f"min {target.min():.3e}, |khat|^2 min {khat2.min():.3e}")
    out.k = (tr / D) * eye + np.sqrt(target / khat2) * khat
    return out


def state_from_geometric_data(grid: Grid, background: KasnerData,
                              g: np.ndarray, kcoord: np.ndarray,
                              psi: np.ndarray, phi: np.ndarray,
                              t: float = 1.0, u1_frame: bool = False,
                              project: bool = False,
                              residual_threshold: float | None = None,
                              lapse_cfg: LapseSolveConfig = LapseSolveConfig()
                              ) -> ReducedState:
    """Build the full reduced state from coordinate data (g, k, psi, phi).

    phi is the unit-normal derivative of the scalar field (so e0psi := phi);
    psi only enters through its spatial gradient.
    """
    kcoord = enforce_cmc_trace(g, kcoord, target=-1.0 / t)
    if u1_frame:
        e, omega = gram_schmidt_frame_u1(grid, g)
    else:
        e, omega = gram_schmidt_frame(grid, g)
    gamma = koszul_gamma(grid, e, omega)
    kframe = np.einsum("cd...,Ic...,Jd...->IJ...", kcoord, e, e, optimize=True)
    epsi = frame_derivative(grid, e, psi)

    state = ReducedState(t=float(t), n=np.ones(grid.shape), k=kframe,
                         gamma=gamma, e=e, omega=omega,
                         e0psi=np.asarray(phi, dtype=float).copy(), epsi=epsi)
    if project:
        state = project_hamiltonian(grid, state)
    state.n = solve_lapse(grid, state.gamma, state.e, state.epsi, t, lapse_cfg)

    if residual_threshold is not None:
        ham = t ** 2 * grid.sup(hamiltonian_residual(grid, state))
        mom = t * grid.sup(momentum_residual(grid, state))
        if max(ham, mom) > residual_threshold:
            raise ConstraintResidualError(
                f"initial residuals t^2|Ham| = {ham:.3e}, t|Mom| = {mom:.3e} "
                f"exceed threshold {residual_threshold:g}")
    return state


def mode_field(grid: Grid, modes) -> np.ndarray:
    """Sum of Fourier modes: each entry is (kvec, cos_amp, sin_amp) with one
    integer wavenumber per active coordinate."""
    x = grid.coords()
    f = np.zeros(grid.shape)
    for kvec, ac, asin in modes:
        if len(kvec) != len(grid.active):
            raise ValueError("one wavenumber per active dim")
        phase = sum(k * xi for k, xi in zip(kvec, x))
        phase = phase + np.zeros(grid.shape)
        f += ac * np.cos(phase) + asin * np.sin(phase)
    return f


def perturbed_kasner_data(grid: Grid, background: KasnerData,
                          g_modes=None, k_modes=None,
                          psi_modes=None, phi_modes=None):
    """Kasner coordinate data plus explicit Fourier-mode perturbations.

    g_modes / k_modes map (i, j) index pairs to mode lists (symmetrized);
    psi_modes / phi_modes are plain mode lists.
    """
    g, k, psi, phi = kasner_coordinate_data(grid, background)
    for (i, j), modes in (g_modes or {}).items():
        f = mode_field(grid, modes)
        g[i, j] += f
        if i != j:
            g[j, i] += f
    for (i, j), modes in (k_modes or {}).items():
        f = mode_field(grid, modes)
        k[i, j] += f
        if i != j:
            k[j, i] += f
    if psi_modes:
        psi = psi + mode_field(grid, psi_modes)
    if phi_modes:
        phi = phi + mode_field(grid, phi_modes)
    return g, k, psi, phi
