"""Orthonormal frame / co-frame algebra on the spatial slices.

Conventions used across the package:

  e[I, i]      components e_I^i of the frame vector e_I = e_I^i d/dx^i
  omega[I, i]  components omega_i^I of the dual co-frame one-form omega^I
  gamma[I, J, B]  spatial connection coefficients g(nabla_{e_I} e_J, e_B),
                  antisymmetric in the last two slots

The initial frame is produced by Gram-Schmidt on the coordinate vectors
(starting from d/dx^1, or from the Killing direction d/dx^3 in the
polarized case), the co-frame is the metric dual omega_i^I = g_ia e_I^a,
and gamma is evaluated from the frame by the Koszul identity.
"""

from __future__ import annotations

import numpy as np

from .grid import Grid, frame_derivative


class NonSPDMetricError(ValueError):
    """Metric failed positive-definiteness at some grid point."""

    def __init__(self, point, eigenvalue):
        self.point = point
        self.eigenvalue = eigenvalue
        super().__init__(
            f"metric not SPD: min eigenvalue {eigenvalue:.3e} at grid point {point}")


def _check_spd(g: np.ndarray, min_eig: float = 1e-10):
    """g has shape (D, D) + grid shape; returns (worst point, worst eig)."""
    gm = np.moveaxis(g, (0, 1), (-2, -1))
    eigs = np.linalg.eigvalsh(gm)          # (*grid, D), ascending
    lo = eigs[..., 0]
    worst = np.unravel_index(np.argmin(lo), lo.shape)
    if lo[worst] <= min_eig:
        raise NonSPDMetricError(worst, float(lo[worst]))


def gram_schmidt_frame(grid: Grid, g: np.ndarray, order=None):
    """Pointwise Gram-Schmidt of the coordinate frame, e_1 along d/dx^1 first.

    Returns (e, omega).  `order` optionally permutes which coordinate
    vector seeds each frame slot; the default is (0, 1, ..., D-1).
    """
    D = grid.dim
    _check_spd(g)
    if order is None:
        order = tuple(range(D))
    e = np.zeros((D, D) + grid.shape)
    done = []
    for slot, i0 in enumerate(order):
        v = np.zeros((D,) + grid.shape)
        v[i0] = 1.0
        for eL in done:
            # g(d_i0, e_L) = g_{i0 a} e_L^a
            proj = np.einsum("a...,a...->...", g[i0], eL)
            v -= proj * eL
        norm2 = np.einsum("c...,cd...,d...->...", v, g, v)
        if norm2.min() <= 1e-20:
            worst = np.unravel_index(np.argmin(norm2), norm2.shape)
            raise NonSPDMetricError(worst, float(norm2.min()))
        v /= np.sqrt(norm2)
        e[slot] = v
        done.append(v)
    omega = np.einsum("ia...,Ia...->Ii...", g, e)
    return e, omega


def gram_schmidt_frame_u1(grid: Grid, g: np.ndarray, pol_tol: float = 1e-12):
    """Orthonormal frame for polarized data with Killing direction d/dx^3.

    Requires D=3, g_13 = g_23 = 0, and x^3-independence (the third
    coordinate must be inactive on the grid).  The third frame vector is
    е_3 = d/dx^3 / sqrt(g_33) and the first two span the (x^1, x^2) plane,
    so all symmetry-forbidden components come out as exact zeros.
    """
    if grid.dim != 3:
        raise ValueError("polarized frame construction needs D = 3")
    if 2 in grid.active:
        raise ValueError("x^3 must be an inactive (symmetry) coordinate")
    viol = max(grid.sup(g[0, 2]), grid.sup(g[1, 2]))
    if viol > pol_tol:
        raise ValueError(f"polarization violated: sup |g_13|,|g_23| = {viol:.3e}")
    _check_spd(g)
    e = np.zeros((3, 3) + grid.shape)
    e[2, 2] = 1.0 / np.sqrt(g[2, 2])
    # in-plane Gram-Schmidt; projections onto e_3 vanish identically
    e[0, 0] = 1.0 / np.sqrt(g[0, 0])
    v = np.zeros((3,) + grid.shape)
    v[1] = 1.0
    proj = np.einsum("a...,a...->...", g[1], e[0])
    v -= proj * e[0]
    norm2 = np.einsum("c...,cd...,d...->...", v, g, v)
    if norm2.min() <= 1e-20:
        worst = np.unravel_index(np.argmin(norm2), norm2.shape)
        raise NonSPDMetricError(worst, float(norm2.min()))
    e[1] = v / np.sqrt(norm2)
    e[1, 2] = 0.0
    omega = np.einsum("ia...,Ia...->Ii...", g, e)
    return e, omega


def metric_from_coframe(omega: np.ndarray) -> np.ndarray:
    """Reconstruct g_ij = omega_i^A omega_j^A."""
    return np.einsum("Ai...,Aj...->ij...", omega, omega)


def duality_residual(e: np.ndarray, omega: np.ndarray) -> float:
    """max |omega_a^I e_J^a - delta_J^I| over the grid."""
    D = e.shape[0]
    prod = np.einsum("Ia...,Ja...->IJ...", omega, e)
    eye = np.eye(D).reshape((D, D) + (1,) * (prod.ndim - 2))
    return float(np.max(np.abs(prod - eye)))


def koszul_gamma(grid: Grid, e: np.ndarray, omega: np.ndarray) -> np.ndarray:
    """Connection coefficients from the frame via the Koszul identity:

    gamma_IJB = 1/2 { omega_c^B (e_I e_J^c - e_J e_I^c)
                     - omega_c^I (e_J e_B^c - e_B e_J^c)
                     + omega_c^J (e_B e_I^c - e_I e_B^c) }.
    """
    D = grid.dim
    # T[I, J, c] = e_I(e_J^c); W = commutator components T[I,J] - T[J,I]
    de = grid.grad(e)                      # (d_a, D, D) + grid.shape
    e_act = e[:, list(grid.active)]
    T = np.einsum("Id...,dJc...->IJc...", e_act, de)
    W = T - T.transpose((1, 0, 2) + tuple(range(3, T.ndim)))
    g1 = np.einsum("Bc...,IJc...->IJB...", omega, W)
    g2 = np.einsum("Ic...,JBc...->IJB...", omega, W)
    g3 = np.einsum("Jc...,BIc...->IJB...", omega, W)
    return 0.5 * (g1 - g2 + g3)


def structure_coefficients(gamma: np.ndarray) -> np.ndarray:
    """S_IJB = gamma_IJB + gamma_JBI, the frame commutator components."""
    perm = (1, 2, 0) + tuple(range(3, gamma.ndim))
    return gamma + gamma.transpose(perm)


def recover_gamma(S: np.ndarray) -> np.ndarray:
    """Invert structure_coefficients: gamma_IJB = (S_IJB + S_BJI + S_BIJ) / 2."""
    p1 = (2, 1, 0) + tuple(range(3, S.ndim))
    p2 = (2, 0, 1) + tuple(range(3, S.ndim))
    return 0.5 * (S + S.transpose(p1) + S.transpose(p2))
