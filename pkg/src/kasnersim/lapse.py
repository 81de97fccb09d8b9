"""Elliptic solve for the lapse on each CMC slice.

With nu := n - 1, the slice equation is the linear problem A nu = s,

    A nu = e_C e_C nu - t^-2 nu - gamma_CCD e_D nu - s nu,
    s    = 2 e_C gamma_DDC - gamma_CDE gamma_EDC - gamma_CCD gamma_EED
           - (e_C psi)(e_C psi),

whose t^-2 zeroth-order term keeps the operator invertible on the torus.
It is solved with a Krylov iteration preconditioned by a constant-
coefficient Helmholtz operator inverted spectrally, with coefficients set
to the grid-average of the frame metric so the preconditioner tracks the
anisotropic power-law stretching of the frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .grid import Grid, frame_derivative, frame_divergence


class LapseConvergenceError(RuntimeError):
    """Krylov iteration failed to reach the requested residual."""


class LapsePositivityError(RuntimeError):
    """Solved lapse is not positive everywhere: left the perturbative regime."""


@dataclass(frozen=True)
class LapseSolveConfig:
    rel_tol: float = 1e-10
    max_iter: int = 500
    preconditioner: str = "flat_helmholtz"

    def __post_init__(self):
        if self.rel_tol <= 0.0:
            raise ValueError("rel_tol must be positive")
        if self.preconditioner != "flat_helmholtz":
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")


def lapse_source(grid: Grid, gamma: np.ndarray, e: np.ndarray,
                 epsi: np.ndarray) -> np.ndarray:
    """Right-hand side s of the lapse problem (zero on exact backgrounds)."""
    u = np.einsum("DDC...->C...", gamma)
    div_u = frame_divergence(grid, e, u)
    q1 = np.einsum("CDE...,EDC...->...", gamma, gamma)
    q2 = np.einsum("C...,C...->...", u, u)
    q3 = np.einsum("C...,C...->...", epsi, epsi)
    return 2.0 * div_u - q1 - q2 - q3


def apply_lapse_operator(grid: Grid, gamma: np.ndarray, e: np.ndarray,
                         s: np.ndarray, t: float, nu: np.ndarray) -> np.ndarray:
    """A nu for the variable-coefficient slice operator."""
    w = frame_derivative(grid, e, nu)           # (D,) + grid.shape
    lap = frame_divergence(grid, e, w)
    u = np.einsum("DDC...->C...", gamma)
    drift = np.einsum("C...,C...->...", u, w)
    return lap - nu / t ** 2 - drift - s * nu


def _helmholtz_coefficients(grid: Grid, e: np.ndarray) -> np.ndarray:
    """Mean diagonal coefficients of the principal part along active axes."""
    coef = np.empty(len(grid.active))
    naxes = tuple(range(-len(grid.shape), 0))
    for pos, c in enumerate(grid.active):
        coef[pos] = np.einsum("I...,I...->...", e[:, c], e[:, c]).mean(axis=naxes)
    return coef


def _spectral_helmholtz_inverse(grid: Grid, coef: np.ndarray, t: float):
    """Inverse of sum_j coef_j d_j^2 - t^-2 as a Fourier multiplier."""
    mult = -np.ones(grid.shape) / t ** 2
    for pos, n in enumerate(grid.shape):
        k = np.fft.fftfreq(n) * n
        shape = [1] * len(grid.shape)
        shape[pos] = n
        mult = mult - coef[pos] * (k ** 2).reshape(shape)

    def apply(v: np.ndarray) -> np.ndarray:
        vh = np.fft.fftn(v)
        return np.fft.ifftn(vh / mult).real

    return apply


def solve_lapse(grid: Grid, gamma: np.ndarray, e: np.ndarray,
                epsi: np.ndarray, t: float,
                cfg: LapseSolveConfig = LapseSolveConfig(),
                x0: np.ndarray | None = None) -> np.ndarray:
    """Solve for the lapse n = 1 + nu; returns the n field."""
    if t <= 0.0:
        raise ValueError(f"t must be positive, got {t}")
    s = lapse_source(grid, gamma, e, epsi)
    nu = solve_lapse_operator(grid, gamma, e, s, t, s, cfg, x0=x0)
    n = 1.0 + nu
    if n.min() <= 0.0:
        worst = np.unravel_index(np.argmin(n), n.shape)
        raise LapsePositivityError(
            f"lapse reached {n.min():.3e} <= 0 at grid point {worst}")
    return n


def solve_lapse_operator(grid: Grid, gamma: np.ndarray, e: np.ndarray,
                         s: np.ndarray, t: float, rhs: np.ndarray,
                         cfg: LapseSolveConfig = LapseSolveConfig(),
                         x0: np.ndarray | None = None) -> np.ndarray:
    """Solve A nu = rhs for the operator defined by (gamma, e, s, t).

    Separated from solve_lapse so manufactured right-hand sides can be fed
    through the same Krylov path.
    """
    bnorm = np.linalg.norm(rhs.ravel())
    if bnorm == 0.0:
        return np.zeros(grid.shape)

    shape = grid.shape
    npts = grid.npoints

    def matvec(x):
        return apply_lapse_operator(grid, gamma, e, s, t, x.reshape(shape)).ravel()

    precond = _spectral_helmholtz_inverse(grid, _helmholtz_coefficients(grid, e), t)

    A = LinearOperator((npts, npts), matvec=matvec)
    M = LinearOperator((npts, npts), matvec=lambda x: precond(x.reshape(shape)).ravel())

    rtol = cfg.rel_tol
    x = None if x0 is None else x0.ravel()
    for _ in range(4):
        try:
            x, info = gmres(A, rhs.ravel(), x0=x, M=M, rtol=0.1 * rtol,
                            maxiter=cfg.max_iter, restart=40)
        except TypeError:  # older scipy spells the tolerance "tol"
            x, info = gmres(A, rhs.ravel(), x0=x, M=M, tol=0.1 * rtol,
                            maxiter=cfg.max_iter, restart=40)
        if info > 0:
            raise LapseConvergenceError(
                f"no convergence after {cfg.max_iter} iterations "
                f"(rel_tol {cfg.rel_tol:g}, t {t:g})")
        true_res = np.linalg.norm(matvec(x) - rhs.ravel())
        if true_res <= cfg.rel_tol * bnorm:
            return x.reshape(shape)
        rtol *= 0.1  # preconditioned residual underestimated the true one
    raise LapseConvergenceError(
        f"residual {true_res:.3e} above {cfg.rel_tol:g} * |rhs| after retries")
