"""The full set of dynamic fields on one CMC slice."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .background import KasnerData, background_fields
from .frames import duality_residual
from .grid import Grid


@dataclass
class ReducedState:
    """All evolved fields at one time t, plus the elliptically solved lapse.

    Array shapes (grid axes trailing):
      n      ()        lapse
      k      (D, D)    second fundamental form frame components, symmetric
      gamma  (D, D, D) connection coefficients, antisymmetric in last two
      e      (D, D)    frame components e_I^i
      omega  (D, D)    co-frame components omega_i^I, stored as [I, i]
      e0psi  ()        normal derivative of the scalar field
      epsi   (D,)      frame derivatives of the scalar field

    The scalar field itself is never stored; only its first derivatives
    enter the equations.
    """

    t: float
    n: np.ndarray
    k: np.ndarray
    gamma: np.ndarray
    e: np.ndarray
    omega: np.ndarray
    e0psi: np.ndarray
    epsi: np.ndarray

    def copy(self) -> "ReducedState":
        return ReducedState(t=self.t, n=self.n.copy(), k=self.k.copy(),
                            gamma=self.gamma.copy(), e=self.e.copy(),
                            omega=self.omega.copy(), e0psi=self.e0psi.copy(),
                            epsi=self.epsi.copy())

    def finite(self) -> bool:
        return all(np.isfinite(f).all() for f in
                   (self.n, self.k, self.gamma, self.e, self.omega,
                    self.e0psi, self.epsi))


FIELD_SPECS = (  # snapshot order: (name, number of index components as D-powers)
    ("n", 0), ("k", 2), ("gamma", 3), ("e", 2), ("omega", 2),
    ("e0psi", 0), ("epsi", 1),
)


def background_state(grid: Grid, data: KasnerData, t: float) -> ReducedState:
    """Exact Kasner fields broadcast onto the grid."""
    bf = background_fields(data, t)
    D = grid.dim
    ones = np.ones(grid.shape)

    def bc(arr):
        return arr.reshape(arr.shape + (1,) * len(grid.shape)) * ones

    return ReducedState(
        t=float(t),
        n=ones.copy(),
        k=bc(bf.k),
        gamma=np.zeros((D, D, D) + grid.shape),
        e=bc(bf.e),
        omega=bc(bf.omega),
        e0psi=bf.e0psi * ones,
        epsi=np.zeros((D,) + grid.shape),
    )


def algebraic_residuals(grid: Grid, state: ReducedState) -> dict:
    """Index-symmetry and gauge monitors; all should stay near zero."""
    k, gamma = state.k, state.gamma
    tr = np.einsum("CC...->...", k)
    perm = (0, 2, 1) + tuple(range(3, gamma.ndim))
    return {
        "k_symmetry": grid.sup(k - k.transpose((1, 0) + tuple(range(2, k.ndim)))),
        "gamma_antisymmetry": grid.sup(gamma + gamma.transpose(perm)),
        "duality": duality_residual(state.e, state.omega),
        "cmc_trace": grid.sup(state.t * tr + 1.0),
    }


def symmetrize_k(k: np.ndarray) -> np.ndarray:
    return 0.5 * (k + k.transpose((1, 0) + tuple(range(2, k.ndim))))


def antisymmetrize_gamma(gamma: np.ndarray) -> np.ndarray:
    perm = (0, 2, 1) + tuple(range(3, gamma.ndim))
    return 0.5 * (gamma - gamma.transpose(perm))


def perturb(state: ReducedState, **deltas) -> ReducedState:
    """Return a copy with the named fields incremented (testing helper)."""
    out = state.copy()
    for name, d in deltas.items():
        setattr(out, name, getattr(out, name) + d)
    return out
