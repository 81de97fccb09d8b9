"""Right-hand sides of the reduced evolution system and the time stepper.

The system is marched in logarithmic time tau = -ln t (so d_tau = -t d_t),
which turns every 1/t coefficient into an O(1) one and reaches the
singularity at uniform cost per e-fold.  A classical four-stage
Runge-Kutta step is used, with the elliptic lapse re-solved at every
stage.  After each full step the exact index symmetries (k symmetric,
gamma antisymmetric in its last two slots) are re-imposed by projection;
the CMC trace is evolved, not reset, so its drift stays visible as an
error monitor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .background import KasnerData
from .grid import Grid, frame_derivative, frame_divergence
from .lapse import LapseSolveConfig, solve_lapse
from .state import ReducedState, antisymmetrize_gamma, symmetrize_k
from .frames import structure_coefficients


class EvolutionAbort(RuntimeError):
    """Evolution stopped early; carries the last usable state."""

    def __init__(self, reason: str, last_state: ReducedState):
        self.reason = reason
        self.last_state = last_state
        super().__init__(reason)


@dataclass(frozen=True)
class EvolveConfig:
    tau_step: float
    t_final: float
    cfl_safety: float = 0.8
    adaptive: bool = True
    dealias: bool = True
    snapshot_every: int = 10
    deterministic: bool = True

    def __post_init__(self):
        if not (0.0 < self.t_final < 1.0):
            raise ValueError(f"t_final must lie in (0,1), got {self.t_final}")
        if self.tau_step <= 0.0:
            raise ValueError("tau_step must be positive")
        if not (0.0 < self.cfl_safety <= 1.0):
            raise ValueError("cfl_safety must lie in (0,1]")


@dataclass
class RhsFields:
    """d/dt of every evolved field (the lapse is not evolved)."""

    k: np.ndarray
    gamma: np.ndarray
    e: np.ndarray
    omega: np.ndarray
    e0psi: np.ndarray
    epsi: np.ndarray


def assemble_rhs(grid: Grid, state: ReducedState, dealias: bool = False) -> RhsFields:
    """Assemble n * (e_0 derivative) of every field, i.e. the d/dt system."""
    t = state.t
    n, k, gamma, e, omega = state.n, state.k, state.gamma, state.e, state.omega
    e0psi, epsi = state.e0psi, state.epsi

    fgn = frame_derivative(grid, e, n)                 # e_I n
    second_n = frame_derivative(grid, e, fgn)          # e_I e_J n
    fgk = frame_derivative(grid, e, k)                 # e_C k_IJ
    dgamma = grid.grad(gamma)                          # d_c gamma_IJB
    e_act = e[:, list(grid.active)]
    div_gamma = np.einsum("Cd...,dIJC...->IJ...", e_act, dgamma)   # e_C gamma_IJC
    tr_gamma = np.einsum("CJC...->J...", gamma)        # gamma_CJC
    fg_trgamma = frame_derivative(grid, e, tr_gamma)   # e_I gamma_CJC
    u = np.einsum("DDC...->C...", gamma)               # gamma_DDC

    # second fundamental form
    gg1 = np.einsum("DIC...,CJD...->IJ...", gamma, gamma, optimize=True)
    gg2 = np.einsum("C...,IJC...->IJ...", u, gamma)
    dk = (-second_n
          + n * (div_gamma - fg_trgamma)
          - (n / t) * k
          + np.einsum("IJC...,C...->IJ...", gamma, fgn)
          - n * (gg1 + gg2)
          - n * np.einsum("I...,J...->IJ...", epsi, epsi))
    dk = symmetrize_k(dk)

    # connection coefficients
    gperm = tuple(range(3, gamma.ndim))
    T1 = fgk.transpose((2, 0, 1) + gperm)              # e_B k_IJ
    T2 = fgk.transpose((1, 2, 0) + gperm)              # e_J k_BI
    P1 = np.einsum("IC...,BJC...->IJB...", k, gamma, optimize=True)
    P2 = np.einsum("CJ...,BIC...->IJB...", k, gamma, optimize=True)
    P3 = np.einsum("IC...,JBC...->IJB...", k, gamma, optimize=True)
    P4 = np.einsum("BC...,JIC...->IJB...", k, gamma, optimize=True)
    P5 = np.einsum("IC...,CJB...->IJB...", k, gamma, optimize=True)
    L1 = np.einsum("B...,IJ...->IJB...", fgn, k)
    L2 = np.einsum("J...,BI...->IJB...", fgn, k)
    dgam = n * (T1 - T2 - P1 - P2 + P3 + P4 + P5) + L1 - L2

    # frame and co-frame transport
    de = n * np.einsum("IC...,Ci...->Ii...", k, e)
    domega = -n * np.einsum("IC...,Ci...->Ii...", k, omega)

    # scalar field first-order system
    div_epsi = frame_divergence(grid, e, epsi)
    fg_e0psi = frame_derivative(grid, e, e0psi)
    de0psi = (n * (div_epsi - e0psi / t - np.einsum("C...,C...->...", u, epsi))
              + np.einsum("C...,C...->...", fgn, epsi))
    depsi = (n * fg_e0psi
             + n * np.einsum("IC...,C...->I...", k, epsi)
             + fgn * e0psi)

    out = RhsFields(k=dk, gamma=dgam, e=de, omega=domega,
                    e0psi=de0psi, epsi=depsi)
    if dealias:
        for name in ("k", "gamma", "e", "omega", "e0psi", "epsi"):
            setattr(out, name, grid.dealias(getattr(out, name)))
    return out


def rhs_k(grid: Grid, state: ReducedState) -> np.ndarray:
    return assemble_rhs(grid, state).k


def rhs_gamma(grid: Grid, state: ReducedState) -> np.ndarray:
    return assemble_rhs(grid, state).gamma


def rhs_frame(grid: Grid, state: ReducedState):
    r = assemble_rhs(grid, state)
    return r.e, r.omega


def rhs_psi(grid: Grid, state: ReducedState):
    r = assemble_rhs(grid, state)
    return r.e0psi, r.epsi


@dataclass
class StructureSplit:
    """d/dt of the structure coefficients, split into the diagonal part

        -(q_I + q_J - q_B)/t * S_IJB

    driven by the background exponents, plus everything else.  The
    remainder vanishes identically when n=1, k equals the background, and
    the frame is exactly the background frame.
    """

    S: np.ndarray
    coefficient: np.ndarray   # q_I + q_J - q_B, shape (D, D, D)
    diagonal: np.ndarray
    remainder: np.ndarray


def structure_rhs_diagonal(grid: Grid, state: ReducedState,
                           background: KasnerData) -> StructureSplit:
    dgam = assemble_rhs(grid, state).gamma
    Sdot = structure_coefficients(dgam)
    S = structure_coefficients(state.gamma)
    q = background.exponents
    coef = q[:, None, None] + q[None, :, None] - q[None, None, :]
    cfield = coef.reshape(coef.shape + (1,) * len(grid.shape))
    diagonal = -(cfield / state.t) * S
    return StructureSplit(S=S, coefficient=coef, diagonal=diagonal,
                          remainder=Sdot - diagonal)


def cfl_dtau(grid: Grid, state: ReducedState, cfg: EvolveConfig) -> float:
    """Frame components bound the coordinate characteristic speeds."""
    dt = np.inf
    for pos, c in enumerate(grid.active):
        vmax = np.max(np.abs(state.e[:, c]))
        if vmax > 0:
            dt = min(dt, grid.spacing[pos] / vmax)
    return cfg.cfl_safety * dt


def effective_dtau(grid: Grid, state: ReducedState, cfg: EvolveConfig) -> float:
    dtau = cfg.tau_step
    if cfg.adaptive:
        dtau = min(dtau, cfl_dtau(grid, state, cfg))
    return dtau


_FIELDS = ("k", "gamma", "e", "omega", "e0psi", "epsi")


def step(grid: Grid, state: ReducedState, cfg: EvolveConfig,
         lapse_cfg: LapseSolveConfig = LapseSolveConfig(),
         dtau: float | None = None) -> ReducedState:
    """One RK4 step in tau = -ln t; the lapse is re-solved at every stage.

    Assumes state.n is the solved lapse for the incoming fields (as
    guaranteed by previous steps or the initial-data builder).
    """
    if dtau is None:
        dtau = effective_dtau(grid, state, cfg)
    t0 = state.t
    y0 = {f: getattr(state, f) for f in _FIELDS}

    def tau_rhs(fields: dict, t: float, n: np.ndarray) -> dict:
        st = ReducedState(t=t, n=n, **fields)
        r = assemble_rhs(grid, st, dealias=cfg.dealias)
        return {f: -t * getattr(r, f) for f in _FIELDS}

    def advanced(coef: float, slope: dict) -> dict:
        return {f: y0[f] + coef * dtau * slope[f] for f in _FIELDS}

    def stage_lapse(fields: dict, t: float, warm: np.ndarray) -> np.ndarray:
        return solve_lapse(grid, fields["gamma"], fields["e"], fields["epsi"],
                           t, lapse_cfg, x0=warm - 1.0)

    t_half = t0 * np.exp(-0.5 * dtau)
    t_full = t0 * np.exp(-dtau)

    k1 = tau_rhs(y0, t0, state.n)
    y = advanced(0.5, k1)
    n2 = stage_lapse(y, t_half, state.n)
    k2 = tau_rhs(y, t_half, n2)
    y = advanced(0.5, k2)
    n3 = stage_lapse(y, t_half, n2)
    k3 = tau_rhs(y, t_half, n3)
    y = advanced(1.0, k3)
    n4 = stage_lapse(y, t_full, n3)
    k4 = tau_rhs(y, t_full, n4)

    new = {f: y0[f] + (dtau / 6.0) * (k1[f] + 2 * k2[f] + 2 * k3[f] + k4[f])
           for f in _FIELDS}
    new["k"] = symmetrize_k(new["k"])
    new["gamma"] = antisymmetrize_gamma(new["gamma"])

    out = ReducedState(t=t_full, n=n4, **new)
    if not out.finite():
        raise EvolutionAbort("non-finite field after step", last_state=state)
    out.n = solve_lapse(grid, out.gamma, out.e, out.epsi, t_full, lapse_cfg,
                        x0=n4 - 1.0)
    return out


def evolve(grid: Grid, state: ReducedState, cfg: EvolveConfig,
           lapse_cfg: LapseSolveConfig = LapseSolveConfig(),
           on_step=None) -> tuple[ReducedState, int]:
    """March to cfg.t_final; calls on_step(state, nstep) after every step."""
    nstep = 0
    while state.t > cfg.t_final * (1.0 + 1e-12):
        dtau = min(effective_dtau(grid, state, cfg),
                   np.log(state.t / cfg.t_final))
        state = step(grid, state, cfg, lapse_cfg, dtau=dtau)
        nstep += 1
        if on_step is not None:
            on_step(state, nstep)
    return state, nstep
