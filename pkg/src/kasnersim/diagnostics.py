"""Constraint residuals, curvature scalars, solution norms, final exponents.

Everything here is a pure function of a state snapshot.  Residuals are
returned un-weighted; the record assembly applies the natural t-weights
(t^2 for the Hamiltonian constraint, t for the momentum constraint, t^4
for the Kretschmann scalar, t^q for the structure coefficients and
t^(2-sigma) for the spatial Ricci monitor).
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations_with_replacement

import numpy as np

from .background import KasnerData, StabilityParams, background_fields
from .frames import structure_coefficients
from .grid import Grid, frame_derivative, frame_divergence
from .state import ReducedState, algebraic_residuals, symmetrize_k


# -- constraints ------------------------------------------------------------

def hamiltonian_residual(grid: Grid, state: ReducedState) -> np.ndarray:
    """2 e_C gamma_DDC - gamma_CDE gamma_EDC - gamma_CCD gamma_EED
    - k_CD k_CD + t^-2 - (e_0 psi)^2 - (e_C psi)(e_C psi); zero on solutions."""
    gamma, k = state.gamma, state.k
    u = np.einsum("DDC...->C...", gamma)
    div_u = frame_divergence(grid, state.e, u)
    q1 = np.einsum("CDE...,EDC...->...", gamma, gamma, optimize=True)
    q2 = np.einsum("C...,C...->...", u, u)
    ksq = np.einsum("CD...,CD...->...", k, k)
    psi2 = state.e0psi ** 2 + np.einsum("C...,C...->...", state.epsi, state.epsi)
    return 2.0 * div_u - q1 - q2 - ksq + state.t ** -2 - psi2


def momentum_residual(grid: Grid, state: ReducedState) -> np.ndarray:
    """e_C k_CI - gamma_CCD k_ID - gamma_CID k_CD + (e_0 psi)(e_I psi)."""
    gamma, k = state.gamma, state.k
    fgk = frame_derivative(grid, state.e, k)           # e_C k_IJ
    div_k = np.einsum("CCI...->I...", fgk)             # e_C k_CI
    u = np.einsum("CCD...->D...", gamma)
    t1 = np.einsum("D...,ID...->I...", u, k)
    t2 = np.einsum("CID...,CD...->I...", gamma, k, optimize=True)
    return div_k - t1 - t2 + state.e0psi * state.epsi


# -- curvature ---------------------------------------------------------------

def spatial_ricci(grid: Grid, state: ReducedState) -> np.ndarray:
    """Frame Ricci of the slice metric, symmetrized:
    Ric_IJ = e_C gamma_IJC - e_I gamma_CJC - gamma_CID gamma_DJC
             - gamma_CCD gamma_IJD."""
    gamma = state.gamma
    dgamma = grid.grad(gamma)
    e_act = state.e[:, list(grid.active)]
    div_gamma = np.einsum("Cd...,dIJC...->IJ...", e_act, dgamma)
    tr_gamma = np.einsum("CJC...->J...", gamma)
    fg_tr = frame_derivative(grid, state.e, tr_gamma)
    gg1 = np.einsum("CID...,DJC...->IJ...", gamma, gamma, optimize=True)
    u = np.einsum("CCD...->D...", gamma)
    gg2 = np.einsum("D...,IJD...->IJ...", u, gamma)
    return symmetrize_k(div_gamma - fg_tr - gg1 - gg2)


def spatial_riemann(grid: Grid, state: ReducedState) -> np.ndarray:
    """Frame Riemann of the slice metric:
    R_AIBJ = e_A gamma_IJB - e_I gamma_AJB + gamma_IJC gamma_ACB
             - gamma_AJC gamma_ICB - gamma_AIC gamma_CJB + gamma_IAC gamma_CJB.
    Contracting A with B reproduces spatial_ricci."""
    gamma = state.gamma
    fgg = frame_derivative(grid, state.e, gamma)       # [A, I, J, B]
    perm = tuple(range(4, fgg.ndim))
    term_d = fgg - fgg.transpose((1, 0, 2, 3) + perm)
    q1 = np.einsum("IJC...,ACB...->AIBJ...", gamma, gamma, optimize=True)
    q2 = np.einsum("AJC...,ICB...->AIBJ...", gamma, gamma, optimize=True)
    q3 = np.einsum("AIC...,CJB...->AIBJ...", gamma, gamma, optimize=True)
    q4 = np.einsum("IAC...,CJB...->AIBJ...", gamma, gamma, optimize=True)
    # reorder the derivative block to [A, I, B, J]
    term_d = term_d.transpose((0, 1, 3, 2) + perm)
    return term_d + q1 - q2 - q3 + q4


def kretschmann(grid: Grid, state: ReducedState) -> np.ndarray:
    """Full spacetime curvature-squared scalar, assembled from three blocks:

        K = |Riem_spatial + k o k|^2 + 4 |R_0I0J|^2 - 4 |R_AI0J|^2,

    where the Gauss block combines the slice Riemann with the quadratic
    second-fundamental-form terms, the electric block R_0I0J is rewritten
    through the evolution system so it is algebraic in the state, and the
    mixed block comes from the Codazzi relation.
    """
    t = state.t
    k, gamma, epsi = state.k, state.gamma, state.epsi

    riem = spatial_riemann(grid, state)
    gauss = (riem
             + np.einsum("AB...,IJ...->AIBJ...", k, k)
             - np.einsum("AJ...,IB...->AIBJ...", k, k))

    ric = spatial_ricci(grid, state)
    electric = (-(1.0 / t) * k
                - np.einsum("IC...,CJ...->IJ...", k, k)
                + ric
                - np.einsum("I...,J...->IJ...", epsi, epsi))

    fgk = frame_derivative(grid, state.e, k)           # [A, I, J] = e_A k_IJ
    perm = tuple(range(3, fgk.ndim))
    codazzi = (fgk - fgk.transpose((1, 0, 2) + perm)
               - np.einsum("AIB...,BJ...->AIJ...", gamma, k, optimize=True)
               - np.einsum("AJB...,IB...->AIJ...", gamma, k, optimize=True)
               + np.einsum("IAB...,BJ...->AIJ...", gamma, k, optimize=True)
               + np.einsum("IJB...,AB...->AIJ...", gamma, k, optimize=True))

    g2 = np.einsum("AIBJ...,AIBJ...->...", gauss, gauss, optimize=True)
    e2 = np.einsum("IJ...,IJ...->...", electric, electric)
    c2 = np.einsum("AIJ...,AIJ...->...", codazzi, codazzi)
    return g2 + 4.0 * e2 - 4.0 * c2


def kretschmann_asymptotic(q: np.ndarray) -> np.ndarray:
    """Coefficient of t^-4 in the curvature blowup for exponent fields q:
    4 { sum_I (q_I^2 - q_I)^2 + sum_{I<J} q_I^2 q_J^2 }.

    q has shape (D,) + grid shape (or just (D,) for constants).
    """
    q = np.asarray(q, dtype=float)
    s1 = ((q * q - q) ** 2).sum(axis=0)
    q2 = q * q
    s2 = 0.5 * (q2.sum(axis=0) ** 2 - (q2 * q2).sum(axis=0))
    return 4.0 * (s1 + s2)


# -- solution norms ----------------------------------------------------------

def _multi_indices(d: int, order: int):
    """All spatial multi-indices of exactly the given order, as axis tuples."""
    return list(combinations_with_replacement(range(d), order))


def _derivative(grid: Grid, f: np.ndarray, idx) -> np.ndarray:
    for pos in idx:
        f = grid._partial_axis(f, pos)
    return f


def wm_inf(grid: Grid, f: np.ndarray, m: int) -> float:
    """Discrete W^{m,infty}: sum over |iota| <= m and all components of
    sup |d^iota f|."""
    d = len(grid.active)
    total = 0.0
    for order in range(m + 1):
        for idx in _multi_indices(d, order):
            total += grid.sup(_derivative(grid, f, idx))
    return total


def hdot_n(grid: Grid, f: np.ndarray, m: int) -> float:
    """Discrete homogeneous H^m: sqrt of the sum over |iota| = m and all
    components of the squared L^2 norms."""
    d = len(grid.active)
    total = 0.0
    for idx in _multi_indices(d, m):
        total += grid.l2(_derivative(grid, f, idx)) ** 2
    return float(np.sqrt(total))


def h_m(grid: Grid, f: np.ndarray, m: int) -> float:
    """Inhomogeneous H^m norm (all orders up to m)."""
    total = 0.0
    for order in range(m + 1):
        total += hdot_n(grid, f, order) ** 2
    return float(np.sqrt(total))


@dataclass(frozen=True)
class NormConfig:
    n_low: int = 1     # L-infinity derivative count at low order
    n_high: int = 2    # homogeneous Sobolev order of the high norms
    a_weight: float = 10.0  # strength of the extra t^A weight at high order


def solution_norms(grid: Grid, state: ReducedState, background: KasnerData,
                   stability: StabilityParams,
                   cfg: NormConfig = NormConfig()) -> dict:
    """The t-weighted sup and Sobolev norms of the deviation from Kasner."""
    t, q, sig = state.t, stability.q, stability.sigma
    n0, N, A = cfg.n_low, cfg.n_high, cfg.a_weight
    if N > min(grid.shape) // 3:
        import warnings
        warnings.warn("derivative count exceeds grid bandwidth", stacklevel=2)
    bf = background_fields(background, t)

    def bc(arr):
        return arr.reshape(arr.shape + (1,) * len(grid.shape))

    de = state.e - bc(bf.e)
    domega = state.omega - bc(bf.omega)
    dk = state.k - bc(bf.k)
    dn = state.n - 1.0
    fgn = frame_derivative(grid, state.e, state.n)
    de0 = state.e0psi - bf.e0psi

    L_eomega = max(t ** q * wm_inf(grid, de, n0),
                   t ** q * wm_inf(grid, domega, n0))
    L_n = max(t ** -sig * wm_inf(grid, dn, n0 + 1),
              t ** (q - sig) * wm_inf(grid, fgn, n0))
    L_gammak = max(t ** q * wm_inf(grid, state.gamma, n0),
                   t * wm_inf(grid, dk, n0 + 1))
    L_psi = max(t ** q * wm_inf(grid, state.epsi, n0),
                t * wm_inf(grid, de0, n0 + 1))

    H_eomega = max(t ** (A + q) * hdot_n(grid, state.e, N),
                   t ** (A + q) * hdot_n(grid, state.omega, N))
    H_n = max(t ** A * hdot_n(grid, state.n, N),
              t ** (A + 1) * hdot_n(grid, fgn, N))
    H_gammak = max(t ** (A + 1) * hdot_n(grid, state.gamma, N),
                   t ** (A + 1) * hdot_n(grid, state.k, N))
    H_psi = max(t ** (A + 1) * hdot_n(grid, state.epsi, N),
                t ** (A + 1) * hdot_n(grid, state.e0psi, N))

    L_total = L_eomega + L_gammak + L_psi
    H_total = H_eomega + H_gammak + H_psi
    return {
        "L_eomega": L_eomega, "L_n": L_n, "L_gammak": L_gammak, "L_psi": L_psi,
        "H_eomega": H_eomega, "H_n": H_n, "H_gammak": H_gammak, "H_psi": H_psi,
        "L_total": L_total, "H_total": H_total, "D_total": L_total + H_total,
    }


def initial_data_norm(grid: Grid, g: np.ndarray, kcoord: np.ndarray,
                      psi: np.ndarray, phi: np.ndarray,
                      background: KasnerData, n_high: int = 2) -> float:
    """Sobolev measure of how far coordinate initial data sit from Kasner:

        sum_ij |g_ij - delta_ij|_{H^(N+1)} + sum_ij |k_ij + q_i delta_ij|_{H^N}
        + |psi|_{H^(N+1)} + |phi - B|_{H^N},

    evaluated on the t=1 slice.
    """
    D = grid.dim
    q = background.exponents
    total = 0.0
    for i in range(D):
        for j in range(D):
            dg = g[i, j] - (1.0 if i == j else 0.0)
            total += h_m(grid, dg, n_high + 1)
            dk = kcoord[i, j] + (q[i] if i == j else 0.0)
            total += h_m(grid, dk, n_high)
    total += h_m(grid, psi, n_high + 1)
    total += h_m(grid, phi - background.scalar_coeff, n_high)
    return float(total)


# -- asymptotics -------------------------------------------------------------

@dataclass
class FinalState:
    """Richardson-extrapolated limits of t*k_IJ and t*(dpsi/dt)."""

    kappa_inf: np.ndarray     # (D, D) + grid
    B_inf: np.ndarray         # grid
    q_inf: np.ndarray         # (D,) + grid, sorted descending per point
    sum_residual: float       # sup |sum q_inf - 1|
    sumsq_residual: float     # sup |sum q_inf^2 - (1 - B_inf^2)|
    extrapolation_change: float  # shift of kappa between the last two estimates


def _richardson(t1, f1, t2, f2, sigma):
    """Limit of f(t) = f_inf + c t^sigma from samples at t1 > t2."""
    w1, w2 = t1 ** sigma, t2 ** sigma
    return (f2 * w1 - f1 * w2) / (w1 - w2)


def final_kasner_data(series, sigma: float, symmetry_tol: float = 1e-6) -> FinalState:
    """Estimate the limiting Kasner data from >= 3 states near the final time.

    `series` is a sequence of (t, t*k field, t*n*e0psi field) triples or
    ReducedState objects, ordered in decreasing t with roughly geometric
    spacing.  The last two samples give the t^sigma Richardson estimate;
    the previous pair gives a convergence diagnostic.
    """
    samples = []
    for item in series:
        if isinstance(item, ReducedState):
            samples.append((item.t, item.t * item.k,
                            item.t * item.n * item.e0psi))
        else:
            samples.append(item)
    if len(samples) < 3:
        raise ValueError("need at least 3 snapshots to extrapolate")
    samples.sort(key=lambda s: -s[0])

    (ta, ka, ba), (t1, k1, b1), (t2, k2, b2) = samples[-3], samples[-2], samples[-1]
    kappa = _richardson(t1, k1, t2, k2, sigma)
    B = _richardson(t1, b1, t2, b2, sigma)
    kappa_prev = _richardson(ta, ka, t1, k1, sigma)
    change = float(np.max(np.abs(kappa - kappa_prev)))

    asym = np.max(np.abs(kappa - np.swapaxes(kappa, 0, 1)))
    if asym > symmetry_tol:
        raise ValueError(f"extrapolated kappa not symmetric: {asym:.3e}")
    kappa = 0.5 * (kappa + np.swapaxes(kappa, 0, 1))

    km = np.moveaxis(-kappa, (0, 1), (-2, -1))
    q_asc = np.linalg.eigvalsh(km)                     # ascending
    q_inf = np.moveaxis(q_asc[..., ::-1], -1, 0)       # (D,) + grid, descending

    sum_res = float(np.max(np.abs(q_inf.sum(axis=0) - 1.0)))
    sumsq_res = float(np.max(np.abs((q_inf ** 2).sum(axis=0) - (1.0 - B ** 2))))
    return FinalState(kappa_inf=kappa, B_inf=B, q_inf=q_inf,
                      sum_residual=sum_res, sumsq_residual=sumsq_res,
                      extrapolation_change=change)


# -- per-time record ---------------------------------------------------------

@dataclass
class DiagnosticsRecord:
    t: float
    ham_sup: float            # sup of t^2 * Hamiltonian residual
    ham_l2: float
    mom_sup: float            # sup of t * momentum residual
    mom_l2: float
    structure_sup: float      # max_{I<J,B} sup t^q |S_IJB|
    ricci_sup: float          # sup t^(2-sigma) |Ric_IJ|
    kret_t4_sup: float
    kret_t4_mean: float
    cmc_residual: float       # sup |t tr k + 1|
    duality_residual: float
    n_minus_1_sup: float
    norms: dict

    CORE_COLUMNS = ("t", "ham_sup", "ham_l2", "mom_sup", "mom_l2",
                    "structure_sup", "ricci_sup", "kret_t4_sup",
                    "kret_t4_mean", "cmc_residual", "duality_residual",
                    "n_minus_1_sup")

    def columns(self):
        return list(self.CORE_COLUMNS) + sorted(self.norms)

    def values(self):
        vals = [getattr(self, c) for c in self.CORE_COLUMNS]
        return vals + [self.norms[k] for k in sorted(self.norms)]


def compute_record(grid: Grid, state: ReducedState, background: KasnerData,
                   stability: StabilityParams,
                   norm_cfg: NormConfig = NormConfig(),
                   with_curvature: bool = True) -> DiagnosticsRecord:
    t = state.t
    ham = hamiltonian_residual(grid, state)
    mom = momentum_residual(grid, state)
    S = structure_coefficients(state.gamma)
    ric = spatial_ricci(grid, state)
    alg = algebraic_residuals(grid, state)
    if with_curvature:
        kr = t ** 4 * kretschmann(grid, state)
        kret_sup, kret_mean = grid.sup(kr), float(
            kr.mean(axis=tuple(range(-len(grid.shape), 0))))
    else:
        kret_sup = kret_mean = np.nan
    return DiagnosticsRecord(
        t=t,
        ham_sup=t ** 2 * grid.sup(ham),
        ham_l2=t ** 2 * grid.l2(ham),
        mom_sup=t * grid.sup(mom),
        mom_l2=t * grid.l2(mom),
        structure_sup=t ** stability.q * grid.sup(S),
        ricci_sup=t ** (2.0 - stability.sigma) * grid.sup(ric),
        kret_t4_sup=kret_sup,
        kret_t4_mean=kret_mean,
        cmc_residual=alg["cmc_trace"],
        duality_residual=alg["duality"],
        n_minus_1_sup=grid.sup(state.n - 1.0),
        norms=solution_norms(grid, state, background, stability, norm_cfg),
    )
