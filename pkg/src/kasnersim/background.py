"""Generalized Kasner backgrounds and their exponent algebra.

A generalized Kasner solution on (0,1] x T^D is the anisotropic power-law
cosmology

    g = -dt^2 + sum_I t^(2 q_I) dx^I dx^I,        psi = B log t,

parameterized by exponents q_1..q_D and a scalar-field coefficient B that
satisfy two algebraic constraints,

    sum_I q_I = 1,        sum_I q_I^2 = 1 - B^2.

The singularity at t=0 is dynamically stable under the sub-criticality
("stability") condition

    max_{I<J, B} (q_I + q_J - q_B) < 1,

which in vacuum (B=0) is achievable only for D >= 10.  This module stores
the exponent data, checks the constraints, measures the sub-criticality
margin, searches for sub-critical vacuum exponents, and evaluates the exact
background fields used throughout the rest of the package.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize


@dataclass(frozen=True)
class KasnerData:
    """Kasner exponents q_1..q_D plus the scalar-field coefficient B >= 0."""

    dim: int
    exponents: np.ndarray
    scalar_coeff: float = 0.0

    def __post_init__(self):
        q = np.asarray(self.exponents, dtype=float)
        if self.dim < 3:
            raise ValueError(f"need dim >= 3, got {self.dim}")
        if q.shape != (self.dim,):
            raise ValueError(
                f"exponent list has length {q.size}, expected dim={self.dim}")
        if self.scalar_coeff < 0.0:
            # psi -> -psi symmetry: the non-negative representative is stored
            raise ValueError("scalar_coeff must be >= 0 (flip the sign of psi)")
        object.__setattr__(self, "exponents", q)
        object.__setattr__(self, "scalar_coeff", float(self.scalar_coeff))


@dataclass(frozen=True)
class ConstraintReport:
    sum_residual: float
    sumsq_residual: float
    ok: bool


@dataclass(frozen=True)
class MarginReport:
    margin: float
    subcritical: bool
    witness: tuple  # (I, J, B), 0-based, attaining the margin


@dataclass(frozen=True)
class SearchResult:
    status: str  # "found" | "infeasible" | "budget_exhausted"
    data: KasnerData | None = None

    @property
    def found(self) -> bool:
        return self.status == "found"


@dataclass(frozen=True)
class StabilityParams:
    """Decay-rate parameters (q, sigma) entering the t-weighted diagnostics.

    Admissibility, depending on the sector:
      general:       2*sigma < 2*sigma + max(max_B |q_B|, margin) < q < 1 - 2*sigma
      polarized_u1:  2*sigma < 2*sigma + max_I |q_I|            < q < 1 - 2*sigma
    """

    q: float
    sigma: float
    mode: str = "general"  # "general" | "polarized_u1"

    def __post_init__(self):
        if not (0.0 < self.q < 1.0):
            raise ValueError(f"q must lie in (0,1), got {self.q}")
        if self.sigma <= 0.0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.mode not in ("general", "polarized_u1"):
            raise ValueError(f"unknown mode {self.mode!r}")

    def validate(self, data: KasnerData) -> bool:
        m = stability_max(data, self.mode)
        return 2 * self.sigma + m < self.q < 1.0 - 2 * self.sigma

    @classmethod
    def choose(cls, data: KasnerData, mode: str = "general") -> "StabilityParams":
        """Pick admissible (q, sigma) for the given exponents, or raise."""
        m = stability_max(data, mode)
        if m >= 1.0:
            raise ValueError(
                f"no admissible (q, sigma): stability max {m} >= 1 in mode {mode!r}")
        sigma = min(0.05, (1.0 - m) / 6.0)
        q = 0.5 * (1.0 + m)
        params = cls(q=q, sigma=sigma, mode=mode)
        assert params.validate(data)
        return params


def stability_max(data: KasnerData, mode: str = "general") -> float:
    """The quantity that must stay below the decay exponent q."""
    q = data.exponents
    if mode == "polarized_u1":
        return float(np.max(np.abs(q)))
    return max(float(np.max(np.abs(q))), subcriticality_margin(data).margin)


def validate_constraints(data: KasnerData, tol: float = 1e-12) -> ConstraintReport:
    """Residuals of sum q = 1 and sum q^2 = 1 - B^2."""
    q = data.exponents
    r1 = abs(float(q.sum()) - 1.0)
    r2 = abs(float((q * q).sum()) - (1.0 - data.scalar_coeff ** 2))
    return ConstraintReport(sum_residual=r1, sumsq_residual=r2,
                            ok=(r1 <= tol and r2 <= tol))


def subcriticality_margin(data: KasnerData) -> MarginReport:
    """max over I<J and all B of q_I + q_J - q_B, with a witness triple.

    Sub-critical means margin < 1.  The maximum is attained by the two
    largest exponents paired against the smallest one; the explicit scan
    below also fixes a deterministic witness.
    """
    q = data.exponents
    D = data.dim
    best = -np.inf
    witness = (0, 1, 0)
    for i in range(D):
        for j in range(i + 1, D):
            for b in range(D):
                val = q[i] + q[j] - q[b]
                if val > best:
                    best = val
                    witness = (i, j, b)
    return MarginReport(margin=float(best), subcritical=bool(best < 1.0),
                        witness=witness)


def _project_vacuum(x: np.ndarray) -> np.ndarray | None:
    """Project onto the vacuum constraint set {sum q = 1, sum q^2 = 1}.

    The set is the sphere of radius sqrt(1 - 1/D) around the center point
    (1/D, ..., 1/D) inside the hyperplane orthogonal to (1, ..., 1).
    """
    D = x.size
    v = x - x.mean()
    nv = np.linalg.norm(v)
    if nv < 1e-14:
        return None
    return 1.0 / D + np.sqrt(1.0 - 1.0 / D) * v / nv


def search_subcritical_vacuum(dim: int, tol: float = 0.02, seed: int = 0,
                              restarts: int = 40) -> SearchResult:
    """Look for vacuum (B=0) exponents with margin < 1 - tol.

    For dim <= 9 the constraints make the condition algebraically
    impossible, so the search is skipped and "infeasible" is reported.  For
    dim >= 10 the margin is minimized over the constraint sphere by random
    restarts of a smoothed (soft-max) objective followed by exact
    re-projection; the budget is `restarts` local solves.
    """
    if dim < 3:
        raise ValueError(f"need dim >= 3, got {dim}")
    if dim <= 9:
        return SearchResult(status="infeasible")

    rng = np.random.default_rng(seed)
    beta = 80.0

    def smoothed_margin(x):
        qv = _project_vacuum(x)
        if qv is None:
            return 1e6
        vals = []
        for i in range(dim):
            for j in range(i + 1, dim):
                vals.append(qv[i] + qv[j] - qv.min())
        vals = np.asarray(vals)
        m = vals.max()
        return m + np.log(np.exp(beta * (vals - m)).sum()) / beta

    best_q, best_margin = None, np.inf
    for _ in range(restarts):
        x0 = rng.standard_normal(dim)
        res = minimize(smoothed_margin, x0, method="Nelder-Mead",
                       options=dict(maxiter=3000, xatol=1e-10, fatol=1e-12))
        qv = _project_vacuum(res.x)
        if qv is None:
            continue
        data = KasnerData(dim=dim, exponents=qv, scalar_coeff=0.0)
        m = subcriticality_margin(data).margin
        if m < best_margin:
            best_margin, best_q = m, qv
        if best_margin < 1.0 - tol:
            return SearchResult(status="found",
                                data=KasnerData(dim=dim, exponents=best_q,
                                                scalar_coeff=0.0))
    return SearchResult(status="budget_exhausted")


@dataclass(frozen=True)
class BackgroundFields:
    """Exact background values at one time: diagonal matrices and scalars."""

    t: float
    n: float
    e: np.ndarray        # e_I^i = t^(-q_I) delta_I^i
    omega: np.ndarray    # omega_i^I = t^(q_I) delta_i^I
    k: np.ndarray        # k_IJ = -(q_I / t) delta_IJ
    gamma: np.ndarray    # identically zero
    e0psi: float         # B / t
    epsi: np.ndarray     # identically zero


def background_fields(data: KasnerData, t: float) -> BackgroundFields:
    """Evaluate the exact Kasner reduced variables at time t in (0, 1]."""
    if t <= 0.0:
        raise ValueError(f"t must be positive, got {t}")
    q = data.exponents
    D = data.dim
    return BackgroundFields(
        t=float(t),
        n=1.0,
        e=np.diag(t ** (-q)),
        omega=np.diag(t ** q),
        k=np.diag(-q / t),
        gamma=np.zeros((D, D, D)),
        e0psi=data.scalar_coeff / t,
        epsi=np.zeros(D),
    )


def flrw(dim: int = 3) -> KasnerData:
    """Isotropic exponents q_I = 1/D with the matching scalar coefficient."""
    q = np.full(dim, 1.0 / dim)
    b = np.sqrt(1.0 - 1.0 / dim)
    return KasnerData(dim=dim, exponents=q, scalar_coeff=b)
