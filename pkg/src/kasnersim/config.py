"""Flat key=value run configuration.

The format is plain text, one `section.key=value` per line, `#` comments
and blank lines ignored; values keep their literal string form until a
typed getter is applied, so parse -> serialize -> parse is the identity.

Perturbation modes use the grammar

    perturb.<field>_modes = k1,k2:cos_amp:sin_amp; k1,k2:cos_amp:sin_amp

with one integer wavenumber per active grid dimension per term.  Field
names are g_11 .. g_DD, k_11 .. k_DD, psi, phi (and for the polarized
sector the allowed subset g_11, g_12, g_22, g_33, k_11, k_12, k_22, k_33).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .background import (KasnerData, StabilityParams, flrw,
                         search_subcritical_vacuum)
from .diagnostics import NormConfig
from .evolution import EvolveConfig
from .grid import Grid
from .lapse import LapseSolveConfig


class ConfigError(ValueError):
    pass


def parse_config(text: str) -> dict:
    cfg = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        cfg[key.strip()] = value.strip()
    return cfg


def load_config(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def serialize_config(cfg: dict) -> str:
    return "".join(f"{k}={v}\n" for k, v in cfg.items())


def _get(cfg, key, conv, default):
    if key not in cfg:
        if default is _REQUIRED:
            raise ConfigError(f"missing required config key {key!r}")
        return default
    try:
        return conv(cfg[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key!r}: {cfg[key]!r} ({exc})") from exc


_REQUIRED = object()


def get_float(cfg, key, default=_REQUIRED):
    return _get(cfg, key, float, default)


def get_int(cfg, key, default=_REQUIRED):
    return _get(cfg, key, int, default)


def get_bool(cfg, key, default=_REQUIRED):
    def conv(s):
        s = s.lower()
        if s in ("true", "1", "yes", "on"):
            return True
        if s in ("false", "0", "no", "off"):
            return False
        raise ValueError("not a boolean")
    return _get(cfg, key, conv, default)


def get_floats(cfg, key, default=_REQUIRED):
    return _get(cfg, key, lambda s: [float(x) for x in s.split(",")], default)


def get_ints(cfg, key, default=_REQUIRED):
    return _get(cfg, key, lambda s: [int(x) for x in s.split(",")], default)


def parse_modes(text: str, d_active: int):
    """Parse 'k1,k2:ac:as; ...' into [(kvec, cos_amp, sin_amp), ...]."""
    modes = []
    for term in text.split(";"):
        term = term.strip()
        if not term:
            continue
        parts = term.split(":")
        if len(parts) != 3:
            raise ConfigError(f"mode term {term!r}: expected kvec:cos:sin")
        kvec = tuple(int(x) for x in parts[0].split(","))
        if len(kvec) != d_active:
            raise ConfigError(
                f"mode term {term!r}: need {d_active} wavenumbers")
        modes.append((kvec, float(parts[1]), float(parts[2])))
    return modes


@dataclass
class RunSetup:
    grid: Grid
    background: KasnerData
    stability: StabilityParams
    evolve_cfg: EvolveConfig
    lapse_cfg: LapseSolveConfig
    norm_cfg: NormConfig
    sector: str                   # "general" | "polarized_u1"
    project: bool
    residual_threshold: float | None
    g_modes: dict = field(default_factory=dict)
    k_modes: dict = field(default_factory=dict)
    psi_modes: list = field(default_factory=list)
    phi_modes: list = field(default_factory=list)
    seed: int | None = None
    outdir: str = "run_out"
    raw: dict = field(default_factory=dict)


_U1_ALLOWED = {("g", 0, 0), ("g", 0, 1), ("g", 1, 1), ("g", 2, 2),
               ("k", 0, 0), ("k", 0, 1), ("k", 1, 1), ("k", 2, 2)}


def build_setup(cfg: dict) -> RunSetup:
    """Validate the raw config dictionary and construct all run objects."""
    try:
        sector = cfg.get("run.sector", "general")
        if get_bool(cfg, "u1.enabled", False):
            sector = "polarized_u1"
        if sector not in ("general", "polarized_u1"):
            raise ConfigError(f"unknown sector {sector!r}")

        dim = get_int(cfg, "grid.dim", 3)
        grid = Grid(dim=dim,
                    active_dims=get_ints(cfg, "grid.active_dims", [0, 1]),
                    sizes=get_ints(cfg, "grid.sizes", [32, 32]))

        seed = get_int(cfg, "kasner.search_seed", None) \
            if "kasner.search_seed" in cfg else get_int(cfg, "run.seed", 0)
        if "kasner.exponents" in cfg:
            q = np.array(get_floats(cfg, "kasner.exponents"))
            b = get_float(cfg, "kasner.scalar_coeff", 0.0)
            background = KasnerData(dim=dim, exponents=q, scalar_coeff=b)
        elif "kasner.search_dim" in cfg:
            sdim = get_int(cfg, "kasner.search_dim")
            if sdim != dim:
                raise ConfigError("kasner.search_dim must equal grid.dim")
            res = search_subcritical_vacuum(
                sdim, tol=get_float(cfg, "kasner.search_tol", 0.02),
                seed=seed, restarts=get_int(cfg, "kasner.search_restarts", 40))
            if not res.found:
                raise ConfigError(f"vacuum exponent search: {res.status}")
            background = res.data
        else:
            background = flrw(dim)

        mode = "polarized_u1" if sector == "polarized_u1" else "general"
        if "stability.q" in cfg or "stability.sigma" in cfg:
            stability = StabilityParams(q=get_float(cfg, "stability.q"),
                                        sigma=get_float(cfg, "stability.sigma"),
                                        mode=mode)
        else:
            stability = StabilityParams.choose(background, mode)

        evolve_cfg = EvolveConfig(
            tau_step=get_float(cfg, "evolve.tau_step", 0.01),
            t_final=get_float(cfg, "evolve.t_final", 0.01),
            cfl_safety=get_float(cfg, "evolve.cfl_safety", 0.8),
            adaptive=get_bool(cfg, "evolve.adaptive", True),
            dealias=get_bool(cfg, "evolve.dealias", True),
            snapshot_every=get_int(cfg, "evolve.snapshot_every", 10),
            deterministic=get_bool(cfg, "evolve.deterministic", True),
        )
        lapse_cfg = LapseSolveConfig(
            rel_tol=get_float(cfg, "lapse.rel_tol", 1e-10),
            max_iter=get_int(cfg, "lapse.max_iter", 500),
        )
        norm_cfg = NormConfig(
            n_low=get_int(cfg, "norms.n_low", 1),
            n_high=get_int(cfg, "norms.n_high", 2),
            a_weight=get_float(cfg, "norms.a_weight", 10.0),
        )

        g_modes, k_modes, psi_modes, phi_modes = {}, {}, [], []
        d_a = len(grid.active)
        for key, value in cfg.items():
            if not key.startswith("perturb.") or not key.endswith("_modes"):
                continue
            name = key[len("perturb."):-len("_modes")]
            if name == "psi":
                psi_modes = parse_modes(value, d_a)
            elif name == "phi":
                phi_modes = parse_modes(value, d_a)
            else:
                try:
                    kind, ij = name.split("_")
                    i, j = int(ij[0]) - 1, int(ij[1]) - 1
                except (ValueError, IndexError):
                    raise ConfigError(f"bad perturbation field {name!r}")
                if kind not in ("g", "k") or not (0 <= i < dim and 0 <= j < dim):
                    raise ConfigError(f"bad perturbation field {name!r}")
                target = g_modes if kind == "g" else k_modes
                target[(min(i, j), max(i, j))] = parse_modes(value, d_a)

        if sector == "polarized_u1":
            if dim != 3:
                raise ConfigError("polarized sector needs grid.dim = 3")
            if background.scalar_coeff != 0.0:
                raise ConfigError("polarized sector is vacuum: scalar_coeff = 0")
            if 2 in grid.active:
                raise ConfigError("polarized sector: x^3 must be inactive")
            for kind, src in (("g", g_modes), ("k", k_modes)):
                for (i, j) in src:
                    if (kind, i, j) not in _U1_ALLOWED:
                        raise ConfigError(
                            f"perturbation {kind}_{i+1}{j+1} breaks polarization")
            if psi_modes or phi_modes:
                raise ConfigError("polarized sector is vacuum: no scalar modes")

        threshold = get_float(cfg, "data.residual_threshold", None) \
            if "data.residual_threshold" in cfg else None
        return RunSetup(
            grid=grid, background=background, stability=stability,
            evolve_cfg=evolve_cfg, lapse_cfg=lapse_cfg, norm_cfg=norm_cfg,
            sector=sector,
            project=get_bool(cfg, "data.project_hamiltonian", False),
            residual_threshold=threshold,
            g_modes=g_modes, k_modes=k_modes,
            psi_modes=psi_modes, phi_modes=phi_modes,
            seed=seed,
            outdir=cfg.get("output.dir", "run_out"),
            raw=dict(cfg),
        )
    except (ValueError, TypeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def initial_state(setup: RunSetup):
    """Build the initial ReducedState on the t=1 slice for either sector."""
    from .initial_data import (mode_field, perturbed_kasner_data,
                               state_from_geometric_data)

    if setup.sector == "polarized_u1":
        from .u1 import build_polarized_data

        grid, q = setup.grid, setup.background.exponents
        base = {"g11": 1.0, "g12": 0.0, "g22": 1.0, "g33": 1.0,
                "k11": -q[0], "k12": 0.0, "k22": -q[1], "k33": -q[2]}
        profiles = {}
        for name, value in base.items():
            kind = name[0]
            ij = (int(name[1]) - 1, int(name[2]) - 1)
            modes = (setup.g_modes if kind == "g" else setup.k_modes).get(ij)
            f = np.full(grid.shape, value)
            if modes:
                f = f + mode_field(grid, modes)
            profiles[name] = f
        g, k = build_polarized_data(grid, profiles)
        psi = np.zeros(grid.shape)
        phi = np.zeros(grid.shape)
        return state_from_geometric_data(
            grid, setup.background, g, k, psi, phi, u1_frame=True,
            project=setup.project,
            residual_threshold=setup.residual_threshold,
            lapse_cfg=setup.lapse_cfg)

    g, k, psi, phi = perturbed_kasner_data(
        setup.grid, setup.background, g_modes=setup.g_modes,
        k_modes=setup.k_modes, psi_modes=setup.psi_modes,
        phi_modes=setup.phi_modes)
    return state_from_geometric_data(
        setup.grid, setup.background, g, k, psi, phi, u1_frame=False,
        project=setup.project,
        residual_threshold=setup.residual_threshold,
        lapse_cfg=setup.lapse_cfg)
