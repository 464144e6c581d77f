"""Run configuration: flat ``key = value`` files, defaults, validation, manifest echo."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError

CASES = ("channel", "aneurysm", "duct")
SOLVERS = ("as", "fs", "direct")
PAIRING = {"as": "j1", "fs": "j2"}


@dataclass
class RunConfig:
    # geometry
    case: str = "channel"
    length: float = 10e-3
    lumen: float = 2e-3
    wall: float = 0.25e-3
    nx: int = 8
    ny_fluid: int = 2
    ny_wall: int = 1
    bulge_radius: float = 2e-3
    bulge_center: float = 5e-3
    # materials
    rho_s: float = 1120.0
    rho_f: float = 1035.0
    mu: float = 3.5e-3
    E: float = 1.0e6
    nu: float = 0.5
    # boundary data
    pressure_amplitude: float = 15.0
    inflow_umax: float = 0.05
    inflow_pulse: float = 0.75
    mesh_stiffness: str = "inverse_volume"
    stiffness_a: float = 1.0
    stiffness_c: float = 1.0e4
    # time
    t_step: int = 32
    periods: float = 1.0
    n_steps: int = 0          # 0: t_step * periods
    # discretization
    supg: bool = True
    supg_weight: str = "unit"
    # solvers
    solvers: str = "as"       # comma separated subset of as, fs, direct
    ordering: str = "auto"
    levels: int = 3
    cycle: str = "v"
    pre: int = 1
    post: int = 1
    omega: float = 0.7
    elems_per_block: int = 4
    overlap: int = 1
    gmres_restart: int = 60
    gmres_max_iters: int = 500
    gmres_rtol: float = 1e-8
    gmres_atol: float = 1e-12   # 1e-2 * newton_atol; late Newton solves have near-roundoff rhs
    newton_rtol: float = 1e-8
    newton_atol: float = 1e-10
    newton_max: int = 15
    # output
    out: str = "out"
    write_vtk: bool = False
    write_mtx: bool = False
    seed: int = 0

    @property
    def dt(self):
        return 1.0 / self.t_step

    @property
    def steps(self):
        return self.n_steps if self.n_steps > 0 else int(round(self.t_step * self.periods))

    @property
    def solver_list(self):
        return [s.strip() for s in self.solvers.split(",") if s.strip()]

    def ordering_for(self, solver):
        if solver == "direct":
            return "j"
        return PAIRING[solver] if self.ordering == "auto" else self.ordering

    def validate(self):
        if self.case not in CASES:
            raise ConfigError(f"case must be one of {CASES}, got {self.case!r}")
        if self.t_step <= 0:
            raise ConfigError("t_step must be positive (dt = 1/t_step)")
        if self.periods <= 0 and self.n_steps <= 0:
            raise ConfigError("periods must be positive (or set n_steps)")
        if self.n_steps < 0:
            raise ConfigError("n_steps must be >= 0")
        sl = self.solver_list
        if not sl:
            raise ConfigError("at least one solver is required")
        for s in sl:
            if s not in SOLVERS:
                raise ConfigError(f"unknown solver {s!r}; choose from {SOLVERS}")
        if self.ordering not in ("auto", "j", "j1", "j2"):
            raise ConfigError(f"ordering must be auto, j, j1 or j2, got {self.ordering!r}")
        for s in sl:
            if s in PAIRING and self.ordering != "auto" and self.ordering != PAIRING[s]:
                raise ConfigError(f"smoother {s} requires ordering={PAIRING[s]} "
                                  f"(got ordering={self.ordering}); use ordering=auto")
        if self.levels < 1:
            raise ConfigError("levels must be >= 1")
        if self.cycle not in ("v", "f", "w"):
            raise ConfigError("cycle must be v, f or w")
        if self.pre < 0 or self.post < 0:
            raise ConfigError("pre/post sweeps must be >= 0")
        if not 0 <= self.omega < 2:
            raise ConfigError("omega must lie in [0, 2)")
        if self.elems_per_block < 1 or self.overlap < 0:
            raise ConfigError("elems_per_block must be >= 1 and overlap >= 0")
        if min(self.rho_s, self.rho_f, self.mu, self.E) <= 0 or not 0 < self.nu <= 0.5:
            raise ConfigError("material parameters must be positive with 0 < nu <= 0.5")
        if min(self.length, self.lumen, self.wall) <= 0 or self.wall >= self.lumen:
            raise ConfigError("geometry lengths must be positive with wall < lumen")
        if min(self.nx, self.ny_fluid, self.ny_wall) < 1:
            raise ConfigError("mesh counts must be >= 1")
        if self.mesh_stiffness not in ("inverse_volume", "distance"):
            raise ConfigError("mesh_stiffness must be inverse_volume or distance")
        if self.stiffness_a < 1 or self.stiffness_c < 1:
            raise ConfigError("stiffness_a and stiffness_c must be >= 1")
        if self.supg_weight not in ("unit", "density"):
            raise ConfigError("supg_weight must be unit or density")
        if min(self.gmres_restart, self.gmres_max_iters, self.newton_max) < 1:
            raise ConfigError("iteration limits must be >= 1")
        if min(self.gmres_rtol, self.gmres_atol, self.newton_rtol, self.newton_atol) <= 0:
            raise ConfigError("tolerances must be positive")
        return self


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _convert(name, typ, raw):
    raw = raw.strip()
    try:
        if typ in (bool, "bool"):
            low = raw.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(raw)
        if typ in (int, "int"):
            return int(raw)
        if typ in (float, "float"):
            return float(raw)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {raw!r} as {getattr(typ, '__name__', typ)}") from None
    return raw


_FIELDS = {f.name: f for f in fields(RunConfig)}


def parse_text(text, overrides=None) -> RunConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _convert(key, _FIELDS[key].type, raw)
    for key, val in (overrides or {}).items():
        if val is None:
            continue
        if key not in _FIELDS:
            raise ConfigError(f"unknown key {key!r}")
        values[key] = _convert(key, _FIELDS[key].type, str(val)) if isinstance(val, str) else val
    return RunConfig(**values).validate()


def parse_and_validate(path=None, overrides=None) -> RunConfig:
    text = Path(path).read_text() if path else ""
    return parse_text(text, overrides)


def manifest(cfg: RunConfig) -> str:
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        lines.append(f"{f.name} = {repr(v) if isinstance(v, float) else v}")
    return "\n".join(lines) + "\n"


def write_manifest(cfg: RunConfig, path):
    Path(path).write_text(manifest(cfg))


def replace(cfg: RunConfig, **kw) -> RunConfig:
    return dataclasses.replace(cfg, **kw).validate()
