"""Run configuration: TOML or JSON files with validated sections."""
from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10 only
    import tomli as tomllib


@dataclass
class PhysicsSection:
    sigma: float = 1.0
    gravity: float = 1.0
    beta_c: float = 0.1
    omega_s: float = float(np.pi / 12)
    omega_min: float = 1e-3
    omega_max: float = float(np.pi / 6)
    pinned: bool = False


@dataclass
class GeometrySection:
    slope_angle: float = float(np.pi / 12)
    blend_start: float = 2.5
    blend_end: float = 5.0
    far_depth: float = 1.0
    offset: float = 0.0
    wall: float = 8.0


@dataclass
class DiscretizationSection:
    n_markers: int = 41
    marker_grading: float = 2.0
    h_mesh: float = 0.2
    mesh_grading: float = 4.0
    order: int = 2
    min_angle: float = 20.0
    contact_mode: str = "angle"


@dataclass
class InitialSection:
    """``kind`` is ``"perturbed"`` (tilted contact angle) or ``"equilibrium"``.

    ``psi_kick`` adds ``psi_kick (x - c) exp(-(x - c)/decay)`` to the initial
    potential, a corner flow that forces the contact line.
    """

    kind: str = "perturbed"
    level: float = 0.0
    d_omega: float = 0.05
    decay: float = 0.5
    bump: float = 0.0
    bump_x: float = 2.0
    bump_width: float = 0.4
    psi_kick: float = 0.0


@dataclass
class TimeSection:
    t_end: float = 0.3
    dt: float | None = None
    cfl: float = 0.3
    corner_cfl: float = 0.25


@dataclass
class OutputSection:
    directory: str = "out"
    cadence: int = 1
    high_energy_every: int = 0
    mesh_dumps: bool = False


@dataclass
class AuditSection:
    which: list = field(default_factory=lambda: ["harmonic", "laplace_inverse", "dn",
                                                 "surface_laplacian", "curvature", "J",
                                                 "curvature_scaling"])
    h_mesh: float = 0.05
    delta: float = 0.1
    n_markers: int = 201
    surface_laplacian_form: str = "stated"


@dataclass
class BenchmarkSection:
    which: list = field(default_factory=lambda: ["elliptic-convergence", "wedge", "dn-strip",
                                                 "norms"])
    wedge_angles: list = field(default_factory=lambda: [float(np.pi / 8),
                                                        float(np.pi / 4 - 0.1),
                                                        float(np.pi / 3)])
    levels: int = 4
    h0: float = 0.1


@dataclass
class NormsSection:
    """Input for the ``norms`` command: a sample file and the norms to evaluate."""

    samples: str = ""
    s: list = field(default_factory=lambda: [0.5])
    tilde_half: bool = True
    period: float | None = None


@dataclass
class RunConfig:
    physics: PhysicsSection = field(default_factory=PhysicsSection)
    geometry: GeometrySection = field(default_factory=GeometrySection)
    discretization: DiscretizationSection = field(default_factory=DiscretizationSection)
    initial: InitialSection = field(default_factory=InitialSection)
    time: TimeSection = field(default_factory=TimeSection)
    output: OutputSection = field(default_factory=OutputSection)
    audit: AuditSection = field(default_factory=AuditSection)
    benchmark: BenchmarkSection = field(default_factory=BenchmarkSection)
    norms: NormsSection = field(default_factory=NormsSection)
    source: str = ""

    def as_dict(self) -> dict:
        d = asdict(self)
        d.pop("source")
        return d

    @property
    def hash(self) -> str:
        blob = json.dumps(self.as_dict(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def validate(self) -> "RunConfig":
        """Check the guards; building the physics object runs its own checks."""
        ph = self.physics
        if not ph.omega_s < np.pi / 6:
            raise ConfigError("omega_s must be below pi/6")
        self.build_physics()
        d = self.discretization
        if d.n_markers < 8:
            raise ConfigError("need at least 8 markers")
        if d.contact_mode not in ("angle", "kinematic"):
            raise ConfigError(f"unknown contact mode {d.contact_mode!r}")
        if self.initial.kind not in ("perturbed", "equilibrium"):
            raise ConfigError(f"unknown initial state {self.initial.kind!r}")
        if not self.time.t_end > 0:
            raise ConfigError("t_end must be positive")
        if self.time.dt is not None and not self.time.dt > 0:
            raise ConfigError("dt must be positive")
        if self.output.cadence < 1:
            raise ConfigError("output cadence must be at least 1")
        if not self.geometry.wall > self.geometry.blend_end:
            raise ConfigError("the wall must stand beyond the bottom blend")
        return self

    # builders --------------------------------------------------------
    def build_physics(self):
        from .dynamics import PhysicsParams

        return PhysicsParams(**asdict(self.physics))

    def build_bottom(self):
        from .geometry import BottomProfile

        g = self.geometry
        return BottomProfile(g.slope_angle, g.blend_start, g.blend_end, g.far_depth, g.offset)

    def build_simulator(self):
        from .dynamics import Simulator, marker_fractions
        from .meshing import MeshSpec

        d = self.discretization
        spec = MeshSpec(d.h_mesh, grading=d.mesh_grading, order=d.order, min_angle=d.min_angle)
        return Simulator(self.build_physics(), self.build_bottom(), spec,
                         marker_fractions(d.n_markers, d.marker_grading), self.geometry.wall,
                         cfl=self.time.cfl, contact_mode=d.contact_mode,
                         corner_cfl=self.time.corner_cfl)

    def initial_state(self, sim):
        from .dynamics import equilibrium_state, perturbed_state, with_psi

        ini = self.initial
        if ini.kind == "equilibrium":
            st = equilibrium_state(sim, ini.level)
        else:
            st = perturbed_state(sim, ini.level, ini.d_omega, ini.decay, ini.bump, ini.bump_x,
                                 ini.bump_width)
        if ini.psi_kick:
            r = st.x - st.c
            st = with_psi(st, st.psi + ini.psi_kick * r * np.exp(-r / ini.decay))
        return st


_SECTIONS = {"physics": PhysicsSection, "geometry": GeometrySection,
             "discretization": DiscretizationSection, "initial": InitialSection,
             "time": TimeSection, "output": OutputSection, "audit": AuditSection,
             "benchmark": BenchmarkSection, "norms": NormsSection}


def from_dict(data: dict, source: str = "") -> RunConfig:
    """Build and validate a configuration; unknown sections or keys are errors."""
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a table")
    unknown = set(data) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown sections: {sorted(unknown)}")
    parts = {}
    for name, cls in _SECTIONS.items():
        sec = data.get(name, {})
        if not isinstance(sec, dict):
            raise ConfigError(f"section [{name}] must be a table")
        try:
            parts[name] = cls(**sec)
        except TypeError as exc:
            raise ConfigError(f"section [{name}]: {exc}") from None
    return RunConfig(**parts, source=source).validate()


def load(path) -> RunConfig:
    """Read a ``.toml`` or ``.json`` configuration file.

    Raises
    ------
    ConfigError
        Missing or unreadable file, syntax error or failed validation.
    """
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"configuration file not found: {p}")
    text = p.read_text()
    try:
        if p.suffix.lower() == ".json":
            data = json.loads(text)
        else:
            data = tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse {p}: {exc}") from None
    return from_dict(data, str(p))
