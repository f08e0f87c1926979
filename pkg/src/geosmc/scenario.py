"""
Simulation scenarios: INI parsing, built-in experiments and the run driver.

A scenario file has the sections ``[system]``, ``[gains]``, ``[initial]``,
``[desired]``, ``[integrator]`` and ``[output]``; all values are SI.  See
``BUILTINS`` for complete examples.
"""

from __future__ import annotations

import configparser
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import desired as des
from .dynamics import (ReducedState, SpacecraftParams, UnicycleParams,
                       spacecraft_system, state_no_slip_residual,
                       unicycle_system)
from .errors import ConfigError
from .integrate import IntegratorConfig, simulate
from .kinematic import KinematicControllerSE2, KinematicControllerSO3
from .lie import PoseSE2, Rotation3, so3_exp
from .sliding import SlidingGains, SlidingModeLaw

SECTIONS = ("system", "gains", "initial", "desired", "integrator", "output")

BUILTINS = {
    "unicycle-lemniscate": """
[system]
type = unicycle
mu = 3.0
J_R = 0.025
J_sigma = 6e-5
rho = 0.05
d = 0.165

[gains]
lambda = 1.5
k_s = 2.2
k_b = 10
k1 = 0.01
k2 = 0.1

[initial]
x = -1.0
y = -1.0
theta = -0.7853981633974483
sigma = 0, 0
sigma_dot = 0, 0

[desired]
type = lemniscate
ax = 0.8
wx = 0.1
ay = 0.6
wy = 0.2

[integrator]
h = 1e-3
method = rk4_cg
t_end = 60
log_stride = 1

[output]
csv = unicycle-lemniscate.csv
""",
    "spacecraft-rest-to-rest": """
[system]
type = spacecraft
J = 1.0, 0.02, -0.01, 0.02, 1.2, 0.03, -0.01, 0.03, 0.8
J_phi = 0.1, 0.1, 0.1

[gains]
lambda = 1.0
k_s = 2.0

[initial]
rotvec = 0, 0, 2.0
phi = 0, 0, 0
phi_dot = 0, 0, 0
p = 0, 0, 0

[desired]
type = static

[integrator]
h = 1e-3
method = rk4_cg
t_end = 30
log_stride = 10

[output]
csv = spacecraft-rest-to-rest.csv
""",
    "spacecraft-tracking": """
[system]
type = spacecraft
J = 1.0, 0.02, -0.01, 0.02, 1.2, 0.03, -0.01, 0.03, 0.8
J_phi = 0.1, 0.1, 0.1

[gains]
lambda = 1.0
k_s = 2.0

[initial]
rotvec = 0.8, -0.5, 1.2
phi = 0, 0, 0
phi_dot = 0, 0, 0
p = 0, 0, 0

[desired]
type = attitude_sinusoid
amplitudes = 0.6, 0.4, 0.3
freqs = 0.3, 0.5, 0.2

[integrator]
h = 1e-3
method = rk4_cg
t_end = 30
log_stride = 10

[output]
csv = spacecraft-tracking.csv
""",
}


# --------------------------------------------------------------------------- #
# Parsing helpers
# --------------------------------------------------------------------------- #

def _floats(text: str, n: Optional[int] = None, what: str = "value") -> np.ndarray:
    try:
        vals = np.array([float(v) for v in text.replace(";", ",").split(",") if v.strip()])
    except ValueError:
        raise ConfigError(f"{what}: cannot parse '{text}' as numbers") from None
    if n is not None and len(vals) != n:
        raise ConfigError(f"{what}: expected {n} numbers, got {len(vals)}")
    if not np.all(np.isfinite(vals)):
        raise ConfigError(f"{what}: non-finite entry")
    return vals


def _get_float(sec, key, default=None, positive=False):
    if key not in sec:
        if default is None:
            raise ConfigError(f"[{sec.name}] missing '{key}'")
        return float(default)
    try:
        v = float(sec[key])
    except ValueError:
        raise ConfigError(f"[{sec.name}] {key} = '{sec[key]}' is not a number") from None
    if not math.isfinite(v):
        raise ConfigError(f"[{sec.name}] {key} must be finite")
    if positive and not v > 0:
        raise ConfigError(f"[{sec.name}] {key} must be positive, got {v}")
    return v


# --------------------------------------------------------------------------- #
# Scenario
# --------------------------------------------------------------------------- #

@dataclass
class SimScenario:
    """Parsed, validated experiment description."""

    name: str
    system_type: str
    params: object
    gains: SlidingGains
    kin: dict
    coupling: bool
    initial: dict
    desired_spec: dict
    integrator: IntegratorConfig
    output: dict = field(default_factory=dict)
    source: str = ""
    base_dir: Path = field(default_factory=Path.cwd)

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(canonical_text(self.source).encode()).hexdigest()

    # --- builders --------------------------------------------------------- #
    def build_system(self):
        if self.system_type == "unicycle":
            return unicycle_system(self.params)
        return spacecraft_system(self.params)

    def build_kinematic(self):
        if self.system_type == "unicycle":
            return KinematicControllerSE2(**self.kin)
        return KinematicControllerSO3()

    def build_desired(self):
        spec = dict(self.desired_spec)
        kind = spec.pop("type")
        try:
            if kind == "lemniscate":
                return des.lemniscate(**{k: float(v) for k, v in spec.items()})
            if kind == "circle":
                return des.circle(**{k: float(v) for k, v in spec.items()})
            if kind == "line":
                return des.line(**{k: float(v) for k, v in spec.items()})
            if kind == "table":
                path = Path(spec["file"])
                if not path.is_absolute():
                    path = self.base_dir / path
                data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
                return des.tabulated_path(data[:, 0], data[:, 1], data[:, 2])
            if kind == "static":
                if self.system_type == "unicycle":
                    return des.static_target(PoseSE2(float(spec.get("x", 0)), float(spec.get("y", 0)),
                                                     float(spec.get("theta", 0))))
                rv = _floats(spec.get("rotvec", "0,0,0"), 3, "[desired] rotvec")
                return des.static_target(so3_exp(rv))
            if kind == "attitude_sinusoid":
                kw = {}
                if "amplitudes" in spec:
                    kw["amplitudes"] = tuple(_floats(spec["amplitudes"], 3, "[desired] amplitudes"))
                if "freqs" in spec:
                    kw["freqs"] = tuple(_floats(spec["freqs"], 3, "[desired] freqs"))
                return des.attitude_sinusoid(**kw)
        except (TypeError, KeyError, ValueError, OSError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"[desired] {kind}: {exc}") from exc
        raise ConfigError(f"[desired] unknown type '{kind}'")

    def initial_state(self) -> ReducedState:
        ic = self.initial
        if self.system_type == "unicycle":
            return ReducedState(PoseSE2(ic["x"], ic["y"], ic["theta"]),
                                np.array(ic["sigma"]), np.array(ic["sigma_dot"]))
        return ReducedState(ic["R"], np.array(ic["phi"]), np.array(ic["phi_dot"]),
                            np.array(ic["p"]))

    def build_law(self, system=None, desired=None, closed_form: bool = True) -> SlidingModeLaw:
        system = system or self.build_system()
        desired = desired if desired is not None else self.build_desired()
        return SlidingModeLaw(system, self.build_kinematic(), self.gains, desired,
                              closed_form=closed_form, coupling=self.coupling)


def canonical_text(text: str) -> str:
    """Normalized INI text: sections and keys sorted, whitespace stripped."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";",))
    cp.optionxform = str
    cp.read_string(text)
    lines = []
    for s in sorted(cp.sections()):
        lines.append(f"[{s}]")
        for k in sorted(cp[s]):
            lines.append(f"{k}={cp[s][k].strip()}")
    return "\n".join(lines) + "\n"


def parse_scenario(text: str, name: str = "scenario", base_dir=None) -> SimScenario:
    """Parse and validate scenario INI text.

    Raises:
        ConfigError: on any missing, malformed or out-of-range entry.
    """
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";",))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse scenario: {exc}") from None
    for s in cp.sections():
        if s not in SECTIONS:
            raise ConfigError(f"unknown section [{s}]")
    for s in ("system", "gains", "initial", "integrator"):
        if s not in cp:
            raise ConfigError(f"missing section [{s}]")

    sysec = cp["system"]
    stype = sysec.get("type", "").strip()
    if stype not in ("unicycle", "spacecraft"):
        raise ConfigError(f"[system] type must be 'unicycle' or 'spacecraft', got '{stype}'")

    try:
        if stype == "unicycle":
            params = UnicycleParams(**{k: _get_float(sysec, k, getattr(UnicycleParams, k), True)
                                       for k in ("mu", "J_R", "J_sigma", "rho", "d")})
        else:
            J = _floats(sysec["J"], None, "[system] J") if "J" in sysec else None
            if J is not None:
                J = np.diag(J) if len(J) == 3 else J.reshape(3, 3) if len(J) == 9 else None
                if J is None:
                    raise ConfigError("[system] J needs 3 (diagonal) or 9 numbers")
            Jp = _floats(sysec["J_phi"], 3, "[system] J_phi") if "J_phi" in sysec else None
            kw = {}
            if J is not None:
                kw["J"] = J
            if Jp is not None:
                kw["J_phi"] = np.diag(Jp)
            params = SpacecraftParams(**kw)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"[system] {exc}") from None

    g = cp["gains"]
    lam = _get_float(g, "lambda", positive=True)
    k_s = _get_float(g, "k_s", positive=True)
    gains = SlidingGains(lam, k_s)
    coupling = g.getboolean("coupling", fallback=True)
    kin = {}
    if stype == "unicycle":
        kin = dict(k_b=_get_float(g, "k_b", 10.0, True), k1=_get_float(g, "k1", 0.01, True),
                   k2=_get_float(g, "k2", 0.1, True))
        if kin["k_b"] <= 2.0:
            raise ConfigError(f"[gains] k_b = {kin['k_b']} must exceed 2")

    ic = cp["initial"]
    if stype == "unicycle":
        initial = dict(x=_get_float(ic, "x", 0.0), y=_get_float(ic, "y", 0.0),
                       theta=_get_float(ic, "theta", 0.0),
                       sigma=_floats(ic.get("sigma", "0,0"), 2, "[initial] sigma"),
                       sigma_dot=_floats(ic.get("sigma_dot", "0,0"), 2, "[initial] sigma_dot"))
    else:
        if "R" in ic:
            try:
                R = Rotation3(_floats(ic["R"], 9, "[initial] R").reshape(3, 3))
            except ValueError as exc:
                raise ConfigError(f"[initial] R: {exc}") from None
        else:
            R = so3_exp(_floats(ic.get("rotvec", "0,0,0"), 3, "[initial] rotvec"))
        initial = dict(R=R, phi=_floats(ic.get("phi", "0,0,0"), 3, "[initial] phi"),
                       phi_dot=_floats(ic.get("phi_dot", "0,0,0"), 3, "[initial] phi_dot"),
                       p=_floats(ic.get("p", "0,0,0"), 3, "[initial] p"))

    desired_spec = dict(cp["desired"]) if "desired" in cp else {"type": "static"}
    desired_spec.setdefault("type", "static")

    it = cp["integrator"]
    try:
        integ = IntegratorConfig(h=_get_float(it, "h", 1e-3), method=it.get("method", "rk4_cg").strip(),
                                 t_end=_get_float(it, "t_end"),
                                 log_stride=int(it.get("log_stride", "1")))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"[integrator] {exc}") from None

    output = dict(cp["output"]) if "output" in cp else {}
    scn = SimScenario(name, stype, params, gains, kin, coupling, initial, desired_spec, integ,
                      output, text, Path(base_dir) if base_dir else Path.cwd())
    scn.build_desired()  # validate the reference now rather than mid-run
    return scn


def load_scenario(ref: str) -> SimScenario:
    """Load a built-in scenario by name or an INI file by path."""
    if ref in BUILTINS:
        return parse_scenario(BUILTINS[ref], name=ref)
    path = Path(ref)
    if not path.exists():
        raise ConfigError(f"'{ref}' is neither a built-in scenario ({', '.join(BUILTINS)}) "
                          f"nor an existing file")
    return parse_scenario(path.read_text(), name=path.stem, base_dir=path.parent)


# --------------------------------------------------------------------------- #
# Running
# --------------------------------------------------------------------------- #

@dataclass
class TrajectorySample:
    t: float
    pose: tuple
    desired_pose: tuple
    err_frobenius: float
    err_xi: float
    sliding_norm: float
    tau: tuple
    lyapunov_W: float
    morse_V: float
    constraint_residual: float


def _pose_tuple(g) -> tuple:
    if isinstance(g, PoseSE2):
        return (g.x, g.y, g.theta)
    return tuple(float(v) for v in g.m.ravel())


def make_sampler(law: SlidingModeLaw):
    """Per-step recorder for :func:`geosmc.integrate.simulate`."""
    sys = law.sys
    unicycle = sys.name == "unicycle"

    def sample(t, state):
        ev = law.evaluate(t, state)
        g_d = law.desired.g_d(t) if law.desired is not None else sys.group.identity()
        if unicycle:
            cres = float(np.max(np.abs(state_no_slip_residual(sys, state))))
        else:
            m = state.g.m
            cres = float(np.linalg.norm(m.T @ m - np.eye(3)))
        rec = TrajectorySample(
            t, _pose_tuple(state.g), _pose_tuple(g_d), ev.g_e.distance_frobenius(),
            float(np.linalg.norm(ev.xi_e)), float(np.linalg.norm(ev.sigma)),
            tuple(float(v) for v in ev.tau), float(ev.W), float(ev.V), cres)
        return rec, law.rate_from(state, ev)

    return sample


@dataclass
class RunResult:
    samples: list
    final_state: ReducedState
    scenario: SimScenario


def run_scenario(scn: SimScenario, closed_form: bool = True,
                 initial: Optional[ReducedState] = None) -> RunResult:
    """Integrate a scenario and record a sample every ``log_stride`` steps.

    Raises:
        AbortNearCriticalSet: if the tracking error approaches the excluded set.
    """
    law = scn.build_law(closed_form=closed_form)
    state0 = initial if initial is not None else scn.initial_state()
    samples, final = simulate(law.rhs, state0, scn.integrator, sample=make_sampler(law),
                              margin=law.margin)
    return RunResult(samples, final, scn)
