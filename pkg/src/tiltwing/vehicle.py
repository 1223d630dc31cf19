"""Vehicle description: physical parameters, actuators, and config ingestion.

All angles are stored in radians and all quantities in SI units internally.
The YAML config format accepts angle keys with a ``_deg`` suffix for
readability; serialization always emits ``_rad`` keys so that a
load/serialize/load cycle reproduces every numeric field bit-exact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

WING_TILT_MAX = math.pi / 2.0

PROPELLER_NAMES = ("pl", "pr", "pt")
CONTROL_BINDINGS = ("none", "aileron-left", "aileron-right", "elevator", "rudder")
BINDING_TO_ACTUATOR = {
    "aileron-left": "al",
    "aileron-right": "ar",
    "elevator": "e",
    "rudder": "r",
}
SEGMENT_KINDS = ("wing", "htail", "vtail")


class ConfigError(ValueError):
    """Unparsable config, missing field, or violated parameter invariant."""


@dataclass(eq=False)
class PropellerParams:
    """One propulsion unit.

    Wing-mounted units take ``hub_offset`` relative to the wing pivot in the
    wing frame; they rotate with the wing tilt. The tail unit takes a
    body-frame hub position and its axis tilts about body x by zeta_tt.
    """

    name: str
    mount: str                 # "wing" | "tail"
    hub_offset: np.ndarray     # m
    diameter: float            # m
    ct0: float                 # C_T(J) = ct0 + ct1 * J
    ct1: float
    cq0: float                 # C_Q(J) = cq0 + cq1 * J
    cq1: float
    normal_force_coeff: float  # mu_N, N s^2 / (rev m)
    handedness: int            # +1 right-handed about the forward axis
    max_speed: float           # rev/s

    @property
    def disk_area(self) -> float:
        return math.pi * self.diameter ** 2 / 4.0

    @property
    def advance_ratio_max(self) -> float:
        """J above which the affine C_T would go negative."""
        if self.ct1 >= 0.0:
            return math.inf
        return -self.ct0 / self.ct1


@dataclass(eq=False)
class AirfoilSegmentParams:
    """Span-wise airfoil strip with pre-stall and flat-plate coefficients."""

    name: str
    kind: str                  # "wing" | "htail" | "vtail"
    cp: np.ndarray             # center of pressure; wing: pivot-relative, else body [m]
    chord: float               # m
    span: float                # m
    cl0: float
    cl_alpha: float
    cl_delta: float
    cd0: float
    cd_alpha2: float
    cm0: float
    cm_alpha: float
    cm_delta: float
    alpha_stall_neg: float     # rad, < 0
    alpha_stall_pos: float     # rad, > 0
    blend_halfwidth: float     # rad
    fp_cl45: float             # flat-plate C_L at alpha = 45 deg
    fp_cd_min: float
    fp_cd90: float             # flat-plate C_D at alpha = 90 deg
    fp_cm_max: float
    control: str = "none"
    control_gain: float = 1.0  # local deflection = gain * actuator deflection
    slipstream: str = "none"   # propeller name or "none"


@dataclass(eq=False)
class FuselageParams:
    """Quadratic-form drag, coefficients lumped with reference area [m^2]."""

    cd_x: float
    cd_y: float
    cd_z: float


@dataclass(eq=False)
class WingParams:
    pivot: np.ndarray          # tilt-axis point, body frame [m]
    tilt_up_time: float        # s for full 0 -> 90 deg tilt
    tilt_down_time: float      # s for full 90 -> 0 deg tilt


@dataclass(eq=False)
class ActuatorLimits:
    """Normalized command range and physical mapping of one actuator."""

    name: str
    lo: float
    hi: float
    travel: float              # physical value per unit command (rad or rev/s)
    rate_up: float | None = None    # physical rate limits; None = immediate
    rate_down: float | None = None


ACTUATOR_ORDER = ("w", "pl", "pr", "pt", "al", "ar", "e", "r", "tt")


@dataclass(eq=False)
class VehicleParams:
    """Complete physical description; immutable after load by convention."""

    mass: float
    inertia: np.ndarray
    gravity: np.ndarray
    rho: float
    wing: WingParams
    propellers: list[PropellerParams]
    segments: list[AirfoilSegmentParams]
    fuselage: FuselageParams
    actuators: dict[str, ActuatorLimits]

    def __post_init__(self) -> None:
        self.inertia = np.asarray(self.inertia, dtype=float)
        self.gravity = np.asarray(self.gravity, dtype=float)
        validate_vehicle(self)
        self.inertia_inv = np.linalg.inv(self.inertia)
        self.prop = {p.name: p for p in self.propellers}
        self._aero_tables = None  # built lazily by tiltwing.aero

    @property
    def weight(self) -> float:
        return self.mass * float(np.linalg.norm(self.gravity))


def validate_vehicle(vp: VehicleParams) -> None:
    """Check every parameter invariant; raises ConfigError naming the field."""
    if not vp.mass > 0.0:
        raise ConfigError(f"mass must be > 0, got {vp.mass}")
    if not vp.rho > 0.0:
        raise ConfigError(f"air_density must be > 0, got {vp.rho}")
    inertia = np.asarray(vp.inertia, dtype=float)
    if inertia.shape != (3, 3):
        raise ConfigError(f"inertia must be 3x3, got shape {inertia.shape}")
    if not np.allclose(inertia, inertia.T, atol=1e-12):
        raise ConfigError("inertia must be symmetric")
    if np.any(np.linalg.eigvalsh(inertia) <= 0.0):
        raise ConfigError("inertia must be positive definite")
    if np.asarray(vp.gravity).shape != (3,):
        raise ConfigError("gravity must be a 3-vector")

    names = [p.name for p in vp.propellers]
    if sorted(names) != sorted(PROPELLER_NAMES):
        raise ConfigError(f"propellers must be exactly {PROPELLER_NAMES}, got {names}")
    for p in vp.propellers:
        if p.mount not in ("wing", "tail"):
            raise ConfigError(f"propellers.{p.name}.mount must be wing|tail, got {p.mount}")
        if not p.diameter > 0.0:
            raise ConfigError(f"propellers.{p.name}.diameter must be > 0")
        if not p.ct0 > 0.0:
            raise ConfigError(f"propellers.{p.name}.ct[0] must be > 0 (static thrust)")
        if not p.max_speed > 0.0:
            raise ConfigError(f"propellers.{p.name}.max_speed must be > 0")
        if not p.normal_force_coeff > 0.0:
            raise ConfigError(f"propellers.{p.name}.normal_force_coeff must be > 0")
        if p.handedness not in (-1, 1):
            raise ConfigError(f"propellers.{p.name}.handedness must be -1 or +1")

    for s in vp.segments:
        loc = f"segments.{s.name}"
        if s.kind not in SEGMENT_KINDS:
            raise ConfigError(f"{loc}.kind must be one of {SEGMENT_KINDS}")
        if not s.chord > 0.0:
            raise ConfigError(f"{loc}.chord must be > 0")
        if not s.span > 0.0:
            raise ConfigError(f"{loc}.span must be > 0")
        if not (s.alpha_stall_neg < 0.0 < s.alpha_stall_pos):
            raise ConfigError(f"{loc}: stall angles must satisfy alpha_neg < 0 < alpha_pos")
        if not s.blend_halfwidth > 0.0:
            raise ConfigError(f"{loc}.blend_halfwidth must be > 0")
        for key in ("fp_cl45", "fp_cd_min", "fp_cd90", "fp_cm_max"):
            if getattr(s, key) < 0.0:
                raise ConfigError(f"{loc}.{key} must be >= 0")
        if s.control not in CONTROL_BINDINGS:
            raise ConfigError(f"{loc}.control must be one of {CONTROL_BINDINGS}")
        if s.control_gain not in (-1.0, 1.0):
            raise ConfigError(f"{loc}.control_gain must be -1 or +1")
        if s.slipstream not in ("none",) + PROPELLER_NAMES:
            raise ConfigError(f"{loc}.slipstream must be a propeller name or none")

    for key in ("cd_x", "cd_y", "cd_z"):
        if getattr(vp.fuselage, key) < 0.0:
            raise ConfigError(f"fuselage.{key} must be >= 0")

    if not vp.wing.tilt_up_time > 0.0 or not vp.wing.tilt_down_time > 0.0:
        raise ConfigError("wing tilt times must be > 0")
    if np.asarray(vp.wing.pivot).shape != (3,):
        raise ConfigError("wing.pivot must be a 3-vector")

    missing = [n for n in ACTUATOR_ORDER if n not in vp.actuators]
    if missing:
        raise ConfigError(f"missing actuator limits for {missing}")


# ---------------------------------------------------------------------------
# Actuator state
# ---------------------------------------------------------------------------

@dataclass
class ActuatorSet:
    """Normalized commands (delta_*) and physical positions/speeds.

    Value-semantic; use :func:`apply_actuator_rates` to advance the physical
    state toward new commands.
    """

    # normalized commands
    delta_w: float = 0.0    # [0, 1] wing tilt, 1 = fully up (hover)
    delta_pl: float = 0.0   # [0, 1] left main throttle
    delta_pr: float = 0.0
    delta_pt: float = 0.0
    delta_al: float = 0.0   # [-1, 1]
    delta_ar: float = 0.0
    delta_e: float = 0.0
    delta_r: float = 0.0
    delta_tt: float = 0.0
    # physical state
    zeta_w: float = 0.0     # rad, 0 = cruise, pi/2 = hover
    eta_pl: float = 0.0     # rev/s
    eta_pr: float = 0.0
    eta_pt: float = 0.0
    zeta_al: float = 0.0    # rad
    zeta_ar: float = 0.0
    zeta_e: float = 0.0
    zeta_r: float = 0.0
    zeta_tt: float = 0.0

    def copy(self) -> "ActuatorSet":
        return ActuatorSet(**self.__dict__)

    def eta(self, prop_name: str) -> float:
        return getattr(self, f"eta_{prop_name}")

    def surface_deflection(self, actuator: str) -> float:
        return getattr(self, f"zeta_{actuator}")

    def command_dict(self) -> dict[str, float]:
        return {n: getattr(self, f"delta_{n}") for n in ACTUATOR_ORDER}


_PHYSICAL_FIELD = {
    "w": "zeta_w", "pl": "eta_pl", "pr": "eta_pr", "pt": "eta_pt",
    "al": "zeta_al", "ar": "zeta_ar", "e": "zeta_e", "r": "zeta_r", "tt": "zeta_tt",
}


def actuation_from_commands(vp: VehicleParams, clamp: bool = True,
                            **deltas: float) -> ActuatorSet:
    """ActuatorSet with physical state mapped instantaneously from commands.

    ``delta_plr`` may be passed as shorthand for equal left/right main
    throttle. With ``clamp=False`` commands are mapped as-is, which the trim
    solver uses to keep the model smooth across actuator bounds.
    """
    if "delta_plr" in deltas:
        v = deltas.pop("delta_plr")
        deltas.setdefault("delta_pl", v)
        deltas.setdefault("delta_pr", v)
    act = ActuatorSet()
    for key, v in deltas.items():
        if not key.startswith("delta_") or key[6:] not in ACTUATOR_ORDER:
            raise TypeError(f"unknown actuator command {key!r}")
        setattr(act, key, float(v))
    for name in ACTUATOR_ORDER:
        lim = vp.actuators[name]
        cmd = getattr(act, f"delta_{name}")
        if clamp:
            cmd = min(max(cmd, lim.lo), lim.hi)
            setattr(act, f"delta_{name}", cmd)
        setattr(act, _PHYSICAL_FIELD[name], cmd * lim.travel)
    return act


def nominal_actuation(vp: VehicleParams, current: ActuatorSet,
                      delta_plr: float, delta_w: float) -> ActuatorSet:
    """Nominal actuation: all attitude effectors zero, keeping the current
    physical wing tilt (the tilt actuator is slow, so the nominal wrench must
    be evaluated at the real tilt angle, not the commanded one)."""
    act = actuation_from_commands(vp, delta_w=delta_w, delta_plr=delta_plr)
    act.zeta_w = current.zeta_w
    return act


def apply_actuator_rates(current: ActuatorSet, command: ActuatorSet, dt: float,
                         vp: VehicleParams) -> ActuatorSet:
    """Advance physical actuator state toward ``command`` over ``dt``.

    Wing tilt slews at its up/down rate limits and never overshoots; all
    other actuators are immediate. Commands are clamped to their ranges.
    """
    if not dt > 0.0:
        raise ValueError(f"dt must be > 0, got {dt}")
    out = ActuatorSet()
    for name in ACTUATOR_ORDER:
        lim = vp.actuators[name]
        cmd = min(max(getattr(command, f"delta_{name}"), lim.lo), lim.hi)
        setattr(out, f"delta_{name}", cmd)
        target = cmd * lim.travel
        if lim.rate_up is None and lim.rate_down is None:
            setattr(out, _PHYSICAL_FIELD[name], target)
            continue
        pos = getattr(current, _PHYSICAL_FIELD[name])
        if target > pos:
            pos = min(pos + (lim.rate_up or math.inf) * dt, target)
        else:
            pos = max(pos - (lim.rate_down or math.inf) * dt, target)
        setattr(out, _PHYSICAL_FIELD[name], pos)
    return out


# ---------------------------------------------------------------------------
# Config I/O
# ---------------------------------------------------------------------------

DEFAULT_CONFIG = Path(__file__).parent / "data" / "vehicle_default.yaml"


def _require(mapping: dict, key: str, where: str):
    if key not in mapping:
        raise ConfigError(f"missing required field: {where}{key}")
    return mapping[key]


def _angle(mapping: dict, base: str, where: str, required: bool = True,
           default: float = 0.0) -> float:
    """Read an angle given either as `<base>_rad` or `<base>_deg`."""
    if f"{base}_rad" in mapping:
        return float(mapping[f"{base}_rad"])
    if f"{base}_deg" in mapping:
        return math.radians(float(mapping[f"{base}_deg"]))
    if required:
        raise ConfigError(f"missing required field: {where}{base}_deg (or _rad)")
    return default


def _vec3(value, where: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.shape != (3,):
        raise ConfigError(f"{where} must be a 3-element list")
    return arr


def load_vehicle_config(path: str | Path) -> VehicleParams:
    """Load and fully validate a vehicle config file."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with path.open("r", encoding="utf-8") as f:
            raw = yaml.safe_load(f)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return vehicle_from_dict(raw)


def vehicle_from_dict(raw: dict) -> VehicleParams:
    mass = float(_require(raw, "mass", ""))
    inertia = np.asarray(_require(raw, "inertia", ""), dtype=float)
    gravity = _vec3(raw.get("gravity", [0.0, 0.0, 9.81]), "gravity")
    rho = float(_require(raw, "air_density", ""))

    wraw = _require(raw, "wing", "")
    wing = WingParams(
        pivot=_vec3(_require(wraw, "pivot", "wing."), "wing.pivot"),
        tilt_up_time=float(_require(wraw, "tilt_up_time", "wing.")),
        tilt_down_time=float(_require(wraw, "tilt_down_time", "wing.")),
    )

    props = []
    for praw in _require(raw, "propellers", ""):
        name = _require(praw, "name", "propellers[].")
        where = f"propellers.{name}."
        ct = _require(praw, "ct", where)
        cq = _require(praw, "cq", where)
        props.append(PropellerParams(
            name=name,
            mount=_require(praw, "mount", where),
            hub_offset=_vec3(_require(praw, "hub_offset", where), where + "hub_offset"),
            diameter=float(_require(praw, "diameter", where)),
            ct0=float(ct[0]), ct1=float(ct[1]),
            cq0=float(cq[0]), cq1=float(cq[1]),
            normal_force_coeff=float(_require(praw, "normal_force_coeff", where)),
            handedness=int(_require(praw, "handedness", where)),
            max_speed=float(_require(praw, "max_speed", where)),
        ))

    segs = []
    for sraw in _require(raw, "segments", ""):
        name = _require(sraw, "name", "segments[].")
        where = f"segments.{name}."
        coeffs = _require(sraw, "coefficients", where)
        fp = _require(sraw, "flat_plate", where)
        segs.append(AirfoilSegmentParams(
            name=name,
            kind=_require(sraw, "kind", where),
            cp=_vec3(_require(sraw, "cp", where), where + "cp"),
            chord=float(_require(sraw, "chord", where)),
            span=float(_require(sraw, "span", where)),
            cl0=float(_require(coeffs, "cl0", where + "coefficients.")),
            cl_alpha=float(_require(coeffs, "cl_alpha", where + "coefficients.")),
            cl_delta=float(coeffs.get("cl_delta", 0.0)),
            cd0=float(_require(coeffs, "cd0", where + "coefficients.")),
            cd_alpha2=float(_require(coeffs, "cd_alpha2", where + "coefficients.")),
            cm0=float(coeffs.get("cm0", 0.0)),
            cm_alpha=float(coeffs.get("cm_alpha", 0.0)),
            cm_delta=float(coeffs.get("cm_delta", 0.0)),
            alpha_stall_neg=_angle(sraw, "alpha_stall_neg", where),
            alpha_stall_pos=_angle(sraw, "alpha_stall_pos", where),
            blend_halfwidth=_angle(sraw, "blend_halfwidth", where),
            fp_cl45=float(_require(fp, "cl45", where + "flat_plate.")),
            fp_cd_min=float(_require(fp, "cd_min", where + "flat_plate.")),
            fp_cd90=float(_require(fp, "cd90", where + "flat_plate.")),
            fp_cm_max=float(_require(fp, "cm_max", where + "flat_plate.")),
            control=sraw.get("control", "none"),
            control_gain=float(sraw.get("control_gain", 1.0)),
            slipstream=sraw.get("slipstream", "none"),
        ))

    fraw = _require(raw, "fuselage", "")
    fus = FuselageParams(
        cd_x=float(_require(fraw, "cd_x", "fuselage.")),
        cd_y=float(_require(fraw, "cd_y", "fuselage.")),
        cd_z=float(_require(fraw, "cd_z", "fuselage.")),
    )

    araw = _require(raw, "actuators", "")
    prop_by_name = {p.name: p for p in props}
    acts: dict[str, ActuatorLimits] = {
        "w": ActuatorLimits("w", 0.0, 1.0, WING_TILT_MAX,
                            rate_up=WING_TILT_MAX / wing.tilt_up_time,
                            rate_down=WING_TILT_MAX / wing.tilt_down_time),
    }
    for pname in PROPELLER_NAMES:
        if pname in prop_by_name:
            acts[pname] = ActuatorLimits(pname, 0.0, 1.0, prop_by_name[pname].max_speed)
    for aname, key in (("al", "aileron"), ("ar", "aileron"),
                       ("e", "elevator"), ("r", "rudder"), ("tt", "tail_tilt")):
        acts[aname] = ActuatorLimits(aname, -1.0, 1.0,
                                     _angle(araw, f"{key}_travel", "actuators."))

    return VehicleParams(mass=mass, inertia=inertia, gravity=gravity, rho=rho,
                         wing=wing, propellers=props, segments=segs,
                         fuselage=fus, actuators=acts)


def vehicle_to_dict(vp: VehicleParams) -> dict:
    """Plain-dict form of the vehicle; angles emitted as *_rad keys."""
    surf_travel = {k: vp.actuators[a].travel for a, k in
                   (("al", "aileron"), ("e", "elevator"),
                    ("r", "rudder"), ("tt", "tail_tilt"))}
    return {
        "mass": vp.mass,
        "inertia": [[float(x) for x in row] for row in vp.inertia],
        "gravity": [float(x) for x in vp.gravity],
        "air_density": vp.rho,
        "wing": {
            "pivot": [float(x) for x in vp.wing.pivot],
            "tilt_up_time": vp.wing.tilt_up_time,
            "tilt_down_time": vp.wing.tilt_down_time,
        },
        "actuators": {f"{k}_travel_rad": v for k, v in surf_travel.items()},
        "propellers": [{
            "name": p.name, "mount": p.mount,
            "hub_offset": [float(x) for x in p.hub_offset],
            "diameter": p.diameter,
            "ct": [p.ct0, p.ct1], "cq": [p.cq0, p.cq1],
            "normal_force_coeff": p.normal_force_coeff,
            "handedness": p.handedness, "max_speed": p.max_speed,
        } for p in vp.propellers],
        "segments": [{
            "name": s.name, "kind": s.kind,
            "cp": [float(x) for x in s.cp],
            "chord": s.chord, "span": s.span,
            "coefficients": {
                "cl0": s.cl0, "cl_alpha": s.cl_alpha, "cl_delta": s.cl_delta,
                "cd0": s.cd0, "cd_alpha2": s.cd_alpha2,
                "cm0": s.cm0, "cm_alpha": s.cm_alpha, "cm_delta": s.cm_delta,
            },
            "alpha_stall_neg_rad": s.alpha_stall_neg,
            "alpha_stall_pos_rad": s.alpha_stall_pos,
            "blend_halfwidth_rad": s.blend_halfwidth,
            "flat_plate": {
                "cl45": s.fp_cl45, "cd_min": s.fp_cd_min,
                "cd90": s.fp_cd90, "cm_max": s.fp_cm_max,
            },
            "control": s.control, "control_gain": s.control_gain,
            "slipstream": s.slipstream,
        } for s in vp.segments],
        "fuselage": {"cd_x": vp.fuselage.cd_x, "cd_y": vp.fuselage.cd_y,
                     "cd_z": vp.fuselage.cd_z},
    }


def save_vehicle_config(vp: VehicleParams, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as f:
        yaml.safe_dump(vehicle_to_dict(vp), f, sort_keys=False)


def default_vehicle() -> VehicleParams:
    """The shipped desk-scale tiltwing."""
    return load_vehicle_config(DEFAULT_CONFIG)
