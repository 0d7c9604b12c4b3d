"""Closed-loop simulation of the tool-tracking camera.

The plant runs the true parameters ``a_true``; the controller and the
estimator only see ``a_hat``. Each tick:

1. true FK -> exact and noisy pixel of the tool tip,
2. estimated FK -> control QP for the joint rates,
3. (adaptive runs, tip visible) adaptation QP for the parameter rates,
4. explicit Euler step of ``q`` and ``a_hat``.

Everything random is drawn from one generator seeded by ``cfg.seed``: the
parameter perturbation first, then the pixel noise.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import qp
from .camera import FovRegion, PinholeIntrinsics, measured_direction_array, noisy_pixel, project_array
from .constraints import (FOCAL_FAR, FOCAL_NEAR, FOV_CONE, JOINT_LIMIT, POINT_LINE, POINT_PLANE,
                          POINT_POINT, CollisionGeometry, EnvironmentPoint, RobotPoint, fov_angle,
                          fov_margin, joint_limit_rows, stacked_sightline, task_constraints)
from .controller import TaskController, TaskGains, TaskTargets, task_errors
from .dq import conj_array, qmul_array, quaternion_from_matrix, rotate_array
from .estimator import (AdaptationGains, AdaptiveEstimator, parameter_bounds, task_error_jacobian)
from .kinematics import N_JOINTS, N_PARAMS, SerialChainModel, forward_kinematics, solve_ik

log = logging.getLogger(__name__)

CONFIG_VERSION = 1
TRACE_VERSION = 1
SUMMARY_VERSION = 1

EXIT_OK = 0
EXIT_INFEASIBLE_INIT = 2
EXIT_QP_BUDGET = 3

SKIPPED = "skipped"     # adaptation not attempted this tick (off or no measurement)

#: bit assigned to each constraint family in the trace activity mask
ACTIVITY_BITS = {JOINT_LIMIT: 1, POINT_POINT: 2, POINT_PLANE: 4, POINT_LINE: 8,
                 FOV_CONE: 16, FOCAL_NEAR: 32, FOCAL_FAR: 64}


class InfeasibleInitialization(RuntimeError):
    """The start configuration violates a constraint or cannot be reached."""


class QpFailureBudgetExceeded(RuntimeError):
    """Too many ticks ended without an optimal QP solution."""


# --- configuration ----------------------------------------------------------

_PI = math.pi


def _branch_dh(azimuth: float) -> list:
    # rail joint about world z, prismatic radial slide, then a 6R elbow arm
    # with a spherical wrist
    return [[azimuth + _PI / 2, 0.0, 0.0, _PI / 2],
            [0.0, 0.35, 0.0, -_PI / 2],
            [0.0, 0.12, 0.0, _PI / 2],
            [0.0, 0.0, 0.25, 0.0],
            [0.0, 0.0, 0.0, _PI / 2],
            [0.0, 0.25, 0.0, -_PI / 2],
            [0.0, 0.0, 0.0, _PI / 2],
            [0.0, 0.06, 0.0, 0.0]]


@dataclass
class RobotConfig:
    name: str
    dh: list
    effector: list
    base: list = field(default_factory=lambda: [0.0] * 6)
    joint_types: list = field(default_factory=lambda: ["revolute", "prismatic"] + ["revolute"] * 6)
    q_min: list = field(default_factory=lambda: [-_PI / 2, -0.1] + [-2.9] * 6)
    q_max: list = field(default_factory=lambda: [_PI / 2, 0.1] + [2.9] * 6)
    qd_max: list = field(default_factory=lambda: [0.5, 0.05] + [1.0] * 6)
    q_seed: list = field(default_factory=lambda: [0.0] * N_JOINTS)

    def model(self) -> SerialChainModel:
        return SerialChainModel(tuple(self.joint_types), self.dh, self.base, self.effector,
                                self.q_min, self.q_max, self.qd_max, self.name)


def default_robots() -> list:
    tool = RobotConfig("tool", _branch_dh(_PI), [0.0, 0.0, 0.08, 0.0, 0.0, 0.0],
                       q_seed=[0.2, 0.0, 1.55, 0.9, 0.25, 0.0, -1.15, 0.15])
    # camera mounted so that its optical axis (-z) points along the flange z
    camera = RobotConfig("camera", _branch_dh(0.0), [0.0, 0.0, 0.05, _PI, 0.0, 0.0],
                         q_seed=[0.0, 0.0, 1.5, 2.25, 0.0, 0.05, -1.55, 1.5])
    return [tool, camera]


@dataclass
class CameraConfig:
    focal_length: float = 0.075          # m
    pixel_width: float = 2.2e-6          # m/px
    pixel_height: float = 2.2e-6
    width: int = 1920                    # px
    height: int = 1080
    fov_width: float = 1150.0            # real-FoV subregion, px
    fov_height: float = 750.0
    elevation_deg: float = 50.0          # initial viewing direction of the tip
    azimuth_deg: float = 0.0

    def intrinsics(self) -> PinholeIntrinsics:
        return PinholeIntrinsics(self.focal_length, self.pixel_width, self.pixel_height,
                                 self.width, self.height)

    def fov_region(self) -> FovRegion:
        return FovRegion(self.fov_width, self.fov_height)


@dataclass
class GainsConfig:
    eta_q: float = 3.0
    alpha: float = 0.99
    beta: float = 0.999
    lam: float = 0.01
    eta_a: float = 7.0
    damping: float = 0.05
    eta_box: float = 1.0

    def task(self) -> TaskGains:
        return TaskGains(self.eta_q, self.alpha, self.beta, self.lam)


@dataclass
class TrajectoryConfig:
    center: list = field(default_factory=lambda: [0.0, 0.0, 0.08])
    radius: float = 0.04
    period: float = 30.0
    duration: float = 60.0
    tick_rate: float = 32.0
    tool_rotation: list = field(default_factory=lambda: [0.0, 1.0, 0.0, 0.0])

    def __post_init__(self):
        if self.radius <= 0 or self.period <= 0:
            raise ValueError("trajectory radius and period must be positive")
        if self.duration < 0 or self.tick_rate <= 0:
            raise ValueError("duration must be >= 0 and tick rate > 0")

    @property
    def dt(self) -> float:
        return 1.0 / self.tick_rate

    @property
    def ticks(self) -> int:
        return int(round(self.duration * self.tick_rate))


def _default_env_points() -> list:
    # elbow, wrist centre, flange and effector of each robot; the tool wrist
    # and tip work directly above the stage so only the floor plane applies
    pts = []
    for robot in (0, 1):
        for link in (4, 6, 8, 9):
            near_axis = robot == 0 and link >= 6
            pts.append({"robot": robot, "link": link, "offset": [0.0, 0.0, 0.0],
                        "plane": True, "cylinder": not near_axis})
    return pts


def _default_pairs() -> list:
    def p(robot, link):
        return {"robot": robot, "link": link, "offset": [0.0, 0.0, 0.0]}
    return [{"a": p(0, 9), "b": p(1, 9), "d_safe": 0.1},
            {"a": p(0, 8), "b": p(1, 8), "d_safe": 0.1},
            {"a": p(0, 6), "b": p(1, 6), "d_safe": 0.1},
            {"a": p(0, 4), "b": p(1, 4), "d_safe": 0.1},
            {"a": p(0, 9), "b": p(1, 6), "d_safe": 0.1}]


@dataclass
class ConstraintsConfig:
    theta_safe_deg: float = 0.55
    d_image: float = 0.405
    focal_band: float = 0.005
    eta_fov: float = 2.0
    eta_vfi: float = 2.0
    eta_joint: float = 1.0
    cylinder_center: list = field(default_factory=lambda: [0.0, 0.0])
    cylinder_radius: float = 0.03
    top_height: float = 0.05
    plane_safe: float = 0.01
    cylinder_safe: float = 0.02
    env_points: list = field(default_factory=_default_env_points)
    pairs: list = field(default_factory=_default_pairs)
    bound_rel: float = 0.1
    bound_min_length: float = 0.01
    bound_angle_deg: float = 10.0

    @property
    def theta_safe(self) -> float:
        return math.radians(self.theta_safe_deg)

    def geometry(self) -> CollisionGeometry:
        def rp(d):
            return RobotPoint(int(d["robot"]), int(d["link"]), tuple(d.get("offset", (0, 0, 0))))
        env = tuple(EnvironmentPoint(rp(e), bool(e.get("plane", True)), bool(e.get("cylinder", False)))
                    for e in self.env_points)
        pairs = tuple((rp(p["a"]), rp(p["b"]), float(p["d_safe"])) for p in self.pairs)
        return CollisionGeometry(env, pairs, tuple(self.cylinder_center), self.cylinder_radius,
                                 self.top_height, self.plane_safe, self.cylinder_safe, self.eta_vfi)


@dataclass
class NoiseConfig:
    pixel_sigma: float = 0.5
    quantize: bool = True

    def __post_init__(self):
        if self.pixel_sigma < 0:
            raise ValueError("pixel noise sigma must be >= 0")


@dataclass
class PerturbationConfig:
    """Half-widths of the zero-mean uniform parameter errors per robot."""

    tool_length: float = 0.00015         # m
    tool_angle_deg: float = 0.075
    camera_length: float = 0.0006
    camera_angle_deg: float = 0.3

    def half_widths(self, models) -> np.ndarray:
        out = []
        for m, (ln, ang) in zip(models, ((self.tool_length, self.tool_angle_deg),
                                         (self.camera_length, self.camera_angle_deg))):
            out.append(np.where(m.is_angular_parameter(), math.radians(ang), ln))
        return np.concatenate(out)


_SECTIONS = {"camera": CameraConfig, "gains": GainsConfig, "trajectory": TrajectoryConfig,
             "constraints": ConstraintsConfig, "noise": NoiseConfig,
             "perturbation": PerturbationConfig}


@dataclass
class ScenarioConfig:
    robots: list = field(default_factory=default_robots)
    camera: CameraConfig = field(default_factory=CameraConfig)
    gains: GainsConfig = field(default_factory=GainsConfig)
    trajectory: TrajectoryConfig = field(default_factory=TrajectoryConfig)
    constraints: ConstraintsConfig = field(default_factory=ConstraintsConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    perturbation: PerturbationConfig = field(default_factory=PerturbationConfig)
    seed: int = 1
    adaptive: bool = True
    max_qp_failures: int = 32
    dump_parameters: bool = False
    version: int = CONFIG_VERSION

    def __post_init__(self):
        if len(self.robots) != 2:
            raise ValueError("a scenario needs exactly two robots (tool, camera)")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        data = dict(data)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if data.get("version", CONFIG_VERSION) != CONFIG_VERSION:
            raise ValueError(f"unsupported config version {data['version']!r}")
        kw = {}
        for name, sect in _SECTIONS.items():
            if name in data:
                kw[name] = _section(sect, data.pop(name), name)
        if "robots" in data:
            kw["robots"] = [_section(RobotConfig, r, "robots") for r in data.pop("robots")]
        kw.update(data)
        return cls(**kw)


def _section(cls, data: dict, name: str):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown keys in '{name}': {sorted(unknown)}")
    return cls(**data)


def load_config(path) -> ScenarioConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValueError(f"config {path} is not valid JSON: {exc}") from exc
    return ScenarioConfig.from_dict(data)


def save_config(cfg: ScenarioConfig, path) -> None:
    with open(path, "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=2)
        fh.write("\n")


# --- trajectory and initial pose ---------------------------------------------


def circle_trajectory(t: float, traj: TrajectoryConfig):
    """Desired tool tip position and (constant) tool rotation at time ``t``."""
    w = 2.0 * math.pi * t / traj.period
    c = np.asarray(traj.center, dtype=float)
    p = c + traj.radius * np.array([math.cos(w), math.sin(w), 0.0])
    return p, np.asarray(traj.tool_rotation, dtype=float)


def look_at_rotation(camera_position, target) -> np.ndarray:
    """Camera rotation whose optical axis (-z) points at ``target`` with x horizontal."""
    z = np.asarray(camera_position, dtype=float) - np.asarray(target, dtype=float)
    z /= np.linalg.norm(z)
    x = np.cross([0.0, 0.0, 1.0], z)
    if np.linalg.norm(x) < 1e-9:
        x = np.array([1.0, 0.0, 0.0])
    x /= np.linalg.norm(x)
    return quaternion_from_matrix(np.column_stack([x, np.cross(z, x), z]))


def viewpoint(tip, cam: CameraConfig, distance: float) -> np.ndarray:
    el, az = math.radians(cam.elevation_deg), math.radians(cam.azimuth_deg)
    return np.asarray(tip) + distance * np.array([math.cos(el) * math.cos(az),
                                                  math.cos(el) * math.sin(az), math.sin(el)])


def perturbed_parameters(cfg: ScenarioConfig, models, rng: np.random.Generator) -> np.ndarray:
    nominal = np.concatenate([m.nominal_parameters() for m in models])
    half = cfg.perturbation.half_widths(models)
    return nominal + rng.uniform(-1.0, 1.0, nominal.size) * half


@dataclass
class Plant:
    """Everything fixed for one run."""

    models: tuple
    a_true: np.ndarray
    a_nominal: np.ndarray
    q0: np.ndarray
    targets0: TaskTargets
    t2d: np.ndarray


def _states(models, q, a):
    return (forward_kinematics(models[0], q[:N_JOINTS], a[:N_PARAMS]),
            forward_kinematics(models[1], q[N_JOINTS:], a[N_PARAMS:]))


def _joint_rows(models, q, eta):
    W1, w1 = joint_limit_rows(q[:N_JOINTS], models[0].q_min, models[0].q_max, models[0].qd_max, eta)
    W2, w2 = joint_limit_rows(q[N_JOINTS:], models[1].q_min, models[1].q_max, models[1].qd_max, eta)
    z = np.zeros_like(W1)
    return np.block([[W1, z], [z, W2]]), np.concatenate([w1, w2])


def initialize(cfg: ScenarioConfig, models, a_hat, a_true) -> tuple:
    """Start configuration from IK under the estimated model.

    The tool is placed at the trajectory start and the camera at
    ``d_image`` from the estimated tip, looking at it. Returns ``(q0, t2d)``.
    The camera is then tilted so the estimated and the true tip directions
    are symmetric about its optical axis.
    Raises :class:`InfeasibleInitialization` if IK fails or any constraint
    is violated under either model, or the true tip is not in the image.
    """
    tip, r1d = circle_trajectory(0.0, cfg.trajectory)
    m1, m2 = models
    q1, res1 = solve_ik(m1, a_hat[:N_PARAMS], tip, r1d, cfg.robots[0].q_seed, iters=400)
    tip_hat = forward_kinematics(m1, q1, a_hat[:N_PARAMS]).t
    c = viewpoint(tip_hat, cfg.camera, cfg.constraints.d_image)
    r2 = look_at_rotation(c, tip_hat)
    q2, res2 = solve_ik(m2, a_hat[N_PARAMS:], c, r2, cfg.robots[1].q_seed, iters=400)
    # tilt the camera halfway toward where the image shows the tip, so the
    # estimated and the imaged directions sit symmetric about the optical axis
    s_true = _states(models, np.concatenate([q1, q2]), a_true)
    y = rotate_array(conj_array(s_true[1].r), s_true[0].t - s_true[1].t)
    y /= np.linalg.norm(y)
    axis = np.cross([0.0, 0.0, -1.0], y)
    if np.linalg.norm(axis) > 1e-15:
        half = 0.5 * math.atan2(np.linalg.norm(axis), -y[2])
        tilt = np.concatenate([[math.cos(half / 2)], math.sin(half / 2) * axis / np.linalg.norm(axis)])
        q2, res2 = solve_ik(m2, a_hat[N_PARAMS:], c, qmul_array(r2, tilt), q2, iters=400)
    if max(res1, res2) > 1e-9:
        raise InfeasibleInitialization(
            f"inverse kinematics did not converge (residuals {res1:.2e}, {res2:.2e})")
    q0 = np.concatenate([q1, q2])
    problems = []
    for m, qi in zip(models, (q1, q2)):
        if np.any(qi <= m.q_min) or np.any(qi >= m.q_max):
            problems.append(f"{m.name}: joint limit reached")
    con = cfg.constraints
    for label, a in (("estimated", a_hat), ("true", a_true)):
        states = _states(models, q0, a)
        cs = task_constraints(states, cfg.constraints.geometry(), con.theta_safe, con.d_image,
                              con.focal_band, con.eta_fov)
        for row in cs.rows:
            if row.value < 0.0:
                problems.append(f"{label} model: {row.kind} violated by {-row.value:.3e}")
    states = _states(models, q0, a_true)
    px = project_array(cfg.camera.intrinsics(), states[1].r, states[1].t, states[0].t)
    if px.behind or not cfg.camera.intrinsics().in_image(px.u, px.v):
        problems.append("true tool tip is outside the image")
    if problems:
        raise InfeasibleInitialization("; ".join(problems))
    return q0, c


def build_plant(cfg: ScenarioConfig, rng: np.random.Generator) -> Plant:
    models = tuple(r.model() for r in cfg.robots)
    a_nominal = np.concatenate([m.nominal_parameters() for m in models])
    a_true = perturbed_parameters(cfg, models, rng)
    q0, t2d = initialize(cfg, models, a_nominal, a_true)
    tip, r1d = circle_trajectory(0.0, cfg.trajectory)
    return Plant(models, a_true, a_nominal, q0, TaskTargets(r1d, tip, t2d), t2d)


def adaptation_gains(cfg: ScenarioConfig, models, a_nominal) -> AdaptationGains:
    con = cfg.constraints
    mask = np.concatenate([m.is_angular_parameter() for m in models])
    lo, hi = parameter_bounds(a_nominal, mask, con.bound_rel, con.bound_min_length,
                              math.radians(con.bound_angle_deg))
    return AdaptationGains(cfg.gains.eta_a, cfg.gains.damping, lo, hi, cfg.gains.eta_box,
                           con.eta_vfi)


# --- trace ----------------------------------------------------------------------


def _trace_columns(dump_parameters: bool) -> list:
    cols = ["tick", "time"]
    cols += [f"q{r}_{j}" for r in (1, 2) for j in range(1, N_JOINTS + 1)]
    cols += ["param_hash", "t1_err", "r1_err", "t2_err", "pixel_u", "pixel_v", "y_err",
             "g_fov_true", "theta_fov_deg", "g_fov_est", "in_real_fov", "in_estimated_fov",
             "constraint_mask", "control_status", "adapt_status", "lyapunov_rate"]
    if dump_parameters:
        cols += [f"a{r}_{i}" for r in (1, 2) for i in range(N_PARAMS)]
    return cols


TRACE_COLUMNS = _trace_columns(False)


@dataclass
class TraceRecord:
    tick: int
    time: float
    q: np.ndarray
    param_hash: str
    t1_err: float
    r1_err: float
    t2_err: float
    pixel: tuple | None          # measured (noisy) pixel, None when not visible
    y_err: float                 # |y_hat - y|, nan without a measurement
    g_fov_true: float
    theta_fov_deg: float
    g_fov_est: float
    in_real_fov: bool
    in_estimated_fov: bool
    constraint_mask: int
    control_status: str
    adapt_status: str
    lyapunov_rate: float         # x_err' J_x a_dot of the applied parameter rate
    a_hat: np.ndarray | None = None

    def row(self) -> list:
        f = _fmt
        out = [str(self.tick), f(self.time)] + [f(v) for v in self.q]
        out += [self.param_hash, f(self.t1_err), f(self.r1_err), f(self.t2_err)]
        out += ["", ""] if self.pixel is None else [f(self.pixel[0]), f(self.pixel[1])]
        out += [f(self.y_err), f(self.g_fov_true), f(self.theta_fov_deg), f(self.g_fov_est),
                str(int(self.in_real_fov)), str(int(self.in_estimated_fov)),
                str(self.constraint_mask), self.control_status, self.adapt_status,
                f(self.lyapunov_rate)]
        if self.a_hat is not None:
            out += [f(v) for v in self.a_hat]
        return out


def _fmt(x) -> str:
    return repr(float(x))


def param_hash(a) -> str:
    return hashlib.sha256(np.ascontiguousarray(a, dtype="<f8").tobytes()).hexdigest()[:16]


def emit_trace(trace, path, dump_parameters: bool | None = None) -> None:
    """Write the trace as CSV; an empty trace gives a header-only file."""
    if dump_parameters is None:
        dump_parameters = bool(trace) and trace[0].a_hat is not None
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(_trace_columns(dump_parameters))
            for rec in trace:
                w.writerow(rec.row())
    except OSError as exc:
        raise OSError(f"cannot write trace {path}: {exc}") from exc


def read_trace(path) -> list:
    """Parse a trace CSV into dicts of floats / ints / strings."""
    text_cols = {"param_hash", "control_status", "adapt_status"}
    int_cols = {"tick", "in_real_fov", "in_estimated_fov", "constraint_mask"}
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rec = {}
            for k, v in row.items():
                if k in text_cols:
                    rec[k] = v
                elif k in int_cols:
                    rec[k] = int(v)
                else:
                    rec[k] = None if v == "" else float(v)
            out.append(rec)
    return out


def emit_summary(summary: dict, path) -> None:
    try:
        with open(path, "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write summary {path}: {exc}") from exc


# --- closed loop -------------------------------------------------------------------


@dataclass
class ScenarioResult:
    trace: list
    summary: dict
    plant: Plant
    a_hat: np.ndarray
    q: np.ndarray


def _activity(sol, kinds) -> int:
    if sol is None or sol.ineq_multipliers.size == 0:
        return 0
    mask = 0
    for i in np.flatnonzero(sol.ineq_multipliers > 0.0):
        mask |= ACTIVITY_BITS.get(kinds[i], 0)
    return mask


def run_scenario(cfg: ScenarioConfig, adaptive: bool | None = None,
                 on_adapt=None) -> ScenarioResult:
    """Run one closed-loop experiment; deterministic for a fixed config.

    ``on_adapt(tick, q, a_hat, result)`` is called after every attempted
    adaptation step, before the state is integrated.
    """
    adaptive = cfg.adaptive if adaptive is None else adaptive
    rng = np.random.default_rng(cfg.seed)
    plant = build_plant(cfg, rng)
    models = plant.models
    con = cfg.constraints
    geom = con.geometry()
    intr = cfg.camera.intrinsics()
    region = cfg.camera.fov_region()
    task_gains = cfg.gains.task()
    controller = TaskController(task_gains)
    estimator = AdaptiveEstimator(adaptation_gains(cfg, models, plant.a_nominal), task_gains,
                                  geom, con.theta_safe)
    traj = cfg.trajectory
    dt = traj.dt

    q = plant.q0.copy()
    a_hat = plant.a_nominal.copy()
    trace = []
    failures = {"control": 0, "adapt": 0}
    dropouts = 0
    for k in range(traj.ticks):
        t = k * dt
        t1d, r1d = circle_trajectory(t, traj)
        targets = TaskTargets(r1d, t1d, plant.t2d)

        true_states = _states(models, q, plant.a_true)
        exact = project_array(intr, true_states[1].r, true_states[1].t, true_states[0].t)
        y_true = rotate_array(conj_array(true_states[1].r), true_states[0].t - true_states[1].t)
        y_true /= np.linalg.norm(y_true)
        g_true = fov_margin(y_true, con.theta_safe)
        in_real = (not exact.behind) and region.contains(exact.u, exact.v)

        pixel, y_meas = None, None
        if not exact.behind:
            u, v = noisy_pixel(exact.u, exact.v, cfg.noise.pixel_sigma, rng, cfg.noise.quantize)
            if intr.in_image(u, v):
                pixel = (u, v)
                y_meas = measured_direction_array(intr, u, v)
        if pixel is None:
            dropouts += 1

        est_states = _states(models, q, a_hat)
        (y_hat, _, _), _, _ = stacked_sightline(est_states, "q")
        g_est = fov_margin(y_hat, con.theta_safe)
        cs = task_constraints(est_states, geom, con.theta_safe, con.d_image, con.focal_band,
                              con.eta_fov)
        jrows = _joint_rows(models, q, con.eta_joint)
        ctrl = controller.tick(est_states, targets, cs, jrows)
        if not ctrl.ok:
            failures["control"] += 1
        kinds = [JOINT_LIMIT] * jrows[0].shape[0] + cs.kinds

        u_a = np.zeros(2 * N_PARAMS)
        adapt_status = SKIPPED
        lyap = 0.0
        y_err = math.nan if y_meas is None else float(np.linalg.norm(y_hat - y_meas))
        if adaptive and y_meas is not None:
            res = estimator.tick(est_states, y_meas, a_hat, targets)
            adapt_status = res.status
            if res.ok:
                u_a = res.u
            else:
                failures["adapt"] += 1
            x_err, J_x = task_error_jacobian(est_states, targets, task_gains)
            lyap = float(x_err @ J_x @ u_a)
            if on_adapt is not None:
                on_adapt(k, q.copy(), a_hat.copy(), res)

        e1, er1, e2 = task_errors(est_states, targets)
        trace.append(TraceRecord(
            tick=k, time=t, q=q.copy(), param_hash=param_hash(a_hat),
            t1_err=float(np.linalg.norm(e1)), r1_err=float(np.linalg.norm(er1)),
            t2_err=float(np.linalg.norm(e2)), pixel=pixel, y_err=y_err,
            g_fov_true=g_true, theta_fov_deg=math.degrees(fov_angle(y_true)), g_fov_est=g_est,
            in_real_fov=bool(in_real), in_estimated_fov=bool(g_est >= 0.0),
            constraint_mask=_activity(ctrl.solution, kinds), control_status=ctrl.status,
            adapt_status=adapt_status, lyapunov_rate=lyap,
            a_hat=a_hat.copy() if cfg.dump_parameters else None))

        if failures["control"] + failures["adapt"] > cfg.max_qp_failures:
            raise QpFailureBudgetExceeded(
                f"{failures['control']} control and {failures['adapt']} adaptation QP failures "
                f"by tick {k} (budget {cfg.max_qp_failures})")

        q = q + dt * ctrl.u
        a_hat = a_hat + dt * u_a

    summary = summarize(cfg, adaptive, plant, trace, a_hat, failures, dropouts)
    return ScenarioResult(trace, summary, plant, a_hat, q)


def summarize(cfg, adaptive, plant, trace, a_hat, failures, dropouts) -> dict:
    n = len(trace)
    con = cfg.constraints
    theta = np.array([r.theta_fov_deg for r in trace])
    y_err = np.array([r.y_err for r in trace])
    tail = y_err[n - max(n // 4, 1):] if n else y_err
    tail = tail[np.isfinite(tail)]
    g_opt = [r.g_fov_est for r in trace if r.control_status == qp.OPTIMAL]
    err = a_hat - plant.a_true
    err0 = plant.a_nominal - plant.a_true

    def split(e):
        return {"tool": float(np.linalg.norm(e[:N_PARAMS])),
                "camera": float(np.linalg.norm(e[N_PARAMS:])),
                "total": float(np.linalg.norm(e))}

    return {
        "schema_version": SUMMARY_VERSION,
        "seed": cfg.seed,
        "adaptive": bool(adaptive),
        "ticks": n,
        "tick_rate": cfg.trajectory.tick_rate,
        "duration_s": n / cfg.trajectory.tick_rate,
        "duty_ratio": float(np.mean([r.in_real_fov for r in trace])) if n else math.nan,
        "estimated_duty_ratio": float(np.mean([r.in_estimated_fov for r in trace])) if n else math.nan,
        "max_deviation_deg": float(max(np.max(theta) - con.theta_safe_deg, 0.0)) if n else 0.0,
        "max_fov_angle_deg": float(np.max(theta)) if n else math.nan,
        "mean_y_err_last_quarter": float(np.mean(tail)) if tail.size else math.nan,
        "min_estimated_fov_margin": float(min(g_opt)) if g_opt else math.nan,
        "max_lyapunov_rate": float(max((r.lyapunov_rate for r in trace), default=0.0)),
        "final_param_error": split(err),
        "initial_param_error": split(err0),
        "control_failures": failures["control"],
        "adaptation_failures": failures["adapt"],
        "measurement_dropouts": dropouts,
        "final_param_hash": param_hash(a_hat),
    }


def compare(cfg: ScenarioConfig) -> dict:
    """Paired adaptive / non-adaptive runs with the same seed."""
    on = run_scenario(cfg, adaptive=True).summary
    off = run_scenario(cfg, adaptive=False).summary
    return {"adaptive": on, "non_adaptive": off,
            "duty_ratio_gap": on["duty_ratio"] - off["duty_ratio"]}


# --- frozen-pose calibration ----------------------------------------------------------------


# (elevation deg, azimuth deg, circle phase) of the default calibration poses
CALIBRATION_VIEWS = ((50.0, 0.0, 0.0), (40.0, 15.0, 0.25), (60.0, -15.0, 0.5),
                     (45.0, -10.0, 0.75), (55.0, 10.0, 0.1))


def calibration_viewpoints(cfg: ScenarioConfig, models, a, views=CALIBRATION_VIEWS) -> list:
    """Stacked joint configurations framing the tool tip from several directions.

    Each view is ``(elevation, azimuth, phase)`` with an optional fourth
    entry for the camera distance (default: the focal distance). The tool is
    placed on the circle at each phase and the camera looks at the tip.
    """
    out = []
    for el, az, phase, *rest in views:
        distance = rest[0] if rest else cfg.constraints.d_image
        tip, r1d = circle_trajectory(phase * cfg.trajectory.period, cfg.trajectory)
        q1, res1 = solve_ik(models[0], a[:N_PARAMS], tip, r1d, cfg.robots[0].q_seed)
        cam = viewpoint(tip, replace(cfg.camera, elevation_deg=el, azimuth_deg=az), distance)
        q2, res2 = solve_ik(models[1], a[N_PARAMS:], cam, look_at_rotation(cam, tip),
                            cfg.robots[1].q_seed, iters=400)
        if max(res1, res2) > 1e-6:
            raise InfeasibleInitialization(f"calibration view {(el, az, phase)} unreachable")
        out.append(np.concatenate([q1, q2]))
    return out




def frozen_pose_calibration(models, a_true, a_hat, viewpoints, gains: AdaptationGains,
                            ticks: int, dt: float):
    """Round-robin adaptation over fixed joint configurations (noise-free).

    Returns ``(a_hat, residuals)`` where ``residuals[k]`` is the largest
    ``|y_hat - y|`` over all viewpoints after tick ``k``.
    """
    estimator = AdaptiveEstimator(gains)
    true_y = []
    for q in viewpoints:
        s = _states(models, q, a_true)
        h = rotate_array(conj_array(s[1].r), s[0].t - s[1].t)
        true_y.append(h / np.linalg.norm(h))
    a_hat = np.array(a_hat, dtype=float)

    def residual(a):
        worst = 0.0
        for q, y in zip(viewpoints, true_y):
            (yh, _, _), _, _ = stacked_sightline(_states(models, q, a), "a")
            worst = max(worst, float(np.linalg.norm(yh - y)))
        return worst

    residuals = []
    for k in range(ticks):
        i = k % len(viewpoints)
        res = estimator.tick(_states(models, viewpoints[i], a_hat), true_y[i], a_hat)
        if res.ok:
            a_hat = a_hat + dt * res.u
        residuals.append(residual(a_hat))
    return a_hat, residuals
