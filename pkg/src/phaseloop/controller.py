"""Hybrid incremental impedance controller.

Converts low-rate policy pose targets into high-rate compliant joint commands
through a six-stage pipeline executed every control tick:

  1. pose error and its filtered derivatives
  2. impedance wrench  f_imp = M*dde + D*de + K*e
  3. net wrench        f_n = f_imp + [f_d - (R_eb f_s - f_com)]
  4. PD force law      f_c = Kp*f_n + Kd*d(f_n)/dt
  5. joint torques     tau = J^T f_c
  6. virtual dynamics  qdd = H^-1 tau, damped semi-implicit integration

Task-space wrenches are mapped through H^-1 J^T rather than any inverse of J,
so commands stay bounded near kinematic singularities. Two command streams
feed the pipeline: an interpolated stream (pure target tracking) and an
incremental stream (current pose plus the predicted increment); a binary
parameter beta, slaved to the gripper state with hysteresis, selects between
them. A reserved blend_alpha is fixed at 1.0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo


@dataclass
class ImpedanceGains:
    """Diagonal task-space gains plus the integration parameters."""

    m: np.ndarray
    d: np.ndarray
    k: np.ndarray
    kp: float = 1.0
    kd: float = 0.01
    integ_alpha: float = 0.95
    blend_alpha: float = 1.0  # reserved; only beta switches streams
    dt_virtual: float = 1.0 / 125.0
    qd_max: float = 5.0  # virtual joint-velocity saturation (rad/s)

    def __post_init__(self):
        self.m = np.atleast_1d(np.asarray(self.m, dtype=np.float64))
        self.d = np.atleast_1d(np.asarray(self.d, dtype=np.float64))
        self.k = np.atleast_1d(np.asarray(self.k, dtype=np.float64))
        if np.any(self.m <= 0) or np.any(self.d <= 0) or np.any(self.k <= 0):
            raise ValueError("impedance gains must be positive")
        if not (0.0 < self.integ_alpha <= 1.0):
            raise ValueError("integ_alpha must be in (0, 1]")


def default_gains(task_dim: int = 3) -> ImpedanceGains:
    return ImpedanceGains(
        m=np.ones(task_dim), d=np.full(task_dim, 20.0), k=np.full(task_dim, 100.0)
    )


@dataclass
class WrenchCompensation:
    """Tool-gravity model for sensor compensation (planar: fx, fy, tau)."""

    tool_mass: float = 0.0
    tool_com: np.ndarray = field(default_factory=lambda: np.zeros(2))
    f_desired: np.ndarray = field(default_factory=lambda: np.zeros(3))
    gravity: float = 9.81

    def gravity_wrench_world(self, theta: float) -> np.ndarray:
        """Tool weight expressed at the EE in the world frame."""
        fg = np.array([0.0, -self.tool_mass * self.gravity])
        c, s = np.cos(theta), np.sin(theta)
        com_w = np.array([c * self.tool_com[0] - s * self.tool_com[1],
                          s * self.tool_com[0] + c * self.tool_com[1]])
        tau = com_w[0] * fg[1] - com_w[1] * fg[0]
        return np.array([fg[0], fg[1], tau])

    def expected_sensor_reading(self, theta: float) -> np.ndarray:
        """Ideal static free-space sensor reading in the sensor (EE) frame."""
        w = self.gravity_wrench_world(theta)
        c, s = np.cos(theta), np.sin(theta)
        return np.array([c * w[0] + s * w[1], -s * w[0] + c * w[1], w[2]])

    def external_wrench(self, f_sensor: np.ndarray, theta: float) -> np.ndarray:
        """R_eb f_s - f_com: sensed wrench rotated to world, tool gravity removed."""
        c, s = np.cos(theta), np.sin(theta)
        world = np.array([
            c * f_sensor[0] - s * f_sensor[1],
            s * f_sensor[0] + c * f_sensor[1],
            f_sensor[2],
        ])
        return world - self.gravity_wrench_world(theta)


def interpolate(x_prev: np.ndarray, x_pred: np.ndarray, fraction: float,
                angle_dims: tuple[int, ...] = ()) -> np.ndarray:
    """Linear interpolation between targets; angle dims take the shortest arc."""
    fraction = float(np.clip(fraction, 0.0, 1.0))
    out = x_prev + fraction * (x_pred - x_prev)
    for d in angle_dims:
        out[d] = geo.angle_lerp(x_prev[d], x_pred[d], fraction)
    return out


class SafeStop(Exception):
    pass


class IncrementalImpedanceController:
    """One controller instance per arm.

    The caller supplies kinematics callbacks so tests can inject degenerate
    1-DOF stubs: jacobian_fn(q) -> (task_dim, n), inertia_fn(q) -> (n, n).
    """

    def __init__(self, jacobian_fn, inertia_fn, q0: np.ndarray,
                 gains: ImpedanceGains | None = None,
                 compensation: WrenchCompensation | None = None,
                 control_rate: float = 125.0,
                 target_period: float = 1.0 / 15.0,
                 angle_dims: tuple[int, ...] = (2,),
                 beta_hysteresis: float = 0.050,
                 derivative_cutoff_hz: float = 20.0):
        self.jacobian_fn = jacobian_fn
        self.inertia_fn = inertia_fn
        self.gains = gains if gains is not None else default_gains()
        self.comp = compensation if compensation is not None else WrenchCompensation()
        self.dt = 1.0 / control_rate
        self.target_period = target_period
        self.angle_dims = angle_dims
        self.task_dim = len(self.gains.k)
        self.beta_hysteresis = beta_hysteresis
        tau_f = 1.0 / (2.0 * np.pi * derivative_cutoff_hz)
        self.filter_gain = self.dt / (self.dt + tau_f)

        n = len(np.atleast_1d(q0))
        self.q_cmd = np.asarray(q0, dtype=np.float64).copy()
        self.qd = np.zeros(n)
        self._prev_e = np.zeros(self.task_dim)
        self._de = np.zeros(self.task_dim)
        self._prev_de = np.zeros(self.task_dim)
        self._dde = np.zeros(self.task_dim)
        self._prev_fn = np.zeros(self.task_dim)
        self._dfn = np.zeros(self.task_dim)
        self._have_prev = False

        self._target = None
        self._prev_target = None
        self._x_obs = None
        self._target_time = -np.inf
        self.beta = 0.0
        self._gripper_state = False
        self._gripper_since = -np.inf
        self.safe_stopped = False
        self.stale = False
        self._last_xd = None

    # -- target / gripper interface -----------------------------------------

    def set_target(self, x_pred: np.ndarray, x_obs: np.ndarray, t: float):
        """New policy target plus the pose observed at inference time."""
        self._prev_target = self._target if self._target is not None else np.asarray(
            x_pred, dtype=np.float64).copy()
        self._target = np.asarray(x_pred, dtype=np.float64).copy()
        self._x_obs = np.asarray(x_obs, dtype=np.float64).copy()
        self._target_time = t

    def set_gripper(self, closed: bool, t: float):
        if closed != self._gripper_state:
            self._gripper_state = closed
            self._gripper_since = t

    def _update_beta(self, t: float):
        # beta follows the gripper only after it has held for the hysteresis time
        if t - self._gripper_since >= self.beta_hysteresis:
            self.beta = 1.0 if self._gripper_state else 0.0

    # -- command streams ----------------------------------------------------

    def desired_pose(self, x_now: np.ndarray, t: float) -> np.ndarray:
        if self._target is None:
            return x_now.copy()
        if t - self._target_time > 2.0 * self.target_period:
            self.stale = True
            return self._last_xd if self._last_xd is not None else x_now.copy()
        self.stale = False
        frac = (t - self._target_time) / self.target_period
        x_intp = interpolate(self._prev_target, self._target, frac, self.angle_dims)
        x_inc = x_now + (self._target - self._x_obs)
        for d in self.angle_dims:
            x_inc[d] = x_now[d] + geo.wrap_angle(self._target[d] - self._x_obs[d])
        self._update_beta(t)
        x_d = (1.0 - self.beta) * x_intp + self.beta * x_inc
        for d in self.angle_dims:
            x_d[d] = x_intp[d] + self.beta * geo.wrap_angle(x_inc[d] - x_intp[d])
        self._last_xd = x_d.copy()
        return x_d

    # -- the control law ----------------------------------------------------

    def tick(self, x_now: np.ndarray, q_now: np.ndarray, f_sensor: np.ndarray,
             t: float) -> np.ndarray:
        """One 125 Hz step; returns the joint position command."""
        if self.safe_stopped:
            return self.q_cmd.copy()
        try:
            x_d = self.desired_pose(np.asarray(x_now, dtype=np.float64), t)
            q_cmd = self.impedance_step(x_d, np.asarray(x_now, dtype=np.float64),
                                        np.asarray(q_now, dtype=np.float64),
                                        np.asarray(f_sensor, dtype=np.float64))
            if not np.all(np.isfinite(q_cmd)):
                raise SafeStop("non-finite joint command")
        except SafeStop:
            self.safe_stopped = True
            self.qd = np.zeros_like(self.qd)
            return self.q_cmd.copy()
        self.q_cmd = q_cmd
        return q_cmd.copy()

    def impedance_step(self, x_d, x_now, q_now, f_sensor) -> np.ndarray:
        g = self.gains
        e = x_d - x_now
        for d in self.angle_dims:
            e[d] = geo.wrap_angle(e[d])
        if not np.all(np.isfinite(e)) or not np.all(np.isfinite(f_sensor)):
            raise SafeStop("non-finite controller input")

        if self._have_prev:
            raw_de = (e - self._prev_e) / self.dt
            self._de = self._de + self.filter_gain * (raw_de - self._de)
            raw_dde = (self._de - self._prev_de) / self.dt
            self._dde = self._dde + self.filter_gain * (raw_dde - self._dde)
        self._prev_e = e.copy()
        self._prev_de = self._de.copy()

        f_imp = g.m * self._dde + g.d * self._de + g.k * e
        theta = x_now[self.angle_dims[0]] if self.angle_dims else 0.0
        external = self.comp.external_wrench(f_sensor, theta) if self.task_dim == 3 \
            else f_sensor
        f_n = f_imp + (self.comp.f_desired[: self.task_dim] - external[: self.task_dim])

        if self._have_prev:
            raw_dfn = (f_n - self._prev_fn) / self.dt
            self._dfn = self._dfn + self.filter_gain * (raw_dfn - self._dfn)
        self._prev_fn = f_n.copy()
        self._have_prev = True

        f_c = g.kp * f_n + g.kd * self._dfn
        jac = self.jacobian_fn(q_now)
        tau = jac.T @ f_c
        h = self.inertia_fn(q_now)
        qdd = np.linalg.solve(h, tau)
        self.last_f_imp = f_imp
        self.last_f_n = f_n
        self.last_tau = tau

        # damped integration: position uses the pre-update velocity; the
        # velocity state leaks by alpha each tick, which is what makes the
        # virtual dynamics dissipative (bounded commands near singularities)
        q_cmd = self.q_cmd + g.integ_alpha * (self.qd * g.dt_virtual)
        self.qd = g.integ_alpha * (self.qd + qdd * g.dt_virtual)
        self.qd = np.clip(self.qd, -g.qd_max, g.qd_max)
        return q_cmd
