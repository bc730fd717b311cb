"""Controller tests, anchored by an independent scalar reimplementation of the
six-equation pipeline (written first, against the documented law, without
reference to the controller's internals)."""

import numpy as np
import pytest

from phaseloop import geometry as geo
from phaseloop.controller import (
    ImpedanceGains,
    IncrementalImpedanceController,
    WrenchCompensation,
    default_gains,
    interpolate,
)

DT = 1.0 / 125.0


def scalar_oracle(x_d_seq, m, d, k, kp, kd, alpha, dtv, dt=DT, cutoff_hz=20.0,
                  qd_max=5.0):
    """Independent 1-DOF rollout of the pipeline with J = H = 1, f_s = f_d = 0.

    Derivatives are first-order backward differences passed through a
    first-order smoother with gain dt / (dt + 1/(2*pi*fc)); integration damps
    the leaky velocity state by alpha (position uses the pre-update velocity)
    and saturates it at qd_max.
    """
    a = dt / (dt + 1.0 / (2.0 * np.pi * cutoff_hz))
    q_cmd, qd, x = 0.0, 0.0, 0.0
    prev_e = de = prev_de = dde = prev_fn = dfn = 0.0
    have_prev = False
    xs = []
    for x_d in x_d_seq:
        e = x_d - x
        if have_prev:
            raw_de = (e - prev_e) / dt
            de = de + a * (raw_de - de)
            raw_dde = (de - prev_de) / dt
            dde = dde + a * (raw_dde - dde)
        prev_e = e
        prev_de = de
        f_imp = m * dde + d * de + k * e
        f_n = f_imp
        if have_prev:
            raw_dfn = (f_n - prev_fn) / dt
            dfn = dfn + a * (raw_dfn - dfn)
        prev_fn = f_n
        have_prev = True
        f_c = kp * f_n + kd * dfn
        qdd = f_c  # tau = J^T f_c = f_c ; qdd = H^-1 tau = tau
        q_cmd = q_cmd + alpha * (qd * dtv)
        qd = alpha * (qd + qdd * dtv)  # leaky velocity state: the damping
        qd = min(max(qd, -qd_max), qd_max)
        x = q_cmd  # kinematic plant tracks the command exactly
        xs.append(x)
    return np.asarray(xs)


def one_dof_controller(gains=None):
    gains = gains or ImpedanceGains(m=[1.0], d=[20.0], k=[100.0])
    return IncrementalImpedanceController(
        jacobian_fn=lambda q: np.array([[1.0]]),
        inertia_fn=lambda q: np.array([[1.0]]),
        q0=np.zeros(1),
        gains=gains,
        angle_dims=(),
    )


def run_one_dof(ctrl, target, n_steps):
    x = np.zeros(1)
    xs = []
    for i in range(n_steps):
        t = i * DT
        if i % 8 == 0:  # refresh the target every policy-ish period
            ctrl.set_target(np.array([target]), x.copy(), t)
        q = ctrl.tick(x, ctrl.q_cmd, np.zeros(1), t)
        x = q.copy()
        xs.append(x[0])
    return np.asarray(xs)


class TestScalarOracleEquivalence:
    def test_step_trajectory_matches_oracle_1000_steps(self):
        target = 0.05
        xs = run_one_dof(one_dof_controller(), target, 1000)
        oracle = scalar_oracle([target] * 1000, m=1.0, d=20.0, k=100.0,
                               kp=1.0, kd=0.01, alpha=0.95, dtv=DT)
        assert np.max(np.abs(xs - oracle)) < 1e-9

    def test_varying_target_matches_oracle(self):
        # drive the law directly with an arbitrary desired-pose sequence
        rng = np.random.default_rng(0)
        x_d_seq = np.cumsum(rng.normal(0.0, 0.002, size=1000))
        ctrl = one_dof_controller()
        x = np.zeros(1)
        xs = []
        for x_d in x_d_seq:
            q = ctrl.impedance_step(np.array([x_d]), x, ctrl.q_cmd, np.zeros(1))
            ctrl.q_cmd = q
            x = q.copy()
            xs.append(x[0])
        oracle = scalar_oracle(x_d_seq, 1.0, 20.0, 100.0, 1.0, 0.01, 0.95, DT)
        assert np.max(np.abs(np.asarray(xs) - oracle)) < 1e-9


class TestStability:
    def test_step_settles_under_one_second_overshoot_bounded(self):
        target = 0.05
        xs = run_one_dof(one_dof_controller(), target, 750)  # 6 s
        err = np.abs(xs - target)
        settle_idx = int(round(1.0 / DT))
        assert np.all(err[settle_idx:] < 1e-3), f"error at 1 s: {err[settle_idx]:.2e}"
        overshoot = (xs.max() - target) / target
        assert overshoot < 0.20, f"overshoot {overshoot:.1%}"


class TestImpedanceLaw:
    def test_static_case_unit_force(self):
        ctrl = one_dof_controller()
        ctrl.set_target(np.array([0.01]), np.zeros(1), 0.0)
        ctrl.tick(np.zeros(1), np.zeros(1), np.zeros(1), 0.0)
        # first tick has zero derivative estimates: f_imp = K * e = 100 * 0.01
        assert ctrl.last_f_imp[0] == pytest.approx(1.0)

    def test_free_space_tool_compensation_cancels(self):
        comp = WrenchCompensation(tool_mass=1.0, tool_com=np.array([0.03, 0.0]))
        for theta in np.linspace(0.0, 2.0 * np.pi, 73):
            reading = comp.expected_sensor_reading(theta)
            np.testing.assert_allclose(
                comp.external_wrench(reading, theta), np.zeros(3), atol=1e-9
            )

    def test_level_tool_fn_equals_fimp(self):
        comp = WrenchCompensation(tool_mass=1.0, tool_com=np.zeros(2))
        arm = geo.default_arm()
        ctrl = IncrementalImpedanceController(
            jacobian_fn=lambda q: geo.jacobian(arm, q),
            inertia_fn=lambda q: geo.inertia_matrix(arm, q),
            q0=np.array([0.3, 0.5, -0.2]),
            compensation=comp,
        )
        x = geo.fk(arm, ctrl.q_cmd)
        ctrl.set_target(x + np.array([0.01, 0.0, 0.0]), x, 0.0)
        f_sensor = comp.expected_sensor_reading(x[2])
        ctrl.tick(x, ctrl.q_cmd, f_sensor, 0.0)
        np.testing.assert_allclose(ctrl.last_f_n, ctrl.last_f_imp, atol=1e-12)


class TestHybridBlend:
    def make(self):
        arm = geo.default_arm()
        ctrl = IncrementalImpedanceController(
            jacobian_fn=lambda q: geo.jacobian(arm, q),
            inertia_fn=lambda q: geo.inertia_matrix(arm, q),
            q0=np.array([0.3, 0.5, -0.2]),
        )
        return arm, ctrl

    def test_gripper_open_pure_interpolation(self):
        _, ctrl = self.make()
        x_obs = np.array([0.1, 0.9, 0.0])
        x_pred = np.array([0.2, 1.0, 0.1])
        ctrl.set_gripper(False, -1.0)
        ctrl.set_target(x_pred, x_obs, 0.0)
        x_now = np.array([0.15, 0.95, 0.05])  # pose drifted from x_obs
        t = 0.5 / 15.0
        x_d = ctrl.desired_pose(x_now, t)
        expect = interpolate(x_pred, x_pred, 0.5, (2,))  # prev target == target
        np.testing.assert_allclose(x_d, expect, atol=1e-12)

    def test_gripper_closed_incremental(self):
        _, ctrl = self.make()
        x_obs = np.array([0.1, 0.9, 0.0])
        x_pred = np.array([0.2, 1.0, 0.1])
        ctrl.set_gripper(True, -1.0)
        ctrl.set_target(x_pred, x_obs, 0.0)
        x_now = np.array([0.15, 0.95, 0.05])
        x_d = ctrl.desired_pose(x_now, 0.01)
        np.testing.assert_allclose(x_d, x_now + (x_pred - x_obs), atol=1e-12)

    def test_zero_increment_both_modes(self):
        for closed in (False, True):
            _, ctrl = self.make()
            pose = np.array([0.1, 0.9, 0.2])
            ctrl.set_gripper(closed, -1.0)
            ctrl.set_target(pose.copy(), pose.copy(), 0.0)
            x_d = ctrl.desired_pose(pose.copy(), 0.01)
            np.testing.assert_allclose(x_d, pose, atol=1e-12)

    def test_beta_hysteresis_delays_switch(self):
        _, ctrl = self.make()
        x = np.array([0.1, 0.9, 0.0])
        ctrl.set_target(x, x, 0.0)
        ctrl.set_gripper(True, 0.0)
        ctrl.desired_pose(x, 0.02)  # 20 ms < 50 ms hysteresis
        assert ctrl.beta == 0.0
        ctrl.desired_pose(x, 0.06)
        assert ctrl.beta == 1.0

    def test_stale_target_holds_and_flags(self):
        _, ctrl = self.make()
        x = np.array([0.1, 0.9, 0.0])
        ctrl.set_target(np.array([0.2, 1.0, 0.0]), x, 0.0)
        ctrl.desired_pose(x, 0.05)
        assert not ctrl.stale
        held = ctrl.desired_pose(x, 1.0)  # far beyond 2 inference periods
        assert ctrl.stale
        np.testing.assert_allclose(held, ctrl._last_xd)


class TestInterpolate:
    def test_endpoints(self):
        a, b = np.array([0.0, 0.0]), np.array([0.1, 0.2])
        np.testing.assert_allclose(interpolate(a, b, 0.0), a)
        np.testing.assert_allclose(interpolate(a, b, 1.0), b)

    def test_midpoint(self):
        a, b = np.array([0.0]), np.array([0.1])
        assert interpolate(a, b, 0.5)[0] == pytest.approx(0.05)

    def test_125hz_samples_monotone(self):
        a, b = np.array([0.0]), np.array([0.1])
        fracs = np.arange(0, 9) / 8.0  # one 15 Hz period at 125 Hz
        vals = [interpolate(a, b, f)[0] for f in fracs]
        assert all(v2 >= v1 for v1, v2 in zip(vals, vals[1:]))

    def test_angle_wraps_shortest_path(self):
        a = np.array([0.0, 3.0])
        b = np.array([0.0, -3.0])
        mid = interpolate(a, b, 0.5, angle_dims=(1,))
        assert abs(geo.wrap_angle(mid[1] - np.pi)) < 1e-9


class TestSingularitySafety:
    VMAX_PLANT = 3.0  # the simulated arm's tracking speed limit, rad/s

    def track(self, q_arm, q_cmd):
        step = np.clip(q_cmd - q_arm, -self.VMAX_PLANT * DT, self.VMAX_PLANT * DT)
        return q_arm + step

    def test_virtual_dynamics_bounded_where_jinv_foil_diverges(self):
        arm = geo.default_arm()
        gains = default_gains()
        ctrl = IncrementalImpedanceController(
            jacobian_fn=lambda q: geo.jacobian(arm, q),
            inertia_fn=lambda q: geo.inertia_matrix(arm, q),
            q0=np.array([0.4, -0.6, 0.3]),
            gains=gains,
        )
        reach = arm.link_lengths.sum()
        target = np.array([arm.base[0] + reach + 0.1, arm.base[1], 0.0])
        max_qd = 0.0
        min_sigma = np.inf
        q = ctrl.q_cmd.copy()
        for i in range(1500):
            t = i * DT
            x = geo.fk(arm, q)
            if i % 8 == 0:
                ctrl.set_target(target, x, t)
            q_cmd = ctrl.tick(x, q, np.zeros(3), t)
            q = self.track(q, q_cmd)
            max_qd = max(max_qd, np.max(np.abs(ctrl.qd)))
            sigma = np.linalg.svd(geo.jacobian(arm, q)[:2], compute_uv=False)
            min_sigma = min(min_sigma, sigma[-1])
        assert max_qd < 10.0, f"virtual joint velocity reached {max_qd:.1f} rad/s"
        # the arm was in fact driven deep into the near-singular zone
        assert min_sigma < 0.15, f"smallest positional singular value {min_sigma:.3f}"

        # resolved-rate foil: qdot = J^-1 xdot blows up approaching full reach
        q = np.array([0.4, -0.6, 0.3])
        foil_max = 0.0
        for i in range(1500):
            x = geo.fk(arm, q)
            jac = geo.jacobian(arm, q)
            xdot = 5.0 * (target - x)
            xdot[2] = geo.wrap_angle(xdot[2])
            try:
                qdot = np.linalg.solve(jac, xdot)
            except np.linalg.LinAlgError:
                foil_max = np.inf
                break
            foil_max = max(foil_max, np.max(np.abs(qdot)))
            q = q + DT * np.clip(qdot, -1e6, 1e6)
            if not np.all(np.isfinite(q)):
                foil_max = np.inf
                break
        assert foil_max > 100.0, f"foil stayed at {foil_max:.1f} rad/s"


class TestSafeStop:
    def test_nan_sensor_freezes_command(self):
        ctrl = one_dof_controller()
        ctrl.set_target(np.array([0.05]), np.zeros(1), 0.0)
        q1 = ctrl.tick(np.zeros(1), np.zeros(1), np.zeros(1), 0.0)
        q2 = ctrl.tick(np.zeros(1), q1, np.array([np.nan]), DT)
        assert ctrl.safe_stopped
        np.testing.assert_array_equal(q2, ctrl.q_cmd)
        np.testing.assert_array_equal(ctrl.qd, np.zeros(1))
        q3 = ctrl.tick(np.zeros(1), q2, np.zeros(1), 2 * DT)
        np.testing.assert_array_equal(q3, q2)

    def test_gains_validation(self):
        with pytest.raises(ValueError):
            ImpedanceGains(m=[0.0], d=[1.0], k=[1.0])
        with pytest.raises(ValueError):
            ImpedanceGains(m=[1.0], d=[1.0], k=[1.0], integ_alpha=0.0)
