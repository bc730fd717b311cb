"""Deterministic 2D world: dual 3-link planar arms, an elastic loop of point
masses (the garment-collar analog), a peg to drape it over, penalty contacts,
grasp constraints, failure injection, and wrench sensing.

Fixed-step semi-implicit integration at the physics rate; identical seeds and
command streams give bit-identical trajectories. All randomness is confined
to world construction and injector arming.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict

import numpy as np

from .. import geometry as geo

PHYSICS_RATE = 500.0
CONTROL_RATE = 125.0
POLICY_RATE = 15.0
RECORD_RATE = 30.0

PHASE_NAMES = {
    0: "approach", 1: "insert-left", 2: "insert-right", 3: "lift-center",
    4: "release", 5: "grasp-right", 6: "drag-left", 7: "home",
    8: "shake", 9: "retreat", 10: "mid-air-catch",
}
N_PHASES = 11
HANG_TERMINAL = 4
TAKEOFF_TERMINAL = 7
TASK_HANG = 0
TASK_TAKEOFF = 1


@dataclass
class WorldConfig:
    gravity: float = 9.81
    physics_dt: float = 1.0 / PHYSICS_RATE
    # loop (garment-collar analog)
    n_nodes: int = 24
    loop_radius: float = 0.10
    node_mass: float = 0.008
    k_structural: float = 150.0
    k_bending: float = 5.0
    spring_damping: float = 0.6
    velocity_damping: float = 1.2  # global, 1/s
    # peg capsule
    peg_a: tuple = (0.0, 1.0)
    peg_b: tuple = (0.015, 1.0)
    peg_radius: float = 0.016
    k_contact: float = 900.0
    contact_damping: float = 3.0
    friction_mu: float = 0.5
    ground_y: float = 0.0
    # arms / grasping
    left_base: tuple = (-0.70, 0.85)
    right_base: tuple = (0.70, 0.85)
    arm_vmax: float = 3.0  # rad/s tracking limit
    grasp_radius: float = 0.05
    k_grasp: float = 300.0
    grasp_damping: float = 4.0
    grasp_force_cap: float = 25.0
    # snag latch
    latch_radius: float = 0.055
    k_latch: float = 2000.0
    latch_damping: float = 8.0
    latch_cycle_high: float = 3.0
    latch_cycle_low: float = 1.0
    latch_release_cycles: int = 3
    # misalignment
    misalign_offset: float = 0.06
    misalign_zone_halfwidth: float = 0.12
    neutral_center: tuple = (-0.15, 1.25)
    neutral_radius: float = 0.12
    anchor_decay_rate: float = 6.0  # 1/s, inside the neutral zone
    # slide
    slide_height_margin: float = 0.08
    # stability guard
    ke_abort: float = 50.0

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "WorldConfig":
        d = json.loads(text)
        for key in ("peg_a", "peg_b", "left_base", "right_base", "neutral_center"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


# loop node indices used by the tasks (angles measured from +x, ccw)
GRASP_NODE_LEFT = 7   # ~105 degrees, upper-left of the collar
GRASP_NODE_RIGHT = 5  # ~75 degrees, upper-right


@dataclass
class Grasp:
    node: int = -1
    offset: np.ndarray = field(default_factory=lambda: np.zeros(2))

    @property
    def active(self) -> bool:
        return self.node >= 0


class FailureInjector:
    """Seed-deterministic failure arming; at most one trigger per episode."""

    KINDS = ("snag", "misalign", "slide")

    def __init__(self, kind: str | None, seed: int = 0):
        if kind is not None and kind not in self.KINDS:
            raise ValueError(f"unknown failure kind {kind!r}")
        self.kind = kind
        self.rng = np.random.default_rng(np.random.SeedSequence([seed, 0xFA1]))
        self.triggered = False
        self.trigger_time = -1.0
        self.resolved = False
        # misalign direction drawn at arm time so it is seed-deterministic
        self.misalign_sign = 1.0 if self.rng.random() < 0.5 else -1.0

    def snapshot_state(self):
        return (self.kind, self.triggered, self.trigger_time, self.resolved,
                self.misalign_sign)


class World:
    def __init__(self, config: WorldConfig | None = None, seed: int = 0,
                 task: int = TASK_HANG):
        self.cfg = config if config is not None else WorldConfig()
        self.seed = seed
        self.task = task
        self.rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5EED]))
        c = self.cfg

        self.left_arm = geo.default_arm(c.left_base)
        self.right_arm = geo.default_arm(c.right_base)
        self.arms = (self.left_arm, self.right_arm)

        self.q = [np.zeros(3), np.zeros(3)]          # tracked joint state
        self.q_cmd = [np.zeros(3), np.zeros(3)]      # commanded joint targets
        self.gripper_cmd = [False, False]
        self.grasps = [Grasp(), Grasp()]
        self._prev_ee = [None, None]
        self.ee_vel = [np.zeros(3), np.zeros(3)]

        angles = 2.0 * np.pi * np.arange(c.n_nodes) / c.n_nodes
        center = np.array([c.neutral_center[0], c.neutral_center[1] - 0.25])
        self.nodes = center + c.loop_radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
        self.vels = np.zeros_like(self.nodes)
        seg = 2.0 * c.loop_radius * np.sin(np.pi / c.n_nodes)
        self.rest_structural = seg
        self.rest_bending = 2.0 * c.loop_radius * np.sin(2.0 * np.pi / c.n_nodes)

        self.injector = FailureInjector(None)
        self.latch_node = -1
        self.latch_anchor = np.zeros(2)
        self._latch_cycles = 0
        self._latch_above_high = False
        self.latch_force = np.zeros(2)

        self.step_count = 0
        self.t = 0.0
        self.unstable = False

        self._i_next = np.arange(1, c.n_nodes + 1) % c.n_nodes
        self._i_next2 = np.arange(2, c.n_nodes + 2) % c.n_nodes
        self._force_buf = np.zeros_like(self.nodes)
        self._vel_keep = max(0.0, 1.0 - c.velocity_damping * c.physics_dt)
        self._last_grasp_forces = [np.zeros(2), np.zeros(2)]
        self._peg_pad = c.peg_radius + 0.02

    # -- configuration helpers ------------------------------------------------

    @property
    def peg_a(self) -> np.ndarray:
        return np.asarray(self.cfg.peg_a)

    @property
    def peg_b(self) -> np.ndarray:
        return np.asarray(self.cfg.peg_b)

    @property
    def peg_center(self) -> np.ndarray:
        return 0.5 * (self.peg_a + self.peg_b)

    def ee_pose(self, side: int) -> np.ndarray:
        cache = getattr(self, "_ee_pose_cache", None)
        if cache is not None and cache[side] is not None:
            return cache[side]
        return geo.fk(self.arms[side], self.q[side])

    def set_joint_targets(self, side: int, q_cmd: np.ndarray):
        self.q_cmd[side] = np.asarray(q_cmd, dtype=np.float64).copy()

    def set_gripper(self, side: int, closed: bool):
        self.gripper_cmd[side] = bool(closed)

    def place_arms_ik(self, left_pose, right_pose):
        """Initialize joint state (and commands) from EE poses."""
        self.q[0] = geo.ik_3link(self.left_arm, *left_pose, elbow=+1.0)
        self.q[1] = geo.ik_3link(self.right_arm, *right_pose, elbow=-1.0)
        self.q_cmd = [self.q[0].copy(), self.q[1].copy()]
        self._prev_ee = [None, None]

    def attach_grasp(self, side: int, node: int):
        self.grasps[side] = Grasp(node=node, offset=np.zeros(2))
        self.gripper_cmd[side] = True

    def inject(self, kind: str | None, seed: int = 0):
        self.injector = FailureInjector(kind, seed)

    def loop_com(self) -> np.ndarray:
        return self.nodes.mean(axis=0)

    def kinetic_energy(self) -> float:
        return float(0.5 * self.cfg.node_mass * np.sum(self.vels ** 2))

    # -- physics step ----------------------------------------------------------

    def step(self, n: int = 1):
        for _ in range(n):
            self._substep()

    def _substep(self):
        c = self.cfg
        dt = c.physics_dt
        vmax_dt = c.arm_vmax * dt

        # arms track their commanded joints under a velocity clamp
        for side in (0, 1):
            q = self.q[side]
            dq = self.q_cmd[side] - q
            np.clip(dq, -vmax_dt, vmax_dt, out=dq)
            q += dq
            arm = self.arms[side]
            np.clip(q, arm.joint_limits[:, 0], arm.joint_limits[:, 1], out=q)
            pose = _fk3(arm, q)
            prev = self._prev_ee[side]
            if prev is None:
                self.ee_vel[side] = np.zeros(3)
            else:
                self.ee_vel[side] = (pose - prev) / dt
            self._prev_ee[side] = pose
        self._ee_pose_cache = [self._prev_ee[0], self._prev_ee[1]]

        if (self.gripper_cmd[0] != self.grasps[0].active
                or self.gripper_cmd[1] != self.grasps[1].active):
            self._update_grasp_attachments()

        forces = self._force_buf
        forces[:, 0] = 0.0
        forces[:, 1] = -c.node_mass * c.gravity
        self._spring_forces(forces)
        grasp_forces = self._grasp_forces(forces)
        self._last_grasp_forces = grasp_forces
        self._contact_forces(forces)
        if self.latch_node >= 0:
            self._latch_forces(forces)
        self._injector_update()

        self.vels += (dt / c.node_mass) * forces
        self.vels *= self._vel_keep
        self.nodes += dt * self.vels

        self.step_count += 1
        self.t = self.step_count * dt
        if self.step_count % 100 == 0 and self.kinetic_energy() > c.ke_abort:
            self.unstable = True

    def _update_grasp_attachments(self):
        c = self.cfg
        for side in (0, 1):
            g = self.grasps[side]
            if self.gripper_cmd[side] and not g.active:
                ee = self.ee_pose(side)[:2]
                d = np.linalg.norm(self.nodes - ee, axis=1)
                k = int(np.argmin(d))
                if d[k] < c.grasp_radius:
                    self.grasps[side] = Grasp(node=k, offset=np.zeros(2))
            elif not self.gripper_cmd[side] and g.active:
                self.grasps[side] = Grasp()

    def _spring_forces(self, forces: np.ndarray):
        c = self.cfg
        for idx, rest, k in ((self._i_next, self.rest_structural, c.k_structural),
                             (self._i_next2, self.rest_bending, c.k_bending)):
            d = self.nodes[idx] - self.nodes
            lengths = np.linalg.norm(d, axis=1)
            lengths = np.maximum(lengths, 1e-9)
            unit = d / lengths[:, None]
            rel_v = np.einsum("ij,ij->i", self.vels[idx] - self.vels, unit)
            fmag = k * (lengths - rest) + c.spring_damping * rel_v
            f = fmag[:, None] * unit
            forces += f
            forces[idx] -= f  # idx is a permutation: no duplicate indices

    def _grasp_forces(self, forces: np.ndarray) -> list[np.ndarray]:
        c = self.cfg
        out = []
        for side in (0, 1):
            g = self.grasps[side]
            if not g.active:
                out.append(np.zeros(2))
                continue
            ee = self.ee_pose(side)
            target = ee[:2] + g.offset
            node = g.node
            f = c.k_grasp * (target - self.nodes[node]) \
                + c.grasp_damping * (self.ee_vel[side][:2] - self.vels[node])
            norm = np.hypot(f[0], f[1])
            if norm > c.grasp_force_cap:
                f = f * (c.grasp_force_cap / norm)
            forces[node] += f
            out.append(f)
        return out

    def _peg_contact_at(self, pts: np.ndarray, vels: np.ndarray) -> np.ndarray:
        """Penalty + friction forces of the peg capsule on the given points."""
        c = self.cfg
        a, b = self.peg_a, self.peg_b
        ab = b - a
        denom = float(ab @ ab)
        if denom > 1e-12:
            s = np.clip(((pts - a) @ ab) / denom, 0.0, 1.0)
        else:
            s = np.zeros(len(pts))
        closest = a + s[:, None] * ab
        d = pts - closest
        dist = np.linalg.norm(d, axis=1)
        pen = c.peg_radius - dist
        out = np.zeros_like(pts)
        mask = pen > 0
        if mask.any():
            normal = d[mask] / np.maximum(dist[mask], 1e-9)[:, None]
            vn = np.einsum("ij,ij->i", vels[mask], normal)
            fn = np.maximum(c.k_contact * pen[mask] - c.contact_damping * vn, 0.0)
            tangent = np.stack([-normal[:, 1], normal[:, 0]], axis=1)
            vt = np.einsum("ij,ij->i", vels[mask], tangent)
            # Coulomb-style friction: viscous model capped at mu * N
            ft = np.clip(-25.0 * vt, -c.friction_mu * fn, c.friction_mu * fn)
            out[mask] = fn[:, None] * normal + ft[:, None] * tangent
        return out

    def _contact_forces(self, forces: np.ndarray):
        c = self.cfg
        pad = self._peg_pad + self.rest_structural
        near_x = np.abs(self.nodes[:, 0] - self.peg_center[0]) < pad
        if near_x.any():
            near = near_x & (np.abs(self.nodes[:, 1] - self.peg_center[1]) < pad)
            if near.any():
                forces += self._peg_contact_at(self.nodes, self.vels)
                # edge midpoints as extra contact points so the thin peg cannot
                # pass between nodes; midpoint force splits between endpoints
                mids = 0.5 * (self.nodes + self.nodes[self._i_next])
                mid_v = 0.5 * (self.vels + self.vels[self._i_next])
                f_mid = self._peg_contact_at(mids, mid_v)
                f_mid *= 0.5
                forces += f_mid
                forces[self._i_next] += f_mid

        ys = self.nodes[:, 1]
        if ys.min() < c.ground_y:
            below = ys < c.ground_y
            pen_g = c.ground_y - ys[below]
            fy = c.k_contact * pen_g - c.contact_damping * self.vels[below, 1]
            forces[below, 1] += np.maximum(fy, 0.0)
            forces[below, 0] -= 2.0 * self.vels[below, 0]  # ground drag

    def _latch_forces(self, forces: np.ndarray):
        c = self.cfg
        node = self.latch_node
        f = c.k_latch * (self.latch_anchor - self.nodes[node]) \
            - c.latch_damping * self.vels[node]
        forces[node] += f
        self.latch_force = f
        # cycle counting with hysteresis: each high->low excursion is a shake
        mag = float(np.hypot(f[0], f[1]))
        if not self._latch_above_high and mag > c.latch_cycle_high:
            self._latch_above_high = True
        elif self._latch_above_high and mag < c.latch_cycle_low:
            self._latch_above_high = False
            self._latch_cycles += 1
            if self._latch_cycles >= c.latch_release_cycles:
                self._release_latch()
        # a snag only persists under tension: letting go frees it
        if self.latch_node >= 0 and not any(g.active for g in self.grasps):
            self._release_latch()

    def _release_latch(self):
        self.latch_node = -1
        self.injector.resolved = True

    # -- failure injection ------------------------------------------------------

    def _injector_update(self):
        inj = self.injector
        if inj.kind is None or inj.triggered:
            self._anchor_decay()
            return
        c = self.cfg
        if inj.kind == "snag":
            both_grasping = all(g.active for g in self.grasps)
            descending = (self.ee_vel[0][1] + self.ee_vel[1][1]) * 0.5 < -0.01
            if both_grasping and descending:
                d = np.linalg.norm(self.nodes - self.peg_center, axis=1)
                k = int(np.argmin(d))
                if d[k] < c.latch_radius:
                    self.latch_node = k
                    self.latch_anchor = self.nodes[k].copy()
                    self._latch_cycles = 0
                    self._latch_above_high = False
                    inj.triggered = True
                    inj.trigger_time = self.t
        elif inj.kind == "misalign":
            in_zone = all(
                abs(self.ee_pose(s)[0] - self.peg_center[0]) < c.misalign_zone_halfwidth
                for s in (0, 1)
            )
            if in_zone and all(g.active for g in self.grasps):
                shift = np.array([inj.misalign_sign * c.misalign_offset, 0.0])
                for g in self.grasps:
                    g.offset = g.offset + shift
                inj.triggered = True
                inj.trigger_time = self.t
        elif inj.kind == "slide":
            held = any(g.active for g in self.grasps)
            above = self.loop_com()[1] > self.peg_center[1] + c.slide_height_margin
            if held and above and self.task == TASK_TAKEOFF:
                for side in (0, 1):
                    self.grasps[side] = Grasp()
                inj.triggered = True
                inj.trigger_time = self.t
        self._anchor_decay()

    def _anchor_decay(self):
        """Grasp-slip offsets relax while the arms dwell in the neutral zone
        (the object settles back into the gripper under gravity)."""
        if all(abs(g.offset[0]) + abs(g.offset[1]) < 1e-6 for g in self.grasps):
            return
        c = self.cfg
        cx, cy = c.neutral_center
        for s2 in (0, 1):
            pose = self.ee_pose(s2)
            if np.hypot(pose[0] - cx, pose[1] - cy) >= c.neutral_radius:
                return
        decay = max(0.0, 1.0 - c.anchor_decay_rate * c.physics_dt)
        for g in self.grasps:
            if g.active:
                g.offset = g.offset * decay

    # -- sensing -----------------------------------------------------------------

    def wrench_sensor(self, side: int) -> np.ndarray:
        """Sensor-frame wrench (fx, fy, tau): grasp reaction plus tool gravity."""
        theta = self.ee_pose(side)[2]
        arm = self.arms[side]
        comp_w = _tool_gravity_wrench(arm, theta, self.cfg.gravity)
        gf = self._last_grasp_forces[side]
        wx = -gf[0] + comp_w[0]  # reaction: force the object exerts on the arm
        wy = -gf[1] + comp_w[1]
        cth, sth = np.cos(theta), np.sin(theta)
        return np.array([cth * wx + sth * wy, -sth * wx + cth * wy, comp_w[2]])

    # -- determinism / persistence -------------------------------------------------

    def state_hash(self) -> str:
        h = hashlib.sha256()
        for arr in (self.nodes, self.vels, *self.q, *self.q_cmd):
            h.update(np.ascontiguousarray(arr).tobytes())
        for g in self.grasps:
            h.update(np.int64(g.node).tobytes())
            h.update(np.ascontiguousarray(g.offset).tobytes())
        h.update(np.int64(self.latch_node).tobytes())
        h.update(np.int64(self.step_count).tobytes())
        return h.hexdigest()

    SNAPSHOT_VERSION = 1

    def snapshot(self) -> bytes:
        header = {
            "version": self.SNAPSHOT_VERSION,
            "seed": self.seed,
            "task": self.task,
            "step_count": self.step_count,
            "gripper_cmd": [bool(b) for b in self.gripper_cmd],
            "grasp_nodes": [g.node for g in self.grasps],
            "latch_node": self.latch_node,
            "latch_cycles": self._latch_cycles,
            "latch_above_high": self._latch_above_high,
            "unstable": self.unstable,
            "injector": {
                "kind": self.injector.kind,
                "triggered": self.injector.triggered,
                "trigger_time": self.injector.trigger_time,
                "resolved": self.injector.resolved,
                "misalign_sign": self.injector.misalign_sign,
            },
            "config": json.loads(self.cfg.to_json()),
        }
        blob = b"".join(
            np.ascontiguousarray(a, dtype=np.float64).tobytes()
            for a in (self.nodes, self.vels, self.q[0], self.q[1],
                      self.q_cmd[0], self.q_cmd[1],
                      self.grasps[0].offset, self.grasps[1].offset,
                      self.latch_anchor)
        )
        head = json.dumps(header, sort_keys=True).encode()
        return b"WLD1" + len(head).to_bytes(4, "little") + head + blob

    @classmethod
    def restore(cls, data: bytes) -> "World":
        if data[:4] != b"WLD1":
            raise ValueError("not a world snapshot")
        hlen = int.from_bytes(data[4:8], "little")
        header = json.loads(data[8 : 8 + hlen].decode())
        if header["version"] != cls.SNAPSHOT_VERSION:
            raise ValueError(f"unsupported snapshot version {header['version']}")
        cfg = WorldConfig.from_json(json.dumps(header["config"]))
        w = cls(cfg, seed=header["seed"], task=header["task"])
        n = cfg.n_nodes
        sizes = [(n, 2), (n, 2), (3,), (3,), (3,), (3,), (2,), (2,), (2,)]
        offset = 8 + hlen
        arrays = []
        for shape in sizes:
            count = int(np.prod(shape))
            arrays.append(np.frombuffer(data, dtype=np.float64, count=count,
                                        offset=offset).reshape(shape).copy())
            offset += count * 8
        (w.nodes, w.vels, q0, q1, qc0, qc1, off0, off1, w.latch_anchor) = arrays
        w.q = [q0, q1]
        w.q_cmd = [qc0, qc1]
        w.gripper_cmd = list(header["gripper_cmd"])
        w.grasps = [Grasp(node=header["grasp_nodes"][0], offset=off0),
                    Grasp(node=header["grasp_nodes"][1], offset=off1)]
        w.latch_node = header["latch_node"]
        w._latch_cycles = header["latch_cycles"]
        w._latch_above_high = header["latch_above_high"]
        w.unstable = header["unstable"]
        w.step_count = header["step_count"]
        w.t = w.step_count * cfg.physics_dt
        inj = header["injector"]
        w.injector = FailureInjector(inj["kind"])
        w.injector.triggered = inj["triggered"]
        w.injector.trigger_time = inj["trigger_time"]
        w.injector.resolved = inj["resolved"]
        w.injector.misalign_sign = inj["misalign_sign"]
        for side in (0, 1):
            w._prev_ee[side] = geo.fk(w.arms[side], w.q[side])
        return w


def _fk3(arm: geo.ArmModel, q: np.ndarray) -> np.ndarray:
    """Planar 3-link forward kinematics without intermediate allocation."""
    l1, l2, l3 = arm.link_lengths
    a1 = q[0]
    a2 = a1 + q[1]
    a3 = a2 + q[2]
    x = arm.base[0] + l1 * np.cos(a1) + l2 * np.cos(a2) + l3 * np.cos(a3)
    y = arm.base[1] + l1 * np.sin(a1) + l2 * np.sin(a2) + l3 * np.sin(a3)
    return np.array([x, y, a3])


def _tool_gravity_wrench(arm: geo.ArmModel, theta: float, gravity: float) -> np.ndarray:
    fg = np.array([0.0, -arm.tool_mass * gravity])
    c, s = np.cos(theta), np.sin(theta)
    com_w = np.array([c * arm.tool_com[0] - s * arm.tool_com[1],
                      s * arm.tool_com[0] + c * arm.tool_com[1]])
    tau = com_w[0] * fg[1] - com_w[1] * fg[0]
    return np.array([fg[0], fg[1], tau])
