"""Rotation representations and planar arm kinematics.

The 6D rotation encoding (first two columns of a rotation matrix, recovered
by Gram-Schmidt) is implemented and tested for 3D even though the simulator
is planar; planar poses use a cos/sin pair. Arm kinematics cover forward
kinematics, the task-space Jacobian, and the joint-space inertia matrix used
by the virtual-dynamics mapping in the controller.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


# -- 6D rotation representation ----------------------------------------------

def rot6d_from_matrix(r: np.ndarray) -> np.ndarray:
    """First two columns of a 3x3 rotation matrix, column-major order."""
    r = np.asarray(r, dtype=np.float64)
    if r.shape != (3, 3):
        raise ValueError(f"expected 3x3 matrix, got {r.shape}")
    return r[:, :2].T.reshape(6).copy()


def rot6d_to_matrix(v: np.ndarray) -> np.ndarray:
    """Gram-Schmidt reconstruction: normalize column 1, orthogonalize column 2,
    complete with the cross product. Output is orthonormal with det +1."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (6,):
        raise ValueError(f"expected length-6 vector, got {v.shape}")
    c1, c2 = v[:3], v[3:]
    n1 = np.linalg.norm(c1)
    if n1 < 1e-12:
        raise ValueError("degenerate first column (zero norm)")
    b1 = c1 / n1
    c2p = c2 - (b1 @ c2) * b1
    n2 = np.linalg.norm(c2p)
    if n2 < 1e-12:
        raise ValueError("degenerate columns (parallel or zero)")
    b2 = c2p / n2
    b3 = np.cross(b1, b2)
    return np.stack([b1, b2, b3], axis=1)


def rotation_about_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_from_axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues construction; the independent oracle for rotation tests."""
    a = np.asarray(axis, dtype=np.float64)
    a = a / np.linalg.norm(a)
    kx = np.array([[0, -a[2], a[1]], [a[2], 0, -a[0]], [-a[1], a[0], 0]])
    return np.eye(3) + np.sin(angle) * kx + (1 - np.cos(angle)) * (kx @ kx)


def rot_slerp(r0: np.ndarray, r1: np.ndarray, s: float) -> np.ndarray:
    """Geodesic interpolation between rotation matrices."""
    rel = r0.T @ r1
    angle = np.arccos(np.clip((np.trace(rel) - 1.0) / 2.0, -1.0, 1.0))
    if angle < 1e-12:
        return r0.copy()
    axis = np.array([rel[2, 1] - rel[1, 2], rel[0, 2] - rel[2, 0], rel[1, 0] - rel[0, 1]])
    axis = axis / (2.0 * np.sin(angle))
    return r0 @ rotation_from_axis_angle(axis, s * angle)


# -- planar rotations ----------------------------------------------------------

def angle_to_cs(theta: float) -> np.ndarray:
    return np.array([np.cos(theta), np.sin(theta)])


def cs_to_angle(cs: np.ndarray) -> float:
    return float(np.arctan2(cs[1], cs[0]))


def wrap_angle(a):
    return (a + np.pi) % (2.0 * np.pi) - np.pi


def angle_lerp(a0: float, a1: float, s: float) -> float:
    """Shortest-arc interpolation between planar angles."""
    return float(a0 + s * wrap_angle(a1 - a0))


# -- arm model -----------------------------------------------------------------

@dataclass
class ArmModel:
    """Planar serial chain. Masses sit at com_fractions along each link;
    link_inertias are about each link's own center of mass."""

    link_lengths: np.ndarray
    link_masses: np.ndarray
    link_inertias: np.ndarray
    joint_limits: np.ndarray  # (n, 2) ordered [lo, hi]
    base: np.ndarray = field(default_factory=lambda: np.zeros(2))
    com_fractions: np.ndarray | None = None
    tool_mass: float = 0.0
    tool_com: np.ndarray = field(default_factory=lambda: np.zeros(2))
    tool_inertia: float = 0.0
    rotor_inertia: float = 0.0  # reflected motor/gearbox inertia per joint

    def __post_init__(self):
        self.link_lengths = np.asarray(self.link_lengths, dtype=np.float64)
        self.link_masses = np.asarray(self.link_masses, dtype=np.float64)
        self.link_inertias = np.asarray(self.link_inertias, dtype=np.float64)
        self.joint_limits = np.asarray(self.joint_limits, dtype=np.float64)
        self.base = np.asarray(self.base, dtype=np.float64)
        self.tool_com = np.asarray(self.tool_com, dtype=np.float64)
        if self.com_fractions is None:
            self.com_fractions = np.full(self.n_joints, 0.5)
        self.com_fractions = np.asarray(self.com_fractions, dtype=np.float64)
        if np.any(self.link_masses < 0) or np.any(self.link_inertias < 0) or self.tool_mass < 0:
            raise ValueError("masses and inertias must be non-negative")
        if np.any(self.joint_limits[:, 0] > self.joint_limits[:, 1]):
            raise ValueError("joint limits must be ordered lo <= hi")

    @property
    def n_joints(self) -> int:
        return len(self.link_lengths)

    def clamp(self, q: np.ndarray) -> np.ndarray:
        return np.clip(q, self.joint_limits[:, 0], self.joint_limits[:, 1])


def default_arm(base_xy=(0.0, 0.0)) -> ArmModel:
    """The simulator's 3-link arm (redundant in (x, y), singular at reach)."""
    return ArmModel(
        link_lengths=[0.55, 0.50, 0.15],
        link_masses=[1.2, 0.8, 0.5],
        link_inertias=[0.02, 0.01, 0.005],
        joint_limits=[[-3.0, 3.0]] * 3,
        base=np.asarray(base_xy, dtype=np.float64),
        tool_mass=0.2,
        tool_com=np.array([0.02, 0.0]),
        rotor_inertia=1.0,
    )


def joint_positions(arm: ArmModel, q: np.ndarray) -> np.ndarray:
    """World positions of base and each joint/tip: shape (n+1, 2)."""
    pts = np.empty((arm.n_joints + 1, 2))
    pts[0] = arm.base
    angle = 0.0
    for i in range(arm.n_joints):
        angle += q[i]
        pts[i + 1] = pts[i] + arm.link_lengths[i] * np.array([np.cos(angle), np.sin(angle)])
    return pts


def fk(arm: ArmModel, q: np.ndarray) -> np.ndarray:
    """End-effector pose (x, y, theta)."""
    pts = joint_positions(arm, q)
    return np.array([pts[-1, 0], pts[-1, 1], float(np.sum(q))])


def jacobian(arm: ArmModel, q: np.ndarray) -> np.ndarray:
    """Task-space velocity map: rows (dx, dy, dtheta) x columns (joints)."""
    q = np.asarray(q, dtype=np.float64)
    n = arm.n_joints
    pts = joint_positions(arm, q)
    tip = pts[-1]
    jac = np.empty((3, n))
    for i in range(n):
        r = tip - pts[i]
        jac[0, i] = -r[1]
        jac[1, i] = r[0]
        jac[2, i] = 1.0
    return jac


def ik_3link(arm: ArmModel, x: float, y: float, theta: float,
             elbow: float = 1.0) -> np.ndarray:
    """Closed-form IK for a planar 3-link chain with a specified tool angle.

    The wrist is placed at the EE minus the last link along theta, then the
    first two joints solve the 2-link problem with the chosen elbow branch.
    """
    l1, l2, l3 = arm.link_lengths
    wrist = np.array([x, y]) - l3 * np.array([np.cos(theta), np.sin(theta)])
    d = wrist - arm.base
    r = np.linalg.norm(d)
    if r > l1 + l2 + 1e-9 or r < abs(l1 - l2) - 1e-9:
        raise ValueError(f"wrist target at distance {r:.3f} unreachable")
    cos_q2 = np.clip((r * r - l1 * l1 - l2 * l2) / (2.0 * l1 * l2), -1.0, 1.0)
    q2 = np.sign(elbow) * np.arccos(cos_q2)
    q1 = np.arctan2(d[1], d[0]) - np.arctan2(l2 * np.sin(q2), l1 + l2 * np.cos(q2))
    q3 = theta - q1 - q2
    return np.array([wrap_angle(q1), wrap_angle(q2), wrap_angle(q3)])


def numeric_jacobian(arm: ArmModel, q: np.ndarray, h: float = 1e-7) -> np.ndarray:
    """Finite-difference FK oracle for the analytic Jacobian."""
    q = np.asarray(q, dtype=np.float64)
    n = arm.n_joints
    jac = np.empty((3, n))
    for i in range(n):
        qp, qm = q.copy(), q.copy()
        qp[i] += h
        qm[i] -= h
        fp, fm = fk(arm, qp), fk(arm, qm)
        jac[:, i] = (fp - fm) / (2.0 * h)
    return jac


def link_com_jacobians(arm: ArmModel, q: np.ndarray):
    """Per-link (2 x n translational Jacobian of the com, angular row)."""
    n = arm.n_joints
    pts = joint_positions(arm, q)
    angles = np.cumsum(q)
    out = []
    for li in range(n):
        com = pts[li] + arm.com_fractions[li] * (pts[li + 1] - pts[li])
        jv = np.zeros((2, n))
        jw = np.zeros(n)
        for i in range(li + 1):
            r = com - pts[i]
            jv[0, i] = -r[1]
            jv[1, i] = r[0]
            jw[i] = 1.0
        out.append((com, jv, jw, angles[li]))
    return out


def inertia_matrix(arm: ArmModel, q: np.ndarray) -> np.ndarray:
    """Joint-space inertia H(q): symmetric positive definite for physical arms.

    Composite of per-link translational and rotational contributions plus the
    tool mass carried at the end effector.
    """
    n = arm.n_joints
    h = np.zeros((n, n))
    for li, (_, jv, jw, _) in enumerate(link_com_jacobians(arm, q)):
        h += arm.link_masses[li] * (jv.T @ jv)
        h += arm.link_inertias[li] * np.outer(jw, jw)
    if arm.tool_mass > 0 or arm.tool_inertia > 0:
        pts = joint_positions(arm, q)
        theta = float(np.sum(q))
        rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
        tool_pt = pts[-1] + rot @ arm.tool_com
        jv = np.zeros((2, n))
        jw = np.ones(n)
        for i in range(n):
            r = tool_pt - pts[i]
            jv[0, i] = -r[1]
            jv[1, i] = r[0]
        h += arm.tool_mass * (jv.T @ jv)
        h += arm.tool_inertia * np.outer(jw, jw)
    if arm.rotor_inertia > 0:
        h += arm.rotor_inertia * np.eye(n)
    return h
