"""Forward kinematics, geometric Jacobian and its time derivative."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError


@dataclass
class JointState:
    """Joint positions, velocities and (optionally) accelerations."""

    q: np.ndarray
    qdot: np.ndarray = None
    qddot: np.ndarray = None

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float).copy()
        n = self.q.shape[0] if self.q.ndim == 1 else -1
        self.qdot = np.zeros(n) if self.qdot is None else np.asarray(self.qdot, dtype=float).copy()
        self.qddot = np.zeros(n) if self.qddot is None else np.asarray(self.qddot, dtype=float).copy()

    @property
    def n(self):
        return self.q.shape[0]

    def check(self, chain):
        n = chain.n
        for name in ("q", "qdot", "qddot"):
            v = getattr(self, name)
            if v.shape != (n,):
                raise DimensionError(f"{name} has shape {v.shape}, chain has {n} joints")
            if not np.all(np.isfinite(v)):
                raise ValueError(f"{name} contains non-finite entries")
        return self


@dataclass
class FrameSet:
    """World-frame poses of every link frame for one configuration.

    ``rotations[i]`` / ``origins[i]`` belong to frame ``i`` (index 0 is the
    base).  ``axes[i-1]`` is the world direction ``e_i`` of joint ``i`` and
    ``p[i-1] = x - O_{i-1}``.
    """

    rotations: np.ndarray  # (N+1, 3, 3)
    origins: np.ndarray  # (N+1, 3)
    axes: np.ndarray  # (N, 3)
    com_positions: np.ndarray  # (N, 3)
    x: np.ndarray  # (3,)
    p: np.ndarray  # (N, 3)


@dataclass
class JacobianPair:
    """6xN Jacobian (angular rows on top) and its time derivative."""

    J: np.ndarray
    Jdot: np.ndarray

    @property
    def linear(self):
        return self.J[3:]

    @property
    def angular(self):
        return self.J[:3]

    @property
    def linear_dot(self):
        return self.Jdot[3:]


def _skew(v):
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def axis_rotation(axis, angle):
    """Rotation matrix for ``angle`` radians about the unit vector ``axis``."""
    K = _skew(axis)
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


def _joint_rotations(chain, q):
    """Stack of ``Rot(axis_i, q_i)`` via Rodrigues, vectorised over joints."""
    K, K2 = chain.axis_skews
    s = np.sin(q)[:, None, None]
    c = np.cos(q)[:, None, None]
    return np.eye(3) + s * K + (1.0 - c) * K2


def _check_q(chain, q, name="q"):
    q = np.asarray(q, dtype=float)
    if q.shape != (chain.n,):
        raise DimensionError(f"{name} has shape {q.shape}, chain has {chain.n} joints")
    return q


def frames(chain, q):
    """Compute the :class:`FrameSet` for joint angles ``q``."""
    q = _check_q(chain, q)
    n = chain.n
    R = np.empty((n + 1, 3, 3))
    O = np.empty((n + 1, 3))
    axes = np.empty((n, 3))
    coms = np.empty((n, 3))
    R[0] = np.eye(3)
    O[0] = 0.0
    rot = _joint_rotations(chain, q)
    for i in range(n):
        R[i + 1] = R[i] @ rot[i]
    local_axes, local_offsets, local_coms = chain.local_vectors
    axes[:] = np.einsum("nij,nj->ni", R[:n], local_axes)
    offs = np.einsum("nij,nj->ni", R[1:], local_offsets)
    O[1:] = np.cumsum(offs, axis=0)
    coms[:] = O[1:] + np.einsum("nij,nj->ni", R[1:], local_coms)
    x = O[n].copy()
    return FrameSet(rotations=R, origins=O, axes=axes, com_positions=coms, x=x, p=x - O[:n])


def forward_kinematics(chain, state):
    """Frame poses and end-effector position for ``state.q``.

    ``state`` may be a :class:`JointState` or a plain vector of angles.
    """
    q = state.q if isinstance(state, JointState) else state
    return frames(chain, q)


def _velocities(fs, qdot):
    """Angular velocity of each frame and linear velocity of each origin."""
    n = fs.axes.shape[0]
    omega = np.zeros((n + 1, 3))
    v = np.zeros((n + 1, 3))
    omega[1:] = np.cumsum(qdot[:, None] * fs.axes, axis=0)
    v[1:] = np.cumsum(np.cross(omega[1:], np.diff(fs.origins, axis=0)), axis=0)
    return omega, v


def jacobian(chain, state, fs=None):
    """Geometric Jacobian ``J`` and ``Jdot`` at ``state``.

    Column ``i`` of ``J`` is ``[e_i ; e_i x p_i]`` so that ``J @ qdot`` is the
    end-effector twist (angular velocity on top, linear velocity below).
    ``Jdot`` differentiates each column along the motion: ``e_i`` turns with
    the angular velocity of frame ``i-1`` and ``p_i`` changes at the rate
    ``xdot - Odot_{i-1}``.
    """
    if not isinstance(state, JointState):
        raise TypeError("jacobian expects a JointState")
    q = _check_q(chain, state.q)
    qdot = _check_q(chain, state.qdot, "qdot")
    if fs is None:
        fs = frames(chain, q)
    n = chain.n
    e = fs.axes
    p = fs.p
    omega, v = _velocities(fs, qdot)

    J = np.empty((6, n))
    J[:3] = e.T
    J[3:] = np.cross(e, p).T

    edot = np.cross(omega[:n], e)
    pdot = v[n] - v[:n]
    Jdot = np.empty((6, n))
    Jdot[:3] = edot.T
    Jdot[3:] = (np.cross(edot, p) + np.cross(e, pdot)).T
    return JacobianPair(J=J, Jdot=Jdot)


def end_effector_velocity(chain, state, fs=None):
    """Linear velocity of the end-effector."""
    return jacobian(chain, state, fs).linear @ np.asarray(state.qdot, dtype=float)
