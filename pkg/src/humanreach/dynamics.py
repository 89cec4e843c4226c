"""Recursive Newton-Euler dynamics with an auxiliary velocity slot.

``ne_alpha(q, qdot, qdot_aux, qddot)`` returns joint torques from a
Newton-Euler pass in which the velocity products are split between the real
velocity ``qdot`` and an auxiliary velocity ``qdot_aux``.  With
``qdot_aux == qdot`` it is ordinary inverse dynamics; probing the auxiliary
slot with unit vectors yields a Coriolis matrix ``C`` for which
``Mdot - 2C`` is skew-symmetric.

Everything is expressed in the base frame.  Gravity enters as a fictitious
base acceleration ``-g``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .errors import DimensionError, SingularConfigurationError
from .kinematics import JointState, frames


@dataclass
class RecursionState:
    """Per-link quantities of one Newton-Euler pass (all ``(N, 3)``)."""

    omega: np.ndarray
    omega_aux: np.ndarray
    omega_dot: np.ndarray
    origin_acc: np.ndarray
    com_acc: np.ndarray
    force: np.ndarray
    torque: np.ndarray


@dataclass
class DynamicsTerms:
    M: np.ndarray
    C: np.ndarray
    G: np.ndarray
    Fr: np.ndarray


class _Geometry:
    """World-frame link geometry at one configuration, shared by all probes."""

    __slots__ = ("n", "z", "r", "rb", "inertia", "mass", "com_positions", "_skews")

    def __init__(self, chain, q):
        fs = frames(chain, q)
        n = chain.n
        self.n = n
        self.z = fs.axes
        self.r = np.diff(fs.origins, axis=0)
        self.rb = fs.com_positions - fs.origins[1:]
        R = fs.rotations[1:]
        local, self.mass = chain.inertial_arrays
        self.inertia = R @ local @ np.transpose(R, (0, 2, 1))
        self.com_positions = fs.com_positions
        self._skews = None

    def skews(self):
        """Skew matrices of z, r, rb and r + rb; ``cross(a, b) == a @ skew(b)``."""
        if self._skews is None:
            self._skews = tuple(_skew(v) for v in (self.z, self.r, self.rb, self.r + self.rb))
        return self._skews


def _skew(v):
    S = np.zeros(v.shape[:-1] + (3, 3))
    S[..., 0, 1], S[..., 0, 2] = -v[..., 2], v[..., 1]
    S[..., 1, 0], S[..., 1, 2] = v[..., 2], -v[..., 0]
    S[..., 2, 0], S[..., 2, 1] = -v[..., 1], v[..., 0]
    return S


def _cross(a, b):
    # np.cross has noticeable per-call overhead on tiny arrays
    a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
    b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
    return np.stack((a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0), axis=-1)


def _gyroscopic(I, w, wa):
    # omega_aux x (I omega); paired with the omega_dot term above this keeps
    # Mdot - 2C skew-symmetric
    return _cross(wa, w @ I.T)


@numba.njit(cache=True)
def _ne_kernel(z, r, rb, inertia, mass, qd, qda, qdd, base_acc, u):
    K, n = qd.shape
    WD = np.empty((n, 3))
    W = np.empty((n, 3))
    WA = np.empty((n, 3))
    BD = np.empty((n, 3))
    for k in range(K):
        w0 = w1 = w2 = 0.0
        a0 = a1 = a2 = 0.0
        d0 = d1 = d2 = 0.0
        o0, o1, o2 = base_acc[k, 0], base_acc[k, 1], base_acc[k, 2]
        for i in range(n):
            z0, z1, z2 = z[i, 0], z[i, 1], z[i, 2]
            s = qd[k, i]
            a = qdd[k, i]
            # wd += qdd z + qd (wa_prev x z)
            d0 += a * z0 + s * (a1 * z2 - a2 * z1)
            d1 += a * z1 + s * (a2 * z0 - a0 * z2)
            d2 += a * z2 + s * (a0 * z1 - a1 * z0)
            w0 += s * z0
            w1 += s * z1
            w2 += s * z2
            sa = qda[k, i]
            a0 += sa * z0
            a1 += sa * z1
            a2 += sa * z2
            for j in range(2):
                v = r[i] if j == 0 else rb[i]
                v0, v1, v2 = v[0], v[1], v[2]
                # wd x v + w x (wa x v)
                c0 = a1 * v2 - a2 * v1
                c1 = a2 * v0 - a0 * v2
                c2 = a0 * v1 - a1 * v0
                e0 = d1 * v2 - d2 * v1 + w1 * c2 - w2 * c1
                e1 = d2 * v0 - d0 * v2 + w2 * c0 - w0 * c2
                e2 = d0 * v1 - d1 * v0 + w0 * c1 - w1 * c0
                if j == 0:
                    o0 += e0
                    o1 += e1
                    o2 += e2
                else:
                    BD[i, 0] = o0 + e0
                    BD[i, 1] = o1 + e1
                    BD[i, 2] = o2 + e2
            WD[i, 0], WD[i, 1], WD[i, 2] = d0, d1, d2
            W[i, 0], W[i, 1], W[i, 2] = w0, w1, w2
            WA[i, 0], WA[i, 1], WA[i, 2] = a0, a1, a2

        fn0 = fn1 = fn2 = 0.0
        tn0 = tn1 = tn2 = 0.0
        for i in range(n - 1, -1, -1):
            m = mass[i]
            f0 = fn0 + m * BD[i, 0]
            f1 = fn1 + m * BD[i, 1]
            f2 = fn2 + m * BD[i, 2]
            s0 = r[i, 0] + rb[i, 0]
            s1 = r[i, 1] + rb[i, 1]
            s2 = r[i, 2] + rb[i, 2]
            b0, b1, b2 = rb[i, 0], rb[i, 1], rb[i, 2]
            I = inertia[i]
            d0, d1, d2 = WD[i, 0], WD[i, 1], WD[i, 2]
            w0, w1, w2 = W[i, 0], W[i, 1], W[i, 2]
            a0, a1, a2 = WA[i, 0], WA[i, 1], WA[i, 2]
            iw0 = I[0, 0] * w0 + I[0, 1] * w1 + I[0, 2] * w2
            iw1 = I[1, 0] * w0 + I[1, 1] * w1 + I[1, 2] * w2
            iw2 = I[2, 0] * w0 + I[2, 1] * w1 + I[2, 2] * w2
            t0 = (tn0 - (f1 * s2 - f2 * s1) + (fn1 * b2 - fn2 * b1)
                  + I[0, 0] * d0 + I[0, 1] * d1 + I[0, 2] * d2 + (a1 * iw2 - a2 * iw1))
            t1 = (tn1 - (f2 * s0 - f0 * s2) + (fn2 * b0 - fn0 * b2)
                  + I[1, 0] * d0 + I[1, 1] * d1 + I[1, 2] * d2 + (a2 * iw0 - a0 * iw2))
            t2 = (tn2 - (f0 * s1 - f1 * s0) + (fn0 * b1 - fn1 * b0)
                  + I[2, 0] * d0 + I[2, 1] * d1 + I[2, 2] * d2 + (a0 * iw1 - a1 * iw0))
            u[k, i] = t0 * z[i, 0] + t1 * z[i, 1] + t2 * z[i, 2]
            fn0, fn1, fn2 = f0, f1, f2
            tn0, tn1, tn2 = t0, t1, t2
    return u


def _ne_batch(geo, qd, qda, qdd, base_acc, keep=False):
    """Run K independent recursions sharing one configuration.

    Uses the compiled kernel unless the per-link :class:`RecursionState` is
    requested, in which case the vectorised numpy recursion runs instead.
    """
    if keep:
        return _ne_batch_numpy(geo, qd, qda, qdd, base_acc, keep=True)
    qd = np.ascontiguousarray(qd, dtype=float)
    u = np.empty(qd.shape)
    return _ne_kernel(geo.z, geo.r, geo.rb, geo.inertia, geo.mass, qd,
                      np.ascontiguousarray(qda, dtype=float),
                      np.ascontiguousarray(qdd, dtype=float),
                      np.ascontiguousarray(base_acc, dtype=float), u)


def _ne_batch_numpy(geo, qd, qda, qdd, base_acc, keep=False):
    """Vectorised-over-K numpy version of the recursion.

    ``qd``, ``qda``, ``qdd`` are ``(K, N)``; ``base_acc`` is ``(K, 3)``.
    Returns torques ``(K, N)`` (and the :class:`RecursionState` of row 0
    when ``keep`` is set).
    """
    K, n = qd.shape
    Sz, Sr, Srb, Srsum = geo.skews()
    w = np.zeros((K, 3))
    wa = np.zeros((K, 3))
    wd = np.zeros((K, 3))
    Od = np.array(base_acc, dtype=float, copy=True)
    W = np.empty((n, K, 3))
    WA = np.empty((n, K, 3))
    WD = np.empty((n, K, 3))
    OD = np.empty((n, K, 3))
    BD = np.empty((n, K, 3))
    for i in range(n):
        z = geo.z[i]
        wd = wd + qdd[:, i, None] * z + qd[:, i, None] * (wa @ Sz[i])
        w = w + qd[:, i, None] * z
        wa = wa + qda[:, i, None] * z
        Od = Od + wd @ Sr[i] + _cross(w, wa @ Sr[i])
        W[i], WA[i], WD[i], OD[i] = w, wa, wd, Od
        BD[i] = Od + wd @ Srb[i] + _cross(w, wa @ Srb[i])

    u = np.empty((K, n))
    F = np.empty((n, K, 3))
    T = np.empty((n, K, 3))
    f_next = np.zeros((K, 3))
    t_next = np.zeros((K, 3))
    for i in range(n - 1, -1, -1):
        I = geo.inertia[i]
        f = f_next + geo.mass[i] * BD[i]
        t = (
            t_next
            - f @ Srsum[i]
            + f_next @ Srb[i]
            + WD[i] @ I.T
            + _gyroscopic(I, W[i], WA[i])
        )
        u[:, i] = t @ geo.z[i]
        F[i], T[i] = f, t
        f_next, t_next = f, t
    if keep:
        rec = RecursionState(
            omega=W[:, 0].copy(), omega_aux=WA[:, 0].copy(), omega_dot=WD[:, 0].copy(),
            origin_acc=OD[:, 0].copy(), com_acc=BD[:, 0].copy(),
            force=F[:, 0].copy(), torque=T[:, 0].copy(),
        )
        return u, rec
    return u


def _vec(chain, v, name):
    v = np.asarray(v, dtype=float)
    if v.shape != (chain.n,):
        raise DimensionError(f"{name} has shape {v.shape}, chain has {chain.n} joints")
    return v


def ne_alpha(chain, q, qdot, qdot_aux, qddot, gravity_on=True, return_state=False):
    """Joint torques of the auxiliary-velocity Newton-Euler recursion.

    Parameters
    ----------
    chain : ChainModel
    q, qdot, qdot_aux, qddot : array_like, shape (N,)
    gravity_on : bool
        Include ``chain.gravity`` as base acceleration ``-g``.
    return_state : bool
        Also return the :class:`RecursionState` of the pass.
    """
    q = _vec(chain, q, "q")
    vecs = [_vec(chain, v, name) for v, name in
            ((qdot, "qdot"), (qdot_aux, "qdot_aux"), (qddot, "qddot"))]
    for v in [q, *vecs]:
        if not np.all(np.isfinite(v)):
            raise ValueError("ne_alpha received non-finite input")
    geo = _Geometry(chain, q)
    base = -chain.gravity if gravity_on else np.zeros(3)
    out = _ne_batch(geo, vecs[0][None], vecs[1][None], vecs[2][None], base[None],
                    keep=return_state)
    if return_state:
        u, rec = out
        return u[0], rec
    return out[0]


def _mass_matrix(geo):
    n = geo.n
    zeros = np.zeros((n, n))
    cols = _ne_batch(geo, zeros, zeros, np.eye(n), np.zeros((n, 3)))
    M = cols.T
    asym = np.max(np.abs(M - M.T))
    if asym > 1e-9:
        raise ArithmeticError(f"inertia matrix asymmetry {asym:.3e} exceeds 1e-9")
    return 0.5 * (M + M.T)


def mass_matrix(chain, q):
    """Joint-space inertia matrix, one unit-acceleration probe per column."""
    return _mass_matrix(_Geometry(chain, _vec(chain, q, "q")))


def _coriolis_matrix(geo, qdot):
    n = geo.n
    cols = _ne_batch(geo, np.tile(qdot, (n, 1)), np.eye(n), np.zeros((n, n)), np.zeros((n, 3)))
    return cols.T


def coriolis_matrix(chain, q, qdot):
    """Coriolis matrix ``C(q, qdot)``, one auxiliary-velocity probe per column."""
    q = _vec(chain, q, "q")
    qdot = _vec(chain, qdot, "qdot")
    return _coriolis_matrix(_Geometry(chain, q), qdot)


def _gravity_vector(geo, gravity):
    n = geo.n
    zeros = np.zeros((1, n))
    return _ne_batch(geo, zeros, zeros, zeros, -gravity[None])[0]


def gravity_vector(chain, q):
    """Joint torques that hold the arm static against gravity."""
    return _gravity_vector(_Geometry(chain, _vec(chain, q, "q")), chain.gravity)


def friction_torque(chain, qdot):
    """Viscous plus smooth Coulomb friction ``eta*qd + mu*tanh(beta*qd)``."""
    qdot = _vec(chain, qdot, "qdot")
    eta, mu, beta = chain.friction_arrays
    return eta * qdot + mu * np.tanh(beta * qdot)


def dynamics_terms(chain, q, qdot, friction_on=True):
    """``M``, ``C``, ``G`` (and ``Fr``) from a single batched recursion."""
    q = _vec(chain, q, "q")
    qdot = _vec(chain, qdot, "qdot")
    geo = _Geometry(chain, q)
    n = chain.n
    eye = np.eye(n)
    zeros = np.zeros((n, n))
    qd = np.vstack([zeros, np.tile(qdot, (n, 1)), np.zeros((1, n))])
    qda = np.vstack([zeros, eye, np.zeros((1, n))])
    qdd = np.vstack([eye, zeros, np.zeros((1, n))])
    base = np.zeros((2 * n + 1, 3))
    base[2 * n] = -chain.gravity
    out = _ne_batch(geo, qd, qda, qdd, base)
    M = out[:n].T
    Fr = friction_torque(chain, qdot) if friction_on else np.zeros(n)
    return DynamicsTerms(M=0.5 * (M + M.T), C=out[n:2 * n].T, G=out[2 * n], Fr=Fr)


def potential_energy(chain, q):
    """Gravitational potential of all link masses (zero at the base origin)."""
    coms = frames(chain, q).com_positions
    masses = np.array([l.mass for l in chain.links])
    return -float(masses @ (coms @ chain.gravity))


def kinetic_energy(chain, q, qdot):
    qdot = np.asarray(qdot, dtype=float)
    return 0.5 * float(qdot @ mass_matrix(chain, q) @ qdot)


def total_energy(chain, q, qdot):
    return kinetic_energy(chain, q, qdot) + potential_energy(chain, q)


def forward_dynamics(chain, state, applied_torque, external_disturbance=None, friction_on=True):
    """Solve ``M qddot = u + d - C qdot - G - Fr`` for ``qddot``.

    Raises
    ------
    SingularConfigurationError
        If the inertia matrix is not numerically positive definite.
    """
    q = _vec(chain, state.q, "q")
    qdot = _vec(chain, state.qdot, "qdot")
    u = _vec(chain, applied_torque, "applied_torque")
    n = chain.n
    rhs = u.copy()
    if external_disturbance is not None:
        rhs += _vec(chain, external_disturbance, "external_disturbance")
    if friction_on:
        rhs -= friction_torque(chain, qdot)

    geo = _Geometry(chain, q)
    # rows 0..n-1 probe M, the last row gives C qdot + G in one pass
    qd = np.zeros((n + 1, n))
    qd[n] = qdot
    qdd = np.zeros((n + 1, n))
    qdd[:n] = np.eye(n)
    base = np.zeros((n + 1, 3))
    base[n] = -chain.gravity
    out = _ne_batch(geo, qd, qd, qdd, base)
    M = out[:n].T
    M = 0.5 * (M + M.T)
    rhs -= out[n]
    try:
        factor = cho_factor(M, check_finite=False)
        if not np.all(np.isfinite(factor[0])):
            raise LinAlgError("non-finite factor")
    except (LinAlgError, ValueError):
        cond = np.linalg.cond(M) if np.all(np.isfinite(M)) else np.inf
        raise SingularConfigurationError(
            f"inertia matrix not positive definite (condition estimate {cond:.3e})",
            condition=cond,
        ) from None
    return cho_solve(factor, rhs, check_finite=False)


def inverse_dynamics(chain, state, gravity_on=True):
    """Torques needed for ``state`` (``ne_alpha`` with ``qdot_aux = qdot``)."""
    if not isinstance(state, JointState):
        raise TypeError("inverse_dynamics expects a JointState")
    return ne_alpha(chain, state.q, state.qdot, state.qdot, state.qddot, gravity_on=gravity_on)
