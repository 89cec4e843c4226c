"""Symbolic Lagrangian dynamics of a serial revolute chain, used as a test oracle.

Builds T and V from link poses with sympy, then M = d2T/dqdot2, C from
Christoffel symbols of M and G = dV/dq.  Shares only the kinematic convention
with the package: R_i = R_{i-1} Rot(axis_i, q_i), O_i = O_{i-1} + R_i offset_i,
COM at O_i + R_i com_i, inertia about the COM in frame i.
"""

import numpy as np
import sympy as sp


def _rot(axis, angle):
    k = sp.Matrix(axis)
    K = sp.Matrix([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return sp.eye(3) + sp.sin(angle) * K + (1 - sp.cos(angle)) * K * K


class SymbolicChain:
    def __init__(self, chain):
        n = chain.n
        q = sp.symbols(f"q0:{n}")
        qd = sp.symbols(f"qd0:{n}")
        R = sp.eye(3)
        O = sp.zeros(3, 1)
        g = sp.Matrix([sp.nsimplify(v) for v in chain.gravity])
        T = 0
        V = 0
        for i, link in enumerate(chain.links):
            R = R * _rot([sp.nsimplify(v) for v in link.axis], q[i])
            O = O + R * sp.Matrix([sp.nsimplify(v) for v in link.offset])
            B = O + R * sp.Matrix([sp.nsimplify(v) for v in link.com])
            Bdot = B.jacobian(q) * sp.Matrix(qd)
            Rdot = sum((R.diff(q[j]) * qd[j] for j in range(n)), sp.zeros(3, 3))
            W = R.T * Rdot  # body-frame angular velocity as a skew matrix
            w = sp.Matrix([W[2, 1], W[0, 2], W[1, 0]])
            I = sp.Matrix(link.inertia.tolist()).applyfunc(sp.nsimplify)
            m = sp.nsimplify(link.mass)
            T += sp.Rational(1, 2) * (m * (Bdot.T * Bdot)[0] + (w.T * I * w)[0])
            V += -m * (g.T * B)[0]
        M = sp.hessian(T, qd)
        C = sp.zeros(n, n)
        for k in range(n):
            for j in range(n):
                C[k, j] = sum(
                    sp.Rational(1, 2) * (M[k, j].diff(q[i]) + M[k, i].diff(q[j]) - M[i, j].diff(q[k]))
                    * qd[i] for i in range(n))
        G = sp.Matrix([V.diff(qi) for qi in q])
        self._M = sp.lambdify([q], M, "numpy")
        self._C = sp.lambdify([q, qd], C, "numpy")
        self._G = sp.lambdify([q], G, "numpy")
        self._V = sp.lambdify([q], V, "numpy")
        self._T = sp.lambdify([q, qd], T, "numpy")

    def mass_matrix(self, q):
        return np.array(self._M(tuple(q)), dtype=float)

    def coriolis_matrix(self, q, qd):
        return np.array(self._C(tuple(q), tuple(qd)), dtype=float)

    def gravity_vector(self, q):
        return np.array(self._G(tuple(q)), dtype=float).ravel()

    def energy(self, q, qd):
        return float(self._T(tuple(q), tuple(qd))) + float(self._V(tuple(q)))
