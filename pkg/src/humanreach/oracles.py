"""Closed-form reference models used to cross-check the recursive dynamics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chain import STANDARD_GRAVITY, ChainModel, LinkParams


@dataclass(frozen=True)
class TwoLinkPlanar:
    """Planar 2R arm in the xy-plane with gravity along -y.

    Lengths ``l1, l2``, centre-of-mass distances ``c1, c2`` from the proximal
    joint, masses ``m1, m2`` and COM inertias ``i1, i2`` about z.  Angles are
    measured from the +x axis; ``q2`` is relative to link 1.
    """

    l1: float = 1.0
    l2: float = 0.8
    c1: float = 0.5
    c2: float = 0.35
    m1: float = 1.3
    m2: float = 0.9
    i1: float = 0.12
    i2: float = 0.05
    g: float = STANDARD_GRAVITY

    def mass_matrix(self, q):
        c = np.cos(q[1])
        a = self.m2 * self.l1 * self.c2
        m11 = (self.m1 * self.c1**2 + self.i1 + self.i2
               + self.m2 * (self.l1**2 + self.c2**2) + 2 * a * c)
        m12 = self.m2 * self.c2**2 + self.i2 + a * c
        m22 = self.m2 * self.c2**2 + self.i2
        return np.array([[m11, m12], [m12, m22]])

    def coriolis_matrix(self, q, qdot):
        h = -self.m2 * self.l1 * self.c2 * np.sin(q[1])
        return np.array([[h * qdot[1], h * (qdot[0] + qdot[1])], [-h * qdot[0], 0.0]])

    def gravity_vector(self, q):
        c1 = np.cos(q[0])
        c12 = np.cos(q[0] + q[1])
        g2 = self.m2 * self.c2 * self.g * c12
        return np.array([(self.m1 * self.c1 + self.m2 * self.l1) * self.g * c1 + g2, g2])

    def inverse_dynamics(self, q, qdot, qddot):
        return (self.mass_matrix(q) @ qddot + self.coriolis_matrix(q, qdot) @ qdot
                + self.gravity_vector(q))

    def energy(self, q, qdot):
        kinetic = 0.5 * qdot @ self.mass_matrix(q) @ qdot
        potential = self.g * (self.m1 * self.c1 * np.sin(q[0])
                              + self.m2 * (self.l1 * np.sin(q[0]) + self.c2 * np.sin(q[0] + q[1])))
        return kinetic + potential

    def chain(self, gravity=True):
        """The same arm as a :class:`ChainModel`."""
        z = (0.0, 0.0, 1.0)
        links = [
            LinkParams(mass=self.m1, com=(self.c1 - self.l1, 0.0, 0.0),
                       inertia=np.diag([self.i1, self.i1, self.i1]), axis=z,
                       offset=(self.l1, 0.0, 0.0)),
            LinkParams(mass=self.m2, com=(self.c2 - self.l2, 0.0, 0.0),
                       inertia=np.diag([self.i2, self.i2, self.i2]), axis=z,
                       offset=(self.l2, 0.0, 0.0)),
        ]
        g = (0.0, -self.g, 0.0) if gravity else (0.0, 0.0, 0.0)
        return ChainModel(links=links, gravity=g, name="two-link-planar").validate()
