import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from humanreach import dynamics
from humanreach.chain import ChainModel, LinkParams
from humanreach.dynamics import (
    coriolis_matrix,
    dynamics_terms,
    forward_dynamics,
    friction_torque,
    gravity_vector,
    inverse_dynamics,
    mass_matrix,
    ne_alpha,
    potential_energy,
    total_energy,
)
from humanreach.errors import DimensionError, SingularConfigurationError
from humanreach.kinematics import JointState
from humanreach.sim import rk4_step

from lagrangian import SymbolicChain

HORIZONTAL = (0.0, -1.0, 0.0)  # positive angle lifts a link lying along +x


def single_link(mass=1.0, com=0.5, length=1.0, inertia=0.0, axis=HORIZONTAL):
    return ChainModel([LinkParams(mass=mass, com=(com - length, 0, 0),
                                  inertia=np.eye(3) * inertia, axis=axis,
                                  offset=(length, 0, 0))])


def spatial_chain():
    """Three links on non-parallel axes with offset COMs and a full inertia tensor."""
    I1 = np.array([[0.05, 0.01, 0.0], [0.01, 0.04, 0.005], [0.0, 0.005, 0.03]])
    return ChainModel([
        LinkParams(mass=1.2, com=(0.02, 0.01, -0.1), inertia=I1, axis=(0, 0, 1),
                   offset=(0.05, 0, -0.3)),
        LinkParams(mass=0.8, com=(0.0, 0.03, -0.12), inertia=np.diag([0.02, 0.03, 0.015]),
                   axis=(0, 1, 0), offset=(0, 0, -0.25)),
        LinkParams(mass=0.5, com=(0.01, 0, -0.05), inertia=np.diag([0.004, 0.003, 0.002]),
                   axis=(1, 0, 0), offset=(0, 0.02, -0.1)),
    ]).validate()


@pytest.fixture(scope="module")
def symbolic_planar(planar_chain):
    return SymbolicChain(planar_chain)


@pytest.fixture(scope="module")
def spatial():
    chain = spatial_chain()
    return chain, SymbolicChain(chain)


class TestNeAlpha:
    def test_rest_without_gravity_is_zero(self, arm7, rng):
        z = np.zeros(7)
        np.testing.assert_array_equal(ne_alpha(arm7, rng.normal(size=7), z, z, z, gravity_on=False), z)

    def test_static_horizontal_link(self):
        z = np.zeros(1)
        assert ne_alpha(single_link(), z, z, z, z) == pytest.approx([4.905], abs=1e-12)

    def test_planar_inverse_dynamics(self, planar, planar_chain, rng):
        for _ in range(100):
            q, qd, qdd = rng.uniform(-np.pi, np.pi, 2), rng.normal(size=2), rng.normal(size=2)
            np.testing.assert_allclose(ne_alpha(planar_chain, q, qd, qd, qdd),
                                       planar.inverse_dynamics(q, qd, qdd), atol=1e-8)

    def test_reassembles_from_terms(self, arm7, rng):
        for _ in range(50):
            q, qd, qdd = rng.uniform(-np.pi, np.pi, 7), rng.normal(size=7), rng.normal(size=7)
            lhs = ne_alpha(arm7, q, qd, qd, qdd)
            rhs = mass_matrix(arm7, q) @ qdd + coriolis_matrix(arm7, q, qd) @ qd + gravity_vector(arm7, q)
            np.testing.assert_allclose(lhs, rhs, atol=1e-8)

    def test_linear_in_auxiliary_velocity(self, arm7, rng):
        q, qd = rng.normal(size=7), rng.normal(size=7)
        a, b = rng.normal(size=7), rng.normal(size=7)
        z = np.zeros(7)

        def u(v):
            return ne_alpha(arm7, q, qd, v, z, gravity_on=False)

        np.testing.assert_allclose(u(2 * a - 3 * b), 2 * u(a) - 3 * u(b), atol=1e-10)

    def test_compiled_kernel_matches_reference(self, arm7, rng):
        geo = dynamics._Geometry(arm7, rng.normal(size=7))
        rows = rng.normal(size=(4, 7, 7))
        base = np.tile(-arm7.gravity, (7, 1))
        fast = dynamics._ne_batch(geo, *rows[:3], base)
        slow = dynamics._ne_batch_numpy(geo, *rows[:3], base)
        np.testing.assert_allclose(fast, slow, atol=1e-12)

    def test_dimension_mismatch(self, arm7):
        with pytest.raises(DimensionError):
            ne_alpha(arm7, np.zeros(7), np.zeros(6), np.zeros(7), np.zeros(7))

    def test_non_finite_input(self, arm7):
        q = np.zeros(7)
        q[2] = np.nan
        with pytest.raises(ValueError, match="non-finite"):
            ne_alpha(arm7, q, np.zeros(7), np.zeros(7), np.zeros(7))


class TestMassMatrix:
    def test_point_mass(self):
        M = mass_matrix(single_link(mass=1.0, com=1.0, length=1.0), np.zeros(1))
        np.testing.assert_allclose(M, [[1.0]], atol=1e-15)

    def test_planar_straight_arm(self, planar, planar_chain):
        q = np.array([0.4, 0.0])
        np.testing.assert_allclose(mass_matrix(planar_chain, q), planar.mass_matrix(q), atol=1e-12)

    def test_symmetric_positive_definite(self, arm7, rng):
        for _ in range(100):
            q = rng.uniform(-np.pi, np.pi, 7)
            z = np.zeros(7)
            raw = np.column_stack([ne_alpha(arm7, q, z, z, e, gravity_on=False) for e in np.eye(7)])
            assert np.max(np.abs(raw - raw.T)) < 1e-9
            assert np.linalg.eigvalsh(mass_matrix(arm7, q))[0] > 0

    def test_symbolic_planar(self, symbolic_planar, planar_chain, rng):
        for _ in range(20):
            q = rng.uniform(-np.pi, np.pi, 2)
            np.testing.assert_allclose(mass_matrix(planar_chain, q), symbolic_planar.mass_matrix(q),
                                       atol=1e-12)

    def test_symbolic_spatial(self, spatial, rng):
        chain, sym = spatial
        for _ in range(20):
            q = rng.uniform(-np.pi, np.pi, 3)
            np.testing.assert_allclose(mass_matrix(chain, q), sym.mass_matrix(q), atol=1e-12)


class TestCoriolis:
    def test_zero_velocity(self, arm7, rng):
        np.testing.assert_array_equal(coriolis_matrix(arm7, rng.normal(size=7), np.zeros(7)),
                                      np.zeros((7, 7)))

    def test_planar_closed_form(self, planar, planar_chain, rng):
        for _ in range(100):
            q, qd = rng.uniform(-np.pi, np.pi, 2), rng.normal(size=2)
            C = coriolis_matrix(planar_chain, q, qd)
            np.testing.assert_allclose(C @ qd, planar.coriolis_matrix(q, qd) @ qd, atol=1e-8)
            np.testing.assert_allclose(C, planar.coriolis_matrix(q, qd), atol=1e-8)

    def test_symbolic_spatial_torques(self, spatial, rng):
        # Christoffel and recursive factorizations differ as matrices in 3-D; C qdot must agree
        chain, sym = spatial
        for _ in range(20):
            q, qd = rng.uniform(-np.pi, np.pi, 3), rng.normal(size=3)
            np.testing.assert_allclose(coriolis_matrix(chain, q, qd) @ qd,
                                       sym.coriolis_matrix(q, qd) @ qd, atol=1e-10)

    @pytest.mark.parametrize("which", ["arm7", "spatial"])
    def test_skew_symmetry(self, which, arm7, rng):
        chain = arm7 if which == "arm7" else spatial_chain()
        h = 1e-6
        for _ in range(50):
            q, qd = rng.uniform(-np.pi, np.pi, chain.n), rng.normal(size=chain.n)
            x = rng.normal(size=chain.n)
            Mdot = (mass_matrix(chain, q + h * qd) - mass_matrix(chain, q - h * qd)) / (2 * h)
            N = Mdot - 2 * coriolis_matrix(chain, q, qd)
            assert abs(x @ N @ x) / (x @ x) < 1e-4


class TestGravity:
    def test_vertical_link(self):
        assert gravity_vector(single_link(), np.array([np.pi / 2])) == pytest.approx([0.0], abs=1e-15)

    def test_horizontal_link(self):
        assert gravity_vector(single_link(), np.zeros(1)) == pytest.approx([4.905], abs=1e-12)

    def test_gradient_of_potential(self, arm7, rng):
        h = 1e-6
        for _ in range(100):
            q = rng.uniform(-np.pi, np.pi, 7)
            grad = np.array([(potential_energy(arm7, q + h * e) - potential_energy(arm7, q - h * e))
                             / (2 * h) for e in np.eye(7)])
            G = gravity_vector(arm7, q)
            assert np.linalg.norm(G - grad) / np.linalg.norm(G) < 1e-5

    def test_symbolic_spatial(self, spatial, rng):
        chain, sym = spatial
        for _ in range(20):
            q = rng.uniform(-np.pi, np.pi, 3)
            np.testing.assert_allclose(gravity_vector(chain, q), sym.gravity_vector(q), atol=1e-12)


class TestFriction:
    def test_zero_velocity(self, arm7):
        np.testing.assert_array_equal(friction_torque(arm7, np.zeros(7)), np.zeros(7))

    def test_joint_one_value(self, arm7):
        qd = np.zeros(7)
        qd[0] = 0.1
        fr = friction_torque(arm7, qd)[0]
        assert fr == pytest.approx(1.104 * 0.1 + 3.704 * np.tanh(2.0), abs=1e-12)
        assert fr == pytest.approx(3.6816, abs=1e-3)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-50, 50), min_size=7, max_size=7))
    def test_odd_and_dissipative(self, v):
        from humanreach.chain import canonical_7dof

        chain = canonical_7dof()
        qd = np.array(v)
        fr = friction_torque(chain, qd)
        np.testing.assert_allclose(friction_torque(chain, -qd), -fr)
        assert qd @ fr >= 0


class TestForwardDynamics:
    def test_rest_without_gravity(self, arm7):
        state = JointState(np.zeros(7), np.zeros(7))
        qdd = forward_dynamics(arm7.without_gravity(), state, np.zeros(7))
        np.testing.assert_array_equal(qdd, np.zeros(7))

    def test_free_fall(self):
        chain = single_link(mass=1.0, com=1.0, length=1.0)
        qdd = forward_dynamics(chain, JointState([0.0], [0.0]), np.zeros(1))
        assert qdd == pytest.approx([-9.81], abs=1e-12)

    def test_round_trip(self, arm7, rng):
        for _ in range(50):
            q, qd, tau = rng.uniform(-np.pi, np.pi, 7), rng.normal(size=7), rng.normal(size=7)
            qdd = forward_dynamics(arm7, JointState(q, qd), tau, friction_on=False)
            back = inverse_dynamics(arm7, JointState(q, qd, qdd))
            np.testing.assert_allclose(back, tau, atol=1e-7)

    def test_disturbance_adds_to_torque(self, arm7, rng):
        q, qd, tau, d = rng.normal(size=7), rng.normal(size=7), rng.normal(size=7), rng.normal(size=7)
        state = JointState(q, qd)
        np.testing.assert_allclose(forward_dynamics(arm7, state, tau, d),
                                   forward_dynamics(arm7, state, tau + d), atol=1e-10)

    def test_friction_opposes_motion(self, arm7):
        state = JointState(np.zeros(7), np.full(7, 0.5))
        with_fr = forward_dynamics(arm7, state, np.zeros(7), friction_on=True)
        without = forward_dynamics(arm7, state, np.zeros(7), friction_on=False)
        M = mass_matrix(arm7, state.q)
        np.testing.assert_allclose(M @ (without - with_fr), friction_torque(arm7, state.qdot),
                                   atol=1e-9)

    def test_singular_inertia(self):
        chain = single_link(mass=1.0, com=0.0, length=0.0, inertia=0.0)
        with pytest.raises(SingularConfigurationError):
            forward_dynamics(chain, JointState([0.0], [0.0]), np.zeros(1))

    def test_energy_conservation_planar(self, planar_chain, symbolic_planar):
        state = JointState([0.3, -0.4], [0.0, 0.0])
        e0 = total_energy(planar_chain, state.q, state.qdot)
        assert e0 == pytest.approx(symbolic_planar.energy(state.q, state.qdot), abs=1e-12)
        zero = np.zeros(2)
        worst = 0.0
        for _ in range(5000):
            state = rk4_step(planar_chain, state, zero, 1e-3, friction_on=False)
            worst = max(worst, abs(total_energy(planar_chain, state.q, state.qdot) - e0) / abs(e0))
        assert worst < 1e-3


class TestTerms:
    def test_batched_terms_match_individual(self, arm7, rng):
        q, qd = rng.normal(size=7), rng.normal(size=7)
        t = dynamics_terms(arm7, q, qd, friction_on=True)
        np.testing.assert_allclose(t.M, mass_matrix(arm7, q), atol=1e-13)
        np.testing.assert_allclose(t.C, coriolis_matrix(arm7, q, qd), atol=1e-13)
        np.testing.assert_allclose(t.G, gravity_vector(arm7, q), atol=1e-13)
        np.testing.assert_allclose(t.Fr, friction_torque(arm7, qd), atol=1e-13)
