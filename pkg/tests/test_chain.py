import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from humanreach.chain import (
    BUILTIN_ROBOTS,
    ChainModel,
    LinkParams,
    canonical_7dof,
    dump_chain,
    inertia_from_six,
    inertia_to_six,
    load_chain,
    resolve_chain,
)
from humanreach.errors import ConfigError, ValidationError
from humanreach.kinematics import forward_kinematics

SINGLE_LINK = """
gravity: [0, 0, -9.81]
links:
  - mass: 1.0
    com: [0.5, 0, 0]
    inertia: [0, 0, 0, 0, 0, 0]
    axis: [0, 0, 1]
"""

NEGATIVE_MASS_LINK3 = """
links:
  - {mass: 1.0, com: [0, 0, 0], inertia: [0.01, 0.01, 0.01, 0, 0, 0], axis: [0, 0, 1]}
  - {mass: 1.0, com: [0, 0, 0], inertia: [0.01, 0.01, 0.01, 0, 0, 0], axis: [0, 1, 0]}
  - {mass: -1, com: [0, 0, 0], inertia: [0.01, 0.01, 0.01, 0, 0, 0], axis: [0, 1, 0]}
"""


def link(**kw):
    base = dict(mass=1.0, com=(0, 0, 0), inertia=np.eye(3) * 0.01, axis=(0, 0, 1),
                offset=(0, 0, 0))
    base.update(kw)
    return LinkParams(**base)


class TestLoadChain:
    def test_seven_link_document(self, configs_dir):
        chain = load_chain((configs_dir / "seven_link.yaml").read_text())
        assert chain.n == 7
        assert chain.links[0].mass == 0.81
        assert chain.links[1].viscous == 2.086
        assert chain.links[0].coulomb == 3.704

    def test_negative_mass_names_link(self):
        with pytest.raises(ValidationError, match="link 3: mass must be positive") as info:
            load_chain(NEGATIVE_MASS_LINK3, source="arm.yaml")
        assert info.value.link == 3
        assert info.value.line == 5
        assert str(info.value).startswith("arm.yaml:5:")

    def test_single_link(self):
        chain = load_chain(SINGLE_LINK)
        assert chain.n == 1
        np.testing.assert_array_equal(chain.links[0].com, [0.5, 0, 0])
        np.testing.assert_array_equal(chain.links[0].inertia, np.zeros((3, 3)))

    def test_nested_under_robot_key(self):
        text = "robot:\n" + "\n".join("  " + line for line in SINGLE_LINK.strip().splitlines())
        assert load_chain(text).n == 1

    def test_optional_fields_default(self):
        lk = load_chain(SINGLE_LINK).links[0]
        assert (lk.viscous, lk.coulomb, lk.slope) == (0.0, 0.0, 20.0)
        np.testing.assert_array_equal(lk.offset, np.zeros(3))

    @pytest.mark.parametrize("text, message", [
        ("links: [{com: [0,0,0], inertia: [0,0,0,0,0,0], axis: [0,0,1]}]", "missing field 'mass'"),
        ("links: [{mass: x, com: [0,0,0], inertia: [0,0,0,0,0,0], axis: [0,0,1]}]",
         "mass must be a number"),
        ("links: [{mass: 1, com: [0,0], inertia: [0,0,0,0,0,0], axis: [0,0,1]}]",
         "com must be a list of 3"),
        ("gravity: [0, 0]\nlinks: []", "gravity must be a list of 3"),
        ("links: {a: 1}", "'links' must be a list"),
        ("links: [1, 2", "cannot parse"),
    ])
    def test_malformed(self, text, message):
        with pytest.raises(ConfigError, match=message):
            load_chain(text)

    def test_parse_error_has_line(self):
        with pytest.raises(ConfigError) as info:
            load_chain("links:\n  - mass: 1\n   bad: [", source="x.yaml")
        assert info.value.line is not None

    @pytest.mark.parametrize("field, value, message", [
        ("axis", "[0, 0, 2]", "unit vector"),
        ("inertia", "[1, 0.1, 0.1, 0, 0, 0]", "triangle inequality"),
        ("inertia", "[-1, 0, 0, 0, 0, 0]", "positive semidefinite"),
    ])
    def test_physical_invariants(self, field, value, message):
        doc = {"mass": "1", "com": "[0, 0, 0]", "inertia": "[0.1, 0.1, 0.1, 0, 0, 0]",
               "axis": "[0, 0, 1]"}
        doc[field] = value
        text = "links:\n  - " + "\n    ".join(f"{k}: {v}" for k, v in doc.items())
        with pytest.raises(ValidationError, match=message):
            load_chain(text)

    def test_negative_friction_rejected(self):
        text = SINGLE_LINK + "    friction: {viscous: -0.1}\n"
        with pytest.raises(ValidationError, match="viscous"):
            load_chain(text)


class TestCanonical:
    def test_inertias(self, arm7):
        assert arm7.links[1].inertia[0, 0] == 0.012
        assert arm7.links[6].inertia[2, 2] == 0.001

    def test_viscous(self, arm7):
        assert tuple(l.viscous for l in arm7.links) == (1.104, 2.086, 1.191, 1.016, 0.668, 0.794, 0.604)

    def test_coulomb_and_slope(self, arm7):
        assert tuple(l.coulomb for l in arm7.links) == (3.704, 5.02, 1.359, 1.240, 0.607, 0.979, 0.778)
        assert all(l.slope == 20.0 for l in arm7.links)

    def test_home_position(self, arm7):
        x = forward_kinematics(arm7, np.zeros(7)).x
        np.testing.assert_allclose(x, [0.085, 0.0, -0.5585], atol=1e-3)

    def test_passes_invariants(self, arm7):
        assert all(not l.violations() for l in arm7.links)

    def test_builtin_selector(self):
        assert resolve_chain("builtin:7dof") == canonical_7dof()
        assert set(BUILTIN_ROBOTS) == {"builtin:7dof"}

    def test_unknown_builtin(self):
        with pytest.raises(ConfigError, match="unknown builtin robot"):
            resolve_chain("builtin:nope")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="file not found"):
            resolve_chain(tmp_path / "missing.cfg")


class TestRoundTrip:
    def test_canonical(self, arm7):
        assert load_chain(dump_chain(arm7)) == arm7

    @settings(max_examples=40, deadline=None)
    @given(st.lists(
        st.tuples(
            st.floats(0.01, 10), st.floats(-1, 1), st.floats(0.001, 1), st.floats(0, 5),
            st.sampled_from([(1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0)]),
        ), min_size=1, max_size=6))
    def test_random_chains(self, specs):
        links = [LinkParams(mass=m, com=(c, 0.1 * c, 0.0), inertia=np.diag([i, i, 1.5 * i]),
                            axis=a, offset=(0.0, 0.0, -abs(c)), viscous=eta, coulomb=eta / 2)
                 for m, c, i, eta, a in specs]
        chain = ChainModel(links, name="random").validate()
        assert load_chain(dump_chain(chain)) == chain

    def test_inertia_six_order(self):
        I = inertia_from_six([1, 2, 3, 4, 5, 6])
        assert I[0, 1] == 4 and I[1, 2] == 5 and I[0, 2] == 6
        assert inertia_to_six(I) == [1, 2, 3, 4, 5, 6]


class TestChainModel:
    def test_scaled_mass(self, arm7):
        heavy = arm7.with_scaled_mass(0.2)
        for a, b in zip(arm7.links, heavy.links):
            assert b.mass == pytest.approx(1.2 * a.mass)
            np.testing.assert_allclose(b.inertia, 1.2 * a.inertia)
            np.testing.assert_array_equal(b.com, a.com)

    def test_equality_is_field_exact(self):
        a = ChainModel([link()])
        assert a == ChainModel([link()])
        assert a != ChainModel([link(mass=1.0 + 1e-15)])

    def test_empty_chain_rejected(self):
        with pytest.raises(ValidationError, match="at least one link"):
            ChainModel([]).validate()
