"""Kinematic and dynamic description of serial revolute manipulators.

Frame convention
----------------
Joint ``i`` (1-based) sits at the origin ``O_{i-1}`` of frame ``i-1`` and
rotates about ``axis`` expressed in frame ``i-1``.  Link ``i`` is rigidly
attached to frame ``i``, whose orientation is ``R_i = R_{i-1} Rot(axis, q_i)``.

* ``offset``  -- ``O_i - O_{i-1}`` expressed in frame ``i``.
* ``com``     -- ``B_i - O_i`` (centre of mass relative to the distal origin)
  expressed in frame ``i``.
* ``inertia`` -- 3x3 tensor about the centre of mass, in frame ``i``.

The end-effector is the origin ``O_N`` of the last frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError, ValidationError

STANDARD_GRAVITY = 9.81
DEFAULT_COULOMB_SLOPE = 20.0

# Table of the 7-DOF arm used throughout the examples and the CLI builtins.
_TABLE_IXX = (0.006, 0.012, 0.003, 0.005, 0.001, 0.002, 0.001)
_TABLE_IYY = (0.001, 0.002, 0.000, 0.001, 0.000, 0.001, 0.000)
_TABLE_IZZ = (0.006, 0.011, 0.003, 0.005, 0.001, 0.002, 0.001)
_TABLE_LENGTH = (0.085, 0.171, 0.069, 0.148, 0.095, 0.0, 0.0755)
_TABLE_COM = (0.011, 0.091, 0.007, 0.051, 0.058, 0.0, 0.0185)
_TABLE_MASS = (0.81, 2.096, 0.538, 0.407, 0.459, 0.396, 0.135)
_TABLE_COULOMB = (3.704, 5.02, 1.359, 1.240, 0.607, 0.979, 0.778)
_TABLE_VISCOUS = (1.104, 2.086, 1.191, 1.016, 0.668, 0.794, 0.604)

# shoulder flexion/abduction/humeral rotation, elbow flexion,
# forearm pronation, wrist flexion/deviation (arm hanging along -z)
_BUILTIN_AXES = (
    (1.0, 0.0, 0.0),
    (0.0, 1.0, 0.0),
    (0.0, 0.0, 1.0),
    (1.0, 0.0, 0.0),
    (0.0, 0.0, 1.0),
    (0.0, 1.0, 0.0),
    (1.0, 0.0, 0.0),
)
# first link is the horizontal shoulder offset, the rest hang along -z
_BUILTIN_DIRECTIONS = ((1.0, 0.0, 0.0),) + ((0.0, 0.0, -1.0),) * 6

HOME_POSITION_7DOF = (0.085, 0.0, -0.5585)


def _as_vec3(value, what):
    arr = np.asarray(value, dtype=float)
    if arr.shape != (3,):
        raise ValueError(f"{what} must be a 3-vector, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class LinkParams:
    """Mass, geometry and friction of one link/joint pair."""

    mass: float
    com: np.ndarray
    inertia: np.ndarray
    axis: np.ndarray
    offset: np.ndarray
    viscous: float = 0.0
    coulomb: float = 0.0
    slope: float = DEFAULT_COULOMB_SLOPE

    def __post_init__(self):
        object.__setattr__(self, "mass", float(self.mass))
        object.__setattr__(self, "com", _as_vec3(self.com, "com"))
        object.__setattr__(self, "axis", _as_vec3(self.axis, "axis"))
        object.__setattr__(self, "offset", _as_vec3(self.offset, "offset"))
        inertia = np.asarray(self.inertia, dtype=float)
        if inertia.shape != (3, 3):
            raise ValueError(f"inertia must be 3x3, got shape {inertia.shape}")
        object.__setattr__(self, "inertia", inertia)
        object.__setattr__(self, "viscous", float(self.viscous))
        object.__setattr__(self, "coulomb", float(self.coulomb))
        object.__setattr__(self, "slope", float(self.slope))
        for arr in (self.com, self.axis, self.offset, self.inertia):
            arr.setflags(write=False)

    def __eq__(self, other):
        if not isinstance(other, LinkParams):
            return NotImplemented
        return (
            self.mass == other.mass
            and np.array_equal(self.com, other.com)
            and np.array_equal(self.inertia, other.inertia)
            and np.array_equal(self.axis, other.axis)
            and np.array_equal(self.offset, other.offset)
            and self.viscous == other.viscous
            and self.coulomb == other.coulomb
            and self.slope == other.slope
        )

    __hash__ = None

    def violations(self):
        """Return a list of human-readable invariant violations (empty if valid)."""
        out = []
        values = np.concatenate(
            [[self.mass, self.viscous, self.coulomb, self.slope],
             self.com, self.axis, self.offset, self.inertia.ravel()]
        )
        if not np.all(np.isfinite(values)):
            out.append("all parameters must be finite")
            return out
        if not self.mass > 0:
            out.append("mass must be positive")
        I = self.inertia
        if np.max(np.abs(I - I.T)) > 1e-12:
            out.append("inertia must be symmetric")
        else:
            eig = np.linalg.eigvalsh(I)
            if eig[0] < -1e-12:
                out.append("inertia must be positive semidefinite")
            else:
                a, b, c = eig
                # sorted eigenvalues: only the largest can break the triangle inequality
                if a + b < c - 1e-12:
                    out.append("principal moments violate the triangle inequality")
        if abs(np.linalg.norm(self.axis) - 1.0) > 1e-9:
            out.append("joint axis must be a unit vector")
        if self.viscous < 0:
            out.append("viscous friction coefficient must be non-negative")
        if self.coulomb < 0:
            out.append("coulomb friction coefficient must be non-negative")
        if not self.slope > 0:
            out.append("coulomb slope must be positive")
        return out


@dataclass(frozen=True, eq=False)
class ChainModel:
    """An N-link serial revolute chain plus the gravity vector acting on it."""

    links: tuple
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -STANDARD_GRAVITY]))
    name: str = "chain"

    def __post_init__(self):
        object.__setattr__(self, "links", tuple(self.links))
        g = _as_vec3(self.gravity, "gravity")
        g.setflags(write=False)
        object.__setattr__(self, "gravity", g)
        object.__setattr__(self, "name", str(self.name))

    @property
    def n(self):
        return len(self.links)

    @cached_property
    def axis_skews(self):
        """``(K, K @ K)`` stacks of joint-axis skew matrices for Rodrigues' formula."""
        K = np.zeros((self.n, 3, 3))
        for i, link in enumerate(self.links):
            x, y, z = link.axis
            K[i] = [[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]]
        return K, K @ K

    @cached_property
    def local_vectors(self):
        """Axes, offsets and COM offsets of all links as ``(N, 3)`` arrays."""
        return (np.array([l.axis for l in self.links]),
                np.array([l.offset for l in self.links]),
                np.array([l.com for l in self.links]))

    @cached_property
    def inertial_arrays(self):
        """COM inertia tensors ``(N, 3, 3)`` and masses ``(N,)``."""
        return (np.stack([l.inertia for l in self.links]),
                np.array([l.mass for l in self.links]))

    @cached_property
    def friction_arrays(self):
        """Viscous, Coulomb and slope coefficients, each ``(N,)``."""
        return (np.array([l.viscous for l in self.links]),
                np.array([l.coulomb for l in self.links]),
                np.array([l.slope for l in self.links]))

    def __len__(self):
        return len(self.links)

    def __eq__(self, other):
        if not isinstance(other, ChainModel):
            return NotImplemented
        return (
            self.name == other.name
            and np.array_equal(self.gravity, other.gravity)
            and len(self.links) == len(other.links)
            and all(a == b for a, b in zip(self.links, other.links))
        )

    __hash__ = None

    def validate(self, source=None, lines=None):
        """Raise :class:`ValidationError` on the first violated invariant."""
        if self.n < 1:
            raise ValidationError("chain must have at least one link", source=source)
        if not np.all(np.isfinite(self.gravity)):
            raise ValidationError("gravity must be finite", source=source)
        for i, link in enumerate(self.links, start=1):
            problems = link.violations()
            if problems:
                line = lines[i - 1] if lines else None
                raise ValidationError(problems[0], link=i, source=source, line=line)
        return self

    def with_scaled_mass(self, fraction):
        """Copy of the chain with every mass and inertia scaled by ``1 + fraction``."""
        s = 1.0 + fraction
        links = [
            LinkParams(
                mass=l.mass * s, com=l.com, inertia=l.inertia * s, axis=l.axis,
                offset=l.offset, viscous=l.viscous, coulomb=l.coulomb, slope=l.slope,
            )
            for l in self.links
        ]
        return ChainModel(links=links, gravity=self.gravity, name=self.name)

    def without_gravity(self):
        return ChainModel(links=self.links, gravity=np.zeros(3), name=self.name)


def inertia_from_six(values):
    """Build a symmetric tensor from ``(xx, yy, zz, xy, yz, xz)``."""
    xx, yy, zz, xy, yz, xz = (float(v) for v in values)
    return np.array([[xx, xy, xz], [xy, yy, yz], [xz, yz, zz]])


def inertia_to_six(I):
    return [float(I[0, 0]), float(I[1, 1]), float(I[2, 2]),
            float(I[0, 1]), float(I[1, 2]), float(I[0, 2])]


def canonical_7dof():
    """The 7-DOF anthropomorphic arm with the tabulated mass/friction data.

    At ``q = 0`` the first link points along +x and the rest of the arm hangs
    straight down, placing the end-effector at ``(0.085, 0.0, -0.5585)``.
    """
    links = []
    for i in range(7):
        d = np.array(_BUILTIN_DIRECTIONS[i])
        links.append(
            LinkParams(
                mass=_TABLE_MASS[i],
                # rounding drops float noise; + 0.0 turns -0.0 into 0.0
                com=d * round(_TABLE_COM[i] - _TABLE_LENGTH[i], 12) + 0.0,
                inertia=np.diag([_TABLE_IXX[i], _TABLE_IYY[i], _TABLE_IZZ[i]]),
                axis=_BUILTIN_AXES[i],
                offset=d * _TABLE_LENGTH[i] + 0.0,
                viscous=_TABLE_VISCOUS[i],
                coulomb=_TABLE_COULOMB[i],
                slope=DEFAULT_COULOMB_SLOPE,
            )
        )
    return ChainModel(links=links, name="builtin:7dof").validate()


# --------------------------------------------------------------------------
# structured-text (YAML) schema
# --------------------------------------------------------------------------

def _require(mapping, key, where, line=None, source=None):
    if not isinstance(mapping, dict) or key not in mapping:
        raise ConfigError(f"{where}: missing field '{key}'", source=source, line=line)
    return mapping[key]


def _number(value, what, line=None, source=None):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{what} must be a number, got {value!r}", source=source, line=line)
    return float(value)


def _numbers(value, count, what, line=None, source=None):
    if not isinstance(value, (list, tuple)) or len(value) != count:
        raise ConfigError(f"{what} must be a list of {count} numbers", source=source, line=line)
    return [_number(v, what, line, source) for v in value]


def _link_lines(text, key_path):
    """Best-effort 1-based line numbers of each item of the ``links`` sequence."""
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError:
        return None
    for key in key_path:
        if not isinstance(node, yaml.MappingNode):
            return None
        for k, v in node.value:
            if k.value == key:
                node = v
                break
        else:
            return None
    if not isinstance(node, yaml.SequenceNode):
        return None
    return [item.start_mark.line + 1 for item in node.value]


def parse_yaml(text, source=None):
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        problem = getattr(exc, "problem", None) or str(exc)
        raise ConfigError(f"cannot parse document: {problem}", source=source, line=line) from None


def chain_from_dict(doc, source=None, lines=None):
    if isinstance(doc, dict) and "robot" in doc and "links" not in doc:
        doc = doc["robot"]
    if not isinstance(doc, dict):
        raise ConfigError("robot description must be a mapping", source=source)
    raw_links = _require(doc, "links", "robot", source=source)
    if not isinstance(raw_links, list):
        raise ConfigError("'links' must be a list", source=source)
    gravity = doc.get("gravity", [0.0, 0.0, -STANDARD_GRAVITY])
    gravity = _numbers(gravity, 3, "gravity", source=source)
    links = []
    for i, item in enumerate(raw_links, start=1):
        line = lines[i - 1] if lines and i - 1 < len(lines) else None
        where = f"link {i}"
        if not isinstance(item, dict):
            raise ConfigError(f"{where} must be a mapping", source=source, line=line)
        friction = item.get("friction", {}) or {}
        if not isinstance(friction, dict):
            raise ConfigError(f"{where}: 'friction' must be a mapping", source=source, line=line)
        links.append(
            LinkParams(
                mass=_number(_require(item, "mass", where, line, source), f"{where}: mass", line, source),
                com=_numbers(_require(item, "com", where, line, source), 3, f"{where}: com", line, source),
                inertia=inertia_from_six(
                    _numbers(_require(item, "inertia", where, line, source), 6,
                             f"{where}: inertia", line, source)
                ),
                axis=_numbers(_require(item, "axis", where, line, source), 3, f"{where}: axis", line, source),
                offset=_numbers(item.get("offset", [0.0, 0.0, 0.0]), 3, f"{where}: offset", line, source),
                viscous=_number(friction.get("viscous", 0.0), f"{where}: friction.viscous", line, source),
                coulomb=_number(friction.get("coulomb", 0.0), f"{where}: friction.coulomb", line, source),
                slope=_number(friction.get("slope", DEFAULT_COULOMB_SLOPE),
                              f"{where}: friction.slope", line, source),
            )
        )
    name = str(doc.get("name", "chain"))
    chain = ChainModel(links=links, gravity=gravity, name=name)
    return chain.validate(source=source, lines=lines)


def load_chain(config_text, source=None):
    """Parse and validate a robot description document.

    Parameters
    ----------
    config_text : str
        YAML (or JSON) text with top-level ``gravity`` and ``links``; the
        whole thing may optionally be nested under a ``robot`` key.
    source : str, optional
        File name used in error messages.

    Raises
    ------
    ConfigError
        Unparseable document, missing field or wrong type.
    ValidationError
        A physical invariant does not hold; the message names the link.
    """
    doc = parse_yaml(config_text, source=source)
    lines = _link_lines(config_text, ["links"])
    if lines is None:
        lines = _link_lines(config_text, ["robot", "links"])
    return chain_from_dict(doc, source=source, lines=lines)


def chain_to_dict(chain):
    return {
        "name": chain.name,
        "gravity": [float(v) for v in chain.gravity],
        "links": [
            {
                "mass": link.mass,
                "com": [float(v) for v in link.com],
                "inertia": inertia_to_six(link.inertia),
                "axis": [float(v) for v in link.axis],
                "offset": [float(v) for v in link.offset],
                "friction": {
                    "viscous": link.viscous,
                    "coulomb": link.coulomb,
                    "slope": link.slope,
                },
            }
            for link in chain.links
        ],
    }


def dump_chain(chain):
    """Serialize ``chain`` to YAML text; ``load_chain`` inverts it exactly."""
    return yaml.safe_dump(chain_to_dict(chain), sort_keys=False, default_flow_style=None)


BUILTIN_ROBOTS = {"builtin:7dof": canonical_7dof}


def resolve_chain(spec):
    """Return a chain from a ``builtin:...`` selector or a file path."""
    spec = str(spec)
    if spec.startswith("builtin:"):
        try:
            return BUILTIN_ROBOTS[spec]()
        except KeyError:
            known = ", ".join(sorted(BUILTIN_ROBOTS))
            raise ConfigError(f"unknown builtin robot '{spec}' (known: {known})") from None
    path = Path(spec)
    if not path.is_file():
        raise ConfigError("file not found", source=spec)
    return load_chain(path.read_text(), source=spec)
