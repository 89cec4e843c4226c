"""Fixed-step closed-loop simulation of plant + reaching controller."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .controller import ControllerState, ControlOptions, control_step
from .dynamics import forward_dynamics
from .errors import ConfigError, HumanReachError, NumericalFailure
from .kinematics import JointState

CONVERGED = "converged"
TIMEOUT = "timeout"
NUMERICAL_FAILURE = "numerical_failure"


@dataclass
class Disturbance:
    """Constant torque on one joint (1-based) during ``[t0, t1)``."""

    joint: int
    torque: float
    t0: float = 0.0
    t1: float = math.inf

    def __post_init__(self):
        self.joint = int(self.joint)
        self.torque = float(self.torque)
        self.t0 = float(self.t0)
        self.t1 = math.inf if self.t1 is None else float(self.t1)
        if self.joint < 1:
            raise ConfigError(f"disturbance joint {self.joint} must be >= 1")

    def active(self, t):
        return self.t0 <= t < self.t1

    @classmethod
    def parse(cls, text):
        """Parse ``joint:torque[:t0[:t1]]``."""
        parts = text.split(":")
        if not 2 <= len(parts) <= 4:
            raise ConfigError(f"disturbance '{text}' must look like joint:torque[:t0[:t1]]")
        try:
            joint = int(parts[0])
            values = [float(p) for p in parts[1:]]
        except ValueError:
            raise ConfigError(f"disturbance '{text}' has a non-numeric field") from None
        return cls(joint, *values)


@dataclass
class SimConfig:
    dt: float = 1e-3
    max_time: float = 10.0
    initial_q: np.ndarray = None
    stop_position_tol: float = 0.02
    stop_speed_tol: float = 0.01
    friction_on: bool = False
    gravity_comp_on: bool = True
    observer_on: bool = None  # None -> controller params decide
    disturbances: list = field(default_factory=list)
    mass_perturbation: float = 0.0

    def __post_init__(self):
        if self.initial_q is not None:
            self.initial_q = np.asarray(self.initial_q, dtype=float)
        self.disturbances = [d if isinstance(d, Disturbance) else Disturbance(**d)
                             for d in self.disturbances]
        self.validate()

    def validate(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ConfigError("simulation dt must be positive")
        if not self.max_time >= self.dt:
            raise ConfigError("simulation max_time must be at least dt")
        if not (self.stop_position_tol > 0 and self.stop_speed_tol > 0):
            raise ConfigError("stop tolerances must be positive")
        if not self.mass_perturbation > -1.0:
            raise ConfigError("mass perturbation must be greater than -1")
        return self

    def disturbance_vector(self, n, t):
        d = np.zeros(n)
        for dist in self.disturbances:
            if not 1 <= dist.joint <= n:
                raise ConfigError(f"disturbance joint {dist.joint} outside 1..{n}")
            if dist.active(t):
                d[dist.joint - 1] += dist.torque
        return d


_SIM_KEYS = {"dt", "max_time", "initial_q", "tolerances", "toggles", "disturbance", "perturbation"}


def config_from_dict(doc, source=None):
    """Build a :class:`SimConfig` from a ``simulation`` mapping.

    Returns ``(config, defaulted)`` with the names of fields left at default.
    """
    if isinstance(doc, dict) and "simulation" in doc:
        doc = doc["simulation"]
    doc = doc or {}
    if not isinstance(doc, dict):
        raise ConfigError("simulation section must be a mapping", source=source)
    unknown = set(doc) - _SIM_KEYS
    if unknown:
        raise ConfigError(f"unknown simulation field(s): {', '.join(sorted(unknown))}", source=source)
    defaults = SimConfig()
    defaulted = []
    tol = doc.get("tolerances", {}) or {}
    tog = doc.get("toggles", {}) or {}
    pert = doc.get("perturbation", {}) or {}

    def pick(mapping, key, fallback, label):
        if key in mapping:
            return mapping[key]
        defaulted.append(label)
        return fallback

    try:
        cfg = SimConfig(
            dt=float(pick(doc, "dt", defaults.dt, "dt")),
            max_time=float(pick(doc, "max_time", defaults.max_time, "max_time")),
            initial_q=pick(doc, "initial_q", None, "initial_q"),
            stop_position_tol=float(pick(tol, "position", defaults.stop_position_tol,
                                         "tolerances.position")),
            stop_speed_tol=float(pick(tol, "speed", defaults.stop_speed_tol, "tolerances.speed")),
            friction_on=bool(pick(tog, "friction", defaults.friction_on, "toggles.friction")),
            gravity_comp_on=bool(pick(tog, "gravity_comp", defaults.gravity_comp_on,
                                      "toggles.gravity_comp")),
            observer_on=pick(tog, "observer", None, "toggles.observer"),
            disturbances=[Disturbance(**d) for d in pick(doc, "disturbance", [], "disturbance")],
            mass_perturbation=float(pick(pert, "mass", 0.0, "perturbation.mass")),
        )
    except ConfigError as exc:
        raise ConfigError(exc.message, source=source) from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"simulation: {exc}", source=source) from None
    return cfg, defaulted


def config_to_dict(cfg):
    return {
        "dt": cfg.dt,
        "max_time": cfg.max_time,
        "initial_q": None if cfg.initial_q is None else [float(v) for v in cfg.initial_q],
        "tolerances": {"position": cfg.stop_position_tol, "speed": cfg.stop_speed_tol},
        "toggles": {"friction": cfg.friction_on, "gravity_comp": cfg.gravity_comp_on,
                    "observer": cfg.observer_on},
        "disturbance": [{"joint": d.joint, "torque": d.torque, "t0": d.t0,
                         "t1": None if math.isinf(d.t1) else d.t1} for d in cfg.disturbances],
        "perturbation": {"mass": cfg.mass_perturbation},
    }


# --------------------------------------------------------------------------
# trace
# --------------------------------------------------------------------------

_VECTOR_FIELDS = ("q", "qdot", "u_raw", "u_filtered", "d_hat", "kv", "fmus")


@dataclass
class SimTrace:
    """Uniformly sampled closed-loop history, one row per control tick."""

    t: np.ndarray
    q: np.ndarray
    qdot: np.ndarray
    x: np.ndarray
    xdot: np.ndarray
    dx_norm: np.ndarray
    speed: np.ndarray
    u_raw: np.ndarray
    u_filtered: np.ndarray
    d_hat: np.ndarray
    kv: np.ndarray
    fmus: np.ndarray
    reason: str = CONVERGED
    message: str = ""

    @property
    def n_joints(self):
        return self.q.shape[1]

    def __len__(self):
        return self.t.shape[0]

    @property
    def converged(self):
        return self.reason == CONVERGED

    @property
    def final_error(self):
        return float(self.dx_norm[-1])

    def columns(self):
        n = self.n_joints
        cols = ["t"]
        cols += [f"q{i}" for i in range(1, n + 1)]
        cols += [f"qdot{i}" for i in range(1, n + 1)]
        cols += ["x", "y", "z", "vx", "vy", "vz", "dx_norm", "speed"]
        for name in ("u_raw", "u_filtered", "d_hat", "kv", "fmus"):
            cols += [f"{name}{i}" for i in range(1, n + 1)]
        return cols

    def as_array(self):
        return np.column_stack([
            self.t, self.q, self.qdot, self.x, self.xdot, self.dx_norm, self.speed,
            self.u_raw, self.u_filtered, self.d_hat, self.kv, self.fmus,
        ])


class _TraceBuilder:
    def __init__(self):
        self.rows = {k: [] for k in ("t", "q", "qdot", "x", "xdot", "dx_norm", "speed",
                                     "u_raw", "u_filtered", "d_hat", "kv", "fmus")}

    def append(self, t, state, out):
        r = self.rows
        r["t"].append(t)
        r["q"].append(state.q.copy())
        r["qdot"].append(state.qdot.copy())
        r["x"].append(out.x.copy())
        r["xdot"].append(out.xdot.copy())
        r["dx_norm"].append(out.dx_norm)
        r["speed"].append(float(np.linalg.norm(out.xdot)))
        r["u_raw"].append(out.u_raw)
        r["u_filtered"].append(out.u_filtered)
        r["d_hat"].append(out.disturbance_estimate)
        r["kv"].append(out.Kv_diag)
        r["fmus"].append(out.Fmus_diag)

    def build(self, reason, message=""):
        arrays = {k: np.asarray(v, dtype=float) for k, v in self.rows.items()}
        return SimTrace(**arrays, reason=reason, message=message)


def write_trace_csv(trace, path_or_file):
    """One header row, then one row per tick in :meth:`SimTrace.columns` order."""
    own = not hasattr(path_or_file, "write")
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(trace.columns())
        for row in trace.as_array():
            w.writerow([repr(float(v)) for v in row])
    finally:
        if own:
            fh.close()


class TraceFormatError(HumanReachError, ValueError):
    def __init__(self, message, row=None):
        self.row = row
        super().__init__(f"row {row}: {message}" if row is not None else message)


def read_trace_csv(path):
    """Inverse of :func:`write_trace_csv`; reason is not stored in the CSV."""
    return parse_trace_csv(Path(path).read_text())


def parse_trace_csv(text):
    """Parse trace CSV text; errors carry the 1-based row number."""
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    if not rows:
        raise TraceFormatError("trace file is empty")
    header = rows[0]
    n_cols = len(header)
    n = (n_cols - 9) // 7
    if n < 1 or 9 + 7 * n != n_cols or header[0] != "t":
        raise TraceFormatError("unrecognized header", row=1)
    expected = SimTrace(*[np.zeros((1, n))] * 12).columns()
    if header != expected:
        raise TraceFormatError("unrecognized header", row=1)
    if len(rows) < 2:
        raise TraceFormatError("trace has no data rows")
    data = np.empty((len(rows) - 1, n_cols))
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != n_cols:
            raise TraceFormatError(f"expected {n_cols} fields, got {len(row)}", row=i)
        try:
            data[i - 2] = [float(v) for v in row]
        except ValueError:
            raise TraceFormatError("non-numeric field", row=i) from None
    cut = np.cumsum([1, n, n, 3, 3, 1, 1, n, n, n, n])
    parts = np.split(data, cut, axis=1)
    return SimTrace(
        t=parts[0][:, 0], q=parts[1], qdot=parts[2], x=parts[3], xdot=parts[4],
        dx_norm=parts[5][:, 0], speed=parts[6][:, 0], u_raw=parts[7],
        u_filtered=parts[8], d_hat=parts[9], kv=parts[10], fmus=parts[11],
        reason="unknown",
    )


# --------------------------------------------------------------------------
# integration
# --------------------------------------------------------------------------

def rk4_step(chain, state, torque, dt, disturbance=None, friction_on=True):
    """Classical RK4 on ``(q, qdot)`` with ``torque`` held over the step."""
    q0, v0 = state.q, state.qdot

    def acc(q, v):
        return forward_dynamics(chain, JointState(q, v), torque, disturbance, friction_on)

    a1 = acc(q0, v0)
    q2, v2 = q0 + 0.5 * dt * v0, v0 + 0.5 * dt * a1
    a2 = acc(q2, v2)
    q3, v3 = q0 + 0.5 * dt * v2, v0 + 0.5 * dt * a2
    a3 = acc(q3, v3)
    q4, v4 = q0 + dt * v3, v0 + dt * a3
    a4 = acc(q4, v4)
    q = q0 + dt / 6.0 * (v0 + 2 * v2 + 2 * v3 + v4)
    v = v0 + dt / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4)
    return JointState(q, v, a1)


class Simulation:
    """Closed loop of a plant, a nominal model and the reaching controller.

    The plant is ``chain`` with masses scaled by ``config.mass_perturbation``;
    the controller always uses the unperturbed ``chain``.
    """

    def __init__(self, chain, params, config=None):
        self.config = config or SimConfig()
        params.check(chain)
        self.nominal = chain
        self.plant = (chain.with_scaled_mass(self.config.mass_perturbation)
                      if self.config.mass_perturbation else chain)
        self.params = params
        q0 = self.config.initial_q if self.config.initial_q is not None else np.zeros(chain.n)
        if q0.shape != (chain.n,):
            raise ConfigError(f"initial_q has {q0.shape[0]} entries, robot has {chain.n} joints")
        self.state = JointState(q0, np.zeros(chain.n))
        self.controller_state = ControllerState()
        self.options = ControlOptions(
            gravity_comp=self.config.gravity_comp_on,
            friction_comp=self.config.friction_on,
            observer=self.config.observer_on,
            degenerate_tol=self.config.stop_position_tol,
        )
        self.steps = 0
        self._trace = _TraceBuilder()

    @property
    def time(self):
        # integer step count keeps the time grid exact
        return self.steps * self.config.dt

    def step(self):
        """Compute control at the current time, record it, integrate one step.

        Returns ``(next_state, control_output)``.
        """
        cfg = self.config
        t = self.time
        out = control_step(self.nominal, self.params, self.controller_state, self.state,
                           cfg.dt, self.options)
        self._trace.append(t, self.state, out)
        self.last_output = out
        d = cfg.disturbance_vector(self.nominal.n, t)
        nxt = rk4_step(self.plant, self.state, out.u_applied, cfg.dt, d, cfg.friction_on)
        if not (np.all(np.isfinite(nxt.q)) and np.all(np.isfinite(nxt.qdot))):
            raise NumericalFailure(f"non-finite state at t={t + cfg.dt:.6g} s",
                                   time=t + cfg.dt, state=nxt)
        self.state = nxt
        self.steps += 1
        return nxt, out

    def _done(self, out):
        cfg = self.config
        speed = float(np.linalg.norm(out.xdot))
        if out.dx_norm < cfg.stop_position_tol and speed < cfg.stop_speed_tol:
            return CONVERGED
        if self.time >= cfg.max_time - 1e-9 * cfg.dt:
            return TIMEOUT
        return None

    def run(self):
        cfg = self.config
        try:
            while True:
                t = self.time
                out = control_step(self.nominal, self.params, self.controller_state,
                                   self.state, cfg.dt, self.options)
                self._trace.append(t, self.state, out)
                reason = self._done(out)
                if reason is not None:
                    return self._trace.build(reason)
                d = cfg.disturbance_vector(self.nominal.n, t)
                nxt = rk4_step(self.plant, self.state, out.u_applied, cfg.dt, d, cfg.friction_on)
                if not (np.all(np.isfinite(nxt.q)) and np.all(np.isfinite(nxt.qdot))):
                    raise NumericalFailure(f"non-finite state at t={t + cfg.dt:.6g} s",
                                           time=t + cfg.dt, state=nxt)
                self.state = nxt
                self.steps += 1
        except (NumericalFailure, ArithmeticError) as exc:
            trace = self._trace.build(NUMERICAL_FAILURE, f"t={self.time:.6g} s: {exc}")
            return trace


def run(chain, params, config=None):
    """Simulate until converged, timed out or numerically failed."""
    return Simulation(chain, params, config).run()
