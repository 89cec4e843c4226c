"""Human-like reaching controller.

The joint command is

    u = -W_f [ K_V(t) qdot + k F_mus(t) J_lin(q)^T (x - x_d) ]

where ``K_V`` and ``F_mus`` are diagonal, ``W_f`` is a bank of first-order
low-pass filters and the time variation of both diagonals is driven by the
normalized progress ``phase = pi/2 * (|dx0| - |dx|) / |dx0|``: damping grows
as ``sin(phase)`` and muscle stiffness decays as ``cos(phase)``.

A generalized-momentum disturbance observer and a gravity/friction
feedforward, both built on a nominal :class:`~humanreach.chain.ChainModel`,
are summed at the plant input after the filter.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .dynamics import dynamics_terms, gravity_vector
from .errors import ConfigError, DimensionError, HumanReachError
from .kinematics import JointState, frames, jacobian

HALF_PI = 0.5 * np.pi

TABLE2_C = (20.0, 10.0, 20.0, 10.0, 10.0, 10.0, 0.1)
TABLE2_F = (180.0, 40.0, 10.0, 20.0, 1.0, 1.0, 1.0)
TABLE2_TAU = (0.015,) * 7
TABLE2_K = 13.0
TABLE2_TARGET = (0.3, 0.3, -0.3)
DEFAULT_OBSERVER_CUTOFF = 50.0


class ControllerNotInitialized(HumanReachError, RuntimeError):
    """The initial distance to the target has not been captured yet."""


@dataclass
class ControllerParams:
    """Gains of the reaching law plus observer settings."""

    C: np.ndarray
    f: np.ndarray
    tau: np.ndarray
    k: float
    target: np.ndarray
    observer_enabled: bool = True
    observer_cutoff: float = DEFAULT_OBSERVER_CUTOFF
    name: str = "controller"

    def __post_init__(self):
        self.C = np.asarray(self.C, dtype=float)
        self.f = np.asarray(self.f, dtype=float)
        self.tau = np.asarray(self.tau, dtype=float)
        if self.tau.ndim == 0:
            self.tau = np.full(self.C.shape, float(self.tau))
        self.k = float(self.k)
        self.target = np.asarray(self.target, dtype=float)
        self.observer_cutoff = float(self.observer_cutoff)
        self.observer_enabled = bool(self.observer_enabled)
        self.validate()

    @property
    def n(self):
        return self.C.shape[0]

    def validate(self):
        n = self.C.shape
        if self.C.ndim != 1 or self.f.shape != n or self.tau.shape != n:
            raise ConfigError("controller C, f and tau must be vectors of equal length")
        if self.target.shape != (3,):
            raise ConfigError("controller target must be a 3-vector")
        arrays = (self.C, self.f, self.tau, self.target)
        if not all(np.all(np.isfinite(a)) for a in arrays) or not np.isfinite(self.k):
            raise ConfigError("controller parameters must be finite")
        if np.any(self.C < 0):
            raise ConfigError("damping weights C must be non-negative")
        if np.any(self.f < 0):
            raise ConfigError("muscle stiffness coefficients f must be non-negative")
        if np.any(self.tau <= 0):
            raise ConfigError("filter time constants tau must be positive")
        if not self.k > 0:
            raise ConfigError("virtual spring stiffness k must be positive")
        if not self.observer_cutoff > 0:
            raise ConfigError("observer cutoff must be positive")
        return self

    def check(self, chain):
        if self.n != chain.n:
            raise DimensionError(
                f"controller has {self.n} joints but robot '{chain.name}' has {chain.n}"
            )
        return self


def table2_params(**overrides):
    """The 7-joint gain set with ``k = 13`` and target ``(0.3, 0.3, -0.3)``."""
    values = dict(C=TABLE2_C, f=TABLE2_F, tau=TABLE2_TAU, k=TABLE2_K,
                  target=TABLE2_TARGET, name="builtin:table2")
    values.update(overrides)
    return ControllerParams(**values)


# Gains refitted for the builtin arm's axis layout (same k, filter form and target).
TUNED_C = (2.6544, 0.9877, 0.2904, 0.9706, 0.02, 0.0153, 0.005)
TUNED_F = (1.4074, 0.5058, 0.8199, 0.1823, 0.395, 0.1317, 0.0418)
TUNED_TAU = (0.0606,) * 7


def tuned_params(**overrides):
    """Gains fitted to give a straight, single-peaked reach on ``builtin:7dof``."""
    values = dict(C=TUNED_C, f=TUNED_F, tau=TUNED_TAU, k=TABLE2_K,
                  target=TABLE2_TARGET, name="builtin:tuned")
    values.update(overrides)
    return ControllerParams(**values)


BUILTIN_CONTROLLERS = {"builtin:table2": table2_params, "builtin:tuned": tuned_params}


def params_from_dict(doc, source=None, defaults=None):
    """Build :class:`ControllerParams` from a ``controller`` mapping.

    Missing fields fall back to ``defaults`` (the table-2 set when omitted).
    Returns ``(params, defaulted)`` where ``defaulted`` lists the field names
    that were not given.
    """
    if isinstance(doc, dict) and "controller" in doc:
        doc = doc["controller"]
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError("controller section must be a mapping", source=source)
    base = defaults if defaults is not None else table2_params()
    observer = doc.get("observer", {}) or {}
    if not isinstance(observer, dict):
        raise ConfigError("controller.observer must be a mapping", source=source)
    defaulted = []

    def pick(mapping, key, fallback, label):
        if key in mapping:
            return mapping[key]
        defaulted.append(label)
        return fallback

    try:
        params = ControllerParams(
            C=pick(doc, "C", base.C, "C"),
            f=pick(doc, "f", base.f, "f"),
            tau=pick(doc, "tau", base.tau, "tau"),
            k=pick(doc, "k", base.k, "k"),
            target=pick(doc, "target", base.target, "target"),
            observer_enabled=pick(observer, "enabled", base.observer_enabled, "observer.enabled"),
            observer_cutoff=pick(observer, "cutoff", base.observer_cutoff, "observer.cutoff"),
            name=str(doc.get("name", base.name if not doc else "controller")),
        )
    except ConfigError as exc:
        raise ConfigError(exc.message, source=source) from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"controller: {exc}", source=source) from None
    return params, defaulted


def params_to_dict(params):
    return {
        "name": params.name,
        "C": [float(v) for v in params.C],
        "f": [float(v) for v in params.f],
        "tau": [float(v) for v in params.tau],
        "k": params.k,
        "target": [float(v) for v in params.target],
        "observer": {"enabled": params.observer_enabled, "cutoff": params.observer_cutoff},
    }


def resolve_params(spec):
    """Controller params from a ``builtin:...`` selector or a YAML file."""
    from .chain import parse_yaml

    spec = str(spec)
    if spec.startswith("builtin:"):
        try:
            return BUILTIN_CONTROLLERS[spec](), []
        except KeyError:
            known = ", ".join(sorted(BUILTIN_CONTROLLERS))
            raise ConfigError(f"unknown builtin controller '{spec}' (known: {known})") from None
    path = Path(spec)
    if not path.is_file():
        raise ConfigError("file not found", source=spec)
    return params_from_dict(parse_yaml(path.read_text(), source=spec), source=spec)


# --------------------------------------------------------------------------
# state
# --------------------------------------------------------------------------

@dataclass
class ControllerState:
    """Mutable per-run controller memory."""

    dx0_norm: float = None
    degenerate: bool = False
    filter_outputs: np.ndarray = None
    # generalized-momentum observer
    observer_state: np.ndarray = None
    observer_p0: np.ndarray = None
    observer_beta: np.ndarray = None
    disturbance_estimate: np.ndarray = None
    last_applied: np.ndarray = None

    @property
    def initialized(self):
        return self.dx0_norm is not None

    def initialize(self, n, dx0_norm, degenerate_tol=0.0):
        """Capture ``|dx0|`` once; tiny initial errors switch to pure damping."""
        self.dx0_norm = float(dx0_norm)
        self.degenerate = self.dx0_norm <= degenerate_tol or self.dx0_norm == 0.0
        self.filter_outputs = np.zeros(n)
        self.disturbance_estimate = np.zeros(n)
        self.observer_state = np.zeros(n)
        self.observer_p0 = None
        self.observer_beta = None
        self.last_applied = np.zeros(n)
        return self


@dataclass
class ControlOutput:
    u_filtered: np.ndarray
    u_raw: np.ndarray
    Kv_diag: np.ndarray
    Fmus_diag: np.ndarray
    u_applied: np.ndarray = None
    disturbance_estimate: np.ndarray = None
    x: np.ndarray = None
    xdot: np.ndarray = None
    dx_norm: float = None


# --------------------------------------------------------------------------
# law
# --------------------------------------------------------------------------

def progress_phase(dx_norm, dx0_norm):
    """``pi/2 * (|dx0| - |dx|) / |dx0|`` clamped to ``[0, pi/2]``."""
    if dx0_norm is None:
        raise ControllerNotInitialized("initial distance |dx0| has not been captured")
    if dx0_norm <= 0.0:
        return HALF_PI
    phase = HALF_PI * (dx0_norm - dx_norm) / dx0_norm
    return min(max(phase, 0.0), HALF_PI)


def _sin_cos(phase):
    # exact values at both ends of the clamped range
    if phase <= 0.0:
        return 0.0, 1.0
    if phase >= HALF_PI:
        return 1.0, 0.0
    return np.sin(phase), np.cos(phase)


def damping_diag(params, dx_norm, dx0_norm):
    """Diagonal of ``K_V``: ``C_i sin(phase)``; zero at start, ``C`` at the target."""
    return params.C * _sin_cos(progress_phase(dx_norm, dx0_norm))[0]


def muscle_diag(params, dx_norm, dx0_norm):
    """Diagonal of ``F_mus``: ``f_i cos(phase)``; ``f`` at start, zero at the target."""
    return params.f * _sin_cos(progress_phase(dx_norm, dx0_norm))[1]


def raw_control(params, state, qdot, J, x):
    """The bracket of the law before filtering, with its leading minus sign.

    Parameters
    ----------
    params : ControllerParams
    state : ControllerState
        Must be initialized (``dx0_norm`` captured).
    qdot : ndarray, shape (N,)
    J : JacobianPair or ndarray
        Only the linear-velocity rows are used.
    x : ndarray, shape (3,)
        Current end-effector position.

    Returns
    -------
    u_raw, Kv_diag, Fmus_diag : ndarray
    """
    if not state.initialized:
        raise ControllerNotInitialized("initial distance |dx0| has not been captured")
    qdot = np.asarray(qdot, dtype=float)
    if qdot.shape != (params.n,):
        raise DimensionError(f"qdot has shape {qdot.shape}, controller has {params.n} joints")
    J_lin = J.linear if hasattr(J, "linear") else np.asarray(J)[3:]
    if J_lin.shape != (3, params.n):
        raise DimensionError(f"Jacobian has {J_lin.shape[1]} columns, expected {params.n}")
    dx = np.asarray(x, dtype=float) - params.target
    dx_norm = float(np.linalg.norm(dx))
    if state.degenerate:
        s, c = 1.0, 0.0
    else:
        s, c = _sin_cos(progress_phase(dx_norm, state.dx0_norm))
    kv = params.C * s
    fm = params.f * c
    u_raw = -(kv * qdot + params.k * fm * (J_lin.T @ dx))
    return u_raw, kv, fm


def lpf_step(state, u_raw, dt, tau):
    """Advance the first-order filter bank by ``dt`` and return its output.

    Zero-order-hold exact discretization: ``y += (1 - exp(-dt/tau)) (u - y)``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    tau = np.asarray(tau, dtype=float)
    if np.any(tau <= 0):
        raise ValueError("filter time constants must be positive")
    u_raw = np.asarray(u_raw, dtype=float)
    if state.filter_outputs is None:
        state.filter_outputs = np.zeros_like(u_raw)
    alpha = -np.expm1(-dt / tau)
    state.filter_outputs = state.filter_outputs + alpha * (u_raw - state.filter_outputs)
    return state.filter_outputs.copy()


def observer_step(chain, state, q, qdot, u_applied, dt, cutoff, enabled=True,
                  friction_on=False, terms=None):
    """Update the generalized-momentum disturbance estimate.

    With ``p = M(q) qdot`` the plant obeys ``pdot = u + d + C^T qdot - G - Fr``,
    so the residual

        d_hat = K_o (p - p(0) - integral(u + C^T qdot - G - Fr + d_hat))

    follows ``d`` through a first-order lag of bandwidth ``cutoff``.
    ``u_applied`` is the (held) torque applied over the interval that ends
    now.  State-dependent terms are integrated with the trapezoid rule.
    """
    n = chain.n
    if not enabled:
        state.disturbance_estimate = np.zeros(n)
        return state.disturbance_estimate.copy()
    if terms is None:
        terms = dynamics_terms(chain, q, qdot, friction_on=friction_on)
    qdot = np.asarray(qdot, dtype=float)
    p = terms.M @ qdot
    beta = terms.C.T @ qdot - terms.G - terms.Fr
    if state.observer_p0 is None:
        state.observer_p0 = p
        state.observer_beta = beta
        state.observer_state = np.zeros(n)
        state.disturbance_estimate = np.zeros(n)
        return state.disturbance_estimate.copy()
    d_prev = state.disturbance_estimate
    state.observer_state = state.observer_state + dt * (
        np.asarray(u_applied, dtype=float) + 0.5 * (state.observer_beta + beta) + d_prev
    )
    state.observer_beta = beta
    state.disturbance_estimate = cutoff * (p - state.observer_p0 - state.observer_state)
    return state.disturbance_estimate.copy()


@dataclass
class ControlOptions:
    """Which model-based terms the controller adds at the plant input."""

    gravity_comp: bool = True
    friction_comp: bool = False
    observer: bool = None  # None -> follow params.observer_enabled
    degenerate_tol: float = 0.0


def control_step(chain, params, state, joint_state, dt, options=None):
    """One controller tick: kinematics, law, filter, feedforward, observer.

    ``chain`` is the controller's nominal model (it may differ from the plant).
    ``state`` is updated in place.
    """
    options = options or ControlOptions()
    if not isinstance(joint_state, JointState):
        raise TypeError("control_step expects a JointState")
    params.check(chain)
    joint_state.check(chain)
    q, qdot = joint_state.q, joint_state.qdot
    fs = frames(chain, q)
    J = jacobian(chain, joint_state, fs)
    x = fs.x
    dx_norm = float(np.linalg.norm(x - params.target))
    if not state.initialized:
        state.initialize(chain.n, dx_norm, options.degenerate_tol)

    observer_on = params.observer_enabled if options.observer is None else options.observer
    need_terms = observer_on or options.gravity_comp
    terms = dynamics_terms(chain, q, qdot, friction_on=options.friction_comp) if need_terms else None

    d_hat = observer_step(chain, state, q, qdot, state.last_applied, dt,
                          params.observer_cutoff, enabled=observer_on,
                          friction_on=options.friction_comp, terms=terms)
    u_raw, kv, fm = raw_control(params, state, qdot, J, x)
    u_filt = lpf_step(state, u_raw, dt, params.tau)

    u_applied = u_filt - d_hat
    if options.gravity_comp:
        # evaluated mid-hold so the held torque tracks G(q(t)) to second order in dt
        u_applied = u_applied + gravity_vector(chain, q + 0.5 * dt * qdot)
    if options.friction_comp:
        u_applied = u_applied + terms.Fr
    state.last_applied = u_applied
    return ControlOutput(
        u_filtered=u_filt, u_raw=u_raw, Kv_diag=kv, Fmus_diag=fm,
        u_applied=u_applied, disturbance_estimate=d_hat, x=x,
        xdot=J.linear @ qdot, dx_norm=dx_norm,
    )


def with_target(params, target):
    return replace(params, target=np.asarray(target, dtype=float))
