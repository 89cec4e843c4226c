"""Straightness and velocity-profile statistics of an end-effector trace."""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass

import numpy as np
from scipy.signal import find_peaks

from .errors import DegenerateMotionError

ONSET_FRACTION = 0.05
PEAK_FLOOR_FRACTION = 0.10
_PLATEAU_RTOL = 1e-6


@dataclass
class MotionMetrics:
    path_length: float
    chord_length: float
    max_lateral_deviation: float
    straightness_ratio: float
    peak_speed: float
    t_peak_fraction: float
    symmetry_index: float
    n_speed_peaks: int

    def to_dict(self):
        return asdict(self)

    def to_yaml(self):
        import yaml

        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def to_csv(self, header=True):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        d = self.to_dict()
        if header:
            w.writerow(list(d))
        w.writerow([repr(v) if isinstance(v, float) else v for v in d.values()])
        return buf.getvalue()


def _partial_integral(t, y, t_end):
    """Trapezoid integral of ``y`` from ``t[0]`` to ``t_end`` (linear interpolation)."""
    k = np.searchsorted(t, t_end, side="right")
    ts = np.append(t[:k], t_end)
    ys = np.append(y[:k], np.interp(t_end, t, y))
    return float(np.trapezoid(ys, ts))


def lateral_deviation(positions, start, end):
    """Distance of each point from the line through ``start`` and ``end``."""
    chord = end - start
    L = np.linalg.norm(chord)
    rel = positions - start
    if L == 0.0:
        return np.linalg.norm(rel, axis=1)
    u = chord / L
    along = rel @ u
    perp = rel - np.outer(along, u)
    return np.linalg.norm(perp, axis=1)


def motion_metrics(t, positions, speed=None):
    """Compute :class:`MotionMetrics` from sampled positions and speeds.

    ``speed`` defaults to the norm of the finite-difference velocity of
    ``positions``.  Onset and offset of the movement are the first and last
    samples whose speed exceeds 5 % of the peak; a flat peak is located at the
    middle of its plateau.
    """
    t = np.asarray(t, dtype=float)
    X = np.asarray(positions, dtype=float)
    if t.ndim != 1 or X.shape[0] != t.shape[0] or t.shape[0] < 3:
        raise DegenerateMotionError("trace needs at least 3 records")
    if speed is None:
        speed = np.linalg.norm(np.gradient(X, t, axis=0), axis=1)
    v = np.abs(np.asarray(speed, dtype=float))

    start, end = X[0], X[-1]
    chord = float(np.linalg.norm(end - start))
    peak = float(v.max())
    if chord < 1e-12 or peak == 0.0:
        raise DegenerateMotionError("trace has no net motion (zero chord or zero speed)")
    dev = lateral_deviation(X, start, end)
    path = float(np.sum(np.linalg.norm(np.diff(X, axis=0), axis=1)))

    moving = np.flatnonzero(v > ONSET_FRACTION * peak)
    t_on, t_off = t[moving[0]], t[moving[-1]]
    at_peak = np.flatnonzero(v >= peak * (1.0 - _PLATEAU_RTOL))
    t_peak = 0.5 * (t[at_peak[0]] + t[at_peak[-1]])
    t_move = t_off - t_on
    if t_move > 0:
        t_frac = float((t_peak - t_on) / t_move)
        window = slice(moving[0], moving[-1] + 1)
        tw, vw = t[window], v[window]
        total = float(np.trapezoid(vw, tw))
        before = _partial_integral(tw, vw, t_peak)
        sym = before / total if total > 0 else 0.5
    else:
        t_frac, sym = 0.5, 0.5

    # zero padding so that plateaus touching the ends still count as peaks
    padded = np.concatenate([[0.0], v, [0.0]])
    peaks, _ = find_peaks(padded, height=PEAK_FLOOR_FRACTION * peak,
                          prominence=PEAK_FLOOR_FRACTION * peak)
    return MotionMetrics(
        path_length=path,
        chord_length=chord,
        max_lateral_deviation=float(dev.max()),
        straightness_ratio=float(dev.max() / chord),
        peak_speed=peak,
        t_peak_fraction=min(max(t_frac, 0.0), 1.0),
        symmetry_index=min(max(sym, 0.0), 1.0),
        n_speed_peaks=int(len(peaks)),
    )


def compute_metrics(trace):
    """:class:`MotionMetrics` of a :class:`~humanreach.sim.SimTrace`."""
    return motion_metrics(trace.t, trace.x, trace.speed)
