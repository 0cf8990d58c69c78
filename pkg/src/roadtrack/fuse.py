"""Split predict/update Kalman filter on ``[p_x, p_y, v_x, v_y, theta, omega]``.

Motion is constant acceleration driven by a control input ``u = (a_x, a_y,
omega_dot)`` estimated from the track history; the process noise is the
discretized Wiener form ``Q = B W B^T``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from roadtrack.model import ModelError, StateVector, TrackHistory, check_covariance, normalize_angle

H = np.array(
    [
        [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, 1.0, 0.0],
    ]
)
H.setflags(write=False)

YAW_CANDIDATE_STEPS = (-1, 0, 1, 2)


class FilterError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Measurement:
    z: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        z = np.array(self.z, dtype=float).reshape(3)
        r = np.array(self.R, dtype=float).reshape(3, 3)
        check_covariance(r, "measurement covariance")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "R", r)


@dataclass(frozen=True)
class ControlInput:
    a_x: float = 0.0
    a_y: float = 0.0
    omega_dot: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in self.as_array()):
            raise ModelError("control input must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.a_x, self.a_y, self.omega_dot], dtype=float)


@dataclass(frozen=True)
class NoiseConfig:
    q_ax: float = 2.0
    q_ay: float = 2.0
    q_omega_dot: float = 5.0
    r_pos: float = 0.15
    r_yaw: float = math.radians(5.0)

    def __post_init__(self):
        if min(self.q_ax, self.q_ay, self.q_omega_dot, self.r_pos, self.r_yaw) < 0:
            raise ModelError("noise parameters must be >= 0")

    @property
    def W(self) -> np.ndarray:
        return np.diag([self.q_ax, self.q_ay, self.q_omega_dot])

    def default_R(self) -> np.ndarray:
        return np.diag([self.r_pos**2, self.r_pos**2, self.r_yaw**2])


def transition(dt: float) -> np.ndarray:
    f = np.eye(6)
    f[0, 2] = f[1, 3] = f[4, 5] = dt
    return f


def control_matrix(dt: float) -> np.ndarray:
    h = dt * dt / 2.0
    return np.array(
        [
            [h, 0.0, 0.0],
            [0.0, h, 0.0],
            [dt, 0.0, 0.0],
            [0.0, dt, 0.0],
            [0.0, 0.0, h],
            [0.0, 0.0, dt],
        ]
    )


def process_noise(dt: float, noise: NoiseConfig) -> np.ndarray:
    b = control_matrix(dt)
    q = b @ noise.W @ b.T
    return (q + q.T) / 2.0


def predict(state: StateVector, u: ControlInput, dt: float, noise: NoiseConfig) -> StateVector:
    if not dt > 0:
        raise FilterError("dt must be > 0")
    try:
        state.check()
    except ModelError as exc:
        raise FilterError(str(exc)) from exc
    f = transition(dt)
    x = f @ state.x + control_matrix(dt) @ u.as_array()
    p = f @ state.cov @ f.T + process_noise(dt, noise)
    return StateVector(x, (p + p.T) / 2.0)


def resolve_yaw(theta_pred: float, theta_meas: float) -> tuple[float, int]:
    """Pick the 90-degree rotation of a measured box yaw closest to the prediction.

    Returns the chosen yaw (unwrapped relative to ``theta_pred``) and the
    number of quarter turns applied; odd counts swap box length and width.
    """
    best = None
    for k in YAW_CANDIDATE_STEPS:
        innov = normalize_angle(theta_meas + k * math.pi / 2.0 - theta_pred)
        if best is None or abs(innov) < abs(best[0]) - 1e-12:
            best = (innov, k)
    innov, k = best
    return theta_pred + innov, k


def update(state: StateVector, z: Measurement) -> StateVector:
    theta_meas, _ = resolve_yaw(state.theta, z.z[2])
    x, p = state.x, state.cov
    y = z.z - H @ x
    y[2] = normalize_angle(theta_meas - x[4])
    s = H @ p @ H.T + z.R
    if not np.linalg.cond(s) < 1e14:
        raise FilterError("singular innovation covariance")
    k = np.linalg.solve(s, H @ p).T
    x_new = x + k @ y
    p_new = (np.eye(6) - k @ H) @ p
    return StateVector(x_new, (p_new + p_new.T) / 2.0)


def estimate_control(history: TrackHistory, t_history: float = 1.0) -> ControlInput:
    """Least-squares slope of ``(v_x, v_y, omega)`` over the recent history.

    Falls back to zero input unless the samples span at least half of
    ``t_history``.
    """
    if not history.entries:
        return ControlInput()
    t_end = history.entries[-1].stamp
    samples = history.since(t_end - t_history - 1e-9)
    if len(samples) < 2:
        return ControlInput()
    t = np.array([e.stamp for e in samples])
    if t[-1] - t[0] < t_history / 2.0 - 1e-9:
        return ControlInput()
    vals = np.array([[e.x[2], e.x[3], e.x[5]] for e in samples])
    tc = t - t.mean()
    slope = (tc @ (vals - vals.mean(axis=0))) / (tc @ tc)
    return ControlInput(*slope)
