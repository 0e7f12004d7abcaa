"""Reference localizers: per-MP multilateration, pseudo-label-only, and a
simplified Kalman fusion of inertial prediction with multilateration fixes.

The Kalman baseline keeps a position/velocity state. Between MPs the
velocity is rotated by the integrated gyro heading change and rescaled by
the course speed ratio, then a position fix from the full-constellation
multilateration updates the state. The measurement model is linear, so the
recursion is an ordinary Kalman filter; the Joseph-form covariance update is
used on every step to keep the covariance symmetric PSD.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometryError
from .geometry import lls_multilaterate, rtt_to_range
from .harness import TrajectoryEstimate
from .sensing import CourseSegmentation, heading_change, segment_stream
from .simulator import Scenario


@dataclass(frozen=True)
class EkfConfig:
    """Noise parameters; defaults frozen from a coarse grid search on the
    mixed-speed noisy preset."""

    q_pos: float = 0.01
    q_vel: float = 0.25
    r: float = 9.0
    p0_pos: float = 25.0
    p0_vel: float = 4.0


def lls_rs_trajectory(scenario: Scenario) -> TrajectoryEstimate:
    """Per-MP multilateration over the full constellation.

    MPs with degenerate geometry inherit the previous estimate and are
    flagged in the metadata.
    """
    ranges = rtt_to_range(scenario.rtt)
    n = scenario.num_mps
    coords = np.empty((n, 2))
    flagged = []
    fallback = scenario.aps.positions.mean(axis=0)
    for i in range(n):
        try:
            coords[i] = lls_multilaterate(scenario.aps.positions, ranges[i])
        except DegenerateGeometryError:
            coords[i] = coords[i - 1] if i > 0 else fallback
            flagged.append(i + 1)
    return TrajectoryEstimate(coords=coords, method="lls",
                              metadata={"degenerate_mps": flagged})


def cda_trajectory(scenario: Scenario, k: int = 3, q1: int | None = None,
                   q2: int | None = None) -> TrajectoryEstimate:
    """Use the filtered-median pseudo-labels directly as the estimate."""
    from .features import build_pels_and_f2, cda_label

    features = build_pels_and_f2(scenario.rtt, scenario.aps, k)
    labels = cda_label(features, scenario.rtt, scenario.aps, q1, q2)
    return TrajectoryEstimate(coords=labels.c, method="cda",
                              metadata={"k": labels.k, "q1": labels.q1,
                                        "q2": labels.q2})


def ekf_trajectory(scenario: Scenario, config: EkfConfig | None = None,
                   seg: CourseSegmentation | None = None,
                   return_covariances: bool = False):
    """Kalman fusion of the inertial motion model with per-MP fixes."""
    config = config or EkfConfig()
    if seg is None:
        seg = segment_stream(scenario.imu, num_mps=scenario.num_mps)
    fixes = lls_rs_trajectory(scenario).coords
    n = scenario.num_mps
    delta = scenario.delta
    course_of = seg.course_of()
    ratios = seg.speed_ratio

    state = np.array([fixes[0, 0], fixes[0, 1], 0.0, 0.0])
    cov = np.diag([config.p0_pos, config.p0_pos, config.p0_vel, config.p0_vel])
    q = np.diag([config.q_pos, config.q_pos, config.q_vel, config.q_vel])
    r_mat = config.r * np.eye(2)
    h = np.zeros((2, 4))
    h[0, 0] = h[1, 1] = 1.0

    coords = np.empty((n, 2))
    coords[0] = state[:2]
    covariances = [cov.copy()]
    eye4 = np.eye(4)
    for i in range(1, n):
        theta = heading_change(scenario.imu, i)
        scale = ratios[course_of[i]] / ratios[course_of[i - 1]]
        c, s = np.cos(theta), np.sin(theta)
        rot = scale * np.array([[c, -s], [s, c]])
        f = eye4.copy()
        f[:2, 2:] = delta * rot
        f[2:, 2:] = rot
        state = f @ state
        cov = f @ cov @ f.T + q

        innov = fixes[i] - h @ state
        s_mat = h @ cov @ h.T + r_mat
        gain = cov @ h.T @ np.linalg.inv(s_mat)
        state = state + gain @ innov
        ikh = eye4 - gain @ h
        cov = ikh @ cov @ ikh.T + gain @ r_mat @ gain.T
        cov = 0.5 * (cov + cov.T)
        coords[i] = state[:2]
        covariances.append(cov.copy())

    estimate = TrajectoryEstimate(coords=coords, method="ekf",
                                  metadata={"config": config})
    if return_covariances:
        return estimate, covariances
    return estimate
