"""Range conversion and linear least-squares multilateration.

Round-trip times convert to ranges via half the speed of light. Position
fixes come from the classic linearization: pick a reference anchor, subtract
its circle equation from the others, and solve the resulting linear system
through explicit 2x2 normal equations. The reference is the anchor with the
smallest measured range, since obstructed paths can only inflate a range.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, DegenerateGeometryError

SPEED_OF_LIGHT = 3.0e8  # m/s

# Normal-equation condition number beyond which a fix is rejected.
CONDITION_LIMIT = 1e8


@dataclass(frozen=True)
class ApConstellation:
    """Known 2-D anchor coordinates, one row per access point."""

    positions: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        object.__setattr__(self, "positions", pos)
        if pos.ndim != 2 or pos.shape[1] != 2:
            raise ContractViolation("positions must be an (M, 2) array")
        if pos.shape[0] < 3:
            raise ContractViolation("at least 3 access points are required")
        if _collinear(pos):
            warnings.warn("all access points are (nearly) collinear; "
                          "position fixes will be unreliable", stacklevel=2)

    @property
    def count(self) -> int:
        return self.positions.shape[0]


def _collinear(positions: np.ndarray, rtol: float = 1e-9) -> bool:
    centered = positions - positions.mean(axis=0)
    s = np.linalg.svd(centered, compute_uv=False)
    return s[1] <= rtol * max(s[0], 1.0)


def rtt_to_range(tau):
    """Convert round-trip time(s) in seconds to range(s) in meters."""
    tau = np.asarray(tau, dtype=float)
    if np.any(tau <= 0) or not np.all(np.isfinite(tau)):
        raise ContractViolation("round-trip times must be positive and finite")
    out = SPEED_OF_LIGHT * tau / 2.0
    return float(out) if out.ndim == 0 else out


def lls_multilaterate(positions, ranges, cond_limit: float = CONDITION_LIMIT) -> np.ndarray:
    """Fix a 2-D position from >= 3 anchors and measured ranges.

    The anchor with the smallest range is the reference; subtracting its
    circle equation from every other anchor's yields a linear system solved
    via the 2x2 normal equations.

    Args:
        positions: (K, 2) anchor coordinates, K >= 3.
        ranges: K measured ranges (m).
        cond_limit: reject the fix when the normal-equation condition number
            exceeds this.

    Returns:
        The (2,) position estimate.

    Raises:
        DegenerateGeometryError: rank-deficient or too ill-conditioned
            geometry; callers typically discard the anchor combination.
    """
    positions = np.asarray(positions, dtype=float)
    ranges = np.asarray(ranges, dtype=float)
    if positions.ndim != 2 or positions.shape[1] != 2:
        raise ContractViolation("positions must be a (K, 2) array")
    k = positions.shape[0]
    if k < 3:
        raise ContractViolation("multilateration needs at least 3 anchors")
    if ranges.shape != (k,):
        raise ContractViolation("one range per anchor is required")

    ref = int(np.argmin(ranges))
    others = np.arange(k) != ref
    diff = positions[others] - positions[ref]
    a = 2.0 * diff
    sq = np.sum(positions**2, axis=1)
    b = (sq[others] - sq[ref]) - (ranges[others] ** 2 - ranges[ref] ** 2)

    g = a.T @ a
    h = a.T @ b
    trace = g[0, 0] + g[1, 1]
    det = g[0, 0] * g[1, 1] - g[0, 1] * g[1, 0]
    disc = max(trace * trace - 4.0 * det, 0.0)
    lam_max = 0.5 * (trace + np.sqrt(disc))
    lam_min = 0.5 * (trace - np.sqrt(disc))
    if lam_min <= 0 or lam_max / lam_min > cond_limit:
        raise DegenerateGeometryError(
            f"normal equations too ill-conditioned (eigenvalues {lam_min:.3e}, "
            f"{lam_max:.3e})"
        )
    inv_det = 1.0 / det
    x = inv_det * (g[1, 1] * h[0] - g[0, 1] * h[1])
    y = inv_det * (g[0, 0] * h[1] - g[0, 1] * h[0])
    return np.array([x, y])


def ranging_error(ap, gt, tau: float) -> float:
    """Absolute difference between the true distance and the RTT range."""
    ap = np.asarray(ap, dtype=float)
    gt = np.asarray(gt, dtype=float)
    return float(abs(np.linalg.norm(ap - gt) - rtt_to_range(tau)))
