"""Inertial preprocessing: heading flags, course segmentation, speed ratios.

The raw inputs are a gyroscope z-axis stream and an acceleration-magnitude
stream sampled at a fixed rate. Measurement points (MPs) are spaced ``delta``
seconds apart, so MP ``n`` sits at stream time ``n * delta`` (1-based). From
the streams we derive, in order:

1. per-interval heading changes (gyro integral between consecutive MPs),
2. binary turn flags via a threshold,
3. steady courses: maximal runs of MPs between turns,
4. per-course speed ratios from the accelerometer's peak/valley gaps.

Everything here is a pure function of its arguments and safe to call
concurrently.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import uniform_filter1d
from scipy.signal import find_peaks

from .errors import ContractViolation

# Default turn threshold (rad) applied to the integrated heading change.
DEFAULT_TURN_THRESHOLD = 0.5

# Width of the centered moving average applied before peak detection (s).
SMOOTHING_WINDOW_S = 0.2

# Peaks/valleys must be prominent relative to the course's signal spread.
PROMINENCE_FRACTION = 0.1


@dataclass(frozen=True)
class ImuStream:
    """Gyro-z and acceleration-magnitude samples plus timing metadata.

    Sample ``k`` of either array is at time ``k / sample_rate``; MP ``n``
    (1-based) is at time ``n * delta``.
    """

    sample_rate: float
    gyro_z: np.ndarray
    accel_norm: np.ndarray
    delta: float

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ContractViolation("sample_rate must be positive")
        if self.delta <= 0:
            raise ContractViolation("delta must be positive")

    def num_mps(self) -> int:
        """Number of whole MP intervals the stream covers."""
        duration = (len(self.gyro_z) - 1) / self.sample_rate
        return int(np.floor(duration / self.delta + 1e-9))


@dataclass(frozen=True)
class CourseSegmentation:
    """Turn flags, steady-course index ranges, and per-course speed ratios.

    ``courses`` are 1-based inclusive ``(start, end)`` pairs partitioning
    ``1..N``. ``speed_ratio`` has one entry per course with min exactly 1.
    ``fallback`` marks courses whose ratio came from the global-mean fallback
    rather than detected oscillations.
    """

    beta: np.ndarray
    courses: list[tuple[int, int]]
    speed_ratio: np.ndarray
    fallback: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))

    @property
    def num_mps(self) -> int:
        return len(self.beta)

    def course_of(self) -> np.ndarray:
        """Map each MP (0-based position) to its course index."""
        out = np.empty(self.num_mps, dtype=int)
        for ell, (s, e) in enumerate(self.courses):
            out[s - 1 : e] = ell
        return out


def heading_change(stream: ImuStream, n: int) -> float:
    """Integrate gyro-z over the interval between MP ``n`` and MP ``n+1``.

    Trapezoidal rule over the samples in ``(n*delta, (n+1)*delta]``, with
    linear interpolation at fractional endpoints when the interval does not
    align with the sample grid.

    Args:
        stream: IMU stream.
        n: 1-based MP index; the interval must lie within the stream.

    Returns:
        Heading change in radians (signed, counterclockwise positive).
    """
    if n < 1:
        raise ContractViolation(f"MP index must be >= 1, got {n}")
    sr = stream.sample_rate
    t0 = n * stream.delta
    t1 = (n + 1) * stream.delta
    last_t = (len(stream.gyro_z) - 1) / sr
    if t1 > last_t + 1e-9:
        raise ContractViolation(
            f"interval ({t0}, {t1}] s extends past the stream end at {last_t} s"
        )

    a = t0 * sr
    b = t1 * sr
    lo = int(np.ceil(a - 1e-9))
    hi = int(np.floor(b + 1e-9))
    times = np.arange(lo, hi + 1) / sr
    values = stream.gyro_z[lo : hi + 1].astype(float)
    if times[0] > t0 + 1e-12:
        v0 = np.interp(t0, [times[0] - 1 / sr, times[0]],
                       [stream.gyro_z[lo - 1], stream.gyro_z[lo]])
        times = np.concatenate([[t0], times])
        values = np.concatenate([[v0], values])
    if times[-1] < t1 - 1e-12:
        v1 = np.interp(t1, [times[-1], times[-1] + 1 / sr],
                       [stream.gyro_z[hi], stream.gyro_z[hi + 1]])
        times = np.concatenate([times, [t1]])
        values = np.concatenate([values, [v1]])
    return float(np.trapz(values, times))


def quantize_heading(theta: float, delta_threshold: float = DEFAULT_TURN_THRESHOLD) -> int:
    """Return 1 when the heading change reaches the turn threshold.

    The comparison is inclusive (``theta >= delta_threshold``). The caller is
    responsible for forcing the final MP's flag to 1.
    """
    if delta_threshold <= 0:
        raise ContractViolation("delta_threshold must be positive")
    return 1 if theta >= delta_threshold else 0


def segment_courses(beta) -> list[tuple[int, int]]:
    """Split MPs into steady courses from the binary turn flags.

    A course is a maximal run of consecutive MPs whose flags are all zero
    except the last, which is 1. The final flag must be 1, so the courses
    partition ``1..N`` exactly.

    Returns:
        1-based inclusive ``(start, end)`` pairs, in order.
    """
    beta = np.asarray(beta, dtype=int)
    if beta.ndim != 1 or len(beta) == 0:
        raise ContractViolation("beta must be a non-empty 1-D sequence")
    if beta[-1] != 1:
        raise ContractViolation("the last turn flag must be 1")
    ends = np.flatnonzero(beta == 1)
    courses = []
    start = 1
    for e in ends:
        courses.append((start, int(e) + 1))
        start = int(e) + 2
    return courses


def course_gaps(stream: ImuStream, courses: list[tuple[int, int]]):
    """Average peak-to-valley gap of the acceleration magnitude per course.

    The signal is smoothed with a centered moving average before detecting
    local maxima/minima; each peak is paired with the first valley after it
    and the gaps are averaged. Courses with no detectable pair inherit the
    mean gap of the detectable courses (flagged).

    Returns:
        ``(gaps, fallback)``: per-course mean gap and a bool mask of courses
        that used the fallback.
    """
    sr = stream.sample_rate
    window = max(int(round(SMOOTHING_WINDOW_S * sr)), 1)
    smooth = uniform_filter1d(stream.accel_norm.astype(float), size=window,
                              mode="nearest")
    gaps = np.full(len(courses), np.nan)
    for ell, (s, e) in enumerate(courses):
        i0 = int(round(s * stream.delta * sr))
        i1 = min(int(round(e * stream.delta * sr)), len(smooth) - 1)
        seg = smooth[i0 : i1 + 1]
        if len(seg) < 3:
            continue
        spread = seg.std()
        if spread <= 0:
            continue
        prominence = PROMINENCE_FRACTION * spread
        peaks, _ = find_peaks(seg, prominence=prominence)
        valleys, _ = find_peaks(-seg, prominence=prominence)
        pair_gaps = []
        for p in peaks:
            after = valleys[valleys > p]
            if len(after):
                pair_gaps.append(seg[p] - seg[after[0]])
        if pair_gaps:
            gaps[ell] = np.mean(pair_gaps)
    fallback = np.isnan(gaps)
    if fallback.all():
        # No oscillation anywhere: a uniform-pace prior is the only option.
        gaps[:] = 1.0
    elif fallback.any():
        gaps[fallback] = np.nanmean(gaps)
    return gaps, fallback


def normalize_gaps(gaps) -> np.ndarray:
    """Turn per-course gaps into speed ratios via the fourth root.

    ``v = gaps**(1/4) / min(gaps**(1/4))``, so the slowest course has ratio
    exactly 1 and a common scale factor on all gaps cancels.
    """
    gaps = np.asarray(gaps, dtype=float)
    if np.any(gaps <= 0):
        raise ContractViolation("peak-to-valley gaps must be positive")
    roots = gaps ** 0.25
    return roots / roots.min()


def speed_variation(stream: ImuStream, courses: list[tuple[int, int]]):
    """Per-course speed ratios relative to the slowest course.

    Returns:
        ``(v, fallback)``: ratios with ``min(v) == 1`` and the fallback mask
        from :func:`course_gaps`.
    """
    gaps, fallback = course_gaps(stream, courses)
    return normalize_gaps(gaps), fallback


def segment_stream(stream: ImuStream,
                   delta_threshold: float = DEFAULT_TURN_THRESHOLD,
                   num_mps: int | None = None) -> CourseSegmentation:
    """Run the full chain: heading changes -> flags -> courses -> ratios."""
    n_mps = stream.num_mps() if num_mps is None else num_mps
    if n_mps < 1:
        raise ContractViolation("stream too short for a single MP")
    beta = np.zeros(n_mps, dtype=int)
    for n in range(1, n_mps):
        beta[n - 1] = quantize_heading(heading_change(stream, n), delta_threshold)
    beta[-1] = 1
    courses = segment_courses(beta)
    v, fallback = speed_variation(stream, courses)
    return CourseSegmentation(beta=beta, courses=courses, speed_ratio=v,
                              fallback=fallback)
