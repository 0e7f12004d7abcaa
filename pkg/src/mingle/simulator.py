"""Synthetic walking scenarios: trajectory, RTT corruption, IMU streams.

A scenario walks a sequence of straight legs at per-leg speeds, samples one
measurement point every ``delta`` seconds, and synthesizes:

* RTT per (MP, AP): true range plus a Bernoulli exponential bias (obstructed
  paths only ever lengthen a range) plus Gaussian noise, clamped positive;
* a gyro-z stream that is zero on legs with a raised-cosine pulse at every
  turn integrating exactly to the turn angle;
* an acceleration-magnitude stream oscillating at a fixed cadence whose
  peak-to-valley gap per leg equals ``speed**4``, so the sensing chain's
  fourth-root ratio recovers the leg speed ratios.

Turn flags trigger on counterclockwise heading changes (the quantizer is
one-sided), so the built-in presets all walk counterclockwise loops.
"""

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation
from .geometry import SPEED_OF_LIGHT, ApConstellation
from .sensing import ImuStream

# Oscillation cadence of the synthetic acceleration magnitude (Hz). The
# cadence is speed-independent; speed changes act on the amplitude only.
STEP_FREQUENCY = 2.0

# Internal pace constant tying leg speed to the oscillation amplitude.
PACE_CONSTANT = 1.0

ACCEL_BASELINE = 9.8

# Lower clamp for simulated ranges (m).
MIN_RANGE = 0.1

SUPERVISION_POLICIES = ("none", "corners", "uniform")


@dataclass(frozen=True)
class Leg:
    heading: float  # rad, counterclockwise from +x
    length: float   # m
    speed: float    # m/s


@dataclass(frozen=True)
class ScenarioSpec:
    site: tuple          # ((xmin, ymin), (xmax, ymax))
    aps: object          # (M, 2) array-like, or int for perimeter placement
    start: tuple
    legs: tuple
    delta: float = 1.0
    rtt_sigma: float = 0.3
    nlos_p: float = 0.5
    nlos_mu: float = 2.5
    sample_rate: float = 50.0
    seed: int = 0
    supervision: str = "none"
    supervision_fraction: float = 0.1

    def __post_init__(self):
        if len(self.legs) < 1:
            raise ContractViolation("at least one leg is required")
        if any(leg.speed <= 0 or leg.length <= 0 for leg in self.legs):
            raise ContractViolation("leg lengths and speeds must be positive")
        if not 0.0 <= self.nlos_p <= 1.0:
            raise ContractViolation("nlos_p must be in [0, 1]")
        if self.supervision not in SUPERVISION_POLICIES:
            raise ContractViolation(
                f"supervision must be one of {SUPERVISION_POLICIES}")


@dataclass
class Scenario:
    """A generated (or file-loaded) scene; ground truth may be partial."""

    aps: ApConstellation
    gt: np.ndarray
    rtt: np.ndarray
    imu: ImuStream
    alpha: np.ndarray
    delta: float
    courses: list[tuple[int, int]] | None = None
    true_speed_ratio: np.ndarray | None = None
    seed: int | None = None

    @property
    def num_mps(self) -> int:
        return self.rtt.shape[0]


def _wrap_angle(angle: float) -> float:
    return (angle + np.pi) % (2.0 * np.pi) - np.pi


def place_perimeter_aps(rect, count: int, jitter: float = 0.8) -> np.ndarray:
    """Evenly spaced points along a rectangle's perimeter, radially staggered.

    Alternate points are pushed outward/inward from the rectangle center by
    ``jitter`` meters so that no three APs are collinear.
    """
    (x0, y0), (x1, y1) = rect
    w, h = x1 - x0, y1 - y0
    perimeter = 2.0 * (w + h)
    center = np.array([(x0 + x1) / 2.0, (y0 + y1) / 2.0])
    points = []
    for k in range(count):
        s = k * perimeter / count
        if s < w:
            p = np.array([x0 + s, y0])
        elif s < w + h:
            p = np.array([x1, y0 + (s - w)])
        elif s < 2 * w + h:
            p = np.array([x1 - (s - w - h), y1])
        else:
            p = np.array([x0, y1 - (s - 2 * w - h)])
        u = p - center
        u = u / np.linalg.norm(u)
        points.append(p + (jitter if k % 2 == 0 else -jitter) * u)
    return np.array(points)


def _leg_steps(spec: ScenarioSpec) -> list[int]:
    steps = []
    for leg in spec.legs:
        duration = leg.length / leg.speed
        count = duration / spec.delta
        rounded = round(count)
        if abs(count - rounded) > 1e-9 or rounded < 1:
            raise ContractViolation(
                f"leg duration {duration} s must be a positive integer "
                f"multiple of delta={spec.delta} s")
        steps.append(int(rounded))
    return steps


def generate(spec: ScenarioSpec) -> Scenario:
    """Deterministically generate a scenario from its spec."""
    steps = _leg_steps(spec)
    n = sum(steps)
    (xmin, ymin), (xmax, ymax) = spec.site

    # Walk the corners and measurement points.
    corners = [np.asarray(spec.start, dtype=float)]
    for leg in spec.legs:
        direction = np.array([np.cos(leg.heading), np.sin(leg.heading)])
        corners.append(corners[-1] + leg.length * direction)
    for c in corners:
        if not (xmin <= c[0] <= xmax and ymin <= c[1] <= ymax):
            raise ContractViolation(f"trajectory leaves the site bounds at {c}")

    gt = np.empty((n, 2))
    courses = []
    mp = 0
    for leg, count in zip(spec.legs, steps):
        direction = np.array([np.cos(leg.heading), np.sin(leg.heading)])
        origin = corners[len(courses)]
        for i in range(1, count + 1):
            gt[mp] = origin + direction * leg.speed * spec.delta * i
            mp += 1
        start_idx = courses[-1][1] + 1 if courses else 1
        courses.append((start_idx, start_idx + count - 1))

    if isinstance(spec.aps, int):
        ap_rect = ((xmin + 1.5, ymin + 1.5), (xmax - 1.5, ymax - 1.5))
        positions = place_perimeter_aps(ap_rect, spec.aps)
    else:
        positions = np.asarray(spec.aps, dtype=float)
    aps = ApConstellation(positions)

    rng = np.random.default_rng(spec.seed)
    dists = np.linalg.norm(gt[:, None, :] - aps.positions[None, :, :], axis=2)
    u = rng.random(dists.shape)
    bias = rng.standard_exponential(dists.shape)
    noise = rng.standard_normal(dists.shape)
    ranges = dists + (u < spec.nlos_p) * spec.nlos_mu * bias \
        + spec.rtt_sigma * noise
    ranges = np.maximum(ranges, MIN_RANGE)
    rtt = 2.0 * ranges / SPEED_OF_LIGHT

    imu = _synthesize_imu(spec, steps, n)

    speeds = np.array([leg.speed for leg in spec.legs])
    true_ratio = speeds / speeds.min()

    alpha = np.zeros(n, dtype=int)
    if spec.supervision == "corners":
        for _, e in courses:
            alpha[e - 1] = 1
    elif spec.supervision == "uniform":
        count = int(np.floor(spec.supervision_fraction * n))
        picks = rng.permutation(n)[:count]
        alpha[picks] = 1

    return Scenario(aps=aps, gt=gt, rtt=rtt, imu=imu, alpha=alpha,
                    delta=spec.delta, courses=courses,
                    true_speed_ratio=true_ratio, seed=spec.seed)


def _synthesize_imu(spec: ScenarioSpec, steps: list[int], n: int) -> ImuStream:
    sr = spec.sample_rate
    samples_per_mp = spec.delta * sr
    if abs(samples_per_mp - round(samples_per_mp)) > 1e-9:
        raise ContractViolation("delta * sample_rate must be an integer")
    total = int(round(n * samples_per_mp)) + 1
    t = np.arange(total) / sr

    # Gyro: raised-cosine pulse inside the interval after each leg's last MP.
    gyro = np.zeros(total)
    width = min(0.5, spec.delta / 2.0)
    boundary = 0
    for idx in range(len(spec.legs) - 1):
        boundary += steps[idx]
        angle = _wrap_angle(spec.legs[idx + 1].heading - spec.legs[idx].heading)
        t0 = boundary * spec.delta + (spec.delta - width) / 2.0
        in_pulse = (t >= t0) & (t <= t0 + width)
        phase = (t[in_pulse] - t0) / width
        gyro[in_pulse] += (angle / width) * (1.0 - np.cos(2.0 * np.pi * phase))

    # Acceleration magnitude: fixed-cadence oscillation, per-leg amplitude
    # such that the peak-to-valley gap equals (speed / pace)^4.
    amplitude = np.empty(total)
    boundary_t = np.cumsum([s * spec.delta for s in steps])
    leg_of_sample = np.searchsorted(boundary_t, t, side="left")
    leg_of_sample = np.minimum(leg_of_sample, len(spec.legs) - 1)
    for idx, leg in enumerate(spec.legs):
        amplitude[leg_of_sample == idx] = 0.5 * (leg.speed / PACE_CONSTANT) ** 4
    accel = ACCEL_BASELINE + amplitude * np.sin(2.0 * np.pi * STEP_FREQUENCY * t)

    return ImuStream(sample_rate=sr, gyro_z=gyro, accel_norm=accel,
                     delta=spec.delta)


def _rect_legs(width: float, height: float, h_speed: float, v_speed: float,
               repeat: int = 1, trim_last: float = 0.0) -> tuple:
    east, north, west, south = 0.0, np.pi / 2.0, np.pi, -np.pi / 2.0
    legs = []
    for _ in range(repeat):
        legs += [Leg(east, width, h_speed), Leg(north, height, v_speed),
                 Leg(west, width, h_speed), Leg(south, height, v_speed)]
    if trim_last > 0.0:
        last = legs[-1]
        legs[-1] = Leg(last.heading, last.length - trim_last, last.speed)
    return tuple(legs)


def _preset_specs() -> dict:
    return {
        # 25 x 10 m loop at 1 m/s: 70 MPs in 4 courses.
        "type1": ScenarioSpec(
            site=((-3.0, -3.0), (28.0, 13.0)), aps=10, start=(0.0, 0.0),
            legs=_rect_legs(25.0, 10.0, 1.0, 1.0)),
        # 12 x 5 m loop at 1 m/s: 34 MPs in 4 courses.
        "type2": ScenarioSpec(
            site=((-3.0, -3.0), (15.0, 8.0)), aps=10, start=(0.0, 0.0),
            legs=_rect_legs(12.0, 5.0, 1.0, 1.0)),
        # Mixed speeds (1 m/s horizontal, 0.5 m/s vertical): 83 MPs, 4 courses.
        "type3": ScenarioSpec(
            site=((-3.0, -4.0), (27.0, 13.0)), aps=10, start=(0.0, 0.0),
            legs=(Leg(0.0, 24.0, 1.0), Leg(np.pi / 2.0, 8.5, 0.5),
                  Leg(np.pi, 24.0, 1.0), Leg(-np.pi / 2.0, 9.0, 0.5))),
        # Double loop of a 13 x 11 m rectangle, last leg trimmed: 95 MPs,
        # 8 courses, with overlapping course geometry.
        "type4": ScenarioSpec(
            site=((-3.0, -3.0), (16.0, 14.0)), aps=10, start=(0.0, 0.0),
            legs=_rect_legs(13.0, 11.0, 1.0, 1.0, repeat=2, trim_last=1.0)),
    }


def preset(name: str, **overrides) -> ScenarioSpec:
    """Named scenario presets; keyword overrides replace spec fields.

    ``day3`` reuses the mixed-speed geometry with doubled range noise and
    obstruction bias.
    """
    specs = _preset_specs()
    if name == "day3":
        spec = specs["type3"]
        spec = dataclasses.replace(spec, rtt_sigma=2 * spec.rtt_sigma,
                                   nlos_mu=2 * spec.nlos_mu)
    elif name in specs:
        spec = specs[name]
    else:
        raise ContractViolation(
            f"unknown preset {name!r}; choose from "
            f"{sorted(list(specs) + ['day3'])}")
    if overrides:
        spec = dataclasses.replace(spec, **overrides)
    return spec
