"""Metrics, file formats, and the experiment drivers.

The scenario file is a single JSON document (meters/seconds, row-major):

    {"delta_s": ..., "sample_rate": ..., "aps": [[x, y], ...],
     "gt": [[x, y] | null, ...], "rtt_s": [[tau, ...], ...],
     "gyro_z": [...], "accel_norm": [...], "alpha": [0/1, ...]}

Estimates are CSV ``n,x,y`` (1-based n, repr-formatted floats), evaluation
reports are JSON with the metric fields plus the sorted error list, and the
optional trajectory plot is a self-contained SVG.
"""

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractViolation
from .features import build_pels_and_f2, cda_label
from .gcn import ALL_ROUTINGS
from .geometry import ApConstellation
from .graphs import MobilityGraphs, build_graphs
from .sensing import (DEFAULT_TURN_THRESHOLD, CourseSegmentation, ImuStream,
                      segment_stream)
from .simulator import Scenario
from .training import TrainConfig, TrainResult, gamma_variance, train


@dataclass(frozen=True)
class TrajectoryEstimate:
    coords: np.ndarray
    method: str
    metadata: dict = field(default_factory=dict)


@dataclass(frozen=True)
class EvalReport:
    mae: float
    rmse: float
    p50: float
    p75: float
    p95: float
    cdf: np.ndarray

    def to_dict(self) -> dict:
        return {"mae": self.mae, "rmse": self.rmse, "p50": self.p50,
                "p75": self.p75, "p95": self.p95,
                "cdf": self.cdf.tolist()}


def evaluate(estimate, truth) -> EvalReport:
    """Absolute-error metrics of an estimate against ground truth.

    Truth rows containing NaN (unknown ground truth) are skipped.
    Percentiles use linear interpolation on the sorted errors.
    """
    coords = estimate.coords if isinstance(estimate, TrajectoryEstimate) else \
        np.asarray(estimate, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if coords.shape != truth.shape:
        raise ContractViolation(
            f"estimate shape {coords.shape} != truth shape {truth.shape}")
    valid = np.all(np.isfinite(truth), axis=1)
    if not valid.any():
        raise ContractViolation("no ground-truth rows to evaluate against")
    errors = np.linalg.norm(coords[valid] - truth[valid], axis=1)
    cdf = np.sort(errors)
    p50, p75, p95 = np.percentile(errors, [50, 75, 95])
    return EvalReport(mae=float(errors.mean()),
                      rmse=float(np.sqrt(np.mean(errors**2))),
                      p50=float(p50), p75=float(p75), p95=float(p95), cdf=cdf)


@dataclass
class Prepared:
    """Everything the trainer needs, derived once from a scenario."""

    seg: CourseSegmentation
    graphs: MobilityGraphs
    features: object
    cda: object


def prepare(scenario: Scenario, epsilon: int = 2,
            turn_threshold: float = DEFAULT_TURN_THRESHOLD, k: int = 3,
            q1: int | None = None, q2: int | None = None) -> Prepared:
    """Sensing, graphs, features, and pseudo-labels for one scenario."""
    n = scenario.num_mps
    seg = segment_stream(scenario.imu, turn_threshold, num_mps=n)
    graphs = build_graphs(n, epsilon, seg.courses)
    features = build_pels_and_f2(scenario.rtt, scenario.aps, k)
    cda = cda_label(features, scenario.rtt, scenario.aps, q1, q2)
    return Prepared(seg=seg, graphs=graphs, features=features, cda=cda)


def mingle_localize(scenario: Scenario, config: TrainConfig,
                    mode: str = "self",
                    prepared: Prepared | None = None):
    """Train on one scenario and return the estimate plus training detail.

    ``mode='self'`` ignores all labels; ``mode='semi'`` uses the scenario's
    supervision mask.
    """
    if mode not in ("self", "semi"):
        raise ContractViolation("mode must be 'self' or 'semi'")
    if prepared is None:
        prepared = prepare(scenario, epsilon=config.epsilon)
    n = scenario.num_mps
    alpha = scenario.alpha if mode == "semi" else np.zeros(n, dtype=int)
    result = train(prepared.features, prepared.graphs, prepared.seg,
                   prepared.cda, scenario.gt, alpha, config)
    estimate = TrajectoryEstimate(
        coords=result.estimate, method="mingle",
        metadata={"mode": mode, "routing": config.routing.label(),
                  "lam": config.lam, "seed": config.seed})
    return estimate, result


def run_ablation(scenario: Scenario, config: TrainConfig, mode: str = "self"):
    """Train all four standalone and four cross-graph routings.

    Returns one row per routing: ``(kind, label, mae, rmse)``.
    """
    prepared = prepare(scenario, epsilon=config.epsilon)
    rows = []
    for routing in ALL_ROUTINGS:
        cfg = dataclasses.replace(config, routing=routing)
        estimate, _ = mingle_localize(scenario, cfg, mode, prepared)
        report = evaluate(estimate, scenario.gt)
        kind = "cross" if routing.is_cross else "standalone"
        rows.append((kind, routing.label(), report.mae, report.rmse))
    return rows


def run_lambda_sweep(scenario: Scenario, lambdas, config: TrainConfig,
                     mode: str = "self"):
    """Train per regularizer weight; report MAE and the final pace variance.

    Returns one row per value: ``(lam, mae, gamma_variance)``.
    """
    prepared = prepare(scenario, epsilon=config.epsilon)
    rows = []
    for lam in lambdas:
        if lam < 0:
            raise ContractViolation("lambda values must be non-negative")
        cfg = dataclasses.replace(config, lam=float(lam))
        estimate, _ = mingle_localize(scenario, cfg, mode, prepared)
        report = evaluate(estimate, scenario.gt)
        var = gamma_variance(estimate.coords, prepared.seg)
        rows.append((float(lam), report.mae, var))
    return rows


# ---------------------------------------------------------------------------
# File formats


def save_scenario(scenario: Scenario, path) -> None:
    gt_rows = [None if not np.all(np.isfinite(row)) else [row[0], row[1]]
               for row in scenario.gt]
    doc = {
        "delta_s": scenario.delta,
        "sample_rate": scenario.imu.sample_rate,
        "aps": scenario.aps.positions.tolist(),
        "gt": gt_rows,
        "rtt_s": scenario.rtt.tolist(),
        "gyro_z": scenario.imu.gyro_z.tolist(),
        "accel_norm": scenario.imu.accel_norm.tolist(),
        "alpha": scenario.alpha.tolist(),
    }
    Path(path).write_text(json.dumps(doc))


def load_scenario(path) -> Scenario:
    doc = json.loads(Path(path).read_text())
    gt = np.array([[np.nan, np.nan] if row is None else row
                   for row in doc["gt"]], dtype=float).reshape(-1, 2)
    imu = ImuStream(sample_rate=float(doc["sample_rate"]),
                    gyro_z=np.asarray(doc["gyro_z"], dtype=float),
                    accel_norm=np.asarray(doc["accel_norm"], dtype=float),
                    delta=float(doc["delta_s"]))
    rtt = np.asarray(doc["rtt_s"], dtype=float)
    alpha = np.asarray(doc["alpha"], dtype=int)
    if len(gt) != len(rtt) or len(alpha) != len(rtt):
        raise ContractViolation("gt, rtt_s, and alpha lengths disagree")
    labeled = alpha == 1
    if labeled.any() and not np.all(np.isfinite(gt[labeled])):
        raise ContractViolation("alpha marks a node whose gt entry is null")
    return Scenario(aps=ApConstellation(np.asarray(doc["aps"], dtype=float)),
                    gt=gt, rtt=rtt, imu=imu, alpha=alpha,
                    delta=float(doc["delta_s"]))


def write_estimate_csv(estimate, path) -> None:
    coords = estimate.coords if isinstance(estimate, TrajectoryEstimate) else \
        np.asarray(estimate, dtype=float)
    lines = ["n,x,y"]
    for i, (x, y) in enumerate(coords, start=1):
        lines.append(f"{i},{float(x)!r},{float(y)!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_estimate_csv(path) -> np.ndarray:
    lines = Path(path).read_text().strip().splitlines()
    if not lines or lines[0].strip() != "n,x,y":
        raise ContractViolation("estimate CSV must start with header 'n,x,y'")
    rows = [line.split(",") for line in lines[1:]]
    return np.array([[float(x), float(y)] for _, x, y in rows])


def write_report_json(report: EvalReport, path) -> None:
    Path(path).write_text(json.dumps(report.to_dict()))


def write_cdf_csv(report: EvalReport, path) -> None:
    lines = ["error"] + [repr(float(e)) for e in report.cdf]
    Path(path).write_text("\n".join(lines) + "\n")


def write_ablation_csv(rows, path) -> None:
    lines = ["kind,routing,mae,rmse"]
    for kind, label, mae, rmse in rows:
        lines.append(f"{kind},{label},{mae!r},{rmse!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_sweep_csv(rows, path) -> None:
    lines = ["lambda,mae,gamma_variance"]
    for lam, mae, var in rows:
        lines.append(f"{lam!r},{mae!r},{var!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def dump_graphs_csv(graphs: MobilityGraphs, prefix) -> None:
    for name, matrix in (("tmg", graphs.a), ("dmg", graphs.b)):
        out = Path(f"{prefix}_{name}.csv")
        lines = [",".join(str(int(v)) for v in row) for row in matrix]
        out.write_text("\n".join(lines) + "\n")


def write_trajectory_svg(path, truth, estimate, aps=None,
                         size: int = 640) -> None:
    """Minimal self-contained scatter of truth vs estimate, axes in meters."""
    truth = np.asarray(truth, dtype=float)
    coords = estimate.coords if isinstance(estimate, TrajectoryEstimate) else \
        np.asarray(estimate, dtype=float)
    pts = [coords]
    valid = np.all(np.isfinite(truth), axis=1)
    if valid.any():
        pts.append(truth[valid])
    if aps is not None:
        pts.append(np.asarray(aps, dtype=float))
    allpts = np.vstack(pts)
    lo = allpts.min(axis=0) - 1.0
    hi = allpts.max(axis=0) + 1.0
    span = np.maximum(hi - lo, 1e-6)
    margin = 45
    inner = size - 2 * margin

    def sx(x):
        return margin + (x - lo[0]) / span[0] * inner

    def sy(y):
        return size - margin - (y - lo[1]) / span[1] * inner

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" '
             f'height="{size}" viewBox="0 0 {size} {size}">',
             f'<rect x="{margin}" y="{margin}" width="{inner}" '
             f'height="{inner}" fill="none" stroke="black"/>']
    for frac in (0.0, 0.5, 1.0):
        xv = lo[0] + frac * span[0]
        yv = lo[1] + frac * span[1]
        parts.append(f'<text x="{sx(xv):.1f}" y="{size - margin + 18}" '
                     f'font-size="11" text-anchor="middle">{xv:.1f} m</text>')
        parts.append(f'<text x="{margin - 8}" y="{sy(yv):.1f}" font-size="11" '
                     f'text-anchor="end">{yv:.1f} m</text>')
    if valid.any():
        path_d = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in truth[valid])
        parts.append(f'<polyline points="{path_d}" fill="none" '
                     'stroke="#2166ac" stroke-width="1.5"/>')
    for x, y in coords:
        parts.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="2.5" '
                     'fill="#b2182b" fill-opacity="0.8"/>')
    if aps is not None:
        for x, y in np.asarray(aps, dtype=float):
            parts.append(
                f'<polygon points="{sx(x):.2f},{sy(y) - 5:.2f} '
                f'{sx(x) - 5:.2f},{sy(y) + 4:.2f} {sx(x) + 5:.2f},{sy(y) + 4:.2f}" '
                'fill="#33a02c"/>')
    parts.append(f'<text x="{size / 2}" y="16" font-size="12" '
                 'text-anchor="middle">truth (line) vs estimate (dots)</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")
