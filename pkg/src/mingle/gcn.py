"""Two-layer graph convolution with weights shared across both graphs.

Each active branch runs ``graph_norm @ relu(graph_norm @ X @ W1) @ W2`` where
``X`` is one of the two feature matrices. The RTT feature is first lifted
from M columns to 2Q by a trainable matrix so both branches can share ``W1``.
There are no biases. A routing config picks which feature feeds which graph
and supports single-graph (standalone) modes for ablations.
"""

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import ContractViolation
from .features import FeatureSet
from .graphs import MobilityGraphs


class FeatureKind(str, Enum):
    F1 = "f1"
    F2 = "f2"


@dataclass(frozen=True)
class Routing:
    """Which feature feeds which graph; ``None`` disables a branch.

    The final location estimate comes from the direction-graph branch when
    it is active, otherwise from the time-graph branch.
    """

    tmg: FeatureKind | None = FeatureKind.F1
    dmg: FeatureKind | None = FeatureKind.F2

    def __post_init__(self):
        if self.tmg is None and self.dmg is None:
            raise ContractViolation("at least one branch must be active")

    @property
    def estimate_branch(self) -> str:
        return "dmg" if self.dmg is not None else "tmg"

    @property
    def is_cross(self) -> bool:
        return self.tmg is not None and self.dmg is not None

    def label(self) -> str:
        parts = []
        if self.tmg is not None:
            parts.append(f"{self.tmg.value}-tmg")
        if self.dmg is not None:
            parts.append(f"{self.dmg.value}-dmg")
        return "+".join(parts)


DEFAULT_ROUTING = Routing(FeatureKind.F1, FeatureKind.F2)

#: The four standalone modes followed by the four cross-graph pairings.
ALL_ROUTINGS = (
    Routing(FeatureKind.F1, None),
    Routing(FeatureKind.F2, None),
    Routing(None, FeatureKind.F1),
    Routing(None, FeatureKind.F2),
    Routing(FeatureKind.F1, FeatureKind.F1),
    Routing(FeatureKind.F1, FeatureKind.F2),
    Routing(FeatureKind.F2, FeatureKind.F1),
    Routing(FeatureKind.F2, FeatureKind.F2),
)


@dataclass
class GcnParams:
    """Trainable state: the RTT lift and the two shared layer weights."""

    lift: np.ndarray  # (M, 2Q)
    w1: np.ndarray    # (2Q, h1)
    w2: np.ndarray    # (h1, 2)

    @property
    def h1(self) -> int:
        return self.w1.shape[1]

    def copy(self) -> "GcnParams":
        return GcnParams(self.lift.copy(), self.w1.copy(), self.w2.copy())

    def arrays(self) -> list[np.ndarray]:
        return [self.lift, self.w1, self.w2]


@dataclass(frozen=True)
class ModelOutput:
    """Per-branch activations and 2-D outputs; inactive branches are None."""

    h_a1: np.ndarray | None
    h_b1: np.ndarray | None
    a: np.ndarray | None
    b: np.ndarray | None

    def branch(self, name: str) -> np.ndarray:
        out = self.a if name == "tmg" else self.b
        if out is None:
            raise ContractViolation(f"branch {name!r} is not active")
        return out


def init_params(m: int, q: int, h1: int, rng_seed: int) -> GcnParams:
    """Glorot-uniform initialization, deterministic for a given seed."""
    if h1 < 1:
        raise ContractViolation("hidden width must be at least 1")
    rng = np.random.default_rng(rng_seed)

    def glorot(fan_in, fan_out):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-bound, bound, size=(fan_in, fan_out))

    return GcnParams(lift=glorot(m, 2 * q), w1=glorot(2 * q, h1),
                     w2=glorot(h1, 2))


def _branch_input(kind: FeatureKind, features: FeatureSet,
                  params: GcnParams) -> np.ndarray:
    if kind is FeatureKind.F1:
        return features.f1 @ params.lift
    return features.f2


def forward(params: GcnParams, graphs: MobilityGraphs, features: FeatureSet,
            routing: Routing = DEFAULT_ROUTING) -> ModelOutput:
    """Deterministic forward pass over all nodes for the active branches."""
    n = features.f1.shape[0]
    two_q = 2 * features.num_combos
    if params.lift.shape != (features.f1.shape[1], two_q):
        raise ContractViolation(
            f"lift shape {params.lift.shape} does not match features "
            f"({features.f1.shape[1]}, {two_q})"
        )
    if params.w1.shape[0] != two_q or params.w2.shape[0] != params.w1.shape[1]:
        raise ContractViolation("weight shapes are mutually inconsistent")
    if graphs.a_norm.shape != (n, n) or graphs.b_norm.shape != (n, n):
        raise ContractViolation("graph size does not match the feature rows")

    h_a1 = h_b1 = out_a = out_b = None
    if routing.tmg is not None:
        x = _branch_input(routing.tmg, features, params)
        h_a1 = np.maximum(graphs.a_norm @ x @ params.w1, 0.0)
        out_a = graphs.a_norm @ h_a1 @ params.w2
    if routing.dmg is not None:
        x = _branch_input(routing.dmg, features, params)
        h_b1 = np.maximum(graphs.b_norm @ x @ params.w1, 0.0)
        out_b = graphs.b_norm @ h_b1 @ params.w2
    return ModelOutput(h_a1=h_a1, h_b1=h_b1, a=out_a, b=out_b)


def save_params(params: GcnParams, path) -> None:
    """Serialize to JSON: a dimension header plus row-major flat arrays."""
    doc = {
        "m": params.lift.shape[0],
        "two_q": params.lift.shape[1],
        "h1": params.h1,
        "lift": params.lift.ravel().tolist(),
        "w1": params.w1.ravel().tolist(),
        "w2": params.w2.ravel().tolist(),
    }
    Path(path).write_text(json.dumps(doc))


def load_params(path) -> GcnParams:
    doc = json.loads(Path(path).read_text())
    m, two_q, h1 = doc["m"], doc["two_q"], doc["h1"]
    return GcnParams(
        lift=np.array(doc["lift"]).reshape(m, two_q),
        w1=np.array(doc["w1"]).reshape(two_q, h1),
        w2=np.array(doc["w2"]).reshape(h1, 2),
    )
