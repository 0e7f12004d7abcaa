"""Mobility graphs: temporal band adjacency and per-course block adjacency.

Nodes are the N measurement points in time order. The time-driven graph
links nodes whose indices are within a band ``epsilon``; the direction-driven
graph links nodes within the same steady course whose index gap is at most
half the course length. Both rules include the diagonal, so every node has a
self-loop. Matrices are dense; N stays small.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation


@dataclass(frozen=True)
class MobilityGraphs:
    """Binary adjacencies and their symmetric normalizations."""

    a: np.ndarray
    b: np.ndarray
    a_norm: np.ndarray
    b_norm: np.ndarray
    epsilon: int


def build_tmg(n: int, epsilon: int) -> np.ndarray:
    """Band adjacency: nodes i, j are linked iff ``|i - j| <= epsilon``."""
    if n < 1:
        raise ContractViolation("need at least one node")
    if epsilon < 0:
        raise ContractViolation("epsilon must be non-negative")
    idx = np.arange(n)
    return (np.abs(idx[:, None] - idx[None, :]) <= epsilon).astype(float)


def build_dmg(courses: list[tuple[int, int]], n: int) -> np.ndarray:
    """Block adjacency from steady courses.

    Within course ``(s, e)`` of length ``d = e - s + 1``, nodes are linked
    iff their index gap is at most ``floor(d / 2)``. No edges cross courses.

    Args:
        courses: 1-based inclusive ranges partitioning ``1..n``.
        n: node count.
    """
    _check_partition(courses, n)
    out = np.zeros((n, n))
    idx = np.arange(n)
    for s, e in courses:
        d = e - s + 1
        half = d // 2
        block = slice(s - 1, e)
        sub = idx[block]
        out[block, block.start : block.stop] = (
            np.abs(sub[:, None] - sub[None, :]) <= half
        )
    return out


def _check_partition(courses, n):
    if not courses:
        raise ContractViolation("courses must be non-empty")
    expected_start = 1
    for s, e in courses:
        if s != expected_start or e < s:
            raise ContractViolation(
                f"courses must partition 1..{n} contiguously; got ({s}, {e}) "
                f"where start {expected_start} was expected"
            )
        expected_start = e + 1
    if expected_start != n + 1:
        raise ContractViolation(f"courses end at {expected_start - 1}, not {n}")


def normalize_adjacency(m: np.ndarray) -> np.ndarray:
    """Symmetric degree normalization ``D^-1/2 M D^-1/2``."""
    m = np.asarray(m, dtype=float)
    deg = m.sum(axis=1)
    if np.any(deg <= 0):
        raise ContractViolation("every row needs at least one nonzero entry")
    inv_sqrt = 1.0 / np.sqrt(deg)
    return m * inv_sqrt[:, None] * inv_sqrt[None, :]


def build_graphs(n: int, epsilon: int, courses: list[tuple[int, int]]) -> MobilityGraphs:
    """Build both adjacencies and their normalizations in one call."""
    a = build_tmg(n, epsilon)
    b = build_dmg(courses, n)
    return MobilityGraphs(a=a, b=b, a_norm=normalize_adjacency(a),
                          b_norm=normalize_adjacency(b), epsilon=epsilon)
