"""Input feature construction and combinatorial pseudo-labeling.

Two node-feature matrices feed the network. The first stacks each MP's RTT
vector normalized by its sum. The second enumerates every K-subset of APs,
multilaterates a preliminary estimated location (PEL) per subset, and stacks
the row-normalized concatenation of all PELs.

The same PEL pool also yields pseudo-labels: per MP, keep the Q1 PELs with
the smallest sum of absolute range residuals over their subset, then among
those the Q2 with the smallest RTT sum, and take the per-coordinate median.
Self-supervised training fits these labels where no ground truth exists.
"""

from dataclasses import dataclass
from itertools import combinations
from math import ceil

import numpy as np

from .errors import ContractViolation, NumericalFailure
from .geometry import (ApConstellation, DegenerateGeometryError,
                       lls_multilaterate, rtt_to_range)

# Row sums with magnitude below this trigger the absolute-sum fallback.
ROW_SUM_GUARD = 1e-6


@dataclass(frozen=True)
class FeatureSet:
    """Node features plus the PEL pool they were derived from.

    ``pels`` is (N, Q, 2) in world coordinates. ``f2`` rows are normalized in
    a frame translated by ``frame_shift`` so coordinate sums stay positive.
    ``fill_mask`` marks PEL slots recovered from degenerate AP subsets;
    ``guard_flags`` marks rows that needed the absolute-sum fallback.
    """

    f1: np.ndarray
    f2: np.ndarray
    pels: np.ndarray
    combos: list[tuple[int, ...]]
    frame_shift: np.ndarray
    fill_mask: np.ndarray
    guard_flags: np.ndarray

    @property
    def num_combos(self) -> int:
        return len(self.combos)


@dataclass(frozen=True)
class CdaLabels:
    """Per-MP pseudo-label coordinates and the filter sizes that made them."""

    c: np.ndarray
    k: int
    q1: int
    q2: int


def enumerate_combos(m: int, k: int) -> list[tuple[int, ...]]:
    """All K-subsets of ``range(m)`` in lexicographic order.

    The position in the returned list is the subset's stable index, which
    also breaks ties in the pseudo-label filters.
    """
    if k < 3:
        raise ContractViolation("multilateration needs subsets of size >= 3")
    if k > m:
        raise ContractViolation(f"cannot choose {k} of {m} access points")
    return list(combinations(range(m), k))


def default_cda_params(q: int) -> tuple[int, int]:
    """Filter sizes (Q1, Q2) for a PEL pool of size ``q``.

    The tuned values for the 120-subset pool are kept verbatim; other pool
    sizes scale the same keep-fractions.
    """
    if q == 120:
        return 37, 12
    return min(ceil(0.31 * q), q), min(ceil(0.10 * q), q)


def build_f1(rtt: np.ndarray) -> np.ndarray:
    """Stack RTT vectors, each normalized by its own sum (rows sum to 1)."""
    rtt = np.asarray(rtt, dtype=float)
    if rtt.ndim != 2:
        raise ContractViolation("rtt must be an (N, M) matrix")
    if np.any(rtt <= 0) or not np.all(np.isfinite(rtt)):
        raise ContractViolation("all RTT entries must be positive and finite")
    return rtt / rtt.sum(axis=1, keepdims=True)


def build_pels_and_f2(rtt: np.ndarray, aps: ApConstellation, k: int) -> FeatureSet:
    """Multilaterate every K-subset per MP and assemble both feature matrices.

    Degenerate subsets (collinear anchors) get their PEL slot filled with the
    per-coordinate median of the MP's successful PELs so the feature width
    stays fixed at 2Q. Row normalization happens in a frame translated so
    all AP coordinates are at least 1 m, keeping coordinate sums positive;
    rows whose sum still lands near zero are divided by the absolute-entry
    sum instead and flagged.

    Raises:
        NumericalFailure: every subset degenerate at some MP.
    """
    rtt = np.asarray(rtt, dtype=float)
    f1 = build_f1(rtt)
    n, m = rtt.shape
    if aps.count != m:
        raise ContractViolation("RTT columns must match the AP count")
    combos = enumerate_combos(m, k)
    q = len(combos)
    ranges = rtt_to_range(rtt)

    pels = np.full((n, q, 2), np.nan)
    fill_mask = np.zeros((n, q), dtype=bool)
    for qi, combo in enumerate(combos):
        sub_pos = aps.positions[list(combo)]
        for ni in range(n):
            try:
                pels[ni, qi] = lls_multilaterate(sub_pos, ranges[ni, list(combo)])
            except DegenerateGeometryError:
                fill_mask[ni, qi] = True
    for ni in range(n):
        bad = fill_mask[ni]
        if bad.all():
            raise NumericalFailure(
                f"every AP subset was degenerate at MP {ni + 1}; "
                "the scenario geometry is unusable"
            )
        if bad.any():
            pels[ni, bad] = np.median(pels[ni, ~bad], axis=0)

    shift = np.maximum(0.0, 1.0 - aps.positions.min(axis=0))
    flat = (pels + shift).reshape(n, 2 * q)
    row_sum = flat.sum(axis=1)
    guard_flags = np.abs(row_sum) < ROW_SUM_GUARD
    denom = np.where(guard_flags, np.abs(flat).sum(axis=1), row_sum)
    f2 = flat / denom[:, None]

    return FeatureSet(f1=f1, f2=f2, pels=pels, combos=combos, frame_shift=shift,
                      fill_mask=fill_mask, guard_flags=guard_flags)


def cda_label(features: FeatureSet, rtt: np.ndarray, aps: ApConstellation,
              q1: int | None = None, q2: int | None = None) -> CdaLabels:
    """Filter the PEL pool per MP and take the median as a pseudo-label.

    Per MP and subset q the residual metric is the sum over the subset's APs
    of ``|distance(AP, PEL_q) - range|``; the second metric is the subset's
    RTT sum. The Q1 lowest-residual PELs survive the first filter, the Q2
    lowest-RTT-sum among them the second, and the label is their
    per-coordinate median. Ties break on the subset index, so the result is
    independent of enumeration order.
    """
    rtt = np.asarray(rtt, dtype=float)
    n, m = rtt.shape
    q = features.num_combos
    if q1 is None or q2 is None:
        d1, d2 = default_cda_params(q)
        q1 = d1 if q1 is None else q1
        q2 = d2 if q2 is None else q2
    if not (1 <= q2 <= q1 <= q):
        raise ContractViolation(f"need 1 <= Q2 <= Q1 <= {q}, got ({q1}, {q2})")

    combo_idx = [list(c) for c in features.combos]
    ranges = rtt_to_range(rtt)
    labels = np.empty((n, 2))
    for ni in range(n):
        resid = np.empty(q)
        rtt_sum = np.empty(q)
        for qi, combo in enumerate(combo_idx):
            dists = np.linalg.norm(aps.positions[combo] - features.pels[ni, qi],
                                   axis=1)
            resid[qi] = np.sum(np.abs(dists - ranges[ni, combo]))
            rtt_sum[qi] = rtt[ni, combo].sum()
        keep1 = sorted(range(q), key=lambda i: (resid[i], i))[:q1]
        keep2 = sorted(keep1, key=lambda i: (rtt_sum[i], i))[:q2]
        labels[ni] = np.median(features.pels[ni, keep2], axis=0)
    k = len(features.combos[0])
    return CdaLabels(c=labels, k=k, q1=q1, q2=q2)
