"""Loss, exact gradients, and the transductive training loop.

The loss combines three pieces over the node set:

* squared distance of both branch outputs to ground truth at labeled nodes,
* squared distance to the combinatorial pseudo-labels at unlabeled nodes,
* the population variance of speed-normalized inter-estimate distances,
  taken along the estimate branch (the pace regularizer).

The two squared-error sums are averaged with weight 1/2 each and blended
with the regularizer as ``mse_part / (1 + lam) + lam * mr / (1 + lam)``.
Both error terms are plain sums (not means), so ``lam`` interacts with the
node count; keep that in mind when comparing sweeps across scenarios.

Training is transductive: every forward pass covers all N nodes, while the
train/validation node split only selects which terms enter each loss. The
split is resampled per repetition by default, labeled nodes always train.
Gradients are exact reverse-mode derivatives of the total loss with the
ReLU subgradient at zero taken as zero.
"""

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ContractViolation, DivergenceError
from .features import CdaLabels, FeatureSet
from .gcn import (DEFAULT_ROUTING, FeatureKind, GcnParams, ModelOutput,
                  Routing, forward, init_params)
from .graphs import MobilityGraphs
from .sensing import CourseSegmentation


@dataclass(frozen=True)
class LossBreakdown:
    """Loss components; ``total`` is their fixed blend."""

    mse1: float
    mse2: float
    mr: float
    total: float
    lam: float

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.total))


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 6000
    patience: int = 200
    repetitions: int = 5
    val_fraction: float = 0.2
    learning_rate: float = 1e-2
    lam: float = 3.0
    epsilon: int = 2
    h1: int = 128
    seed: int = 0
    routing: Routing = DEFAULT_ROUTING
    resplit_per_repetition: bool = True
    include_boundary_gamma: bool = True

    def __post_init__(self):
        if not 0 < self.val_fraction < 1:
            raise ContractViolation("val_fraction must be in (0, 1)")
        if self.patience > self.max_epochs:
            raise ContractViolation("patience cannot exceed max_epochs")
        if self.lam < 0:
            raise ContractViolation("lam must be non-negative")


@dataclass
class RepetitionResult:
    seed: int
    diverged: bool
    epochs_run: int
    best_val: float
    estimate: np.ndarray | None
    estimate_alt: np.ndarray | None
    history: np.ndarray


@dataclass
class TrainResult:
    """Median estimate across repetitions plus per-repetition detail.

    ``estimate`` comes from the branch designated by the routing;
    ``estimate_alt`` is the other branch's output when both are active.
    """

    estimate: np.ndarray
    estimate_alt: np.ndarray | None
    repetitions: list[RepetitionResult]
    routing: Routing


HISTORY_COLUMNS = ("epoch", "train_total", "train_mse1", "train_mse2",
                   "train_mr", "val_total", "val_mse1", "val_mse2", "val_mr")


def split_nodes(n: int, val_fraction: float, seed,
                alpha: np.ndarray | None = None):
    """Random train/validation node split; labeled nodes always train.

    The validation set has ``floor(val_fraction * n)`` nodes drawn without
    replacement from the unlabeled pool (capped at the pool size).

    Returns:
        ``(train_idx, val_idx)`` as sorted 0-based index arrays.
    """
    if not 0 < val_fraction < 1:
        raise ContractViolation("val_fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    if alpha is None:
        pool = np.arange(n)
    else:
        alpha = np.asarray(alpha, dtype=int)
        pool = np.flatnonzero(alpha == 0)
    val_count = min(int(np.floor(val_fraction * n)), len(pool))
    val = np.sort(rng.permutation(pool)[:val_count])
    train = np.setdiff1d(np.arange(n), val)
    return train, val


def _gamma_terms(coords: np.ndarray, seg: CourseSegmentation,
                 node_mask: np.ndarray, include_boundary: bool):
    """Included gamma positions (0-based j, pairing j with j-1) and scales."""
    n = coords.shape[0]
    course_of = seg.course_of()
    j = np.arange(1, n)
    keep = node_mask[j]
    if not include_boundary:
        keep &= course_of[j] == course_of[j - 1]
    j = j[keep]
    v = seg.speed_ratio[course_of[j]]
    return j, v


def gamma_variance(coords: np.ndarray, seg: CourseSegmentation,
                   include_boundary: bool = True) -> float:
    """Population variance of speed-normalized inter-point distances."""
    coords = np.asarray(coords, dtype=float)
    mask = np.ones(coords.shape[0], dtype=bool)
    j, v = _gamma_terms(coords, seg, mask, include_boundary)
    if len(j) == 0:
        return 0.0
    gammas = np.linalg.norm(coords[j] - coords[j - 1], axis=1) / v
    return float(np.mean((gammas - gammas.mean()) ** 2))


def _resolve_mask(node_mask, n):
    if node_mask is None:
        return np.ones(n, dtype=bool)
    node_mask = np.asarray(node_mask)
    if node_mask.dtype != bool:
        out = np.zeros(n, dtype=bool)
        out[node_mask] = True
        return out
    return node_mask


def _loss_and_output_grads(output: ModelOutput, gt: np.ndarray,
                           cda: CdaLabels, seg: CourseSegmentation,
                           alpha: np.ndarray, lam: float, routing: Routing,
                           node_mask, include_boundary_gamma: bool,
                           want_grads: bool):
    n = len(alpha)
    if n < 3:
        raise ContractViolation("the pace regularizer needs at least 3 nodes")
    if seg.num_mps != n:
        raise ContractViolation("segmentation length does not match the nodes")
    if lam < 0:
        raise ContractViolation("lam must be non-negative")
    mask = _resolve_mask(node_mask, n)
    alpha = np.asarray(alpha, dtype=int)
    labeled = (alpha == 1) & mask
    unlabeled = (alpha == 0) & mask
    if labeled.any() and not np.all(np.isfinite(gt[labeled])):
        raise ContractViolation("labeled nodes must carry finite coordinates")

    branches = []
    if routing.tmg is not None:
        branches.append(("tmg", output.a))
    if routing.dmg is not None:
        branches.append(("dmg", output.b))

    mse_w = 1.0 / (1.0 + lam)
    mse1 = 0.0
    mse2 = 0.0
    grads = {name: np.zeros_like(out) for name, out in branches} if want_grads else None
    for name, out in branches:
        if labeled.any():
            resid = out[labeled] - gt[labeled]
            mse1 += float(np.sum(resid**2))
            if want_grads:
                grads[name][labeled] += mse_w * resid
        if unlabeled.any():
            resid = out[unlabeled] - cda.c[unlabeled]
            mse2 += float(np.sum(resid**2))
            if want_grads:
                grads[name][unlabeled] += mse_w * resid

    est_name = routing.estimate_branch
    est = output.branch(est_name)
    j, v = _gamma_terms(est, seg, mask, include_boundary_gamma)
    if len(j) == 0:
        mr = 0.0
    else:
        diffs = est[j] - est[j - 1]
        norms = np.linalg.norm(diffs, axis=1)
        gammas = norms / v
        g_mean = gammas.mean()
        mr = float(np.mean((gammas - g_mean) ** 2))
        if want_grads:
            dgamma = (lam / (1.0 + lam)) * 2.0 * (gammas - g_mean) / len(gammas)
            safe = norms > 0
            units = np.zeros_like(diffs)
            units[safe] = diffs[safe] / norms[safe, None]
            contrib = (dgamma / v)[:, None] * units
            np.add.at(grads[est_name], j, contrib)
            np.add.at(grads[est_name], j - 1, -contrib)

    loss_mse = 0.5 * mse1 + 0.5 * mse2
    total = loss_mse / (1.0 + lam) + lam * mr / (1.0 + lam)
    breakdown = LossBreakdown(mse1=mse1, mse2=mse2, mr=mr, total=total, lam=lam)
    return breakdown, grads


def loss(output: ModelOutput, gt: np.ndarray, cda: CdaLabels,
         seg: CourseSegmentation, alpha: np.ndarray, lam: float,
         routing: Routing = DEFAULT_ROUTING, node_mask=None,
         include_boundary_gamma: bool = True) -> LossBreakdown:
    """Evaluate the blended loss over the masked nodes."""
    breakdown, _ = _loss_and_output_grads(
        output, np.asarray(gt, dtype=float), cda, seg, alpha, lam, routing,
        node_mask, include_boundary_gamma, want_grads=False)
    return breakdown


class _BranchCache:
    """Constant per-branch products reused across epochs."""

    def __init__(self, graph: np.ndarray, kind: FeatureKind,
                 features: FeatureSet):
        self.graph = graph
        self.kind = kind
        feat = features.f1 if kind is FeatureKind.F1 else features.f2
        self.sx = graph @ feat

    def pre_activation(self, params: GcnParams) -> np.ndarray:
        if self.kind is FeatureKind.F1:
            return self.sx @ (params.lift @ params.w1)
        return self.sx @ params.w1


def _build_caches(graphs: MobilityGraphs, features: FeatureSet,
                  routing: Routing) -> dict[str, _BranchCache]:
    caches = {}
    if routing.tmg is not None:
        caches["tmg"] = _BranchCache(graphs.a_norm, routing.tmg, features)
    if routing.dmg is not None:
        caches["dmg"] = _BranchCache(graphs.b_norm, routing.dmg, features)
    return caches


def _forward_cached(params: GcnParams,
                    caches: dict[str, _BranchCache]) -> ModelOutput:
    h = {}
    out = {}
    for name, cache in caches.items():
        hh = np.maximum(cache.pre_activation(params), 0.0)
        h[name] = hh
        out[name] = cache.graph @ hh @ params.w2
    return ModelOutput(h_a1=h.get("tmg"), h_b1=h.get("dmg"),
                       a=out.get("tmg"), b=out.get("dmg"))


def _backward(params: GcnParams, caches: dict[str, _BranchCache],
              output: ModelOutput, out_grads: dict[str, np.ndarray]) -> GcnParams:
    d_lift = np.zeros_like(params.lift)
    d_w1 = np.zeros_like(params.w1)
    d_w2 = np.zeros_like(params.w2)
    for name, cache in caches.items():
        dout = out_grads[name]
        hh = output.h_a1 if name == "tmg" else output.h_b1
        t = cache.graph @ dout
        d_w2 += hh.T @ t
        dz = (t @ params.w2.T) * (hh > 0)
        if cache.kind is FeatureKind.F1:
            dlw = cache.sx.T @ dz
            d_w1 += params.lift.T @ dlw
            d_lift += dlw @ params.w1.T
        else:
            d_w1 += cache.sx.T @ dz
    return GcnParams(lift=d_lift, w1=d_w1, w2=d_w2)


def evaluate_loss(params: GcnParams, graphs: MobilityGraphs,
                  features: FeatureSet, gt, cda: CdaLabels,
                  seg: CourseSegmentation, alpha, lam: float,
                  routing: Routing = DEFAULT_ROUTING, node_mask=None,
                  include_boundary_gamma: bool = True) -> LossBreakdown:
    """Forward pass plus loss, sharing the exact code path of the gradients."""
    caches = _build_caches(graphs, features, routing)
    output = _forward_cached(params, caches)
    return loss(output, gt, cda, seg, alpha, lam, routing, node_mask,
                include_boundary_gamma)


def gradients(params: GcnParams, graphs: MobilityGraphs, features: FeatureSet,
              gt, cda: CdaLabels, seg: CourseSegmentation, alpha, lam: float,
              routing: Routing = DEFAULT_ROUTING, node_mask=None,
              include_boundary_gamma: bool = True):
    """Exact gradient of the total loss with respect to all weights.

    Returns:
        ``(breakdown, grads)`` where ``grads`` mirrors the parameter shapes.
    """
    caches = _build_caches(graphs, features, routing)
    return _gradients_cached(params, caches, np.asarray(gt, dtype=float), cda,
                             seg, alpha, lam, routing, node_mask,
                             include_boundary_gamma)


def _gradients_cached(params, caches, gt, cda, seg, alpha, lam, routing,
                      node_mask, include_boundary_gamma):
    output = _forward_cached(params, caches)
    breakdown, out_grads = _loss_and_output_grads(
        output, gt, cda, seg, alpha, lam, routing, node_mask,
        include_boundary_gamma, want_grads=True)
    grads = _backward(params, caches, output, out_grads)
    return breakdown, grads


class Adam:
    """Standard Adam updates applied in place to the parameter arrays."""

    def __init__(self, params: GcnParams, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(a) for a in params.arrays()]
        self.v = [np.zeros_like(a) for a in params.arrays()]

    def step(self, params: GcnParams, grads: GcnParams) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for slot, (p, g) in enumerate(zip(params.arrays(), grads.arrays())):
            m = self.m[slot]
            v = self.v[slot]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def train(features: FeatureSet, graphs: MobilityGraphs,
          seg: CourseSegmentation, cda: CdaLabels, gt, alpha,
          config: TrainConfig) -> TrainResult:
    """Run the full repetition/early-stop protocol and aggregate by median.

    Each repetition reseeds the weights (seed + repetition index), optionally
    resamples the train/validation split, and runs Adam until the validation
    loss stalls for ``patience`` epochs or ``max_epochs`` is hit. The
    parameters from the best validation epoch produce that repetition's
    estimate; the final trajectory is the per-coordinate median across the
    repetitions that stayed finite.

    Raises:
        DivergenceError: every repetition produced non-finite losses.
    """
    gt = np.asarray(gt, dtype=float)
    alpha = np.asarray(alpha, dtype=int)
    n = len(alpha)
    m = features.f1.shape[1]
    q = features.num_combos
    caches = _build_caches(graphs, features, config.routing)
    reps: list[RepetitionResult] = []

    for rep in range(config.repetitions):
        rep_seed = config.seed + rep
        split_seed = rep_seed if config.resplit_per_repetition else config.seed
        train_idx, val_idx = split_nodes(n, config.val_fraction, split_seed,
                                         alpha)
        train_mask = np.zeros(n, dtype=bool)
        train_mask[train_idx] = True
        val_mask = np.zeros(n, dtype=bool)
        val_mask[val_idx] = True

        params = init_params(m, q, config.h1, rep_seed)
        adam = Adam(params, config.learning_rate)
        best_val = np.inf
        best_output = None
        since_improve = 0
        history = []
        diverged = False
        epochs_run = 0

        for epoch in range(1, config.max_epochs + 1):
            epochs_run = epoch
            tr, grads = _gradients_cached(
                params, caches, gt, cda, seg, alpha, config.lam,
                config.routing, train_mask, config.include_boundary_gamma)
            if not tr.is_finite():
                diverged = True
                break
            adam.step(params, grads)
            output = _forward_cached(params, caches)
            va = loss(output, gt, cda, seg, alpha, config.lam, config.routing,
                      val_mask, config.include_boundary_gamma)
            if not va.is_finite():
                diverged = True
                break
            history.append((epoch, tr.total, tr.mse1, tr.mse2, tr.mr,
                            va.total, va.mse1, va.mse2, va.mr))
            if va.total < best_val:
                best_val = va.total
                best_output = output
                since_improve = 0
            else:
                since_improve += 1
            if since_improve >= config.patience:
                break

        est = est_alt = None
        if not diverged and best_output is not None:
            est = best_output.branch(config.routing.estimate_branch)
            if config.routing.is_cross:
                other = "tmg" if config.routing.estimate_branch == "dmg" else "dmg"
                est_alt = best_output.branch(other)
        reps.append(RepetitionResult(
            seed=rep_seed, diverged=diverged or best_output is None,
            epochs_run=epochs_run, best_val=float(best_val), estimate=est,
            estimate_alt=est_alt,
            history=np.array(history).reshape(-1, len(HISTORY_COLUMNS))))

    good = [r for r in reps if not r.diverged]
    if not good:
        raise DivergenceError("all training repetitions diverged")
    estimate = np.median(np.stack([r.estimate for r in good]), axis=0)
    estimate_alt = None
    if all(r.estimate_alt is not None for r in good):
        estimate_alt = np.median(np.stack([r.estimate_alt for r in good]),
                                 axis=0)
    return TrainResult(estimate=estimate, estimate_alt=estimate_alt,
                       repetitions=reps, routing=config.routing)


def write_loss_log(result: TrainResult, path) -> None:
    """Dump every repetition's per-epoch losses to one CSV."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("repetition",) + HISTORY_COLUMNS)
        for rep_no, rep in enumerate(result.repetitions):
            for row in rep.history:
                writer.writerow([rep_no, int(row[0])] + [repr(x) for x in row[1:]])
