"""Loss-ordered two-level channel reordering around the pruning engine.

Before any weight moves, a pre-pruning pass marks the entries most likely
to be removed (smallest magnitude-times-activation-norm scores) and sums
their scores into per-column and per-block losses.  Layers whose block
losses fluctuate widely (relative range above a threshold) get reordered:
columns descending by column loss inside each block, then whole blocks
descending by block loss.  High-loss weights are then pruned while plenty
of later columns remain available for compensation, and the result is
mapped back to the original channel order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .calibration import ActivationNorms, accumulate_hessian, column_norms
from .engine import PruneOutcome, prune_layer, reconstruction_error
from .errors import DimensionError
from .tensors import (
    Permutation,
    PruneMask,
    SemiStructured,
    SparsityConfig,
    apply_column_permutation,
    as_matrix,
    compose_permutations,
    mask_pattern_valid,
    pruned_count,
)


@dataclass(frozen=True)
class LossProfile:
    """Estimated pruning losses per column and per block."""

    block_losses: np.ndarray
    column_losses: np.ndarray
    selected_scores: list
    relative_range: float
    blocksize: int

    @property
    def block_count(self) -> int:
        return self.block_losses.size


@dataclass(frozen=True)
class ReorderPlan:
    """Composed column-then-block permutation of input channels."""

    permutation: Permutation
    column_stage: Permutation
    block_stage: Permutation
    was_reordered: bool
    threshold_used: float


def importance_scores(w: np.ndarray, norms: ActivationNorms) -> np.ndarray:
    """Per-weight score |w_ij| * norm_j."""
    w = as_matrix(w)
    if w.shape[1] != norms.n:
        raise DimensionError(f"weight cols {w.shape[1]} != norms size {norms.n}")
    return np.abs(w) * norms.norms


def _selected_mask(scores_block: np.ndarray, config: SparsityConfig) -> np.ndarray:
    """Boolean mask of the candidate (pre-pruned) entries of one block."""
    rows, bw = scores_block.shape
    sel = np.zeros((rows, bw), dtype=bool)
    pat = config.pattern
    if isinstance(pat, SemiStructured):
        if bw % pat.m != 0:
            raise DimensionError(
                f"block width {bw} not a multiple of group size {pat.m}"
            )
        groups = scores_block.reshape(rows, bw // pat.m, pat.m)
        order = np.argsort(groups, axis=2, kind="stable")
        drop = order[:, :, : pat.m - pat.n]
        sv = sel.reshape(rows, bw // pat.m, pat.m)
        np.put_along_axis(sv, drop, True, axis=2)
    else:
        k = pruned_count(config.sparsity, rows, bw)
        if k > 0:
            ridx = np.repeat(np.arange(rows), bw)
            cidx = np.tile(np.arange(bw), rows)
            order = np.lexsort((ridx, cidx, scores_block.ravel()))
            sel.ravel()[order[:k]] = True
    return sel


def loss_profile(scores: np.ndarray, config: SparsityConfig) -> LossProfile:
    """Column and block losses from the pre-pruning candidate set."""
    scores = as_matrix(scores)
    rows, n = scores.shape
    ranges = list(config.block_ranges(n))
    col_losses = np.zeros(n)
    block_losses = np.zeros(len(ranges))
    selected = []
    for k, (i1, i2) in enumerate(ranges):
        sub = scores[:, i1:i2]
        sel = _selected_mask(sub, config)
        picked = np.where(sel, sub, 0.0)
        col_losses[i1:i2] = picked.sum(axis=0)
        block_losses[k] = picked.sum()
        selected.append(np.sort(sub[sel]))
    mean = block_losses.mean() if block_losses.size else 0.0
    if mean > 0:
        rel = float((block_losses.max() - block_losses.min()) / mean)
    else:
        rel = 0.0
    return LossProfile(
        block_losses=block_losses,
        column_losses=col_losses,
        selected_scores=selected,
        relative_range=rel,
        blocksize=config.blocksize,
    )


def _stable_order(values: np.ndarray, descending: bool) -> np.ndarray:
    if descending:
        return np.argsort(-values, kind="stable")
    return np.argsort(values, kind="stable")


def build_reorder_plan(
    profile: LossProfile,
    config: SparsityConfig,
    descending: bool = True,
) -> ReorderPlan:
    """Two-level permutation, gated on the relative range of block losses.

    ``descending=False`` flips both sort directions, pruning the cheapest
    weights first; it exists for the worst-case comparison runs.
    """
    n = profile.column_losses.size
    eta = config.columnar_threshold
    identity = Permutation.identity(n)
    if not profile.relative_range > eta:
        return ReorderPlan(identity, identity, identity, False, eta)

    ranges = list(config.block_ranges(n))
    col_forward = np.arange(n)
    for i1, i2 in ranges:
        order = _stable_order(profile.column_losses[i1:i2], descending)
        col_forward[i1:i2] = i1 + order
    block_order = _stable_order(profile.block_losses, descending)
    block_forward = np.concatenate(
        [np.arange(*ranges[b]) for b in block_order]
    )
    column_stage = Permutation(col_forward)
    block_stage = Permutation(block_forward)
    return ReorderPlan(
        permutation=compose_permutations(block_stage, column_stage),
        column_stage=column_stage,
        block_stage=block_stage,
        was_reordered=True,
        threshold_used=eta,
    )


def _prune_permuted(
    w: np.ndarray,
    activations: Sequence[np.ndarray],
    config: SparsityConfig,
    perm: Permutation,
    eager_updates: bool,
) -> PruneOutcome:
    """Prune in permuted column order and map the result back."""
    w = as_matrix(w)
    wp = apply_column_permutation(w, perm)
    acts_p = [apply_column_permutation(as_matrix(x), perm) for x in activations]
    # triangular factors are not permutation-stable, so refactor on the
    # permuted activations instead of permuting the stored factor
    bundle = accumulate_hessian(acts_p, config.damp_fraction)
    out = prune_layer(wp, bundle, acts_p, config, eager_updates=eager_updates)

    inv = perm.inverted()
    w_back = apply_column_permutation(out.pruned_weights, inv)
    kept_back = apply_column_permutation(out.mask.kept, inv)
    mask_back = PruneMask(kept=kept_back, pattern=config.pattern)
    absolute, relative = reconstruction_error(w, w_back, activations)

    trajectory = out.block_error_trajectory.copy()
    if trajectory.size:
        # same objective measured in original order; agrees to rounding
        trajectory[-1] = absolute
    return PruneOutcome(
        pruned_weights=w_back,
        mask=mask_back,
        block_error_trajectory=trajectory,
        final_error=absolute,
        relative_error=relative,
    )


def rose_prune_layer(
    w: np.ndarray,
    activations: Sequence[np.ndarray],
    config: SparsityConfig,
    descending: bool = True,
    eager_updates: bool = False,
) -> tuple[PruneOutcome, ReorderPlan, LossProfile]:
    """Score, reorder if columnar, prune, and restore channel order."""
    w = as_matrix(w)
    norms = column_norms(activations)
    scores = importance_scores(w, norms)
    profile = loss_profile(scores, config)
    plan = build_reorder_plan(profile, config, descending=descending)

    if not plan.was_reordered:
        bundle = accumulate_hessian(activations, config.damp_fraction)
        outcome = prune_layer(w, bundle, activations, config, eager_updates=eager_updates)
    else:
        outcome = _prune_permuted(
            w, activations, config, plan.permutation, eager_updates
        )
        if isinstance(config.pattern, SemiStructured) and not mask_pattern_valid(
            outcome.mask
        ):
            raise ValueError(
                "reordering broke the n:m pattern in original coordinates"
            )
    return outcome, plan, profile


def prune_with_block_order(
    w: np.ndarray,
    activations: Sequence[np.ndarray],
    config: SparsityConfig,
    block_order: Sequence[int],
) -> tuple[PruneOutcome, ReorderPlan]:
    """Prune with an explicit block order, bypassing loss-based planning.

    ``block_order`` lists source block indices in the order they should be
    pruned; no column-level reordering is applied.
    """
    w = as_matrix(w)
    n = w.shape[1]
    ranges = list(config.block_ranges(n))
    order = np.asarray(block_order, dtype=np.intp)
    if not np.array_equal(np.sort(order), np.arange(len(ranges))):
        raise DimensionError(
            f"block order must be a bijection on [0, {len(ranges)})"
        )
    block_forward = np.concatenate([np.arange(*ranges[b]) for b in order])
    block_stage = Permutation(block_forward)
    identity = Permutation.identity(n)
    plan = ReorderPlan(
        permutation=block_stage,
        column_stage=identity,
        block_stage=block_stage,
        was_reordered=not block_stage.is_identity(),
        threshold_used=config.columnar_threshold,
    )
    outcome = _prune_permuted(w, activations, config, block_stage, False)
    return outcome, plan


@dataclass(frozen=True)
class StabilityHistogram:
    """Distribution of relative weight changes |dw| / |w|."""

    bin_edges: np.ndarray
    counts: np.ndarray
    fraction_under: float
    stable_limit: float


def weight_stability_histogram(
    w_before: np.ndarray,
    w_after: np.ndarray,
    bins: int = 20,
    stable_limit: float = 0.3,
) -> StabilityHistogram:
    """How far kept weights moved during compensation.

    Entries that were zero before pruning are excluded, as are pruned
    entries (zero after).  Reports the fraction of kept weights whose
    relative change stays under ``stable_limit``.
    """
    wb = as_matrix(w_before)
    wa = as_matrix(w_after)
    if wb.shape != wa.shape:
        raise DimensionError(f"shapes differ: {wb.shape} vs {wa.shape}")
    keep = (wb != 0) & (wa != 0)
    ratios = np.abs(wa[keep] - wb[keep]) / np.abs(wb[keep])
    if ratios.size == 0:
        ratios = np.zeros(1)
    counts, edges = np.histogram(ratios, bins=bins)
    return StabilityHistogram(
        bin_edges=edges,
        counts=counts,
        fraction_under=float(np.mean(ratios < stable_limit)),
        stable_limit=stable_limit,
    )
