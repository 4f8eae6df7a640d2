"""Block-wise second-order pruning with Cholesky-based compensation.

Columns are processed left to right in blocks.  The mask for a block is
fixed once at block entry from the weights as they stand and the squared
diagonals of the stored upper factor.  Pruned columns are zeroed and every
row is compensated in parallel along the factor's trailing row; updates to
columns beyond the current block are deferred to block end, which is
arithmetically identical to eager application because those columns are
never read inside the block.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .calibration import DEGENERATE_DIAG, HessianBundle
from .errors import DimensionError, IndefiniteHessianError, NumericOverflowError
from .tensors import (
    PruneMask,
    SemiStructured,
    SparsityConfig,
    Unstructured,
    as_matrix,
    pruned_count,
)


@dataclass(frozen=True)
class PruneOutcome:
    """Pruned weights plus the error accounting of one layer."""

    pruned_weights: np.ndarray
    mask: PruneMask
    block_error_trajectory: np.ndarray
    final_error: float
    relative_error: float


def obs_saliency(w_q: float, inv_h_qq: float) -> float:
    """Loss increase from removing one weight: w_q**2 / inv_h_qq."""
    if inv_h_qq <= 0:
        raise IndefiniteHessianError(
            f"inverse-Hessian diagonal must be positive, got {inv_h_qq}"
        )
    return w_q * w_q / inv_h_qq


def obs_update_row(row: np.ndarray, q: int, inv_h: np.ndarray) -> np.ndarray:
    """Remove weight q from one row and optimally compensate the rest."""
    row = np.asarray(row, dtype=np.float64)
    inv_h = as_matrix(inv_h)
    if not 0 <= q < row.size:
        raise DimensionError(f"column {q} out of range for row of size {row.size}")
    d = inv_h[q, q]
    if d <= 0:
        raise IndefiniteHessianError(
            f"inverse-Hessian diagonal at {q} must be positive, got {d}"
        )
    out = row - (row[q] / d) * inv_h[:, q]
    out[q] = 0.0
    return out


def select_block_mask(
    w_block: np.ndarray,
    inv_h_block_diag: np.ndarray,
    config: SparsityConfig,
    force_cols: Sequence[int] = (),
) -> PruneMask:
    """Choose the keep/prune mask for one block of columns.

    Saliency is w**2 / inv_diag.  Unstructured masks prune the globally
    smallest entries of the block until the rounded per-block count is met;
    n:m masks prune the m-n smallest entries of every row group.  Ties go
    to the smaller column index, then the smaller row index.  Columns in
    ``force_cols`` (dead calibration channels) are pruned first.
    """
    w_block = as_matrix(w_block)
    rows, bw = w_block.shape
    inv_diag = np.asarray(inv_h_block_diag, dtype=np.float64)
    if inv_diag.shape != (bw,):
        raise DimensionError(
            f"inverse diagonal length {inv_diag.shape} != block width {bw}"
        )
    s = w_block * w_block / inv_diag
    if len(force_cols):
        s[:, np.asarray(force_cols, dtype=np.intp)] = -np.inf

    kept = np.ones((rows, bw), dtype=bool)
    pat = config.pattern
    if isinstance(pat, SemiStructured):
        if bw % pat.m != 0:
            raise DimensionError(
                f"block width {bw} not a multiple of group size {pat.m}"
            )
        groups = s.reshape(rows, bw // pat.m, pat.m)
        # stable sort keeps the lower column on ties
        order = np.argsort(groups, axis=2, kind="stable")
        drop = order[:, :, : pat.m - pat.n]
        kv = kept.reshape(rows, bw // pat.m, pat.m)
        np.put_along_axis(kv, drop, False, axis=2)
    else:
        k = pruned_count(config.sparsity, rows, bw)
        if k > 0:
            ridx = np.repeat(np.arange(rows), bw)
            cidx = np.tile(np.arange(bw), rows)
            order = np.lexsort((ridx, cidx, s.ravel()))
            kept.ravel()[order[:k]] = False
    return PruneMask(kept=kept, pattern=pat)


def _stacked(activations: Sequence[np.ndarray]) -> np.ndarray:
    mats = [as_matrix(a) for a in activations]
    if not mats:
        raise DimensionError("need at least one activation batch")
    return np.vstack(mats)


def reconstruction_error(
    w_dense: np.ndarray,
    w_pruned: np.ndarray,
    activations: Sequence[np.ndarray],
) -> tuple[float, float]:
    """Squared output error of the pruned layer, absolute and relative."""
    wd = as_matrix(w_dense)
    wp = as_matrix(w_pruned)
    if wd.shape != wp.shape:
        raise DimensionError(f"weight shapes differ: {wd.shape} vs {wp.shape}")
    xs = _stacked(activations)
    if xs.shape[1] != wd.shape[1]:
        raise DimensionError(
            f"activation cols {xs.shape[1]} != weight cols {wd.shape[1]}"
        )
    diff = (wd - wp) @ xs.T
    absolute = float(np.sum(diff * diff))
    ref = wd @ xs.T
    denom = float(np.sum(ref * ref))
    relative = absolute / denom if denom > 0 else 0.0
    return absolute, relative


def prune_layer(
    w: np.ndarray,
    bundle: HessianBundle,
    activations: Sequence[np.ndarray],
    config: SparsityConfig,
    eager_updates: bool = False,
) -> PruneOutcome:
    """Prune one layer block by block with OBS compensation.

    ``eager_updates`` applies cross-block compensation immediately per
    column instead of at block end; the two modes are bitwise identical
    and the flag exists so tests can prove it.
    """
    w_dense = as_matrix(w)
    rows, n = w_dense.shape
    if n != bundle.n:
        raise DimensionError(f"weight cols {n} != Hessian size {bundle.n}")
    xs = _stacked(activations)
    if xs.shape[1] != n:
        raise DimensionError(f"activation cols {xs.shape[1]} != weight cols {n}")

    upper = bundle.chol_upper
    dead = set(int(j) for j in bundle.dead_columns)
    w_cur = w_dense.copy()
    kept_full = np.ones((rows, n), dtype=bool)
    trajectory = []

    for block_index, (i1, i2) in enumerate(config.block_ranges(n)):
        bw = i2 - i1
        d = upper.diagonal()[i1:i2]
        inv_diag = d * d
        degenerate = inv_diag < DEGENERATE_DIAG
        force = [j - i1 for j in range(i1, i2) if j in dead]
        mask = select_block_mask(
            w_cur[:, i1:i2],
            np.maximum(inv_diag, DEGENERATE_DIAG),
            config,
            force,
        )
        kept_full[:, i1:i2] = mask.kept

        errs = np.zeros((rows, bw))
        for c in range(bw):
            q = i1 + c
            col = w_cur[:, q]
            kept_c = mask.kept[:, c]
            if degenerate[c]:
                if not np.all(kept_c):
                    warnings.warn(
                        f"column {q}: degenerate inverse diagonal, pruning "
                        "without compensation",
                        RuntimeWarning,
                    )
                e = np.zeros(rows)
            else:
                e = np.where(kept_c, 0.0, col) / d[c]
            w_cur[:, q] = np.where(kept_c, col, 0.0)
            if c + 1 < bw:
                w_cur[:, q + 1 : i2] -= np.outer(e, upper[q, q + 1 : i2])
            errs[:, c] = e
            if eager_updates and i2 < n:
                w_cur[:, i2:] -= np.outer(e, upper[q, i2:])
        if not eager_updates and i2 < n:
            # per-column application in order keeps this bitwise equal to
            # the eager path
            for c in range(bw):
                w_cur[:, i2:] -= np.outer(errs[:, c], upper[i1 + c, i2:])

        if not np.all(np.isfinite(w_cur)):
            raise NumericOverflowError(
                f"non-finite weights after block {block_index}", block=block_index
            )
        diff = (w_dense - w_cur) @ xs.T
        trajectory.append(float(np.sum(diff * diff)))

    absolute = trajectory[-1] if trajectory else 0.0
    ref = w_dense @ xs.T
    denom = float(np.sum(ref * ref))
    relative = absolute / denom if denom > 0 else 0.0
    return PruneOutcome(
        pruned_weights=w_cur,
        mask=PruneMask(kept=kept_full, pattern=config.pattern),
        block_error_trajectory=np.asarray(trajectory),
        final_error=absolute,
        relative_error=relative,
    )
