"""Brute-force references for the compensation engine.

These deliberately avoid the Cholesky shortcut: the exact reconstruction
solves the normal equations of the fixed-mask least-squares problem, and
the naive pruner re-inverts the trailing Hessian submatrix at every step.
They ship with the library so the CLI can re-run the cross-checks on
demand, but they are O(n**4) and capped at small sizes.
"""

from __future__ import annotations

import warnings
from typing import Sequence

import numpy as np

from .calibration import DEGENERATE_DIAG, raw_hessian
from .engine import PruneOutcome, _stacked, select_block_mask
from .errors import DimensionError, OracleScaleError, SingularOracleError
from .tensors import PruneMask, SparsityConfig, as_matrix

ORACLE_MAX_COLS = 64


def exact_masked_reconstruction(
    w_row: np.ndarray, mask_row: np.ndarray, hessian: np.ndarray
) -> np.ndarray:
    """Best row with the given zero pattern under the layer objective.

    Minimizes ||(w - w_hat) X||^2 over rows that are zero on pruned
    entries, via the normal equations on the kept-column principal
    submatrix of H = X.T X.
    """
    w_row = np.asarray(w_row, dtype=np.float64)
    kept = np.asarray(mask_row, dtype=bool)
    h = as_matrix(hessian)
    n = w_row.size
    if kept.shape != (n,) or h.shape != (n, n):
        raise DimensionError("row, mask and Hessian sizes disagree")
    out = np.zeros(n)
    idx = np.flatnonzero(kept)
    if idx.size == 0:
        return out
    sub = h[np.ix_(idx, idx)]
    rhs = h[idx, :] @ w_row
    try:
        out[idx] = np.linalg.solve(sub, rhs)
    except np.linalg.LinAlgError as e:
        raise SingularOracleError("kept-column submatrix is singular") from e
    return out


def naive_obs_prune(
    w: np.ndarray,
    activations: Sequence[np.ndarray],
    config: SparsityConfig,
) -> PruneOutcome:
    """Reference pruner that inverts the trailing Hessian at every step.

    Uses the same mask-selection rule and dampening as the engine, but no
    precomputed factor and no deferred updates, so agreement with
    ``prune_layer`` exercises the whole Cholesky shortcut.
    """
    w_dense = as_matrix(w)
    rows, n = w_dense.shape
    if n > ORACLE_MAX_COLS:
        raise OracleScaleError(f"oracle capped at {ORACLE_MAX_COLS} columns, got {n}")
    xs = _stacked(activations)
    if xs.shape[1] != n:
        raise DimensionError(f"activation cols {xs.shape[1]} != weight cols {n}")

    raw = raw_hessian(activations)
    lam = config.damp_fraction * raw.diagonal().mean()
    dead = np.flatnonzero(raw.diagonal() == 0.0)
    h = raw + lam * np.eye(n)

    w_cur = w_dense.copy()
    kept_full = np.ones((rows, n), dtype=bool)
    trajectory = []

    for i1, i2 in config.block_ranges(n):
        bw = i2 - i1
        inv_diag = np.empty(bw)
        for c in range(bw):
            j = i1 + c
            inv_diag[c] = np.linalg.inv(h[j:, j:])[0, 0]
        force = [int(j) - i1 for j in dead if i1 <= j < i2]
        mask = select_block_mask(
            w_cur[:, i1:i2],
            np.maximum(inv_diag, DEGENERATE_DIAG),
            config,
            force,
        )
        kept_full[:, i1:i2] = mask.kept

        for c in range(bw):
            q = i1 + c
            col = w_cur[:, q]
            kept_c = mask.kept[:, c]
            trailing_inv = np.linalg.inv(h[q:, q:])
            d = trailing_inv[0, 0]
            if d < DEGENERATE_DIAG:
                if not np.all(kept_c):
                    warnings.warn(
                        f"column {q}: degenerate inverse diagonal, pruning "
                        "without compensation",
                        RuntimeWarning,
                    )
                w_cur[:, q] = np.where(kept_c, col, 0.0)
                continue
            e = np.where(kept_c, 0.0, col) / d
            w_cur[:, q:] -= np.outer(e, trailing_inv[:, 0])
            w_cur[:, q] = np.where(kept_c, col, 0.0)
        diff = (w_dense - w_cur) @ xs.T
        trajectory.append(float(np.sum(diff * diff)))

    absolute = trajectory[-1] if trajectory else 0.0
    ref = w_dense @ xs.T
    denom = float(np.sum(ref * ref))
    return PruneOutcome(
        pruned_weights=w_cur,
        mask=PruneMask(kept=kept_full, pattern=config.pattern),
        block_error_trajectory=np.asarray(trajectory),
        final_error=absolute,
        relative_error=absolute / denom if denom > 0 else 0.0,
    )
