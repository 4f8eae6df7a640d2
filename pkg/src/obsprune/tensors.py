"""Dense matrices, column permutations, pruning masks and sparsity configs.

Matrices are plain 2-D float64 numpy arrays in row-major order; every
operation in the library treats them as immutable and returns fresh arrays.
Permutations act on columns (input channels) only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError


def as_matrix(a) -> np.ndarray:
    """Coerce to a 2-D float64 array, widening f32 input."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got ndim={m.ndim}")
    return m


# ---------------------------------------------------------------------------
# Sparsity patterns


@dataclass(frozen=True)
class Unstructured:
    """Prune a fraction ``sparsity`` of entries per column block."""

    sparsity: float


@dataclass(frozen=True)
class SemiStructured:
    """Keep exactly ``n`` entries in every contiguous row group of ``m``."""

    n: int
    m: int

    def __post_init__(self):
        if not (0 < self.n < self.m):
            raise ValueError(f"need 0 < n < m, got {self.n}:{self.m}")

    @property
    def sparsity(self) -> float:
        return (self.m - self.n) / self.m


@dataclass(frozen=True)
class SparsityConfig:
    """Pruning configuration shared by all methods.

    ``blocksize`` is the number of consecutive input channels masked and
    compensated together.  ``damp_fraction`` scales the mean Hessian
    diagonal into the dampening term.  ``columnar_threshold`` gates the
    reordering stage on the relative range of block losses.
    """

    sparsity: float
    blocksize: int = 128
    pattern: Unstructured | SemiStructured | None = None
    damp_fraction: float = 0.01
    columnar_threshold: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.sparsity < 1.0:
            raise ValueError(f"sparsity must be in [0, 1), got {self.sparsity}")
        if self.blocksize < 1:
            raise ValueError("blocksize must be >= 1")
        if self.damp_fraction < 0:
            raise ValueError("damp_fraction must be >= 0")
        if self.pattern is None:
            object.__setattr__(self, "pattern", Unstructured(self.sparsity))
        p = self.pattern
        if isinstance(p, SemiStructured):
            if self.blocksize % p.m != 0:
                raise ValueError(
                    f"blocksize {self.blocksize} is not a multiple of m={p.m}"
                )
            if abs(self.sparsity - p.sparsity) > 1e-12:
                raise ValueError(
                    f"sparsity {self.sparsity} inconsistent with {p.n}:{p.m} pattern"
                )

    @classmethod
    def semi_structured(cls, n: int, m: int, blocksize: int | None = None, **kw):
        """Config for an n:m pattern; blocksize defaults to m."""
        pat = SemiStructured(n, m)
        return cls(
            sparsity=pat.sparsity,
            blocksize=m if blocksize is None else blocksize,
            pattern=pat,
            **kw,
        )

    def block_ranges(self, n: int):
        """Yield (start, stop) column ranges of each block of width blocksize."""
        for start in range(0, n, self.blocksize):
            yield start, min(start + self.blocksize, n)


# ---------------------------------------------------------------------------
# Permutations


@dataclass(frozen=True)
class Permutation:
    """A bijection on column indices with its precomputed inverse.

    ``forward[j]`` is the source column placed at destination ``j`` when the
    permutation is applied to a matrix.
    """

    forward: np.ndarray
    inverse: np.ndarray = field(default=None)

    def __post_init__(self):
        fwd = np.asarray(self.forward, dtype=np.intp)
        object.__setattr__(self, "forward", fwd)
        n = fwd.size
        if not np.array_equal(np.sort(fwd), np.arange(n)):
            raise ValueError("forward is not a bijection on [0, size)")
        inv = np.empty(n, dtype=np.intp)
        inv[fwd] = np.arange(n)
        object.__setattr__(self, "inverse", inv)

    @property
    def size(self) -> int:
        return self.forward.size

    @classmethod
    def identity(cls, size: int) -> "Permutation":
        return cls(np.arange(size))

    def inverted(self) -> "Permutation":
        return Permutation(self.inverse.copy())

    def is_identity(self) -> bool:
        return bool(np.array_equal(self.forward, np.arange(self.size)))


def apply_column_permutation(m: np.ndarray, p: Permutation) -> np.ndarray:
    """Return a copy of ``m`` with columns reordered by ``p``."""
    m = np.asarray(m)
    if p.size != m.shape[1]:
        raise DimensionError(
            f"permutation size {p.size} != matrix cols {m.shape[1]}"
        )
    return m[:, p.forward].copy()


def compose_permutations(outer: Permutation, inner: Permutation) -> Permutation:
    """Composition with ``forward[i] = inner.forward[outer.forward[i]]``.

    Applying the result to a matrix equals applying ``inner`` first and then
    ``outer``.
    """
    if outer.size != inner.size:
        raise DimensionError(
            f"permutation sizes differ: {outer.size} vs {inner.size}"
        )
    return Permutation(inner.forward[outer.forward])


# ---------------------------------------------------------------------------
# Pruning masks


@dataclass(frozen=True)
class PruneMask:
    """Boolean keep/prune matrix plus the sparsity pattern that produced it."""

    kept: np.ndarray
    pattern: Unstructured | SemiStructured

    def __post_init__(self):
        k = np.asarray(self.kept, dtype=bool)
        if k.ndim != 2:
            raise DimensionError("mask must be 2-D")
        object.__setattr__(self, "kept", k)

    @property
    def rows(self) -> int:
        return self.kept.shape[0]

    @property
    def cols(self) -> int:
        return self.kept.shape[1]


def mask_sparsity(mask: PruneMask) -> float:
    """Fraction of pruned (False) entries."""
    return float(np.count_nonzero(~mask.kept)) / mask.kept.size


def pruned_count(sparsity: float, rows: int, block_width: int) -> int:
    """Entries to prune in one block: floor(p * rows * width + 0.5).

    Ties at .5 round up; the fixed rule keeps masks deterministic.
    """
    return int(np.floor(sparsity * rows * block_width + 0.5))


def mask_pattern_valid(mask: PruneMask) -> bool:
    """Check the mask against its declared pattern, group by group."""
    pat = mask.pattern
    if isinstance(pat, Unstructured):
        return True
    if mask.cols % pat.m != 0:
        return False
    groups = mask.kept.reshape(mask.rows, mask.cols // pat.m, pat.m)
    return bool(np.all(groups.sum(axis=2) == pat.n))
