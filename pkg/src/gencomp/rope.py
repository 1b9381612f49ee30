"""Rotary position embeddings over (t, h, w) token grids.

Tokens carry integer (t, h, w) coordinates. A rotary table splits the head
dimension into per-axis bands; each rotation plane spins by coordinate times
a geometric frequency. For layout-unaligned condition tokens, the grid can
be shifted past the main grid's extent along one axis so the two token sets
never share a position label.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError

AXES = ("t", "h", "w")


@dataclass(frozen=True)
class PositionGrid:
    """Per-token (t, h, w) coordinates plus the grid extents they came from."""

    coords: np.ndarray  # (N, 3) int64
    extents: tuple[int, int, int]

    def __post_init__(self):
        object.__setattr__(self, "coords", np.asarray(self.coords, dtype=np.int64).reshape(-1, 3))

    def __len__(self) -> int:
        return self.coords.shape[0]

    def axis_values(self, axis: str) -> np.ndarray:
        return self.coords[:, AXES.index(axis)]


def build_grid(t_tok: int, h_tok: int, w_tok: int) -> PositionGrid:
    """Row-major (t, then h, then w) enumeration of all t_tok*h_tok*w_tok coords."""
    if min(t_tok, h_tok, w_tok) < 1:
        raise InvalidInputError(f"grid extents must be >= 1, got {(t_tok, h_tok, w_tok)}")
    tt, hh, ww = np.meshgrid(
        np.arange(t_tok), np.arange(h_tok), np.arange(w_tok), indexing="ij"
    )
    coords = np.stack([tt.ravel(), hh.ravel(), ww.ravel()], axis=1)
    return PositionGrid(coords, (t_tok, h_tok, w_tok))


def extend_grid(base: PositionGrid, other: PositionGrid, axis: str) -> PositionGrid:
    """Shift `other`'s coordinates past `base`'s extent along `axis`.

    The shifted grid's axis values are disjoint from the base grid's, so the
    two token sets receive unique position labels. Extents and the remaining
    axes are unchanged.
    """
    if axis not in AXES:
        raise InvalidInputError(f"axis must be one of {AXES}, got {axis!r}")
    i = AXES.index(axis)
    coords = other.coords.copy()
    coords[:, i] += base.extents[i]
    return PositionGrid(coords, other.extents)


def concat_grids(a: PositionGrid, b: PositionGrid) -> PositionGrid:
    extents = tuple(max(x, y) for x, y in zip(a.extents, b.extents))
    return PositionGrid(np.concatenate([a.coords, b.coords], axis=0), extents)


def _even_split(head_dim: int) -> tuple[int, int, int]:
    # Roughly (1/4, 3/8, 3/8) across (t, h, w), each rounded to an even size.
    dt = 2 * round(head_dim / 8)
    dh = 2 * round(3 * head_dim / 16)
    dw = head_dim - dt - dh
    return dt, dh, dw


@dataclass(frozen=True)
class RotaryTable:
    """Per-axis frequency bands for a given head dimension.

    The table depends only on head_dim/base, never on any grid, so shifting
    token coordinates adds no parameters or state here.
    """

    head_dim: int
    base: float = 10000.0
    axis_dims: tuple[int, int, int] = field(default=None)  # (dt, dh, dw)

    def __post_init__(self):
        if self.head_dim % 2 != 0:
            raise InvalidInputError(f"head_dim must be even, got {self.head_dim}")
        if self.axis_dims is None:
            object.__setattr__(self, "axis_dims", _even_split(self.head_dim))
        dims = self.axis_dims
        if sum(dims) != self.head_dim or any(d < 2 or d % 2 for d in dims):
            raise InvalidInputError(f"bad axis split {dims} for head_dim {self.head_dim}")

    def angles(self, grid: PositionGrid) -> np.ndarray:
        """Rotation angles, one per (token, plane): shape (N, head_dim // 2)."""
        parts = []
        for i, d in enumerate(self.axis_dims):
            freqs = self.base ** (-np.arange(0, d, 2, dtype=np.float64) / d)
            parts.append(grid.coords[:, i : i + 1].astype(np.float64) * freqs)
        return np.concatenate(parts, axis=1)


def rotate_half_split(x: np.ndarray, cos: np.ndarray, sin: np.ndarray) -> np.ndarray:
    """Rotate pairs (i, i + D/2) of the last axis by the given angles.

    x: (..., N, D); cos/sin: (N, D/2) broadcast over leading axes.
    """
    half = x.shape[-1] // 2
    x1, x2 = x[..., :half], x[..., half:]
    return np.concatenate([x1 * cos - x2 * sin, x1 * sin + x2 * cos], axis=-1)


def apply_rotary(
    vectors: np.ndarray, grid: PositionGrid, table: RotaryTable, inverse: bool = False
) -> np.ndarray:
    """Rotate token vectors by their grid positions. Norm-preserving.

    vectors: (..., N, head_dim). `inverse=True` applies the transpose rotation
    (used when back-propagating through the embedding).
    """
    vectors = np.asarray(vectors)
    if vectors.shape[-1] != table.head_dim:
        raise InvalidInputError(
            f"vector dim {vectors.shape[-1]} != table head_dim {table.head_dim}"
        )
    if vectors.shape[-2] != len(grid):
        raise InvalidInputError(f"{vectors.shape[-2]} vectors but grid has {len(grid)} coords")
    ang = table.angles(grid)
    cos = np.cos(ang).astype(vectors.dtype)
    sin = np.sin(ang).astype(vectors.dtype)
    if inverse:
        sin = -sin
    return rotate_half_split(vectors, cos, sin)
