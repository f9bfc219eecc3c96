"""Patch grids: extraction with edge clamping, assembly with overlap averaging."""

from dataclasses import dataclass

import numpy as np


def _axis_origins(dim, size, stride):
    if size > dim:
        raise ValueError(f"patch size {size} exceeds image extent {dim}")
    origins = list(range(0, dim - size + 1, stride))
    # Clamp a final origin so the grid always reaches the far edge.
    if origins[-1] != dim - size:
        origins.append(dim - size)
    return np.asarray(origins, dtype=np.int64)


@dataclass
class PatchGrid:
    """Row-major grid of vectorized patches plus the geometry to undo it.

    patches has one row per patch (origin order: all x for the first y,
    then the next y). means holds the removed per-patch scalar means, or
    None when extraction kept them in place.
    """

    patch_size: int
    stride: int
    origins_y: np.ndarray
    origins_x: np.ndarray
    patches: np.ndarray
    means: np.ndarray | None
    image_shape: tuple[int, int]

    @property
    def n_patches(self):
        return self.patches.shape[0]


def extract_patches(img, patch_size, stride, remove_mean=False):
    """Extract overlapping square patches covering the whole image.

    Origins step by stride and a clamped final origin guarantees the far
    edge is covered on each axis (for a 10-pixel axis, size 4, stride 3
    the origins are 0, 3, 6 and the clamp coincides with 6).
    """
    img = np.asarray(img, dtype=np.float64)
    patch_size = int(patch_size)
    stride = int(stride)
    if patch_size < 1 or stride < 1:
        raise ValueError(f"patch_size and stride must be >= 1, got {patch_size}, {stride}")
    oy = _axis_origins(img.shape[0], patch_size, stride)
    ox = _axis_origins(img.shape[1], patch_size, stride)
    win = np.lib.stride_tricks.sliding_window_view(img, (patch_size, patch_size))
    patches = win[np.ix_(oy, ox)].reshape(len(oy) * len(ox), patch_size * patch_size).copy()
    means = None
    if remove_mean:
        means = patches.mean(axis=1)
        patches -= means[:, None]
    return PatchGrid(
        patch_size=patch_size,
        stride=stride,
        origins_y=oy,
        origins_x=ox,
        patches=patches,
        means=means,
        image_shape=(img.shape[0], img.shape[1]),
    )


def assemble_patches(grid, height=None, width=None):
    """Average overlapping patches back into an image.

    Removed means are re-added per patch before accumulation, so
    assemble(extract(img, ...)) reproduces img up to averaging rounding.
    """
    if grid.n_patches == 0:
        raise ValueError("empty patch grid")
    if height is None or width is None:
        height, width = grid.image_shape
    ps = grid.patch_size
    block = grid.patches
    if grid.means is not None:
        block = block + grid.means[:, None]
    block = block.reshape(-1, ps, ps)
    acc = np.zeros((height, width), dtype=np.float64)
    cnt = np.zeros((height, width), dtype=np.float64)
    idx = 0
    for oy in grid.origins_y:
        for ox in grid.origins_x:
            acc[oy:oy + ps, ox:ox + ps] += block[idx]
            cnt[oy:oy + ps, ox:ox + ps] += 1.0
            idx += 1
    if np.any(cnt == 0):
        raise ValueError("patch grid does not cover the target extent")
    return acc / cnt
