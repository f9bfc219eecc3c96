"""Whole-image single-image super-resolution by sparse patch coding.

Patches carry their texture in the dictionary and their DC separately:
each LR patch is mean-removed, coded against the LR dictionary, and
reconstructed through the HR dictionary; the scalar means are assembled
into an LR brightness map that is bicubic-upsampled and added back. At
scale 1 the same machinery acts as a quality-enhancement pass.
"""

import dataclasses

import numpy as np

from .image import as_image
from .ista import SolverParams, ista_solve_batch
from .operators import bicubic_upsample
from .patches import PatchGrid, assemble_patches, extract_patches


@dataclasses.dataclass
class SolveStats:
    """Tally of ISTA work, accumulated across sisr_apply calls."""

    solves: int = 0
    total_iterations: int = 0

    def absorb(self, count, iterations):
        self.solves += int(count)
        self.total_iterations += int(iterations)


def sisr_apply(img, pair, params=None, stride=4, backend=None, stats=None):
    """Super-resolve one image by pair.scale.

    Parameters
    ----------
    img : Image
        LR input; every dimension must be at least one LR patch.
    pair : DictionaryPair
        Coupled dictionaries; pair.scale sets the magnification.
    params : SolverParams, optional
        Solver settings; defaults to SolverParams().
    stride : int
        Patch step in HR pixels, a positive multiple of pair.scale.
        Smaller strides mean more overlap, more solves, smoother output.
    backend : str, optional
        Kernel backend override, see COMSR_BACKEND.
    stats : SolveStats, optional
        When given, solve counts are accumulated into it.

    Returns
    -------
    Image
        Output with dimensions img.shape * pair.scale.
    """
    img = as_image(img)
    if params is None:
        params = SolverParams()
    scale = pair.scale
    lr_patch = pair.lr_patch_size
    stride = int(stride)
    if stride < scale or stride % scale:
        raise ValueError(
            f"stride must be a positive multiple of the scale {scale}, got {stride}"
        )
    if min(img.shape) < lr_patch:
        raise ValueError(
            f"image {img.shape} smaller than the {lr_patch}px LR patch"
        )
    grid = extract_patches(img, lr_patch, stride // scale, remove_mean=True)

    alpha, iters, _, _ = ista_solve_batch(grid.patches.T, pair, params, backend=backend)
    if stats is not None:
        stats.absorb(grid.n_patches, iters.sum())

    hr_shape = (img.shape[0] * scale, img.shape[1] * scale)
    texture = assemble_patches(
        PatchGrid(
            patch_size=pair.patch_size,
            stride=stride,
            origins_y=grid.origins_y * scale,
            origins_x=grid.origins_x * scale,
            patches=(pair.hr @ alpha).T,
            means=None,
            image_shape=hr_shape,
        )
    )

    # DC travels outside the dictionaries: assemble the per-patch means
    # on the LR grid, then lift the brightness map to HR
    mean_map = assemble_patches(
        PatchGrid(
            patch_size=lr_patch,
            stride=stride // scale,
            origins_y=grid.origins_y,
            origins_x=grid.origins_x,
            patches=np.broadcast_to(
                grid.means[:, None], (grid.n_patches, lr_patch * lr_patch)
            ),
            means=None,
            image_shape=img.shape,
        )
    )
    return texture + bicubic_upsample(mean_map, scale)
