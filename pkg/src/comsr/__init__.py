"""comsr: single-image and multi-frame super-resolution toolkit.

Grayscale images are 2-D float64 arrays in [0, 1]. The observation model is

    lr_k = decimate(shift(blur(hr)), r) + noise_k

with circular (toroidal) shifts, reflective blur padding, and phase-(0, 0)
decimation. On top of that the package provides sparse-coding single-image
SR, shift-and-add and curve-fit multi-frame fusion, combination pipelines,
and an executable check that the multi-frame sparse solve on the fused
input is iteration-for-iteration identical to the stacked single-image
solve.

Hot kernels (batched ISTA, curve-fit gather) run through numba when
available; set COMSR_BACKEND=numpy to force the pure-numpy fallback.
"""

__version__ = "0.1.0"
