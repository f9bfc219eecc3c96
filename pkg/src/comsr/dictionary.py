"""Coupled HR/LR dictionary pairs for sparse-coding super-resolution.

Atoms are mean-free, unit-norm HR patches sampled at random locations of
training images; the LR dictionary is derived analytically, column by
column, as blur-then-decimate of the HR atom. That coupling, rather than
separately learned dictionaries, is what makes the multi-frame algebra in
comsr.multiframe exact.

Dictionary file layout (all little-endian):

    bytes  0..7   magic "COMSRDIC"
    bytes  8..11  format version (uint32, currently 1)
    bytes 12..15  reserved, zero
    5 x uint32    num_atoms K, n_p, m_p, scale, patch_size
    n_p*K float64 HR atoms, column-major
    m_p*K float64 LR atoms, column-major
    float64       lipschitz step bound

atom_norms is recomputed on load, never stored.
"""

import dataclasses
import struct

import numpy as np

from .image import as_image
from .operators import decimate, gaussian_blur, gaussian_kernel

MAGIC = b"COMSRDIC"
FORMAT_VERSION = 1

#: patches flatter than this sample standard deviation carry no texture
#: worth an atom and are rejected during sampling
MIN_PATCH_STD = 0.02


@dataclasses.dataclass
class DictionaryPair:
    """Coupled atom matrices plus the solver's step bound.

    hr is n_p x K (n_p = patch_size**2), lr is m_p x K with
    m_p = (patch_size/scale)**2, and lr[:, j] is exactly the
    blur-and-decimate image of hr[:, j].
    """

    hr: np.ndarray
    lr: np.ndarray
    scale: int
    patch_size: int
    lipschitz: float
    atom_norms: np.ndarray

    @property
    def num_atoms(self):
        return self.hr.shape[1]

    @property
    def lr_patch_size(self):
        return self.patch_size // self.scale


def power_iteration(apply_gram, dim, iterations=200):
    """Largest-eigenvalue estimate of a symmetric PSD operator.

    apply_gram maps a length-dim vector to gram @ vector. The start
    vector is fixed (no RNG) so estimates are reproducible.
    """
    v = np.sin(np.arange(1, dim + 1, dtype=np.float64))
    v /= np.linalg.norm(v)
    estimate = 0.0
    for _ in range(iterations):
        w = apply_gram(v)
        current = float(v @ w)
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            return 0.0
        v = w / norm
        if abs(current - estimate) <= 1e-13 * max(abs(current), 1.0):
            return current
        estimate = current
    return estimate


def _lr_projection(atom, scale, blur_sigma):
    if blur_sigma > 0:
        atom = gaussian_blur(atom, gaussian_kernel(blur_sigma))
    return decimate(atom, scale)


def build_dictionary_pair(
    training_images, num_atoms, patch_size, scale, blur_sigma=1.0, seed=0
):
    """Sample a coupled dictionary pair from training images.

    Parameters
    ----------
    training_images : Image or list of Image
        Sources for HR patches; each must be at least patch_size square.
    num_atoms : int
        K, must exceed the LR patch dimension (patch_size/scale)**2 so
        the LR dictionary is over-complete.
    patch_size : int
        HR patch edge, divisible by scale.
    scale : int
        Upsampling factor r; scale 1 builds an enhancement dictionary.
    blur_sigma : float
        Blur absorbed into the LR projection; 0 disables it.
    seed : int
        Drives patch location sampling.

    Returns
    -------
    DictionaryPair

    Raises
    ------
    ValueError
        On dimension violations or when the images cannot supply
        num_atoms distinct patches with std >= 0.02.
    """
    if not isinstance(training_images, (list, tuple)):
        training_images = [training_images]
    images = [as_image(img) for img in training_images]
    scale = int(scale)
    patch_size = int(patch_size)
    num_atoms = int(num_atoms)
    if scale < 1:
        raise ValueError(f"scale must be >= 1, got {scale}")
    if patch_size % scale:
        raise ValueError(f"patch_size {patch_size} not divisible by scale {scale}")
    m_p = (patch_size // scale) ** 2
    if num_atoms <= m_p:
        raise ValueError(
            f"num_atoms must exceed the LR patch dimension {m_p}, got {num_atoms}"
        )
    usable = [
        img for img in images if min(img.shape) >= patch_size
    ]
    if not usable:
        raise ValueError(f"no training image can host a {patch_size}px patch")

    rng = np.random.default_rng(seed)
    hr_cols = np.empty((patch_size * patch_size, num_atoms))
    lr_cols = np.empty((m_p, num_atoms))
    seen = set()
    kept = 0
    attempts = 0
    budget = 200 * num_atoms
    while kept < num_atoms:
        if attempts >= budget:
            raise ValueError(
                f"insufficient valid patches: {kept}/{num_atoms} "
                f"after {attempts} draws"
            )
        attempts += 1
        idx = int(rng.integers(len(usable)))
        img = usable[idx]
        oy = int(rng.integers(img.shape[0] - patch_size + 1))
        ox = int(rng.integers(img.shape[1] - patch_size + 1))
        if (idx, oy, ox) in seen:
            continue
        patch = img[oy : oy + patch_size, ox : ox + patch_size]
        if patch.std() < MIN_PATCH_STD:
            continue
        seen.add((idx, oy, ox))
        centered = patch - patch.mean()
        atom = centered / np.linalg.norm(centered)
        hr_cols[:, kept] = atom.ravel()
        lr_cols[:, kept] = _lr_projection(atom, scale, blur_sigma).ravel()
        kept += 1

    gram = lr_cols.T @ lr_cols
    lipschitz = 1.01 * power_iteration(lambda v: gram @ v, num_atoms)
    atom_norms = np.linalg.norm(lr_cols, axis=0)
    return DictionaryPair(hr_cols, lr_cols, scale, patch_size, lipschitz, atom_norms)


def save_dictionary(pair, path):
    """Write a DictionaryPair in the documented binary layout."""
    k = pair.num_atoms
    n_p, m_p = pair.hr.shape[0], pair.lr.shape[0]
    dims = np.array([k, n_p, m_p, pair.scale, pair.patch_size], dtype="<u4")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(b"\x00" * 4)
        fh.write(dims.tobytes())
        fh.write(np.asarray(pair.hr, dtype="<f8").ravel(order="F").tobytes())
        fh.write(np.asarray(pair.lr, dtype="<f8").ravel(order="F").tobytes())
        fh.write(struct.pack("<d", pair.lipschitz))


def load_dictionary(path):
    """Read a dictionary file; inverse of save_dictionary."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 36 or raw[:8] != MAGIC:
        raise ValueError(f"{path}: not a dictionary file")
    (version,) = struct.unpack_from("<I", raw, 8)
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported dictionary format version {version}")
    k, n_p, m_p, scale, patch_size = (
        int(v) for v in np.frombuffer(raw, dtype="<u4", count=5, offset=16)
    )
    expected = 36 + 8 * (n_p * k + m_p * k + 1)
    if len(raw) != expected:
        raise ValueError(
            f"{path}: dictionary payload is {len(raw)} bytes, expected {expected}"
        )
    if patch_size * patch_size != n_p or scale < 1 or patch_size % scale:
        raise ValueError(f"{path}: inconsistent dictionary dimensions")
    if (patch_size // scale) ** 2 != m_p:
        raise ValueError(f"{path}: inconsistent dictionary dimensions")
    offset = 36
    hr = np.frombuffer(raw, dtype="<f8", count=n_p * k, offset=offset)
    hr = hr.reshape((n_p, k), order="F").copy()
    offset += 8 * n_p * k
    lr = np.frombuffer(raw, dtype="<f8", count=m_p * k, offset=offset)
    lr = lr.reshape((m_p, k), order="F").copy()
    offset += 8 * m_p * k
    (lipschitz,) = struct.unpack_from("<d", raw, offset)
    atom_norms = np.linalg.norm(lr, axis=0)
    return DictionaryPair(hr, lr, scale, patch_size, lipschitz, atom_norms)
