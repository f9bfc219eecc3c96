"""Grayscale image containers, file I/O, and PSNR.

Images are 2-D float64 arrays, nominally in [0, 1]. Loading maps 8-bit
samples to value/255; RGB inputs collapse to luma with ITU-R BT.601
weights. Saving clamps to [0, 1] and quantizes with round-half-up.
"""

import math
from pathlib import Path

import numpy as np
from PIL import Image as _PILImage

#: ITU-R BT.601 luma weights applied to RGB inputs on load.
LUMA_WEIGHTS = (0.299, 0.587, 0.114)


def as_image(arr):
    """Validate and return a 2-D float64 image array.

    Raises ValueError on wrong rank, empty arrays, or non-finite samples.
    Values outside [0, 1] are permitted in memory (noise and intermediate
    stages overshoot); quantization clamps on save.
    """
    img = np.asarray(arr, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"expected a 2-D grayscale image, got shape {img.shape}")
    if img.size == 0:
        raise ValueError("empty image")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite samples")
    return img


def quantize(img):
    """Clamp to [0, 1] and quantize to uint8 with round-half-up."""
    img = as_image(img)
    return np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def _read_pgm(path):
    raw = Path(path).read_bytes()
    # Header is ASCII tokens (magic, width, height, maxval); '#' comments
    # run to end of line and may appear between any tokens.
    tokens = []
    pos = 0
    while len(tokens) < 4:
        if pos >= len(raw):
            raise ValueError(f"{path}: truncated PGM header")
        c = raw[pos:pos + 1]
        if c == b"#":
            nl = raw.find(b"\n", pos)
            pos = len(raw) if nl < 0 else nl + 1
        elif c.isspace():
            pos += 1
        else:
            end = pos
            while end < len(raw) and not raw[end:end + 1].isspace() and raw[end:end + 1] != b"#":
                end += 1
            tokens.append(raw[pos:end])
            pos = end
    magic = tokens[0]
    if magic not in (b"P2", b"P5"):
        raise ValueError(f"{path}: not a PGM file (magic {magic!r})")
    try:
        width, height, maxval = (int(t) for t in tokens[1:4])
    except ValueError:
        raise ValueError(f"{path}: malformed PGM header") from None
    if width <= 0 or height <= 0:
        raise ValueError(f"{path}: bad PGM dimensions {width}x{height}")
    if maxval != 255:
        raise ValueError(f"{path}: unsupported PGM maxval {maxval}, need 8-bit (255)")
    if magic == b"P5":
        pos += 1  # single whitespace byte separates maxval from the raster
        if len(raw) - pos < width * height:
            raise ValueError(f"{path}: truncated PGM raster")
        data = np.frombuffer(raw, dtype=np.uint8, count=width * height, offset=pos)
    else:
        vals = raw[pos:].split()
        if len(vals) < width * height:
            raise ValueError(f"{path}: truncated PGM raster")
        data = np.array([int(v) for v in vals[: width * height]], dtype=np.int64)
        if data.min() < 0 or data.max() > 255:
            raise ValueError(f"{path}: PGM sample out of range")
    return data.reshape(height, width).astype(np.float64) / 255.0


def _write_pgm(path, img):
    q = quantize(img)
    h, w = q.shape
    header = f"P5\n{w} {h}\n255\n".encode("ascii")
    Path(path).write_bytes(header + q.tobytes())


def load_image(path):
    """Load a grayscale image from PGM (P2/P5) or 8-bit PNG.

    RGB(A) PNG inputs are converted to luma with BT.601 weights before
    scaling by 1/255 so e.g. pure red maps to exactly 0.299. Bit depths
    other than 8 are rejected.
    """
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        return _read_pgm(path)
    with _PILImage.open(path) as im:
        if im.mode == "L":
            return np.asarray(im, dtype=np.float64) / 255.0
        if im.mode in ("RGB", "RGBA"):
            rgb = np.asarray(im.convert("RGB"), dtype=np.float64)
            wr, wg, wb = LUMA_WEIGHTS
            return (wr * rgb[..., 0] + wg * rgb[..., 1] + wb * rgb[..., 2]) / 255.0
        if im.mode == "P":
            rgb = np.asarray(im.convert("RGB"), dtype=np.float64)
            wr, wg, wb = LUMA_WEIGHTS
            return (wr * rgb[..., 0] + wg * rgb[..., 1] + wb * rgb[..., 2]) / 255.0
        raise ValueError(f"{path}: unsupported image mode {im.mode!r} (need 8-bit gray or RGB)")


def save_image(path, img):
    """Write an image as PGM (P5) or 8-bit grayscale PNG, by extension."""
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        _write_pgm(path, img)
        return
    _PILImage.fromarray(quantize(img), mode="L").save(path)


def psnr(a, b, crop_border=0):
    """Peak signal-to-noise ratio in dB against peak value 1.0.

    Parameters
    ----------
    a, b : ndarray
        Images of identical shape.
    crop_border : int
        Pixels stripped from every side of both images before the MSE
        (evaluation typically drops a border equal to the scale factor).

    Returns
    -------
    float
        10*log10(1/MSE); math.inf when the cropped images are identical.
    """
    a = as_image(a)
    b = as_image(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    c = int(crop_border)
    if c < 0:
        raise ValueError("crop_border must be non-negative")
    if c > 0:
        if 2 * c >= min(a.shape):
            raise ValueError(f"crop_border {c} leaves no pixels for {a.shape}")
        a = a[c:-c, c:-c]
        b = b[c:-c, c:-c]
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)
