"""Burst synthesis under the observation model lr = R F H hr + noise.

Each frame blurs the ground truth, applies its circular (sub-pixel when
fractional) shift, keeps the phase-(0, 0) decimation lattice, and adds
white Gaussian noise. Frame 0 is always the unshifted reference. Shift
draws and per-frame noise use independent child streams spawned from the
config seed, so synthesis is bit-reproducible and frames could be built
in any order.
"""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .image import as_image, load_image, save_image
from .operators import decimate, gaussian_blur, gaussian_kernel, shift_subpixel

#: shift models: integer draws on the HR grid, or continuous uniform reals
SHIFT_INTEGER_HR = "integer-hr-grid"
SHIFT_CONTINUOUS = "continuous"
SHIFT_MODELS = (SHIFT_INTEGER_HR, SHIFT_CONTINUOUS)


@dataclass(frozen=True)
class DegradationConfig:
    """Burst synthesis parameters.

    shift_range is the maximum |shift| per axis in HR pixels; None means
    the default 2*scale. blur_sigma 0 disables the blur stage. noise_sigma
    is the noise standard deviation on the [0, 1] intensity range.
    """

    scale: int
    frames: int
    blur_sigma: float = 1.0
    noise_sigma: float = 0.0
    shift_model: str = SHIFT_CONTINUOUS
    shift_range: float | None = None
    seed: int = 0

    def validate(self):
        if self.scale < 1:
            raise ValueError(f"scale must be >= 1, got {self.scale}")
        if self.frames < 1:
            raise ValueError(f"frames must be >= 1, got {self.frames}")
        if self.blur_sigma < 0:
            raise ValueError(f"blur_sigma must be >= 0, got {self.blur_sigma}")
        if self.noise_sigma < 0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if self.shift_model not in SHIFT_MODELS:
            raise ValueError(f"shift_model must be one of {SHIFT_MODELS}, got {self.shift_model!r}")
        if self.shift_range is not None and self.shift_range < 0:
            raise ValueError(f"shift_range must be >= 0, got {self.shift_range}")

    @property
    def effective_shift_range(self):
        return 2.0 * self.scale if self.shift_range is None else float(self.shift_range)


@dataclass
class LRFrame:
    """One burst frame: pixels plus its true (and later estimated) shift.

    Shifts are (dx, dy) in HR pixels; estimated_shift stays None until
    registration fills it.
    """

    image: np.ndarray
    true_shift: tuple[float, float]
    index: int
    estimated_shift: tuple[float, float] | None = field(default=None)


def degrade_one(hr, shift, config, rng):
    """Produce one LR observation of hr under the given shift (dx, dy)."""
    hr = as_image(hr)
    config.validate()
    if hr.shape[0] % config.scale or hr.shape[1] % config.scale:
        raise ValueError(f"HR dims {hr.shape} not divisible by scale {config.scale}")
    dx, dy = (float(s) for s in shift)
    if config.shift_model == SHIFT_INTEGER_HR and (dx != int(dx) or dy != int(dy)):
        raise ValueError(f"integer-hr-grid model got fractional shift ({dx}, {dy})")
    work = hr
    if config.blur_sigma > 0:
        work = gaussian_blur(work, gaussian_kernel(config.blur_sigma))
    work = shift_subpixel(work, dx, dy)
    lr = decimate(work, config.scale, (0, 0))
    if config.noise_sigma > 0:
        lr = lr + rng.normal(0.0, config.noise_sigma, lr.shape)
    return lr


def draw_shifts(config):
    """Draw the burst's true shifts; frame 0 is always (0, 0)."""
    config.validate()
    root = np.random.SeedSequence(config.seed)
    shift_stream = np.random.default_rng(root.spawn(1)[0])
    bound = config.effective_shift_range
    shifts = [(0.0, 0.0)]
    for _ in range(1, config.frames):
        if config.shift_model == SHIFT_INTEGER_HR:
            b = int(round(bound))
            dx, dy = (float(v) for v in shift_stream.integers(-b, b + 1, size=2))
        else:
            dx, dy = (float(v) for v in shift_stream.uniform(-bound, bound, size=2))
        shifts.append((dx, dy))
    return shifts


def generate_burst(hr, config):
    """Synthesize a burst of LR frames from one HR image.

    The seed fans out through SeedSequence children: one stream for the
    shift draws, one per frame for noise, so identical configs give
    bit-identical bursts.
    """
    hr = as_image(hr)
    config.validate()
    shifts = draw_shifts(config)
    noise_seeds = np.random.SeedSequence(config.seed).spawn(config.frames + 1)[1:]
    frames = []
    for k, shift in enumerate(shifts):
        rng = np.random.default_rng(noise_seeds[k])
        frames.append(LRFrame(image=degrade_one(hr, shift, config, rng), true_shift=shift, index=k))
    return frames


def noise_variance_estimate(frames, clean_frames):
    """Mean squared deviation from clean frames (test/diagnostic helper)."""
    num = sum(float(np.sum((f.image - c.image) ** 2)) for f, c in zip(frames, clean_frames))
    den = sum(f.image.size for f in frames)
    return num / den


# ---------------------------------------------------------------------------
# Burst directory interchange: numbered images plus a shift manifest with
# one "k dx dy" line per frame (registration appends "edx edy").

MANIFEST_NAME = "manifest.txt"


def save_burst(frames, directory, fmt="png"):
    if fmt not in ("png", "pgm"):
        raise ValueError(f"burst format must be png or pgm, got {fmt!r}")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = []
    for frame in frames:
        name = f"frame_{frame.index:03d}.{fmt}"
        save_image(directory / name, np.clip(frame.image, 0.0, 1.0))
        dx, dy = frame.true_shift
        line = f"{frame.index} {dx!r} {dy!r}"
        if frame.estimated_shift is not None:
            edx, edy = frame.estimated_shift
            line += f" {edx!r} {edy!r}"
        lines.append(line)
    (directory / MANIFEST_NAME).write_text("\n".join(lines) + "\n")
    return directory


def load_burst(directory):
    directory = Path(directory)
    manifest = directory / MANIFEST_NAME
    if not manifest.is_file():
        raise FileNotFoundError(f"no {MANIFEST_NAME} in {directory}")
    frames = []
    for raw in manifest.read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) not in (3, 5):
            raise ValueError(f"manifest line needs 'k dx dy [edx edy]', got {raw!r}")
        k = int(parts[0])
        matches = sorted(directory.glob(f"frame_{k:03d}.*"))
        if not matches:
            raise FileNotFoundError(f"missing image for frame {k} in {directory}")
        frame = LRFrame(
            image=load_image(matches[0]),
            true_shift=(float(parts[1]), float(parts[2])),
            index=k,
        )
        if len(parts) == 5:
            frame.estimated_shift = (float(parts[3]), float(parts[4]))
        frames.append(frame)
    if not frames:
        raise ValueError(f"empty manifest in {directory}")
    frames.sort(key=lambda f: f.index)
    return frames


def write_manifest(frames, directory):
    """Rewrite only the manifest (after registration updates shifts)."""
    directory = Path(directory)
    lines = []
    for frame in frames:
        dx, dy = frame.true_shift
        line = f"{frame.index} {dx!r} {dy!r}"
        if frame.estimated_shift is not None:
            edx, edy = frame.estimated_shift
            line += f" {edx!r} {edy!r}"
        lines.append(line)
    (directory / MANIFEST_NAME).write_text("\n".join(lines) + "\n")


def center_crop_to_multiple(img, r):
    """Center-crop so both extents divide r (harness preprocessing)."""
    img = as_image(img)
    h, w = img.shape
    nh, nw = (h // r) * r, (w // r) * r
    if nh == 0 or nw == 0:
        raise ValueError(f"image {img.shape} too small for scale {r}")
    oy, ox = (h - nh) // 2, (w - nw) // 2
    return img[oy:oy + nh, ox:ox + nw].copy()
