"""Benchmark driver: seeded PSNR-vs-frames sweeps emitted as CSV.

One experiment is a grid over (image, scale, noise sigma, frame count,
pipeline, registration mode) with a fixed number of trials per cell.
Every trial's burst is derived deterministically from the master seed
and the cell coordinates EXCLUDING pipeline and registration mode, so
all pipelines and modes score the same bursts (paired comparison) and
adding a pipeline to a config never perturbs the other cells.

The output table carries one row per trial plus aggregate rows whose
trial column reads "mean" (always) and "std" (when trials >= 2), in a
canonical sort order so repeated runs emit byte-identical CSV. Wall
times are recorded only when `record_timing` is on; the column is
always present and reads 0.000 otherwise, keeping the default output
deterministic.
"""

import configparser
import csv
import dataclasses
import hashlib
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import image as im
from . import pipelines as pl
from . import testimages
from .degradation import (
    SHIFT_MODELS,
    DegradationConfig,
    center_crop_to_multiple,
    generate_burst,
)
from .dictionary import build_dictionary_pair, load_dictionary
from .ista import SolverParams

#: header of every emitted CSV, fixed order
CSV_COLUMNS = (
    "dataset", "image", "scale", "N", "sigma", "pipeline",
    "registration", "trial", "psnr_db", "wall_ms",
)

DESK_DATASET = "desk"

_MASK64 = (1 << 64) - 1


def splitmix64(x):
    """One SplitMix64 scrambling round of a 64-bit value."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (x ^ (x >> 31)) & _MASK64


def trial_seed(master_seed, image_name, scale, frames, sigma, trial):
    """Burst seed for one cell coordinate.

    The coordinate string is hashed (blake2b, 8 bytes), xor-mixed with
    the master seed, and scrambled once with splitmix64. Pipeline and
    registration mode are deliberately not part of the coordinate.
    """
    key = f"{image_name}|{int(scale)}|{int(frames)}|{float(sigma):.6g}|{int(trial)}"
    digest = hashlib.blake2b(key.encode(), digest_size=8).digest()
    return splitmix64((int(master_seed) ^ int.from_bytes(digest, "little")) & _MASK64)


@dataclasses.dataclass
class ResultRow:
    """One CSV line: a single trial or an aggregate (trial mean/std)."""

    dataset: str
    image: str
    scale: int
    n: int
    sigma: float
    pipeline: str
    registration: str
    trial: str
    psnr_db: float
    wall_ms: float


@dataclasses.dataclass
class ResultTable:
    rows: list

    def select(self, **eq):
        """Rows whose fields equal every given keyword value."""
        out = self.rows
        for field, want in eq.items():
            out = [r for r in out if getattr(r, field) == want]
        return out

    def mean_over_images(self, **eq):
        """Average of per-image mean rows matching the filter."""
        rows = [r for r in self.select(trial="mean", **eq)]
        if not rows:
            raise ValueError(f"no aggregate rows match {eq}")
        return float(np.mean([r.psnr_db for r in rows]))


@dataclasses.dataclass
class ExperimentConfig:
    """Full description of one benchmark run.

    pipelines entries may be kind strings (specs are built from the
    shared solver/fusion settings below) or ready PipelineSpec objects.
    dict_paths maps a scale to a dictionary file and overrides on-the-
    fly construction for that scale.
    """

    dataset: str = DESK_DATASET
    scales: list = dataclasses.field(default_factory=lambda: [2])
    n_values: list = dataclasses.field(default_factory=lambda: [2, 4, 8])
    noise_sigmas: list = dataclasses.field(default_factory=lambda: [0.005])
    pipelines: list = dataclasses.field(
        default_factory=lambda: [pl.MFSR_SHIFT_ADD, pl.MFSL_SHIFT_ADD, pl.SISR_ONLY]
    )
    registration_modes: list = dataclasses.field(default_factory=lambda: ["ideal"])
    trials: int = 20
    seed: int = 0
    crop_border: int = 4
    blur_sigma: float = 1.0
    shift_model: str = "continuous"
    shift_range: float | None = None
    record_timing: bool = False
    solver: SolverParams = dataclasses.field(default_factory=SolverParams)
    stride: int | None = None
    split: tuple | None = None
    fusion_mode: str = pl.SHIFT_ADD
    hole_fill: str = "bicubic"
    window_radius: float | None = None
    weight_sigma: float | None = None
    neighbors: int | None = None
    fit_degree: int | None = None
    dict_num_atoms: int = 256
    dict_patch_size: int = 8
    dict_seed: int = 0
    dict_paths: dict = dataclasses.field(default_factory=dict)

    def validate(self):
        for name in ("scales", "n_values", "noise_sigmas", "pipelines", "registration_modes"):
            if not getattr(self, name):
                raise ValueError(f"{name} must be non-empty")
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if self.crop_border < 0:
            raise ValueError(f"crop_border must be >= 0, got {self.crop_border}")
        if self.shift_model not in SHIFT_MODELS:
            raise ValueError(f"shift_model must be one of {SHIFT_MODELS}")
        for mode in self.registration_modes:
            if mode not in ("ideal", "estimated"):
                raise ValueError(f"unknown registration mode {mode!r}")
        self.solver.validate()

    def pipeline_specs(self, scale):
        """Materialize the pipeline list for one total scale."""
        specs = []
        for entry in self.pipelines:
            if isinstance(entry, pl.PipelineSpec):
                specs.append(entry)
                continue
            split = self.split if entry in (pl.S2M2, pl.M2S2) else None
            specs.append(
                pl.PipelineSpec(
                    kind=entry,
                    scale=scale,
                    split=split,
                    solver=self.solver,
                    stride=self.stride,
                    fusion_mode=self.fusion_mode,
                    hole_fill=self.hole_fill,
                    window_radius=self.window_radius,
                    weight_sigma=self.weight_sigma,
                    neighbors=self.neighbors,
                    fit_degree=self.fit_degree,
                )
            )
        for spec in specs:
            spec.validate()
        return specs


def load_dataset(dataset):
    """(name, image) pairs for a dataset directory or the built-in set."""
    if dataset == DESK_DATASET:
        return testimages.desk_set()
    root = Path(dataset)
    if not root.is_dir():
        raise ValueError(f"dataset directory not found: {dataset}")
    paths = sorted(
        p for p in root.iterdir() if p.suffix.lower() in (".png", ".pgm")
    )
    if not paths:
        raise ValueError(f"no .png or .pgm images in {dataset}")
    return [(p.stem, im.load_image(str(p))) for p in paths]


def _stage_scales(spec):
    """Scales whose dictionaries the pipeline kind needs."""
    if spec.kind in (pl.SISR_ONLY, pl.SFML):
        return {int(spec.scale)}
    if spec.kind in (pl.MFSL_SHIFT_ADD, pl.MFSL_CURVE_FIT):
        return set() if spec.enhance_passthrough else {1}
    if spec.kind == pl.S2M2:
        return {int(spec.split[0])}
    if spec.kind == pl.M2S2:
        return {int(spec.split[1])}
    return set()


def build_dictionaries(cfg, images):
    """One DictionaryPair per scale any configured pipeline needs."""
    needed = set()
    for scale in cfg.scales:
        for spec in cfg.pipeline_specs(int(scale)):
            needed |= _stage_scales(spec)
    dicts = {}
    for stage_scale in sorted(needed):
        if stage_scale in cfg.dict_paths:
            dicts[stage_scale] = load_dictionary(cfg.dict_paths[stage_scale])
            if dicts[stage_scale].scale != stage_scale:
                raise ValueError(
                    f"dictionary {cfg.dict_paths[stage_scale]} has scale "
                    f"{dicts[stage_scale].scale}, expected {stage_scale}"
                )
            continue
        training = [center_crop_to_multiple(img, stage_scale) for _, img in images]
        dicts[stage_scale] = build_dictionary_pair(
            training,
            cfg.dict_num_atoms,
            patch_size=cfg.dict_patch_size,
            scale=stage_scale,
            blur_sigma=cfg.blur_sigma,
            seed=cfg.dict_seed,
        )
    return dicts


def _trial_sort_key(trial):
    # numeric trials first in numeric order, then mean, then std
    if trial == "mean":
        return (1, 0)
    if trial == "std":
        return (2, 0)
    return (0, int(trial))


def _row_key(row):
    return (
        row.dataset, row.image, row.scale, row.n, row.sigma,
        row.pipeline, row.registration, _trial_sort_key(row.trial),
    )


def _run_cell(cfg, dicts, dataset_label, name, hr, scale, sigma, frames, spec, mode):
    rows = []
    run_spec = dataclasses.replace(spec, registration_mode=mode)
    psnrs = []
    for trial in range(cfg.trials):
        burst_cfg = DegradationConfig(
            scale=scale,
            frames=frames,
            blur_sigma=cfg.blur_sigma,
            noise_sigma=sigma,
            shift_model=cfg.shift_model,
            shift_range=cfg.shift_range,
            seed=trial_seed(cfg.seed, name, scale, frames, sigma, trial),
        )
        burst = generate_burst(hr, burst_cfg)
        t0 = time.perf_counter()
        out = pl.run_pipeline(burst, run_spec, dicts)
        wall_ms = (time.perf_counter() - t0) * 1e3 if cfg.record_timing else 0.0
        score = im.psnr(out, hr, crop_border=cfg.crop_border)
        psnrs.append(score)
        rows.append(
            ResultRow(
                dataset_label, name, scale, frames, sigma, run_spec.kind,
                mode, str(trial), score, wall_ms,
            )
        )
    walls = [r.wall_ms for r in rows]
    rows.append(
        ResultRow(
            dataset_label, name, scale, frames, sigma, run_spec.kind, mode,
            "mean", float(np.mean(psnrs)), float(np.mean(walls)),
        )
    )
    if cfg.trials >= 2:
        rows.append(
            ResultRow(
                dataset_label, name, scale, frames, sigma, run_spec.kind, mode,
                "std", float(np.std(psnrs, ddof=1)), float(np.std(walls, ddof=1)),
            )
        )
    return rows


def run_experiment(cfg, jobs=1):
    """Run the full grid and return the sorted ResultTable."""
    cfg.validate()
    if jobs < 1:
        raise ValueError(f"jobs must be >= 1, got {jobs}")
    images = load_dataset(cfg.dataset)
    dicts = build_dictionaries(cfg, images)
    cells = []
    for scale in (int(s) for s in cfg.scales):
        specs = cfg.pipeline_specs(scale)
        for name, raw in images:
            hr = center_crop_to_multiple(raw, scale)
            for sigma in (float(s) for s in cfg.noise_sigmas):
                for frames in (int(n) for n in cfg.n_values):
                    for spec in specs:
                        for mode in cfg.registration_modes:
                            cells.append(
                                (cfg, dicts, cfg.dataset, name, hr, scale,
                                 sigma, frames, spec, mode)
                            )
    if jobs == 1:
        chunks = [_run_cell(*cell) for cell in cells]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(lambda c: _run_cell(*c), cells))
    rows = [row for chunk in chunks for row in chunk]
    rows.sort(key=_row_key)
    return ResultTable(rows)


def _format_metric(value, decimals):
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return f"{value:.{decimals}f}"


def emit_csv(table, path):
    """Write the table as RFC-4180 CSV with the fixed column order."""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\r\n")
        writer.writerow(CSV_COLUMNS)
        for row in table.rows:
            writer.writerow(
                [
                    row.dataset, row.image, str(row.scale), str(row.n),
                    f"{row.sigma:.6g}", row.pipeline, row.registration,
                    row.trial, _format_metric(row.psnr_db, 4),
                    _format_metric(row.wall_ms, 3),
                ]
            )


def parse_csv(path):
    """Read back a table emitted by emit_csv."""
    with open(path, "r", newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = tuple(next(reader, ()))
        if header != CSV_COLUMNS:
            raise ValueError(f"unexpected CSV header {header}")
        rows = []
        for record in reader:
            if len(record) != len(CSV_COLUMNS):
                raise ValueError(f"malformed CSV record {record}")
            rows.append(
                ResultRow(
                    dataset=record[0], image=record[1], scale=int(record[2]),
                    n=int(record[3]), sigma=float(record[4]), pipeline=record[5],
                    registration=record[6], trial=record[7],
                    psnr_db=float(record[8]), wall_ms=float(record[9]),
                )
            )
    return ResultTable(rows)


def compare_registration_modes(cfg, jobs=1):
    """Mean rows for both registration modes plus their differences.

    Returns a table holding, per cell, the ideal mean row, the estimated
    mean row, and a registration="diff" row whose metrics are
    ideal minus estimated.
    """
    if not {"ideal", "estimated"} <= set(cfg.registration_modes):
        raise ValueError("config must list both 'ideal' and 'estimated' registration modes")
    table = run_experiment(cfg, jobs=jobs)
    means = [r for r in table.rows if r.trial == "mean"]
    by_key = {}
    for row in means:
        key = (row.dataset, row.image, row.scale, row.n, row.sigma, row.pipeline)
        by_key.setdefault(key, {})[row.registration] = row
    rows = []
    for key, pair in sorted(by_key.items()):
        if "ideal" not in pair or "estimated" not in pair:
            continue
        ideal, est = pair["ideal"], pair["estimated"]
        rows.extend([ideal, est])
        rows.append(
            ResultRow(
                ideal.dataset, ideal.image, ideal.scale, ideal.n, ideal.sigma,
                ideal.pipeline, "diff", "mean",
                ideal.psnr_db - est.psnr_db, ideal.wall_ms - est.wall_ms,
            )
        )
    rows.sort(key=_row_key)
    return ResultTable(rows)


def trend_violations(table, tolerance=0.1):
    """Cells where mean PSNR drops by more than `tolerance` as N grows.

    Soft diagnostic, never asserted: returns (image, scale, sigma,
    pipeline, registration, n_prev, n_next, drop) tuples.
    """
    means = [r for r in table.rows if r.trial == "mean"]
    series = {}
    for row in means:
        key = (row.dataset, row.image, row.scale, row.sigma, row.pipeline, row.registration)
        series.setdefault(key, []).append((row.n, row.psnr_db))
    out = []
    for key, points in sorted(series.items()):
        points.sort()
        for (n_prev, p_prev), (n_next, p_next) in zip(points, points[1:]):
            if p_next < p_prev - tolerance:
                out.append(key[1:] + (n_prev, n_next, p_prev - p_next))
    return out


def _get(parser, section, key, cast, default):
    if not parser.has_option(section, key):
        return default
    raw = parser.get(section, key).strip()
    if raw == "":
        return default
    return cast(raw)


def _int_list(raw):
    return [int(v) for v in raw.split(",") if v.strip()]


def _float_list(raw):
    return [float(v) for v in raw.split(",") if v.strip()]


def _str_list(raw):
    return [v.strip() for v in raw.split(",") if v.strip()]


def _split_pair(raw):
    a, _, b = raw.lower().partition("x")
    return (int(a), int(b))


def _dict_paths(raw):
    out = {}
    for item in _str_list(raw):
        scale, _, path = item.partition(":")
        out[int(scale)] = path
    return out


def load_experiment_config(path):
    """Parse the key=value config format into an ExperimentConfig.

    Sections and keys (all optional, with the dataclass defaults):

    [experiment] dataset, scales, n_values, noise_sigmas, pipelines,
      registration_modes, trials, seed, crop_border, blur_sigma,
      shift_model, shift_range, record_timing
    [solver] lam, max_iterations, tolerance, stride
    [fusion] fusion_mode, hole_fill, window_radius, weight_sigma,
      neighbors, fit_degree, split
    [dictionary] num_atoms, patch_size, seed, paths (scale:file, comma
      separated)

    The COMSR_SEED environment variable, when set, overrides the
    configured master seed.
    """
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ValueError(f"cannot read config file: {path}")
    cfg = ExperimentConfig()
    exp = "experiment"
    if parser.has_section(exp):
        cfg.dataset = _get(parser, exp, "dataset", str, cfg.dataset)
        cfg.scales = _get(parser, exp, "scales", _int_list, cfg.scales)
        cfg.n_values = _get(parser, exp, "n_values", _int_list, cfg.n_values)
        cfg.noise_sigmas = _get(parser, exp, "noise_sigmas", _float_list, cfg.noise_sigmas)
        cfg.pipelines = _get(parser, exp, "pipelines", _str_list, cfg.pipelines)
        cfg.registration_modes = _get(
            parser, exp, "registration_modes", _str_list, cfg.registration_modes
        )
        cfg.trials = _get(parser, exp, "trials", int, cfg.trials)
        cfg.seed = _get(parser, exp, "seed", int, cfg.seed)
        cfg.crop_border = _get(parser, exp, "crop_border", int, cfg.crop_border)
        cfg.blur_sigma = _get(parser, exp, "blur_sigma", float, cfg.blur_sigma)
        cfg.shift_model = _get(parser, exp, "shift_model", str, cfg.shift_model)
        cfg.shift_range = _get(parser, exp, "shift_range", float, cfg.shift_range)
        cfg.record_timing = _get(
            parser, exp, "record_timing", lambda v: v.lower() in ("1", "true", "yes", "on"),
            cfg.record_timing,
        )
    sol = "solver"
    if parser.has_section(sol):
        cfg.solver = SolverParams(
            lam=_get(parser, sol, "lam", float, cfg.solver.lam),
            max_iterations=_get(parser, sol, "max_iterations", int, cfg.solver.max_iterations),
            tolerance=_get(parser, sol, "tolerance", float, cfg.solver.tolerance),
        )
        cfg.stride = _get(parser, sol, "stride", int, cfg.stride)
    fus = "fusion"
    if parser.has_section(fus):
        cfg.fusion_mode = _get(parser, fus, "fusion_mode", str, cfg.fusion_mode)
        cfg.hole_fill = _get(parser, fus, "hole_fill", str, cfg.hole_fill)
        cfg.window_radius = _get(parser, fus, "window_radius", float, cfg.window_radius)
        cfg.weight_sigma = _get(parser, fus, "weight_sigma", float, cfg.weight_sigma)
        cfg.neighbors = _get(parser, fus, "neighbors", int, cfg.neighbors)
        cfg.fit_degree = _get(parser, fus, "fit_degree", int, cfg.fit_degree)
        cfg.split = _get(parser, fus, "split", _split_pair, cfg.split)
    dct = "dictionary"
    if parser.has_section(dct):
        cfg.dict_num_atoms = _get(parser, dct, "num_atoms", int, cfg.dict_num_atoms)
        cfg.dict_patch_size = _get(parser, dct, "patch_size", int, cfg.dict_patch_size)
        cfg.dict_seed = _get(parser, dct, "seed", int, cfg.dict_seed)
        cfg.dict_paths = _get(parser, dct, "paths", _dict_paths, cfg.dict_paths)
    env_seed = os.environ.get("COMSR_SEED")
    if env_seed is not None:
        cfg.seed = int(env_seed)
    return cfg
