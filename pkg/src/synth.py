"""
Synthetic face-like corpus with two tone subpopulations and an eyes-open/closed label.

Label 0 is alert (eyes open), label 1 is drowsy (eyes closed). Each image gets
its own generator spawned from the master seed, so generation order does not
affect pixel values.
"""
import os
from dataclasses import dataclass, asdict

import numpy as np
import structlog

from .config import (
    DEFAULT_N_PER_CELL,
    DEFAULT_TONE_A,
    DEFAULT_TONE_B,
    DEFAULT_TONE_JITTER,
    DEFAULT_SYNTH_SIDE,
    DEFAULT_NOISE_STD,
    DEFAULT_SEED,
    SUBPOPULATIONS,
    TONE_CLAMP,
    IMAGES_DIR,
    MANIFEST_FILE,
)
from .errors import ConfigError, DatasetError
from .ingest import SampleRecord, write_manifest

logger = structlog.get_logger(__name__)

FACE_CONTRAST = 0.1
OPEN_EYE_CONTRAST = 0.25
CLOSED_EYE_CONTRAST = -0.2


@dataclass
class SynthConfig:
    n_per_cell: int = DEFAULT_N_PER_CELL
    tone_a: float = DEFAULT_TONE_A
    tone_b: float = DEFAULT_TONE_B
    tone_jitter: float = DEFAULT_TONE_JITTER
    image_side: int = DEFAULT_SYNTH_SIDE
    noise_std: float = DEFAULT_NOISE_STD
    rng_seed: int = DEFAULT_SEED

    def validate(self):
        if self.n_per_cell < 1:
            raise ConfigError(f"synth.n_per_cell must be at least 1, got {self.n_per_cell}")
        lo, hi = TONE_CLAMP
        for name in ("tone_a", "tone_b"):
            tone = getattr(self, name)
            if not lo <= tone <= hi:
                raise ConfigError(f"synth.{name} must lie in [{lo}, {hi}], got {tone}")
        if self.tone_jitter < 0:
            raise ConfigError(f"synth.tone_jitter must be non-negative, got {self.tone_jitter}")
        if self.noise_std < 0:
            raise ConfigError(f"synth.noise_std must be non-negative, got {self.noise_std}")
        if self.image_side < 16:
            raise ConfigError(f"synth.image_side must be at least 16 pixels, got {self.image_side}")
        return self

    def to_dict(self):
        return asdict(self)

    @property
    def tones(self):
        return {SUBPOPULATIONS[0]: self.tone_a, SUBPOPULATIONS[1]: self.tone_b}


def _geometry(side):
    center = (side - 1) / 2.0
    return {
        "center": center,
        "face_ry": 0.40 * side,
        "face_rx": 0.30 * side,
        "eye_y": center - 0.10 * side,
        "eye_dx": 0.15 * side,
        "eye_rx": 0.08 * side,
        "eye_ry": 1.5,
    }


def face_mask(side):
    """
    Boolean mask of the oval face region.

    Args:
        side (int): Image side length

    Returns:
        np.ndarray: (side, side) bool array
    """
    g = _geometry(side)
    ys, xs = np.mgrid[0:side, 0:side].astype(np.float64)
    return ((ys - g["center"]) / g["face_ry"]) ** 2 + ((xs - g["center"]) / g["face_rx"]) ** 2 <= 1.0


def eye_masks(side, open_eyes):
    """
    Boolean mask of both eye regions: 3-px-tall ellipses when open, 1-px lines when closed.

    Args:
        side (int): Image side length
        open_eyes (bool): Eye state

    Returns:
        np.ndarray: (side, side) bool array
    """
    g = _geometry(side)
    ys, xs = np.mgrid[0:side, 0:side].astype(np.float64)
    eye_row = round(g["eye_y"])
    mask = np.zeros((side, side), dtype=bool)
    for sign in (-1.0, 1.0):
        ex = g["center"] + sign * g["eye_dx"]
        if open_eyes:
            mask |= ((ys - eye_row) / g["eye_ry"]) ** 2 + ((xs - ex) / g["eye_rx"]) ** 2 <= 1.0
        else:
            mask |= (ys == eye_row) & (np.abs(xs - ex) <= g["eye_rx"])
    return mask


def render_face(side, tone, open_eyes, noise_std=0.0, rng=None):
    """
    Draws one synthetic face.

    Args:
        side (int): Image side length
        tone (float): Base intensity
        open_eyes (bool): Eye state
        noise_std (float): Standard deviation of additive Gaussian noise
        rng (np.random.Generator, optional): Noise generator, required when noise_std > 0

    Returns:
        np.ndarray: (side, side, 1) array in [0, 1]
    """
    image = np.full((side, side), tone, dtype=np.float64)
    image[face_mask(side)] += FACE_CONTRAST
    image[eye_masks(side, open_eyes)] += OPEN_EYE_CONTRAST if open_eyes else CLOSED_EYE_CONTRAST
    if noise_std > 0:
        image += rng.normal(0.0, noise_std, size=image.shape)
    return np.clip(image, 0.0, 1.0)[:, :, None]


def generate(config):
    """
    Generates the balanced two-subpopulation corpus.

    Args:
        config (SynthConfig): Generation parameters

    Returns:
        tuple: (list of (side, side, 1) images, list of SampleRecord with the subpopulation in split)
    """
    config.validate()
    total = len(SUBPOPULATIONS) * 2 * config.n_per_cell
    streams = np.random.SeedSequence(config.rng_seed).spawn(total)
    lo, hi = TONE_CLAMP
    images = []
    records = []
    k = 0
    for subpop, base_tone in config.tones.items():
        for label in (0, 1):
            for i in range(config.n_per_cell):
                rng = np.random.default_rng(streams[k])
                k += 1
                tone = base_tone + (rng.normal(0.0, config.tone_jitter) if config.tone_jitter > 0 else 0.0)
                tone = float(np.clip(tone, lo, hi))
                images.append(render_face(config.image_side, tone, label == 0, config.noise_std, rng))
                records.append(SampleRecord(
                    image_path=f"{IMAGES_DIR}/{subpop}_{label}_{i:04d}.png",
                    label=label,
                    split=subpop,
                ))
    logger.info("synth_generated", images=len(images), side=config.image_side, seed=config.rng_seed)
    return images, records


def split_biased(records, train_subpop, test_fraction, seed=DEFAULT_SEED):
    """
    Splits records so training sees only one subpopulation.

    A test_fraction share of train_subpop (stratified by label) is held out;
    every other subpopulation goes to the test set.

    Args:
        records (list): SampleRecord entries with the subpopulation in split
        train_subpop (str): Subpopulation used for training
        test_fraction (float): Held-out share of train_subpop, in [0, 1)
        seed (int): Seed for the held-out draw

    Returns:
        tuple: (train records, test records), each in original order
    """
    if not 0.0 <= test_fraction < 1.0:
        raise ConfigError(f"split.test_fraction must lie in [0, 1), got {test_fraction}")
    tags = {r.split for r in records}
    if train_subpop not in tags:
        raise DatasetError(f"subpopulation {train_subpop!r} not present (found {sorted(map(str, tags))})")
    if len(tags) < 2:
        raise DatasetError(f"biased split needs at least two subpopulations, found only {train_subpop!r}")

    rng = np.random.default_rng(seed)
    held_out = set()
    for label in (0, 1):
        members = [i for i, r in enumerate(records) if r.split == train_subpop and r.label == label]
        n_test = int(round(test_fraction * len(members)))
        if n_test:
            held_out.update(int(i) for i in rng.permutation(members)[:n_test])

    train, test = [], []
    for i, r in enumerate(records):
        if r.split == train_subpop and i not in held_out:
            train.append(r)
        else:
            test.append(r)
    logger.info("biased_split", train_subpop=train_subpop, train=len(train), test=len(test))
    return train, test


def write_dataset(images, records, out_dir):
    """
    Writes images as PNG files and a manifest listing them.

    Args:
        images (list): Images from generate
        records (list): Records from generate (paths relative to out_dir)
        out_dir (str): Destination directory

    Returns:
        str: Path of the written manifest
    """
    from .render import write_png

    os.makedirs(os.path.join(out_dir, IMAGES_DIR), exist_ok=True)
    for image, record in zip(images, records):
        write_png(image, os.path.join(out_dir, record.image_path))
    manifest_path = os.path.join(out_dir, MANIFEST_FILE)
    write_manifest(records, manifest_path, base_dir=out_dir)
    return manifest_path
