import os

import numpy as np
import pytest

from src.errors import ConfigError, DatasetError
from src.ingest import load_manifest, read_image
from src.synth import SynthConfig, eye_masks, face_mask, generate, render_face, split_biased, write_dataset


def _small(**kwargs):
    return SynthConfig(n_per_cell=kwargs.pop("n_per_cell", 6), **kwargs)


def test_generate_is_balanced_and_labelled():
    images, records = generate(_small())
    assert len(images) == len(records) == 24
    assert all(img.shape == (32, 32, 1) for img in images)
    for subpop in ("A", "B"):
        for label in (0, 1):
            assert sum(r.split == subpop and r.label == label for r in records) == 6
    assert records[0].image_path == "images/A_0_0000.png"


def test_generate_is_deterministic_per_seed():
    first, _ = generate(_small(rng_seed=3))
    second, _ = generate(_small(rng_seed=3))
    other, _ = generate(_small(rng_seed=4))
    assert all(a.tobytes() == b.tobytes() for a, b in zip(first, second))
    assert any(a.tobytes() != b.tobytes() for a, b in zip(first, other))


def test_subpopulation_tones_differ():
    images, records = generate(_small(n_per_cell=10))
    background = [img[0, 0, 0] for img in images]
    tone_a = np.mean([b for b, r in zip(background, records) if r.split == "A"])
    tone_b = np.mean([b for b, r in zip(background, records) if r.split == "B"])
    assert tone_a > tone_b + 0.2


def test_subpopulation_mean_intensity_gap_matches_tones():
    config = SynthConfig(n_per_cell=100)
    images, records = generate(config)
    mean_a = np.mean([img.mean() for img, r in zip(images, records) if r.split == "A"])
    mean_b = np.mean([img.mean() for img, r in zip(images, records) if r.split == "B"])
    assert mean_a - mean_b == pytest.approx(config.tone_a - config.tone_b, abs=0.02)


def test_eye_state_is_visible_in_eye_region():
    open_face = render_face(32, 0.5, True)
    closed_face = render_face(32, 0.5, False)
    mask = eye_masks(32, True)
    assert open_face[mask].mean() > closed_face[mask].mean()
    assert not np.any(eye_masks(32, False) & ~face_mask(32))
    assert open_face.min() >= 0.0 and open_face.max() <= 1.0


def test_split_biased_trains_on_one_subpopulation():
    _, records = generate(_small(n_per_cell=8))
    train, test = split_biased(records, "A", 0.25, seed=1)
    assert all(r.split == "A" for r in train)
    assert len(train) == 12
    assert sum(r.split == "A" for r in test) == 4
    assert sum(r.split == "B" for r in test) == 16
    assert sum(r.label for r in train) == 6
    order = {r.image_path: i for i, r in enumerate(records)}
    assert [order[r.image_path] for r in train] == sorted(order[r.image_path] for r in train)


def test_split_biased_errors():
    _, records = generate(_small(n_per_cell=2))
    with pytest.raises(ConfigError):
        split_biased(records, "A", 1.0)
    with pytest.raises(DatasetError):
        split_biased(records, "C", 0.25)
    with pytest.raises(DatasetError):
        split_biased([r for r in records if r.split == "A"], "A", 0.25)


def test_config_validation():
    with pytest.raises(ConfigError):
        SynthConfig(n_per_cell=0).validate()
    with pytest.raises(ConfigError):
        SynthConfig(tone_a=1.5).validate()
    with pytest.raises(ConfigError):
        SynthConfig(image_side=8).validate()


def test_write_dataset_round_trips(tmp_path):
    images, records = generate(_small(n_per_cell=2, noise_std=0.0))
    manifest_path = write_dataset(images, records, str(tmp_path))
    assert manifest_path == os.path.join(str(tmp_path), "manifest.csv")
    loaded = load_manifest(manifest_path)
    assert loaded.labels.tolist() == [r.label for r in records]
    assert loaded.splits == [r.split for r in records]
    decoded = read_image(loaded.records[0].image_path)
    assert np.max(np.abs(decoded - images[0])) <= 0.5 / 255 + 1e-12
