#!/usr/bin/env python3
"""
Fairgrid walkthrough - the audit pipeline through the Python API
Generates a two-tone synthetic corpus, trains on one tone only and shows where
the grid of PCA-sorted faces lights up with errors.
"""

import os
import sys
from typing import Any, Dict

import numpy as np
import structlog

# Add src to path for imports
sys.path.append(os.path.join(os.path.dirname(__file__), 'src'))

from src.augment import AugmentConfig
from src.config import DEFAULT_SEED, SUBPOPULATIONS
from src.gridlayout import default_grid_shape, greedy_assign, overlay_values, region_report
from src.log import configure_logging
from src.nn import build_default_model
from src.pca import fit_project
from src.render import montage, write_png
from src.saliency import input_saliency
from src.synth import SynthConfig, generate, split_biased
from src.training import Dataset, TrainConfig, evaluate, predict, train

logger = structlog.get_logger(__name__)


def to_dataset(images, records) -> Dataset:
    """
    Stacks synthetic images and records into a Dataset
    """
    return Dataset(np.stack(images), [r.label for r in records], [r.split for r in records])


def bias_walkthrough(n_per_cell: int = 60, epochs: int = 10, seed: int = DEFAULT_SEED,
                     out_dir: str = "out", augment: bool = False) -> Dict[str, Any]:
    """
    Trains on subpopulation A and audits both subpopulations
    """
    images, records = generate(SynthConfig(n_per_cell=n_per_cell, rng_seed=seed))
    train_records, test_records = split_biased(records, SUBPOPULATIONS[0], 0.25, seed=seed)
    index = {r.image_path: i for i, r in enumerate(records)}
    train_set = to_dataset([images[index[r.image_path]] for r in train_records], train_records)
    test_set = to_dataset([images[index[r.image_path]] for r in test_records], test_records)

    model = build_default_model(train_set.images.shape[1:], seed=seed)
    model, history = train(model, train_set, TrainConfig(epochs=epochs, rng_seed=seed),
                           augment_config=AugmentConfig(rng_seed=seed + 1) if augment else None,
                           validation=test_set)

    held_out = {}
    for tag in SUBPOPULATIONS:
        subset = test_set.subset([t == tag for t in test_set.tags])
        held_out[tag] = evaluate(model, subset)["accuracy"]
    logger.info("held_out_accuracy", **held_out)

    everything = to_dataset(images, records)
    outputs = predict(model, everything.images)
    pca = fit_project(everything.images.reshape(len(everything), -1))
    rows, cols = default_grid_shape(len(everything))
    layout = overlay_values(greedy_assign(pca.coords, rows, cols), everything.labels, outputs)
    regions = region_report(layout)["regions"]

    os.makedirs(out_dir, exist_ok=True)
    write_png(montage(layout, list(everything.images)), os.path.join(out_dir, "walkthrough_montage.png"))
    saliency = input_saliency(model, test_set.images[0])
    logger.info("saliency_peak", row=int(saliency.argmax() // saliency.shape[1]), col=int(saliency.argmax() % saliency.shape[1]))

    return {
        "history": history,
        "held_out_accuracy": held_out,
        "half_errors": {half: regions[half]["mean"] for half in ("left", "right", "top", "bottom")},
    }


if __name__ == "__main__":
    configure_logging()
    result = bias_walkthrough()
    print(result["history"].tail())
    print("Held-out accuracy:", result["held_out_accuracy"])
    print("Mean error per grid half:", result["half_errors"])
