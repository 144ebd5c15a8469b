"""
Pipeline commands behind the CLI: synth, train, audit, saliency, report and experiment.

Each command takes a validated RunConfig, computes everything first and only
then writes its artifacts under config.out_dir.
"""
import os
from dataclasses import dataclass, field

import numpy as np
import orjson
import pandas as pd
import structlog

from .config import (
    COORDS_FILE,
    HISTORY_FILE,
    HISTORY_PLOT_FILE,
    LAYOUT_FILE,
    MANIFEST_FILE,
    MODEL_FILE,
    MONTAGE_FILE,
    PROJECTION_FILE,
    REPORT_FILE,
    REPORT_FORMAT_VERSION,
    SALIENCY_DIR,
    SUBPOPULATIONS,
    TEST_MANIFEST_FILE,
    TRAIN_MANIFEST_FILE,
    DECISION_THRESHOLD,
)
from .errors import DatasetError
from .gridlayout import assign, default_grid_shape, overlay_values, region_composition, region_report, write_layout
from .ingest import load_manifest, prepare_batch, read_image, read_images, stack_for_pca, write_manifest
from .model_io import load_model, save_model
from .nn import bce_loss, build_default_model
from .pca import fit_project, write_coords
from .render import history_plot, montage, projection_plot, saliency_overlay, write_png
from .saliency import input_saliency, saliency_focus
from .synth import eye_masks, generate, split_biased, write_dataset
from .training import Dataset, predict, train

logger = structlog.get_logger(__name__)

REPORT_OPTIONS = orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS | orjson.OPT_SERIALIZE_NUMPY
HALF_PAIRS = (("left", "right"), ("top", "bottom"))
SALIENCY_SAMPLES_PER_GROUP = 20


@dataclass
class AuditResult:
    records: list
    labels: np.ndarray
    outputs: np.ndarray
    tags: list
    images: list
    pca: object
    layout: object
    regions: dict
    composition: dict = field(default_factory=dict)


def _out(config, *parts):
    return os.path.join(config.out_dir, *parts)


def _default_path(explicit, config, name):
    path = explicit or _out(config, name)
    if not os.path.exists(path):
        raise FileNotFoundError(f"File not found: {path}")
    return path


def _input_channels(grayscale):
    return 1 if grayscale else 3


def load_dataset(manifest_path, side, grayscale, workers):
    """
    Loads a manifest and its images as a training/evaluation dataset.

    Args:
        manifest_path (str): Manifest file
        side (int): Side length images are resized to
        grayscale (bool): One luminance channel instead of RGB
        workers (int): Decoding threads

    Returns:
        tuple: (ManifestResult, Dataset with the split column as tags)
    """
    manifest = load_manifest(manifest_path)
    if len(manifest) == 0:
        raise DatasetError(f"{manifest_path}: manifest has no rows")
    images = read_images([r.image_path for r in manifest.records], workers)
    dataset = Dataset(prepare_batch(images, side, grayscale), manifest.labels, manifest.splits)
    return manifest, dataset


def _write_report(report, path):
    with open(path, "wb") as f:
        f.write(orjson.dumps(report, option=REPORT_OPTIONS))


def cmd_synth(config):
    """
    Generates the synthetic corpus and its biased train/test split.

    Returns:
        dict: Paths of the full, train and test manifests
    """
    images, records = generate(config.synth)
    train_records, test_records = split_biased(records, config.train_subpop, config.test_fraction, seed=config.seed)

    os.makedirs(config.out_dir, exist_ok=True)
    manifest_path = write_dataset(images, records, config.out_dir)
    train_path = _out(config, TRAIN_MANIFEST_FILE)
    test_path = _out(config, TEST_MANIFEST_FILE)
    write_manifest(train_records, train_path, base_dir=config.out_dir)
    write_manifest(test_records, test_path, base_dir=config.out_dir)
    logger.info("synth_written", out_dir=config.out_dir, images=len(images),
                train=len(train_records), test=len(test_records))
    return {"manifest": manifest_path, "train": train_path, "test": test_path, "images": len(images)}


def train_from_manifest(config, manifest_path, validation_path=None):
    """
    Builds the default network and trains it on a manifest's images.

    Returns:
        tuple: (trained Model, history DataFrame)
    """
    _, dataset = load_dataset(manifest_path, config.image_side, config.grayscale, config.workers)
    validation = None
    if validation_path is not None:
        _, validation = load_dataset(validation_path, config.image_side, config.grayscale, config.workers)

    shape = (config.image_side, config.image_side, _input_channels(config.grayscale))
    model = build_default_model(shape, seed=config.seed, batchnorm=config.batchnorm, dropout=config.dropout)
    augment_config = config.augment if config.use_augmentation else None
    return train(model, dataset, config.train, augment_config=augment_config, validation=validation)


def _save_training(config, model, history):
    os.makedirs(config.out_dir, exist_ok=True)
    settings = config.to_dict(include_paths=False)
    save_model(model, _out(config, MODEL_FILE), seed=config.seed,
               train_config={"train": settings["train"], "augment": settings["augment"]})
    history.to_csv(_out(config, HISTORY_FILE), index=False, float_format="%.17g", lineterminator="\n")
    history_plot(history, _out(config, HISTORY_PLOT_FILE))


def cmd_train(config):
    """
    Trains on config.manifest (default <out_dir>/train.csv), validating on config.test_manifest if given.

    Returns:
        dict: Model path and final-epoch metrics
    """
    manifest_path = _default_path(config.manifest, config, TRAIN_MANIFEST_FILE)
    validation_path = config.test_manifest
    if validation_path is not None and not os.path.exists(validation_path):
        raise FileNotFoundError(f"File not found: {validation_path}")
    model, history = train_from_manifest(config, manifest_path, validation_path)
    _save_training(config, model, history)
    last = history.iloc[-1].to_dict()
    logger.info("train_written", model=_out(config, MODEL_FILE), **last)
    return {"model": _out(config, MODEL_FILE), "final": last}


def _load_configured_model(config):
    if config.model is None:
        return None
    model, _ = load_model(_default_path(config.model, config, MODEL_FILE))
    return model


def _model_outputs(model, images):
    side, _, channels = model.input_shape
    return predict(model, prepare_batch(images, side, grayscale=(channels == 1)))


def run_audit(config, manifest_path, model=None):
    """
    Projects a corpus with PCA, places it on the grid and overlays per-sample errors.

    Outputs come from the model when one is given, otherwise from the manifest's
    output column.

    Args:
        config (RunConfig): Grid, PCA and rendering settings
        manifest_path (str): Corpus manifest
        model (Model, optional): Network producing the outputs

    Returns:
        AuditResult: Everything the audit artifacts and report are built from
    """
    manifest = load_manifest(manifest_path)
    if len(manifest) < 2:
        raise DatasetError(f"{manifest_path}: audit needs at least 2 images, got {len(manifest)}")
    images = read_images([r.image_path for r in manifest.records], config.workers)

    if model is not None:
        outputs = _model_outputs(model, images)
    else:
        missing = sum(1 for o in manifest.outputs if o is None)
        if missing:
            raise DatasetError(f"{manifest_path}: no model given and {missing} rows have no output value")
        outputs = np.array(manifest.outputs, dtype=np.float64)

    pca = fit_project(stack_for_pca(images, config.pca_side), config.pca_components)
    default_rows, default_cols = default_grid_shape(len(manifest))
    rows = config.rows or default_rows
    cols = config.cols or default_cols
    layout = assign(pca.coords[:, :2], rows, cols, config.assignment)
    layout = overlay_values(layout, manifest.labels, outputs, hard=config.hard_labels)

    tags = manifest.splits
    composition = region_composition(layout, tags) if all(t is not None for t in tags) else {}
    logger.info("audit_computed", samples=len(manifest), rows=rows, cols=cols, method=config.assignment)
    return AuditResult(
        records=manifest.records,
        labels=manifest.labels,
        outputs=outputs,
        tags=tags,
        images=images,
        pca=pca,
        layout=layout,
        regions=region_report(layout),
        composition=composition,
    )


def _metrics(labels, outputs):
    labels = np.asarray(labels, dtype=np.float64)
    outputs = np.asarray(outputs, dtype=np.float64)
    return {
        "count": int(labels.shape[0]),
        "accuracy": float(np.mean((outputs >= DECISION_THRESHOLD) == (labels == 1))),
        "mean_bce": bce_loss(labels, outputs),
        "mean_error": float(np.mean(np.abs(labels - outputs))),
    }


def split_metrics(labels, outputs, tags):
    """
    Accuracy, cross-entropy and mean error per tag.

    Returns:
        dict: {tag: {"count", "accuracy", "mean_bce", "mean_error"}}
    """
    frame = pd.DataFrame({"label": labels, "output": outputs, "tag": [str(t) for t in tags]})
    return {
        str(tag): _metrics(group["label"].to_numpy(), group["output"].to_numpy())
        for tag, group in frame.groupby("tag", sort=True)
    }


def build_report(config, audit):
    """
    Machine-readable audit summary.

    Args:
        config (RunConfig): Effective configuration, echoed without paths
        audit (AuditResult): Result of run_audit

    Returns:
        dict: Report document
    """
    report = {
        "format_version": REPORT_FORMAT_VERSION,
        "seed": config.seed,
        "config": config.to_dict(include_paths=False),
        "samples": len(audit.records),
        "grid": {
            "rows": audit.layout.spec.rows,
            "cols": audit.layout.spec.cols,
            "method": config.assignment,
            "hard_labels": config.hard_labels,
        },
        "overall": _metrics(audit.labels, audit.outputs),
        "regions": audit.regions["regions"],
        "grid_overall": audit.regions["overall"],
        "pca": {
            "components": audit.pca.n_components,
            "explained_variance_ratio": [float(r) for r in audit.pca.explained_variance_ratio()],
        },
    }
    if all(t is not None for t in audit.tags):
        report["splits"] = split_metrics(audit.labels, audit.outputs, audit.tags)
        report["composition"] = audit.composition
    return report


def write_audit_artifacts(config, audit):
    os.makedirs(config.out_dir, exist_ok=True)
    canvas = montage(audit.layout, audit.images, config.tile, config.alpha)
    write_coords(audit.pca, _out(config, COORDS_FILE))
    write_layout(audit.layout, _out(config, LAYOUT_FILE))
    write_png(canvas, _out(config, MONTAGE_FILE))
    tags = audit.tags if all(t is not None for t in audit.tags) else None
    projection_plot(audit.pca.coords[:, :2], audit.layout.spec, _out(config, PROJECTION_FILE), tags)


def cmd_audit(config):
    """
    Audits config.manifest (default <out_dir>/manifest.csv): coords, layout, montage, projection and report.

    Returns:
        dict: The written report
    """
    manifest_path = _default_path(config.manifest, config, MANIFEST_FILE)
    audit = run_audit(config, manifest_path, _load_configured_model(config))
    report = build_report(config, audit)
    write_audit_artifacts(config, audit)
    _write_report(report, _out(config, REPORT_FILE))
    logger.info("audit_written", out_dir=config.out_dir, overall_accuracy=report["overall"]["accuracy"])
    return report


def cmd_report(config):
    """
    Writes only the machine-readable report for config.manifest.

    Returns:
        dict: The written report
    """
    manifest_path = _default_path(config.manifest, config, MANIFEST_FILE)
    report = build_report(config, run_audit(config, manifest_path, _load_configured_model(config)))
    os.makedirs(config.out_dir, exist_ok=True)
    _write_report(report, _out(config, REPORT_FILE))
    logger.info("report_written", path=_out(config, REPORT_FILE))
    return report


def _overlay_names(image_paths):
    names = []
    seen = {}
    for path in image_paths:
        stem = os.path.splitext(os.path.basename(path))[0]
        count = seen.get(stem, 0)
        seen[stem] = count + 1
        names.append(f"{stem}_saliency.png" if count == 0 else f"{stem}_{count}_saliency.png")
    return names


def cmd_saliency(config, image_paths):
    """
    Writes a saliency overlay per input image under <out_dir>/saliency/.

    Returns:
        list: Written overlay paths, in input order
    """
    model_path = _default_path(config.model, config, MODEL_FILE)
    missing = [p for p in image_paths if not os.path.exists(p)]
    if missing:
        raise FileNotFoundError(f"Image not found: {missing[0]}")
    model, _ = load_model(model_path)
    side, _, channels = model.input_shape

    overlays = []
    for path in image_paths:
        image = prepare_batch([read_image(path)], side, grayscale=(channels == 1))[0]
        overlays.append(saliency_overlay(image, input_saliency(model, image), config.alpha))

    out_dir = _out(config, SALIENCY_DIR)
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for name, overlay in zip(_overlay_names(image_paths), overlays):
        path = os.path.join(out_dir, name)
        write_png(overlay, path)
        written.append(path)
    logger.info("saliency_written", out_dir=out_dir, images=len(written))
    return written


def _half_bias(report, minority):
    """Finds the grid half pair where the minority tag is most concentrated and compares their errors."""
    composition = report.get("composition") or {}
    best = None
    for first, second in HALF_PAIRS:
        shares = []
        for half in (first, second):
            counts = composition.get(half, {})
            total = sum(counts.values())
            shares.append(counts.get(minority, 0) / total if total else 0.0)
        spread = abs(shares[0] - shares[1])
        if best is None or spread > best[0]:
            best = (spread, (first, second) if shares[0] >= shares[1] else (second, first), shares)
    if best is None:
        return None
    spread, (minority_half, other_half), _ = best
    minority_error = report["regions"][minority_half]["mean"]
    other_error = report["regions"][other_half]["mean"]
    gap = None if minority_error is None or other_error is None else minority_error - other_error
    return {
        "minority": minority,
        "minority_half": minority_half,
        "other_half": other_half,
        "share_spread": spread,
        "minority_half_error": minority_error,
        "other_half_error": other_error,
        "error_gap": gap,
    }


def saliency_focus_by_tag(model, dataset, per_group=SALIENCY_SAMPLES_PER_GROUP):
    """
    Mean share of saliency on the eye region, per tag, over the first per_group samples of each tag.

    Returns:
        dict: {tag: mean focus}
    """
    side = model.input_shape[0]
    mask = eye_masks(side, open_eyes=True)
    focus = {}
    for tag in sorted({str(t) for t in dataset.tags}):
        indices = [i for i, t in enumerate(dataset.tags) if str(t) == tag][:per_group]
        values = [saliency_focus(input_saliency(model, dataset.images[i]), mask) for i in indices]
        focus[tag] = float(np.mean(values)) if values else None
    return focus


def cmd_experiment(config):
    """
    Synthesizes the two-subpopulation corpus, trains on one subpopulation and audits the whole corpus.

    Returns:
        dict: The audit report with an "experiment" section of held-out metrics per subpopulation,
            the grid-half bias comparison and saliency focus
    """
    paths = cmd_synth(config)
    model, history = train_from_manifest(config, paths["train"], paths["test"])
    _, held_out = load_dataset(paths["test"], config.image_side, config.grayscale, config.workers)
    held_out_outputs = predict(model, held_out.images)

    audit = run_audit(config, paths["manifest"], model)
    report = build_report(config, audit)
    minority = next(s for s in SUBPOPULATIONS if s != config.train_subpop)
    report["experiment"] = {
        "train_subpop": config.train_subpop,
        "held_out": split_metrics(held_out.labels, held_out_outputs, held_out.tags),
        "half_bias": _half_bias(report, minority),
        "saliency_focus": saliency_focus_by_tag(model, held_out),
        "final_epoch": {k: float(v) for k, v in history.iloc[-1].to_dict().items()},
    }

    _save_training(config, model, history)
    write_audit_artifacts(config, audit)
    _write_report(report, _out(config, REPORT_FILE))
    logger.info(
        "experiment_finished",
        out_dir=config.out_dir,
        held_out={k: round(v["accuracy"], 4) for k, v in report["experiment"]["held_out"].items()},
    )
    return report
