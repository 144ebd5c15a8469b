"""
Corpus loading: manifests, image decoding and resizing.

Supported formats are PNG (8/16-bit grey or RGB, alpha dropped) and binary
PPM/PGM. Decoded images are float64 arrays of shape (h, w, c) in [0, 1].
"""
import io
import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import png
import structlog

from .config import DEFAULT_WORKERS, LUMA_WEIGHTS, MANIFEST_COLUMNS
from .errors import ImageFormatError, ManifestError, ShapeError

logger = structlog.get_logger(__name__)

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"
PNM_MAGICS = {b"P5": 1, b"P6": 3}


@dataclass(frozen=True)
class SampleRecord:
    image_path: str
    label: int
    output: float | None = None
    split: str | None = None


@dataclass
class ManifestResult:
    records: list = field(default_factory=list)
    duplicate_count: int = 0
    base_dir: str = "."

    def __len__(self):
        return len(self.records)

    @property
    def labels(self):
        return np.array([r.label for r in self.records], dtype=np.int64)

    @property
    def outputs(self):
        return [r.output for r in self.records]

    @property
    def splits(self):
        return [r.split for r in self.records]


def _data_lines(text):
    """Header and data rows with their physical line numbers; blanks and lines starting with # are skipped."""
    numbers, lines = [], []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if stripped and not stripped.startswith("#"):
            numbers.append(lineno)
            lines.append(line)
    return numbers, lines


def _cell(value):
    if isinstance(value, float) and np.isnan(value):
        return ""
    return str(value)


def _parse_label(raw, line):
    if raw.strip() not in ("0", "1"):
        raise ManifestError(f"label must be 0 or 1, got {raw!r}", line)
    return int(raw)


def _parse_output(raw, line):
    raw = raw.strip()
    if raw == "":
        return None
    try:
        value = float(raw)
    except ValueError:
        raise ManifestError(f"output is not a decimal number: {raw!r}", line) from None
    if not 0.0 <= value <= 1.0:
        raise ManifestError(f"output must lie in [0, 1], got {value}", line)
    return value


def load_manifest(path):
    """
    Parses a `path,label[,output][,split]` manifest.

    Args:
        path (str): Manifest file; image paths are resolved against its directory

    Returns:
        ManifestResult: Records in file order plus the duplicate-path count
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"Manifest not found: {path}")

    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    line_numbers, lines = _data_lines(text)
    if not line_numbers:
        raise ManifestError("manifest is empty", 1)

    # only whole-line comments are dropped; a # inside a row is data
    try:
        df = pd.read_csv(
            io.StringIO("\n".join(lines) + "\n"),
            dtype=str,
            na_filter=False,
            skip_blank_lines=True,
            skipinitialspace=True,
        )
    except pd.errors.ParserError as e:
        raise ManifestError(f"malformed row: {e}") from None

    columns = [c.strip() for c in df.columns]
    if columns[:2] != ["path", "label"] or any(c not in MANIFEST_COLUMNS for c in columns):
        raise ManifestError(f"header must be path,label[,output][,split], got {','.join(columns)}", line_numbers[0])
    df.columns = columns

    base_dir = os.path.dirname(os.path.abspath(path))
    records = []
    seen = set()
    duplicates = 0
    for i, row in enumerate(df.itertuples(index=False)):
        line = line_numbers[i + 1] if i + 1 < len(line_numbers) else None
        raw_path = _cell(row.path).strip()
        if not raw_path:
            raise ManifestError("empty image path", line)
        label = _parse_label(_cell(row.label), line)
        output = _parse_output(_cell(row.output), line) if "output" in columns else None
        split = (_cell(row.split).strip() or None) if "split" in columns else None
        if raw_path in seen:
            duplicates += 1
        seen.add(raw_path)
        resolved = raw_path if os.path.isabs(raw_path) else os.path.join(base_dir, raw_path)
        records.append(SampleRecord(image_path=resolved, label=label, output=output, split=split))

    if duplicates:
        logger.warning("manifest_duplicate_paths", path=path, duplicates=duplicates)
    logger.info("manifest_loaded", path=path, records=len(records))
    return ManifestResult(records=records, duplicate_count=duplicates, base_dir=base_dir)


def write_manifest(records, path, base_dir=None):
    """
    Writes records as a manifest, paths relative to base_dir (default: the manifest's directory).

    Args:
        records (list): SampleRecord entries
        path (str): Destination manifest path
        base_dir (str, optional): Directory image paths are made relative to
    """
    base_dir = base_dir or os.path.dirname(os.path.abspath(path))
    rows = []
    for r in records:
        rel = os.path.relpath(r.image_path, base_dir) if os.path.isabs(r.image_path) else r.image_path
        rows.append({
            "path": rel.replace(os.sep, "/"),
            "label": r.label,
            "output": "" if r.output is None else format(r.output, ".17g"),
            "split": r.split or "",
        })
    pd.DataFrame(rows, columns=list(MANIFEST_COLUMNS)).to_csv(path, index=False, lineterminator="\n")


def _read_pnm(data):
    magic = data[:2]
    channels = PNM_MAGICS[magic]
    tokens = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise ImageFormatError("truncated PNM header")
        tokens.append(data[start:pos])
    pos += 1  # single whitespace byte before the payload
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise ImageFormatError(f"invalid PNM header fields: {tokens}") from None
    if width < 1 or height < 1 or not 1 <= maxval <= 65535:
        raise ImageFormatError(f"invalid PNM dimensions {width}x{height} or maxval {maxval}")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype(np.uint8)
    expected = width * height * channels * dtype.itemsize
    payload = data[pos:pos + expected]
    if len(payload) < expected:
        raise ImageFormatError(f"truncated PNM payload: expected {expected} bytes, got {len(payload)}")
    pixels = np.frombuffer(payload, dtype=dtype).reshape(height, width, channels)
    return pixels, maxval


def _read_png(data):
    try:
        width, height, rows, info = png.Reader(bytes=data).asDirect()
        pixels = np.vstack([np.asarray(row, dtype=np.uint16) for row in rows])
    except (png.Error, EOFError, ValueError, zlib.error) as e:
        raise ImageFormatError(f"undecodable PNG: {e}") from None
    planes = info["planes"]
    pixels = pixels.reshape(height, width, planes)
    if info.get("alpha"):
        pixels = pixels[:, :, : planes - 1]
    return pixels, 2 ** info["bitdepth"] - 1


def decode_image(data):
    """
    Decodes PNG or binary PPM/PGM bytes.

    Args:
        data (bytes): Encoded image

    Returns:
        np.ndarray: (h, w, c) float64 array in [0, 1]
    """
    if data.startswith(PNG_SIGNATURE):
        pixels, maxval = _read_png(data)
    elif data[:2] in PNM_MAGICS:
        pixels, maxval = _read_pnm(data)
    else:
        raise ImageFormatError(f"unsupported image format (magic bytes {data[:8]!r})")
    return pixels.astype(np.float64) / float(maxval)


def read_image(path):
    """
    Reads an image file at its native size.

    Args:
        path (str): Image path

    Returns:
        np.ndarray: (h, w, c) float64 array in [0, 1]
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"Image not found: {path}")
    with open(path, "rb") as f:
        data = f.read()
    try:
        return decode_image(data)
    except ImageFormatError as e:
        raise ImageFormatError(f"{path}: {e}") from None


def to_grayscale(image):
    """
    Converts an image to one channel by luminance (0.299R + 0.587G + 0.114B).

    Args:
        image (np.ndarray): (h, w, 1) or (h, w, 3) array

    Returns:
        np.ndarray: (h, w, 1) array
    """
    if image.shape[2] == 1:
        return image
    r, g, b = LUMA_WEIGHTS
    return (r * image[:, :, 0] + g * image[:, :, 1] + b * image[:, :, 2])[:, :, None]


def to_rgb(image):
    if image.shape[2] == 3:
        return image
    return np.repeat(image, 3, axis=2)


def sample_bilinear(image, ys, xs):
    """
    Samples an (h, w, c) image at fractional coordinates with edge clamping.

    Args:
        image (np.ndarray): Source image
        ys (np.ndarray): Row coordinates, any shape
        xs (np.ndarray): Column coordinates, same shape as ys

    Returns:
        np.ndarray: Sampled values with shape ys.shape + (c,)
    """
    h, w = image.shape[:2]
    ys = np.clip(ys, 0.0, h - 1)
    xs = np.clip(xs, 0.0, w - 1)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    ty = (ys - y0)[..., None]
    tx = (xs - x0)[..., None]
    top = image[y0, x0] + (image[y0, x1] - image[y0, x0]) * tx
    bottom = image[y1, x0] + (image[y1, x1] - image[y1, x0]) * tx
    return top + (bottom - top) * ty


def resize_bilinear(image, target_h, target_w):
    """
    Bilinear resize using pixel-center alignment; identity when the size is unchanged.

    Args:
        image (np.ndarray): (h, w, c) array
        target_h (int): Output height
        target_w (int): Output width

    Returns:
        np.ndarray: (target_h, target_w, c) array
    """
    if target_h < 1 or target_w < 1:
        raise ShapeError(f"target size must be positive, got {target_h}x{target_w}")
    h, w = image.shape[:2]
    if (h, w) == (target_h, target_w):
        return image.copy()
    ys = (np.arange(target_h) + 0.5) * (h / target_h) - 0.5
    xs = (np.arange(target_w) + 0.5) * (w / target_w) - 0.5
    grid_y, grid_x = np.meshgrid(ys, xs, indexing="ij")
    return sample_bilinear(image, grid_y, grid_x)


def load_image(path, target_h, target_w, grayscale=False):
    """
    Decodes, optionally converts to grayscale, and resizes an image.

    Args:
        path (str): Image path
        target_h (int): Output height
        target_w (int): Output width
        grayscale (bool): Convert to one luminance channel

    Returns:
        np.ndarray: (target_h, target_w, c) float64 array in [0, 1]
    """
    if target_h < 1 or target_w < 1:
        raise ShapeError(f"target size must be positive, got {target_h}x{target_w}")
    image = read_image(path)
    if grayscale:
        image = to_grayscale(image)
    return np.clip(resize_bilinear(image, target_h, target_w), 0.0, 1.0)


def read_images(paths, workers=DEFAULT_WORKERS):
    """
    Reads many images concurrently; results keep the order of paths.

    Args:
        paths (list): Image paths
        workers (int): Decoding threads

    Returns:
        list: Native-size images
    """
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        return list(pool.map(read_image, paths))


def prepare_batch(images, side, grayscale=False):
    """
    Resizes images to side x side with a uniform channel count, stacked as (N, side, side, c).

    Args:
        images (list): Native-size images
        side (int): Output side length
        grayscale (bool): One luminance channel instead of RGB

    Returns:
        np.ndarray: Batch array
    """
    convert = to_grayscale if grayscale else to_rgb
    return np.stack([np.clip(resize_bilinear(convert(img), side, side), 0.0, 1.0) for img in images])


def stack_for_pca(images, side):
    """
    Flattens grayscale side x side versions of the images into an N x side² matrix.

    Args:
        images (list): Images of any size and channel count
        side (int): Side length each image is resized to

    Returns:
        np.ndarray: N x P matrix, rows in row-major pixel order
    """
    if len(images) == 0:
        raise ShapeError("stack_for_pca needs at least one image")
    return np.stack([resize_bilinear(to_grayscale(img), side, side).reshape(-1) for img in images])
