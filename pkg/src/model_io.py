"""
Model persistence as a versioned JSON text document.

Layout:
    {"format", "version", "input_shape", "seed", "train_config",
     "layers": [{"kind", "config", "params": {name: {"shape", "values"}}, "buffers": {...}}]}

Arrays are stored flat in row-major order as 17-significant-digit decimals,
which read back to the identical doubles.
"""
import numpy as np
import orjson
import structlog

from .config import MODEL_FORMAT_NAME, MODEL_FORMAT_VERSION
from .errors import ModelFormatError
from .layers import LAYER_TYPES
from .nn import Model

logger = structlog.get_logger(__name__)

JSON_OPTIONS = orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS
# 17 significant digits, always in float syntax so -0.0 survives
FLOAT_FORMAT = ".16e"


def _encode_array(array):
    array = np.ascontiguousarray(array, dtype=np.float64)
    if not np.all(np.isfinite(array)):
        raise ModelFormatError(f"cannot store non-finite values in an array of shape {array.shape}")
    text = ",".join(format(v, FLOAT_FORMAT) for v in array.ravel().tolist())
    return {"shape": list(array.shape), "values": orjson.Fragment(f"[{text}]")}


def _decode_array(entry, where):
    try:
        shape = tuple(int(d) for d in entry["shape"])
        values = np.asarray(entry["values"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as e:
        raise ModelFormatError(f"{where}: malformed array entry ({e})")
    if values.ndim != 1 or values.size != int(np.prod(shape)):
        raise ModelFormatError(f"{where}: {values.size} values do not fill shape {shape}")
    if not np.all(np.isfinite(values)):
        raise ModelFormatError(f"{where}: non-finite values")
    return values.reshape(shape)


def model_document(model, seed=None, train_config=None):
    return {
        "format": MODEL_FORMAT_NAME,
        "version": MODEL_FORMAT_VERSION,
        "input_shape": list(model.input_shape),
        "seed": seed,
        "train_config": train_config,
        "layers": [
            {
                "kind": layer.kind,
                "config": layer.config(),
                "params": {name: _encode_array(value) for name, value in layer.params.items()},
                "buffers": {name: _encode_array(value) for name, value in layer.buffers.items()},
            }
            for layer in model.layers
        ],
    }


def save_model(model, path, seed=None, train_config=None):
    """
    Writes the model document.

    Args:
        model (Model): Network to persist
        path (str): Destination path
        seed (int, optional): Seed the model was trained with
        train_config (dict, optional): Training settings to echo
    """
    data = orjson.dumps(model_document(model, seed, train_config), option=JSON_OPTIONS)
    with open(path, "wb") as f:
        f.write(data)
    logger.info("model_saved", path=path, layers=len(model.layers))


def _build_layer(index, entry):
    where = f"layer {index}"
    kind = entry.get("kind")
    if kind not in LAYER_TYPES:
        raise ModelFormatError(f"{where}: unknown layer kind {kind!r}")
    try:
        layer = LAYER_TYPES[kind].from_config(entry.get("config") or {})
    except TypeError as e:
        raise ModelFormatError(f"{where}: bad {kind} config ({e})")

    for group in ("params", "buffers"):
        expected = getattr(layer, group)
        stored = entry.get(group) or {}
        if set(stored) != set(expected):
            raise ModelFormatError(f"{where}: {group} {sorted(stored)} do not match {sorted(expected)}")
        for name, current in expected.items():
            value = _decode_array(stored[name], f"{where} {name}")
            if value.shape != current.shape:
                raise ModelFormatError(f"{where} {name}: stored shape {value.shape}, layer needs {current.shape}")
            expected[name] = value
    return layer


def load_model(path):
    """
    Reads a model document written by save_model.

    Args:
        path (str): Model file path

    Returns:
        tuple: (Model in inference mode, metadata dict with seed and train_config)
    """
    with open(path, "rb") as f:
        raw = f.read()
    try:
        doc = orjson.loads(raw)
    except orjson.JSONDecodeError as e:
        raise ModelFormatError(f"{path}: not a JSON document ({e})")
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT_NAME:
        raise ModelFormatError(f"{path}: not a {MODEL_FORMAT_NAME} document")
    if doc.get("version") != MODEL_FORMAT_VERSION:
        raise ModelFormatError(f"{path}: unsupported version {doc.get('version')!r}, expected {MODEL_FORMAT_VERSION}")

    layers = [_build_layer(i, entry) for i, entry in enumerate(doc.get("layers") or [])]
    seed = doc.get("seed")
    try:
        model = Model(layers, doc.get("input_shape") or (), seed=seed if seed is not None else 0)
    except ValueError as e:
        raise ModelFormatError(f"{path}: incompatible layer shapes ({e})")
    logger.info("model_loaded", path=path, layers=len(layers))
    return model, {"seed": seed, "train_config": doc.get("train_config")}
