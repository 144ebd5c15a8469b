import argparse
import sys

import structlog

from src.commands import cmd_audit, cmd_experiment, cmd_report, cmd_saliency, cmd_synth, cmd_train
from src.config import ASSIGNMENT_METHODS
from src.errors import ConfigError, ConvergenceError, DatasetError, GridError, ImageFormatError, ManifestError, \
    ModelFormatError, ShapeError
from src.log import configure_logging
from src.run_config import load_run_config

logger = structlog.get_logger(__name__)

DOMAIN_ERRORS = (
    ConfigError,
    ManifestError,
    ImageFormatError,
    GridError,
    DatasetError,
    ModelFormatError,
    ShapeError,
    ConvergenceError,
    FileNotFoundError,
)


def build_parser():
    parser = argparse.ArgumentParser(prog="fairgrid", description="PCA-grid fairness audit of image classifiers")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file with run settings")
    common.add_argument("--seed", type=int, help="seed for synthesis, training and augmentation")
    common.add_argument("--out-dir", dest="out_dir", help="directory for all outputs")
    common.add_argument("--manifest", help="corpus manifest (path,label[,output][,split])")
    common.add_argument("--model", help="model file written by train")
    common.add_argument("--log-level", dest="log_level", help="DEBUG, INFO, WARNING or ERROR")

    training = argparse.ArgumentParser(add_help=False)
    training.add_argument("--test-manifest", dest="test_manifest", help="validation manifest")
    training.add_argument("--epochs", dest="train__epochs", type=int)
    training.add_argument("--lr", dest="train__learning_rate", type=float)
    training.add_argument("--batch-size", dest="train__batch_size", type=int)
    training.add_argument("--image-side", dest="image_side", type=int)

    audit = argparse.ArgumentParser(add_help=False)
    audit.add_argument("--rows", type=int)
    audit.add_argument("--cols", type=int)
    audit.add_argument("--pca-side", dest="pca_side", type=int)
    audit.add_argument("--alpha", type=float)
    audit.add_argument("--tile", type=int)
    audit.add_argument("--assignment", choices=ASSIGNMENT_METHODS)
    audit.add_argument("--hard-labels", dest="hard_labels", action="store_true", default=None)

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="generate the synthetic corpus and biased split")
    sub.add_parser("train", parents=[common, training], help="train the classifier")
    sub.add_parser("audit", parents=[common, audit], help="PCA grid, montage and region report")
    saliency = sub.add_parser("saliency", parents=[common], help="saliency overlays for images")
    saliency.add_argument("images", nargs="+", help="image files")
    saliency.add_argument("--alpha", type=float)
    sub.add_parser("report", parents=[common, audit], help="write the audit report only")
    sub.add_parser("experiment", parents=[common, training, audit], help="synth, train and audit end to end")
    return parser


CONFIG_KEYS = (
    "seed", "out_dir", "manifest", "model", "log_level", "test_manifest", "train__epochs",
    "train__learning_rate", "train__batch_size", "image_side", "rows", "cols", "pca_side",
    "alpha", "tile", "assignment", "hard_labels",
)


def run(argv=None):
    """
    Parses arguments and runs one command.

    Args:
        argv (list, optional): Arguments without the program name

    Returns:
        int: 0 on success, 2 on invalid input or missing files, 1 on unexpected failure
    """
    args = build_parser().parse_args(argv)
    try:
        configure_logging(args.log_level or "INFO")
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2

    overrides = {key: getattr(args, key, None) for key in CONFIG_KEYS}
    try:
        config = load_run_config(args.config, **overrides)
        if args.command == "synth":
            cmd_synth(config)
        elif args.command == "train":
            cmd_train(config)
        elif args.command == "audit":
            cmd_audit(config)
        elif args.command == "saliency":
            cmd_saliency(config, args.images)
        elif args.command == "report":
            cmd_report(config)
        elif args.command == "experiment":
            cmd_experiment(config)
    except DOMAIN_ERRORS as e:
        logger.error("command_failed", command=args.command, error=str(e))
        return 2
    except Exception as e:
        logger.exception("command_crashed", command=args.command, error=str(e))
        return 1
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
