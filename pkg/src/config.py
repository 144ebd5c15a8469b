import os
from dotenv import load_dotenv

load_dotenv()

# Runtime environment
LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")
DEFAULT_SEED = int(os.getenv("FAIRGRID_SEED", "7"))
DEFAULT_OUT_DIR = os.getenv("FAIRGRID_OUT_DIR", "out")
DEFAULT_WORKERS = int(os.getenv("FAIRGRID_WORKERS", "4"))

# SVD
SVD_TOLERANCE = 1e-12
SVD_MAX_SWEEPS = 1000

# PCA
DEFAULT_PCA_COMPONENTS = 2
DEFAULT_PCA_SIDE = 32

# Grid assignment
EXACT_ASSIGN_MAX_CELLS = 4096
ASSIGNMENT_METHODS = ("greedy", "exact")

# Image ingest
LUMA_WEIGHTS = (0.299, 0.587, 0.114)
MANIFEST_COLUMNS = ("path", "label", "output", "split")

# Training (batch size and epochs follow the reference recipe)
DEFAULT_LEARNING_RATE = 1e-3
DEFAULT_BETA1 = 0.9
DEFAULT_BETA2 = 0.999
DEFAULT_EPSILON_ADAM = 1e-8
DEFAULT_BATCH_SIZE = 32
DEFAULT_EPOCHS = 30
DEFAULT_DROPOUT_RATE = 0.5
DEFAULT_USE_AUGMENTATION = False
BCE_EPSILON = 1e-12
BATCHNORM_EPSILON = 1e-5
BATCHNORM_MOMENTUM = 0.9
DECISION_THRESHOLD = 0.5
PREDICT_BATCH_SIZE = 256

# Augmentation
DEFAULT_RESCALE_RANGE = (0.8, 1.2)
DEFAULT_SHEAR_MAX = 0.2
DEFAULT_ZOOM_RANGE = (0.9, 1.1)
DEFAULT_HFLIP_PROB = 0.5

# Synthetic corpus
DEFAULT_N_PER_CELL = 200
DEFAULT_TONE_A = 0.75
DEFAULT_TONE_B = 0.35
DEFAULT_TONE_JITTER = 0.03
DEFAULT_SYNTH_SIDE = 32
DEFAULT_NOISE_STD = 0.05
DEFAULT_TEST_FRACTION = 0.25
SUBPOPULATIONS = ("A", "B")
TONE_CLAMP = (0.05, 0.95)

# Rendering
DEFAULT_ALPHA = 0.45
DEFAULT_TILE = 32

# Model persistence
MODEL_FORMAT_NAME = "fairgrid-model"
MODEL_FORMAT_VERSION = 1
REPORT_FORMAT_VERSION = 1

# Output file names under --out-dir
COORDS_FILE = "coords.csv"
LAYOUT_FILE = "layout.csv"
MONTAGE_FILE = "montage.png"
PROJECTION_FILE = "projection.png"
REPORT_FILE = "report.txt"
MODEL_FILE = "model.txt"
HISTORY_FILE = "history.csv"
HISTORY_PLOT_FILE = "history.png"
MANIFEST_FILE = "manifest.csv"
TRAIN_MANIFEST_FILE = "train.csv"
TEST_MANIFEST_FILE = "test.csv"
SALIENCY_DIR = "saliency"
IMAGES_DIR = "images"
