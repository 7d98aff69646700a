"""Spectral image visualisation with a cycle-consistent GAN, built on a small numpy autodiff core."""

from .data import RgbImage, SpectralCube, load_cube, read_png, save_cube, write_png
from .errors import (
    DegenerateError,
    DimensionError,
    DivergenceError,
    FormatError,
    GraphError,
    ValidityError,
    VganError,
)
from .metrics import MetricReport, evaluate
from .networks import Checkpoint, NetConfig, load_checkpoint, save_checkpoint
from .training import PRESETS, TrainConfig, train_loop, visualize

__version__ = "0.1.0"
