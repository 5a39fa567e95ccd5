"""fibnet: a lightweight from-scratch CNN framework and experiment CLI.

The model family uses a Fibonacci filter schedule (21, 34, 55, 89, ...),
Avg-2Max pooling inside parallel concatenation branches, and a
depthwise-separable tail. Everything runs on NumPy arrays in (n, h, w, c)
layout; the hot window kernels have a compiled Cython core with a
pure-NumPy fallback selected at import.
"""
import os

# FIBNET_THREADS caps worker threads. The only parallelism in this package
# is the BLAS pool behind numpy's matmul, so the cap is applied to the BLAS
# environment knobs. Must run before numpy is first imported.
_threads = os.environ.get("FIBNET_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                 "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)
del os, _threads

__version__ = "0.1.0"

from .exceptions import (  # noqa: E402
    FibnetError,
    ShapeMismatchError,
    ConfigError,
    DatasetError,
    CheckpointError,
    TrainingDiverged,
)
from .model import (  # noqa: E402
    ModelConfig,
    PcbSpec,
    fibonacci_schedule,
    build_model,
    count_params,
)
from .optim import TrainConfig, lr_schedule, adam_step  # noqa: E402

__all__ = [
    "FibnetError", "ShapeMismatchError", "ConfigError", "DatasetError",
    "CheckpointError", "TrainingDiverged",
    "ModelConfig", "PcbSpec", "fibonacci_schedule", "build_model",
    "count_params",
    "TrainConfig", "lr_schedule", "adam_step",
    "__version__",
]
