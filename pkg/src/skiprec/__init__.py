"""Skip-aware video recommendation with dual interaction graphs."""

from .ingest import H, L, N, DataError, InteractionClass
from .optim import NumericalError, TrainConfig
from .synth import SynthConfig

__version__ = "0.1.0"

__all__ = ["H", "L", "N", "DataError", "InteractionClass", "NumericalError",
           "TrainConfig", "SynthConfig", "__version__"]
