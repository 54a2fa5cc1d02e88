"""SPDNet: seasonal-periodic decomposition network for load forecasting."""

from .autodiff import NonFiniteError, Parameter, Tensor
from .config import Config
from .pdm import PDM, SPDNet
from .spectral import NoPeriodicityError, PeriodSet, compute_spectrum, detect_periods, fold, top_k_periods, unfold
from .stdm import STDM

__version__ = "0.1.0"

__all__ = [
    "Config",
    "NoPeriodicityError",
    "NonFiniteError",
    "PDM",
    "Parameter",
    "PeriodSet",
    "SPDNet",
    "STDM",
    "Tensor",
    "compute_spectrum",
    "detect_periods",
    "fold",
    "top_k_periods",
    "unfold",
]
