from .asian import BachelierJumpAsian, ExpLevyAsian, make_bachelier_jump_asian, make_exp_levy_asian
from .base import FAMILIES, ModelSpec, NonFiniteStateError, SingularVariationError, right_inverse
from .custom import CustomModel
from .gbm import GBM, Merton
from .simulate import (Accumulator, MalliavinCovarianceAccumulator, SimulatedPath, StepContext,
                       malliavin_covariance, simulate_path)
from .svj import SvjModel, SvjParams, TruncationLevel, Truncations, make_svj, make_svjj

__all__ = [
    "Accumulator", "BachelierJumpAsian", "CustomModel", "ExpLevyAsian", "FAMILIES", "GBM",
    "MalliavinCovarianceAccumulator", "Merton", "ModelSpec", "NonFiniteStateError",
    "SimulatedPath", "SingularVariationError", "StepContext", "SvjModel", "SvjParams",
    "TruncationLevel", "Truncations", "make_bachelier_jump_asian", "make_exp_levy_asian",
    "make_svj", "make_svjj", "malliavin_covariance", "right_inverse", "simulate_path",
]
