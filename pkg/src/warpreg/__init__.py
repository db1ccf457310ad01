"""Deformable image registration with a displacement network regularized by
a neo-Hookean near-incompressibility penalty, plus the machinery to turn
the trained field into Jacobian maps and strain curves."""

__version__ = "0.1.0"

from .autodiff import DenseNetwork, DualBatch, ParamGradient, init_xavier
from .field import DeformationField, DeformationSample, OracleField
from .fourier import FourierMap, IdentityMap, sample_fourier
from .grids import ImageGrid
from .landmarks import LandmarkSet
from .meshes import LVMesh, MeshRegion, RingRegion
from .ringbench import RingOracle, RingSpec
from .training import TrainConfig

__all__ = [
    "DenseNetwork", "DualBatch", "ParamGradient", "init_xavier",
    "DeformationField", "DeformationSample", "OracleField",
    "FourierMap", "IdentityMap", "sample_fourier",
    "ImageGrid", "LandmarkSet", "LVMesh", "MeshRegion", "RingRegion",
    "RingOracle", "RingSpec", "TrainConfig",
    "__version__",
]
