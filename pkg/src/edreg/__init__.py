"""Point-cloud registration with energy-distance kernel flows and sliced summation."""

from .core import (
    DirectionSet,
    DiscreteVectorMeasure,
    KernelSpec,
    MomentPath,
    PointCloud,
    sample_sphere,
    tv_norm,
    zero_mean_project,
)
from .flow import FlowMode, FlowResult, advect_points, bilipschitz_bounds, euler_flow, inverse_flow
from .registration import LossSpec, RegistrationConfig, RegistrationResult, Regularization, register

__version__ = "0.1.0"
