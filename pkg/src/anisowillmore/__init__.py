"""Nested variational time discretization of anisotropic Willmore flow for planar curves."""

from .anisotropy import AnisotropyModel, wulff_sample
from .errors import (
    InvalidConfigError,
    InvalidInputError,
    NearSingularError,
    NonconvergenceError,
    UnsupportedRequestError,
    WillmoreError,
)
from .geometry import SimplicialSurface, mesh_size, vertex_normals
from .solver import FlowTrajectory, SolverConfig, run_flow, time_step

__all__ = [
    "AnisotropyModel",
    "FlowTrajectory",
    "InvalidConfigError",
    "InvalidInputError",
    "NearSingularError",
    "NonconvergenceError",
    "SimplicialSurface",
    "SolverConfig",
    "UnsupportedRequestError",
    "WillmoreError",
    "mesh_size",
    "run_flow",
    "time_step",
    "vertex_normals",
    "wulff_sample",
]
