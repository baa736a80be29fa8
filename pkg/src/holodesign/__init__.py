"""Volumetric acoustic hologram design.

A heterogeneous Helmholtz solver and an angular-spectrum propagator form a
differentiable forward model from a printable two-material lens to the
acoustic amplitude on a target plane. Lenses are designed by Adam descent
on adjoint-state gradients and compared against thin-element baselines.
"""
from .grid import (AmplitudeImage, ComplexField, Grid, GridError, Medium, MediumError, PlaneField, SourcePlane,
                   disc_source, embed_region, homogeneous_medium, make_grid)
from .helmholtz import HelmholtzSettings, InvalidMedium, NonConvergence, dense_residual, solve_helmholtz
from .material import DesignVariable, Material, MaterialPair, binarize, binarization_error, mixture
from .objective import LossConfig, TargetSpec, cnr, correlation, find_target_depth, loss
from .optim import AdamConfig, loss_and_gradient, optimize
from .propagation import ASPlan, angular_spectrum, extract_slice, propagate_to_target
from .scenario import Scenario, simulate

__version__ = "0.1.0"

__all__ = [
    "AmplitudeImage", "ComplexField", "Grid", "GridError", "Medium", "MediumError", "PlaneField",
    "SourcePlane", "disc_source", "embed_region", "homogeneous_medium", "make_grid",
    "HelmholtzSettings", "InvalidMedium", "NonConvergence", "dense_residual", "solve_helmholtz",
    "DesignVariable", "Material", "MaterialPair", "binarize", "binarization_error", "mixture",
    "LossConfig", "TargetSpec", "cnr", "correlation", "find_target_depth", "loss",
    "AdamConfig", "loss_and_gradient", "optimize",
    "ASPlan", "angular_spectrum", "extract_slice", "propagate_to_target",
    "Scenario", "simulate",
]
