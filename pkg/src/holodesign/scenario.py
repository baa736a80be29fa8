"""A lens-design scenario and its forward model.

The forward chain for a lens patch is

    medium = background with the lens box replaced
    P      = Helmholtz solve for the piston source
    Q      = angular spectrum over ``target.depth`` of the plane at ``extraction_index``
    q      = |Q|
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional

import numpy as np

from .grid import ComplexField, GridError, Medium, PlaneField, SourcePlane, region_slices
from .helmholtz import HelmholtzOperator, HelmholtzSettings, source_term
from .material import (DesignVariable, LensPatch, MaterialPair, binarize, embed_patch,
                       mixture)
from .objective import TargetSpec, correlation
from .propagation import ASPlan, angular_spectrum, extract_slice


@dataclass(frozen=True)
class Scenario:
    """Everything needed to turn a lens patch into a target-plane amplitude.

    ``background`` already contains any aberrator; the lens box at
    ``lens_offset`` is overwritten by the design. Axis 0 is the propagation
    axis; the source, lens and extraction plane are ordered along it.
    """

    background: Medium
    source: SourcePlane
    pair: MaterialPair
    lens_offset: tuple[int, ...]
    lens_shape: tuple[int, ...]
    extraction_index: int
    target: TargetSpec
    plan: ASPlan
    settings: HelmholtzSettings = HelmholtzSettings()

    def __post_init__(self):
        object.__setattr__(self, "lens_offset", tuple(int(o) for o in self.lens_offset))
        object.__setattr__(self, "lens_shape", tuple(int(n) for n in self.lens_shape))
        grid = self.grid
        if self.source.axis != 0:
            raise GridError("the source plane must be normal to axis 0")
        self.source.validate_on(grid)
        region_slices(self.lens_offset, self.lens_shape, grid.shape)
        w = grid.absorber_width
        for o, n, m in zip(self.lens_offset, self.lens_shape, grid.shape):
            if o < w or o + n > m - w:
                raise GridError("lens region reaches into the absorber")
        if not grid.in_interior(0, self.extraction_index):
            raise GridError("extraction plane lies in the absorber")
        if self.extraction_index < self.lens_offset[0] + self.lens_shape[0]:
            raise GridError("extraction plane must lie beyond the lens output face")
        if self.target.q0.shape != grid.transverse_shape:
            raise GridError(f"target shape {self.target.q0.shape} does not match plane {grid.transverse_shape}")
        if self.plan.shape != grid.transverse_shape or self.plan.dx != grid.dx:
            raise GridError("angular-spectrum plan does not match the grid")
        c_min = min(self.background.c_min, self.pair.material0.c, self.pair.material1.c)
        grid.check_sampling(c_min, self.source.frequency)

    @property
    def grid(self):
        return self.background.grid

    @property
    def omega(self) -> float:
        return self.source.omega

    def initial_design(self, seed: int = 0, spread: float = 0.1) -> DesignVariable:
        rng = np.random.default_rng(seed)
        gamma = rng.uniform(-spread, spread, size=self.lens_shape)
        return DesignVariable(gamma, self.pair, self.lens_offset, self.grid)

    def design(self, gamma) -> DesignVariable:
        return DesignVariable(gamma, self.pair, self.lens_offset, self.grid)

    def medium_with(self, patch: Optional[LensPatch]) -> Medium:
        return self.background if patch is None else embed_patch(self.background, patch)

    def with_target(self, target: TargetSpec) -> "Scenario":
        return replace(self, target=target)


class ForwardResult(NamedTuple):
    medium: Medium
    operator: HelmholtzOperator
    source: np.ndarray          # s, pressure-equation source
    u: np.ndarray               # transformed field P / sqrt(rho)
    pressure: ComplexField
    plane: PlaneField           # extraction plane
    target_field: PlaneField    # Q

    @property
    def amplitude(self) -> np.ndarray:
        return np.abs(self.target_field.values)


def simulate(scenario: Scenario, medium: Medium) -> ForwardResult:
    op = HelmholtzOperator(medium, scenario.omega, scenario.settings)
    s = source_term(medium, scenario.source)
    u = op.solve(op.rhs(s))
    pressure = ComplexField(medium.grid, op.sqrt_rho * u)
    plane = extract_slice(pressure, 0, scenario.extraction_index)
    target_field = angular_spectrum(scenario.plan, plane, scenario.target.depth)
    return ForwardResult(medium, op, s, u, pressure, plane, target_field)


def simulate_design(scenario: Scenario, design: DesignVariable, binary: bool = False,
                    threshold_gamma: float = 0.0) -> ForwardResult:
    patch = binarize(design, threshold_gamma) if binary else mixture(design)
    return simulate(scenario, scenario.medium_with(patch))


def target_amplitude(scenario: Scenario, medium: Medium) -> np.ndarray:
    return simulate(scenario, medium).amplitude


def binarization_error(design: DesignVariable, scenario: Scenario, threshold_gamma: float = 0.0) -> float:
    cont_patch, bin_patch = mixture(design), binarize(design, threshold_gamma)
    if all(np.array_equal(a, b) for a, b in zip(cont_patch[1:], bin_patch[1:])):
        return 0.0
    q0 = scenario.target.q0
    cont = simulate(scenario, scenario.medium_with(cont_patch))
    binary = simulate(scenario, scenario.medium_with(bin_patch))
    return abs(correlation(cont.amplitude, q0) - correlation(binary.amplitude, q0))
