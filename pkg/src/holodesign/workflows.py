"""End-to-end flows shared by the command line and the acceptance tests:
volumetric design, thin-element baselines and full-wave evaluation."""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Callable, NamedTuple, Optional

import numpy as np

from .config import ConfigError, ScenarioConfig, build_scenario, loss_config
from .grid import Medium, homogeneous_medium, make_grid, disc_mask
from .material import LensPatch, Material, binarize, binarization_fraction, mixture
from .objective import cnr, correlation, find_target_depth
from .optim import OptimizeResult, optimize
from .propagation import angular_spectrum
from .scenario import Scenario, simulate
from .grid import PlaneField
from .thin_element import (PhaseMap, ThicknessMap, iasa_design, phase_conjugate_design, phase_to_thickness,
                           retardation, thickness_to_patch)

log = logging.getLogger(__name__)


class Evaluation(NamedTuple):
    correlation: float
    cnr: float
    amplitude: np.ndarray


def evaluate_medium(scenario: Scenario, medium: Medium) -> Evaluation:
    q = simulate(scenario, medium).amplitude
    return Evaluation(correlation(q, scenario.target.q0), cnr(q, scenario.target.mask), q)


def evaluate_patch(scenario: Scenario, patch: Optional[LensPatch]) -> Evaluation:
    return evaluate_medium(scenario, scenario.medium_with(patch))


def run_design(cfg: ScenarioConfig, scenario: Optional[Scenario] = None,
               callback: Optional[Callable] = None, n_iterations: Optional[int] = None) -> OptimizeResult:
    scenario = scenario or build_scenario(cfg)
    adam = cfg.adam if n_iterations is None else replace(cfg.adam, n_iterations=n_iterations)
    opt = cfg["optimizer"]
    initial = scenario.initial_design(cfg.seed, opt["init_spread"])
    return optimize(scenario, adam, opt["checkpoint_every"], loss_config(cfg, scenario), cfg.seed,
                    initial=initial, callback=callback)


class ThinElementResult(NamedTuple):
    phase: PhaseMap          # field phase wanted on the hologram plane
    thickness: ThicknessMap
    patch: LensPatch


def _lens_material(cfg: ScenarioConfig, scenario: Scenario) -> Material:
    pair = scenario.pair
    return pair.material1 if cfg["thin_element"]["lens_material"] == 1 else pair.material0


def _hologram_aperture(cfg: ScenarioConfig, scenario: Scenario) -> np.ndarray:
    return disc_mask(scenario.grid.transverse_shape, scenario.grid.dx, cfg["source"]["diameter"])


def _to_patch(cfg: ScenarioConfig, scenario: Scenario, phase: PhaseMap) -> ThinElementResult:
    lens = _lens_material(cfg, scenario)
    bg = cfg.background
    t_max = scenario.lens_shape[0] * scenario.grid.dx
    try:
        thickness = phase_to_thickness(retardation(phase), lens.c, bg.c, cfg.frequency, t_max)
    except ValueError as err:
        raise ConfigError(f"lens.thickness too small for a thin element: {err}") from err
    # the thickness map covers the whole plane; keep only the lens footprint
    sl = tuple(slice(o, o + n) for o, n in zip(scenario.lens_offset[1:], scenario.lens_shape[1:]))
    t_lens = ThicknessMap(thickness.dx, thickness.thickness[sl], t_max)
    patch = thickness_to_patch(t_lens, scenario.lens_offset, scenario.lens_shape[0], lens, bg)
    return ThinElementResult(phase, thickness, patch)


def hologram_distance(scenario: Scenario) -> float:
    """Distance from the lens output face to the target plane."""
    exit_face = scenario.lens_offset[0] + scenario.lens_shape[0] - 0.5
    return scenario.target.depth + (scenario.extraction_index - exit_face) * scenario.grid.dx


def thin_element_iasa(cfg: ScenarioConfig, scenario: Scenario,
                      history: Optional[list] = None) -> ThinElementResult:
    """IASA phase retrieval from the lens output face to the target through
    the homogeneous background, uniform piston amplitude over the source
    aperture."""
    aperture = _hologram_aperture(cfg, scenario)
    amp = cfg["source"]["amplitude"] * aperture.astype(float)
    phase = iasa_design(scenario.target.q0, amp, hologram_distance(scenario), cfg["thin_element"]["n_iter"],
                        scenario.plan, history=history)
    return _to_patch(cfg, scenario, phase)


def thin_element_phase_conjugate(cfg: ScenarioConfig, scenario: Scenario) -> ThinElementResult:
    """Back-propagate the target through the lens-free scenario (including
    any aberrator) and conjugate on the lens output face."""
    grid = scenario.grid
    dx = grid.dx
    exit_index = scenario.lens_offset[0] + scenario.lens_shape[0]
    distance = hologram_distance(scenario)
    target_index = int(round(exit_index - 0.5 + distance / dx))
    n_z = target_index + 1 + 4 + grid.absorber_width
    shape = (max(n_z, grid.shape[0]),) + grid.transverse_shape
    ext_grid = make_grid(shape, dx, grid.absorber_width)
    bg = cfg.background
    ext = homogeneous_medium(ext_grid, bg.c, bg.rho, bg.alpha)
    arrays = {}
    inner = grid.shape[0] - grid.absorber_width
    for name in ("c", "rho", "alpha"):
        arr = np.array(getattr(ext, name))
        arr[:inner] = getattr(scenario.background, name)[:inner]
        arrays[name] = arr
    ext = Medium(ext_grid, **arrays)
    # the lens box is background here: no lens during back-propagation
    phase = phase_conjugate_design(scenario.target.q0, ext, cfg.frequency, exit_index, target_index,
                                   _hologram_aperture(cfg, scenario), scenario.settings)
    return _to_patch(cfg, scenario, phase)


def depth_sweep(scenario: Scenario, medium: Medium, span: float, n_planes: int):
    """Target-plane amplitudes at depths ``target.depth +- span`` and the
    depth of best correlation."""
    fwd = simulate(scenario, medium)
    depths = scenario.target.depth + np.linspace(-span, span, n_planes)
    depths = depths[depths >= 0]
    planes = [np.abs(angular_spectrum(scenario.plan, fwd.plane, d).values) for d in depths]
    best, corr = find_target_depth(planes, depths, scenario.target.q0)
    return depths, planes, best, corr
