"""Adjoint-state gradients of the hologram loss and the Adam design loop.

For the transformed field ``u`` with ``A(theta) u = -b(theta)`` and
``P = sqrt(rho) u``, a target-plane sensitivity ``g_Q`` (so that
``dl = Re <g_Q, dQ>``) is pulled back to the volume as
``g_P = S^T AS_d^H g_Q``. One adjoint solve ``A^H lam = sqrt(rho) g_P`` then
gives

    dl = Re sum[ -conj(lam) (d kappa2 - dW) u - conj(lam) db + conj(g_P) u d sqrt(rho) ]

which is expanded per material property below and chained through the
mixture model to gamma.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from . import stencil
from .helmholtz import NonConvergence
from .material import DesignVariable, binarization_fraction, mixture, mixture_derivative
from .objective import LossConfig, loss_and_grad
from .propagation import angular_spectrum, angular_spectrum_adjoint, inject_slice
from .grid import PlaneField
from .scenario import ForwardResult, Scenario, binarization_error, simulate

log = logging.getLogger(__name__)

NAMED_CHECKPOINTS = (30, 50, 110, 190, 450)


class SolverFailure(RuntimeError):
    """A forward or adjoint Helmholtz solve did not converge."""

    def __init__(self, stage: str, cause: NonConvergence, checkpoints=()):
        super().__init__(f"{stage} solve failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.checkpoints = list(checkpoints)


# -- gradients ------------------------------------------------------------------

def medium_gradient(fwd: ForwardResult, scenario: Scenario, g_target: np.ndarray):
    """Pull a target-plane sensitivity back to d(loss)/d(c, rho, alpha) on
    the full grid."""
    op, u, medium = fwd.operator, fwd.u, fwd.medium
    plane = angular_spectrum_adjoint(scenario.plan, PlaneField.from_array(g_target, scenario.grid.dx),
                                     scenario.target.depth)
    g_p = inject_slice(plane.values, scenario.grid.shape, 0, scenario.extraction_index)
    sqrt_rho = op.sqrt_rho
    try:
        lam = op.solve_adjoint(sqrt_rho * g_p)
    except NonConvergence as err:
        raise SolverFailure("adjoint", err) from err

    omega = op.omega
    c, rho = medium.c, medium.rho
    k = omega / c + 1j * medium.alpha
    lu = np.conj(lam) * u
    d_c = np.real(lu * (2 * k * omega / c**2 + 2j * op.absorber * omega**2 / c**3))
    d_alpha = np.real(-lu * 2j * k)
    inv_sqrt = 1.0 / sqrt_rho
    lap_a = stencil.apply_laplacian(inv_sqrt, scenario.grid.dx)
    b_src = fwd.source
    d_sqrt = np.real(lu * lap_a + np.conj(g_p) * u)
    d_inv_sqrt = np.real(stencil.apply_laplacian(sqrt_rho * lu, scenario.grid.dx) - np.conj(lam) * b_src)
    d_rho = d_sqrt * sqrt_rho / (2 * rho) - d_inv_sqrt * inv_sqrt / (2 * rho)
    return d_c, d_rho, d_alpha


def gamma_gradient(design: DesignVariable, medium_grads) -> np.ndarray:
    sl = design.lens_slices
    dtheta = mixture_derivative(design)
    return sum(g[sl] * dt for g, dt in zip(medium_grads, dtheta))


def target_sensitivity(fwd: ForwardResult, scenario: Scenario, cfg: LossConfig):
    q = fwd.amplitude
    value, dq = loss_and_grad(q, scenario.target, cfg)
    Q = fwd.target_field.values
    with np.errstate(invalid="ignore", divide="ignore"):
        phase = np.where(q > 0, Q / np.where(q > 0, q, 1), 0)
    return value, dq * phase


def _forward(scenario: Scenario, design: DesignVariable) -> ForwardResult:
    try:
        return simulate(scenario, scenario.medium_with(mixture(design)))
    except NonConvergence as err:
        raise SolverFailure("forward", err) from err


def loss_and_gradient(design: DesignVariable, scenario: Scenario, cfg: LossConfig = LossConfig()):
    """Loss of the continuous design and its gradient with respect to gamma."""
    fwd = _forward(scenario, design)
    value, g_target = target_sensitivity(fwd, scenario, cfg)
    grads = medium_gradient(fwd, scenario, g_target)
    return value, gamma_gradient(design, grads)


def linearized_target(design: DesignVariable, scenario: Scenario, dgamma: np.ndarray) -> np.ndarray:
    """Tangent-linear map dgamma -> dQ on the target plane."""
    fwd = _forward(scenario, design)
    op, u, medium = fwd.operator, fwd.u, fwd.medium
    sl = design.lens_slices
    dc, drho, dalpha = (np.zeros(scenario.grid.shape) for _ in range(3))
    for full, part in zip((dc, drho, dalpha), mixture_derivative(design)):
        full[sl] = part * dgamma
    omega = op.omega
    c = medium.c
    k = omega / c + 1j * medium.alpha
    d_kappa2 = 2 * k * (-omega / c**2) * dc + 2j * k * dalpha - 2j * op.absorber * omega**2 / c**3 * dc
    sqrt_rho, inv_sqrt = op.sqrt_rho, 1.0 / op.sqrt_rho
    d_sqrt = drho / (2 * sqrt_rho)
    d_inv = -drho * inv_sqrt / (2 * medium.rho)
    lap_a = stencil.apply_laplacian(inv_sqrt, scenario.grid.dx)
    dW = d_sqrt * lap_a + sqrt_rho * stencil.apply_laplacian(d_inv, scenario.grid.dx)
    db = fwd.source * d_inv
    du = op.solve((d_kappa2 - dW) * u + db)
    dP = d_sqrt * u + sqrt_rho * du
    plane = np.take(dP, scenario.extraction_index, axis=0)
    return angular_spectrum(scenario.plan, PlaneField.from_array(plane, scenario.grid.dx),
                            scenario.target.depth).values


def adjoint_target(design: DesignVariable, scenario: Scenario, v: np.ndarray) -> np.ndarray:
    """Transpose of :func:`linearized_target` in the real inner product
    ``Re <dQ, v>``."""
    fwd = _forward(scenario, design)
    return gamma_gradient(design, medium_gradient(fwd, scenario, v))


# -- Adam -----------------------------------------------------------------------

@dataclass(frozen=True)
class AdamConfig:
    learning_rate: float = 0.4
    beta1: float = 0.9
    beta2: float = 0.9
    epsilon: float = 1e-8
    n_iterations: int = 500

    def __post_init__(self):
        if not 0 <= self.beta1 < 1 or not 0 <= self.beta2 < 1:
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if self.learning_rate <= 0 or self.epsilon <= 0:
            raise ValueError("learning rate and epsilon must be positive")
        if self.n_iterations < 0:
            raise ValueError("n_iterations must be >= 0")


@dataclass(frozen=True)
class OptimState:
    gamma: np.ndarray
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    loss_history: tuple = ()

    @classmethod
    def start(cls, gamma) -> "OptimState":
        gamma = np.array(gamma, dtype=float)
        return cls(gamma, np.zeros_like(gamma), np.zeros_like(gamma), 0, ())


def adam_step(state: OptimState, gradient, cfg: AdamConfig, loss_value: Optional[float] = None) -> OptimState:
    g = np.asarray(gradient, dtype=float)
    if g.shape != state.gamma.shape:
        raise ValueError(f"gradient shape {g.shape} does not match gamma {state.gamma.shape}")
    if not np.all(np.isfinite(g)):
        raise ValueError("non-finite gradient")
    t = state.step_count + 1
    m = cfg.beta1 * state.first_moment + (1 - cfg.beta1) * g
    v = cfg.beta2 * state.second_moment + (1 - cfg.beta2) * g * g
    m_hat = m / (1 - cfg.beta1**t)
    v_hat = v / (1 - cfg.beta2**t)
    gamma = state.gamma - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.epsilon)
    history = state.loss_history + ((loss_value,) if loss_value is not None else ())
    return OptimState(gamma, m, v, t, history)


class Checkpoint(NamedTuple):
    iteration: int
    gamma: np.ndarray
    loss: float
    binarization_error: Optional[float] = None


def checkpoint_iterations(n_iterations: int, every: int) -> list[int]:
    its = set(i for i in NAMED_CHECKPOINTS if i <= n_iterations)
    if every > 0:
        its.update(range(every, n_iterations + 1, every))
    if n_iterations > 0:
        its.add(n_iterations)
    return sorted(its)


class OptimizeResult(NamedTuple):
    design: DesignVariable
    checkpoints: list
    loss_history: list


def optimize(scenario: Scenario, cfg: AdamConfig = AdamConfig(), checkpoint_every: int = 10,
             loss_cfg: LossConfig = LossConfig(), seed: int = 0,
             initial: Optional[DesignVariable] = None,
             callback: Optional[Callable[[int, float, np.ndarray], None]] = None) -> OptimizeResult:
    """Run ``cfg.n_iterations`` Adam steps from a seeded random start.

    Checkpoint ``i`` holds gamma after ``i`` steps; its loss is the loss
    evaluated at that gamma (taken from the next gradient evaluation, or one
    extra forward solve for the final iterate).
    """
    design = initial if initial is not None else scenario.initial_design(seed)
    state = OptimState.start(design.gamma)
    wanted = set(checkpoint_iterations(cfg.n_iterations, checkpoint_every))
    checkpoints: list[Checkpoint] = []
    history: list[float] = []
    pending: Optional[tuple[int, np.ndarray]] = None
    try:
        for it in range(cfg.n_iterations):
            value, grad = loss_and_gradient(design.with_gamma(state.gamma), scenario, loss_cfg)
            history.append(value)
            if pending is not None:
                checkpoints.append(Checkpoint(pending[0], pending[1], value))
                pending = None
            if callback is not None:
                callback(it, value, state.gamma)
            state = adam_step(state, grad, cfg, value)
            if state.step_count in wanted:
                pending = (state.step_count, state.gamma.copy())
        if pending is not None:
            fwd = _forward(scenario, design.with_gamma(pending[1]))
            value, _ = target_sensitivity(fwd, scenario, loss_cfg)
            checkpoints.append(Checkpoint(pending[0], pending[1], value))
    except SolverFailure as err:
        err.checkpoints = checkpoints
        raise
    return OptimizeResult(design.with_gamma(state.gamma), checkpoints, history)


def binarization_trajectory(checkpoints: Sequence[Checkpoint], scenario: Scenario):
    """(iteration, binarization error, saturated fraction) per checkpoint."""
    if len(checkpoints) == 0:
        raise ValueError("no checkpoints")
    rows = []
    for cp in checkpoints:
        design = scenario.design(cp.gamma)
        rows.append((cp.iteration, binarization_error(design, scenario), binarization_fraction(cp.gamma)))
    return rows
