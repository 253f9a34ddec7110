"""High-accuracy reference integration for validating transferred solutions.

An explicit Dormand-Prince 5(4) embedded pair with adaptive steps
integrates the full nonlinear equation to tight tolerances.  Step
acceptance controls the error per unit step (the scaled local-error
estimate must stay below ``tol * h``), which makes the achieved global
error shrink proportionally to the requested tolerance instead of
sublinearly.  Requested output times are hit exactly by clamping the
step, never by interpolating inside a step.

This module is deliberately independent of the network/transfer code
path: it shares no basis, no grid convention, and no linear algebra with
the solver it checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .duffing import DuffingParams
from .errors import IntegrationError, StepLimitExceeded, TrajectoryBlowUp

# Dormand-Prince 5(4) coefficients.  B5 advances the solution; the
# difference row ERR = B5 - B4 gives the embedded local-error estimate.
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = np.array(
    [
        [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [1 / 5, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3 / 40, 9 / 40, 0.0, 0.0, 0.0, 0.0],
        [44 / 45, -56 / 15, 32 / 9, 0.0, 0.0, 0.0],
        [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0.0, 0.0],
        [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656, 0.0],
    ]
)
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)
_ERR = _B5 - _B4


@dataclass(frozen=True)
class IntegratorConfig:
    """Adaptive-step settings; defaults give reference-grade accuracy."""

    rel_tol: float = 1e-10
    abs_tol: float = 1e-10
    max_steps: int = 1_000_000
    max_state: float = 1e8
    safety: float = 0.9
    min_factor: float = 0.2
    max_factor: float = 5.0


@dataclass
class IntegrationResult:
    """Trajectory sampled on the requested grid plus step statistics."""

    t: np.ndarray
    u: np.ndarray
    steps: int
    rejected: int
    rhs_evaluations: int


def _initial_step(rhs, t0, u0, f0, config: IntegratorConfig) -> float:
    """Step-size warm start from local derivative magnitudes."""
    sc = config.abs_tol + config.rel_tol * np.abs(u0)
    d0 = np.sqrt(np.mean((u0 / sc) ** 2))
    d1 = np.sqrt(np.mean((f0 / sc) ** 2))
    h0 = 1e-6 if d1 < 1e-5 or d0 < 1e-5 else 0.01 * d0 / d1
    f1 = rhs(t0 + h0, u0 + h0 * f0)
    d2 = np.sqrt(np.mean(((f1 - f0) / sc) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1)


def integrate(rhs, u0, t_grid, config: IntegratorConfig = IntegratorConfig()):
    """Integrate ``u' = rhs(t, u)`` from ``t_grid[0]``, sampling the grid.

    Parameters
    ----------
    rhs : callable
        Right-hand side ``f(t, u) -> ndarray``.
    u0 : array_like
        State at ``t_grid[0]``.
    t_grid : array_like
        Strictly increasing output times; the first entry is the initial
        time and every entry is hit exactly by the stepper.

    Raises
    ------
    StepLimitExceeded
        More step attempts than ``config.max_steps``.
    TrajectoryBlowUp
        State magnitude exceeded ``config.max_state``.
    IntegrationError
        Step size underflowed (the problem is too stiff for an explicit
        method at this tolerance).
    """
    t_grid = np.atleast_1d(np.asarray(t_grid, dtype=np.float64))
    if t_grid.size < 2 or np.any(np.diff(t_grid) <= 0):
        raise ValueError("output grid must be strictly increasing with >= 2 points")
    u = np.asarray(u0, dtype=np.float64).copy()
    dim = u.size
    out = np.empty((t_grid.size, dim))
    out[0] = u
    t = float(t_grid[0])
    f = np.asarray(rhs(t, u), dtype=np.float64)
    evals = 2  # initial slope + warm-start probe
    h = _initial_step(rhs, t, u, f, config)
    steps = 0
    rejected = 0
    attempts = 0
    k = np.empty((7, dim))
    for target_index in range(1, t_grid.size):
        target = float(t_grid[target_index])
        while t < target:
            if attempts >= config.max_steps:
                raise StepLimitExceeded(
                    f"exceeded {config.max_steps} step attempts at t = {t}"
                )
            h_step = min(h, target - t)
            if h_step <= 16 * np.finfo(np.float64).eps * max(abs(t), 1.0):
                raise IntegrationError(f"step size underflow at t = {t}")
            attempts += 1
            k[0] = f
            for s in range(1, 6):
                k[s] = rhs(t + _C[s] * h_step, u + h_step * (_A[s, :s] @ k[:s]))
            u_new = u + h_step * (_B5[:6] @ k[:6])
            k[6] = rhs(t + h_step, u_new)
            evals += 6
            err = h_step * (_ERR @ k)
            sc = config.abs_tol + config.rel_tol * np.maximum(np.abs(u), np.abs(u_new))
            err_norm = float(np.sqrt(np.mean((err / sc) ** 2)))
            if np.isfinite(err_norm) and err_norm <= h_step:
                t = t + h_step
                u = u_new
                f = k[6]  # first stage of the next step (FSAL)
                steps += 1
                if np.max(np.abs(u)) > config.max_state:
                    raise TrajectoryBlowUp(
                        f"state magnitude exceeded {config.max_state} at t = {t}"
                    )
            else:
                rejected += 1
            if not np.isfinite(err_norm):
                factor = config.min_factor
            elif err_norm == 0.0:
                factor = config.max_factor
            else:
                factor = config.safety * (h_step / err_norm) ** 0.25
                factor = min(config.max_factor, max(config.min_factor, factor))
            h = h_step * factor
        out[target_index] = u
    return IntegrationResult(
        t=t_grid, u=out, steps=steps, rejected=rejected, rhs_evaluations=evals
    )


def integrate_duffing(
    params: DuffingParams,
    t_grid,
    config: IntegratorConfig = IntegratorConfig(),
    u0: np.ndarray | None = None,
) -> IntegrationResult:
    """Reference trajectory of a Duffing instance on an output grid.

    ``u0`` overrides the instance's initial state ``(x0, 0)``.
    """
    if u0 is None:
        u0 = params.initial_state()
    return integrate(params.rhs(), u0, t_grid, config)


@dataclass(frozen=True)
class ErrorMetrics:
    """Discrepancy between an approximate and a reference trajectory."""

    l_inf: float
    rel_l2: float


def compare(approx: np.ndarray, reference: np.ndarray) -> ErrorMetrics:
    """Pointwise metrics; the relative L2 norm guards a zero reference."""
    a = np.asarray(approx, dtype=np.float64)
    b = np.asarray(reference, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    diff = a - b
    denom = max(float(np.linalg.norm(b)), 1e-12)
    return ErrorMetrics(
        l_inf=float(np.max(np.abs(diff))),
        rel_l2=float(np.linalg.norm(diff)) / denom,
    )
