"""Driven damped Duffing oscillator as the benchmark equation family.

The scalar form is ``x'' + delta x' + alpha x + beta x^3 = gamma
cos(omega t)`` with initial state ``(x0, 0)``.  In operator terms this
is ``g = [alpha, delta, 1]`` with a cubic nonlinearity of strength
``beta``, so the whole perturbation/transfer pipeline applies with
``q = 3`` and ``epsilon = beta``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .perturbation import PolynomialNonlinearODE

# Admissible instance ranges (uniform draws, open intervals).
PARAMETER_RANGES: dict[str, tuple[float, float]] = {
    "gamma": (0.5, 3.0),
    "omega": (0.5, 3.0),
    "alpha": (0.5, 4.5),
    "delta": (0.5, 4.5),
    "x0": (-3.0, 3.0),
}


@dataclass(frozen=True)
class HarmonicForcing:
    """Vectorized driving term ``amplitude * cos(frequency * t)``."""

    amplitude: float
    frequency: float

    def __call__(self, t: np.ndarray) -> np.ndarray:
        return self.amplitude * np.cos(self.frequency * np.asarray(t, dtype=np.float64))


@dataclass(frozen=True)
class DuffingParams:
    """One concrete oscillator instance (initial velocity is zero)."""

    delta: float
    alpha: float
    beta: float
    gamma: float
    omega: float
    x0: float

    def forcing(self) -> HarmonicForcing:
        return HarmonicForcing(amplitude=self.gamma, frequency=self.omega)

    def to_ode(self) -> PolynomialNonlinearODE:
        """View the oscillator as a degree-3 polynomial nonlinear ODE."""
        return PolynomialNonlinearODE(
            g=np.array([self.alpha, self.delta, 1.0]),
            q=3,
            epsilon=self.beta,
            forcing=self.forcing(),
            bc_value=self.x0,
            bc_derivatives=(0.0,),
        )

    def rhs(self):
        """First-order right-hand side ``u' = F(t, u)`` for integrators."""
        delta, alpha, beta = self.delta, self.alpha, self.beta
        gamma, omega = self.gamma, self.omega

        def f(t: float, u: np.ndarray) -> np.ndarray:
            x, v = u
            return np.array(
                [v, gamma * np.cos(omega * t) - delta * v - alpha * x - beta * x**3]
            )

        return f

    def initial_state(self) -> np.ndarray:
        return np.array([self.x0, 0.0])


def sample_params(rng: np.random.Generator, beta: float) -> DuffingParams:
    """Draw one instance uniformly from the admissible ranges.

    The nonlinearity strength ``beta`` is held fixed by the caller; the
    draw order (gamma, omega, alpha, delta, x0) is part of the
    reproducibility contract.
    """
    gamma = rng.uniform(*PARAMETER_RANGES["gamma"])
    omega = rng.uniform(*PARAMETER_RANGES["omega"])
    alpha = rng.uniform(*PARAMETER_RANGES["alpha"])
    delta = rng.uniform(*PARAMETER_RANGES["delta"])
    x0 = rng.uniform(*PARAMETER_RANGES["x0"])
    return DuffingParams(delta=delta, alpha=alpha, beta=beta, gamma=gamma, omega=omega, x0=x0)


def sample_many(rng: np.random.Generator, count: int, beta: float) -> list[DuffingParams]:
    return [sample_params(rng, beta) for _ in range(count)]
