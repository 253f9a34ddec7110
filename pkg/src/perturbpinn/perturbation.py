"""Perturbation expansion of ``Dx + eps*x^q = f`` into a linear cascade.

Writing the solution as a truncated power series ``x = sum_i eps^i x_i``
(orders ``i = 0..p``) and collecting powers of ``eps`` turns the single
nonlinear equation into ``p + 1`` linear equations ``D x_j = f_j``.  The
zeroth order keeps the original forcing, and every higher-order forcing
``f_j`` is a signed multinomial polynomial in the lower-order solutions
``x_0 .. x_{j-1}``, so the cascade can be solved strictly in order.

All operations in this module are pure functions; the per-level term
ordering (lexicographic in the exponent multi-index) fixes summation
order so repeated evaluations are bit-identical.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

MAX_DEGREE = 20  # exact-integer multinomial guard


@dataclass(frozen=True)
class PolynomialNonlinearODE:
    """A nonlinear ODE ``sum_j g_j x^(j) + epsilon * x^q = f(t)``.

    Parameters
    ----------
    g : array_like
        Operator coefficients ``g_0 .. g_m``; the order of the equation is
        ``m = len(g) - 1`` and ``g_m`` must be nonzero.
    q : int
        Degree of the polynomial nonlinearity, at least 2.
    epsilon : float
        Strength of the nonlinear term.
    forcing : callable
        Vectorized forcing ``f(t)``; must accept an ndarray of times.
    bc_value : float
        Boundary value ``x(0)``.
    bc_derivatives : tuple of float
        Boundary derivative values ``x^(j)(0)`` for ``j = 1 .. m-1``.
    """

    g: np.ndarray
    q: int
    epsilon: float
    forcing: Callable[[np.ndarray], np.ndarray]
    bc_value: float
    bc_derivatives: tuple[float, ...] = ()

    def __post_init__(self):
        g = np.atleast_1d(np.asarray(self.g, dtype=np.float64))
        object.__setattr__(self, "g", g)
        if g.ndim != 1 or g.size < 2:
            raise ValueError("g must hold at least two coefficients (m >= 1)")
        if g[-1] == 0.0:
            raise ValueError("leading operator coefficient g_m must be nonzero")
        if int(self.q) != self.q or self.q < 2:
            raise ValueError(f"nonlinearity degree must be an integer >= 2, got {self.q}")
        object.__setattr__(self, "q", int(self.q))
        object.__setattr__(self, "bc_derivatives", tuple(float(v) for v in self.bc_derivatives))
        if len(self.bc_derivatives) != self.m - 1:
            raise ValueError(
                f"expected {self.m - 1} boundary derivatives for an order-{self.m} "
                f"equation, got {len(self.bc_derivatives)}"
            )

    @property
    def m(self) -> int:
        """Order of the differential operator."""
        return self.g.size - 1

    def boundary_vector(self) -> np.ndarray:
        """Unsplit boundary vector ``[x(0), x'(0), ..., x^(m-1)(0)]``."""
        return np.array([self.bc_value, *self.bc_derivatives], dtype=np.float64)


@dataclass(frozen=True)
class ForcingTerm:
    """One signed monomial ``coefficient * prod_i x_i^exponents[i]``.

    The sign convention folds the leading minus of the cascade into
    ``coefficient``, so forcings evaluate as a plain sum of terms.
    """

    coefficient: float
    exponents: tuple[int, ...]

    def __str__(self) -> str:
        coeff = self.coefficient
        text = f"{int(coeff)}" if coeff == int(coeff) else repr(coeff)
        factors = [
            f"x{i}" if k == 1 else f"x{i}^{k}"
            for i, k in enumerate(self.exponents)
            if k > 0
        ]
        return "*".join([text, *factors])


@dataclass(frozen=True)
class CascadeSpec:
    """The ordered cascade of forcings for one expanded equation.

    ``terms[j]`` (``1 <= j <= p``) lists the monomials of ``f_j`` in
    lexicographic exponent order; ``terms[0]`` is empty because order
    zero keeps the original forcing.  ``bc_scale`` is the common factor
    ``1 / sum_{i=0}^p eps^i`` applied to every order's boundary values.
    """

    q: int
    p: int
    epsilon: float
    terms: tuple[tuple[ForcingTerm, ...], ...]
    bc_scale: float

    def to_text(self) -> str:
        """Render a human-readable, line-oriented serialization.

        One ``key = value`` line per scalar field, then one line per
        cascade order.  Frozen by golden-file tests, so the format only
        changes with the version header.
        """
        lines = [
            "cascade-spec v1",
            f"q = {self.q}",
            f"p = {self.p}",
            f"epsilon = {self.epsilon!r}",
            f"bc_scale = {self.bc_scale!r}",
            "order[0] = f(t)",
        ]
        for j in range(1, self.p + 1):
            body = " + ".join(str(term) for term in self.terms[j]) or "0"
            lines.append(f"order[{j}] = {body}")
        return "\n".join(lines) + "\n"


def enumerate_multi_indices(q: int, p: int, j: int) -> list[tuple[int, ...]]:
    """All exponent vectors feeding the order-``j`` forcing.

    Returns every nonnegative ``(k_0, ..., k_p)`` with ``sum_i k_i = q``
    and ``sum_i i*k_i = j - 1``, in ascending lexicographic order.  The
    weight constraint forces ``k_i = 0`` for ``i >= j``, which is what
    makes the cascade solvable order by order.
    """
    if q < 2:
        raise ValueError("q must be >= 2")
    if p < 0:
        raise ValueError("p must be >= 0")
    if not 1 <= j <= p:
        raise ValueError(f"order j must satisfy 1 <= j <= p, got j={j}, p={p}")

    target = j - 1
    out: list[tuple[int, ...]] = []

    def extend(i: int, remaining: int, weight: int, prefix: tuple[int, ...]):
        if i == p:
            if p * remaining == weight:
                out.append(prefix + (remaining,))
            return
        top = remaining if i == 0 else min(remaining, weight // i)
        for k in range(top + 1):
            w = weight - i * k
            # remaining positions i+1..p can contribute at most p per unit
            if w > (remaining - k) * p:
                continue
            extend(i + 1, remaining - k, w, prefix + (k,))

    extend(0, q, target, ())
    return out


def _multinomial(q: int, exponents: Sequence[int]) -> int:
    denom = 1
    for k in exponents:
        denom *= math.factorial(k)
    return math.factorial(q) // denom


def build_cascade(ode: PolynomialNonlinearODE, p: int) -> CascadeSpec:
    """Expand ``ode`` to order ``p`` and collect every forcing term.

    For each ``j`` in ``1..p`` the term list holds coefficients
    ``-q! / (k_0! k_1! ... k_p!)`` (multinomial theorem over the series
    powers, with the cascade's minus sign folded in), computed in exact
    integer arithmetic before conversion to float.  The shared boundary
    scale is ``1 / sum_i eps^i``.
    """
    if p < 0:
        raise ValueError("truncation order p must be >= 0")
    if ode.q > MAX_DEGREE:
        raise ValueError(f"nonlinearity degree above {MAX_DEGREE} is not supported")
    if abs(ode.epsilon) >= 1.0:
        warnings.warn(
            f"|epsilon| = {abs(ode.epsilon)} >= 1: the truncated expansion is "
            "not expected to converge; consider rescaling the equation",
            stacklevel=2,
        )
    denominator = float(sum(ode.epsilon**i for i in range(p + 1)))
    if denominator == 0.0:
        raise ValueError("sum of epsilon powers is zero; boundary split undefined")

    terms: list[tuple[ForcingTerm, ...]] = [()]
    for j in range(1, p + 1):
        level = tuple(
            ForcingTerm(float(-_multinomial(ode.q, k)), k)
            for k in enumerate_multi_indices(ode.q, p, j)
        )
        terms.append(level)
    return CascadeSpec(
        q=ode.q,
        p=p,
        epsilon=float(ode.epsilon),
        terms=tuple(terms),
        bc_scale=1.0 / denominator,
    )


def forcing_from_values(
    spec: CascadeSpec, j: int, values: Sequence[np.ndarray]
) -> np.ndarray:
    """Evaluate ``f_j`` from precomputed lower-order samples.

    ``values[i]`` holds ``x_i`` on the target time batch for every order
    ``i < j`` that appears in the level's terms (unused entries may be
    ``None``).  Terms are summed in their stored order.
    """
    if not 1 <= j <= spec.p:
        raise ValueError(f"order j must satisfy 1 <= j <= p, got j={j}")
    result = None
    for term in spec.terms[j]:
        prod = None
        for i, k in enumerate(term.exponents):
            if k == 0:
                continue
            if i >= len(values) or values[i] is None:
                raise ValueError(f"order {i} must be solved before forcing f_{j}")
            factor = np.asarray(values[i], dtype=np.float64) ** k
            prod = factor if prod is None else prod * factor
        contribution = term.coefficient if prod is None else term.coefficient * prod
        result = contribution if result is None else result + contribution
    if result is None:
        return np.zeros(np.shape(values[0]) if values else (), dtype=np.float64)
    return np.asarray(result, dtype=np.float64)


def evaluate_forcing(
    spec: CascadeSpec,
    j: int,
    solved: Sequence[Callable[[np.ndarray], np.ndarray]],
    t_batch: np.ndarray,
) -> np.ndarray:
    """Evaluate the order-``j`` forcing ``f_j`` on a time batch.

    ``solved`` maps order index to an evaluator for that order's
    solution; entries ``0 .. j-1`` must be present.  Each needed order is
    evaluated exactly once for the whole batch.
    """
    if not 1 <= j <= spec.p:
        raise ValueError(f"order j must satisfy 1 <= j <= p, got j={j}")
    t = np.atleast_1d(np.asarray(t_batch, dtype=np.float64))
    needed = {i for term in spec.terms[j] for i, k in enumerate(term.exponents) if k > 0}
    values: list[np.ndarray | None] = [None] * (max(needed) + 1 if needed else 1)
    for i in sorted(needed):
        if i >= len(solved) or solved[i] is None:
            raise ValueError(f"order {i} must be solved before forcing f_{j}")
        values[i] = np.asarray(solved[i](t), dtype=np.float64)
    if not needed:
        values[0] = np.zeros_like(t)
    return forcing_from_values(spec, j, values)


def split_boundary(ode: PolynomialNonlinearODE, spec: CascadeSpec) -> np.ndarray:
    """Per-order boundary vectors, shape ``(p + 1, m)``.

    Every order receives the same scaled vector
    ``[x(0), x'(0), ...] * bc_scale`` so that the epsilon-weighted
    recombination reproduces the original boundary values exactly.
    """
    base = ode.boundary_vector() * spec.bc_scale
    return np.tile(base, (spec.p + 1, 1))


def compose_solution(
    solutions: Sequence[Callable[[np.ndarray], np.ndarray]],
    epsilon: float,
    p: int,
    t_batch: np.ndarray,
) -> np.ndarray:
    """Recombine solved orders into ``sum_{i=0}^p eps^i x_i(t)``."""
    if len(solutions) != p + 1:
        raise ValueError(f"expected {p + 1} order solutions, got {len(solutions)}")
    t = np.atleast_1d(np.asarray(t_batch, dtype=np.float64))
    total = np.zeros_like(t)
    for i, solution in enumerate(solutions):
        total = total + (epsilon**i) * np.asarray(solution(t), dtype=np.float64)
    return total
