"""Closed-form transfer of the trained trunk to new equation instances.

With the trunk frozen, every cascade order is linear in its head weights
``w``: the physics loss of one order is an exact quadratic

    Q(w) = (1/N) sum_t ||C_t w - F(t)||^2 + ||H(0) w - u*||^2,
    C_t = B H'(t) + A H(t),

minimized by the normal equations ``M w = b`` with ``M`` half the
Hessian of ``Q``.  All orders of one instance share ``A`` and ``B``, so
``M`` is assembled and factorized exactly once per instance and only the
right-hand side changes down the cascade.  No gradient descent happens
here; solving a new instance costs one Cholesky factorization plus one
triangular solve per order.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import NonFiniteError, SingularNormalMatrixError
from .network import TrunkParams, TrunkSpec, evaluate
from .perturbation import (
    CascadeSpec,
    PolynomialNonlinearODE,
    build_cascade,
    forcing_from_values,
)
from .reduction import FirstOrderSystem, reduce_operator

logger = logging.getLogger(__name__)

DEFAULT_GRID_POINTS = 400
COND_LIMIT = 1e12
RIDGE_SCALE = 1e-10
RESIDUAL_TOL = 1e-8


@dataclass(frozen=True)
class FrozenTrunk:
    """Trunk basis tabulated once on a fixed transfer grid.

    ``H``/``H_dot`` are the basis and its time derivative on the grid;
    ``H0`` is the basis at ``t = 0`` for boundary terms.
    """

    spec: TrunkSpec
    params: TrunkParams
    t: np.ndarray
    H: np.ndarray
    H_dot: np.ndarray
    H0: np.ndarray

    @property
    def n(self) -> int:
        return self.t.size

    def basis_at(self, t: np.ndarray):
        """Evaluate ``H`` and ``dH/dt`` off-grid (for plotting/comparison)."""
        batch = evaluate(self.spec, self.params, t)
        return batch.H, batch.H_dot


def midpoint_grid(domain: tuple[float, float], n: int) -> np.ndarray:
    """Midpoints of ``n`` equal subintervals of ``domain``."""
    edges = np.linspace(domain[0], domain[1], n + 1)
    return 0.5 * (edges[:-1] + edges[1:])


def freeze_trunk(
    spec: TrunkSpec,
    params: TrunkParams,
    domain: tuple[float, float] = (0.0, 5.0),
    n: int = DEFAULT_GRID_POINTS,
) -> FrozenTrunk:
    """Tabulate the trunk on interval midpoints plus the boundary point."""
    t = midpoint_grid(domain, n)
    batch = evaluate(spec, params, t)
    boundary = evaluate(spec, params, np.array([0.0]))
    return FrozenTrunk(
        spec=spec, params=params, t=t, H=batch.H, H_dot=batch.H_dot, H0=boundary.H[0]
    )


class NormalEquations:
    """Normal-equation solver for one lifted operator on one frozen trunk.

    The matrix ``M = (1/N) sum_t C_t^T C_t + H0^T H0`` is assembled at
    construction; the Cholesky factor is computed lazily on first solve
    and reused afterwards (``factorization_count`` tracks this).  Nearly
    singular systems get a single relative ridge before factorization.
    """

    def __init__(
        self,
        trunk: FrozenTrunk,
        system: FirstOrderSystem,
        cond_limit: float = COND_LIMIT,
        ridge_scale: float = RIDGE_SCALE,
    ):
        self.trunk = trunk
        self.system = system
        self.cond_limit = cond_limit
        self.ridge_scale = ridge_scale
        n, _, h = trunk.H.shape
        # C_t = B H'(t) + A H(t), flattened over (time, row) for BLAS
        C = np.einsum("ij,njh->nih", system.B, trunk.H_dot)
        C += np.einsum("ij,njh->nih", system.A, trunk.H)
        self._C = C
        self._flat = C.reshape(n * system.m, h)
        M = (self._flat.T @ self._flat) / n + trunk.H0.T @ trunk.H0
        asym = np.max(np.abs(M - M.T))
        scale = np.max(np.abs(M))
        if scale > 0 and asym > 1e-12 * scale:
            raise SingularNormalMatrixError(
                f"normal matrix asymmetry {asym:.3e} exceeds round-off budget"
            )
        self.matrix = 0.5 * (M + M.T)
        self.factorization_count = 0
        self.condition: float | None = None
        self.ridge = 0.0
        self._factor = None

    def _factorize(self):
        M = self.matrix
        self.condition = float(np.linalg.cond(M))
        if not np.isfinite(self.condition) or self.condition > self.cond_limit:
            self.ridge = self.ridge_scale * np.trace(M) / M.shape[0]
            M = M + self.ridge * np.eye(M.shape[0])
        try:
            self._factor = scipy.linalg.cho_factor(M)
        except scipy.linalg.LinAlgError:
            if self.ridge == 0.0:
                self.ridge = self.ridge_scale * np.trace(M) / M.shape[0]
                M = M + self.ridge * np.eye(M.shape[0])
                try:
                    self._factor = scipy.linalg.cho_factor(M)
                except scipy.linalg.LinAlgError as exc:
                    raise SingularNormalMatrixError(
                        "normal matrix is not positive definite even after ridge",
                        condition=self.condition,
                    ) from exc
            else:
                raise SingularNormalMatrixError(
                    "normal matrix is not positive definite even after ridge",
                    condition=self.condition,
                )
        self._solved_matrix = M
        self.factorization_count += 1

    def right_hand_side(self, f_values: np.ndarray, u_star: np.ndarray) -> np.ndarray:
        """Assemble ``b = (1/N) sum_t C_t^T F(t) + H0^T u*``.

        The lifted forcing has a single nonzero (last) component, so only
        the last row block of ``C`` contributes.
        """
        f = np.asarray(f_values, dtype=np.float64)
        n = self.trunk.n
        if f.shape != (n,):
            raise ValueError(f"forcing samples must have shape ({n},), got {f.shape}")
        b = (self._C[:, -1, :].T @ f) / n
        b += self.trunk.H0.T @ np.asarray(u_star, dtype=np.float64)
        return b

    def solve(self, f_values: np.ndarray, u_star: np.ndarray) -> np.ndarray:
        """Head weights minimizing the order's quadratic loss.

        One iterative-refinement step is applied if the linear-system
        residual is above tolerance; a persistent violation raises.
        """
        if self._factor is None:
            self._factorize()
        b = self.right_hand_side(f_values, u_star)
        w = scipy.linalg.cho_solve(self._factor, b)
        residual = b - self._solved_matrix @ w
        tol = RESIDUAL_TOL * (1.0 + float(np.linalg.norm(w)))
        if np.linalg.norm(residual) > tol:
            w = w + scipy.linalg.cho_solve(self._factor, residual)
            residual = b - self._solved_matrix @ w
            if np.linalg.norm(residual) > tol:
                raise SingularNormalMatrixError(
                    "normal-equation residual did not reach tolerance after refinement",
                    condition=self.condition if self.condition is not None else np.inf,
                )
        return w

    def predict(self, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Lifted state and its derivative on the grid for head ``w``."""
        return self.trunk.H @ w, self.trunk.H_dot @ w


@dataclass
class TransferSolution:
    """Solved cascade for one instance: one head vector per order.

    ``weights[i]`` solves order ``i``; the composed solution is
    ``x(t) = sum_i eps^i (H(t) w_i)[0]``.
    """

    ode: PolynomialNonlinearODE
    cascade: CascadeSpec
    p: int
    trunk: FrozenTrunk
    system: FirstOrderSystem
    weights: np.ndarray
    factorizations: int
    solve_seconds: float
    order_seconds: tuple[float, ...] = ()
    condition: float | None = None

    def order_scalar_on_grid(self, i: int) -> np.ndarray:
        """Scalar component of the order-``i`` solution on the grid."""
        return (self.trunk.H @ self.weights[i])[:, 0]

    def state(self, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Composed lifted state and derivative at arbitrary times."""
        H, H_dot = self.trunk.basis_at(t)
        eps_powers = self.cascade.epsilon ** np.arange(self.p + 1)
        combined = self.weights[: self.p + 1].T @ eps_powers
        return H @ combined, H_dot @ combined

    def scalar(self, t: np.ndarray) -> np.ndarray:
        """Composed scalar solution ``x(t)`` at arbitrary times."""
        return self.state(t)[0][..., 0]

    def state_on_grid(self) -> tuple[np.ndarray, np.ndarray]:
        eps_powers = self.cascade.epsilon ** np.arange(self.p + 1)
        combined = self.weights[: self.p + 1].T @ eps_powers
        return self.trunk.H @ combined, self.trunk.H_dot @ combined


def solve_cascade(
    ode: PolynomialNonlinearODE,
    p: int,
    trunk: FrozenTrunk,
    cascade: CascadeSpec | None = None,
) -> TransferSolution:
    """Solve one instance to truncation order ``p`` in closed form.

    A caller-supplied ``cascade`` (built at an equal or higher order)
    overrides the default; its boundary scale is then used as-is, which
    keeps already-solved orders unchanged when extending ``p``.
    """
    started = time.perf_counter()
    if cascade is None:
        cascade = build_cascade(ode, p)
    if cascade.p < p:
        raise ValueError(f"cascade was built to order {cascade.p} < requested {p}")
    if cascade.q != ode.q:
        raise ValueError("cascade degree does not match the equation")
    system = reduce_operator(ode.g)
    if system.m != trunk.spec.m:
        raise ValueError(
            f"equation order {system.m} does not match trunk basis rows {trunk.spec.m}"
        )
    normal = NormalEquations(trunk, system)
    u_star = ode.boundary_vector() * cascade.bc_scale
    weights = np.empty((p + 1, trunk.spec.h))
    scalar_orders: list[np.ndarray] = []
    order_seconds: list[float] = []
    for j in range(p + 1):
        order_start = time.perf_counter()
        if j == 0:
            f_j = np.asarray(ode.forcing(trunk.t), dtype=np.float64)
        else:
            f_j = forcing_from_values(cascade, j, scalar_orders)
        weights[j] = normal.solve(f_j, u_star)
        if not np.all(np.isfinite(weights[j])):
            raise NonFiniteError(
                f"order-{j} head weights are non-finite", location="cascade solve"
            )
        scalar_orders.append((trunk.H @ weights[j])[:, 0])
        order_seconds.append(time.perf_counter() - order_start)
        logger.debug("order %d solved in %.3e s", j, order_seconds[-1])
    elapsed = time.perf_counter() - started
    return TransferSolution(
        ode=ode,
        cascade=cascade,
        p=p,
        trunk=trunk,
        system=system,
        weights=weights,
        factorizations=normal.factorization_count,
        solve_seconds=elapsed,
        order_seconds=tuple(order_seconds),
        condition=normal.condition,
    )


def assemble_normal_matrix(trunk: FrozenTrunk, system: FirstOrderSystem) -> NormalEquations:
    """Build (but do not yet factorize) the normal equations."""
    return NormalEquations(trunk, system)


def solve_head(
    normal: NormalEquations, f_values: np.ndarray, u_star: np.ndarray
) -> np.ndarray:
    """Closed-form head weights for one forcing/boundary pair."""
    return normal.solve(f_values, u_star)


def residual_loss(solution: TransferSolution, t: np.ndarray | None = None) -> float:
    """Physics loss of the composed solution against the full equation.

    Mean squared scalar residual ``sum_j g_j x^(j) + eps x^q - f`` over
    the grid (default: the transfer grid) plus the squared boundary
    error of the lifted state.  The highest derivative ``x^(m)`` is read
    from the derivative of the lifted state's last component, avoiding a
    second differentiation of the trunk.  This is the quantity whose
    decay with the truncation order exhibits the elbow.
    """
    ode = solution.ode
    if t is None:
        t = solution.trunk.t
        u, u_dot = solution.state_on_grid()
    else:
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        u, u_dot = solution.state(t)
    derivs = [u[:, j] for j in range(u.shape[1])] + [u_dot[:, -1]]
    r = sum(g_j * d for g_j, d in zip(ode.g, derivs))
    r = r + ode.epsilon * u[:, 0] ** ode.q - ode.forcing(t)
    eps_powers = solution.cascade.epsilon ** np.arange(solution.p + 1)
    combined = solution.weights[: solution.p + 1].T @ eps_powers
    boundary = solution.trunk.H0 @ combined - ode.boundary_vector()
    return float(np.mean(r * r) + np.dot(boundary, boundary))
