"""Reduction of an order-``m`` linear ODE to a first-order system.

The scalar operator ``sum_j g_j x^(j)`` acting on ``x`` becomes a
residual ``B u' + A u - F`` on the lifted state
``u = [x, x', ..., x^(m-1)]``.  ``B`` carries the leading coefficient
``g_m`` in its last diagonal slot, ``A`` chains the lifted components
through its superdiagonal and holds ``g_0 .. g_{m-1}`` in its last row,
and ``F`` places the scalar forcing in the last component.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class FirstOrderSystem:
    """Matrices of the lifted system ``B u' + A u = F``.

    Attributes
    ----------
    A, B : ndarray, shape (m, m)
        Constant system matrices.
    g : ndarray or None
        The originating operator coefficients ``g_0 .. g_m``; ``None``
        for synthetic systems built directly from matrices.
    u_star : ndarray or None
        Optional boundary state ``u(0)``.
    """

    A: np.ndarray
    B: np.ndarray
    g: np.ndarray | None = None
    u_star: np.ndarray | None = None

    @property
    def m(self) -> int:
        return self.A.shape[0]

    def with_boundary(self, u_star: np.ndarray) -> "FirstOrderSystem":
        u = np.asarray(u_star, dtype=np.float64)
        if u.shape != (self.m,):
            raise ValueError(f"boundary state must have shape ({self.m},), got {u.shape}")
        return FirstOrderSystem(A=self.A, B=self.B, g=self.g, u_star=u)

    def residual(self, u: np.ndarray, u_dot: np.ndarray, f: np.ndarray) -> np.ndarray:
        """Pointwise residual ``B u' + A u - F`` for batched states.

        ``u`` and ``u_dot`` have shape ``(..., m)``; ``f`` is the scalar
        forcing sample broadcast into the last component.
        """
        u = np.asarray(u, dtype=np.float64)
        u_dot = np.asarray(u_dot, dtype=np.float64)
        res = u_dot @ self.B.T + u @ self.A.T
        res[..., -1] -= np.asarray(f, dtype=np.float64)
        return res


def reduce_operator(g: np.ndarray, u_star: np.ndarray | None = None) -> FirstOrderSystem:
    """Build the first-order matrices for operator coefficients ``g``.

    ``B = diag(1, ..., 1, g_m)`` and ``A`` has ``-1`` on the
    superdiagonal with last row ``[g_0, ..., g_{m-1}]``, so the first
    ``m - 1`` residual rows encode ``x^(j)' = x^(j+1)`` and the last row
    is the original scalar equation.
    """
    g = np.atleast_1d(np.asarray(g, dtype=np.float64))
    if g.ndim != 1 or g.size < 2:
        raise ValueError("g must hold at least two coefficients (m >= 1)")
    if g[-1] == 0.0:
        raise ValueError("leading operator coefficient g_m must be nonzero")
    m = g.size - 1
    B = np.eye(m)
    B[-1, -1] = g[-1]
    A = np.zeros((m, m))
    for j in range(m - 1):
        A[j, j + 1] = -1.0
    A[-1, :] = g[:-1]
    system = FirstOrderSystem(A=A, B=B, g=g.copy())
    if u_star is not None:
        system = system.with_boundary(np.asarray(u_star, dtype=np.float64))
    return system


def lift_forcing(f_values: np.ndarray, m: int) -> np.ndarray:
    """Expand scalar forcing samples into lifted vectors ``(..., m)``.

    Only the last component is nonzero; the leading ``m - 1`` chain rows
    of the system are unforced.
    """
    f = np.asarray(f_values, dtype=np.float64)
    out = np.zeros(f.shape + (m,), dtype=np.float64)
    out[..., -1] = f
    return out


def scalar_from_state(u: np.ndarray) -> np.ndarray:
    """Recover the scalar solution ``x = u_0`` from lifted states."""
    return np.asarray(u, dtype=np.float64)[..., 0]
