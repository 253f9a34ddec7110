"""Shared trunk network with an exact time tangent.

The trunk maps a scalar time ``t`` through a stack of tanh layers; the
last layer's activations are reshaped row-major into a basis matrix
``H(t)`` of shape ``(m, h)``.  Every head is a weight vector ``w`` of
length ``h`` and predicts the lifted state ``u(t) = H(t) w``, so the
trunk is trained once and heads stay linear in it.

Physics residuals need ``dH/dt``, which is carried alongside the
activations as a forward-mode tangent: with ``a0 = t`` and ``d0 = 1``,

    z = a_prev @ W + b      e = d_prev @ W
    a = tanh(z)             d = (1 - a^2) * e

Parameter gradients of any loss built from ``H`` and ``dH/dt`` are then
propagated in reverse through both recurrences together (second-order
terms included), entirely in numpy.  Float64 throughout; evaluation is
deterministic for fixed parameters and inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteError


@dataclass(frozen=True)
class TrunkSpec:
    """Architecture of the trunk network.

    ``layer_widths`` includes the scalar input (must be 1) and the final
    layer, whose width must equal ``m * h`` so activations reshape into
    an ``(m, h)`` basis.
    """

    layer_widths: tuple[int, ...]
    m: int
    h: int

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        object.__setattr__(self, "layer_widths", widths)
        if len(widths) < 2:
            raise ValueError("need at least an input and an output layer")
        if any(w < 1 for w in widths):
            raise ValueError("layer widths must be positive")
        if widths[0] != 1:
            raise ValueError(f"trunk input width must be 1, got {widths[0]}")
        if widths[-1] != self.m * self.h:
            raise ValueError(
                f"final width {widths[-1]} must equal m*h = {self.m * self.h}"
            )

    @property
    def depth(self) -> int:
        """Number of weight layers."""
        return len(self.layer_widths) - 1


@dataclass
class TrunkParams:
    """Weights and biases, one pair per layer."""

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def copy(self) -> "TrunkParams":
        return TrunkParams(
            weights=tuple(w.copy() for w in self.weights),
            biases=tuple(b.copy() for b in self.biases),
        )


@dataclass
class TrunkGradients:
    """Parameter-space cotangent with the same layout as ``TrunkParams``."""

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]


@dataclass(frozen=True)
class TrunkBatch:
    """Trunk outputs on a time batch.

    ``H`` and ``H_dot`` have shape ``(N, m, h)``; ``H_dot`` is the exact
    time derivative of ``H``, not a finite difference.
    """

    t: np.ndarray
    H: np.ndarray
    H_dot: np.ndarray


@dataclass
class ForwardCache:
    """Per-layer values retained for the reverse pass.

    ``activations[l]`` and ``tangents[l]`` are the layer-``l`` outputs
    (index 0 is the input column); ``lin_tangents[l]`` is the
    pre-damping tangent ``e`` of weight layer ``l + 1``.
    """

    t: np.ndarray
    activations: list[np.ndarray]
    tangents: list[np.ndarray]
    lin_tangents: list[np.ndarray]


def init_params(spec: TrunkSpec, rng: np.random.Generator) -> TrunkParams:
    """Uniform ``(-1/sqrt(fan_in), 1/sqrt(fan_in))`` init for W and b.

    Draw order is fixed (W then b, layer by layer) so a seeded generator
    reproduces parameters exactly.
    """
    weights, biases = [], []
    for fan_in, fan_out in zip(spec.layer_widths[:-1], spec.layer_widths[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    return TrunkParams(weights=tuple(weights), biases=tuple(biases))


def forward_pass(spec: TrunkSpec, params: TrunkParams, t: np.ndarray) -> ForwardCache:
    """Run the trunk with its time tangent on a batch of times."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    if t.ndim != 1:
        raise ValueError(f"time batch must be one-dimensional, got shape {t.shape}")
    if not np.all(np.isfinite(t)):
        raise NonFiniteError("time batch contains NaN or Inf", location="trunk input")
    a = t[:, None]
    d = np.ones_like(a)
    activations = [a]
    tangents = [d]
    lin_tangents = []
    for layer, (W, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ W + b
        e = d @ W
        a = np.tanh(z)
        d = (1.0 - a * a) * e
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(d))):
            raise NonFiniteError(
                f"non-finite activations in layer {layer}",
                location=f"trunk layer {layer}",
            )
        activations.append(a)
        tangents.append(d)
        lin_tangents.append(e)
    return ForwardCache(
        t=t, activations=activations, tangents=tangents, lin_tangents=lin_tangents
    )


def batch_from_cache(spec: TrunkSpec, cache: ForwardCache) -> TrunkBatch:
    """Reshape final-layer outputs into ``(N, m, h)`` basis stacks."""
    n = cache.t.size
    H = cache.activations[-1].reshape(n, spec.m, spec.h)
    H_dot = cache.tangents[-1].reshape(n, spec.m, spec.h)
    return TrunkBatch(t=cache.t, H=H, H_dot=H_dot)


def evaluate(spec: TrunkSpec, params: TrunkParams, t: np.ndarray) -> TrunkBatch:
    """Evaluate ``H`` and ``dH/dt`` on a time batch (no cache kept)."""
    return batch_from_cache(spec, forward_pass(spec, params, t))


def head_forward(batch: TrunkBatch, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Predicted lifted state and derivative for one head.

    ``u(t) = H(t) w`` and ``u'(t) = H'(t) w``: the head is linear in
    ``w``, which is what the closed-form transfer step exploits.
    """
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (batch.H.shape[2],):
        raise ValueError(f"head weights must have shape ({batch.H.shape[2]},), got {w.shape}")
    return batch.H @ w, batch.H_dot @ w


def head_loss(
    system,
    batch: TrunkBatch,
    w: np.ndarray,
    f_values: np.ndarray,
    u_star: np.ndarray,
    n_colloc: int,
) -> float:
    """Physics loss of one head on a batch ending in the boundary row.

    ``(1/(m N)) sum_n ||B u' + A u - F||^2 + (1/m) ||u(0) - u*||^2``
    where the first ``n_colloc`` rows are collocation points and the last
    row is the ``t = 0`` evaluation.
    """
    n = n_colloc
    if batch.t.size != n + 1:
        raise ValueError("batch must hold collocation rows plus one boundary row")
    u, u_dot = head_forward(batch, w)
    m = u.shape[1]
    r = u_dot[:n] @ system.B.T + u[:n] @ system.A.T
    r[:, -1] -= np.asarray(f_values, dtype=np.float64)
    b_res = u[n] - np.asarray(u_star, dtype=np.float64)
    return float(np.sum(r * r) / (m * n) + np.dot(b_res, b_res) / m)


def total_loss(per_head: np.ndarray) -> float:
    """Mean of the per-head losses."""
    return float(np.mean(per_head))


def backward_pass(
    spec: TrunkSpec,
    params: TrunkParams,
    cache: ForwardCache,
    g_H: np.ndarray,
    g_H_dot: np.ndarray,
) -> TrunkGradients:
    """Reverse pass for a scalar loss with cotangents in ``H`` and ``dH/dt``.

    ``g_H`` and ``g_H_dot`` have shape ``(N, m, h)``.  The tangent
    recurrence ``d = (1 - a^2) e`` couples into the activation path, so
    the activation cotangent picks up an extra ``-2 a e`` term before the
    usual tanh backprop.
    """
    n = cache.t.size
    g_a = np.ascontiguousarray(g_H, dtype=np.float64).reshape(n, spec.m * spec.h)
    g_d = np.ascontiguousarray(g_H_dot, dtype=np.float64).reshape(n, spec.m * spec.h)
    grad_w: list[np.ndarray] = [None] * spec.depth
    grad_b: list[np.ndarray] = [None] * spec.depth
    for layer in range(spec.depth - 1, -1, -1):
        a = cache.activations[layer + 1]
        e = cache.lin_tangents[layer]
        a_prev = cache.activations[layer]
        d_prev = cache.tangents[layer]
        damp = 1.0 - a * a
        g_e = g_d * damp
        g_z = (g_a - 2.0 * g_d * a * e) * damp
        grad_w[layer] = a_prev.T @ g_z + d_prev.T @ g_e
        grad_b[layer] = g_z.sum(axis=0)
        W = params.weights[layer]
        g_a = g_z @ W.T
        g_d = g_e @ W.T
    return TrunkGradients(weights=tuple(grad_w), biases=tuple(grad_b))
