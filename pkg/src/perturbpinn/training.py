"""One-time multi-head training of the shared trunk.

Heads are sampled linear oscillator instances (the nonlinear term
dropped), each reduced to first order.  All heads share the trunk basis
``H(t)`` and differ only in their weight vector, so minimizing the mean
of the per-head physics losses shapes a basis that spans the solution
family.  After training the trunk is frozen; new instances are solved by
the closed-form transfer step, never by further gradient descent.

The loss for head ``k`` on a collocation batch of size ``N`` is

    L_k = (1/(m N)) sum_n ||B u_k'(t_n) + A_k u_k(t_n) - F_k(t_n)||^2
        + (1/m) ||u_k(0) - u_k*||^2

with ``u_k = H w_k``; the total is the mean over heads.  Optimization is
Adam with a staircase-decayed learning rate.  All randomness flows from
one seed through spawned child streams (parameter init, head sampling,
collocation), so runs are bit-reproducible.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .duffing import HarmonicForcing, sample_params
from .errors import NonFiniteError, TrainingDivergedError
from .network import (
    TrunkBatch,
    TrunkParams,
    TrunkSpec,
    backward_pass,
    batch_from_cache,
    evaluate,
    forward_pass,
    init_params,
)
from .reduction import FirstOrderSystem, reduce_operator

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of the one-time training phase."""

    layer_widths: tuple[int, ...] = (1, 256, 256, 256, 512)
    m: int = 2
    h: int = 256
    heads: int = 10
    iterations: int = 5000
    learning_rate: float = 2e-4
    decay_factor: float = 0.96
    decay_every: int = 100
    collocation_points: int = 200
    domain: tuple[float, float] = (0.0, 5.0)
    seed: int = 0
    divergence_threshold: float = 1e6
    log_every: int = 500

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if not 0 < self.decay_factor <= 1:
            raise ValueError("decay factor must lie in (0, 1]")
        if self.decay_every < 1 or self.collocation_points < 1:
            raise ValueError("decay_every and collocation_points must be >= 1")
        if self.domain[0] >= self.domain[1]:
            raise ValueError("domain must satisfy t_lo < t_hi")
        if self.heads < 1 or self.iterations < 0:
            raise ValueError("need at least one head and a nonnegative iteration count")

    def trunk_spec(self) -> TrunkSpec:
        return TrunkSpec(layer_widths=self.layer_widths, m=self.m, h=self.h)

    def lr_at(self, iteration: int) -> float:
        """Staircase schedule ``lr0 * decay^(iteration // decay_every)``."""
        return self.learning_rate * self.decay_factor ** (iteration // self.decay_every)


@dataclass(frozen=True)
class HeadProblem:
    """One linear training instance: a lifted system plus its forcing."""

    system: FirstOrderSystem
    forcing: HarmonicForcing


def sample_collocation(rng: np.random.Generator, config: TrainConfig) -> np.ndarray:
    """One iteration's collocation times: i.i.d. uniform on the domain."""
    low, high = config.domain
    return rng.uniform(low, high, size=config.collocation_points)


def sample_head_problems(rng: np.random.Generator, count: int) -> list[HeadProblem]:
    """Draw ``count`` linear oscillator instances from the family ranges."""
    problems = []
    for _ in range(count):
        params = sample_params(rng, beta=0.0)
        system = reduce_operator(
            np.array([params.alpha, params.delta, 1.0]),
            u_star=np.array([params.x0, 0.0]),
        )
        problems.append(HeadProblem(system=system, forcing=params.forcing()))
    return problems


def multi_head_loss(
    batch: TrunkBatch,
    heads: np.ndarray,
    problems: Sequence[HeadProblem],
    n_colloc: int,
    with_grads: bool = True,
):
    """Total loss and, optionally, gradients for all heads on one batch.

    The batch must hold the ``n_colloc`` collocation rows followed by a
    single ``t = 0`` row used only for the boundary terms.  Returns
    ``(total, per_head)`` and, when ``with_grads``, also
    ``(g_heads, g_H, g_H_dot)`` where the latter two are cotangents for
    the trunk's reverse pass.
    """
    K = len(problems)
    if heads.shape[0] != K:
        raise ValueError(f"got {heads.shape[0]} head vectors for {K} problems")
    H, H_dot, t = batch.H, batch.H_dot, batch.t
    n = n_colloc
    if t.size != n + 1 or t[-1] != 0.0:
        raise ValueError("batch must be collocation points plus a trailing t=0 row")
    m = H.shape[1]
    per_head = np.empty(K)
    g_heads = np.zeros_like(heads) if with_grads else None
    g_H = np.zeros_like(H) if with_grads else None
    g_H_dot = np.zeros_like(H_dot) if with_grads else None
    for k, problem in enumerate(problems):
        w = heads[k]
        A, B = problem.system.A, problem.system.B
        u = H @ w
        u_dot = H_dot @ w
        r = u_dot[:n] @ B.T + u[:n] @ A.T
        r[:, -1] -= problem.forcing(t[:n])
        b_res = u[n] - problem.system.u_star
        per_head[k] = np.sum(r * r) / (m * n) + np.dot(b_res, b_res) / m
        if not with_grads:
            continue
        g_u = np.zeros_like(u)
        g_u[:n] = (2.0 / (m * n)) * (r @ A)
        g_u[n] = (2.0 / m) * b_res
        g_u_dot_c = (2.0 / (m * n)) * (r @ B)
        g_heads[k] = np.einsum("nm,nmh->h", g_u, H) + np.einsum(
            "nm,nmh->h", g_u_dot_c, H_dot[:n]
        )
        g_H += g_u[:, :, None] * w[None, None, :]
        g_H_dot[:n] += g_u_dot_c[:, :, None] * w[None, None, :]
    total = float(per_head.mean())
    if not with_grads:
        return total, per_head
    g_heads /= K
    g_H /= K
    g_H_dot /= K
    return total, per_head, g_heads, g_H, g_H_dot


class Adam:
    """Adam over a flat list of parameter arrays, updated in place."""

    def __init__(
        self,
        params: list[np.ndarray],
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = params
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads: list[np.ndarray], lr: float):
        if len(grads) != len(self.params):
            raise ValueError("gradient list does not match parameter list")
        self.step_count += 1
        c1 = 1.0 - self.beta1**self.step_count
        c2 = 1.0 - self.beta2**self.step_count
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class TrainedModel:
    """Frozen outcome of one training run.

    ``history`` holds the per-iteration total loss; ``head_history`` the
    per-iteration per-head losses with shape ``(iterations, K)``.
    """

    config: TrainConfig
    spec: TrunkSpec
    params: TrunkParams
    heads: np.ndarray
    problems: list[HeadProblem]
    history: np.ndarray
    head_history: np.ndarray
    wall_seconds: float = 0.0


def _spawn_streams(seed: int) -> tuple[np.random.Generator, ...]:
    init_ss, problem_ss, colloc_ss = np.random.SeedSequence(seed).spawn(3)
    return (
        np.random.default_rng(init_ss),
        np.random.default_rng(problem_ss),
        np.random.default_rng(colloc_ss),
    )


def train(
    config: TrainConfig = TrainConfig(),
    problems: Sequence[HeadProblem] | None = None,
) -> TrainedModel:
    """Run the one-time multi-head training loop.

    ``problems`` overrides the sampled head instances (their count then
    overrides ``config.heads``); the head-sampling stream is still drawn
    so collocation randomness is unaffected by the override.

    Raises
    ------
    TrainingDivergedError
        If the loss exceeds the divergence threshold or any forward pass
        produces non-finite values; the partial loss history is attached.
    """
    spec = config.trunk_spec()
    init_rng, problem_rng, colloc_rng = _spawn_streams(config.seed)
    sampled = sample_head_problems(problem_rng, config.heads)
    if problems is None:
        problems = sampled
    problems = list(problems)
    K = len(problems)
    params = init_params(spec, init_rng)
    head_bound = 1.0 / np.sqrt(spec.h)
    heads = init_rng.uniform(-head_bound, head_bound, size=(K, spec.h))
    flat_params = [*params.weights, *params.biases, heads]
    optimizer = Adam(flat_params)
    n = config.collocation_points
    history = np.empty(config.iterations)
    head_history = np.empty((config.iterations, K))
    started = time.perf_counter()
    for i in range(config.iterations):
        t_batch = np.append(sample_collocation(colloc_rng, config), 0.0)
        try:
            cache = forward_pass(spec, params, t_batch)
        except NonFiniteError as exc:
            raise TrainingDivergedError(
                f"non-finite trunk output at iteration {i}", history=history[:i].copy()
            ) from exc
        batch = batch_from_cache(spec, cache)
        total, per_head, g_heads, g_H, g_H_dot = multi_head_loss(batch, heads, problems, n)
        history[i] = total
        head_history[i] = per_head
        if not np.isfinite(total) or total > config.divergence_threshold:
            raise TrainingDivergedError(
                f"loss {total} at iteration {i} exceeds divergence threshold",
                history=history[: i + 1].copy(),
            )
        trunk_grads = backward_pass(spec, params, cache, g_H, g_H_dot)
        optimizer.step([*trunk_grads.weights, *trunk_grads.biases, g_heads], config.lr_at(i))
        if config.log_every and (i + 1) % config.log_every == 0:
            logger.info("iter %6d  loss %.6e  lr %.3e", i + 1, total, config.lr_at(i))
    wall = time.perf_counter() - started
    return TrainedModel(
        config=config,
        spec=spec,
        params=params,
        heads=heads,
        problems=problems,
        history=history,
        head_history=head_history,
        wall_seconds=wall,
    )


def evaluate_loss(model: TrainedModel, n: int | None = None, per_head: bool = False):
    """Deterministic loss on an equispaced grid (collocation + boundary).

    Uses grid midpoints of the training domain so the sample is
    independent of the stochastic batches seen during training.  With
    ``per_head`` returns ``(total, per_head_array)``.
    """
    if n is None:
        n = model.config.collocation_points
    low, high = model.config.domain
    edges = np.linspace(low, high, n + 1)
    t = np.append(0.5 * (edges[:-1] + edges[1:]), 0.0)
    batch = evaluate(model.spec, model.params, t)
    total, heads = multi_head_loss(batch, model.heads, model.problems, n, with_grads=False)
    if per_head:
        return total, heads
    return total
