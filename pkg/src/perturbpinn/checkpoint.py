"""Versioned on-disk format for trained models.

A checkpoint is a single JSON document (structured, human-readable,
diff-able) holding the trunk architecture, every weight and bias matrix,
the head weights, the training problems (system matrices plus forcing),
the full loss history, and the originating config including the seed.
Floats are serialized with round-tripping precision, so save/load is
exact at double precision.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .duffing import HarmonicForcing
from .errors import UsageError
from .network import TrunkParams
from .reduction import FirstOrderSystem
from .training import HeadProblem, TrainConfig, TrainedModel

FORMAT_TAG = "perturbpinn-checkpoint-v1"


def _problem_payload(problem: HeadProblem) -> dict:
    system = problem.system
    return {
        "A": system.A.tolist(),
        "B": system.B.tolist(),
        "g": None if system.g is None else system.g.tolist(),
        "u_star": None if system.u_star is None else system.u_star.tolist(),
        "forcing": {
            "amplitude": problem.forcing.amplitude,
            "frequency": problem.forcing.frequency,
        },
    }


def _problem_from_payload(payload: dict) -> HeadProblem:
    system = FirstOrderSystem(
        A=np.asarray(payload["A"], dtype=np.float64),
        B=np.asarray(payload["B"], dtype=np.float64),
        g=None if payload["g"] is None else np.asarray(payload["g"], dtype=np.float64),
        u_star=None
        if payload["u_star"] is None
        else np.asarray(payload["u_star"], dtype=np.float64),
    )
    forcing = HarmonicForcing(
        amplitude=float(payload["forcing"]["amplitude"]),
        frequency=float(payload["forcing"]["frequency"]),
    )
    return HeadProblem(system=system, forcing=forcing)


def save_checkpoint(model: TrainedModel, path: str | Path) -> None:
    """Write ``model`` to ``path`` as versioned JSON."""
    config = model.config
    payload = {
        "format": FORMAT_TAG,
        "config": {
            "layer_widths": list(config.layer_widths),
            "m": config.m,
            "h": config.h,
            "heads": config.heads,
            "iterations": config.iterations,
            "learning_rate": config.learning_rate,
            "decay_factor": config.decay_factor,
            "decay_every": config.decay_every,
            "collocation_points": config.collocation_points,
            "domain": list(config.domain),
            "seed": config.seed,
            "divergence_threshold": config.divergence_threshold,
            "log_every": config.log_every,
        },
        "trunk": {
            "weights": [w.tolist() for w in model.params.weights],
            "biases": [b.tolist() for b in model.params.biases],
        },
        "heads": model.heads.tolist(),
        "problems": [_problem_payload(problem) for problem in model.problems],
        "history": model.history.tolist(),
        "head_history": model.head_history.tolist(),
        "wall_seconds": model.wall_seconds,
    }
    Path(path).write_text(json.dumps(payload))


def load_checkpoint(path: str | Path) -> TrainedModel:
    """Read a checkpoint written by :func:`save_checkpoint`.

    Raises
    ------
    UsageError
        Missing file, invalid JSON, or an unknown format tag.
    """
    path = Path(path)
    if not path.exists():
        raise UsageError(f"checkpoint not found: {path}")
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"checkpoint {path} is not valid JSON: {exc}") from exc
    tag = payload.get("format")
    if tag != FORMAT_TAG:
        raise UsageError(f"unsupported checkpoint format {tag!r} in {path}")
    raw = payload["config"]
    config = TrainConfig(
        layer_widths=tuple(raw["layer_widths"]),
        m=int(raw["m"]),
        h=int(raw["h"]),
        heads=int(raw["heads"]),
        iterations=int(raw["iterations"]),
        learning_rate=float(raw["learning_rate"]),
        decay_factor=float(raw["decay_factor"]),
        decay_every=int(raw["decay_every"]),
        collocation_points=int(raw["collocation_points"]),
        domain=tuple(raw["domain"]),
        seed=int(raw["seed"]),
        divergence_threshold=float(raw["divergence_threshold"]),
        log_every=int(raw["log_every"]),
    )
    params = TrunkParams(
        weights=tuple(
            np.asarray(w, dtype=np.float64) for w in payload["trunk"]["weights"]
        ),
        biases=tuple(
            np.asarray(b, dtype=np.float64) for b in payload["trunk"]["biases"]
        ),
    )
    return TrainedModel(
        config=config,
        spec=config.trunk_spec(),
        params=params,
        heads=np.asarray(payload["heads"], dtype=np.float64),
        problems=[_problem_from_payload(item) for item in payload["problems"]],
        history=np.asarray(payload["history"], dtype=np.float64),
        head_history=np.asarray(payload["head_history"], dtype=np.float64),
        wall_seconds=float(payload.get("wall_seconds", 0.0)),
    )
