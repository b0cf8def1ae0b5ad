"""Iterative forward optimization of demonstration KV matrices.

One "thinking" step runs the demonstrations through the model with the
accumulated KV history injected as a prefix, reads off the fresh present
KV, and treats the difference against the history as a pseudo-gradient:

    G_t = K_t - accumulated_{t-1}
    M_t = G_t + beta * M_{t-1}          (M_1 = 0)
    accumulated_t = accumulated_{t-1} + eta * M_t

All three updates are elementwise over full per-layer KV matrices. Step 1
is a bootstrap: a plain forward with no prefix defines accumulated_1 as the
vanilla present KV, so a single-step run is exactly ordinary in-context
learning. The recurrence starts at t=2.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, DivergenceError, InputError, StateError
from .kernels import Tensor
from .model import KVState, LayerKV, ModelWeights, forward_hidden


@dataclass(frozen=True)
class ThinkConfig:
    steps: int = 15
    eta: float = 0.01
    beta: float = 0.9
    demo_position_offset: int = 0
    record_snapshots: bool = False

    def __post_init__(self):
        if self.steps < 1:
            raise ConfigError("steps must be >= 1")
        if self.eta <= 0:
            raise ConfigError("eta must be positive")
        if not 0 <= self.beta < 1:
            raise ConfigError("beta must be in [0, 1)")
        if self.demo_position_offset < 0:
            raise ConfigError("demo_position_offset must be >= 0")


@dataclass(frozen=True)
class MomentumState:
    """Per-layer (M_K, M_V) pairs, shaped like the demonstration KV."""

    layers: tuple[tuple[Tensor, Tensor], ...]

    @staticmethod
    def zeros_like(state: KVState) -> "MomentumState":
        return MomentumState(
            layers=tuple(
                (np.zeros_like(l.keys), np.zeros_like(l.values))
                for l in state.layers
            )
        )


@dataclass(frozen=True)
class GradTrace:
    step: int
    layer: int
    grad_norm_k: float
    grad_norm_v: float


@dataclass(frozen=True)
class ThinkResult:
    final: KVState
    traces: tuple[GradTrace, ...]
    snapshots: Optional[tuple[KVState, ...]] = None


def pseudo_gradient(present: LayerKV, history: LayerKV):
    """G_K = K_t - accumulated K, likewise for V. Demo length is constant
    across steps, so any shape drift means corrupted state."""
    if present.keys.shape != history.keys.shape:
        raise StateError(
            f"present KV {present.keys.shape} does not match "
            f"history {history.keys.shape}"
        )
    return present.keys - history.keys, present.values - history.values


def momentum_update(grad: Tensor, m_prev: Tensor, beta: float) -> Tensor:
    return grad + np.float32(beta) * m_prev


def kv_update(history: Tensor, momentum: Tensor, eta: float) -> Tensor:
    return history + np.float32(eta) * momentum


def think_step(
    weights: ModelWeights,
    demo_tokens: Sequence[int],
    history: KVState,
    momentum: MomentumState,
    config: ThinkConfig,
):
    """One optimization step. Returns (updated KVState, updated MomentumState,
    per-layer traces); inputs are left untouched. The step number is
    history.step + 1."""
    if history.length != len(demo_tokens):
        raise StateError(
            f"history holds {history.length} positions, "
            f"demonstrations have {len(demo_tokens)} tokens"
        )
    t = history.step + 1
    _, present = forward_hidden(
        demo_tokens, weights, prefix=history,
        position_offset=config.demo_position_offset,
    )

    new_layers = []
    new_momentum = []
    traces = []
    for l, (pres, hist, (m_k, m_v)) in enumerate(
        zip(present.layers, history.layers, momentum.layers)
    ):
        g_k, g_v = pseudo_gradient(pres, hist)
        m_k = momentum_update(g_k, m_k, config.beta)
        m_v = momentum_update(g_v, m_v, config.beta)
        keys = kv_update(hist.keys, m_k, config.eta)
        values = kv_update(hist.values, m_v, config.eta)
        for name, arr in (("keys", keys), ("values", values)):
            if not np.isfinite(arr).all():
                raise DivergenceError(step=t, layer=l, what=f"{name} update")
        new_layers.append(LayerKV(keys=keys, values=values))
        new_momentum.append((m_k, m_v))
        traces.append(
            GradTrace(
                step=t,
                layer=l,
                grad_norm_k=float(np.linalg.norm(g_k)),
                grad_norm_v=float(np.linalg.norm(g_v)),
            )
        )
    return (
        KVState(layers=tuple(new_layers), step=t),
        MomentumState(layers=tuple(new_momentum)),
        traces,
    )


def deep_think(
    weights: ModelWeights,
    demo_tokens: Sequence[int],
    config: ThinkConfig,
) -> ThinkResult:
    """Run the full thinking stage and return the accumulated KV after
    config.steps steps, with gradient-norm traces for steps 2..T."""
    if len(demo_tokens) < 1:
        raise InputError("need at least one demonstration token")

    _, present = forward_hidden(
        demo_tokens, weights, prefix=None,
        position_offset=config.demo_position_offset,
    )
    state = KVState(layers=present.layers, step=1)
    momentum = MomentumState.zeros_like(state)

    traces: list[GradTrace] = []
    snapshots = [state] if config.record_snapshots else None
    for _ in range(2, config.steps + 1):
        state, momentum, step_traces = think_step(
            weights, demo_tokens, state, momentum, config
        )
        traces.extend(step_traces)
        if snapshots is not None:
            snapshots.append(state)
    return ThinkResult(
        final=state,
        traces=tuple(traces),
        snapshots=tuple(snapshots) if snapshots is not None else None,
    )
