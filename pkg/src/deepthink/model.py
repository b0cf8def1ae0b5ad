"""Decoder-only transformer forward pass with injectable per-layer KV prefixes.

The architecture is the GPT-2 family: learned absolute position embeddings,
pre-norm blocks (ln -> attention -> residual, ln -> ffn -> residual), tanh
GELU, biases everywhere, final layer norm, unembedding tied to the token
embedding unless an explicit matrix is present.

A prefix is a per-layer bundle of Key/Value matrices injected ahead of the
sequence's own keys and values. Prefix positions are visible to every query;
the sequence's own positions are causally masked. This is ordinary KV-cache
semantics, which is exactly what makes a one-step-optimized prefix reproduce
a plain concatenated forward pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import CapacityError, ConfigError, InputError, ShapeError
from .kernels import Tensor, gelu, layer_norm, softmax_rows


@dataclass(frozen=True)
class ModelConfig:
    n_layers: int
    n_heads: int
    d_model: int
    vocab_size: int
    max_positions: int
    ffn_hidden: int
    ln_eps: float = 1e-5

    def __post_init__(self):
        for name in ("n_layers", "n_heads", "d_model", "vocab_size",
                     "max_positions", "ffn_hidden"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.d_model % self.n_heads != 0:
            raise ConfigError(
                f"d_model {self.d_model} not divisible by n_heads {self.n_heads}"
            )
        if self.ln_eps <= 0:
            raise ConfigError("ln_eps must be positive")

    @property
    def d_head(self) -> int:
        return self.d_model // self.n_heads


@dataclass
class LayerWeights:
    """Per-block parameters. Projection matrices map rows: y = x @ w + b."""

    w_q: Tensor
    b_q: Tensor
    w_k: Tensor
    b_k: Tensor
    w_v: Tensor
    b_v: Tensor
    w_o: Tensor
    b_o: Tensor
    ln1_g: Tensor
    ln1_b: Tensor
    ln2_g: Tensor
    ln2_b: Tensor
    ffn_w_in: Tensor
    ffn_b_in: Tensor
    ffn_w_out: Tensor
    ffn_b_out: Tensor


@dataclass
class ModelWeights:
    config: ModelConfig
    token_embedding: Tensor
    position_embedding: Tensor
    layers: tuple[LayerWeights, ...]
    lnf_g: Tensor
    lnf_b: Tensor
    unembedding: Optional[Tensor] = None  # None = tied to token_embedding
    tokenizer: object = field(default=None, repr=False)  # attached at load time

    def __post_init__(self):
        c = self.config
        if len(self.layers) != c.n_layers:
            raise ConfigError(
                f"weights have {len(self.layers)} layers, config says {c.n_layers}"
            )
        if self.token_embedding.shape != (c.vocab_size, c.d_model):
            raise ConfigError(
                f"token embedding shape {self.token_embedding.shape} != "
                f"({c.vocab_size}, {c.d_model})"
            )
        if self.position_embedding.shape != (c.max_positions, c.d_model):
            raise ConfigError(
                f"position embedding shape {self.position_embedding.shape} != "
                f"({c.max_positions}, {c.d_model})"
            )


@dataclass(frozen=True)
class LayerKV:
    """Key/Value matrices for one layer, shaped (n_heads, len, d_head)."""

    keys: Tensor
    values: Tensor

    def __post_init__(self):
        if self.keys.shape != self.values.shape:
            raise ShapeError(
                f"keys {self.keys.shape} and values {self.values.shape} differ"
            )

    @property
    def length(self) -> int:
        return self.keys.shape[1]


@dataclass(frozen=True)
class KVState:
    """Per-layer KV history; the bridge between the two stages."""

    layers: tuple[LayerKV, ...]
    step: int = 0

    def __post_init__(self):
        lens = {layer.length for layer in self.layers}
        if len(lens) > 1:
            raise ShapeError(f"layers disagree on token count: {sorted(lens)}")

    @property
    def length(self) -> int:
        return self.layers[0].length if self.layers else 0

    @property
    def n_layers(self) -> int:
        return len(self.layers)


@dataclass(frozen=True)
class DualFormResult:
    """Linearized attention on a query split into test-only and demo-only parts."""

    zsl_term: Tensor
    icl_term: Tensor
    linear_full: Tensor


def split_heads(x: Tensor, n_heads: int) -> Tensor:
    """(len, d_model) -> (n_heads, len, d_head)."""
    length, d_model = x.shape
    d_head = d_model // n_heads
    return np.ascontiguousarray(
        x.reshape(length, n_heads, d_head).transpose(1, 0, 2)
    )


def merge_heads(x: Tensor) -> Tensor:
    """(n_heads, len, d_head) -> (len, n_heads * d_head)."""
    n_heads, length, d_head = x.shape
    return np.ascontiguousarray(x.transpose(1, 0, 2)).reshape(length, n_heads * d_head)


def project_qkv(x: Tensor, lw: LayerWeights, n_heads: int):
    """Project an already-normalized input into per-head Q, K, V.

    K and V here are the "present" matrices: what this token block itself
    contributes to attention, before any history is mixed in.
    """
    d_model = x.shape[-1]
    if lw.w_q.shape[0] != d_model:
        raise ShapeError(f"input width {d_model} != projection rows {lw.w_q.shape[0]}")
    q = split_heads(x @ lw.w_q + lw.b_q, n_heads)
    k = split_heads(x @ lw.w_k + lw.b_k, n_heads)
    v = split_heads(x @ lw.w_v + lw.b_v, n_heads)
    return q, k, v


def _visibility(n_present: int, n_prefix: int) -> np.ndarray:
    """Bool mask (n_present, n_prefix + n_present): prefix always visible,
    present causally masked."""
    rows = np.arange(n_present)[:, None]
    cols = np.arange(n_prefix + n_present)[None, :]
    return (cols < n_prefix) | (cols - n_prefix <= rows)


def attend_with_prefix(
    q: Tensor,
    present_k: Tensor,
    present_v: Tensor,
    prefix: Optional[LayerKV],
    lw: LayerWeights,
) -> Tensor:
    """Multi-head attention over [prefix || present], output-projected.

    Logits are scaled by sqrt(d_head). Every query sees all prefix positions
    plus its causal share of present positions.
    """
    n_heads, n_present, d_head = q.shape
    if prefix is not None:
        if prefix.keys.shape[0] != n_heads or prefix.keys.shape[2] != d_head:
            raise ConfigError(
                f"prefix shape {prefix.keys.shape} incompatible with "
                f"{n_heads} heads of width {d_head}"
            )
        k_all = np.concatenate([prefix.keys, present_k], axis=1)
        v_all = np.concatenate([prefix.values, present_v], axis=1)
        n_prefix = prefix.length
    else:
        k_all, v_all = present_k, present_v
        n_prefix = 0

    scores = np.einsum("hqd,hkd->hqk", q, k_all) / np.float32(np.sqrt(d_head))
    visible = _visibility(n_present, n_prefix)
    scores = np.where(visible[None, :, :], scores, np.float32(-np.inf))
    weights = softmax_rows(scores)
    ctx = np.einsum("hqk,hkd->hqd", weights, v_all)
    return (merge_heads(ctx) @ lw.w_o + lw.b_o).astype(np.float32)


def block_forward(
    x: Tensor,
    lw: LayerWeights,
    config: ModelConfig,
    prefix: Optional[LayerKV] = None,
):
    """One pre-norm block; returns the output and this block's present KV."""
    normed = layer_norm(x, lw.ln1_g, lw.ln1_b, config.ln_eps)
    q, k, v = project_qkv(normed, lw, config.n_heads)
    x = x + attend_with_prefix(q, k, v, prefix, lw)

    normed = layer_norm(x, lw.ln2_g, lw.ln2_b, config.ln_eps)
    hidden = gelu(normed @ lw.ffn_w_in + lw.ffn_b_in)
    x = x + hidden @ lw.ffn_w_out + lw.ffn_b_out
    return x.astype(np.float32), LayerKV(keys=k, values=v)


def _check_prefix(prefix: Optional[KVState], config: ModelConfig) -> None:
    if prefix is None:
        return
    if prefix.n_layers != config.n_layers:
        raise ConfigError(
            f"prefix has {prefix.n_layers} layers, model has {config.n_layers}"
        )


def forward_hidden(
    tokens: Sequence[int],
    weights: ModelWeights,
    prefix: Optional[KVState] = None,
    position_offset: int = 0,
):
    """Run all blocks; return final-norm hidden states and the present KV.

    Cheaper than model_forward when only a few logit rows are needed:
    project the rows you want against the unembedding yourself.
    """
    config = weights.config
    ids = np.asarray(tokens, dtype=np.int64)
    if ids.ndim != 1 or ids.size < 1:
        raise InputError("token sequence must be a non-empty 1-D id list")
    if ids.min() < 0 or ids.max() >= config.vocab_size:
        bad = int(ids[(ids < 0) | (ids >= config.vocab_size)][0])
        raise InputError(f"token id {bad} outside vocabulary of {config.vocab_size}")
    if position_offset < 0 or position_offset + ids.size > config.max_positions:
        raise CapacityError(
            f"positions {position_offset}..{position_offset + ids.size - 1} "
            f"exceed budget of {config.max_positions}"
        )
    _check_prefix(prefix, config)

    x = (
        weights.token_embedding[ids]
        + weights.position_embedding[position_offset : position_offset + ids.size]
    ).astype(np.float32)

    presents = []
    for l, lw in enumerate(weights.layers):
        layer_prefix = prefix.layers[l] if prefix is not None else None
        x, present = block_forward(x, lw, config, layer_prefix)
        presents.append(present)

    hidden = layer_norm(x, weights.lnf_g, weights.lnf_b, config.ln_eps)
    return hidden, KVState(layers=tuple(presents))


def unembed(hidden: Tensor, weights: ModelWeights) -> Tensor:
    table = (
        weights.unembedding
        if weights.unembedding is not None
        else weights.token_embedding
    )
    return (hidden @ table.T).astype(np.float32)


def model_forward(
    tokens: Sequence[int],
    weights: ModelWeights,
    prefix: Optional[KVState] = None,
    position_offset: int = 0,
):
    """Full forward pass: (logits[len, vocab], present KVState)."""
    hidden, present = forward_hidden(tokens, weights, prefix, position_offset)
    return unembed(hidden, weights), present


def dual_form_decompose(
    x_demos: Tensor,
    x_test: Tensor,
    lw: LayerWeights,
    j: int,
) -> DualFormResult:
    """Split linearized attention for test query j into a test-only term and
    a demonstration-only term.

    Uses the softmax-free, unscaled, bias-free linear form over the full
    projection matrices, where the split is an exact identity:
    zsl_term + icl_term == linear_full.
    """
    if x_demos.ndim != 2 or x_test.ndim != 2:
        raise ShapeError("x_demos and x_test must be (len, d_model) matrices")
    if x_demos.shape[-1] != x_test.shape[-1]:
        raise ShapeError(f"demo width {x_demos.shape} != test width {x_test.shape}")
    if not 0 <= j < x_test.shape[0]:
        raise ShapeError(f"query index {j} outside test length {x_test.shape[0]}")
    if lw.w_q.shape[0] != x_test.shape[-1]:
        raise ShapeError(
            f"input width {x_test.shape[-1]} != projection rows {lw.w_q.shape[0]}"
        )

    w_q = lw.w_q.astype(np.float64)
    w_k = lw.w_k.astype(np.float64)
    w_v = lw.w_v.astype(np.float64)
    demos = x_demos.astype(np.float64)
    tests = x_test.astype(np.float64)
    q_j = tests[j] @ w_q

    def term(x: np.ndarray) -> np.ndarray:
        return (x @ w_v).T @ ((x @ w_k) @ q_j)

    zsl = term(tests)
    icl = term(demos) if demos.shape[0] else np.zeros_like(zsl)
    full = term(np.concatenate([demos, tests], axis=0))
    return DualFormResult(
        zsl_term=zsl.astype(np.float32),
        icl_term=icl.astype(np.float32),
        linear_full=full.astype(np.float32),
    )
