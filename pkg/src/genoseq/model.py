"""A small multi-head Transformer encoder classifier built on the gradient engine.

Architecture: token embeddings (plus a sinusoidal table when that scheme is
selected), pre-norm residual blocks of multi-head self-attention and a GELU
feed-forward, a final layer norm, and a linear classifier over the hidden
state of the leading CLS token. ALiBi enters as an additive pre-softmax bias
and RoPE as a rotation of per-head queries and keys; both are parameter-free.

PAD is assumed to be token id 0 (the fixed special layout of the tokenizers);
attention masks exclude PAD keys, and dropout sits on attention weights and
feed-forward outputs only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .positional import (
    ALiBi,
    PositionalScheme,
    Rotary,
    Sinusoidal,
    cached_alibi_bias,
    cached_rope_tables,
    cached_sinusoid_table,
    scheme_from_name,
    scheme_name,
)
from .tokenizers import PAD_ID

NEG_INF = -np.inf
INIT_STD = 0.02


class ModelError(Exception):
    pass


class IdOutOfRangeError(ModelError):
    pass


class LengthExceededError(ModelError):
    pass


class EmptyBatchError(ModelError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters; weights live in a separate params dict."""

    vocab_size: int
    num_classes: int
    max_len: int
    num_layers: int = 12
    d_model: int = 768
    num_heads: int = 12
    d_ff: int | None = None  # defaults to 4 * d_model
    dropout: float = 0.1
    scheme: PositionalScheme = field(default_factory=Sinusoidal)

    def __post_init__(self):
        if self.vocab_size < 5:
            raise ModelError("vocab_size must cover the four specials plus content")
        if self.num_classes < 2:
            raise ModelError("num_classes must be >= 2")
        if self.max_len < 3:
            raise ModelError("max_len must be >= 3")
        if self.num_layers < 1:
            raise ModelError("num_layers must be >= 1")
        if self.d_model % self.num_heads != 0:
            raise ModelError(f"d_model={self.d_model} not divisible by num_heads={self.num_heads}")
        if not 0.0 <= self.dropout < 1.0:
            raise ModelError("dropout must be in [0, 1)")
        if isinstance(self.scheme, Rotary) and self.d_head % 2 != 0:
            raise ModelError("rotary scheme needs an even per-head dimension")
        if isinstance(self.scheme, ALiBi) and len(self.scheme.slopes) != self.num_heads:
            raise ModelError(
                f"ALiBi has {len(self.scheme.slopes)} slopes but the model has {self.num_heads} heads"
            )

    @property
    def d_head(self) -> int:
        return self.d_model // self.num_heads

    @property
    def ff_dim(self) -> int:
        return self.d_ff if self.d_ff is not None else 4 * self.d_model


def param_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Name -> shape for every learnable tensor; the single source of truth."""
    d, f = config.d_model, config.ff_dim
    shapes: dict[str, tuple[int, ...]] = {"embed": (config.vocab_size, d)}
    for i in range(config.num_layers):
        p = f"layer{i}."
        shapes[p + "ln1.gain"] = (d,)
        shapes[p + "ln1.bias"] = (d,)
        for proj in ("wq", "wk", "wv", "wo"):
            shapes[p + f"attn.{proj}"] = (d, d)
        for proj in ("bq", "bk", "bv", "bo"):
            shapes[p + f"attn.{proj}"] = (d,)
        shapes[p + "ln2.gain"] = (d,)
        shapes[p + "ln2.bias"] = (d,)
        shapes[p + "ffn.w1"] = (d, f)
        shapes[p + "ffn.b1"] = (f,)
        shapes[p + "ffn.w2"] = (f, d)
        shapes[p + "ffn.b2"] = (d,)
    shapes["final_ln.gain"] = (d,)
    shapes["final_ln.bias"] = (d,)
    shapes["cls.w"] = (d, config.num_classes)
    shapes["cls.b"] = (config.num_classes,)
    return shapes


def count_parameters(config: ModelConfig) -> int:
    """Exact learnable scalar count of the configured architecture."""
    return sum(int(np.prod(s)) for s in param_shapes(config).values())


def init_params(
    config: ModelConfig, rng: np.random.Generator, dtype=np.float64
) -> dict[str, np.ndarray]:
    """Normal(0, 0.02) matrices, zero offsets, unit normalization gains."""
    params = {}
    for name, shape in param_shapes(config).items():
        if name.endswith(".gain"):
            params[name] = np.ones(shape, dtype=dtype)
        elif len(shape) == 1:
            params[name] = np.zeros(shape, dtype=dtype)
        else:
            params[name] = rng.normal(0.0, INIT_STD, size=shape).astype(dtype)
    return params


@dataclass
class ForwardTrace:
    """Graph root plus the cached activations tests and training need."""

    logits: ad.Tensor
    final_hidden: np.ndarray
    attention: list[np.ndarray] = field(default_factory=list)


def _check_batch(config: ModelConfig, ids: np.ndarray) -> np.ndarray:
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim == 1:
        ids = ids[None, :]
    if ids.ndim != 2:
        raise ModelError(f"ids must be 1-D or 2-D, got shape {ids.shape}")
    if ids.shape[0] == 0:
        raise EmptyBatchError("empty batch")
    if ids.shape[1] > config.max_len:
        raise LengthExceededError(
            f"sequence length {ids.shape[1]} exceeds max_len {config.max_len}"
        )
    if ids.min() < 0 or ids.max() >= config.vocab_size:
        raise IdOutOfRangeError(
            f"token ids must be in [0, {config.vocab_size}), got [{ids.min()}, {ids.max()}]"
        )
    return ids


def _dropout_mask(rng: np.random.Generator, shape, p: float, dtype) -> np.ndarray:
    keep = 1.0 - p
    draw_dtype = np.float32 if dtype == np.float32 else np.float64
    mask = (rng.random(shape, dtype=draw_dtype) < keep).astype(dtype)
    mask /= dtype.type(keep)
    return mask


def _forward_graph(
    params: dict[str, ad.Tensor],
    config: ModelConfig,
    ids: np.ndarray,
    train_mode: bool,
    rng: np.random.Generator | None,
    collect_attention: bool = False,
) -> ForwardTrace:
    batch, seq_len = ids.shape
    dtype = params["embed"].data.dtype
    num_heads, d_head = config.num_heads, config.d_head
    use_dropout = train_mode and config.dropout > 0.0
    if use_dropout and rng is None:
        raise ModelError("train_mode forward with dropout needs an rng")

    # embeddings are scaled by sqrt(d_model) so the O(1) sinusoid table does
    # not drown the 0.02-std token signal; applied under every scheme to keep
    # the comparison between schemes clean
    h = ad.mul(ad.embedding(params["embed"], ids), np.sqrt(config.d_model))
    if isinstance(config.scheme, Sinusoidal):
        table = cached_sinusoid_table(seq_len, config.d_model).astype(dtype)
        h = ad.add(h, table)

    # keys at PAD positions are excluded from every attention row
    key_mask = np.where(ids == PAD_ID, NEG_INF, 0.0).astype(dtype)
    score_const = key_mask[:, None, None, :]
    if isinstance(config.scheme, ALiBi):
        bias = cached_alibi_bias(seq_len, config.scheme.slopes).astype(dtype)
        score_const = score_const + bias[None, :, :, :]
    if isinstance(config.scheme, Rotary):
        cos, sin = cached_rope_tables(seq_len, d_head, config.scheme.base)
        cos, sin = cos.astype(dtype), sin.astype(dtype)

    scale = 1.0 / np.sqrt(d_head)
    attention_maps: list[np.ndarray] = []
    for i in range(config.num_layers):
        p = f"layer{i}."
        x = ad.layer_norm(h, params[p + "ln1.gain"], params[p + "ln1.bias"])

        def heads(t: ad.Tensor) -> ad.Tensor:
            t = ad.reshape(t, (batch, seq_len, num_heads, d_head))
            return ad.swapaxes(t, 1, 2)  # (B, H, T, dh)

        q = heads(ad.linear(x, params[p + "attn.wq"], params[p + "attn.bq"]))
        k = heads(ad.linear(x, params[p + "attn.wk"], params[p + "attn.bk"]))
        v = heads(ad.linear(x, params[p + "attn.wv"], params[p + "attn.bv"]))
        if isinstance(config.scheme, Rotary):
            q = ad.rope_apply(q, cos, sin)
            k = ad.rope_apply(k, cos, sin)
        scores = ad.matmul(ad.mul(q, scale), ad.swapaxes(k, 2, 3))
        probs = ad.softmax(ad.add(scores, score_const))
        if collect_attention:
            attention_maps.append(probs.data)
        if use_dropout:
            probs = ad.mul(probs, _dropout_mask(rng, probs.shape, config.dropout, h.data.dtype))
        ctx = ad.matmul(probs, v)
        ctx = ad.reshape(ad.swapaxes(ctx, 1, 2), (batch, seq_len, config.d_model))
        attn_out = ad.linear(ctx, params[p + "attn.wo"], params[p + "attn.bo"])
        h = ad.add(h, attn_out)

        x = ad.layer_norm(h, params[p + "ln2.gain"], params[p + "ln2.bias"])
        inner = ad.gelu(ad.linear(x, params[p + "ffn.w1"], params[p + "ffn.b1"]))
        ffn_out = ad.linear(inner, params[p + "ffn.w2"], params[p + "ffn.b2"])
        if use_dropout:
            ffn_out = ad.mul(ffn_out, _dropout_mask(rng, ffn_out.shape, config.dropout, h.data.dtype))
        h = ad.add(h, ffn_out)

    h = ad.layer_norm(h, params["final_ln.gain"], params["final_ln.bias"])
    pooled = ad.token_at(h, 0)  # CLS position
    logits = ad.linear(pooled, params["cls.w"], params["cls.b"])
    return ForwardTrace(logits=logits, final_hidden=h.data, attention=attention_maps)


def forward(
    params: dict[str, np.ndarray],
    config: ModelConfig,
    ids: np.ndarray,
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
    collect_attention: bool = False,
) -> tuple[np.ndarray, ForwardTrace]:
    """Run the classifier; returns (logits of shape (batch, classes), trace).

    Without ``train_mode`` the forward pass is a pure function of
    ``(params, ids)``: no dropout, no graph retention, identical logits on
    every call.
    """
    ids = _check_batch(config, ids)
    wrapped = {name: ad.Tensor(array) for name, array in params.items()}
    trace = _forward_graph(wrapped, config, ids, train_mode, rng, collect_attention)
    return trace.logits.data, trace


def loss_and_gradients(
    params: dict[str, np.ndarray],
    config: ModelConfig,
    ids: np.ndarray,
    labels: np.ndarray,
    rng: np.random.Generator | None = None,
    train_mode: bool = True,
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean cross-entropy over the batch and its exact reverse-mode gradients."""
    ids = _check_batch(config, ids)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim == 0:
        labels = labels[None]
    if labels.shape[0] != ids.shape[0]:
        raise ModelError(f"{labels.shape[0]} labels for {ids.shape[0]} sequences")
    if labels.min() < 0 or labels.max() >= config.num_classes:
        raise ModelError(f"labels must be in [0, {config.num_classes})")
    wrapped = {name: ad.Tensor(array, requires_grad=True) for name, array in params.items()}
    trace = _forward_graph(wrapped, config, ids, train_mode, rng)
    loss = ad.cross_entropy(trace.logits, labels)
    loss.backward()
    grads = {
        name: (t.grad if t.grad is not None else np.zeros_like(t.data))
        for name, t in wrapped.items()
    }
    return float(loss.data), grads


def _scheme_to_json(scheme: PositionalScheme) -> dict:
    out: dict = {"name": scheme_name(scheme)}
    if isinstance(scheme, ALiBi):
        out["slopes"] = list(scheme.slopes)
    if isinstance(scheme, Rotary):
        out["base"] = scheme.base
    return out


def _scheme_from_json(payload: dict, num_heads: int) -> PositionalScheme:
    return scheme_from_name(
        payload["name"],
        num_heads,
        slopes=tuple(payload["slopes"]) if "slopes" in payload else None,
        rope_base=payload.get("base", 10000.0),
    )


def config_to_json(config: ModelConfig) -> dict:
    payload = {
        "vocab_size": config.vocab_size,
        "num_classes": config.num_classes,
        "max_len": config.max_len,
        "num_layers": config.num_layers,
        "d_model": config.d_model,
        "num_heads": config.num_heads,
        "d_ff": config.d_ff,
        "dropout": config.dropout,
        "scheme": _scheme_to_json(config.scheme),
    }
    return payload


def config_from_json(payload: dict) -> ModelConfig:
    payload = dict(payload)
    payload["scheme"] = _scheme_from_json(payload["scheme"], payload["num_heads"])
    return ModelConfig(**payload)


def save_checkpoint(path: str | Path, params: dict[str, np.ndarray], config: ModelConfig) -> None:
    """Self-describing tensor dump; round-trips bit-exactly."""
    arrays = {f"param::{name}": arr for name, arr in params.items()}
    arrays["config_json"] = np.frombuffer(
        json.dumps(config_to_json(config)).encode("utf-8"), dtype=np.uint8
    )
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], ModelConfig]:
    with np.load(path) as data:
        config = config_from_json(json.loads(bytes(data["config_json"]).decode("utf-8")))
        params = {
            key[len("param::") :]: data[key] for key in data.files if key.startswith("param::")
        }
    expected = set(param_shapes(config))
    if set(params) != expected:
        raise ModelError("checkpoint parameter names do not match its config")
    return params, config
