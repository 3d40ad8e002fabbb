"""Tiny dual encoders with exact manual gradients.

Text: token + positional embeddings into a pre-norm transformer (self-attention
and GELU MLP sublayers with residuals, final layer norm), pooled at the EOS or
CLS position. Optional serial bottleneck adapters sit after the attention and
MLP sublayers of every layer; their up-projections are zero-initialized so the
adapter branch starts out exactly equal to the base branch. Image: a 2-layer
GELU MLP over precomputed feature vectors. Everything runs in float64 and all
gradients are hand-derived (finite-difference checked in the test suite).

Vocabulary is hash-bucketed: whitespace/punctuation-normalized words map to
crc32 buckets, with ids 0 and 1 reserved for CLS and EOS.
"""

from __future__ import annotations

import json
import math
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigError, NumericsError
from .queries import tokenize

CLS_ID = 0
EOS_ID = 1
NUM_RESERVED = 2

TAU_INIT = 14.29
TAU_MAX = 100.0

_LN_EPS = 1e-5
_GELU_C = math.sqrt(2.0 / math.pi)


@dataclass
class EncoderConfig:
    embed_dim: int = 32
    text_layers: int = 2
    num_heads: int = 2
    hidden_dim: int = 64
    vocab_size: int = 256
    max_tokens: int = 64
    adapter_bottleneck: int = 8
    image_input_dim: int = 8

    def __post_init__(self):
        if self.embed_dim % self.num_heads != 0:
            raise ConfigError("embed_dim must be divisible by num_heads")
        if not 0 < self.adapter_bottleneck < self.hidden_dim:
            raise ConfigError("adapter_bottleneck must lie in (0, hidden_dim)")
        if self.vocab_size <= NUM_RESERVED:
            raise ConfigError(f"vocab_size must exceed {NUM_RESERVED}")

    def to_dict(self) -> dict:
        return {
            "embed_dim": self.embed_dim,
            "text_layers": self.text_layers,
            "num_heads": self.num_heads,
            "hidden_dim": self.hidden_dim,
            "vocab_size": self.vocab_size,
            "max_tokens": self.max_tokens,
            "adapter_bottleneck": self.adapter_bottleneck,
            "image_input_dim": self.image_input_dim,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderConfig":
        return cls(**d)


def hash_token_id(word: str, vocab_size: int) -> int:
    """Deterministic, platform-stable bucket id in [NUM_RESERVED, vocab_size)."""
    return NUM_RESERVED + zlib.crc32(word.encode("utf-8")) % (vocab_size - NUM_RESERVED)


def text_to_ids(text: str, config: EncoderConfig, pooling: str = "eos") -> list[int]:
    """Tokenize a text and append/prepend the pooling token."""
    if pooling not in ("eos", "cls"):
        raise ValueError(f"unknown pooling {pooling!r}")
    words = tokenize(text)[: config.max_tokens - 1]
    ids = [hash_token_id(w, config.vocab_size) for w in words]
    return [CLS_ID] + ids if pooling == "cls" else ids + [EOS_ID]


# ---------------------------------------------------------------------------
# Parameters


def is_adapter_key(key: str) -> bool:
    return ".ad1." in key or ".ad2." in key


class ModelParams:
    """Named tensor container for every trainable quantity (incl. log-tau)."""

    def __init__(self, config: EncoderConfig, tensors: dict[str, np.ndarray]):
        self.config = config
        self.tensors = tensors

    @property
    def has_adapters(self) -> bool:
        return any(is_adapter_key(k) for k in self.tensors)

    @property
    def tau(self) -> float:
        return float(np.exp(self.tensors["log_tau"]))

    def zeros_like(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.tensors.items()}

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, {k: v.copy() for k, v in self.tensors.items()})


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    scale = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-scale, scale, size=shape)


def _init_adapter(rng, tensors, prefix, p, a):
    tensors[prefix + "down"] = _uniform(rng, (p, a), p)
    tensors[prefix + "bdown"] = np.zeros(a)
    # Zero up-projection: the adapter starts as an exact identity residual.
    tensors[prefix + "up"] = np.zeros((a, p))
    tensors[prefix + "bup"] = np.zeros(p)


def init_params(config: EncoderConfig, seed: int, with_adapters: bool = False) -> ModelParams:
    """Seeded parameter initialization (uniform, fan-in scaled)."""
    rng = np.random.default_rng(seed)
    p, h = config.embed_dim, config.hidden_dim
    t: dict[str, np.ndarray] = {}
    t["tok_emb"] = _uniform(rng, (config.vocab_size, p), p)
    t["pos_emb"] = _uniform(rng, (config.max_tokens, p), p)
    for i in range(config.text_layers):
        pre = f"layers.{i}."
        t[pre + "ln1.g"] = np.ones(p)
        t[pre + "ln1.b"] = np.zeros(p)
        for name in ("Wq", "Wk", "Wv", "Wo"):
            t[pre + "attn." + name] = _uniform(rng, (p, p), p)
        for name in ("bq", "bk", "bv", "bo"):
            t[pre + "attn." + name] = np.zeros(p)
        t[pre + "ln2.g"] = np.ones(p)
        t[pre + "ln2.b"] = np.zeros(p)
        t[pre + "mlp.W1"] = _uniform(rng, (p, h), p)
        t[pre + "mlp.b1"] = np.zeros(h)
        t[pre + "mlp.W2"] = _uniform(rng, (h, p), h)
        t[pre + "mlp.b2"] = np.zeros(p)
        if with_adapters:
            _init_adapter(rng, t, pre + "ad1.", p, config.adapter_bottleneck)
            _init_adapter(rng, t, pre + "ad2.", p, config.adapter_bottleneck)
    t["lnf.g"] = np.ones(p)
    t["lnf.b"] = np.zeros(p)
    d = config.image_input_dim
    t["img.W1"] = _uniform(rng, (d, h), d)
    t["img.b1"] = np.zeros(h)
    t["img.W2"] = _uniform(rng, (h, p), h)
    t["img.b2"] = np.zeros(p)
    t["log_tau"] = np.array(math.log(TAU_INIT))
    return ModelParams(config, t)


def add_adapters(params: ModelParams, seed: int) -> ModelParams:
    """Attach zero-initialized adapters to an adapter-free parameter set."""
    if params.has_adapters:
        raise ConfigError("parameters already carry adapter tensors")
    rng = np.random.default_rng(seed)
    out = params.copy()
    p, a = params.config.embed_dim, params.config.adapter_bottleneck
    for i in range(params.config.text_layers):
        pre = f"layers.{i}."
        _init_adapter(rng, out.tensors, pre + "ad1.", p, a)
        _init_adapter(rng, out.tensors, pre + "ad2.", p, a)
    return out


# ---------------------------------------------------------------------------
# Primitive forward/backward pairs


def _gelu(x):
    t = np.tanh(_GELU_C * (x + 0.044715 * x**3))
    return 0.5 * x * (1.0 + t)


def _gelu_grad(x):
    t = np.tanh(_GELU_C * (x + 0.044715 * x**3))
    d_inner = _GELU_C * (1.0 + 3 * 0.044715 * x**2)
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t**2) * d_inner


def _layer_norm(x, g, b):
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + _LN_EPS)
    xhat = (x - mean) * inv
    return g * xhat + b, (xhat, inv)


def _layer_norm_backward(dy, cache, g):
    xhat, inv = cache
    lead = tuple(range(dy.ndim - 1))
    dg = (dy * xhat).sum(axis=lead)
    db = dy.sum(axis=lead)
    dxhat = dy * g
    dx = inv * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )
    return dx, dg, db


def _softmax_last(z):
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _attention_forward(x, t, pre, n_heads):
    """Bidirectional multi-head self-attention over one sequence (L, P)."""
    length, p = x.shape
    hd = p // n_heads
    scale = 1.0 / math.sqrt(hd)
    q = x @ t[pre + "Wq"] + t[pre + "bq"]
    k = x @ t[pre + "Wk"] + t[pre + "bk"]
    v = x @ t[pre + "Wv"] + t[pre + "bv"]
    qh = q.reshape(length, n_heads, hd).transpose(1, 0, 2)
    kh = k.reshape(length, n_heads, hd).transpose(1, 0, 2)
    vh = v.reshape(length, n_heads, hd).transpose(1, 0, 2)
    attn = _softmax_last(qh @ kh.transpose(0, 2, 1) * scale)
    ctx = attn @ vh
    ctx_flat = ctx.transpose(1, 0, 2).reshape(length, p)
    out = ctx_flat @ t[pre + "Wo"] + t[pre + "bo"]
    return out, (x, qh, kh, vh, attn, ctx_flat, scale)


def _attention_backward(dout, cache, t, pre, grads):
    x, qh, kh, vh, attn, ctx_flat, scale = cache
    length, p = x.shape
    n_heads = qh.shape[0]
    hd = p // n_heads

    grads[pre + "Wo"] += ctx_flat.T @ dout
    grads[pre + "bo"] += dout.sum(axis=0)
    dctx = (dout @ t[pre + "Wo"].T).reshape(length, n_heads, hd).transpose(1, 0, 2)

    dattn = dctx @ vh.transpose(0, 2, 1)
    dvh = attn.transpose(0, 2, 1) @ dctx
    # Softmax backward per attention row.
    dscores = attn * (dattn - (dattn * attn).sum(axis=-1, keepdims=True))
    dqh = dscores @ kh * scale
    dkh = dscores.transpose(0, 2, 1) @ qh * scale

    dq = dqh.transpose(1, 0, 2).reshape(length, p)
    dk = dkh.transpose(1, 0, 2).reshape(length, p)
    dv = dvh.transpose(1, 0, 2).reshape(length, p)
    grads[pre + "Wq"] += x.T @ dq
    grads[pre + "bq"] += dq.sum(axis=0)
    grads[pre + "Wk"] += x.T @ dk
    grads[pre + "bk"] += dk.sum(axis=0)
    grads[pre + "Wv"] += x.T @ dv
    grads[pre + "bv"] += dv.sum(axis=0)
    return dq @ t[pre + "Wq"].T + dk @ t[pre + "Wk"].T + dv @ t[pre + "Wv"].T


def _mlp_forward(x, t, pre):
    z = x @ t[pre + "W1"] + t[pre + "b1"]
    h = _gelu(z)
    return h @ t[pre + "W2"] + t[pre + "b2"], (x, z, h)


def _mlp_backward(dout, cache, t, pre, grads):
    x, z, h = cache
    grads[pre + "W2"] += h.T @ dout
    grads[pre + "b2"] += dout.sum(axis=0)
    dh = dout @ t[pre + "W2"].T
    dz = dh * _gelu_grad(z)
    grads[pre + "W1"] += x.T @ dz
    grads[pre + "b1"] += dz.sum(axis=0)
    return dz @ t[pre + "W1"].T


def _adapter_forward(x, t, pre):
    z = x @ t[pre + "down"] + t[pre + "bdown"]
    h = _gelu(z)
    return h @ t[pre + "up"] + t[pre + "bup"], (x, z, h)


def _adapter_backward(dout, cache, t, pre, grads):
    x, z, h = cache
    grads[pre + "up"] += h.T @ dout
    grads[pre + "bup"] += dout.sum(axis=0)
    dh = dout @ t[pre + "up"].T
    dz = dh * _gelu_grad(z)
    grads[pre + "down"] += x.T @ dz
    grads[pre + "bdown"] += dz.sum(axis=0)
    return dz @ t[pre + "down"].T


# ---------------------------------------------------------------------------
# Text encoder


def _pooling_index(token_ids: list[int], pooling: str) -> int:
    if pooling == "eos":
        if EOS_ID not in token_ids:
            raise ValueError("EOS pooling requires an EOS token in the sequence")
        return token_ids.index(EOS_ID)
    if pooling == "cls":
        if not token_ids or token_ids[0] != CLS_ID:
            raise ValueError("CLS pooling requires CLS as the first token")
        return 0
    raise ValueError(f"unknown pooling {pooling!r}")


def _text_forward(params: ModelParams, token_ids: list[int], pooling: str, use_adapters: bool):
    cfg = params.config
    t = params.tensors
    if len(token_ids) > cfg.max_tokens:
        raise ValueError(f"sequence length {len(token_ids)} exceeds max_tokens {cfg.max_tokens}")
    if any(not 0 <= i < cfg.vocab_size for i in token_ids):
        raise ValueError("token id out of vocabulary range")
    if use_adapters and not params.has_adapters:
        raise ConfigError("adapter branch requested but no adapter tensors exist")

    pool = _pooling_index(token_ids, pooling)
    # Anything after the EOS token is padding: masked out of attention by
    # simply never entering the computation.
    ids = token_ids[: pool + 1] if pooling == "eos" else list(token_ids)
    length = len(ids)

    x = t["tok_emb"][ids] + t["pos_emb"][:length]
    caches = []
    for i in range(cfg.text_layers):
        pre = f"layers.{i}."
        a_in, ln1_cache = _layer_norm(x, t[pre + "ln1.g"], t[pre + "ln1.b"])
        attn_out, attn_cache = _attention_forward(a_in, t, pre + "attn.", cfg.num_heads)
        x1 = x + attn_out
        if use_adapters:
            ad1_out, ad1_cache = _adapter_forward(x1, t, pre + "ad1.")
            x1 = x1 + ad1_out
        else:
            ad1_cache = None
        m_in, ln2_cache = _layer_norm(x1, t[pre + "ln2.g"], t[pre + "ln2.b"])
        mlp_out, mlp_cache = _mlp_forward(m_in, t, pre + "mlp.")
        x2 = x1 + mlp_out
        if use_adapters:
            ad2_out, ad2_cache = _adapter_forward(x2, t, pre + "ad2.")
            x2 = x2 + ad2_out
        else:
            ad2_cache = None
        caches.append((ln1_cache, attn_cache, ad1_cache, ln2_cache, mlp_cache, ad2_cache))
        x = x2
    y, lnf_cache = _layer_norm(x, t["lnf.g"], t["lnf.b"])
    vec = y[pool if pooling == "cls" else length - 1].copy()
    cache = {
        "ids": ids,
        "length": length,
        "pool": pool if pooling == "cls" else length - 1,
        "use_adapters": use_adapters,
        "layer_caches": caches,
        "lnf_cache": lnf_cache,
    }
    return vec, cache


def _text_backward(params: ModelParams, cache: dict, dvec: np.ndarray, grads: dict) -> None:
    cfg = params.config
    t = params.tensors
    length = cache["length"]
    use_adapters = cache["use_adapters"]

    dy = np.zeros((length, cfg.embed_dim))
    dy[cache["pool"]] = dvec
    dx, dg, db = _layer_norm_backward(dy, cache["lnf_cache"], t["lnf.g"])
    grads["lnf.g"] += dg
    grads["lnf.b"] += db

    for i in reversed(range(cfg.text_layers)):
        pre = f"layers.{i}."
        ln1_cache, attn_cache, ad1_cache, ln2_cache, mlp_cache, ad2_cache = cache["layer_caches"][i]
        if use_adapters:
            d_ad2_in = _adapter_backward(dx, ad2_cache, t, pre + "ad2.", grads)
            dx = dx + d_ad2_in
        d_mlp_in = _mlp_backward(dx, mlp_cache, t, pre + "mlp.", grads)
        d_x1a, dg, db = _layer_norm_backward(d_mlp_in, ln2_cache, t[pre + "ln2.g"])
        grads[pre + "ln2.g"] += dg
        grads[pre + "ln2.b"] += db
        dx = dx + d_x1a
        if use_adapters:
            d_ad1_in = _adapter_backward(dx, ad1_cache, t, pre + "ad1.", grads)
            dx = dx + d_ad1_in
        d_attn_in = _attention_backward(dx, attn_cache, t, pre + "attn.", grads)
        d_a, dg, db = _layer_norm_backward(d_attn_in, ln1_cache, t[pre + "ln1.g"])
        grads[pre + "ln1.g"] += dg
        grads[pre + "ln1.b"] += db
        dx = dx + d_a

    np.add.at(grads["tok_emb"], cache["ids"], dx)
    grads["pos_emb"][:length] += dx


def encode_text(
    params: ModelParams,
    token_ids: list[int],
    pooling: str = "eos",
    use_adapters: bool = False,
) -> np.ndarray:
    """Unnormalized text feature at the pooling position (shape (P,))."""
    vec, _ = _text_forward(params, token_ids, pooling, use_adapters)
    return vec


# ---------------------------------------------------------------------------
# Image encoder


def _images_forward(params: ModelParams, images: np.ndarray):
    t = params.tensors
    images = np.asarray(images, dtype=np.float64)
    squeeze = images.ndim == 1
    if squeeze:
        images = images[None, :]
    if images.shape[1] != params.config.image_input_dim:
        raise ValueError(
            f"image input dim {images.shape[1]} != configured {params.config.image_input_dim}"
        )
    z = images @ t["img.W1"] + t["img.b1"]
    h = _gelu(z)
    out = h @ t["img.W2"] + t["img.b2"]
    return out, (images, z, h, squeeze)


def _images_backward(params: ModelParams, cache, dout: np.ndarray, grads: dict) -> None:
    t = params.tensors
    images, z, h, _ = cache
    grads["img.W2"] += h.T @ dout
    grads["img.b2"] += dout.sum(axis=0)
    dh = dout @ t["img.W2"].T
    dz = dh * _gelu_grad(z)
    grads["img.W1"] += images.T @ dz
    grads["img.b1"] += dz.sum(axis=0)


def encode_image(params: ModelParams, image_vec: np.ndarray) -> np.ndarray:
    """Unnormalized image feature in R^P for one input vector."""
    out, cache = _images_forward(params, image_vec)
    return out[0] if cache[3] else out


def encode_images(params: ModelParams, images: np.ndarray) -> np.ndarray:
    out, _ = _images_forward(params, images)
    return out


# ---------------------------------------------------------------------------
# Joint loss gradients


@dataclass
class TrainBatch:
    """Inputs for one gradient computation.

    For the contrastive loss: images (B, D), token_ids (B sequences), labels
    (B,), and optional per-text adapter routing flags. For the grounding
    focal loss: region_features (M, P), token_ids (K category texts), and
    targets (M, K).
    """

    images: Optional[np.ndarray] = None
    token_ids: list = field(default_factory=list)
    labels: Optional[np.ndarray] = None
    adapter_flags: Optional[list] = None
    region_features: Optional[np.ndarray] = None
    targets: Optional[np.ndarray] = None


@dataclass
class LossSpec:
    """Which loss to differentiate and which tensors may receive gradient."""

    loss: str = "contrastive"  # "contrastive" | "ground_focal"
    trainable: str = "all"  # "all" | "adapters" | "none"
    use_adapters: bool = False
    pooling: str = "eos"
    focal_alpha: float = 0.25
    focal_gamma: float = 2.0


def _encode_texts_dedup(params, token_ids, flags, pooling):
    """Encode every distinct (sequence, branch) pair once."""
    order: list[tuple] = []
    index: dict[tuple, int] = {}
    rows = []
    for ids, flag in zip(token_ids, flags):
        key = (tuple(ids), bool(flag))
        if key not in index:
            index[key] = len(order)
            order.append(key)
        rows.append(index[key])
    encoded = []
    for ids, flag in order:
        encoded.append(_text_forward(params, list(ids), pooling, flag))
    feats = np.stack([vec for vec, _ in encoded])
    return feats[rows], encoded, rows


def _apply_trainable_mask(params: ModelParams, grads: dict, trainable: str) -> None:
    if trainable == "all":
        return
    if trainable == "none":
        for k in grads:
            grads[k][...] = 0.0
        return
    if trainable == "adapters":
        for k in grads:
            if not is_adapter_key(k):
                grads[k][...] = 0.0
        return
    raise ConfigError(f"unknown trainable selection {trainable!r}")


def grads(params: ModelParams, batch: TrainBatch, spec: LossSpec):
    """Exact analytic gradients of the selected loss.

    Returns (losses, grad_tensors) where grad_tensors is congruent to
    params.tensors; frozen tensors hold exact zeros.
    """
    from . import objective

    g = params.zeros_like()

    if spec.loss == "contrastive":
        if batch.images is None or batch.labels is None:
            raise ValueError("contrastive loss needs images and labels")
        flags = batch.adapter_flags
        if flags is None:
            flags = [spec.use_adapters] * len(batch.token_ids)
        img_raw, img_cache = _images_forward(params, batch.images)
        txt_raw, encoded, rows = _encode_texts_dedup(
            params, batch.token_ids, flags, spec.pooling
        )
        u = objective.normalize_rows(img_raw)
        v = objective.normalize_rows(txt_raw)
        sim = u @ v.T
        tau = params.tau
        loss, d_sim, d_tau = objective.grouped_contrastive_loss_with_grads(sim, batch.labels, tau)

        du = d_sim @ v
        dv = d_sim.T @ u
        d_img_raw = objective.normalize_rows_backward(img_raw, du)
        d_txt_raw = objective.normalize_rows_backward(txt_raw, dv)
        _images_backward(params, img_cache, d_img_raw, g)
        # Fold duplicate rows back onto their unique encoding.
        d_unique = np.zeros((len(encoded), params.config.embed_dim))
        np.add.at(d_unique, rows, d_txt_raw)
        for (_, cache), drow in zip(encoded, d_unique):
            _text_backward(params, cache, drow, g)
        # d loss / d log_tau via tau = exp(log_tau).
        g["log_tau"] += d_tau * tau
        losses = {
            "loss": loss.l_ic,
            "l_i2t": loss.l_i2t,
            "l_t2i": loss.l_t2i,
            "l_ic": loss.l_ic,
        }
    elif spec.loss == "ground_focal":
        from . import grounding

        if batch.region_features is None or batch.targets is None:
            raise ValueError("ground_focal loss needs region_features and targets")
        encoded = [
            _text_forward(params, list(ids), spec.pooling, spec.use_adapters)
            for ids in batch.token_ids
        ]
        bank = np.stack([vec for vec, _ in encoded], axis=1)  # (P, K)
        scores = np.asarray(batch.region_features, dtype=np.float64) @ bank
        fp = grounding.FocalParams(alpha=spec.focal_alpha, gamma=spec.focal_gamma)
        loss_val, d_scores = grounding.focal_loss_with_grad(scores, batch.targets, fp)
        d_bank = np.asarray(batch.region_features, dtype=np.float64).T @ d_scores
        for k, (_, cache) in enumerate(encoded):
            _text_backward(params, cache, d_bank[:, k], g)
        losses = {"loss": loss_val}
    else:
        raise ConfigError(f"unknown loss {spec.loss!r}")

    if not np.isfinite(losses["loss"]):
        raise NumericsError("loss is non-finite", {"losses": losses})
    _apply_trainable_mask(params, g, spec.trainable)
    return losses, g


# ---------------------------------------------------------------------------
# Checkpoints


CHECKPOINT_VERSION = 1


def save_checkpoint(params: ModelParams, path, meta: Optional[dict] = None) -> None:
    """Write a canonical-JSON checkpoint (field-wise and byte-wise stable)."""
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "encoder_config": params.config.to_dict(),
        "meta": meta or {},
        "tensors": {
            k: {"shape": list(v.shape), "data": v.ravel().tolist()}
            for k, v in params.tensors.items()
        },
    }
    Path(path).write_text(
        json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n",
        encoding="utf-8",
    )


def load_checkpoint(path) -> tuple[ModelParams, dict]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("format_version") != CHECKPOINT_VERSION:
        raise ConfigError(f"unsupported checkpoint version in {path}")
    config = EncoderConfig.from_dict(payload["encoder_config"])
    tensors = {}
    for k, spec in payload["tensors"].items():
        arr = np.array(spec["data"], dtype=np.float64).reshape(spec["shape"])
        tensors[k] = arr
    return ModelParams(config, tensors), payload.get("meta", {})
