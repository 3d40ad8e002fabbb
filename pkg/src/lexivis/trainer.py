"""Triplet datasets, knowledge augmentation, and the contrastive training loop.

Training modes: ``scratch_1branch`` (plain dual encoders), ``scratch_2branch``
(adapter branch routes knowledge-augmented texts, base branch routes vanilla
texts, everything trained jointly), and ``continual_adapters`` (start from a
base checkpoint, attach zero-init adapters, update only adapter tensors).
Every run is fully determined by (seed, config, data).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import compose, encoder as enc, queries
from .errors import ConfigError, DataError, NumericsError
from .knowledge import KnowledgeStore

TRAIN_MODES = ("scratch_1branch", "scratch_2branch", "continual_adapters")

OPTIMIZERS = ("sgd", "momentum", "adam")


@dataclass
class Triplet:
    """One (image, text, label) training instance.

    ``origin_text`` remembers the pre-augmentation description so label
    grouping survives augmentation (Combine emits two texts per original).
    """

    image: np.ndarray
    text: str
    kind: str = "category"
    label: Optional[int] = None
    augmented: bool = False
    origin_text: Optional[str] = None
    query: Optional[str] = None

    def group_key(self) -> str:
        return normalize_text(self.origin_text if self.origin_text is not None else self.text)


def normalize_text(text: str) -> str:
    return " ".join(text.lower().split())


def load_dataset_jsonl(path) -> list[Triplet]:
    path = Path(path)
    triplets = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            obj = json.loads(line)
            if "image" not in obj or "text" not in obj:
                raise DataError(f"{path}:{lineno}: expected {{image, text[, kind, label]}}")
            kind = obj.get("kind", "category")
            if kind not in ("category", "caption"):
                raise DataError(f"{path}:{lineno}: kind must be 'category' or 'caption'")
            triplets.append(
                Triplet(
                    image=np.asarray(obj["image"], dtype=np.float64),
                    text=str(obj["text"]),
                    kind=kind,
                    label=obj.get("label"),
                    augmented=bool(obj.get("augmented", False)),
                    origin_text=obj.get("origin_text"),
                    query=obj.get("query"),
                )
            )
    if not triplets:
        raise DataError(f"{path}: dataset is empty")
    return triplets


def save_dataset_jsonl(triplets: list[Triplet], path) -> None:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as handle:
        for t in triplets:
            row = {
                "image": [float(x) for x in np.asarray(t.image).ravel()],
                "text": t.text,
                "kind": t.kind,
                "label": t.label,
                "augmented": t.augmented,
                "origin_text": t.origin_text,
                "query": t.query,
            }
            handle.write(json.dumps(row, sort_keys=True) + "\n")


def assign_labels(triplets: list[Triplet]) -> list[Triplet]:
    """Group labels: identical (normalized) descriptions share a dense label."""
    groups: dict[str, int] = {}
    out = []
    for t in triplets:
        key = t.group_key()
        if key not in groups:
            groups[key] = len(groups)
        out.append(replace(t, label=groups[key]))
    return out


@dataclass
class AugmentAudit:
    hits: int = 0
    misses: int = 0
    emitted: int = 0

    def to_dict(self) -> dict:
        return {"hits": self.hits, "misses": self.misses, "emitted": self.emitted}


def augment_dataset(
    triplets: list[Triplet],
    store: KnowledgeStore,
    source: str,
    scheme: str = "concat",
    template: compose.PromptTemplate = compose.PromptTemplate(),
    max_tokens: int = compose.DEFAULT_MAX_TOKENS,
    lexicon: Optional[dict[str, str]] = None,
) -> tuple[list[Triplet], AugmentAudit]:
    """Rewrite every triplet's text with retrieved knowledge.

    Category names are replaced by the prompt composition; captions follow the
    Concat/Combine scheme (Combine emits two triplets per knowledge hit).
    Retrieval misses leave the text unchanged. Labels are reassigned afterward,
    grouped on the original text so Combine pairs share a label.
    """
    lexicon = lexicon or {}
    captions = [t.text for t in triplets if t.kind == "caption"]
    freq = queries.build_frequency_table(captions, lexicon) if captions else None

    audit = AugmentAudit()
    out: list[Triplet] = []
    for t in triplets:
        query = queries.construct_query(t.text, t.kind, freq=freq, lexicon=lexicon)
        item = store.retrieve(query.text, source)
        if item is None:
            audit.misses += 1
            out.append(replace(t, origin_text=t.text, query=query.text, augmented=False))
            continue
        audit.hits += 1
        if t.kind == "category":
            aug = compose.compose_class_text(template, query.text, item.text, max_tokens)
            out.append(
                replace(
                    t, text=aug.text, origin_text=t.text, query=query.text, augmented=True
                )
            )
        else:
            texts = compose.compose_caption_texts(
                t.text, query.text, item.text, scheme, max_tokens
            )
            for aug in texts:
                out.append(
                    replace(
                        t, text=aug.text, origin_text=t.text, query=query.text, augmented=True
                    )
                )
    out = assign_labels(out)
    audit.emitted = len(out)
    return out, audit


@dataclass
class TrainConfig:
    batch_size: int = 8
    epochs: int = 10
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    seed: int = 0
    mode: str = "scratch_1branch"
    scheme: str = "concat"
    source: str = "wiki_def"
    base_checkpoint: Optional[str] = None
    encoder: enc.EncoderConfig = field(default_factory=enc.EncoderConfig)

    def __post_init__(self):
        if self.batch_size < 2:
            raise ConfigError("contrastive training needs batch_size >= 2")
        if self.mode not in TRAIN_MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {TRAIN_MODES}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.mode == "continual_adapters" and self.base_checkpoint is None:
            raise ConfigError("continual_adapters mode requires a base checkpoint")


@dataclass
class TrainResult:
    params: enc.ModelParams
    trace: list[tuple]  # (step, l_i2t, l_t2i, l_ic, tau)
    branch_counts: dict
    mode: str
    seed: int


class _Optimizer:
    """Plain SGD, classical momentum, or adaptive-moment updates."""

    def __init__(self, kind: str, lr: float, tensors: dict[str, np.ndarray]):
        self.kind = kind
        self.lr = lr
        self.t = 0
        if kind == "momentum":
            self.m = {k: np.zeros_like(v) for k, v in tensors.items()}
        elif kind == "adam":
            self.m = {k: np.zeros_like(v) for k, v in tensors.items()}
            self.v = {k: np.zeros_like(v) for k, v in tensors.items()}

    def step(self, tensors: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        if self.kind == "sgd":
            for k in tensors:
                tensors[k] -= self.lr * grads[k]
            return
        if self.kind == "momentum":
            for k in tensors:
                self.m[k] = 0.9 * self.m[k] + grads[k]
                tensors[k] -= self.lr * self.m[k]
            return
        b1, b2, eps = 0.9, 0.999, 1e-8
        for k in tensors:
            self.m[k] = b1 * self.m[k] + (1 - b1) * grads[k]
            self.v[k] = b2 * self.v[k] + (1 - b2) * grads[k] ** 2
            mhat = self.m[k] / (1 - b1**self.t)
            vhat = self.v[k] / (1 - b2**self.t)
            tensors[k] -= self.lr * mhat / (np.sqrt(vhat) + eps)


def _init_for_mode(config: TrainConfig, base_params: Optional[enc.ModelParams]):
    if config.mode == "continual_adapters":
        if base_params is None:
            base_params, _ = enc.load_checkpoint(config.base_checkpoint)
        params = base_params if base_params.has_adapters else enc.add_adapters(
            base_params, seed=config.seed
        )
        return params.copy()
    with_adapters = config.mode == "scratch_2branch"
    return enc.init_params(config.encoder, seed=config.seed, with_adapters=with_adapters)


def _batch_flags(config: TrainConfig, batch: list[Triplet]) -> list[bool]:
    if config.mode == "scratch_1branch":
        return [False] * len(batch)
    if config.mode == "continual_adapters":
        return [True] * len(batch)
    # Two-branch routing: knowledge hits through the adapter branch.
    return [t.augmented for t in batch]


def train(
    config: TrainConfig,
    triplets: list[Triplet],
    base_params: Optional[enc.ModelParams] = None,
) -> TrainResult:
    """Run seeded contrastive training and return params plus the loss trace."""
    if any(t.label is None for t in triplets):
        triplets = assign_labels(triplets)
    params = _init_for_mode(config, base_params)
    cfg = params.config
    for t in triplets:
        if np.asarray(t.image).shape != (cfg.image_input_dim,):
            raise DataError(
                f"triplet image shape {np.asarray(t.image).shape} != ({cfg.image_input_dim},)"
            )

    token_cache = {t.text: enc.text_to_ids(t.text, cfg, pooling="eos") for t in triplets}
    trainable = "adapters" if config.mode == "continual_adapters" else "all"
    spec = enc.LossSpec(loss="contrastive", trainable=trainable, pooling="eos")
    optimizer = _Optimizer(config.optimizer, config.learning_rate, params.tensors)
    rng = np.random.default_rng(config.seed)

    trace = []
    branch_counts = {"base": 0, "adapter": 0}
    step = 0
    log_tau_max = np.log(enc.TAU_MAX)
    for _ in range(config.epochs):
        order = rng.permutation(len(triplets))
        for start in range(0, len(triplets), config.batch_size):
            idx = order[start : start + config.batch_size]
            if len(idx) < 2:
                continue  # a singleton batch has a degenerate contrastive loss
            batch = [triplets[i] for i in idx]
            flags = _batch_flags(config, batch)
            train_batch = enc.TrainBatch(
                images=np.stack([np.asarray(t.image, dtype=np.float64) for t in batch]),
                token_ids=[token_cache[t.text] for t in batch],
                labels=np.array([t.label for t in batch]),
                adapter_flags=flags,
            )
            try:
                losses, g = enc.grads(params, train_batch, spec)
            except NumericsError as exc:
                exc.diagnostics["step"] = step
                exc.diagnostics["batch_texts"] = [t.text for t in batch]
                raise
            optimizer.step(params.tensors, g)
            if params.tensors["log_tau"] > log_tau_max:
                params.tensors["log_tau"][...] = log_tau_max
            branch_counts["adapter"] += sum(flags)
            branch_counts["base"] += len(flags) - sum(flags)
            step += 1
            trace.append((step, losses["l_i2t"], losses["l_t2i"], losses["l_ic"], params.tau))

    return TrainResult(
        params=params, trace=trace, branch_counts=branch_counts, mode=config.mode, seed=config.seed
    )


def save_trace_csv(trace: list[tuple], path) -> None:
    path = Path(path)
    lines = ["step,l_i2t,l_t2i,l_ic,tau"]
    for step, l_i2t, l_t2i, l_ic, tau in trace:
        lines.append(f"{step},{l_i2t!r},{l_t2i!r},{l_ic!r},{tau!r}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
