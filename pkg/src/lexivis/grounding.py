"""Region-phrase grounding head: parallel text encoding, alignment, focal loss.

Category texts are encoded independently (CLS-pooled) so sequence-length
limits never depend on the number of categories; alignment scores are the
plain region-by-phrase dot product, trained with a sigmoid focal loss against
a binary match matrix. Region features arrive precomputed; only the text
encoder carries trainable parameters here.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import encoder as enc
from .errors import DataError, NumericsError
from .queries import tokenize


@dataclass
class RegionSet:
    """Precomputed region features for one image, optionally with targets."""

    image_id: str
    features: np.ndarray  # (M, P)
    targets: Optional[np.ndarray] = None  # (M, K) binary


@dataclass
class PhraseBank:
    """Per-category text encodings stacked as columns (P, K)."""

    matrix: np.ndarray
    texts: list[str] = field(default_factory=list)
    provenance: list[dict] = field(default_factory=list)


@dataclass(frozen=True)
class FocalParams:
    alpha: float = 0.25
    gamma: float = 2.0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.gamma < 0.0:
            raise ValueError("gamma must be >= 0")


def load_regions_jsonl(path) -> list[RegionSet]:
    path = Path(path)
    regions = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            obj = json.loads(line)
            if "image_id" not in obj or "features" not in obj:
                raise DataError(f"{path}:{lineno}: expected {{image_id, features[, targets]}}")
            features = np.asarray(obj["features"], dtype=np.float64)
            if features.ndim != 2 or features.shape[0] < 1:
                raise DataError(f"{path}:{lineno}: features must be a non-empty M x P matrix")
            targets = None
            if obj.get("targets") is not None:
                targets = np.asarray(obj["targets"], dtype=np.float64)
                if targets.shape[0] != features.shape[0]:
                    raise DataError(f"{path}:{lineno}: targets row count != features row count")
                if not np.isin(targets, (0.0, 1.0)).all():
                    raise DataError(f"{path}:{lineno}: targets must be binary")
            regions.append(RegionSet(str(obj["image_id"]), features, targets))
    if not regions:
        raise DataError(f"{path}: no region rows found")
    return regions


def encode_phrases_parallel(
    params: enc.ModelParams,
    texts: list[str],
    use_adapters: bool = False,
) -> PhraseBank:
    """Encode each category text independently; column k depends only on text k.

    A single text that still exceeds the sequence budget (the composer only
    truncates knowledge, never the query) is an error, not a silent cut.
    """
    if not texts:
        raise ValueError("category text list must be non-empty")
    budget = params.config.max_tokens - 1
    cols = []
    for k, text in enumerate(texts):
        words = tokenize(text)
        if len(words) > budget:
            raise ValueError(
                f"category text {k} has {len(words)} tokens; max is {budget} "
                "even after knowledge truncation"
            )
        ids = enc.text_to_ids(text, params.config, pooling="cls")
        cols.append(enc.encode_text(params, ids, pooling="cls", use_adapters=use_adapters))
    return PhraseBank(matrix=np.stack(cols, axis=1), texts=list(texts))


def ground_scores(region_features: np.ndarray, bank: np.ndarray) -> np.ndarray:
    """Alignment scores: (M, P) region features times (P, K) phrase bank."""
    v = np.asarray(region_features, dtype=np.float64)
    u = np.asarray(bank, dtype=np.float64)
    if v.ndim != 2 or u.ndim != 2 or v.shape[1] != u.shape[0]:
        raise ValueError(f"incompatible shapes {v.shape} and {u.shape}")
    return v @ u


def _softplus(x):
    # log(1 + e^x), stable for large |x|.
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def focal_loss(scores: np.ndarray, targets: np.ndarray, fp: FocalParams = FocalParams()) -> float:
    loss, _ = focal_loss_with_grad(scores, targets, fp)
    return loss


def focal_loss_with_grad(
    scores: np.ndarray, targets: np.ndarray, fp: FocalParams = FocalParams()
) -> tuple[float, np.ndarray]:
    """Summed sigmoid focal loss and its gradient w.r.t. the scores.

    Positive cells contribute -alpha (1-p)^gamma log p and negative cells
    -(1-alpha) p^gamma log(1-p), with p = sigmoid(score), computed via
    stabilized log-sigmoids.
    """
    s = np.asarray(scores, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if s.shape != t.shape:
        raise ValueError(f"scores shape {s.shape} != targets shape {t.shape}")
    if not np.all(np.isfinite(s)):
        raise NumericsError("grounding scores contain non-finite entries")

    p = 1.0 / (1.0 + np.exp(-s))
    log_p = -_softplus(-s)
    log_1mp = -_softplus(s)

    pos = -fp.alpha * (1.0 - p) ** fp.gamma * log_p
    neg = -(1.0 - fp.alpha) * p**fp.gamma * log_1mp
    loss = float(np.sum(t * pos + (1.0 - t) * neg))

    # d loss / d s, derived per cell.
    d_pos = -fp.alpha * (1.0 - p) ** fp.gamma * (fp.gamma * p * (-log_p) + (1.0 - p))
    d_neg = (1.0 - fp.alpha) * p**fp.gamma * (fp.gamma * (1.0 - p) * (-log_1mp) + p)
    grad = t * d_pos + (1.0 - t) * d_neg

    if not np.isfinite(loss):
        raise NumericsError("focal loss is non-finite")
    return loss, grad


def zero_shot_region_classify(
    params: enc.ModelParams,
    regions: RegionSet,
    texts: list[str],
    use_adapters: bool = False,
) -> list[tuple[int, float]]:
    """Per-region best category index and its sigmoid score (ties -> lowest index)."""
    bank = encode_phrases_parallel(params, texts, use_adapters=use_adapters)
    scores = ground_scores(regions.features, bank.matrix)
    out = []
    for row in scores:
        k = int(np.argmax(row))
        out.append((k, float(1.0 / (1.0 + np.exp(-row[k])))))
    return out


def region_accuracy(
    predictions: list[tuple[int, float]], targets: np.ndarray
) -> Optional[float]:
    """Accuracy over regions with at least one positive target; None if none."""
    correct = 0
    scored = 0
    for (k, _), row in zip(predictions, np.asarray(targets)):
        if row.sum() == 0:
            continue
        scored += 1
        correct += int(row[k] == 1)
    return correct / scored if scored else None
