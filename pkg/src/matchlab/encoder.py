"""Normalized bag-of-words sentence encoder with exact sparse gradients.

A sentence embedding is the L2-normalized sum of its token embeddings, so
relevance between two encoded sentences is their cosine. Gradients flow
through the normalization via the projection Jacobian (I - u u^T) / ||s||.
"""

from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import Sentence, Vocab

NORM_EPS = 1e-9


class EncodeError(ValueError):
    """A sentence that cannot be encoded under the given model."""


class DegenerateNormError(EncodeError):
    """Pre-normalization sum too close to zero for a stable direction."""


class VocabMismatchError(ValueError):
    """Two models were combined that do not share a vocabulary."""


@dataclass
class EmbeddingModel:
    """An embedding table bound to its vocabulary.

    Frozen models are reference anchors: their tables are marked read-only
    and training must never touch them.
    """

    table: np.ndarray
    vocab: Vocab
    frozen: bool = False

    def __post_init__(self) -> None:
        table = np.asarray(self.table, dtype=np.float64)
        if table.ndim != 2:
            raise ValueError(f"table must be 2-d, got shape {table.shape}")
        if table.shape[0] != len(self.vocab):
            raise VocabMismatchError(
                f"table has {table.shape[0]} rows but vocab has {len(self.vocab)} entries"
            )
        if table.shape[1] < 2:
            raise ValueError("embedding dimension must be >= 2")
        if not np.all(np.isfinite(table)):
            raise ValueError("table contains non-finite entries")
        self.table = table
        if self.frozen:
            self.table.setflags(write=False)

    @property
    def vocab_size(self) -> int:
        return self.table.shape[0]

    @property
    def dim(self) -> int:
        return self.table.shape[1]

    def copy(self, frozen: bool = False) -> "EmbeddingModel":
        return EmbeddingModel(self.table.copy(), self.vocab, frozen=frozen)

    def freeze(self) -> "EmbeddingModel":
        self.frozen = True
        self.table.setflags(write=False)
        return self

    def checksum(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.table).tobytes()).hexdigest()


@dataclass
class EncodeResult:
    embedding: np.ndarray
    prenorm_sum: np.ndarray
    token_ids: Sentence


def init_model(vocab: Vocab, dim: int = 32, seed: int = 0) -> EmbeddingModel:
    """Uniform init in [-0.5/dim, 0.5/dim], the scale that keeps early
    bag-of-words sums well away from the degenerate-norm guard."""
    if dim < 2:
        raise ValueError("dim must be >= 2")
    rng = np.random.default_rng(seed)
    half = 0.5 / dim
    table = rng.uniform(-half, half, size=(len(vocab), dim))
    return EmbeddingModel(table, vocab)


def _check_ids(model: EmbeddingModel, sentence: Sequence[int]) -> np.ndarray:
    if len(sentence) == 0:
        raise EncodeError("cannot encode an empty sentence")
    ids = np.asarray(sentence, dtype=np.intp)
    if ids.min() < 0 or ids.max() >= model.vocab_size:
        raise EncodeError(
            f"token id out of range for vocab of size {model.vocab_size}: {sentence}"
        )
    return ids


def encode(model: EmbeddingModel, sentence: Sequence[int]) -> EncodeResult:
    """Unit-norm sum of token embeddings; errors if the sum nearly cancels."""
    ids = _check_ids(model, sentence)
    # Summing in sorted-id order makes token-order invariance bit-exact.
    s = model.table[np.sort(ids)].sum(axis=0)
    n = float(np.linalg.norm(s))
    if n <= NORM_EPS:
        raise DegenerateNormError(
            f"pre-normalization sum has norm {n:.3e} <= {NORM_EPS:g} for sentence {tuple(sentence)}"
        )
    return EncodeResult(s / n, s, tuple(sentence))


def _dropout_keep_mask(n_rows: int, dim: int, rate: float, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.random((n_rows, dim)) >= rate


def encode_with_dropout(
    model: EmbeddingModel, sentence: Sequence[int], rate: float, seed: int
) -> EncodeResult:
    """Encode with each token-embedding coordinate independently zeroed with
    probability ``rate`` and survivors scaled by 1/(1-rate).

    rate=0 reduces exactly to :func:`encode`. Two seeds give two views of the
    same sentence, the dropout-noise analogue of a masking intervention.
    """
    if not (0.0 <= rate < 1.0):
        raise EncodeError(f"dropout rate must be in [0, 1), got {rate}")
    if rate == 0.0:
        return encode(model, sentence)
    ids = _check_ids(model, sentence)
    keep = _dropout_keep_mask(len(ids), model.dim, rate, seed)
    s = (model.table[ids] * keep).sum(axis=0) / (1.0 - rate)
    n = float(np.linalg.norm(s))
    if n <= NORM_EPS:
        raise DegenerateNormError(
            f"dropout left a near-zero sum (norm {n:.3e}) for sentence {tuple(sentence)}"
        )
    return EncodeResult(s / n, s, tuple(sentence))


def relevance(model: EmbeddingModel, x: Sentence, z: Sentence) -> float:
    """Cosine relevance score between two independently encoded sentences."""
    return float(encode(model, x).embedding @ encode(model, z).embedding)


def _projected(upstream: np.ndarray, unit: np.ndarray, norm: float) -> np.ndarray:
    return (upstream - unit * (unit @ upstream)) / norm


def encode_backward(
    model: EmbeddingModel, sentence: Sequence[int], upstream: np.ndarray
) -> dict[int, np.ndarray]:
    """Gradient of upstream^T encode(sentence) w.r.t. the touched table rows.

    Every occurrence of a token contributes the same projected vector, so a
    token repeated k times accumulates k of them.
    """
    res = encode(model, sentence)
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (model.dim,):
        raise ValueError(f"upstream must have shape ({model.dim},), got {upstream.shape}")
    n = float(np.linalg.norm(res.prenorm_sum))
    g = _projected(upstream, res.embedding, n)
    return {tok: cnt * g for tok, cnt in sorted(Counter(res.token_ids).items())}


def encode_dropout_backward(
    model: EmbeddingModel,
    sentence: Sequence[int],
    rate: float,
    seed: int,
    upstream: np.ndarray,
) -> dict[int, np.ndarray]:
    """Backward pass matching :func:`encode_with_dropout` for the same seed."""
    if not (0.0 <= rate < 1.0):
        raise EncodeError(f"dropout rate must be in [0, 1), got {rate}")
    if rate == 0.0:
        return encode_backward(model, sentence, upstream)
    res = encode_with_dropout(model, sentence, rate, seed)
    upstream = np.asarray(upstream, dtype=np.float64)
    n = float(np.linalg.norm(res.prenorm_sum))
    g = _projected(upstream, res.embedding, n)
    keep = _dropout_keep_mask(len(res.token_ids), model.dim, rate, seed)
    grads: dict[int, np.ndarray] = {}
    for pos, tok in enumerate(res.token_ids):
        contrib = keep[pos] * g / (1.0 - rate)
        if tok in grads:
            grads[tok] = grads[tok] + contrib
        else:
            grads[tok] = contrib
    return grads
