"""Training objectives: contrastive/MSE fitting terms and the family of
base-anchored regularization penalties, all with exact sparse gradients.

Penalty menu (theta0 is the frozen base model, X' an intervened view of X):

- outreg:  || f_theta(X) - f_theta0(X) ||^2, anchoring outputs directly.
- itvreg:  ( f_theta(X)^T f_theta(X') - f_theta0(X)^T f_theta0(X') )^2,
           anchoring the *response to interventions* rather than the output.
- itvaug:  itvreg rewritten as data augmentation: precomputed pairs
           (X, X', R' = f_theta0(X)^T f_theta0(X')) fed through mse_loss.
- maskreg: ( f_theta(X)^T f_theta(X') - 1 )^2, invariance to masking with no
           base anchor.
- simcse:  ( f_theta(X, s)^T f_theta(X, s') - 1 )^2 over two dropout views.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .corpus import Corpus, Sentence
from .encoder import (
    DegenerateNormError,
    EmbeddingModel,
    EncodeError,
    VocabMismatchError,
    encode,
    encode_backward,
    encode_dropout_backward,
    encode_with_dropout,
)
from .interventions import InterventionError, mask_fraction

REGULARIZER_KINDS = ("none", "outreg", "itvreg", "itvaug", "maskreg", "simcse")


@dataclass(frozen=True)
class RegularizerConfig:
    """Penalty choice and its knobs.

    mask_fraction=None resolves to the per-kind default: 0.5 for itvreg and
    itvaug, 0.15 for maskreg.
    """

    kind: str = "none"
    lam: float = 0.1
    mask_fraction: float | None = None
    dropout_rate: float = 0.1
    itvaug_fraction: float = 1.0
    draws_per_sentence: int = 1

    def __post_init__(self) -> None:
        if self.kind not in REGULARIZER_KINDS:
            raise ValueError(f"unknown regularizer kind {self.kind!r}")
        if self.lam < 0.0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        if self.mask_fraction is not None and not (0.0 < self.mask_fraction < 1.0):
            raise ValueError(f"mask_fraction must be in (0, 1), got {self.mask_fraction}")
        if not (0.0 <= self.dropout_rate < 1.0):
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if not (0.0 <= self.itvaug_fraction <= 1.0):
            raise ValueError(f"itvaug_fraction must be in [0, 1], got {self.itvaug_fraction}")
        if self.draws_per_sentence < 1:
            raise ValueError("draws_per_sentence must be >= 1")

    @property
    def resolved_mask_fraction(self) -> float:
        if self.mask_fraction is not None:
            return self.mask_fraction
        return 0.15 if self.kind == "maskreg" else 0.5


@dataclass
class LossValue:
    """A loss evaluation with its sparse gradient (token id -> d-vector).

    Standalone ops report their own value as total (weight 1); total_loss
    composes total = erm + lambda * penalty.
    """

    erm: float
    penalty: float
    total: float
    gradient: dict[int, np.ndarray]
    n_penalty_terms: int = 0
    n_skipped_penalty: int = 0


@dataclass(frozen=True)
class AugmentedPair:
    """(X, intervened X', target similarity under the base model)."""

    x: Sentence
    x_prime: Sentence
    target: float

    def __post_init__(self) -> None:
        if not (-1.0 - 1e-9 <= self.target <= 1.0 + 1e-9):
            raise ValueError(f"target {self.target} outside [-1, 1]")


@dataclass(frozen=True)
class ContrastiveExample:
    x: Sentence
    z_pos: Sentence
    z_neg: Sentence


@dataclass(frozen=True)
class ScoredExample:
    x: Sentence
    z: Sentence
    relevance: float


@dataclass
class Batch:
    examples: list
    seed: int
    augmented: list[AugmentedPair] = field(default_factory=list)


def _accumulate(dst: dict[int, np.ndarray], src: Mapping[int, np.ndarray],
                scale: float = 1.0) -> None:
    for tok, g in src.items():
        if tok in dst:
            dst[tok] = dst[tok] + scale * g
        else:
            dst[tok] = scale * g


def contrastive_loss(
    theta: EmbeddingModel, x: Sentence, z_pos: Sentence, z_neg: Sentence
) -> LossValue:
    """Hinge max(0, 1 + f(X)^T f(Z-) - f(X)^T f(Z+)); subgradient 0 at the kink."""
    a = encode(theta, x)
    p = encode(theta, z_pos)
    n = encode(theta, z_neg)
    value = 1.0 + float(a.embedding @ n.embedding) - float(a.embedding @ p.embedding)
    if value <= 0.0:
        return LossValue(0.0, 0.0, 0.0, {})
    grad: dict[int, np.ndarray] = {}
    _accumulate(grad, encode_backward(theta, x, n.embedding - p.embedding))
    _accumulate(grad, encode_backward(theta, z_neg, a.embedding))
    _accumulate(grad, encode_backward(theta, z_pos, -a.embedding))
    return LossValue(value, 0.0, value, grad)


def mse_loss(theta: EmbeddingModel, x: Sentence, z: Sentence, target: float) -> LossValue:
    """Squared residual (f(X)^T f(Z) - target)^2.

    Targets may lie anywhere in [-1, 1]: corpus relevance grades use [0, 1],
    augmented-pair targets are base-model cosines.
    """
    if not (-1.0 - 1e-9 <= target <= 1.0 + 1e-9):
        raise ValueError(f"target {target} outside [-1, 1]")
    a = encode(theta, x)
    b = encode(theta, z)
    resid = float(a.embedding @ b.embedding) - target
    value = resid * resid
    grad: dict[int, np.ndarray] = {}
    _accumulate(grad, encode_backward(theta, x, 2.0 * resid * b.embedding))
    _accumulate(grad, encode_backward(theta, z, 2.0 * resid * a.embedding))
    return LossValue(value, 0.0, value, grad)


def _require_shared_vocab(theta: EmbeddingModel, theta0: EmbeddingModel) -> None:
    if theta.vocab is not theta0.vocab and theta.vocab != theta0.vocab:
        raise VocabMismatchError("theta and theta0 must share a vocabulary")


def outreg_penalty(theta: EmbeddingModel, theta0: EmbeddingModel, x: Sentence) -> LossValue:
    """|| f_theta(X) - f_theta0(X) ||^2; in [0, 4] for unit outputs."""
    _require_shared_vocab(theta, theta0)
    a = encode(theta, x).embedding
    a0 = encode(theta0, x).embedding
    diff = a - a0
    value = float(diff @ diff)
    grad = encode_backward(theta, x, 2.0 * diff)
    return LossValue(0.0, value, value, grad)


def itvreg_penalty(
    theta: EmbeddingModel, theta0: EmbeddingModel, x: Sentence, x_prime: Sentence
) -> LossValue:
    """Squared gap between theta's and theta0's similarity drop under the
    same intervention; zero whenever theta tracks the base model's response."""
    _require_shared_vocab(theta, theta0)
    a = encode(theta, x)
    b = encode(theta, x_prime)
    ref = float(encode(theta0, x).embedding @ encode(theta0, x_prime).embedding)
    resid = float(a.embedding @ b.embedding) - ref
    value = resid * resid
    grad: dict[int, np.ndarray] = {}
    _accumulate(grad, encode_backward(theta, x, 2.0 * resid * b.embedding))
    _accumulate(grad, encode_backward(theta, x_prime, 2.0 * resid * a.embedding))
    return LossValue(0.0, value, value, grad)


def maskreg_penalty(theta: EmbeddingModel, x: Sentence, x_prime: Sentence) -> LossValue:
    """(f(X)^T f(X') - 1)^2: push masked views to look identical."""
    a = encode(theta, x)
    b = encode(theta, x_prime)
    resid = float(a.embedding @ b.embedding) - 1.0
    value = resid * resid
    grad: dict[int, np.ndarray] = {}
    _accumulate(grad, encode_backward(theta, x, 2.0 * resid * b.embedding))
    _accumulate(grad, encode_backward(theta, x_prime, 2.0 * resid * a.embedding))
    return LossValue(0.0, value, value, grad)


def simcse_penalty(
    theta: EmbeddingModel, x: Sentence, seed_a: int, seed_b: int, rate: float
) -> LossValue:
    """(f(X, s)^T f(X, s') - 1)^2 over two dropout views of the same sentence."""
    u = encode_with_dropout(theta, x, rate, seed_a)
    v = encode_with_dropout(theta, x, rate, seed_b)
    resid = float(u.embedding @ v.embedding) - 1.0
    value = resid * resid
    grad: dict[int, np.ndarray] = {}
    _accumulate(grad, encode_dropout_backward(theta, x, rate, seed_a, 2.0 * resid * v.embedding))
    _accumulate(grad, encode_dropout_backward(theta, x, rate, seed_b, 2.0 * resid * u.embedding))
    return LossValue(0.0, value, value, grad)


def intervention_seed(batch_seed: int, index: int, draw: int = 0) -> int:
    """Deterministic per-sentence seed stream for in-batch interventions."""
    ss = np.random.SeedSequence([batch_seed, index, draw])
    return int(ss.generate_state(1, np.uint64)[0])


def build_itvaug(
    corpus: Corpus,
    theta0: EmbeddingModel,
    fraction: float,
    mask_frac: float,
    seed: int,
) -> list[AugmentedPair]:
    """Precompute augmented pairs over a seeded fraction of the corpus queries.

    Targets R' = f_theta0(X)^T f_theta0(X') are computed once and never
    revisited. Queries too short to mask or unencodable under theta0 are
    skipped (and counted in the log).
    """
    if not theta0.frozen:
        raise ValueError("theta0 must be frozen before building augmented pairs")
    if not (0.0 <= fraction <= 1.0):
        raise ValueError(f"fraction {fraction} outside [0, 1]")
    qids = sorted(corpus.queries)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(qids))
    take = int(math.floor(fraction * len(qids)))
    pairs: list[AugmentedPair] = []
    skipped = 0
    for idx in order[:take]:
        sent = theta0.vocab.encode(corpus.queries[qids[idx]])
        mask_seed = int(rng.integers(np.iinfo(np.int64).max))
        try:
            x_prime = mask_fraction(sent, mask_frac, mask_seed)
            target = float(
                encode(theta0, sent).embedding @ encode(theta0, x_prime).embedding
            )
        except (InterventionError, EncodeError):
            skipped += 1
            continue
        pairs.append(AugmentedPair(sent, x_prime, target))
    if skipped:
        import logging

        logging.getLogger(__name__).warning(
            "build_itvaug skipped %d of %d selected queries", skipped, take
        )
    return pairs


def _penalty_sentences(example) -> tuple[Sentence, ...]:
    # Penalties see queries and items alike.
    if isinstance(example, ContrastiveExample):
        return (example.x, example.z_pos)
    if isinstance(example, ScoredExample):
        return (example.x, example.z)
    raise TypeError(f"unsupported example type {type(example).__name__}")


def total_loss(
    theta: EmbeddingModel,
    theta0: EmbeddingModel | None,
    batch: Batch,
    config: RegularizerConfig,
) -> LossValue:
    """Batch-mean fitting loss plus lambda times the batch-mean penalty.

    Interventions are drawn fresh per batch from :func:`intervention_seed`,
    indexed by the sentence's flattened position, so a component-by-component
    recomputation of any example reproduces this result exactly. Sentences a
    penalty cannot handle (too short to mask, degenerate views) are skipped
    and counted, never zero-filled.
    """
    if not batch.examples:
        raise ValueError("batch must contain at least one example")
    if config.kind in ("outreg", "itvreg") and theta0 is None:
        raise ValueError(f"{config.kind} requires a base model")

    n = len(batch.examples)
    erm_sum = 0.0
    gradient: dict[int, np.ndarray] = {}
    for ex in batch.examples:
        if isinstance(ex, ContrastiveExample):
            lv = contrastive_loss(theta, ex.x, ex.z_pos, ex.z_neg)
        elif isinstance(ex, ScoredExample):
            lv = mse_loss(theta, ex.x, ex.z, ex.relevance)
        else:
            raise TypeError(f"unsupported example type {type(ex).__name__}")
        erm_sum += lv.total
        _accumulate(gradient, lv.gradient, 1.0 / n)
    erm = erm_sum / n

    terms: list[LossValue] = []
    skipped = 0
    if config.kind in ("outreg", "itvreg", "maskreg", "simcse"):
        flat_index = 0
        for ex in batch.examples:
            for sent in _penalty_sentences(ex):
                for draw in range(config.draws_per_sentence):
                    try:
                        terms.append(
                            _one_penalty(theta, theta0, sent, config,
                                         batch.seed, flat_index, draw)
                        )
                    except (InterventionError, EncodeError):
                        skipped += 1
                flat_index += 1
    elif config.kind == "itvaug":
        for ap in batch.augmented:
            terms.append(mse_loss(theta, ap.x, ap.x_prime, ap.target))

    penalty = 0.0
    if terms:
        penalty = sum(t.total for t in terms) / len(terms)
        for t in terms:
            _accumulate(gradient, t.gradient, config.lam / len(terms))

    total = erm + config.lam * penalty
    return LossValue(erm, penalty, total, gradient,
                     n_penalty_terms=len(terms), n_skipped_penalty=skipped)


def _one_penalty(
    theta: EmbeddingModel,
    theta0: EmbeddingModel | None,
    sent: Sentence,
    config: RegularizerConfig,
    batch_seed: int,
    index: int,
    draw: int,
) -> LossValue:
    if config.kind == "outreg":
        return outreg_penalty(theta, theta0, sent)
    if config.kind == "itvreg":
        x_prime = mask_fraction(
            sent, config.resolved_mask_fraction, intervention_seed(batch_seed, index, draw)
        )
        return itvreg_penalty(theta, theta0, sent, x_prime)
    if config.kind == "maskreg":
        x_prime = mask_fraction(
            sent, config.resolved_mask_fraction, intervention_seed(batch_seed, index, draw)
        )
        return maskreg_penalty(theta, sent, x_prime)
    if config.kind == "simcse":
        return simcse_penalty(
            theta,
            sent,
            intervention_seed(batch_seed, index, 2 * draw),
            intervention_seed(batch_seed, index, 2 * draw + 1),
            config.dropout_rate,
        )
    raise ValueError(f"no penalty for kind {config.kind!r}")
