"""Shared fixtures: tiny hand-built models and a finite-difference oracle."""

from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from matchlab import EmbeddingModel, Vocab


def make_vocab(n_tokens: int) -> Vocab:
    """Vocabulary t1..tn at ids 1..n (id 0 is UNK)."""
    tokens = [f"t{i}" for i in range(1, n_tokens + 1)]
    return Vocab(
        token_to_id={tok: i + 1 for i, tok in enumerate(tokens)},
        id_to_token=["<unk>"] + tokens,
        frequencies=[0] + [1] * n_tokens,
    )


def model_from_rows(rows, frozen: bool = False) -> EmbeddingModel:
    """Model whose tokens 1..n carry the given rows; UNK gets a tiny row."""
    rows = np.asarray(rows, dtype=np.float64)
    table = np.vstack([np.full((1, rows.shape[1]), 1e-3), rows])
    return EmbeddingModel(table, make_vocab(rows.shape[0]), frozen=frozen)


def random_model(n_tokens: int, dim: int, rng: np.random.Generator,
                 scale: float = 0.6, frozen: bool = False) -> EmbeddingModel:
    table = rng.normal(0.0, scale, size=(n_tokens + 1, dim))
    return EmbeddingModel(table, make_vocab(n_tokens), frozen=frozen)


def random_sentence(n_tokens: int, rng: np.random.Generator,
                    min_len: int = 2, max_len: int = 5) -> tuple[int, ...]:
    length = int(rng.integers(min_len, max_len + 1))
    return tuple(int(rng.integers(1, n_tokens + 1)) for _ in range(length))


def fd_gradient(
    value_fn: Callable[[], float],
    model: EmbeddingModel,
    token_ids,
    h: float = 1e-5,
) -> dict[int, np.ndarray]:
    """Central differences of value_fn w.r.t. the given table rows."""
    grads: dict[int, np.ndarray] = {}
    table = model.table
    for tok in sorted(set(token_ids)):
        g = np.zeros(model.dim)
        for j in range(model.dim):
            orig = table[tok, j]
            table[tok, j] = orig + h
            up = value_fn()
            table[tok, j] = orig - h
            down = value_fn()
            table[tok, j] = orig
            g[j] = (up - down) / (2.0 * h)
        grads[tok] = g
    return grads


def grad_rel_error(
    analytic: Mapping[int, np.ndarray], numeric: Mapping[int, np.ndarray], dim: int
) -> float:
    """Relative L2 error between two sparse gradients over their key union."""
    keys = sorted(set(analytic) | set(numeric))
    zeros = np.zeros(dim)
    a = np.concatenate([np.asarray(analytic.get(k, zeros), dtype=float) for k in keys]) \
        if keys else zeros
    b = np.concatenate([np.asarray(numeric.get(k, zeros), dtype=float) for k in keys]) \
        if keys else zeros
    denom = max(float(np.linalg.norm(b)), 1e-12)
    return float(np.linalg.norm(a - b)) / denom
