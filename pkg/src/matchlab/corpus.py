"""Corpora, vocabularies, splits, and synthetic benchmark generators.

A corpus is a set of queries, candidate items, and labeled (query, item,
relevance) pairs. Text is tokenized once at ingestion; token-id sentences
materialize when a corpus is bound to a :class:`Vocab`.
"""

from __future__ import annotations

import json
import math
import string
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

Tokens = tuple[str, ...]
Sentence = tuple[int, ...]

UNK_ID = 0
UNK_TOKEN = "<unk>"


class CorpusError(ValueError):
    """Malformed corpus data or an operation misused on it."""


class Pair(NamedTuple):
    query_id: str
    item_id: str
    relevance: float


def tokenize(text: str) -> Tokens:
    """Lowercase, split on whitespace, strip leading/trailing punctuation.

    Tokens that are empty after stripping are dropped.
    """
    out = []
    for raw in text.lower().split():
        tok = raw.strip(string.punctuation)
        if tok:
            out.append(tok)
    return tuple(out)


@dataclass
class Corpus:
    """Immutable-by-convention container; do not mutate after construction."""

    queries: dict[str, Tokens]
    items: dict[str, Tokens]
    pairs: list[Pair]
    query_categories: dict[str, str] = field(default_factory=dict)
    item_categories: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for qid, toks in self.queries.items():
            if len(toks) == 0:
                raise CorpusError(f"query {qid!r} has no tokens")
        for iid, toks in self.items.items():
            if len(toks) == 0:
                raise CorpusError(f"item {iid!r} has no tokens")
        for p in self.pairs:
            if p.query_id not in self.queries:
                raise CorpusError(f"pair references unknown query id {p.query_id!r}")
            if p.item_id not in self.items:
                raise CorpusError(f"pair references unknown item id {p.item_id!r}")
            if not (0.0 <= p.relevance <= 1.0):
                raise CorpusError(
                    f"pair ({p.query_id!r}, {p.item_id!r}) has relevance "
                    f"{p.relevance!r} outside [0, 1]"
                )

    def relevant_by_query(self) -> dict[str, set[str]]:
        """Ground-truth item sets: pairs with relevance exactly 1."""
        rel: dict[str, set[str]] = {}
        for p in self.pairs:
            if p.relevance == 1.0:
                rel.setdefault(p.query_id, set()).add(p.item_id)
        return rel

    def item_pair_counts(self) -> dict[str, int]:
        """Number of labeled pairs each item appears in (0 if none)."""
        counts = dict.fromkeys(self.items, 0)
        for p in self.pairs:
            counts[p.item_id] += 1
        return counts


def load_corpus(path: str | Path) -> Corpus:
    """Read a JSONL corpus; records carry a ``kind`` of query/item/pair.

    Errors name the offending line number or id.
    """
    path = Path(path)
    queries: dict[str, Tokens] = {}
    items: dict[str, Tokens] = {}
    pairs: list[Pair] = []
    qcat: dict[str, str] = {}
    icat: dict[str, str] = {}

    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path.name}:{lineno}: invalid JSON ({exc})") from None
            kind = rec.get("kind")
            if kind in ("query", "item"):
                rid = rec.get("id")
                text = rec.get("text")
                if not isinstance(rid, str) or not isinstance(text, str):
                    raise CorpusError(f"{path.name}:{lineno}: {kind} needs string 'id' and 'text'")
                table = queries if kind == "query" else items
                if rid in table:
                    raise CorpusError(f"{path.name}:{lineno}: duplicate {kind} id {rid!r}")
                toks = tokenize(text)
                if not toks:
                    raise CorpusError(f"{path.name}:{lineno}: {kind} {rid!r} tokenizes to nothing")
                table[rid] = toks
                cat = rec.get("category")
                if cat is not None:
                    if not isinstance(cat, str):
                        raise CorpusError(f"{path.name}:{lineno}: category must be a string")
                    (qcat if kind == "query" else icat)[rid] = cat
            elif kind == "pair":
                try:
                    rel = float(rec["relevance"])
                    pair = Pair(rec["query"], rec["item"], rel)
                except (KeyError, TypeError, ValueError):
                    raise CorpusError(
                        f"{path.name}:{lineno}: pair needs 'query', 'item', numeric 'relevance'"
                    ) from None
                if not (0.0 <= rel <= 1.0):
                    raise CorpusError(f"{path.name}:{lineno}: relevance {rel} outside [0, 1]")
                pairs.append(pair)
            else:
                raise CorpusError(f"{path.name}:{lineno}: unknown record kind {kind!r}")

    return Corpus(queries, items, pairs, qcat, icat)


def write_corpus(corpus: Corpus, path: str | Path) -> None:
    """Inverse of :func:`load_corpus`; queries/items sorted by id, pair order kept."""
    with open(path, "w", encoding="utf-8") as fh:
        for kind, table, cats in (
            ("query", corpus.queries, corpus.query_categories),
            ("item", corpus.items, corpus.item_categories),
        ):
            for rid in sorted(table):
                rec: dict = {"kind": kind, "id": rid, "text": " ".join(table[rid])}
                if rid in cats:
                    rec["category"] = cats[rid]
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
        for p in corpus.pairs:
            rec = {"kind": "pair", "query": p.query_id, "item": p.item_id,
                   "relevance": p.relevance}
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


@dataclass
class Vocab:
    """Token-string <-> id mapping with corpus frequencies; id 0 is reserved UNK."""

    token_to_id: dict[str, int]
    id_to_token: list[str]
    frequencies: list[int]

    def __post_init__(self) -> None:
        if not self.id_to_token or self.id_to_token[0] != UNK_TOKEN:
            raise CorpusError(f"id 0 must be the reserved {UNK_TOKEN!r} entry")
        if len(self.id_to_token) != len(self.frequencies):
            raise CorpusError("id_to_token and frequencies disagree in length")
        if len(self.token_to_id) != len(self.id_to_token) - 1:
            raise CorpusError("token_to_id must cover exactly the non-UNK ids")
        for tok, tid in self.token_to_id.items():
            if not (1 <= tid < len(self.id_to_token)) or self.id_to_token[tid] != tok:
                raise CorpusError(f"token {tok!r} maps to inconsistent id {tid}")

    def __len__(self) -> int:
        return len(self.id_to_token)

    def encode(self, tokens: Sequence[str]) -> Sentence:
        """Map token strings to ids; unknown tokens become UNK (id 0)."""
        return tuple(self.token_to_id.get(t, UNK_ID) for t in tokens)

    def decode(self, sentence: Sequence[int]) -> Tokens:
        return tuple(self.id_to_token[i] for i in sentence)

    def save(self, path: str | Path) -> None:
        """TSV rows ``token<TAB>id<TAB>frequency`` sorted by id."""
        with open(path, "w", encoding="utf-8") as fh:
            for tid, (tok, freq) in enumerate(zip(self.id_to_token, self.frequencies)):
                fh.write(f"{tok}\t{tid}\t{freq}\n")

    @classmethod
    def load(cls, path: str | Path) -> "Vocab":
        path = Path(path)
        rows: list[tuple[str, int, int]] = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 3:
                    raise CorpusError(f"{path.name}:{lineno}: expected 3 tab-separated fields")
                try:
                    rows.append((parts[0], int(parts[1]), int(parts[2])))
                except ValueError:
                    raise CorpusError(f"{path.name}:{lineno}: id/frequency not integers") from None
        rows.sort(key=lambda r: r[1])
        ids = [r[1] for r in rows]
        if ids != list(range(len(rows))):
            raise CorpusError(f"{path.name}: ids must be dense 0..{len(rows) - 1}")
        id_to_token = [r[0] for r in rows]
        freqs = [r[2] for r in rows]
        token_to_id = {tok: tid for tid, tok in enumerate(id_to_token) if tid != UNK_ID}
        if len(token_to_id) != len(id_to_token) - 1:
            raise CorpusError(f"{path.name}: duplicate token strings")
        return cls(token_to_id, id_to_token, freqs)


def build_vocab(corpus: Corpus, min_freq: int = 1) -> Vocab:
    """Count tokens over all queries and items; keep those with freq >= min_freq.

    Ids are assigned in descending frequency order, ties broken lexicographically;
    dropped tokens map to UNK, whose stored frequency is the dropped mass.
    """
    if min_freq < 1:
        raise CorpusError(f"min_freq must be >= 1, got {min_freq}")
    counts: Counter[str] = Counter()
    for toks in corpus.queries.values():
        counts.update(toks)
    for toks in corpus.items.values():
        counts.update(toks)
    if not counts:
        raise CorpusError("corpus has no tokens to build a vocabulary from")
    kept = sorted(
        ((tok, c) for tok, c in counts.items() if c >= min_freq),
        key=lambda tc: (-tc[1], tc[0]),
    )
    unk_mass = sum(c for _, c in counts.items() if c < min_freq)
    id_to_token = [UNK_TOKEN] + [tok for tok, _ in kept]
    freqs = [unk_mass] + [c for _, c in kept]
    token_to_id = {tok: tid + 1 for tid, (tok, _) in enumerate(kept)}
    return Vocab(token_to_id, id_to_token, freqs)


@dataclass(frozen=True)
class SplitSpec:
    """How to carve a corpus: 'category-holdout', 'interpolation', or 'random'."""

    kind: str
    holdout: tuple[str, ...] = ()
    fraction: float = 0.0
    seed: int = 0
    train_fraction: float = 0.9

    def __post_init__(self) -> None:
        if self.kind not in ("category-holdout", "interpolation", "random"):
            raise CorpusError(f"unknown split kind {self.kind!r}")
        if not (0.0 <= self.fraction <= 1.0):
            raise CorpusError(f"fraction {self.fraction} outside [0, 1]")
        if not (0.0 < self.train_fraction < 1.0):
            raise CorpusError(f"train_fraction {self.train_fraction} outside (0, 1)")


def _subset(corpus: Corpus, query_ids: Iterable[str]) -> Corpus:
    # Queries restricted; the candidate item set is shared in full.
    qset = set(query_ids)
    return Corpus(
        queries={q: corpus.queries[q] for q in sorted(qset)},
        items=dict(corpus.items),
        pairs=[p for p in corpus.pairs if p.query_id in qset],
        query_categories={q: c for q, c in corpus.query_categories.items() if q in qset},
        item_categories=dict(corpus.item_categories),
    )


def split_by_category(corpus: Corpus, spec: SplitSpec) -> tuple[Corpus, Corpus, Corpus]:
    """Hold out whole query categories as the OOD split; 90/10 the rest.

    Returns (train, iid_eval, ood_eval). All three share the item set.
    """
    if spec.kind != "category-holdout":
        raise CorpusError(f"split_by_category needs kind 'category-holdout', got {spec.kind!r}")
    if not spec.holdout:
        raise CorpusError("no held-out categories given")
    unlabeled = [q for q in corpus.queries if q not in corpus.query_categories]
    if unlabeled:
        raise CorpusError(f"query {unlabeled[0]!r} has no category label")
    held = set(spec.holdout)
    present = set(corpus.query_categories.values())
    for cat in sorted(held):
        if cat not in present:
            raise CorpusError(f"held-out category {cat!r} matches no query")
    ood_q = sorted(q for q, c in corpus.query_categories.items() if c in held)
    rest = sorted(q for q in corpus.queries if q not in set(ood_q))
    if not rest:
        raise CorpusError("all queries held out; train split is empty")
    rng = np.random.default_rng(spec.seed)
    order = rng.permutation(len(rest))
    n_train = int(math.floor(spec.train_fraction * len(rest)))
    if n_train == 0:
        raise CorpusError("train split is empty after the train/iid cut")
    train_q = [rest[i] for i in order[:n_train]]
    iid_q = [rest[i] for i in order[n_train:]]
    return _subset(corpus, train_q), _subset(corpus, iid_q), _subset(corpus, ood_q)


def most_frequent_categories(corpus: Corpus, k: int) -> tuple[str, ...]:
    """The k categories with the most queries (ties broken by name)."""
    counts = Counter(corpus.query_categories.values())
    if k < 1 or k > len(counts):
        raise CorpusError(f"k={k} infeasible with {len(counts)} categories")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return tuple(name for name, _ in ranked[:k])


def interpolate_ood(iid_eval: Corpus, ood_pool: Corpus, fraction: float, seed: int) -> Corpus:
    """Mix floor(fraction * |new pool items|) pool items (and their relevant
    queries) into iid_eval.

    A single seeded shuffle of the pool is prefix-sampled, so for a fixed seed
    the included item sets are nested as fraction grows.
    """
    if not (0.0 <= fraction <= 1.0):
        raise CorpusError(f"fraction {fraction} outside [0, 1]")
    new_ids = sorted(set(ood_pool.items) - set(iid_eval.items))
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(new_ids))
    take = int(math.floor(fraction * len(new_ids)))
    added_items = {new_ids[i] for i in order[:take]}

    added_queries = {
        p.query_id
        for p in ood_pool.pairs
        if p.relevance == 1.0 and p.item_id in added_items
    }
    clash = added_queries & set(iid_eval.queries)
    if clash:
        raise CorpusError(f"pool query id {sorted(clash)[0]!r} collides with iid_eval")

    queries = dict(iid_eval.queries)
    queries.update({q: ood_pool.queries[q] for q in sorted(added_queries)})
    items = dict(iid_eval.items)
    items.update({i: ood_pool.items[i] for i in sorted(added_items)})
    pairs = list(iid_eval.pairs) + [
        p for p in ood_pool.pairs
        if p.query_id in added_queries and p.item_id in added_items
    ]
    qcat = dict(iid_eval.query_categories)
    qcat.update({q: c for q, c in ood_pool.query_categories.items() if q in added_queries})
    icat = dict(iid_eval.item_categories)
    icat.update({i: c for i, c in ood_pool.item_categories.items() if i in added_items})
    return Corpus(queries, items, pairs, qcat, icat)


def item_frequency_quantiles(corpus: Corpus, n_bins: int = 5) -> dict[str, int]:
    """Assign each item to one of n_bins equal-count bins by ascending pair count.

    Ties are broken by item id; bin sizes differ by at most one, with the
    lower-frequency bins taking the remainder.
    """
    n_items = len(corpus.items)
    if n_bins < 1:
        raise CorpusError(f"n_bins must be >= 1, got {n_bins}")
    if n_bins > n_items:
        raise CorpusError(f"n_bins={n_bins} exceeds item count {n_items}")
    counts = corpus.item_pair_counts()
    order = sorted(corpus.items, key=lambda i: (counts[i], i))
    base, rem = divmod(n_items, n_bins)
    bins: dict[str, int] = {}
    pos = 0
    for b in range(n_bins):
        size = base + (1 if b < rem else 0)
        for iid in order[pos:pos + size]:
            bins[iid] = b
        pos += size
    return bins


# ---------------------------------------------------------------------------
# Synthetic spurious-correlation benchmark
# ---------------------------------------------------------------------------


def _brand_token(b: int) -> str:
    return f"brand{b}"


def _descriptor_tokens(c: int, pool: int, per_sentence: int,
                       rng: np.random.Generator) -> Tokens:
    names = [f"cat{c}d{j}" for j in range(pool)]
    if per_sentence >= pool:
        return tuple(names)
    picks = rng.choice(pool, size=per_sentence, replace=False)
    return tuple(names[j] for j in picks)


def _noise_names(n: int) -> list[str]:
    return [f"noise{k}" for k in range(n)]


def _filler_slices(n_brands: int) -> int:
    return max(1, n_brands // 2)


def _brand_noise_pools(noise_pool: list[str], n_brands: int) -> list[list[str]]:
    """Partition the filler vocabulary into slices shared by brand pairs.

    Filler is surface boilerplate (model-number conventions, platform
    templates) that travels with brands rather than categories. Brands b and
    b + n_brands//2 share a slice, so filler identifies a brand pair: still
    predictive in train, where each brand's category is fixed, but it also
    points at the twin brand's differently-labeled listings.
    """
    n_slices = _filler_slices(n_brands)
    if not noise_pool:
        return [[] for _ in range(n_brands)]
    parts = np.array_split(np.arange(len(noise_pool)), n_slices)
    slices = [[noise_pool[i] for i in part] for part in parts]
    return [slices[b % n_slices] for b in range(n_brands)]


def _make_text(brand: int, cat: int, desc_pool: int, desc_per_sentence: int,
               brand_pool: list[str], noise_per_sentence: int,
               rng: np.random.Generator) -> Tokens:
    toks = [_brand_token(brand),
            *_descriptor_tokens(cat, desc_pool, desc_per_sentence, rng)]
    if noise_per_sentence > 0 and brand_pool:
        # Small slices recycle tokens rather than shortening the sentence.
        replace = len(brand_pool) < noise_per_sentence
        picks = rng.choice(len(brand_pool), size=noise_per_sentence,
                           replace=replace)
        toks.extend(brand_pool[i] for i in picks)
    return tuple(toks)


def _same_category_pairs(queries_cat: Mapping[str, int],
                         items_cat: Mapping[str, int]) -> list[Pair]:
    by_cat: dict[int, list[str]] = {}
    for iid in sorted(items_cat):
        by_cat.setdefault(items_cat[iid], []).append(iid)
    pairs = []
    for qid in sorted(queries_cat):
        for iid in by_cat.get(queries_cat[qid], []):
            pairs.append(Pair(qid, iid, 1.0))
    return pairs


def synth_generate(
    n_brands: int,
    n_categories: int,
    queries_per_brand: int,
    noise_tokens: int,
    seed: int,
    *,
    items_per_brand: int | None = None,
    eval_queries_per_brand: int | None = None,
    descriptors_per_category: int = 2,
    descriptors_per_sentence: int | None = None,
    noise_per_sentence: int = 2,
) -> tuple[Corpus, Corpus, Corpus]:
    """Generate (train, iid_eval, ood_eval) with a planted brand confound.

    Every sentence is one brand token, a seeded draw of that category's
    descriptor tokens, and seeded filler from the brand's slice of the noise
    vocabulary (boilerplate shared with one twin brand, see
    _brand_noise_pools). Relevance is 1 iff query and item share a category.
    In train and iid_eval, brand b always carries category b mod n_categories,
    so brand identity and its filler are perfectly predictive; in ood_eval
    every brand is re-drawn to a different category, breaking the correlation
    while the category->relevance rule is unchanged. All three splits share
    the candidate item set, so for an ood query the items carrying its brand
    surface sit in the wrong category: a model leaning on brand identity
    retrieves exactly those.
    """
    if n_categories < 2 or n_brands < n_categories:
        raise CorpusError(
            f"need n_brands >= n_categories >= 2, got {n_brands}, {n_categories}"
        )
    if queries_per_brand < 1:
        raise CorpusError("queries_per_brand must be >= 1")
    n_slices = _filler_slices(n_brands)
    if noise_tokens != 0 and noise_tokens < n_slices:
        raise CorpusError(
            f"noise_tokens must be 0 or >= {n_slices} so every filler slice "
            f"is nonempty, got {noise_tokens} for {n_brands} brands"
        )
    if descriptors_per_category < 2:
        raise CorpusError("descriptors_per_category must be >= 2")
    if descriptors_per_sentence is None:
        descriptors_per_sentence = descriptors_per_category
    if not 1 <= descriptors_per_sentence <= descriptors_per_category:
        raise CorpusError(
            "descriptors_per_sentence must be in [1, descriptors_per_category]"
        )
    if items_per_brand is None:
        items_per_brand = max(1, round(queries_per_brand / 5))
    if eval_queries_per_brand is None:
        eval_queries_per_brand = max(1, queries_per_brand // 5)

    rng = np.random.default_rng(seed)
    brand_pools = _brand_noise_pools(_noise_names(noise_tokens), n_brands)
    train_cat = {b: b % n_categories for b in range(n_brands)}
    # Seeded re-draw: every brand moves to a different category.
    ood_cat = {}
    for b in range(n_brands):
        others = [c for c in range(n_categories) if c != train_cat[b]]
        ood_cat[b] = others[int(rng.integers(len(others)))]

    def gen_block(prefix: str, per_brand: int, cat_of: Mapping[int, int]):
        texts: dict[str, Tokens] = {}
        cats: dict[str, int] = {}
        for b in range(n_brands):
            for j in range(per_brand):
                rid = f"{prefix}-{b}-{j}"
                texts[rid] = _make_text(b, cat_of[b], descriptors_per_category,
                                        descriptors_per_sentence,
                                        brand_pools[b], noise_per_sentence, rng)
                cats[rid] = cat_of[b]
        return texts, cats

    train_q, train_qcat = gen_block("qry", queries_per_brand, train_cat)
    shared_items, shared_icat = gen_block("itm", items_per_brand, train_cat)
    iid_q, iid_qcat = gen_block("iidq", eval_queries_per_brand, train_cat)
    ood_q, ood_qcat = gen_block("oodq", eval_queries_per_brand, ood_cat)

    def label(cats: Mapping[str, int]) -> dict[str, str]:
        return {rid: f"cat{c}" for rid, c in cats.items()}

    train = Corpus(train_q, dict(shared_items),
                   _same_category_pairs(train_qcat, shared_icat),
                   label(train_qcat), label(shared_icat))
    iid_eval = Corpus(iid_q, dict(shared_items),
                      _same_category_pairs(iid_qcat, shared_icat),
                      label(iid_qcat), label(shared_icat))
    ood_eval = Corpus(ood_q, dict(shared_items),
                      _same_category_pairs(ood_qcat, shared_icat),
                      label(ood_qcat), label(shared_icat))
    return train, iid_eval, ood_eval


def synth_pretrain(
    n_brands: int,
    n_categories: int,
    n_queries: int,
    noise_tokens: int,
    seed: int,
    *,
    n_items: int | None = None,
    descriptors_per_category: int = 2,
    descriptors_per_sentence: int | None = None,
    noise_per_sentence: int = 2,
) -> Corpus:
    """A broad corpus over the same token universe with brand and category
    independent, for manufacturing base models that lack the planted confound.

    Brands cycle across queries (and categories across items) so every token
    is guaranteed to appear, while the paired attribute is drawn uniformly.
    """
    if n_categories < 2 or n_brands < n_categories:
        raise CorpusError(
            f"need n_brands >= n_categories >= 2, got {n_brands}, {n_categories}"
        )
    if n_queries < n_brands:
        raise CorpusError("need n_queries >= n_brands to cover every brand")
    if n_items is None:
        n_items = max(n_categories, n_queries // 5)
    if n_items < n_categories:
        raise CorpusError("need n_items >= n_categories to cover every category")
    n_slices = _filler_slices(n_brands)
    if noise_tokens != 0 and noise_tokens < n_slices:
        raise CorpusError(
            f"noise_tokens must be 0 or >= {n_slices} so every filler slice "
            f"is nonempty, got {noise_tokens} for {n_brands} brands"
        )
    if descriptors_per_sentence is None:
        descriptors_per_sentence = descriptors_per_category
    if not 1 <= descriptors_per_sentence <= descriptors_per_category:
        raise CorpusError(
            "descriptors_per_sentence must be in [1, descriptors_per_category]"
        )

    rng = np.random.default_rng(seed)
    brand_pools = _brand_noise_pools(_noise_names(noise_tokens), n_brands)
    queries: dict[str, Tokens] = {}
    qcat: dict[str, int] = {}
    for n in range(n_queries):
        brand = n % n_brands
        cat = int(rng.integers(n_categories))
        queries[f"preq-{n}"] = _make_text(brand, cat, descriptors_per_category,
                                          descriptors_per_sentence,
                                          brand_pools[brand],
                                          noise_per_sentence, rng)
        qcat[f"preq-{n}"] = cat
    items: dict[str, Tokens] = {}
    icat: dict[str, int] = {}
    for m in range(n_items):
        cat = m % n_categories
        brand = int(rng.integers(n_brands))
        items[f"preitm-{m}"] = _make_text(brand, cat, descriptors_per_category,
                                          descriptors_per_sentence,
                                          brand_pools[brand],
                                          noise_per_sentence, rng)
        icat[f"preitm-{m}"] = cat

    return Corpus(
        queries, items, _same_category_pairs(qcat, icat),
        {q: f"cat{c}" for q, c in qcat.items()},
        {i: f"cat{c}" for i, c in icat.items()},
    )
