"""Token vector providers and article vectorisation."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .textpipe import preprocess

# Settings the production word-embedding model was trained with. Kept for
# reference only; this package consumes pretrained vectors and never trains.
TRAINING_EPOCHS = 10
TRAINING_LEARNING_RATE = 0.1
TRAINING_WINDOW = 5
DEFAULT_DIMENSION = 200
DEFAULT_N_TOKENS = 50

_U64_MAX = float(2**64 - 1)


class BadVectorFile(ValueError):
    pass


class NoEmbeddableTokens(ValueError):
    pass


class TableProvider:
    """Vectors read from a word-vector text file (header ``count dim``)."""

    def __init__(self, vectors: dict[str, np.ndarray], dimension: int):
        self.dimension = dimension
        self._vectors = vectors

    def __len__(self):
        return len(self._vectors)

    def lookup(self, token: str) -> np.ndarray | None:
        return self._vectors.get(token)


def load_table_provider(path) -> TableProvider:
    path = Path(path)
    with path.open(encoding="utf-8") as f:
        header = f.readline().split()
        if len(header) != 2:
            raise BadVectorFile(f"{path}: missing 'count dimension' header")
        try:
            count, dim = int(header[0]), int(header[1])
        except ValueError as e:
            raise BadVectorFile(f"{path}: bad header {header!r}") from e
        if dim < 1:
            raise BadVectorFile(f"{path}: dimension must be positive")
        vectors = {}
        for lineno, line in enumerate(f, 2):
            parts = line.rstrip("\n").rstrip().split(" ")
            if parts == [""]:
                continue
            if len(parts) != dim + 1:
                raise BadVectorFile(f"{path}:{lineno}: expected {dim} components, got {len(parts) - 1}")
            try:
                v = np.array([float(x) for x in parts[1:]], dtype=np.float64)
            except ValueError as e:
                raise BadVectorFile(f"{path}:{lineno}: non-numeric component") from e
            if not np.all(np.isfinite(v)):
                raise BadVectorFile(f"{path}:{lineno}: non-finite component")
            vectors[parts[0]] = v
    if not vectors:
        raise BadVectorFile(f"{path}: no vectors")
    if count != len(vectors):
        raise BadVectorFile(f"{path}: header announces {count} vectors, file has {len(vectors)}")
    return TableProvider(vectors, dim)


class HashProvider:
    """Deterministic pseudo-embedding: every token gets a fixed random unit vector.

    Component ``i`` of token ``t`` is the 64-bit keyed BLAKE2b digest of
    ``(t, i)`` mapped affinely onto ``[-1, 1]``; the vector is then normalised.
    """

    def __init__(self, dimension: int = DEFAULT_DIMENSION, seed: int = 0):
        if dimension < 1:
            raise ValueError("dimension must be >= 1")
        self.dimension = int(dimension)
        self.seed = int(seed)
        self._key = self.seed.to_bytes(16, "little", signed=True)
        self.lookup = lru_cache(maxsize=65536)(self._vector)

    def _vector(self, token: str) -> np.ndarray:
        stem = token.encode("utf-8") + b"\x00"
        raw = np.empty(self.dimension, dtype=np.float64)
        for i in range(self.dimension):
            digest = hashlib.blake2b(stem + i.to_bytes(4, "little"), digest_size=8, key=self._key).digest()
            raw[i] = -1.0 + 2.0 * (int.from_bytes(digest, "little") / _U64_MAX)
        v = raw / np.linalg.norm(raw)
        v.setflags(write=False)
        return v


def hash_provider(dimension: int, seed: int = 0) -> HashProvider:
    return HashProvider(dimension, seed)


@dataclass(frozen=True)
class VectorizeConfig:
    n_tokens: int = DEFAULT_N_TOKENS

    def __post_init__(self):
        if self.n_tokens < 1:
            raise ValueError("n_tokens must be >= 1")


@dataclass(frozen=True, eq=False)
class ArticleVector:
    article_id: str
    v: np.ndarray


def article_tokens(article, cfg: VectorizeConfig, lexicon, stops) -> list[str]:
    """The first ``cfg.n_tokens`` preprocessed tokens, title first."""
    tokens = preprocess(article.title, lexicon, stops)
    if len(tokens) < cfg.n_tokens:
        tokens += preprocess(article.body, lexicon, stops)
    return tokens[: cfg.n_tokens]


def vectorize_article(article, provider, cfg: VectorizeConfig, lexicon, stops) -> ArticleVector:
    found = [v for v in map(provider.lookup, article_tokens(article, cfg, lexicon, stops)) if v is not None]
    if not found:
        raise NoEmbeddableTokens(article.article_id)
    mean = np.mean(found, axis=0)
    norm = np.linalg.norm(mean)
    if not norm > 0:
        raise NoEmbeddableTokens(f"{article.article_id}: token vectors cancel out")
    return ArticleVector(article.article_id, mean / norm)
