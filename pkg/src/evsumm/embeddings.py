"""Pretrained word vectors in the whitespace-separated text format."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class EmbeddingError(ValueError):
    pass


@dataclass
class EmbeddingTable:
    dimension: int
    vectors: dict[str, np.ndarray] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.vectors)

    def __contains__(self, word: str) -> bool:
        return word in self.vectors


def load_vectors(path) -> EmbeddingTable:
    table = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            word, values = parts[0], parts[1:]
            if table is None:
                if not values:
                    raise EmbeddingError(f"{path}:{lineno}: vector has no components")
                table = EmbeddingTable(len(values))
            if len(values) != table.dimension:
                raise EmbeddingError(f"{path}:{lineno}: expected {table.dimension} components, got {len(values)}")
            try:
                table.vectors[word] = np.array(values, dtype=np.float64)
            except ValueError as exc:
                raise EmbeddingError(f"{path}:{lineno}: {exc}") from None
    if table is None:
        raise EmbeddingError(f"{path}: empty vector file")
    return table


def lookup_or_init(word: str, table: EmbeddingTable, rng: np.random.Generator) -> np.ndarray:
    """Stored vector for ``word``; unseen words get U(-1, 1) components, memoized."""
    vec = table.vectors.get(word)
    if vec is None:
        vec = rng.uniform(-1.0, 1.0, table.dimension)
        table.vectors[word] = vec
    return vec


def embedding_matrix(itos, table: EmbeddingTable, rng: np.random.Generator,
                     reserved: int = 4) -> tuple[np.ndarray, np.ndarray]:
    """Rows for a vocabulary plus a mask of rows that came from the file.

    Reserved ids are always initialized as out-of-vocabulary words.
    """
    matrix = np.empty((len(itos), table.dimension))
    pretrained = np.zeros(len(itos), dtype=bool)
    for i, word in enumerate(itos):
        if i < reserved:
            matrix[i] = rng.uniform(-1.0, 1.0, table.dimension)
            continue
        pretrained[i] = word in table.vectors
        matrix[i] = lookup_or_init(word, table, rng)
    return matrix, pretrained
