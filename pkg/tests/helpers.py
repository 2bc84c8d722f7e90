"""Shared test doubles."""

from __future__ import annotations

from typing import Sequence

from eadwsd.embedding import EmbeddingVector


class TableEmbedder:
    """Embedder returning hand-picked vectors; unknown text is an error."""

    def __init__(self, table: dict[str, Sequence[float]]) -> None:
        self.table = {k: tuple(float(x) for x in v) for k, v in table.items()}
        self.calls: list[list[str]] = []

    def embed_texts(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        self.calls.append(list(texts))
        return [EmbeddingVector(values=self.table[t]) for t in texts]
