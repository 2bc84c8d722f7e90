"""Neighbour-word context extraction.

Given a sentence with one ``<WSD>``-marked span, take up to ``window``
content tokens on each side, score each window token by cosine similarity
between its embedding and the target's, and keep the ``top_k`` ranked
neighbours as disambiguation cues.

Tokenization is in-house Unicode word segmentation: letter runs (with
internal apostrophes) are lowercased, a trailing possessive ``'s`` is
stripped, tokens containing any non-letter character are dropped, and
stopwords from a shipped versioned list are removed.  Cosine ranking is a
salience heuristic over surface strings; it does not model syntax.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

from .corpus import WsdInstance, split_marked_sentence
from .embedding import Embedder, EmbeddingBackendConfig, as_embedder, cosine
from .errors import ConfigError

SIDE_PRE = "pre"
SIDE_POST = "post"

# letter runs, optionally chained with internal ASCII or typographic apostrophes
_WORD_RE = re.compile(r"[^\W\d_]+(?:['’][^\W\d_]+)*", re.UNICODE)
_POSSESSIVE_RE = re.compile(r"['’]s$")


@lru_cache(maxsize=None)
def stopwords(list_id: str) -> frozenset[str]:
    if list_id != "en-v1":
        raise ConfigError(f"unknown stopword list: {list_id!r}")
    text = resources.files("eadwsd.data").joinpath("stopwords-en-v1.txt").read_text("utf-8")
    return frozenset(
        line.strip() for line in text.splitlines() if line.strip() and not line.startswith("#")
    )


def word_tokens(text: str) -> list[str]:
    """Lowercased alphabetic tokens, possessives stripped, stopwords kept."""
    out: list[str] = []
    for raw in _WORD_RE.findall(text):
        token = _POSSESSIVE_RE.sub("", raw.lower())
        if token and token.isalpha():
            out.append(token)
    return out


def content_tokens(text: str, stopword_list_id: str = "en-v1") -> list[str]:
    """:func:`word_tokens` minus the named stopword list, order preserved."""
    stops = stopwords(stopword_list_id)
    return [token for token in word_tokens(text) if token not in stops]


@dataclass(frozen=True)
class ContextConfig:
    window: int = 10
    top_k: int = 5
    stopword_list_id: str = "en-v1"

    def __post_init__(self) -> None:
        if self.window < 1:
            raise ConfigError("window must be >= 1")
        if self.top_k < 1:
            raise ConfigError("top_k must be >= 1")


@dataclass(frozen=True)
class RankedToken:
    token: str
    similarity: float
    side: str  # "pre" | "post"
    distance: int  # 1 = adjacent to the target on its side


@dataclass(frozen=True)
class ContextFeatures:
    target: str
    preceding: tuple[str, ...]
    following: tuple[str, ...]
    ranked: tuple[RankedToken, ...]
    top_k_tokens: tuple[str, ...]

    def to_dict(self, instance_id: str | None = None) -> dict:
        obj: dict = {}
        if instance_id is not None:
            obj["instance_id"] = instance_id
        obj.update(
            {
                "target": self.target,
                "preceding": list(self.preceding),
                "following": list(self.following),
                "ranked": [
                    {"token": r.token, "sim": r.similarity, "side": r.side, "distance": r.distance}
                    for r in self.ranked
                ],
                "top_k": list(self.top_k_tokens),
            }
        )
        return obj


def split_on_marker(sentence: str) -> tuple[str, str, str]:
    """Split a marked sentence into (pre_text, target, post_text).

    Concatenating ``pre + "<WSD>" + target + "</WSD>" + post`` reproduces the
    input exactly.
    """
    return split_marked_sentence(sentence)


def _rank_key(item: RankedToken) -> tuple:
    # similarity desc, then nearer first, then pre before post, then lexicographic
    return (-item.similarity, item.distance, 0 if item.side == SIDE_PRE else 1, item.token)


def extract_features(
    instance: WsdInstance,
    cfg: ContextConfig,
    backend: EmbeddingBackendConfig | Embedder,
) -> ContextFeatures:
    """Window, score, and rank the content tokens around the marked span.

    ``preceding`` is the last ``window`` content tokens before the span,
    ``following`` the first ``window`` after it.  Duplicate window tokens
    stay as distinct entries (distinct positions).  An empty window yields
    empty rankings, not an error.
    """
    pre_text, target, post_text = split_on_marker(instance.sentence)
    pre_all = content_tokens(pre_text, cfg.stopword_list_id)
    post_all = content_tokens(post_text, cfg.stopword_list_id)
    preceding = tuple(pre_all[-cfg.window :]) if pre_all else ()
    following = tuple(post_all[: cfg.window])

    positions: list[tuple[str, str, int]] = []
    for offset, token in enumerate(reversed(preceding), start=1):
        positions.append((token, SIDE_PRE, offset))
    for offset, token in enumerate(following, start=1):
        positions.append((token, SIDE_POST, offset))

    if not positions:
        return ContextFeatures(
            target=target, preceding=preceding, following=following, ranked=(), top_k_tokens=()
        )

    embedder = as_embedder(backend)
    vectors = embedder.embed_texts([target.lower()] + [token for token, _, _ in positions])
    target_vec = vectors[0]
    ranked = sorted(
        (
            RankedToken(token=token, similarity=cosine(target_vec, vec), side=side, distance=dist)
            for (token, side, dist), vec in zip(positions, vectors[1:])
        ),
        key=_rank_key,
    )
    top = tuple(item.token for item in ranked[: cfg.top_k])
    return ContextFeatures(
        target=target,
        preceding=preceding,
        following=following,
        ranked=tuple(ranked),
        top_k_tokens=top,
    )
