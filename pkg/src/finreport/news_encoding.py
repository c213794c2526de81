"""Pooled semantic-role features of news items and the news feature matrix.

A news item is represented by three role embeddings (verb, proto-agent,
proto-patient) of dimension ``d`` and three edge vectors of dimension ``d_e``
describing the dependency links between those roles. Real SRL/SDPG encoders
are not part of this package: vectors are read from a JSON-lines store or
produced by :func:`fallback_hash_encoder`.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DimensionError, ParseError

logger = logging.getLogger(__name__)

ROLE_SLOTS = ("e_v", "e_a0", "e_a1")
EDGE_SLOTS = ("g_va0", "g_va1", "g_a0a1")
SLOTS = ROLE_SLOTS + EDGE_SLOTS

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def _as_vector(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


@dataclass(frozen=True)
class RoleEmbeddings:
    e_v: np.ndarray
    e_a0: np.ndarray
    e_a1: np.ndarray

    def __post_init__(self):
        for name in ROLE_SLOTS:
            object.__setattr__(self, name, _as_vector(getattr(self, name), name))
        if not (self.e_v.shape == self.e_a0.shape == self.e_a1.shape):
            raise DimensionError(
                f"role dimensions differ: {self.e_v.size}, {self.e_a0.size}, {self.e_a1.size}"
            )

    @property
    def dim(self) -> int:
        return self.e_v.size

    @classmethod
    def zeros(cls, d: int) -> "RoleEmbeddings":
        return cls(np.zeros(d), np.zeros(d), np.zeros(d))


@dataclass(frozen=True)
class EdgeFeatures:
    g_va0: np.ndarray
    g_va1: np.ndarray
    g_a0a1: np.ndarray

    def __post_init__(self):
        for name in EDGE_SLOTS:
            object.__setattr__(self, name, _as_vector(getattr(self, name), name))
        if not (self.g_va0.shape == self.g_va1.shape == self.g_a0a1.shape):
            raise DimensionError(
                f"edge dimensions differ: {self.g_va0.size}, {self.g_va1.size}, {self.g_a0a1.size}"
            )

    @property
    def dim(self) -> int:
        return self.g_va0.size

    @classmethod
    def zeros(cls, d_e: int) -> "EdgeFeatures":
        return cls(np.zeros(d_e), np.zeros(d_e), np.zeros(d_e))


@dataclass(frozen=True)
class NewsFeatureVector:
    roles: RoleEmbeddings
    edges: EdgeFeatures

    @property
    def d(self) -> int:
        return self.roles.dim

    @property
    def d_e(self) -> int:
        return self.edges.dim

    def __len__(self) -> int:
        return 3 * self.d + 3 * self.d_e

    def slots(self) -> tuple[np.ndarray, ...]:
        r, g = self.roles, self.edges
        return (r.e_v, r.e_a0, r.e_a1, g.g_va0, g.g_va1, g.g_a0a1)

    def flatten(self) -> np.ndarray:
        """Column layout (e_V, e_A0, e_A1, G_VA0, G_VA1, G_A0A1)."""
        return np.concatenate(self.slots())

    @classmethod
    def from_flat(cls, column, d: int, d_e: int) -> "NewsFeatureVector":
        column = np.asarray(column, dtype=np.float64)
        if column.shape != (3 * d + 3 * d_e,):
            raise DimensionError(f"expected length {3 * d + 3 * d_e}, got {column.shape}")
        cuts = np.cumsum([d, d, d, d_e, d_e])
        parts = np.split(column, cuts)
        return cls(RoleEmbeddings(*parts[:3]), EdgeFeatures(*parts[3:]))

    @classmethod
    def zeros(cls, d: int, d_e: int) -> "NewsFeatureVector":
        return cls(RoleEmbeddings.zeros(d), EdgeFeatures.zeros(d_e))

    def to_dict(self) -> dict:
        return {name: vec.tolist() for name, vec in zip(SLOTS, self.slots())}

    @classmethod
    def from_dict(cls, obj: Mapping) -> "NewsFeatureVector":
        roles = RoleEmbeddings(*(obj[name] for name in ROLE_SLOTS))
        edges = EdgeFeatures(*(obj[name] for name in EDGE_SLOTS))
        return cls(roles, edges)

    def __eq__(self, other):
        if not isinstance(other, NewsFeatureVector):
            return NotImplemented
        return all(
            a.shape == b.shape and np.array_equal(a, b)
            for a, b in zip(self.slots(), other.slots())
        )

    __hash__ = None


def pool_roles(frames: Sequence[RoleEmbeddings]) -> RoleEmbeddings:
    """Element-wise mean of several SRL frames, slot by slot."""
    if len(frames) == 0:
        raise ValueError("no SRL frames")
    d = frames[0].dim
    for i, frame in enumerate(frames):
        if frame.dim != d:
            raise DimensionError(f"frame {i} has dimension {frame.dim}, expected {d}")
    pooled = [np.mean([getattr(f, name) for f in frames], axis=0) for name in ROLE_SLOTS]
    return RoleEmbeddings(*pooled)


def pool_features(items: Sequence[NewsFeatureVector]) -> NewsFeatureVector:
    """Mean-pool several news items of one (symbol, date) into a single vector."""
    if len(items) == 0:
        raise ValueError("no news items to pool")
    roles = pool_roles([item.roles for item in items])
    d_e = items[0].d_e
    for i, item in enumerate(items):
        if item.d_e != d_e:
            raise DimensionError(f"item {i} has edge dimension {item.d_e}, expected {d_e}")
    edges = EdgeFeatures(
        *(np.mean([getattr(item.edges, name) for item in items], axis=0) for name in EDGE_SLOTS)
    )
    return NewsFeatureVector(roles, edges)


def tokenize(text: str | None) -> list[str]:
    if not text:
        return []
    return _TOKEN_RE.findall(text.lower())


def _hash_slot(items: Iterable[str], dim: int, salt: str) -> np.ndarray:
    vec = np.zeros(dim)
    for item in items:
        digest = hashlib.blake2b(f"{salt}\x1f{item}".encode("utf-8"), digest_size=8).digest()
        h = int.from_bytes(digest, "little")
        sign = 1.0 if (h >> 63) & 1 else -1.0
        vec[h % dim] += sign
    norm = np.linalg.norm(vec)
    if norm > 0:
        vec /= norm
    return vec


def fallback_hash_encoder(headline: str | None, d: int, d_e: int, seed: int = 0) -> NewsFeatureVector:
    """Deterministic hashed bag-of-tokens stand-in for the SRL/SDPG encoders.

    Role slots hash the unigrams of the headline, edge slots hash adjacent
    token pairs; every slot uses its own salt so the six blocks differ. Each
    non-empty slot is L2-normalised. An empty headline maps to zeros.
    """
    if d <= 0 or d_e <= 0:
        raise ValueError("d and d_e must be positive")
    tokens = tokenize(headline)
    pairs = [f"{a} {b}" for a, b in zip(tokens, tokens[1:])]
    roles = [_hash_slot(tokens, d, f"{seed}:{name}") for name in ROLE_SLOTS]
    edges = [_hash_slot(pairs, d_e, f"{seed}:{name}") for name in EDGE_SLOTS]
    return NewsFeatureVector(RoleEmbeddings(*roles), EdgeFeatures(*edges))


def build_news_matrix(
    items: Sequence[NewsFeatureVector], d: int | None = None, d_e: int | None = None
) -> np.ndarray:
    """Stack news items column-wise into X_n of shape (3d + 3d_e, N).

    ``d`` and ``d_e`` are only needed when ``items`` is empty.
    """
    if len(items) == 0:
        if d is None or d_e is None:
            raise ValueError("d and d_e are required to shape an empty news matrix")
        return np.zeros((3 * d + 3 * d_e, 0))
    d = items[0].d if d is None else d
    d_e = items[0].d_e if d_e is None else d_e
    for i, item in enumerate(items):
        if item.d != d or item.d_e != d_e:
            raise DimensionError(
                f"item {i} has dimensions (d={item.d}, d_e={item.d_e}), expected (d={d}, d_e={d_e})"
            )
    return np.column_stack([item.flatten() for item in items])


def save_embeddings(store: Mapping[str, NewsFeatureVector], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for key in sorted(store):
            fh.write(json.dumps({"id": key, **store[key].to_dict()}) + "\n")


def load_embeddings(path, required_ids: Iterable[str] | None = None) -> dict[str, NewsFeatureVector]:
    """Read a JSON-lines embedding store keyed by ``id``.

    Ids in ``required_ids`` that the store lacks are reported in one warning.
    """
    store: dict[str, NewsFeatureVector] = {}
    with open(Path(path), encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                key = str(obj["id"])
                store[key] = NewsFeatureVector.from_dict(obj)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"corrupt embedding record: {exc}", line=lineno) from exc
    if required_ids is not None:
        missing = sorted(set(required_ids) - store.keys())
        if missing:
            logger.warning("embedding ids missing from store: %s", ", ".join(missing))
    return store
