"""Text channel: pluggable deterministic embedding providers plus a trained
linear classification head.

The default providers are feature-hashing embedders (token -> signed bucket
via a keyed hash, L2-normalized), so the channel runs without any external
models; real sentence encoders can be registered behind the same interface.
A user is encoded as [mean of up to the 20 most recent tweet embeddings ||
description embedding].
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .errors import ConfigError, DimensionError, SingleClassError, UnknownProvider
from .ingest import UserRecord, UserStore
from .numerics import log_softmax, softmax

MAX_TWEETS = 20
TWEET_CHAR_CAP = 512
_TOKEN_RE = re.compile(r"[a-z0-9]+")


class EmbeddingProvider(Protocol):
    name: str
    dim: int

    def embed(self, text: str) -> np.ndarray: ...


@dataclass
class HashingEmbedder:
    """Deterministic feature-hashing text embedder.

    Tokens are lowercased alphanumeric runs; each maps to a signed bucket via
    a keyed blake2b hash, and the bucket-count vector is L2-normalized.
    """

    name: str
    dim: int = 256
    _token_cache: dict[str, tuple[int, float]] = field(
        default_factory=dict, repr=False
    )

    def _token_slot(self, token: str) -> tuple[int, float]:
        slot = self._token_cache.get(token)
        if slot is None:
            digest = hashlib.blake2b(
                token.encode("utf-8"), key=self.name.encode("utf-8"), digest_size=8
            ).digest()
            h = int.from_bytes(digest, "big")
            slot = (h % self.dim, 1.0 if (h >> 63) & 1 == 0 else -1.0)
            self._token_cache[token] = slot
        return slot

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim, dtype=np.float64)
        for token in _TOKEN_RE.findall(text.lower()):
            bucket, sign = self._token_slot(token)
            vec[bucket] += sign
        norm = np.linalg.norm(vec)
        if norm > 0:
            vec /= norm
        return vec


_REGISTRY: dict[str, EmbeddingProvider] = {}

# The two default text sub-models of the ensemble: same embedder family,
# independent hash keys.
DEFAULT_PROVIDER_NAMES = ("hash-a", "hash-b")


def register_provider(provider: EmbeddingProvider) -> None:
    existing = _REGISTRY.get(provider.name)
    if existing is not None and existing.dim != provider.dim:
        raise ConfigError(
            f"provider {provider.name!r} already registered with dim "
            f"{existing.dim}, cannot re-register with dim {provider.dim}"
        )
    _REGISTRY[provider.name] = provider


def get_provider(name: str) -> EmbeddingProvider:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise UnknownProvider(f"embedding provider {name!r} is not registered")


def registered_providers() -> list[str]:
    return sorted(_REGISTRY)


for _name in DEFAULT_PROVIDER_NAMES:
    register_provider(HashingEmbedder(name=_name))


def encode_user(provider: EmbeddingProvider, u: UserRecord) -> np.ndarray:
    """[tweet-mean || description] encoding of length 2 * provider.dim.

    Uses up to the 20 most recent tweets (each capped at 512 characters);
    missing tweets or an empty description contribute zero vectors.
    """
    dim = provider.dim
    tweet_part = np.zeros(dim, dtype=np.float64)
    recent = u.tweets[:MAX_TWEETS]
    if recent:
        for tweet in recent:
            emb = np.asarray(provider.embed(tweet[:TWEET_CHAR_CAP]), dtype=np.float64)
            if emb.shape != (dim,):
                raise DimensionError(
                    f"provider {provider.name!r} returned shape {emb.shape}, "
                    f"expected ({dim},)"
                )
            tweet_part += emb
        tweet_part /= len(recent)
    if u.description:
        desc_part = np.asarray(provider.embed(u.description), dtype=np.float64)
        if desc_part.shape != (dim,):
            raise DimensionError(
                f"provider {provider.name!r} returned shape {desc_part.shape}, "
                f"expected ({dim},)"
            )
    else:
        desc_part = np.zeros(dim, dtype=np.float64)
    return np.concatenate([tweet_part, desc_part])


def encode_users(
    provider: EmbeddingProvider, store: UserStore, ids: Sequence[str] | None = None
) -> np.ndarray:
    id_list = list(ids) if ids is not None else store.sorted_ids()
    out = np.zeros((len(id_list), 2 * provider.dim), dtype=np.float64)
    for i, uid in enumerate(id_list):
        out[i] = encode_user(provider, store[uid])
    return out


@dataclass
class TextConfig:
    learning_rate: float = 1e-4
    batch_size: int = 64
    epochs: int = 50
    l2: float = 1e-5
    hidden_dim: int = 128
    dropout: float = 0.5
    use_hidden: bool = False
    seed: int = 0


@dataclass
class LinearHead:
    """Two-way classification head; optionally one hidden layer with dropout."""

    W_out: np.ndarray  # (2, k) where k = input_dim or hidden_dim
    b_out: np.ndarray  # (2,)
    W_hidden: np.ndarray | None = None  # (hidden_dim, input_dim)
    b_hidden: np.ndarray | None = None  # (hidden_dim,)

    @property
    def input_dim(self) -> int:
        if self.W_hidden is not None:
            return self.W_hidden.shape[1]
        return self.W_out.shape[1]

    def to_dict(self) -> dict:
        obj = {
            "kind": "text_head",
            "W_out": self.W_out.tolist(),
            "b_out": self.b_out.tolist(),
        }
        if self.W_hidden is not None:
            obj["W_hidden"] = self.W_hidden.tolist()
            obj["b_hidden"] = self.b_hidden.tolist()
        return obj

    @classmethod
    def from_dict(cls, obj: dict) -> "LinearHead":
        return cls(
            W_out=np.asarray(obj["W_out"], dtype=np.float64),
            b_out=np.asarray(obj["b_out"], dtype=np.float64),
            W_hidden=(
                np.asarray(obj["W_hidden"], dtype=np.float64)
                if "W_hidden" in obj
                else None
            ),
            b_hidden=(
                np.asarray(obj["b_hidden"], dtype=np.float64)
                if "b_hidden" in obj
                else None
            ),
        )


def head_forward(
    head: LinearHead, X: np.ndarray, dropout_mask: np.ndarray | None = None
) -> tuple[np.ndarray, dict]:
    cache: dict = {"X": X}
    if head.W_hidden is not None:
        pre = X @ head.W_hidden.T + head.b_hidden
        h = np.maximum(pre, 0.0)
        cache["pre"] = pre
        if dropout_mask is not None:
            h = h * dropout_mask
        cache["h"] = h
        logits = h @ head.W_out.T + head.b_out
    else:
        logits = X @ head.W_out.T + head.b_out
    return logits, cache


def text_loss_and_grad(
    head: LinearHead,
    X: np.ndarray,
    y: np.ndarray,
    l2: float,
    dropout_mask: np.ndarray | None = None,
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean softmax cross-entropy plus L2 on weight matrices, with analytic
    gradients for every head parameter."""
    n = X.shape[0]
    logits, cache = head_forward(head, X, dropout_mask)
    logp = log_softmax(logits, axis=1)
    loss = float(-logp[np.arange(n), y].mean())
    loss += l2 * float((head.W_out ** 2).sum())
    if head.W_hidden is not None:
        loss += l2 * float((head.W_hidden ** 2).sum())

    dlogits = softmax(logits, axis=1)
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n
    grads: dict[str, np.ndarray] = {}
    if head.W_hidden is not None:
        h = cache["h"]
        grads["W_out"] = dlogits.T @ h + 2.0 * l2 * head.W_out
        grads["b_out"] = dlogits.sum(axis=0)
        dh = dlogits @ head.W_out
        if dropout_mask is not None:
            dh = dh * dropout_mask
        dpre = dh * (cache["pre"] > 0)
        grads["W_hidden"] = dpre.T @ X + 2.0 * l2 * head.W_hidden
        grads["b_hidden"] = dpre.sum(axis=0)
    else:
        grads["W_out"] = dlogits.T @ X + 2.0 * l2 * head.W_out
        grads["b_out"] = dlogits.sum(axis=0)
    return loss, grads


def init_head(input_dim: int, config: TextConfig) -> LinearHead:
    if config.use_hidden:
        rng = np.random.default_rng([config.seed, 1])
        scale = np.sqrt(2.0 / input_dim)
        return LinearHead(
            W_out=np.zeros((2, config.hidden_dim)),
            b_out=np.zeros(2),
            W_hidden=rng.normal(0.0, scale, size=(config.hidden_dim, input_dim)),
            b_hidden=np.zeros(config.hidden_dim),
        )
    return LinearHead(W_out=np.zeros((2, input_dim)), b_out=np.zeros(2))


def train_text_head(X: np.ndarray, y: np.ndarray, config: TextConfig) -> LinearHead:
    """Mini-batch gradient descent on cross-entropy with L2 regularization.

    Deterministic given config.seed and the input order.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if np.unique(y).size < 2:
        raise SingleClassError("text head training needs both classes")
    n = X.shape[0]
    head = init_head(X.shape[1], config)
    rng = np.random.default_rng([config.seed, 2])
    use_dropout = config.use_hidden and config.dropout > 0
    for _ in range(config.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            mask = None
            if use_dropout:
                keep = 1.0 - config.dropout
                mask = (
                    rng.random((idx.size, config.hidden_dim)) < keep
                ).astype(np.float64) / keep
            _, grads = text_loss_and_grad(head, X[idx], y[idx], config.l2, mask)
            head.W_out -= config.learning_rate * grads["W_out"]
            head.b_out -= config.learning_rate * grads["b_out"]
            if head.W_hidden is not None:
                head.W_hidden -= config.learning_rate * grads["W_hidden"]
                head.b_hidden -= config.learning_rate * grads["b_hidden"]
    return head


def predict_text(head: LinearHead, encoded: np.ndarray) -> np.ndarray:
    """Logit pair(s) for one encoding or a batch of encodings."""
    encoded = np.asarray(encoded, dtype=np.float64)
    single = encoded.ndim == 1
    X = encoded[None, :] if single else encoded
    if X.shape[1] != head.input_dim:
        raise DimensionError(
            f"encoding dim {X.shape[1]} does not match head input {head.input_dim}"
        )
    logits, _ = head_forward(head, X)
    return logits[0] if single else logits
