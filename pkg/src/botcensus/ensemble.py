"""Ensemble combination and the serialized model bundle.

Sub-model probabilities are combined as a weighted sum per class; the argmax
classifies a user and the bot fraction of a community is the mean of those
argmax decisions. Combination weights are fitted on validation data by
gradient descent on the NLL of the renormalized weighted-sum distribution,
with every sub-model frozen.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .calibration import apply_temperature
from .errors import (
    BundleError,
    BundleVersionError,
    DimensionError,
    EmptyCommunity,
    KeyMismatch,
    SingleClassError,
)
from .features import (
    FEATURE_NAMES,
    FeatureStats,
    compute_feature_matrix,
    normalize,
)
from .graph import GnnModel, LinearStudent, predict_student
from .ingest import CLASS_BOT, UserStore
from .tabular import BoostModel, ForestModel, predict_logits
from .text import LinearHead, encode_users, get_provider, predict_text

BUNDLE_VERSION = "1"

CHANNEL_FEATURE = "feature"
CHANNEL_TEXT = "text"
CHANNEL_GRAPH = "graph"


@dataclass
class WeightsConfig:
    # A deliberately mild fit: validation sets are small and the NLL optimum
    # chases them; stopping earlier keeps the combined decision boundary
    # balanced on fresh communities.
    learning_rate: float = 0.3
    steps: int = 120
    seed: int = 0  # recorded; the descent itself is deterministic


def fit_weights_with_history(
    P: Mapping[str, np.ndarray],
    y: np.ndarray,
    config: WeightsConfig | None = None,
) -> tuple[dict[str, float], list[float]]:
    """Fit combination weights by NLL descent; returns (weights, nll history).

    Weights start uniform at 1/M and are unconstrained; each accepted step is
    backtracked until the NLL does not increase, so the history is
    non-increasing. Sub-model outputs are inputs here and never mutated.
    """
    if config is None:
        config = WeightsConfig()
    names = sorted(P)
    if not names:
        raise KeyMismatch("fit_weights needs at least one sub-model")
    y = np.asarray(y, dtype=np.int64)
    if np.unique(y).size < 2:
        raise SingleClassError("weight fitting needs both classes")
    n = y.shape[0]
    probs = np.stack([np.asarray(P[name], dtype=np.float64) for name in names])
    if probs.shape[1] != n or probs.shape[2] != 2:
        raise DimensionError(f"probability stack has shape {probs.shape}")
    # (M, n): each sub-model's probability of the true class
    p_true = probs[:, np.arange(n), y]
    m = len(names)
    alpha = np.full(m, 1.0 / m)

    def nll(a: np.ndarray) -> float:
        mix = a @ p_true
        s = a.sum()
        if not np.all(mix > 0) or s <= 0:
            return np.inf
        return float(-np.log(mix).mean() + np.log(s))

    history = [nll(alpha)]
    for _ in range(config.steps):
        mix = alpha @ p_true
        grad = -(p_true / mix).mean(axis=1) + 1.0 / alpha.sum()
        lr = config.learning_rate
        accepted = False
        for _ in range(40):
            candidate = alpha - lr * grad
            value = nll(candidate)
            if np.isfinite(value) and value <= history[-1]:
                alpha = candidate
                history.append(value)
                accepted = True
                break
            lr /= 2.0
        if not accepted:
            break
    return {name: float(a) for name, a in zip(names, alpha)}, history


def fit_weights(
    P: Mapping[str, np.ndarray],
    y: np.ndarray,
    config: WeightsConfig | None = None,
) -> dict[str, float]:
    return fit_weights_with_history(P, y, config)[0]


def _combined_scores(
    probs: Mapping[str, np.ndarray], alpha: Mapping[str, float]
) -> np.ndarray:
    if set(probs) != set(alpha):
        raise KeyMismatch(
            f"prob keys {sorted(probs)} != weight keys {sorted(alpha)}"
        )
    names = sorted(alpha)
    first = np.atleast_2d(np.asarray(probs[names[0]], dtype=np.float64))
    combined = np.zeros_like(first)
    for name in names:
        combined += alpha[name] * np.atleast_2d(np.asarray(probs[name], dtype=np.float64))
    return combined


def classify_user(
    probs: Mapping[str, np.ndarray], alpha: Mapping[str, float]
) -> int:
    """Weighted-sum argmax for one user; exact ties resolve to human (0)."""
    combined = _combined_scores(probs, alpha)[0]
    return CLASS_BOT if combined[CLASS_BOT] > combined[0] else 0


def classify_batch(
    probs: Mapping[str, np.ndarray], alpha: Mapping[str, float]
) -> np.ndarray:
    combined = _combined_scores(probs, alpha)
    return (combined[:, CLASS_BOT] > combined[:, 0]).astype(np.int64)


@dataclass
class CommunityEstimate:
    p_hat: float
    n_users: int
    n_bots_predicted: int
    per_model_mean_bot_prob: dict[str, float] = field(default_factory=dict)


def estimate_community(
    probs: Mapping[str, np.ndarray], alpha: Mapping[str, float]
) -> CommunityEstimate:
    """Bot fraction = mean of weighted-sum argmax decisions over the
    community, with per-model mean bot probabilities as diagnostics."""
    decisions = classify_batch(probs, alpha)
    n = decisions.shape[0]
    if n == 0:
        raise EmptyCommunity("cannot estimate an empty community")
    n_bots = int(decisions.sum())
    diag = {
        name: float(np.atleast_2d(np.asarray(p))[:, CLASS_BOT].mean())
        for name, p in probs.items()
    }
    return CommunityEstimate(
        p_hat=n_bots / n,
        n_users=n,
        n_bots_predicted=n_bots,
        per_model_mean_bot_prob=diag,
    )


@dataclass
class SubModel:
    """One calibrated classifier entering the weighted ensemble."""

    name: str
    channel: str  # feature | text | graph
    kind: str  # forest | adaboost | text_head | student
    model: ForestModel | BoostModel | LinearHead | LinearStudent
    provider: str | None = None  # text heads: embedding provider name
    variant: str | None = None  # graph students: teacher variant


@dataclass
class EnsembleBundle:
    """All trained sub-models plus calibration, weights, and data plumbing.

    Immutable after assembly; classification and estimation are pure reads.
    """

    submodels: list[SubModel]
    temperatures: dict[str, float]
    alpha: dict[str, float]
    stats: FeatureStats
    providers: dict[str, int]  # provider name -> dim
    graph_text_provider: str
    feature_names: tuple[str, ...] = FEATURE_NAMES
    teachers: dict[str, GnnModel] = field(default_factory=dict)
    version: str = BUNDLE_VERSION

    def submodel_names(self) -> list[str]:
        return [s.name for s in self.submodels]

    def _node_features(
        self, store: UserStore, ids: Sequence[str], Xn: np.ndarray
    ) -> np.ndarray:
        text_enc = encode_users(get_provider(self.graph_text_provider), store, ids)
        return np.concatenate([Xn, text_enc], axis=1)

    def raw_logits(
        self, store: UserStore, ids: Sequence[str] | None = None
    ) -> tuple[list[str], dict[str, np.ndarray]]:
        """Uncalibrated (n, 2) logits per sub-model for the given users."""
        id_list = list(ids) if ids is not None else store.sorted_ids()
        _, X = compute_feature_matrix(store, id_list)
        Xn = normalize(X, self.stats)
        encodings: dict[str, np.ndarray] = {}
        node_feats: np.ndarray | None = None
        out: dict[str, np.ndarray] = {}
        for sub in self.submodels:
            if sub.channel == CHANNEL_FEATURE:
                out[sub.name] = predict_logits(sub.model, Xn)
            elif sub.channel == CHANNEL_TEXT:
                if sub.provider not in encodings:
                    encodings[sub.provider] = encode_users(
                        get_provider(sub.provider), store, id_list
                    )
                out[sub.name] = predict_text(sub.model, encodings[sub.provider])
            else:
                if node_feats is None:
                    node_feats = self._node_features(store, id_list, Xn)
                out[sub.name] = predict_student(sub.model, node_feats)
        return id_list, out

    def calibrated_probs(
        self,
        store: UserStore,
        ids: Sequence[str] | None = None,
        temperatures: Mapping[str, float] | None = None,
    ) -> tuple[list[str], dict[str, np.ndarray]]:
        temps = self.temperatures if temperatures is None else temperatures
        id_list, logits = self.raw_logits(store, ids)
        probs = {name: apply_temperature(z, temps[name]) for name, z in logits.items()}
        return id_list, probs

    def estimate(
        self,
        store: UserStore,
        ids: Sequence[str] | None = None,
        temperatures: Mapping[str, float] | None = None,
    ) -> CommunityEstimate:
        if len(store) == 0:
            raise EmptyCommunity("store holds no users")
        _, probs = self.calibrated_probs(store, ids, temperatures)
        return estimate_community(probs, self.alpha)


def _model_from_dict(kind: str, obj: dict):
    if kind == "forest":
        return ForestModel.from_dict(obj)
    if kind == "adaboost":
        return BoostModel.from_dict(obj)
    if kind in ("text_head", "student"):
        return LinearHead.from_dict(obj)
    raise BundleError(f"unknown sub-model kind {kind!r}")


def save_bundle(bundle: EnsembleBundle, path: str | Path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    manifest = {
        "version": bundle.version,
        "feature_names": list(bundle.feature_names),
        "normalizer": bundle.stats.to_dict(),
        "providers": bundle.providers,
        "graph_text_provider": bundle.graph_text_provider,
        "temperatures": bundle.temperatures,
        "alpha": bundle.alpha,
        "submodels": [],
        "archive": {},
    }
    for sub in bundle.submodels:
        fname = f"{sub.name}.json"
        entry = {
            "name": sub.name,
            "channel": sub.channel,
            "kind": sub.kind,
            "file": fname,
        }
        if sub.provider is not None:
            entry["provider"] = sub.provider
        if sub.variant is not None:
            entry["variant"] = sub.variant
        manifest["submodels"].append(entry)
        payload = sub.model.to_dict()
        payload["version"] = bundle.version
        with open(path / fname, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, sort_keys=True)
    if bundle.teachers:
        (path / "archive").mkdir(exist_ok=True)
        for name, teacher in bundle.teachers.items():
            fname = f"archive/teacher_{name}.json"
            manifest["archive"][name] = fname
            payload = teacher.to_dict()
            payload["version"] = bundle.version
            with open(path / fname, "w", encoding="utf-8") as fh:
                json.dump(payload, fh, sort_keys=True)
    with open(path / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def load_bundle(path: str | Path, include_teachers: bool = False) -> EnsembleBundle:
    """Load and validate a bundle directory; any invariant failure is a hard
    error."""
    path = Path(path)
    try:
        with open(path / "manifest.json", encoding="utf-8") as fh:
            manifest = json.load(fh)
    except FileNotFoundError:
        raise BundleError(f"no manifest.json under {path}")
    version = manifest.get("version")
    if version != BUNDLE_VERSION:
        raise BundleVersionError(
            f"bundle version {version!r} != supported {BUNDLE_VERSION!r}"
        )
    feature_names = tuple(manifest["feature_names"])
    if feature_names != FEATURE_NAMES:
        raise BundleError("bundle feature registry does not match this package")
    stats = FeatureStats.from_dict(manifest["normalizer"])
    if stats.mean.shape != (len(FEATURE_NAMES),) or stats.stddev.shape != (
        len(FEATURE_NAMES),
    ):
        raise BundleError("normalizer stats have the wrong length")

    providers = {str(k): int(v) for k, v in manifest["providers"].items()}
    for pname, dim in providers.items():
        provider = get_provider(pname)  # raises UnknownProvider when missing
        if provider.dim != dim:
            raise BundleError(
                f"provider {pname!r} registered with dim {provider.dim}, "
                f"bundle expects {dim}"
            )
    graph_text_provider = manifest["graph_text_provider"]
    if graph_text_provider not in providers:
        raise BundleError(
            f"graph text provider {graph_text_provider!r} missing from manifest"
        )

    temperatures = {k: float(v) for k, v in manifest["temperatures"].items()}
    alpha = {k: float(v) for k, v in manifest["alpha"].items()}

    submodels: list[SubModel] = []
    for entry in manifest["submodels"]:
        with open(path / entry["file"], encoding="utf-8") as fh:
            payload = json.load(fh)
        if payload.get("version") != BUNDLE_VERSION:
            raise BundleVersionError(
                f"sub-model {entry['name']!r} has version {payload.get('version')!r}"
            )
        model = _model_from_dict(entry["kind"], payload)
        submodels.append(
            SubModel(
                name=entry["name"],
                channel=entry["channel"],
                kind=entry["kind"],
                model=model,
                provider=entry.get("provider"),
                variant=entry.get("variant"),
            )
        )

    names = {s.name for s in submodels}
    if set(temperatures) != names or set(alpha) != names:
        raise BundleError("temperatures and alpha must cover every sub-model")
    for name, T in temperatures.items():
        if not (np.isfinite(T) and T > 0):
            raise BundleError(f"temperature for {name!r} must be finite and > 0")
    for name, a in alpha.items():
        if not np.isfinite(a):
            raise BundleError(f"alpha for {name!r} must be finite")

    n_feat = len(FEATURE_NAMES)
    for sub in submodels:
        if sub.channel == CHANNEL_FEATURE and sub.model.n_features != n_feat:
            raise BundleError(f"{sub.name!r} expects {sub.model.n_features} features")
        if sub.channel == CHANNEL_TEXT:
            if sub.provider not in providers:
                raise BundleError(f"{sub.name!r} uses unlisted provider {sub.provider!r}")
            if sub.model.input_dim != 2 * providers[sub.provider]:
                raise BundleError(f"{sub.name!r} head dim mismatch with provider")
        if sub.channel == CHANNEL_GRAPH:
            expected = n_feat + 2 * providers[graph_text_provider]
            if sub.model.input_dim != expected:
                raise BundleError(
                    f"student {sub.name!r} input {sub.model.input_dim} != {expected}"
                )

    teachers: dict[str, GnnModel] = {}
    if include_teachers:
        for name, fname in manifest.get("archive", {}).items():
            with open(path / fname, encoding="utf-8") as fh:
                payload = json.load(fh)
            teachers[name] = GnnModel.from_dict(payload)

    return EnsembleBundle(
        submodels=submodels,
        temperatures=temperatures,
        alpha=alpha,
        stats=stats,
        providers=providers,
        graph_text_provider=graph_text_provider,
        feature_names=feature_names,
        teachers=teachers,
    )
