"""End-to-end training orchestration: splits, per-channel training, teacher
distillation, calibration, and weight fitting, producing an EnsembleBundle.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .calibration import fit_temperature
from .config import PipelineConfig
from .ensemble import (
    CHANNEL_FEATURE,
    CHANNEL_GRAPH,
    CHANNEL_TEXT,
    EnsembleBundle,
    SubModel,
    fit_weights_with_history,
)
from .features import compute_feature_matrix, fit_normalizer, normalize
from .graph import UNLABELED, build_graph, distill_student, train_gnn
from .ingest import EdgeList, UserStore, split_train_val
from .tabular import BoostConfig, boost_margin, train_adaboost, train_forest
from .text import encode_users, get_provider, train_text_head

# The four graph sub-models: the attention-over-edges family enters twice
# with independent seeds.
GRAPH_VARIANT_PLAN = (
    ("graph_mean", "mean_relational", 0),
    ("graph_edge_attn_a", "attn_edge_type", 1),
    ("graph_edge_attn_b", "attn_edge_type", 2),
    ("graph_rel_attn", "attn_relation", 3),
)


@dataclass
class TrainResult:
    bundle: EnsembleBundle
    train_ids: list[str]
    val_ids: list[str]
    weight_nll_history: list[float]


def train_bundle(
    store: UserStore,
    edges: EdgeList,
    config: PipelineConfig,
    calibrate: bool = True,
) -> TrainResult:
    """Train every sub-model on the labeled train split, then (optionally)
    fit per-model temperatures and combination weights on the validation
    split. Deterministic given config.seed."""
    train_store, val_store = split_train_val(
        store, config.val_fraction, config.seed
    )
    train_ids = train_store.sorted_ids()
    val_ids = val_store.sorted_ids()

    all_ids, X_all = compute_feature_matrix(store)
    pos = {uid: i for i, uid in enumerate(all_ids)}
    train_idx = np.asarray([pos[uid] for uid in train_ids])
    stats = fit_normalizer(X_all[train_idx])
    Xn_all = normalize(X_all, stats)

    y_train = store.label_array(train_ids)
    Xn_train = Xn_all[train_idx]

    submodels: list[SubModel] = []
    forest = train_forest(Xn_train, y_train, config.forest)
    submodels.append(
        SubModel("random_forest", CHANNEL_FEATURE, "forest", forest)
    )
    boost = train_adaboost(Xn_train, y_train, config.adaboost)
    submodels.append(SubModel("adaboost", CHANNEL_FEATURE, "adaboost", boost))

    providers = {}
    encodings = {}
    for offset, pname in enumerate(config.text_providers):
        provider = get_provider(pname)
        providers[pname] = provider.dim
        encodings[pname] = encode_users(provider, store, all_ids)
        text_cfg = dataclasses.replace(config.text, seed=config.text.seed + offset)
        head = train_text_head(encodings[pname][train_idx], y_train, text_cfg)
        submodels.append(
            SubModel(f"text_{pname}", CHANNEL_TEXT, "text_head", head,
                     provider=pname)
        )

    graph_text_provider = config.text_providers[0]
    node_features = {
        uid: np.concatenate([Xn_all[pos[uid]], encodings[graph_text_provider][pos[uid]]])
        for uid in all_ids
    }
    g = build_graph(store, edges, node_features)
    y_nodes = np.full(g.n_nodes, UNLABELED, dtype=np.int64)
    gpos = {uid: i for i, uid in enumerate(g.node_ids)}
    for uid in train_ids:
        y_nodes[gpos[uid]] = store.label_array([uid])[0]

    teachers = {}
    for name, variant, offset in GRAPH_VARIANT_PLAN:
        graph_cfg = dataclasses.replace(
            config.graph, variant=variant, seed=config.graph.seed + offset
        )
        teacher = train_gnn(g, y_nodes, graph_cfg)
        teachers[name] = teacher
        distill_cfg = dataclasses.replace(
            config.distill, seed=config.distill.seed + offset
        )
        student = distill_student(
            teacher, g, y_nodes, config.distill.lam, distill_cfg
        )
        submodels.append(
            SubModel(name, CHANNEL_GRAPH, "student", student, variant=variant)
        )

    names = [s.name for s in submodels]
    bundle = EnsembleBundle(
        submodels=submodels,
        temperatures={name: 1.0 for name in names},
        alpha={name: 1.0 / len(names) for name in names},
        stats=stats,
        providers=providers,
        graph_text_provider=graph_text_provider,
        teachers=teachers,
    )
    history: list[float] = []
    if calibrate:
        bundle = calibrate_bundle(bundle, val_store)
        bundle, history = fit_bundle_weights(bundle, val_store, config)
    return TrainResult(
        bundle=bundle,
        train_ids=train_ids,
        val_ids=val_ids,
        weight_nll_history=history,
    )


def calibrate_bundle(bundle: EnsembleBundle, val_store: UserStore) -> EnsembleBundle:
    """Fit one temperature per sub-model on the validation users (labels
    required); sub-model parameters stay untouched."""
    val_ids = val_store.labeled_ids()
    y_val = val_store.label_array(val_ids)
    _, logits = bundle.raw_logits(val_store, val_ids)
    temperatures = {
        name: fit_temperature(z, y_val) for name, z in logits.items()
    }
    return dataclasses.replace(bundle, temperatures=temperatures)


def fit_bundle_weights(
    bundle: EnsembleBundle,
    val_store: UserStore,
    config: PipelineConfig | None = None,
) -> tuple[EnsembleBundle, list[float]]:
    """Fit combination weights on calibrated validation probabilities."""
    val_ids = val_store.labeled_ids()
    y_val = val_store.label_array(val_ids)
    _, probs = bundle.calibrated_probs(val_store, val_ids)
    weights_cfg = config.weights if config is not None else None
    alpha, history = fit_weights_with_history(probs, y_val, weights_cfg)
    return dataclasses.replace(bundle, alpha=alpha), history


def train_verified_stump(store: UserStore):
    """Single-feature baseline: a one-round boosted stump over the verified
    flag alone, for perturbation comparisons."""
    ids = store.labeled_ids()
    y = store.label_array(ids)
    X = np.asarray(
        [[1.0 if store[uid].verified else 0.0] for uid in ids], dtype=np.float64
    )
    return train_adaboost(X, y, BoostConfig(rounds=1))


def verified_stump_estimate(stump, store: UserStore) -> float:
    """Fraction of users the verified-only stump classifies as bots."""
    ids = store.sorted_ids()
    X = np.asarray(
        [[1.0 if store[uid].verified else 0.0] for uid in ids], dtype=np.float64
    )
    margin = boost_margin(stump, X)
    return float((margin > 0).mean())
