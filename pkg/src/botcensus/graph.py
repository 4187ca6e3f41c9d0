"""Graph channel: heterogeneous message passing over the follow graph, plus
distillation of each trained network into a graph-free linear student.

Three aggregation variants are implemented. Per layer, every variant first
extracts per-relation messages M_r = H W_r^T and a self term H W_self^T, then
aggregates incoming messages:

* ``mean_relational``  - mean over all in-edges of the relation-transformed
  messages.
* ``attn_edge_type``   - softmax attention jointly over all in-edges, with
  relation-specific score vectors.
* ``attn_relation``    - per-relation mean summaries combined by a
  degree-weighted softmax attention over relations.

With all attention scores equal the attention variants reduce exactly to the
mean variant. Nodes with no in-neighbors contribute a zero aggregate; the
self transform always applies.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    BadLambda,
    DimensionError,
    InvariantViolation,
    SingleClassError,
    UnknownUser,
)
from .ingest import EdgeList, UserStore
from .numerics import log_softmax, softmax
from .optim import Adam
from .text import LinearHead, head_forward

RELATION_FOLLOWS = "follows"
RELATION_FOLLOWED_BY = "followed_by"
RELATIONS = (RELATION_FOLLOWS, RELATION_FOLLOWED_BY)

VARIANTS = ("mean_relational", "attn_edge_type", "attn_relation")

HIDDEN_LEAKY_SLOPE = 0.01
ATTN_LEAKY_SLOPE = 0.2
UNLABELED = -1

# A linear student shares its parameter container with the text head; its
# contract is that prediction consumes node features only.
LinearStudent = LinearHead


@dataclass
class _EdgeIndex:
    """Edges of one relation in destination-sorted order with reduceat
    segment boundaries for both endpoints."""

    src: np.ndarray  # (E,)
    dst: np.ndarray  # (E,)
    dst_starts: np.ndarray  # (S,) offsets of each destination segment
    dst_nodes: np.ndarray  # (S,)
    src_perm: np.ndarray  # permutation sorting edges by source
    src_starts: np.ndarray
    src_nodes: np.ndarray

    @classmethod
    def build(cls, src: np.ndarray, dst: np.ndarray) -> "_EdgeIndex":
        order = np.lexsort((src, dst))
        src = src[order]
        dst = dst[order]
        dst_nodes, dst_starts = np.unique(dst, return_index=True)
        src_perm = np.argsort(src, kind="stable")
        src_nodes, src_starts = np.unique(src[src_perm], return_index=True)
        return cls(
            src=src,
            dst=dst,
            dst_starts=dst_starts,
            dst_nodes=dst_nodes,
            src_perm=src_perm,
            src_starts=src_starts,
            src_nodes=src_nodes,
        )

    def sum_by_dst(self, edge_values: np.ndarray, n: int) -> np.ndarray:
        out = np.zeros((n,) + edge_values.shape[1:], dtype=np.float64)
        if self.src.size:
            out[self.dst_nodes] = np.add.reduceat(edge_values, self.dst_starts, axis=0)
        return out

    def sum_by_src(self, edge_values: np.ndarray, n: int) -> np.ndarray:
        out = np.zeros((n,) + edge_values.shape[1:], dtype=np.float64)
        if self.src.size:
            out[self.src_nodes] = np.add.reduceat(
                edge_values[self.src_perm], self.src_starts, axis=0
            )
        return out

    def degrees(self, n: int) -> np.ndarray:
        deg = np.zeros(n, dtype=np.float64)
        if self.src.size:
            counts = np.diff(np.append(self.dst_starts, self.src.size))
            deg[self.dst_nodes] = counts
        return deg


@dataclass
class _CombinedIndex:
    """All relations' edges merged, destination-sorted, for joint-softmax
    attention; keeps per-relation positions for scattering gradients back."""

    src: np.ndarray
    dst: np.ndarray
    rel_id: np.ndarray  # index into RELATIONS
    dst_starts: np.ndarray
    dst_nodes: np.ndarray
    rel_pos: list[np.ndarray]  # positions of each relation's edges
    rel_scatter: list[_EdgeIndex | None]  # per-relation index over rel_pos rows

    @classmethod
    def build(cls, per_relation: dict[str, np.ndarray]) -> "_CombinedIndex":
        srcs, dsts, rels = [], [], []
        for r, rel in enumerate(RELATIONS):
            edges = per_relation[rel]
            if edges.size:
                srcs.append(edges[:, 0])
                dsts.append(edges[:, 1])
                rels.append(np.full(edges.shape[0], r, dtype=np.int64))
        if not srcs:
            empty = np.zeros(0, dtype=np.int64)
            return cls(empty, empty, empty, empty, empty,
                       [empty, empty], [None, None])
        src = np.concatenate(srcs)
        dst = np.concatenate(dsts)
        rel = np.concatenate(rels)
        order = np.lexsort((src, rel, dst))
        src, dst, rel = src[order], dst[order], rel[order]
        dst_nodes, dst_starts = np.unique(dst, return_index=True)
        rel_pos = [np.flatnonzero(rel == r) for r in range(len(RELATIONS))]
        rel_scatter: list[_EdgeIndex | None] = []
        for r in range(len(RELATIONS)):
            pos = rel_pos[r]
            if pos.size:
                rel_scatter.append(_EdgeIndex.build(src[pos], dst[pos]))
            else:
                rel_scatter.append(None)
        return cls(src, dst, rel, dst_starts, dst_nodes, rel_pos, rel_scatter)

    def sum_by_dst(self, edge_values: np.ndarray, n: int) -> np.ndarray:
        out = np.zeros((n,) + edge_values.shape[1:], dtype=np.float64)
        if self.src.size:
            out[self.dst_nodes] = np.add.reduceat(edge_values, self.dst_starts, axis=0)
        return out

    def segment_max(self, values: np.ndarray) -> np.ndarray:
        """Per-edge maximum of its destination segment."""
        seg_max = np.maximum.reduceat(values, self.dst_starts)
        return np.repeat(seg_max, np.diff(np.append(self.dst_starts, values.size)))

    def spread_by_dst(self, node_values: np.ndarray) -> np.ndarray:
        """Gather node values onto edges by destination."""
        return node_values[self.dst]


@dataclass
class HeteroGraph:
    """Typed directed adjacency over an ordered node list with input features.

    ``followed_by`` is always the exact transpose of ``follows``; node order
    is the sorted user-id order.
    """

    node_ids: list[str]
    features: np.ndarray  # (n, d)
    adjacency: dict[str, np.ndarray]  # relation -> (E, 2) [src, dst] pairs
    _index: dict[str, _EdgeIndex] = field(init=False, repr=False)
    _combined: _CombinedIndex = field(init=False, repr=False)

    def __post_init__(self):
        n = len(self.node_ids)
        if self.features.shape[0] != n:
            raise DimensionError(
                f"{n} nodes but {self.features.shape[0]} feature rows"
            )
        for rel in RELATIONS:
            if rel not in self.adjacency:
                raise InvariantViolation(f"missing adjacency for relation {rel!r}")
            edges = self.adjacency[rel]
            if edges.size and (edges.min() < 0 or edges.max() >= n):
                raise InvariantViolation(f"edge index out of range in {rel!r}")
        fwd = self.adjacency[RELATION_FOLLOWS]
        bwd = self.adjacency[RELATION_FOLLOWED_BY]
        if sorted(map(tuple, fwd[:, ::-1].tolist())) != sorted(map(tuple, bwd.tolist())):
            raise InvariantViolation("followed_by is not the transpose of follows")
        self._index = {
            rel: _EdgeIndex.build(self.adjacency[rel][:, 0], self.adjacency[rel][:, 1])
            if self.adjacency[rel].size
            else _EdgeIndex.build(
                np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
            )
            for rel in RELATIONS
        }
        self._combined = _CombinedIndex.build(self.adjacency)

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def degrees(self, relation: str) -> np.ndarray:
        return self._index[relation].degrees(self.n_nodes)


def build_graph(
    store: UserStore,
    edges: EdgeList,
    features: Mapping[str, np.ndarray],
) -> HeteroGraph:
    """Assemble a HeteroGraph: follows edges as given, followed_by as their
    transpose, node order = sorted ids."""
    node_ids = store.sorted_ids()
    pos = {uid: i for i, uid in enumerate(node_ids)}
    pairs = []
    for src, dst, _rel in edges.edges:
        if src not in pos:
            raise UnknownUser(src)
        if dst not in pos:
            raise UnknownUser(dst)
        pairs.append((pos[src], pos[dst]))
    fwd = (
        np.asarray(pairs, dtype=np.int64)
        if pairs
        else np.zeros((0, 2), dtype=np.int64)
    )
    bwd = fwd[:, ::-1].copy()
    try:
        mat = np.stack([np.asarray(features[uid], dtype=np.float64) for uid in node_ids])
    except KeyError as exc:
        raise InvariantViolation(f"no feature vector for user {exc.args[0]!r}")
    return HeteroGraph(
        node_ids=node_ids,
        features=mat,
        adjacency={RELATION_FOLLOWS: fwd, RELATION_FOLLOWED_BY: bwd},
    )


@dataclass
class GraphConfig:
    variant: str = "mean_relational"
    learning_rate: float = 1e-3
    batch_size: int = 128
    epochs: int = 50
    l2: float = 1e-5
    hidden_dim: int = 128
    dropout: float = 0.5
    layers: int = 2
    seed: int = 0


def init_gnn(input_dim: int, config: GraphConfig) -> "GnnModel":
    if config.variant not in VARIANTS:
        raise InvariantViolation(f"unknown GNN variant {config.variant!r}")
    if not (1 <= config.layers <= 2):
        raise InvariantViolation("layer count must be 1 or 2")
    rng = np.random.default_rng([config.seed, 7])
    params: dict[str, np.ndarray] = {}
    k = config.hidden_dim
    d_in = input_dim
    for layer in range(config.layers):
        scale = np.sqrt(2.0 / (d_in + k))
        params[f"layer{layer}.W_self"] = rng.normal(0.0, scale, size=(k, d_in))
        for rel in RELATIONS:
            params[f"layer{layer}.W_{rel}"] = rng.normal(0.0, scale, size=(k, d_in))
        params[f"layer{layer}.bias"] = np.zeros(k)
        if config.variant == "attn_edge_type":
            for rel in RELATIONS:
                params[f"layer{layer}.attn_{rel}"] = rng.normal(0.0, 0.1, size=2 * k)
        elif config.variant == "attn_relation":
            params[f"layer{layer}.query"] = rng.normal(0.0, 0.1, size=k)
        d_in = k
    params["head.W"] = rng.normal(0.0, np.sqrt(2.0 / (k + 2)), size=(2, k))
    params["head.b"] = np.zeros(2)
    return GnnModel(variant=config.variant, n_layers=config.layers,
                    input_dim=input_dim, hidden_dim=k, params=params)


@dataclass
class GnnModel:
    """Message-passing classifier parameters, keyed by layer and relation."""

    variant: str
    n_layers: int
    input_dim: int
    hidden_dim: int
    params: dict[str, np.ndarray]

    def copy(self) -> "GnnModel":
        return GnnModel(
            variant=self.variant,
            n_layers=self.n_layers,
            input_dim=self.input_dim,
            hidden_dim=self.hidden_dim,
            params={k: v.copy() for k, v in self.params.items()},
        )

    def to_dict(self) -> dict:
        return {
            "kind": "gnn",
            "variant": self.variant,
            "n_layers": self.n_layers,
            "input_dim": self.input_dim,
            "hidden_dim": self.hidden_dim,
            "params": {k: v.tolist() for k, v in self.params.items()},
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "GnnModel":
        return cls(
            variant=obj["variant"],
            n_layers=obj["n_layers"],
            input_dim=obj["input_dim"],
            hidden_dim=obj["hidden_dim"],
            params={
                k: np.asarray(v, dtype=np.float64) for k, v in obj["params"].items()
            },
        )


def _leaky(x: np.ndarray, slope: float) -> np.ndarray:
    return np.where(x > 0, x, slope * x)


def _leaky_grad(x: np.ndarray, slope: float) -> np.ndarray:
    return np.where(x > 0, 1.0, slope)


def _layer_forward(
    model: GnnModel,
    g: HeteroGraph,
    layer: int,
    H: np.ndarray,
    dropout_mask: np.ndarray | None,
) -> tuple[np.ndarray, dict]:
    """One message-passing layer; returns activations and a backward cache."""
    p = model.params
    n = g.n_nodes
    S = H @ p[f"layer{layer}.W_self"].T
    M = {rel: H @ p[f"layer{layer}.W_{rel}"].T for rel in RELATIONS}
    cache: dict = {"H": H, "S": S, "M": M}

    if model.variant == "mean_relational":
        total = np.zeros_like(S)
        deg = np.zeros(n, dtype=np.float64)
        for rel in RELATIONS:
            idx = g._index[rel]
            if idx.src.size:
                total += idx.sum_by_dst(M[rel][idx.src], n)
                deg += idx.degrees(n)
        denom = np.maximum(deg, 1.0)
        agg = total / denom[:, None]
        cache["denom"] = denom
    elif model.variant == "attn_edge_type":
        comb = g._combined
        if comb.src.size:
            msg = np.zeros((comb.src.size, S.shape[1]), dtype=np.float64)
            raw = np.zeros(comb.src.size, dtype=np.float64)
            for r, rel in enumerate(RELATIONS):
                pos = comb.rel_pos[r]
                if not pos.size:
                    continue
                a = p[f"layer{layer}.attn_{rel}"]
                u, v = a[: S.shape[1]], a[S.shape[1] :]
                msg[pos] = M[rel][comb.src[pos]]
                raw[pos] = S[comb.dst[pos]] @ u + msg[pos] @ v
            score = _leaky(raw, ATTN_LEAKY_SLOPE)
            shifted = score - comb.segment_max(score)
            e = np.exp(shifted)
            seg_sum = comb.sum_by_dst(e, n)
            alpha = e / comb.spread_by_dst(np.maximum(seg_sum, 1e-300))
            agg = comb.sum_by_dst(alpha[:, None] * msg, n)
            cache.update({"msg": msg, "raw": raw, "alpha": alpha})
        else:
            agg = np.zeros_like(S)
            cache.update({"msg": None, "raw": None, "alpha": None})
    elif model.variant == "attn_relation":
        q = p[f"layer{layer}.query"]
        m_rel, raw_rel, deg_rel = {}, {}, {}
        for rel in RELATIONS:
            idx = g._index[rel]
            deg = idx.degrees(n)
            summed = idx.sum_by_dst(M[rel][idx.src], n) if idx.src.size else np.zeros_like(S)
            m = summed / np.maximum(deg, 1.0)[:, None]
            m_rel[rel] = m
            raw_rel[rel] = m @ q
            deg_rel[rel] = deg
        s = np.stack([_leaky(raw_rel[rel], ATTN_LEAKY_SLOPE) for rel in RELATIONS])
        degs = np.stack([deg_rel[rel] for rel in RELATIONS])  # (R, n)
        present = degs > 0
        s_masked = np.where(present, s, -np.inf)
        s_max = np.where(present.any(axis=0), s_masked.max(axis=0), 0.0)
        w = np.where(present, degs * np.exp(s - s_max), 0.0)
        w_sum = np.maximum(w.sum(axis=0), 1e-300)
        beta = w / w_sum
        agg = np.zeros_like(S)
        for r, rel in enumerate(RELATIONS):
            agg += beta[r][:, None] * m_rel[rel]
        cache.update(
            {"m_rel": m_rel, "raw_rel": raw_rel, "deg_rel": deg_rel, "beta": beta}
        )
    else:  # pragma: no cover
        raise InvariantViolation(f"unknown variant {model.variant!r}")

    Z = S + agg + p[f"layer{layer}.bias"]
    H_out = _leaky(Z, HIDDEN_LEAKY_SLOPE)
    if dropout_mask is not None:
        H_out = H_out * dropout_mask
    cache["Z"] = Z
    cache["dropout_mask"] = dropout_mask
    return H_out, cache


def _layer_backward(
    model: GnnModel,
    g: HeteroGraph,
    layer: int,
    cache: dict,
    dH_out: np.ndarray,
    grads: dict[str, np.ndarray],
) -> np.ndarray:
    """Backward through one layer; accumulates parameter grads, returns dH."""
    p = model.params
    n = g.n_nodes
    if cache["dropout_mask"] is not None:
        dH_out = dH_out * cache["dropout_mask"]
    dZ = dH_out * _leaky_grad(cache["Z"], HIDDEN_LEAKY_SLOPE)
    grads[f"layer{layer}.bias"] += dZ.sum(axis=0)
    dS = dZ.copy()
    dAgg = dZ
    dM = {rel: np.zeros_like(cache["M"][rel]) for rel in RELATIONS}

    if model.variant == "mean_relational":
        dEdge_scale = dAgg / cache["denom"][:, None]
        for rel in RELATIONS:
            idx = g._index[rel]
            if idx.src.size:
                dM[rel] += idx.sum_by_src(dEdge_scale[idx.dst], n)
    elif model.variant == "attn_edge_type":
        comb = g._combined
        if comb.src.size:
            msg, raw, alpha = cache["msg"], cache["raw"], cache["alpha"]
            dAgg_e = dAgg[comb.dst]
            dmsg = alpha[:, None] * dAgg_e
            dalpha = (dAgg_e * msg).sum(axis=1)
            t = comb.sum_by_dst(alpha * dalpha, n)
            dscore = alpha * (dalpha - t[comb.dst])
            draw = dscore * _leaky_grad(raw, ATTN_LEAKY_SLOPE)
            k = dAgg.shape[1]
            for r, rel in enumerate(RELATIONS):
                pos = comb.rel_pos[r]
                if not pos.size:
                    continue
                a = p[f"layer{layer}.attn_{rel}"]
                u, v = a[:k], a[k:]
                draw_r = draw[pos]
                s_dst = cache["S"][comb.dst[pos]]
                msg_r = msg[pos]
                ga = grads[f"layer{layer}.attn_{rel}"]
                ga[:k] += draw_r @ s_dst
                ga[k:] += draw_r @ msg_r
                dmsg_r = dmsg[pos] + draw_r[:, None] * v
                scatter = comb.rel_scatter[r]
                dM[rel] += scatter.sum_by_src(dmsg_r, n)
                # dS via destination endpoints of this relation's edges
                dS += scatter.sum_by_dst(draw_r[:, None] * u, n)
    elif model.variant == "attn_relation":
        q = p[f"layer{layer}.query"]
        beta = cache["beta"]
        m_rel = cache["m_rel"]
        dbeta = np.stack(
            [(dAgg * m_rel[rel]).sum(axis=1) for rel in RELATIONS]
        )  # (R, n)
        inner = (beta * dbeta).sum(axis=0)
        ds = beta * (dbeta - inner)
        for r, rel in enumerate(RELATIONS):
            draw = ds[r] * _leaky_grad(cache["raw_rel"][rel], ATTN_LEAKY_SLOPE)
            dm = beta[r][:, None] * dAgg + draw[:, None] * q
            grads[f"layer{layer}.query"] += m_rel[rel].T @ draw
            idx = g._index[rel]
            if idx.src.size:
                dEdge_scale = dm / np.maximum(cache["deg_rel"][rel], 1.0)[:, None]
                dM[rel] += idx.sum_by_src(dEdge_scale[idx.dst], n)

    H = cache["H"]
    grads[f"layer{layer}.W_self"] += dS.T @ H
    dH = dS @ p[f"layer{layer}.W_self"]
    for rel in RELATIONS:
        grads[f"layer{layer}.W_{rel}"] += dM[rel].T @ H
        dH += dM[rel] @ p[f"layer{layer}.W_{rel}"]
    return dH


def gnn_forward(
    model: GnnModel,
    g: HeteroGraph,
    dropout_masks: Sequence[np.ndarray | None] | None = None,
    return_cache: bool = False,
):
    """Per-node (human, bot) logits; evaluation mode unless dropout masks are
    supplied by the trainer."""
    if g.feature_dim != model.input_dim:
        raise DimensionError(
            f"graph feature dim {g.feature_dim} != model input {model.input_dim}"
        )
    H = g.features
    caches = []
    for layer in range(model.n_layers):
        mask = dropout_masks[layer] if dropout_masks is not None else None
        H, cache = _layer_forward(model, g, layer, H, mask)
        caches.append(cache)
    logits = H @ model.params["head.W"].T + model.params["head.b"]
    if return_cache:
        return logits, (H, caches)
    return logits


def gnn_loss_and_grad(
    model: GnnModel,
    g: HeteroGraph,
    y: np.ndarray,
    node_idx: np.ndarray,
    l2: float,
    dropout_masks: Sequence[np.ndarray | None] | None = None,
) -> tuple[float, dict[str, np.ndarray]]:
    """Cross-entropy over the given labeled nodes plus L2 on weight matrices,
    with analytic gradients for every parameter."""
    logits, (H_last, caches) = gnn_forward(model, g, dropout_masks, return_cache=True)
    sel = logits[node_idx]
    labels = y[node_idx]
    logp = log_softmax(sel, axis=1)
    loss = float(-logp[np.arange(labels.shape[0]), labels].mean())

    grads = {k: np.zeros_like(v) for k, v in model.params.items()}
    dsel = softmax(sel, axis=1)
    dsel[np.arange(labels.shape[0]), labels] -= 1.0
    dsel /= labels.shape[0]
    dlogits = np.zeros_like(logits)
    dlogits[node_idx] = dsel

    grads["head.W"] += dlogits.T @ H_last
    grads["head.b"] += dlogits.sum(axis=0)
    dH = dlogits @ model.params["head.W"]
    for layer in range(model.n_layers - 1, -1, -1):
        dH = _layer_backward(model, g, layer, caches[layer], dH, grads)

    for key, value in model.params.items():
        if ".W_" in key or key == "head.W":
            loss += l2 * float((value ** 2).sum())
            grads[key] += 2.0 * l2 * value
    return loss, grads


def train_gnn(
    g: HeteroGraph, y: np.ndarray, config: GraphConfig
) -> GnnModel:
    """Full-graph training: per step, cross-entropy over a labeled-node
    minibatch with reverse-mode gradients through the message passing.

    ``y`` holds one integer label per node, -1 where unlabeled. Deterministic
    given config.seed.
    """
    y = np.asarray(y, dtype=np.int64)
    if y.shape[0] != g.n_nodes:
        raise DimensionError("labels must align with graph nodes (-1 = unlabeled)")
    labeled = np.flatnonzero(y >= 0)
    if np.unique(y[labeled]).size < 2:
        raise SingleClassError("GNN training needs both classes among labeled nodes")

    model = init_gnn(g.feature_dim, config)
    opt = Adam(model.params, lr=config.learning_rate)
    rng = np.random.default_rng([config.seed, 11])
    keep = 1.0 - config.dropout
    for _ in range(config.epochs):
        perm = labeled[rng.permutation(labeled.size)]
        for start in range(0, perm.size, config.batch_size):
            batch = perm[start : start + config.batch_size]
            masks: list[np.ndarray | None] = []
            for _layer in range(config.layers):
                if config.dropout > 0:
                    masks.append(
                        (rng.random((g.n_nodes, config.hidden_dim)) < keep) / keep
                    )
                else:
                    masks.append(None)
            _, grads = gnn_loss_and_grad(model, g, y, batch, config.l2, masks)
            opt.step(grads)
    return model


@dataclass
class DistillConfig:
    learning_rate: float = 5e-4
    batch_size: int = 2048
    epochs: int = 50
    l2: float = 1e-5
    hidden_dim: int = 1024
    dropout: float = 0.3
    use_hidden: bool = False
    lam: float = 0.7
    seed: int = 0


def distillation_loss(
    student_logits: np.ndarray,
    y: np.ndarray,
    teacher_probs: np.ndarray,
    lam: float,
) -> float:
    """lam * sum CE(student, labels) + (1 - lam) * sum KL(student || teacher),
    summed over the batch. At lam = 1 this is exactly the summed
    cross-entropy."""
    if not (0.0 <= lam <= 1.0):
        raise BadLambda(f"lambda must lie in [0, 1], got {lam}")
    logp = log_softmax(student_logits, axis=1)
    n = student_logits.shape[0]
    ce = float(-logp[np.arange(n), y].sum())
    s = softmax(student_logits, axis=1)
    kl = float(
        (s * (np.log(np.maximum(s, 1e-300)) - np.log(np.maximum(teacher_probs, 1e-300))))
        .sum()
    )
    return lam * ce + (1.0 - lam) * kl


def _distill_grad(
    student_logits: np.ndarray,
    y: np.ndarray,
    teacher_probs: np.ndarray,
    lam: float,
) -> np.ndarray:
    """d(mean distillation loss)/d logits."""
    n = student_logits.shape[0]
    s = softmax(student_logits, axis=1)
    ce_grad = s.copy()
    ce_grad[np.arange(n), y] -= 1.0
    g = np.log(np.maximum(s, 1e-300)) - np.log(np.maximum(teacher_probs, 1e-300))
    kl_grad = s * (g - (s * g).sum(axis=1, keepdims=True))
    return (lam * ce_grad + (1.0 - lam) * kl_grad) / n


def distill_student(
    teacher: GnnModel,
    g: HeteroGraph,
    y: np.ndarray,
    lam: float,
    config: DistillConfig,
) -> LinearStudent:
    """Train a graph-free student on node features against frozen teacher
    soft targets mixed with ground-truth labels."""
    if not (0.0 <= lam <= 1.0):
        raise BadLambda(f"lambda must lie in [0, 1], got {lam}")
    y = np.asarray(y, dtype=np.int64)
    labeled = np.flatnonzero(y >= 0)
    if np.unique(y[labeled]).size < 2:
        raise SingleClassError("distillation needs both classes among labeled nodes")

    teacher_probs = softmax(gnn_forward(teacher, g), axis=1)[labeled]
    X = g.features[labeled]
    labels = y[labeled]

    from .text import TextConfig, init_head  # shared head structure

    head_cfg = TextConfig(
        learning_rate=config.learning_rate,
        batch_size=config.batch_size,
        epochs=config.epochs,
        l2=config.l2,
        hidden_dim=config.hidden_dim,
        dropout=config.dropout,
        use_hidden=config.use_hidden,
        seed=config.seed,
    )
    student = init_head(X.shape[1], head_cfg)
    params: dict[str, np.ndarray] = {"W_out": student.W_out, "b_out": student.b_out}
    if student.W_hidden is not None:
        params["W_hidden"] = student.W_hidden
        params["b_hidden"] = student.b_hidden
    opt = Adam(params, lr=config.learning_rate)
    rng = np.random.default_rng([config.seed, 13])
    n = X.shape[0]
    use_dropout = config.use_hidden and config.dropout > 0
    for _ in range(config.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            mask = None
            if use_dropout:
                keep = 1.0 - config.dropout
                mask = (rng.random((idx.size, config.hidden_dim)) < keep) / keep
            logits, cache = head_forward(student, X[idx], mask)
            dlogits = _distill_grad(logits, labels[idx], teacher_probs[idx], lam)
            grads: dict[str, np.ndarray] = {}
            if student.W_hidden is not None:
                h = cache["h"]
                grads["W_out"] = dlogits.T @ h + 2.0 * config.l2 * student.W_out
                grads["b_out"] = dlogits.sum(axis=0)
                dh = dlogits @ student.W_out
                if mask is not None:
                    dh = dh * mask
                dpre = dh * (cache["pre"] > 0)
                grads["W_hidden"] = dpre.T @ X[idx] + 2.0 * config.l2 * student.W_hidden
                grads["b_hidden"] = dpre.sum(axis=0)
            else:
                grads["W_out"] = dlogits.T @ X[idx] + 2.0 * config.l2 * student.W_out
                grads["b_out"] = dlogits.sum(axis=0)
            opt.step(grads)
    return student


def predict_student(student: LinearStudent, features: np.ndarray) -> np.ndarray:
    """Logit pair(s) from node features alone; no adjacency access."""
    features = np.asarray(features, dtype=np.float64)
    single = features.ndim == 1
    X = features[None, :] if single else features
    if X.shape[1] != student.input_dim:
        raise DimensionError(
            f"feature dim {X.shape[1]} != student input {student.input_dim}"
        )
    logits, _ = head_forward(student, X)
    return logits[0] if single else logits
