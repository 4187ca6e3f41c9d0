"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with: pytest tests/test_acceptance.py -v -s

The shared fixture trains a full bundle on a synthetic pool at the default
separability; everything downstream reuses it. The bundle's training
configuration keeps the shipped defaults except for desk-scale overrides
(full-batch graph steps, stronger text learning rate) documented in the
project notes.
"""

import dataclasses
import inspect
import time

import numpy as np
import pytest

from botcensus.calibration import expected_calibration_error
from botcensus.config import PipelineConfig
from botcensus.ensemble import classify_batch, classify_user, load_bundle, save_bundle
from botcensus.features import compute_feature_matrix, normalize
from botcensus.graph import (
    DistillConfig,
    GraphConfig,
    build_graph,
    distillation_loss,
    gnn_forward,
    predict_student,
)
from botcensus.numerics import softmax
from botcensus.pipeline import train_bundle
from botcensus.report import run_balanced, run_perturbation, run_sweep
from botcensus.synth import SynthConfig, generate_community
from botcensus.tabular import BoostConfig, ForestConfig
from botcensus.text import TextConfig, encode_users, get_provider

from test_calibration import ece_oracle
from test_features import entropy_oracle, levenshtein_oracle
from test_graph import fd_gradcheck

ACCEPT_SEED = 11
SYNTH_KW = dict(bot_fraction=0.5, delta=1.0, homophily=0.7, mean_degree=8.0)

ACCEPT_CONFIG = dataclasses.replace(
    PipelineConfig(
        forest=ForestConfig(n_trees=100, max_depth=8),
        adaboost=BoostConfig(rounds=50),
        text=TextConfig(learning_rate=0.1, batch_size=64, epochs=30),
        graph=GraphConfig(learning_rate=1e-3, batch_size=4096, epochs=50,
                          l2=1e-5, hidden_dim=128, dropout=0.5, layers=2),
        distill=DistillConfig(learning_rate=5e-4, batch_size=2048, epochs=50,
                              l2=1e-5, lam=0.7),
    ),
    val_fraction=0.25,
).with_seed(ACCEPT_SEED)


class Setup:
    def __init__(self):
        t0 = time.monotonic()
        self.store, self.edges, self.labels = generate_community(
            SynthConfig(n_users=3200, seed=ACCEPT_SEED, **SYNTH_KW)
        )
        self.result = train_bundle(self.store, self.edges, ACCEPT_CONFIG)
        self.train_seconds = time.monotonic() - t0
        self.bundle = self.result.bundle
        self.val_store = self.store.subset(self.result.val_ids)
        self.y_val = self.val_store.label_array(self.result.val_ids)
        _ids, self.val_logits = self.bundle.raw_logits(
            self.val_store, self.result.val_ids
        )
        self.sweep_report = None  # filled by criterion 2, reused by 3
        self.pool = None


@pytest.fixture(scope="module")
def setup():
    return Setup()


@pytest.fixture(scope="module")
def sweep_pool():
    return generate_community(
        SynthConfig(n_users=12_000, seed=ACCEPT_SEED + 500, **SYNTH_KW)
    )


SWEEP_FRACTIONS = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]
SWEEP_SEEDS = [0, 1, 2]
SWEEP_SIZE = 5000


def test_criterion_1_balanced_communities(setup):
    t0 = time.monotonic()
    base = SynthConfig(n_users=10_000, seed=ACCEPT_SEED + 100, **SYNTH_KW)
    report = run_balanced(setup.bundle, base, n_communities=10)
    elapsed = setup.train_seconds + (time.monotonic() - t0)
    assert len(report.rows) == 10
    for row in report.rows:
        assert row.true_fraction == pytest.approx(0.5)
        assert abs(row.estimated_fraction - 0.5) <= 0.05, row
    assert elapsed <= 900.0
    print(
        f"\nACCEPTANCE 1 PASS: 10 balanced 10k-user communities, estimates "
        f"within ±{max(r.abs_error for r in report.rows):.3f} of 0.5 "
        f"(limit 0.05); pipeline runtime {elapsed:.0f}s <= 900s"
    )


def test_criterion_2_imbalanced_sweep(setup, sweep_pool):
    pool, pool_edges, pool_labels = sweep_pool
    report = run_sweep(
        setup.bundle, pool, pool_edges, pool_labels,
        SWEEP_FRACTIONS, SWEEP_SIZE, SWEEP_SEEDS,
    )
    setup.sweep_report = report
    assert report.summary.n_infeasible == 0
    assert len(report.rows) == len(SWEEP_FRACTIONS) * len(SWEEP_SEEDS)
    assert report.summary.mae <= 0.05
    assert report.summary.max_error <= 0.10
    print(
        f"\nACCEPTANCE 2 PASS: sweep 0.1-0.9 x {len(SWEEP_SEEDS)} seeds, size "
        f"{SWEEP_SIZE}: MAE {report.summary.mae:.4f} <= 0.05, max error "
        f"{report.summary.max_error:.4f} <= 0.10"
    )


def test_criterion_3_calibration_ablation(setup, sweep_pool):
    pool, pool_edges, pool_labels = sweep_pool
    if setup.sweep_report is None:
        setup.sweep_report = run_sweep(
            setup.bundle, pool, pool_edges, pool_labels,
            SWEEP_FRACTIONS, SWEEP_SIZE, SWEEP_SEEDS,
        )
    unit = {name: 1.0 for name in setup.bundle.submodel_names()}
    ablated = run_sweep(
        setup.bundle, pool, pool_edges, pool_labels,
        SWEEP_FRACTIONS, SWEEP_SIZE, SWEEP_SEEDS, temperatures=unit,
    )
    assert ablated.summary.mae > setup.sweep_report.summary.mae
    print(
        f"\nACCEPTANCE 3 PASS: forcing T=1 on the same seeds raises MAE "
        f"{setup.sweep_report.summary.mae:.4f} -> {ablated.summary.mae:.4f} "
        f"(strictly larger)"
    )


def test_criterion_4_calibration_quality(setup):
    lines = []
    for name, z in sorted(setup.val_logits.items()):
        pre = expected_calibration_error(softmax(z, axis=1), setup.y_val, 10)
        post = expected_calibration_error(
            softmax(z / setup.bundle.temperatures[name], axis=1), setup.y_val, 10
        )
        assert post <= pre, (name, pre, post)
        if pre > 0.02:
            assert post < pre, (name, pre, post)
        lines.append(f"{name} {pre:.4f}->{post:.4f}")
    print(
        "\nACCEPTANCE 4 PASS: post-temperature ECE <= pre for all "
        f"{len(setup.val_logits)} sub-models (strict where pre > 0.02): "
        + "; ".join(lines)
    )


def test_criterion_5_distillation(setup):
    # rebuild the node features the pipeline trained on
    store = setup.store
    all_ids, X = compute_feature_matrix(store)
    Xn = normalize(X, setup.bundle.stats)
    enc = encode_users(get_provider(setup.bundle.graph_text_provider), store, all_ids)
    node_features = {
        uid: np.concatenate([Xn[i], enc[i]]) for i, uid in enumerate(all_ids)
    }
    g = build_graph(store, setup.edges, node_features)
    gpos = {uid: i for i, uid in enumerate(g.node_ids)}
    val_idx = np.asarray([gpos[uid] for uid in setup.result.val_ids])

    students = {
        s.name: s.model
        for s in setup.bundle.submodels
        if s.channel == "graph"
    }
    agreements = {}
    for name, teacher in setup.bundle.teachers.items():
        t_pred = gnn_forward(teacher, g).argmax(axis=1)[val_idx]
        s_pred = predict_student(students[name], g.features[val_idx]).argmax(axis=1)
        agreements[name] = float((t_pred == s_pred).mean())
        assert agreements[name] >= 0.90, (name, agreements[name])

    # graph-free interface: prediction takes features only
    params = list(inspect.signature(predict_student).parameters)
    assert params == ["student", "features"]
    lone = predict_student(
        next(iter(students.values())), g.features[0]
    )
    assert lone.shape == (2,)

    rng = np.random.default_rng(0)
    logits = rng.normal(size=(40, 2))
    y = rng.integers(0, 2, size=40)
    teacher_probs = softmax(rng.normal(size=(40, 2)), axis=1)
    ce = float(-np.log(softmax(logits, axis=1))[np.arange(40), y].sum())
    assert distillation_loss(logits, y, teacher_probs, 1.0) == pytest.approx(
        ce, abs=1e-9
    )
    print(
        "\nACCEPTANCE 5 PASS: student/teacher argmax agreement "
        + ", ".join(f"{k} {v:.3f}" for k, v in sorted(agreements.items()))
        + " (all >= 0.90); student interface is features-only; "
        "distillation loss at lambda=1 equals cross-entropy within 1e-9"
    )


def test_criterion_6_verified_perturbation(setup):
    community, _edges, _labels = generate_community(
        SynthConfig(n_users=4000, seed=ACCEPT_SEED + 900, **SYNTH_KW)
    )
    train_store = setup.store.subset(setup.result.train_ids)
    rows = run_perturbation(setup.bundle, community, train_store,
                            seed=ACCEPT_SEED + 1)
    stump_wins = 0
    for row in rows:
        assert row.ensemble_deviation <= 0.10, row
        if row.stump_deviation > row.ensemble_deviation:
            stump_wins += 1
    assert stump_wins >= 2
    print(
        "\nACCEPTANCE 6 PASS: ensemble stays within ±0.10 under all verified "
        "rewrites ("
        + ", ".join(f"{r.mode} dev {r.ensemble_deviation:.3f}" for r in rows)
        + f"); verified-only stump deviates more in {stump_wins}/3 modes"
    )


def test_criterion_7_numerical_correctness():
    # GNN gradients: >= 21 random small instances across all variants
    worst_gnn = 0.0
    for variant in ("mean_relational", "attn_edge_type", "attn_relation"):
        for seed in range(7):
            worst_gnn = max(worst_gnn, fd_gradcheck(variant, seed=100 + seed))
    assert worst_gnn < 1e-4

    # text-head gradients: >= 20 random instances, plain and hidden variants
    from botcensus.text import LinearHead, init_head, text_loss_and_grad

    worst_text = 0.0
    for k in range(20):
        rng = np.random.default_rng(200 + k)
        n, d = 10, 4
        X = rng.normal(size=(n, d))
        y = rng.integers(0, 2, size=n)
        if k % 2 == 0:
            head = LinearHead(
                W_out=rng.normal(size=(2, d)) * 0.4, b_out=rng.normal(size=2) * 0.4
            )
        else:
            head = init_head(d, TextConfig(use_hidden=True, hidden_dim=3,
                                           seed=300 + k))
            head.W_out = rng.normal(size=head.W_out.shape) * 0.4
            head.b_out = rng.normal(size=2) * 0.4
        _, grads = text_loss_and_grad(head, X, y, l2=1e-4)
        h = 1e-6
        for key, param in (
            ("W_out", head.W_out), ("b_out", head.b_out),
            *(
                (("W_hidden", head.W_hidden), ("b_hidden", head.b_hidden))
                if head.W_hidden is not None
                else ()
            ),
        ):
            it = np.nditer(param, flags=["multi_index"])
            for _ in it:
                mi = it.multi_index
                orig = param[mi]
                param[mi] = orig + h
                lp, _ = text_loss_and_grad(head, X, y, l2=1e-4)
                param[mi] = orig - h
                lm, _ = text_loss_and_grad(head, X, y, l2=1e-4)
                param[mi] = orig
                fd = (lp - lm) / (2 * h)
                rel = abs(fd - grads[key][mi]) / max(abs(fd), abs(grads[key][mi]), 1e-8)
                worst_text = max(worst_text, rel)
    assert worst_text < 1e-4

    # entropy, edit distance, and ECE against brute-force oracles
    from botcensus.features import levenshtein, string_entropy

    rng = np.random.default_rng(400)
    alphabet = list("ab1#éж")
    for _ in range(200):
        s = "".join(rng.choice(alphabet) for _ in range(int(rng.integers(0, 15))))
        assert string_entropy(s) == pytest.approx(entropy_oracle(s), abs=1e-9)
    for _ in range(100):
        a = "".join(rng.choice(alphabet) for _ in range(int(rng.integers(0, 9))))
        b = "".join(rng.choice(alphabet) for _ in range(int(rng.integers(0, 9))))
        assert levenshtein(a, b) == levenshtein_oracle(a, b)
    for k in range(50):
        n = int(rng.integers(1, 80))
        bins = int(rng.integers(1, 16))
        p_bot = rng.random(n)
        P = np.stack([1 - p_bot, p_bot], axis=1)
        y = rng.integers(0, 2, size=n)
        assert expected_calibration_error(P, y, bins) == pytest.approx(
            ece_oracle(P, y, bins), abs=1e-9
        )
    print(
        f"\nACCEPTANCE 7 PASS: analytic gradients match central finite "
        f"differences (GNN worst rel err {worst_gnn:.2e}, text worst "
        f"{worst_text:.2e}, both < 1e-4 over 21+20 instances); entropy, "
        "Levenshtein, and ECE match brute-force oracles"
    )


def test_criterion_8_ensemble_soundness(setup):
    history = setup.result.weight_nll_history
    assert len(history) >= 2
    assert all(b <= a + 1e-12 for a, b in zip(history, history[1:]))

    _ids, probs = setup.bundle.calibrated_probs(
        setup.val_store, setup.result.val_ids
    )
    combined_acc = float(
        (classify_batch(probs, setup.bundle.alpha) == setup.y_val).mean()
    )
    single_accs = {
        name: float((p.argmax(axis=1) == setup.y_val).mean())
        for name, p in probs.items()
    }
    best = max(single_accs.values())
    assert combined_acc >= best - 0.01

    rng = np.random.default_rng(500)
    names = ["a", "b", "c", "d"]
    for _ in range(1000):
        user = {}
        for name in names:
            p = rng.random()
            user[name] = np.array([1 - p, p])
        alpha = {name: float(rng.uniform(0.05, 3.0)) for name in names}
        c = float(rng.uniform(0.01, 100.0))
        scaled = {k: c * v for k, v in alpha.items()}
        assert classify_user(user, alpha) == classify_user(user, scaled)
    print(
        f"\nACCEPTANCE 8 PASS: weight-fit NLL non-increasing over "
        f"{len(history) - 1} steps ({history[0]:.4f} -> {history[-1]:.4f}); "
        f"combined val accuracy {combined_acc:.4f} >= best single {best:.4f} "
        "- 0.01; argmax invariant under uniform positive rescaling on 1000 "
        "fixtures"
    )


REFERENCE_ALPHA = {
    "random_forest": 0.544,
    "adaboost": 0.583,
    "text_hash-a": 0.404,
    "text_hash-b": 0.411,
    "graph_edge_attn_a": 0.247,
    "graph_edge_attn_b": 0.205,
    "graph_mean": 0.192,
    "graph_rel_attn": 0.208,
}


def test_criterion_9_reference_weight_round_trip(setup, tmp_path):
    assert set(REFERENCE_ALPHA) == set(setup.bundle.submodel_names())
    fixture = dataclasses.replace(setup.bundle, alpha=dict(REFERENCE_ALPHA))
    save_bundle(fixture, tmp_path / "fixture")
    loaded = load_bundle(tmp_path / "fixture")
    assert loaded.alpha == REFERENCE_ALPHA
    for name, value in REFERENCE_ALPHA.items():
        assert loaded.alpha[name].hex() == float(value).hex()
    print(
        "\nACCEPTANCE 9 PASS: the 8 documented combination-weight fixture "
        "values survive a bundle serialize/load round trip bit-exactly"
    )
