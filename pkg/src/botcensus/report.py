"""Evaluation protocols and report emission: individual metrics, the
balanced-communities protocol, the imbalanced resampling sweep, the verified
perturbation comparison, and CSV/chart output.
"""

from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .ensemble import EnsembleBundle, classify_batch, estimate_community
from .errors import DimensionError, InfeasibleTarget, IoError
from .ingest import CLASS_BOT, LABEL_BOT, EdgeList, UserStore
from .pipeline import train_verified_stump, verified_stump_estimate
from .synth import SynthConfig, generate_community, resample_by_proximity


def individual_metrics(preds: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """(accuracy, F1 on the bot class); zero-denominator F1 is 0."""
    preds = np.asarray(preds, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    if preds.shape != y.shape or preds.size == 0:
        raise DimensionError(
            f"predictions {preds.shape} and labels {y.shape} must match and be non-empty"
        )
    accuracy = float((preds == y).mean())
    tp = int(((preds == CLASS_BOT) & (y == CLASS_BOT)).sum())
    fp = int(((preds == CLASS_BOT) & (y != CLASS_BOT)).sum())
    fn = int(((preds != CLASS_BOT) & (y == CLASS_BOT)).sum())
    precision = tp / (tp + fp) if (tp + fp) > 0 else 0.0
    recall = tp / (tp + fn) if (tp + fn) > 0 else 0.0
    f1 = (
        2.0 * precision * recall / (precision + recall)
        if (precision + recall) > 0
        else 0.0
    )
    return accuracy, f1


@dataclass
class EvalRow:
    community_id: str
    true_fraction: float
    estimated_fraction: float
    abs_error: float
    n_users: int
    n_bots_predicted: int
    status: str = "ok"  # ok | infeasible
    per_model_mean_bot_prob: dict[str, float] = field(default_factory=dict)


@dataclass
class EvalSummary:
    mae: float
    max_error: float
    n_rows: int
    n_infeasible: int
    accuracy: float | None = None
    f1: float | None = None


@dataclass
class EvalReport:
    rows: list[EvalRow]
    summary: EvalSummary
    model_names: list[str] = field(default_factory=list)


def _summarize(
    rows: Sequence[EvalRow],
    accuracy: float | None = None,
    f1: float | None = None,
) -> EvalSummary:
    ok = [r for r in rows if r.status == "ok"]
    errors = [r.abs_error for r in ok]
    return EvalSummary(
        mae=float(np.mean(errors)) if errors else float("nan"),
        max_error=float(np.max(errors)) if errors else float("nan"),
        n_rows=len(rows),
        n_infeasible=len(rows) - len(ok),
        accuracy=accuracy,
        f1=f1,
    )


def run_balanced(
    bundle: EnsembleBundle,
    base_cfg: SynthConfig,
    n_communities: int,
    temperatures: Mapping[str, float] | None = None,
) -> EvalReport:
    """Estimate freshly generated communities (one per seed offset) at the
    configured bot fraction."""
    rows: list[EvalRow] = []
    for k in range(n_communities):
        cfg = dataclasses.replace(base_cfg, seed=base_cfg.seed + k)
        store, _edges, labels = generate_community(cfg)
        true_frac = sum(1 for v in labels.values() if v == LABEL_BOT) / len(labels)
        est = bundle.estimate(store, temperatures=temperatures)
        rows.append(
            EvalRow(
                community_id=f"community_{k:02d}",
                true_fraction=true_frac,
                estimated_fraction=est.p_hat,
                abs_error=abs(true_frac - est.p_hat),
                n_users=est.n_users,
                n_bots_predicted=est.n_bots_predicted,
                per_model_mean_bot_prob=est.per_model_mean_bot_prob,
            )
        )
    return EvalReport(
        rows=rows,
        summary=_summarize(rows),
        model_names=bundle.submodel_names(),
    )


def run_sweep(
    bundle: EnsembleBundle,
    pool: UserStore,
    pool_edges: EdgeList,
    pool_labels: Mapping[str, str],
    fractions: Sequence[float],
    size: int,
    seeds: Sequence[int],
    temperatures: Mapping[str, float] | None = None,
) -> EvalReport:
    """Resample one community per (fraction, seed) and estimate each.

    Per-pool sub-model probabilities are computed once and re-aggregated per
    community. Infeasible targets become recorded rows, not failures. Rows
    are sorted by fraction, then seed.
    """
    pool_ids, probs = bundle.calibrated_probs(pool, temperatures=temperatures)
    index = {uid: i for i, uid in enumerate(pool_ids)}

    labeled = [uid for uid in pool_ids if uid in pool_labels]
    acc = f1 = None
    if labeled:
        decisions = classify_batch(
            {n: p[[index[u] for u in labeled]] for n, p in probs.items()},
            bundle.alpha,
        )
        y = np.asarray(
            [1 if pool_labels[u] == LABEL_BOT else 0 for u in labeled],
            dtype=np.int64,
        )
        acc, f1 = individual_metrics(decisions, y)

    rows: list[EvalRow] = []
    for fraction in sorted(fractions):
        for seed in seeds:
            community_id = f"frac{fraction:.2f}_seed{seed}"
            try:
                community = resample_by_proximity(
                    pool, pool_edges, pool_labels, fraction, size, seed
                )
            except InfeasibleTarget:
                rows.append(
                    EvalRow(
                        community_id=community_id,
                        true_fraction=fraction,
                        estimated_fraction=float("nan"),
                        abs_error=float("nan"),
                        n_users=0,
                        n_bots_predicted=0,
                        status="infeasible",
                    )
                )
                continue
            member_idx = [index[uid] for uid in community.sorted_ids()]
            member_probs = {n: p[member_idx] for n, p in probs.items()}
            est = estimate_community(member_probs, bundle.alpha)
            true_frac = sum(
                1 for uid in community.users if pool_labels[uid] == LABEL_BOT
            ) / len(community)
            rows.append(
                EvalRow(
                    community_id=community_id,
                    true_fraction=true_frac,
                    estimated_fraction=est.p_hat,
                    abs_error=abs(true_frac - est.p_hat),
                    n_users=est.n_users,
                    n_bots_predicted=est.n_bots_predicted,
                    per_model_mean_bot_prob=est.per_model_mean_bot_prob,
                )
            )
    return EvalReport(
        rows=rows,
        summary=_summarize(rows, acc, f1),
        model_names=bundle.submodel_names(),
    )


PERTURBATION_MODES = ("all_true", "all_false", "random")


@dataclass
class PerturbRow:
    mode: str
    true_fraction: float
    ensemble_estimate: float
    ensemble_deviation: float
    stump_estimate: float
    stump_deviation: float


def run_perturbation(
    bundle: EnsembleBundle,
    community: UserStore,
    train_store: UserStore,
    seed: int,
) -> list[PerturbRow]:
    """Rewrite the verified flag under each mode and compare the full
    ensemble's drift against a verified-only stump baseline."""
    from .ingest import apply_verified_perturbation

    labels = {
        uid: community[uid].label
        for uid in community.sorted_ids()
        if community[uid].label is not None
    }
    if not labels:
        raise DimensionError("perturbation community must carry labels")
    true_frac = sum(1 for v in labels.values() if v == LABEL_BOT) / len(labels)
    stump = train_verified_stump(train_store)
    rows = []
    for mode in PERTURBATION_MODES:
        perturbed = apply_verified_perturbation(community, mode, seed)
        est = bundle.estimate(perturbed).p_hat
        stump_est = verified_stump_estimate(stump, perturbed)
        rows.append(
            PerturbRow(
                mode=mode,
                true_fraction=true_frac,
                ensemble_estimate=est,
                ensemble_deviation=abs(est - true_frac),
                stump_estimate=stump_est,
                stump_deviation=abs(stump_est - true_frac),
            )
        )
    return rows


_BASE_COLUMNS = (
    "community_id",
    "true_fraction",
    "estimated_fraction",
    "abs_error",
    "n_users",
    "n_bots_predicted",
    "status",
)


def write_report(
    report: EvalReport,
    csv_path: str | Path,
    chart_path: str | Path | None = None,
    summary_path: str | Path | None = None,
) -> None:
    """Write rows as CSV (stable column order); optionally a summary CSV and
    an estimated-vs-true chart with the y = x reference line."""
    csv_path = Path(csv_path)
    model_cols = [f"mean_bot_prob.{name}" for name in report.model_names]
    try:
        with open(csv_path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(list(_BASE_COLUMNS) + model_cols)
            for row in report.rows:
                record = [
                    row.community_id,
                    repr(row.true_fraction),
                    repr(row.estimated_fraction),
                    repr(row.abs_error),
                    row.n_users,
                    row.n_bots_predicted,
                    row.status,
                ]
                for name in report.model_names:
                    value = row.per_model_mean_bot_prob.get(name)
                    record.append("" if value is None else repr(value))
                writer.writerow(record)
    except OSError as exc:
        raise IoError(f"cannot write report CSV {csv_path}: {exc}")

    if summary_path is not None:
        s = report.summary
        try:
            with open(summary_path, "w", encoding="utf-8", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(
                    ["mae", "max_error", "n_rows", "n_infeasible", "accuracy", "f1"]
                )
                writer.writerow(
                    [
                        repr(s.mae),
                        repr(s.max_error),
                        s.n_rows,
                        s.n_infeasible,
                        "" if s.accuracy is None else repr(s.accuracy),
                        "" if s.f1 is None else repr(s.f1),
                    ]
                )
        except OSError as exc:
            raise IoError(f"cannot write summary CSV {summary_path}: {exc}")

    if chart_path is not None:
        fig = make_chart(report)
        try:
            fig.savefig(chart_path)
        except OSError as exc:
            raise IoError(f"cannot write chart {chart_path}: {exc}")
        finally:
            import matplotlib.pyplot as plt

            plt.close(fig)


def make_chart(report: EvalReport):
    """Estimated-vs-true scatter over the [0, 1]^2 frame with the y = x line."""
    import matplotlib

    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 5))
    ax.plot([0.0, 1.0], [0.0, 1.0], color="gray", linestyle="--", label="y = x")
    ok = [r for r in report.rows if r.status == "ok"]
    if ok:
        ax.scatter(
            [r.true_fraction for r in ok],
            [r.estimated_fraction for r in ok],
            s=24,
            color="tab:blue",
            label="communities",
        )
    ax.set_xlim(0.0, 1.0)
    ax.set_ylim(0.0, 1.0)
    ax.set_xlabel("true bot fraction")
    ax.set_ylabel("estimated bot fraction")
    ax.legend(loc="upper left")
    fig.tight_layout()
    return fig


def read_report_rows(csv_path: str | Path) -> EvalReport:
    """Reconstruct a report from a rows CSV (for re-emitting charts)."""
    rows: list[EvalRow] = []
    model_names: list[str] = []
    with open(csv_path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames:
            prefix = "mean_bot_prob."
            model_names = [
                c[len(prefix):] for c in reader.fieldnames if c.startswith(prefix)
            ]
        for rec in reader:
            rows.append(
                EvalRow(
                    community_id=rec["community_id"],
                    true_fraction=float(rec["true_fraction"]),
                    estimated_fraction=float(rec["estimated_fraction"]),
                    abs_error=float(rec["abs_error"]),
                    n_users=int(rec["n_users"]),
                    n_bots_predicted=int(rec["n_bots_predicted"]),
                    status=rec["status"],
                    per_model_mean_bot_prob={
                        name: float(rec[f"mean_bot_prob.{name}"])
                        for name in model_names
                        if rec.get(f"mean_bot_prob.{name}")
                    },
                )
            )
    return EvalReport(rows=rows, summary=_summarize(rows), model_names=model_names)
