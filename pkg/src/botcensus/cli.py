"""Command-line interface.

Commands: synth-generate, train, calibrate, fit-weights, estimate,
eval-balanced, eval-sweep, perturb-eval, report. Every command reads and
writes only the declared file formats (users JSONL, edges/labels CSV, JSON
config, bundle directory, report CSVs); commands with --seed are
bit-reproducible.

Option resolution: explicit flag > config file > BOTCENSUS_<NAME> environment
variable > built-in default. Exit codes: 0 success, 2 config error, 3 data
error, 4 infeasible evaluation.
"""

from __future__ import annotations

import dataclasses
import os
import sys
from pathlib import Path

import click

from . import __version__
from .config import ENV_PREFIX, PipelineConfig, load_config, write_default_config
from .ensemble import load_bundle, save_bundle
from .errors import (
    BotCensusError,
    ConfigError,
    EmptyCommunity,
    EmptyValidation,
    InfeasibleTarget,
)
from .ingest import load_edges, load_labels, load_users, split_train_val
from .pipeline import calibrate_bundle, fit_bundle_weights, train_bundle
from .report import (
    read_report_rows,
    run_balanced,
    run_perturbation,
    run_sweep,
    write_report,
)
from .synth import SynthConfig, generate_community, write_community

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_INFEASIBLE = 4

_INFEASIBLE_ERRORS = (InfeasibleTarget, EmptyCommunity, EmptyValidation)


def _resolve(ctx: click.Context, name: str, config_value, cast):
    """flag > config file > environment > default."""
    source = ctx.get_parameter_source(name)
    if source == click.core.ParameterSource.COMMANDLINE:
        return ctx.params[name]
    if config_value is not None:
        return config_value
    env = os.environ.get(ENV_PREFIX + name.upper())
    if env is not None:
        try:
            return cast(env)
        except ValueError:
            raise ConfigError(f"bad value for {ENV_PREFIX}{name.upper()}: {env!r}")
    return ctx.params[name]


def _load_pipeline_config(config_path: str | None) -> tuple[PipelineConfig, dict]:
    if config_path is None:
        return PipelineConfig(), {}
    import json

    cfg = load_config(config_path)
    with open(config_path, encoding="utf-8") as fh:
        raw = json.load(fh)
    return cfg, raw


def _load_dataset(users: str, labels: str | None):
    store = load_users(users)
    if labels is not None:
        store = store.with_labels(load_labels(labels))
    return store


@click.group()
@click.version_option(version=__version__, prog_name="botcensus")
def cli():
    """Community-level bot population estimation."""


@cli.command("init-config")
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def init_config_cmd(out):
    """Write the default hyperparameter config as JSON."""
    write_default_config(out)
    click.echo(f"wrote default config to {out}")


@cli.command("synth-generate")
@click.option("--out-dir", type=click.Path(file_okay=False), required=True)
@click.option("--n", "n_users", type=int, default=1000, show_default=True)
@click.option("--bot-fraction", type=float, default=0.5, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--delta", type=float, default=1.0, show_default=True)
@click.option("--homophily", type=float, default=0.7, show_default=True)
@click.option("--mean-degree", type=float, default=8.0, show_default=True)
@click.pass_context
def synth_generate_cmd(ctx, out_dir, n_users, bot_fraction, seed, delta,
                       homophily, mean_degree):
    """Generate a labeled synthetic community and write its data files."""
    seed = _resolve(ctx, "seed", None, int)
    cfg = SynthConfig(
        n_users=n_users,
        bot_fraction=bot_fraction,
        seed=seed,
        delta=delta,
        homophily=homophily,
        mean_degree=mean_degree,
    )
    store, edges, labels = generate_community(cfg)
    paths = write_community(out_dir, store, edges, labels)
    for kind, path in paths.items():
        click.echo(f"{kind}: {path}")


@cli.command("train")
@click.option("--users", type=click.Path(dir_okay=False), required=True)
@click.option("--edges", type=click.Path(dir_okay=False), required=True)
@click.option("--labels", type=click.Path(dir_okay=False))
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.option("--config", "config_path", type=click.Path(dir_okay=False))
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--val-fraction", type=float, default=0.2, show_default=True)
@click.option("--skip-calibration", is_flag=True,
              help="Write the bundle with unit temperatures and uniform weights.")
@click.pass_context
def train_cmd(ctx, users, edges, labels, out_dir, config_path, seed,
              val_fraction, skip_calibration):
    """Train all sub-models and write a bundle directory."""
    cfg, raw = _load_pipeline_config(config_path)
    seed = _resolve(ctx, "seed", raw.get("seed"), int)
    val_fraction = _resolve(ctx, "val_fraction", raw.get("val_fraction"), float)
    cfg = dataclasses.replace(cfg.with_seed(seed), val_fraction=val_fraction)
    store = _load_dataset(users, labels)
    edge_list = load_edges(edges)
    result = train_bundle(store, edge_list, cfg, calibrate=not skip_calibration)
    save_bundle(result.bundle, out_dir)
    click.echo(
        f"trained {len(result.bundle.submodels)} sub-models "
        f"({len(result.train_ids)} train / {len(result.val_ids)} val users) -> {out_dir}"
    )


def _validation_store(users, labels, seed, val_fraction):
    store = _load_dataset(users, labels)
    _train, val = split_train_val(store, val_fraction, seed)
    return val


@cli.command("calibrate")
@click.option("--bundle", "bundle_dir", type=click.Path(file_okay=False),
              required=True)
@click.option("--users", type=click.Path(dir_okay=False), required=True)
@click.option("--labels", type=click.Path(dir_okay=False))
@click.option("--seed", type=int, default=0, show_default=True,
              help="Split seed; must match the training run to reuse its split.")
@click.option("--val-fraction", type=float, default=0.2, show_default=True)
@click.pass_context
def calibrate_cmd(ctx, bundle_dir, users, labels, seed, val_fraction):
    """Fit per-sub-model temperatures on the validation split."""
    seed = _resolve(ctx, "seed", None, int)
    val_fraction = _resolve(ctx, "val_fraction", None, float)
    bundle = load_bundle(bundle_dir)
    val = _validation_store(users, labels, seed, val_fraction)
    bundle = calibrate_bundle(bundle, val)
    save_bundle(bundle, bundle_dir)
    for name in sorted(bundle.temperatures):
        click.echo(f"{name}: T = {bundle.temperatures[name]:.4f}")


@cli.command("fit-weights")
@click.option("--bundle", "bundle_dir", type=click.Path(file_okay=False),
              required=True)
@click.option("--users", type=click.Path(dir_okay=False), required=True)
@click.option("--labels", type=click.Path(dir_okay=False))
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--val-fraction", type=float, default=0.2, show_default=True)
@click.pass_context
def fit_weights_cmd(ctx, bundle_dir, users, labels, seed, val_fraction):
    """Fit ensemble combination weights on the validation split."""
    seed = _resolve(ctx, "seed", None, int)
    val_fraction = _resolve(ctx, "val_fraction", None, float)
    bundle = load_bundle(bundle_dir)
    val = _validation_store(users, labels, seed, val_fraction)
    bundle, history = fit_bundle_weights(bundle, val)
    save_bundle(bundle, bundle_dir)
    click.echo(f"validation NLL {history[0]:.4f} -> {history[-1]:.4f}")
    for name in sorted(bundle.alpha):
        click.echo(f"{name}: alpha = {bundle.alpha[name]:.4f}")


@cli.command("estimate")
@click.option("--bundle", "bundle_dir", type=click.Path(file_okay=False),
              required=True)
@click.option("--users", type=click.Path(dir_okay=False), required=True)
@click.option("--out", type=click.Path(dir_okay=False))
def estimate_cmd(bundle_dir, users, out):
    """Estimate the bot fraction of one community file."""
    bundle = load_bundle(bundle_dir)
    store = load_users(users)
    est = bundle.estimate(store)
    click.echo(
        f"p_hat = {est.p_hat:.4f} ({est.n_bots_predicted}/{est.n_users} users)"
    )
    for name in sorted(est.per_model_mean_bot_prob):
        click.echo(f"  {name}: mean bot prob {est.per_model_mean_bot_prob[name]:.4f}")
    if out:
        import csv as _csv

        with open(out, "w", encoding="utf-8", newline="") as fh:
            writer = _csv.writer(fh)
            writer.writerow(["p_hat", "n_users", "n_bots_predicted"])
            writer.writerow([repr(est.p_hat), est.n_users, est.n_bots_predicted])


@cli.command("eval-balanced")
@click.option("--bundle", "bundle_dir", type=click.Path(file_okay=False),
              required=True)
@click.option("--communities", type=int, default=10, show_default=True)
@click.option("--size", type=int, default=10000, show_default=True)
@click.option("--bot-fraction", type=float, default=0.5, show_default=True)
@click.option("--seed", type=int, default=100, show_default=True)
@click.option("--delta", type=float, default=1.0, show_default=True)
@click.option("--homophily", type=float, default=0.7, show_default=True)
@click.option("--mean-degree", type=float, default=8.0, show_default=True)
@click.option("--out-dir", type=click.Path(file_okay=False), required=True)
@click.pass_context
def eval_balanced_cmd(ctx, bundle_dir, communities, size, bot_fraction, seed,
                      delta, homophily, mean_degree, out_dir):
    """Estimate freshly generated communities at one bot fraction."""
    seed = _resolve(ctx, "seed", None, int)
    bundle = load_bundle(bundle_dir)
    base = SynthConfig(
        n_users=size, bot_fraction=bot_fraction, seed=seed, delta=delta,
        homophily=homophily, mean_degree=mean_degree,
    )
    report = run_balanced(bundle, base, communities)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_report(report, out / "balanced.csv", out / "balanced.svg",
                 out / "balanced_summary.csv")
    click.echo(
        f"MAE {report.summary.mae:.4f}, max error {report.summary.max_error:.4f} "
        f"over {report.summary.n_rows} communities -> {out}"
    )


def _parse_fractions(text: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ConfigError(f"bad fractions list: {text!r}")


@cli.command("eval-sweep")
@click.option("--bundle", "bundle_dir", type=click.Path(file_okay=False),
              required=True)
@click.option("--pool-users", type=click.Path(dir_okay=False),
              required=True)
@click.option("--pool-edges", type=click.Path(dir_okay=False),
              required=True)
@click.option("--pool-labels", type=click.Path(dir_okay=False))
@click.option("--fractions", default="0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9",
              show_default=True)
@click.option("--size", type=int, default=5000, show_default=True)
@click.option("--seeds", type=int, default=3, show_default=True,
              help="Number of resampling seeds per fraction.")
@click.option("--seed", type=int, default=0, show_default=True,
              help="Base resampling seed.")
@click.option("--unit-temperatures", is_flag=True,
              help="Force every temperature to 1 (calibration ablation).")
@click.option("--out-dir", type=click.Path(file_okay=False), required=True)
@click.pass_context
def eval_sweep_cmd(ctx, bundle_dir, pool_users, pool_edges, pool_labels,
                   fractions, size, seeds, seed, unit_temperatures, out_dir):
    """Resample communities across bot fractions and estimate each."""
    seed = _resolve(ctx, "seed", None, int)
    bundle = load_bundle(bundle_dir)
    pool = load_users(pool_users)
    if pool_labels:
        labels = load_labels(pool_labels)
        pool = pool.with_labels(labels)
    else:
        labels = {
            uid: pool[uid].label
            for uid in pool.sorted_ids()
            if pool[uid].label is not None
        }
    edge_list = load_edges(pool_edges)
    temps = None
    if unit_temperatures:
        temps = {name: 1.0 for name in bundle.submodel_names()}
    report = run_sweep(
        bundle, pool, edge_list, labels,
        _parse_fractions(fractions), size,
        [seed + k for k in range(seeds)],
        temperatures=temps,
    )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_report(report, out / "sweep.csv", out / "sweep.svg",
                 out / "sweep_summary.csv")
    ok_rows = report.summary.n_rows - report.summary.n_infeasible
    click.echo(
        f"MAE {report.summary.mae:.4f}, max error {report.summary.max_error:.4f} "
        f"over {ok_rows} communities ({report.summary.n_infeasible} infeasible) -> {out}"
    )
    if ok_rows == 0:
        raise InfeasibleTarget("every sweep row was infeasible")


@cli.command("perturb-eval")
@click.option("--bundle", "bundle_dir", type=click.Path(file_okay=False),
              required=True)
@click.option("--users", type=click.Path(dir_okay=False), required=True,
              help="Community file with labels (inline or via --labels).")
@click.option("--labels", type=click.Path(dir_okay=False))
@click.option("--train-users", type=click.Path(dir_okay=False),
              required=True, help="Labeled users for the stump baseline.")
@click.option("--train-labels", type=click.Path(dir_okay=False))
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.pass_context
def perturb_eval_cmd(ctx, bundle_dir, users, labels, train_users, train_labels,
                     seed, out):
    """Compare ensemble vs verified-only stump under verified rewrites."""
    seed = _resolve(ctx, "seed", None, int)
    bundle = load_bundle(bundle_dir)
    community = _load_dataset(users, labels)
    train_store = _load_dataset(train_users, train_labels)
    rows = run_perturbation(bundle, community, train_store, seed)
    import csv as _csv

    with open(out, "w", encoding="utf-8", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(
            ["mode", "true_fraction", "ensemble_estimate", "ensemble_deviation",
             "stump_estimate", "stump_deviation"]
        )
        for r in rows:
            writer.writerow(
                [r.mode, repr(r.true_fraction), repr(r.ensemble_estimate),
                 repr(r.ensemble_deviation), repr(r.stump_estimate),
                 repr(r.stump_deviation)]
            )
    for r in rows:
        click.echo(
            f"{r.mode}: ensemble {r.ensemble_estimate:.4f} "
            f"(dev {r.ensemble_deviation:.4f}), stump {r.stump_estimate:.4f} "
            f"(dev {r.stump_deviation:.4f})"
        )


@cli.command("report")
@click.option("--rows", "rows_csv", type=click.Path(dir_okay=False),
              required=True)
@click.option("--chart", type=click.Path(dir_okay=False), required=True)
def report_cmd(rows_csv, chart):
    """Re-emit the estimated-vs-true chart from a rows CSV."""
    from .report import make_chart

    report = read_report_rows(rows_csv)
    fig = make_chart(report)
    try:
        fig.savefig(chart)
    except OSError as exc:
        from .errors import IoError

        raise IoError(f"cannot write chart {chart}: {exc}")
    finally:
        import matplotlib.pyplot as plt

        plt.close(fig)
    click.echo(f"chart written to {chart}")


def main(argv: list[str] | None = None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Abort:
        return 1
    except click.ClickException as exc:
        exc.show()
        return EXIT_CONFIG
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        return EXIT_CONFIG
    except _INFEASIBLE_ERRORS as exc:
        click.echo(f"infeasible evaluation: {exc}", err=True)
        return EXIT_INFEASIBLE
    except (BotCensusError, FileNotFoundError) as exc:
        click.echo(f"data error: {exc}", err=True)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
