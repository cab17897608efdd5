"""Command-line entry point.

    clustertransfer <subcommand> [--config PATH] [--input PATH] [--out DIR]
                    [--seed N] [--frozen N] [--format csv|md|svg]

Exit codes: 0 success, 1 runtime or config failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .config import RunConfig, load_config
from .data_ingest import apply_minmax, read_table
from .errors import ClusterTransferError, ConfigError
from .io_utils import atomic_write_text
from .neural_net import load_model, save_model
from .pca import export_scatter, fit_pca, project
from .pipeline import (
    ExperimentResult,
    frozen_layer_sweep,
    prepare_clusters,
    run_source_training,
    run_transfer,
)
from .report import (
    FORMATS,
    render_loss_curve,
    render_pca_scatter_svg,
    render_scatter,
    render_tables,
    render_wcss,
)

log = logging.getLogger("clustertransfer")

SUBCOMMANDS = ("cluster", "pretrain", "transfer", "sweep", "report", "pca")


SUBCOMMAND_HELP = """subcommands:
  cluster   WCSS curve, elbow choice and cluster sizes
  pca       2-D projection of the clustering features, labelled by cluster
  pretrain  train the source model and save it under model/
  transfer  fine-tune a saved source model with --frozen N leading layers fixed
  sweep     pretrain plus every configured frozen count, with tables and curves
  report    re-render tables from results/*.json
"""


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clustertransfer",
        description="Cluster a tabular dataset, pretrain on the larger cluster and "
                    "fine-tune on the smaller one with frozen leading layers.",
        epilog=SUBCOMMAND_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", type=Path)
    parser.add_argument("--input", type=Path, help="dataset CSV (overrides dataset_path)")
    parser.add_argument("--out", type=Path, help="report directory (pca: scatter CSV path)")
    parser.add_argument("--seed", type=int, help="run a single seed")
    parser.add_argument("--frozen", type=int, help="frozen-layer count for transfer")
    parser.add_argument("--format", action="append", choices=FORMATS, dest="formats",
                        help="repeatable; overrides report_formats")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    overrides = {}
    if args.input:
        overrides["dataset_path"] = str(args.input)
    if args.out and args.subcommand != "pca":
        overrides["output_dir"] = str(args.out)
    if args.seed is not None:
        overrides["seeds"] = (args.seed,)
    if args.frozen is not None:
        overrides["frozen_counts"] = (args.frozen,)
    if args.formats:
        overrides["report_formats"] = tuple(dict.fromkeys(args.formats))
    return replace(cfg, **overrides).validate()


def _write_json(path: Path, doc) -> Path:
    return atomic_write_text(path, json.dumps(doc, indent=1, sort_keys=True) + "\n")


def _cluster_outputs(cfg: RunConfig, out: Path, seed: int, data) -> None:
    svg = "svg" in cfg.report_formats
    stem = f"{cfg.plan().dataset_id}_seed{seed}"
    if data.curve is not None:
        render_wcss(data.curve.ks, data.curve.values, out / "curves" / f"{stem}_wcss.csv",
                    svg=svg, chosen_k=data.k)
    if cfg.emit_pca_scatter:
        X = apply_minmax(data.clustering_scaler, data.table.features)
        pca = fit_pca(X)
        coords = project(pca, X)
        export_scatter(coords, data.labels, out / "scatter" / f"{stem}_pca.csv")
        if svg:
            render_pca_scatter_svg(coords, data.labels, out / "scatter" / f"{stem}_pca.svg")


def cmd_cluster(cfg: RunConfig) -> int:
    plan = cfg.plan()
    out = Path(cfg.output_dir)
    raw = read_table(plan.dataset_path)
    for seed in plan.seeds:
        data = prepare_clusters(plan, seed, raw)
        _cluster_outputs(cfg, out, seed, data)
        lines = ["row,cluster"] + [f"{i},{int(c)}" for i, c in enumerate(data.labels)]
        atomic_write_text(out / "tables" / f"{plan.dataset_id}_seed{seed}_clusters.csv",
                          "\n".join(lines) + "\n")
        print(f"seed {seed}: k={data.k} sizes={data.cluster_sizes} "
              f"source={data.source.n_rows} target={data.target.n_rows}")
    return 0


def cmd_pca(cfg: RunConfig, out_path: Path | None) -> int:
    plan = cfg.plan()
    if out_path is None:
        raise ConfigError("--out", "pca needs an output CSV path")
    seed = plan.seeds[0]
    data = prepare_clusters(plan, seed)
    X = apply_minmax(data.clustering_scaler, data.table.features)
    model = fit_pca(X)
    coords = project(model, X)
    export_scatter(coords, data.labels, out_path)
    if "svg" in cfg.report_formats:
        render_pca_scatter_svg(coords, data.labels, out_path.with_suffix(".svg"))
    ev = model.explained_variance
    print(f"k={data.k}; explained variance pc1={ev[0]:.6g} pc2={ev[1]:.6g}; wrote {out_path}")
    return 0


def _source_model_path(out: Path, dataset_id: str, seed: int) -> Path:
    return out / "model" / f"{dataset_id}_seed{seed}_source.json"


def cmd_pretrain(cfg: RunConfig) -> int:
    plan = cfg.plan()
    out = Path(cfg.output_dir)
    svg = "svg" in cfg.report_formats
    raw = read_table(plan.dataset_path)
    for seed in plan.seeds:
        run = run_source_training(plan, seed, raw)
        stem = f"{plan.dataset_id}_seed{seed}"
        save_model(run.model, run.data.schema, run.scaler,
                   _source_model_path(out, plan.dataset_id, seed), seed, plan.pretrain)
        if cfg.emit_loss_curves:
            render_loss_curve(run.history, out / "curves" / f"{stem}_pretrain_loss.csv", svg)
        render_scatter(*run.source_test_pred, out / "scatter" / f"{stem}_source-test.csv", svg)
        render_scatter(*run.direct_pred, out / "scatter" / f"{stem}_target-direct.csv", svg)
        for rep in (run.source_report, run.direct_report):
            print(f"seed {seed} {rep.provenance.cluster}-test: rmse={rep.rmse:.4f} "
                  f"mae={rep.mae:.4f} r2={rep.r2 if rep.r2 is None else round(rep.r2, 4)}")
    return 0


def cmd_transfer(cfg: RunConfig) -> int:
    plan = cfg.plan()
    out = Path(cfg.output_dir)
    svg = "svg" in cfg.report_formats
    raw = read_table(plan.dataset_path)
    for seed in plan.seeds:
        path = _source_model_path(out, plan.dataset_id, seed)
        if not path.exists():
            raise ConfigError("--out", f"no pretrained model at {path}; run pretrain first")
        model, schema, scaler = load_model(path)
        data = prepare_clusters(plan, seed, raw)
        if schema is not None and tuple(schema.feature_names) != tuple(data.schema.feature_names):
            raise ConfigError("dataset_path", f"{path} was trained on different features")
        for n_frozen in plan.frozen_counts:
            run = run_transfer(model, data.target, n_frozen, plan.finetune, seed, scaler,
                               plan.train_fraction, plan.dataset_id)
            stem = f"{plan.dataset_id}_seed{seed}_frozen{n_frozen}"
            save_model(run.model, schema, scaler, out / "model" / f"{stem}_transfer.json",
                       seed, plan.finetune)
            if cfg.emit_loss_curves:
                render_loss_curve(run.history, out / "curves" / f"{stem}_finetune_loss.csv", svg)
            render_scatter(*run.pred, out / "scatter" / f"{stem}_transfer.csv", svg)
            rep = run.report
            print(f"seed {seed} frozen {n_frozen}: rmse={rep.rmse:.4f} mae={rep.mae:.4f} "
                  f"r2={rep.r2 if rep.r2 is None else round(rep.r2, 4)}")
    return 0


def write_result_outputs(cfg: RunConfig, result: ExperimentResult, out: Path) -> None:
    svg = "svg" in cfg.report_formats
    stem = f"{result.dataset_id}_seed{result.seed}"
    _write_json(out / "results" / f"{stem}.json", result.to_dict())
    src = result.source_run
    if src is not None:
        save_model(src.model, src.data.schema, src.scaler,
                   _source_model_path(out, result.dataset_id, result.seed), result.seed)
        _cluster_outputs(cfg, out, result.seed, src.data)
        for n_frozen, run in result.transfer_runs.items():
            save_model(run.model, src.data.schema, src.scaler,
                       out / "model" / f"{stem}_frozen{n_frozen}_transfer.json", result.seed)
    if cfg.emit_loss_curves:
        if result.pretrain_history is not None:
            render_loss_curve(result.pretrain_history,
                              out / "curves" / f"{stem}_pretrain_loss.csv", svg)
        for n_frozen, hist in result.finetune_histories.items():
            render_loss_curve(hist, out / "curves" / f"{stem}_frozen{n_frozen}_finetune_loss.csv",
                              svg)
    for name, (y, yhat) in result.predictions.items():
        render_scatter(y, yhat, out / "scatter" / f"{stem}_{name}.csv", svg)


def cmd_sweep(cfg: RunConfig) -> int:
    plan = cfg.plan()
    out = Path(cfg.output_dir)
    raw = read_table(plan.dataset_path)
    results = []
    for seed in plan.seeds:
        log.info("seed %d: pretraining and sweeping frozen counts %s", seed, plan.frozen_counts)
        result = frozen_layer_sweep(plan, seed, raw)
        write_result_outputs(cfg, result, out)
        results.append(result)
        best = result.best_transfer()
        print(f"seed {seed}: k={result.k} source={result.source_size} "
              f"target={result.target_size} direct rmse={result.direct_report.rmse:.4f}"
              + (f" best transfer rmse={best.rmse:.4f} (frozen {best.provenance.frozen})"
                 if best else ""))
    _, notices = render_tables(results, out, cfg.report_formats)
    for note in notices:
        print(f"notice: {note}")
    return 0


def cmd_report(cfg: RunConfig) -> int:
    out = Path(cfg.output_dir)
    paths = sorted((out / "results").glob("*.json"))
    if not paths:
        raise ConfigError("--out", f"no results found under {out / 'results'}")
    results = [ExperimentResult.from_dict(json.loads(p.read_text())) for p in paths]
    by_plan: dict[str, list[ExperimentResult]] = {}
    for r in results:
        by_plan.setdefault(r.dataset_id, []).append(r)
    if len(by_plan) > 1:
        for dataset_id, group in by_plan.items():
            _, notices = render_tables(group, out / dataset_id, cfg.report_formats)
            for note in notices:
                print(f"notice: {note}")
    else:
        _, notices = render_tables(results, out, cfg.report_formats)
        for note in notices:
            print(f"notice: {note}")
    print(f"rendered {len(results)} result(s) into {out / 'tables'}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        if args.subcommand == "cluster":
            return cmd_cluster(cfg)
        if args.subcommand == "pca":
            return cmd_pca(cfg, args.out)
        if args.subcommand == "pretrain":
            return cmd_pretrain(cfg)
        if args.subcommand == "transfer":
            return cmd_transfer(cfg)
        if args.subcommand == "sweep":
            return cmd_sweep(cfg)
        return cmd_report(cfg)
    except ConfigError as exc:
        print(f"clustertransfer: config error: {exc}", file=sys.stderr)
        return 1
    except (ClusterTransferError, OSError, ValueError, ArithmeticError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"clustertransfer: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
