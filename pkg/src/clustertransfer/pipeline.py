"""Source pretraining, cross-cluster evaluation and frozen-layer fine-tuning sweeps.

Pipeline order for one seed:

1. encode the CSV and min-max scale the full feature matrix (clustering only);
2. choose k by the elbow rule and cluster; the largest cluster is the source
   domain (cluster0), the next largest the target domain (cluster1);
3. split each domain 70/30 and fit a modeling scaler on source-train only;
4. pretrain on source-train, evaluate on source-test and target-test;
5. for each frozen-layer count, fine-tune a copy of the pretrained network on
   target-train and evaluate on target-test.
"""

from __future__ import annotations

import hashlib
import json
import logging
import zlib
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import clustering
from .data_ingest import (
    PERIOD_GRADES,
    EncodingSchema,
    NumericTable,
    RawTable,
    Scaler,
    apply_minmax,
    build_encoding_schema,
    encode,
    fit_minmax,
    read_table,
    split_train_test,
)
from .errors import ClusterTransferError
from .metrics import EvalReport, Provenance, evaluate
from .neural_net import (
    DEFAULT_WIDTHS,
    LossHistory,
    Mlp,
    TrainConfig,
    freeze_layers,
    init_mlp,
    predict,
    train,
)

log = logging.getLogger(__name__)

SOURCE = "cluster0"
TARGET = "cluster1"


@dataclass(frozen=True)
class ExperimentPlan:
    dataset_path: str
    dataset_id: str = ""
    target: str = "G3"
    drop_g1_g2: bool = False
    k_max: int = 10
    kmeans_restarts: int = clustering.DEFAULT_RESTARTS
    n_clusters: int | None = None
    seeds: tuple[int, ...] = (0,)
    train_fraction: float = 0.7
    widths: tuple[int, ...] = DEFAULT_WIDTHS
    pretrain: TrainConfig = TrainConfig(epochs=500)
    finetune: TrainConfig = TrainConfig(epochs=100)
    frozen_counts: tuple[int, ...] = (1, 2, 3)

    def __post_init__(self):
        if not self.dataset_id:
            object.__setattr__(self, "dataset_id", Path(self.dataset_path).stem)
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        object.__setattr__(self, "frozen_counts", tuple(int(f) for f in self.frozen_counts))
        if not self.seeds:
            raise ValueError("seeds must be nonempty")
        bad = [f for f in self.frozen_counts if not 1 <= f < len(self.widths)]
        if bad:
            raise ValueError(f"frozen_counts {bad} out of range for a {len(self.widths)}-layer net")
        if self.n_clusters is None and self.k_max < 3:
            raise ValueError("k_max must be at least 3")
        if self.n_clusters is not None and self.n_clusters < 2:
            raise ValueError("n_clusters must be at least 2")

    def fingerprint(self) -> str:
        """Hash of everything except the seed list."""
        d = asdict(self)
        d.pop("seeds")
        blob = json.dumps(d, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def derive_seed(seed: int, purpose: str) -> int:
    """Independent integer seed for one randomized stage of a run."""
    tag = zlib.crc32(purpose.encode())
    return int(np.random.SeedSequence([int(seed), tag]).generate_state(1)[0])


@dataclass(frozen=True)
class ClusteredData:
    schema: EncodingSchema
    table: NumericTable
    clustering_scaler: Scaler
    curve: clustering.WcssCurve | None
    k: int
    labels: np.ndarray
    source_label: int
    target_label: int
    source: NumericTable
    target: NumericTable

    @property
    def cluster_sizes(self) -> list[int]:
        return np.bincount(self.labels, minlength=self.k).tolist()


@dataclass
class SourceRun:
    seed: int
    model: Mlp
    scaler: Scaler
    history: LossHistory
    source_report: EvalReport
    direct_report: EvalReport
    data: ClusteredData
    source_test_pred: tuple[np.ndarray, np.ndarray]
    direct_pred: tuple[np.ndarray, np.ndarray]


@dataclass
class TransferRun:
    n_frozen: int
    model: Mlp
    history: LossHistory
    report: EvalReport
    pred: tuple[np.ndarray, np.ndarray]


@dataclass
class ExperimentResult:
    plan_fingerprint: str
    dataset_id: str
    seed: int
    k: int
    wcss: list[tuple[int, float]]
    cluster_sizes: list[int]
    source_size: int
    target_size: int
    source_report: EvalReport
    direct_report: EvalReport
    transfer_reports: dict[int, EvalReport] = field(default_factory=dict)
    failures: dict[int, str] = field(default_factory=dict)
    pretrain_history: LossHistory | None = None
    finetune_histories: dict[int, LossHistory] = field(default_factory=dict)
    predictions: dict[str, tuple[list[float], list[float]]] = field(default_factory=dict)
    # Not serialized; kept so callers can save weights.
    source_run: SourceRun | None = field(default=None, repr=False, compare=False)
    transfer_runs: dict[int, TransferRun] = field(default_factory=dict, repr=False, compare=False)

    def best_transfer(self) -> EvalReport | None:
        if not self.transfer_reports:
            return None
        return min(self.transfer_reports.values(), key=lambda r: (r.rmse, r.provenance.frozen))

    def to_dict(self) -> dict:
        def hist(h: LossHistory | None):
            return None if h is None else {"losses": list(h.losses), "best_epoch": h.best_epoch,
                                           "steps": h.steps}
        return {
            "plan_fingerprint": self.plan_fingerprint,
            "dataset_id": self.dataset_id,
            "seed": self.seed,
            "k": self.k,
            "wcss": [[k, w] for k, w in self.wcss],
            "cluster_sizes": list(self.cluster_sizes),
            "source_size": self.source_size,
            "target_size": self.target_size,
            "source_report": self.source_report.to_dict(),
            "direct_report": self.direct_report.to_dict(),
            "transfer_reports": {str(f): r.to_dict() for f, r in self.transfer_reports.items()},
            "failures": {str(f): msg for f, msg in self.failures.items()},
            "pretrain_history": hist(self.pretrain_history),
            "finetune_histories": {str(f): hist(h) for f, h in self.finetune_histories.items()},
            "predictions": {k: [list(y), list(p)] for k, (y, p) in self.predictions.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentResult":
        def hist(h):
            return None if h is None else LossHistory(tuple(h["losses"]), h["best_epoch"],
                                                      h.get("steps", 0))
        return cls(
            plan_fingerprint=d["plan_fingerprint"],
            dataset_id=d["dataset_id"],
            seed=d["seed"],
            k=d["k"],
            wcss=[(int(k), float(w)) for k, w in d["wcss"]],
            cluster_sizes=list(d["cluster_sizes"]),
            source_size=d["source_size"],
            target_size=d["target_size"],
            source_report=EvalReport.from_dict(d["source_report"]),
            direct_report=EvalReport.from_dict(d["direct_report"]),
            transfer_reports={int(f): EvalReport.from_dict(r)
                              for f, r in d["transfer_reports"].items()},
            failures={int(f): m for f, m in d["failures"].items()},
            pretrain_history=hist(d["pretrain_history"]),
            finetune_histories={int(f): hist(h) for f, h in d["finetune_histories"].items()},
            predictions={k: (list(v[0]), list(v[1])) for k, v in d["predictions"].items()},
        )


def load_dataset(plan: ExperimentPlan) -> RawTable:
    return read_table(plan.dataset_path)


def encode_dataset(plan: ExperimentPlan, raw: RawTable) -> tuple[EncodingSchema, NumericTable]:
    drop = [c for c in PERIOD_GRADES if c in raw.names] if plan.drop_g1_g2 else []
    schema = build_encoding_schema(raw, plan.target, drop)
    return schema, encode(raw, schema)


def prepare_clusters(plan: ExperimentPlan, seed: int, raw: RawTable | None = None) -> ClusteredData:
    """Encode, scale for clustering, pick k and designate source/target clusters."""
    raw = raw if raw is not None else load_dataset(plan)
    schema, table = encode_dataset(plan, raw)
    cl_scaler = fit_minmax(table)
    Xc = apply_minmax(cl_scaler, table.features)
    km_seed = derive_seed(seed, "kmeans")

    curve = None
    if plan.n_clusters is None:
        k_max = min(plan.k_max, table.n_rows)
        curve, models = clustering.wcss_curve(Xc, k_max, seed=km_seed,
                                              restarts=plan.kmeans_restarts)
        k = clustering.elbow_k(curve)
        model = models[k]
    else:
        k = plan.n_clusters
        model = clustering.kmeans(Xc, k, seed=km_seed, restarts=plan.kmeans_restarts)
    labels = model.labels
    sizes = np.bincount(labels, minlength=k)
    # Largest cluster is the source; ties go to the lower label.
    ranked = sorted(range(k), key=lambda j: (-sizes[j], j))
    src, tgt = ranked[0], ranked[1]
    if k != 2:
        log.warning("elbow chose k=%d; using the two largest clusters (%d and %d rows)",
                    k, sizes[src], sizes[tgt])
    return ClusteredData(
        schema=schema,
        table=table,
        clustering_scaler=cl_scaler,
        curve=curve,
        k=k,
        labels=labels,
        source_label=src,
        target_label=tgt,
        source=table.take(np.flatnonzero(labels == src)),
        target=table.take(np.flatnonzero(labels == tgt)),
    )


def split_target(target: NumericTable, seed: int, train_fraction: float = 0.7
                 ) -> tuple[NumericTable, NumericTable]:
    """The target-domain split shared by direct evaluation and every fine-tune."""
    return split_train_test(target, train_fraction, derive_seed(seed, "split-target"))


def _prov(dataset_id, cluster: str, split: str, frozen: int, seed: int) -> Provenance:
    return Provenance(dataset_id, cluster, split, frozen, seed)


def run_source_training(plan: ExperimentPlan, seed: int, raw: RawTable | None = None,
                        data: ClusteredData | None = None) -> SourceRun:
    data = data if data is not None else prepare_clusters(plan, seed, raw)
    src_train, src_test = split_train_test(data.source, plan.train_fraction,
                                           derive_seed(seed, "split-source"))
    _, tgt_test = split_target(data.target, seed, plan.train_fraction)

    scaler = fit_minmax(src_train)
    train_scaled = apply_minmax(scaler, src_train)
    mlp = init_mlp(src_train.n_features, plan.widths, derive_seed(seed, "init"))
    cfg = replace(plan.pretrain, seed=derive_seed(seed, "pretrain"))
    model, history = train(mlp, train_scaled, cfg)

    src_pred = predict(model, apply_minmax(scaler, src_test.features))
    # Same scaler, no refit, on the target domain.
    tgt_pred = predict(model, apply_minmax(scaler, tgt_test.features))
    did = plan.dataset_id
    return SourceRun(
        seed=seed,
        model=model,
        scaler=scaler,
        history=history,
        source_report=evaluate(src_test.target, src_pred, _prov(did, SOURCE, "test", 0, seed)),
        direct_report=evaluate(tgt_test.target, tgt_pred, _prov(did, TARGET, "test", 0, seed)),
        data=data,
        source_test_pred=(src_test.target, src_pred),
        direct_pred=(tgt_test.target, tgt_pred),
    )


def run_transfer(model: Mlp, target: NumericTable, n_frozen: int, finetune: TrainConfig,
                 seed: int, scaler: Scaler, train_fraction: float = 0.7,
                 dataset_id: str = "") -> TransferRun:
    """Fine-tune a copy of ``model`` on the target domain with the first layers frozen.

    ``target`` is the unscaled target-domain table; it is split with the same
    seed as the direct evaluation so both are scored on identical rows.
    """
    if not 1 <= n_frozen < model.depth:
        raise ValueError(f"n_frozen must be in [1, {model.depth - 1}], got {n_frozen}")
    tgt_train, tgt_test = split_target(target, seed, train_fraction)
    start = freeze_layers(model.copy(), n_frozen)
    cfg = replace(finetune, seed=derive_seed(seed, f"finetune-{n_frozen}"))
    tuned, history = train(start, apply_minmax(scaler, tgt_train), cfg)
    pred = predict(tuned, apply_minmax(scaler, tgt_test.features))
    report = evaluate(tgt_test.target, pred,
                      _prov(dataset_id, TARGET, "test", n_frozen, seed))
    return TransferRun(n_frozen, tuned, history, report, (tgt_test.target, pred))


def frozen_layer_sweep(plan: ExperimentPlan, seed: int, raw: RawTable | None = None
                       ) -> ExperimentResult:
    """Pretrain once, then fine-tune for every count in ``plan.frozen_counts``.

    A failing branch is recorded in ``failures`` and the rest still run.
    """
    src = run_source_training(plan, seed, raw)
    data = src.data
    result = ExperimentResult(
        plan_fingerprint=plan.fingerprint(),
        dataset_id=plan.dataset_id,
        seed=seed,
        k=data.k,
        wcss=list(zip(data.curve.ks, data.curve.values)) if data.curve else [],
        cluster_sizes=data.cluster_sizes,
        source_size=data.source.n_rows,
        target_size=data.target.n_rows,
        source_report=src.source_report,
        direct_report=src.direct_report,
        pretrain_history=src.history,
        predictions={
            "source-test": (src.source_test_pred[0].tolist(), src.source_test_pred[1].tolist()),
            "target-direct": (src.direct_pred[0].tolist(), src.direct_pred[1].tolist()),
        },
        source_run=src,
    )
    for n_frozen in plan.frozen_counts:
        try:
            run = run_transfer(src.model, data.target, n_frozen, plan.finetune, seed,
                               src.scaler, plan.train_fraction, plan.dataset_id)
        except (ClusterTransferError, ValueError, ArithmeticError) as exc:
            log.error("fine-tune with %d frozen layers failed: %s", n_frozen, exc)
            result.failures[n_frozen] = str(exc)
            continue
        result.transfer_reports[n_frozen] = run.report
        result.finetune_histories[n_frozen] = run.history
        result.predictions[f"transfer-frozen{n_frozen}"] = (run.pred[0].tolist(),
                                                            run.pred[1].tolist())
        result.transfer_runs[n_frozen] = run
    return result


@dataclass(frozen=True)
class SummaryRow:
    dataset: str
    stage: str
    frozen: int
    metric: str
    mean: float
    std: float
    n_seeds: int


def _stage_reports(result: ExperimentResult) -> list[tuple[str, int, EvalReport]]:
    rows = [("source-test", 0, result.source_report), ("target-direct", 0, result.direct_report)]
    rows += [("target-transfer", f, r) for f, r in sorted(result.transfer_reports.items())]
    return rows


def aggregate_seeds(results: Sequence[ExperimentResult]) -> list[SummaryRow]:
    """Mean and population standard deviation per metric, stage and frozen count."""
    if not results:
        raise ValueError("no results to aggregate")
    fps = {r.plan_fingerprint for r in results}
    if len(fps) != 1:
        raise ValueError(f"results come from different plans: {sorted(fps)}")
    grouped: dict[tuple[str, int], dict[str, list[float]]] = {}
    for res in results:
        for stage, frozen, rep in _stage_reports(res):
            bucket = grouped.setdefault((stage, frozen), {"rmse": [], "mae": [], "r2": []})
            bucket["rmse"].append(rep.rmse)
            bucket["mae"].append(rep.mae)
            if rep.r2 is not None:
                bucket["r2"].append(rep.r2)
    dataset = results[0].dataset_id
    rows = []
    for (stage, frozen), metrics in grouped.items():
        for name in ("rmse", "mae", "r2"):
            vals = np.array(metrics[name])
            if vals.size == 0:
                continue
            rows.append(SummaryRow(dataset, stage, frozen, name, float(vals.mean()),
                                   float(vals.std()), int(vals.size)))
    return rows


def run_plan(plan: ExperimentPlan) -> list[ExperimentResult]:
    raw = load_dataset(plan)
    return [frozen_layer_sweep(plan, seed, raw) for seed in plan.seeds]
