"""Experiment grid over principal components x (ranks | layers) x seeds.

Each cell: split (seeded) -> PCA fitted on the training part -> scaling (VQC
always, TN optionally) -> train -> evaluate.  Cells are independent and are
written out sorted by (model, components, sweep, seed), so the files do not
depend on scheduling.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import data, expmachine, vqc
from .errors import InvalidInputError, TrainingDivergedError
from .plots import svg_line_chart

log = logging.getLogger(__name__)

MODELS = ("tn", "vqc")
RESULT_COLUMNS = (
    "model", "components", "sweep", "param_count", "seed", "train_acc", "val_acc",
    "train_f1", "val_f1", "epochs", "seconds", "final_loss", "status",
)
ALL_FEATURES = 21


def accuracy(preds, labels) -> float:
    preds, labels = np.asarray(preds), np.asarray(labels)
    if preds.shape != labels.shape or preds.size == 0:
        raise InvalidInputError(f"need equal non-empty lengths, got {preds.shape} and {labels.shape}")
    return float(np.mean(preds == labels))


def f1_score(preds, labels, positive: int = 1) -> float:
    preds, labels = np.asarray(preds), np.asarray(labels)
    if preds.shape != labels.shape or preds.size == 0:
        raise InvalidInputError(f"need equal non-empty lengths, got {preds.shape} and {labels.shape}")
    tp = np.sum((preds == positive) & (labels == positive))
    fp = np.sum((preds == positive) & (labels != positive))
    fn = np.sum((preds != positive) & (labels == positive))
    if tp == 0:
        return 0.0
    precision, recall = tp / (tp + fp), tp / (tp + fn)
    return float(2 * precision * recall / (precision + recall))


@dataclass
class ExperimentConfig:
    models: tuple[str, ...] = MODELS
    components: tuple[int, ...] = (2, 5, 10, 16)
    ranks: tuple[int, ...] = (1, 2, 3, 4, 5, 6, 7, 8)
    layers: tuple[int, ...] = (1, 2, 3, 4, 5, 6)
    seeds: tuple[int, ...] = (0, 1, 2)
    # TN training
    tn_epochs: int = 500
    tn_lr: float = 2.0
    tn_lambda: float = 0.0
    tn_loss: str = "logistic"
    tn_scale: bool = False
    # VQC training
    vqc_epochs: int = 60
    vqc_lr: float = 0.1
    vqc_decay: float = 0.95
    batch_size: int = 32
    threshold: float = 0.5
    vqc_grad: str = "auto"  # shift | adjoint | auto (shift up to AUTO_SHIFT_QUBITS)
    # data
    data_path: str | None = None
    train_fraction: float = 0.8
    pca_fit_on: str = "train"
    # execution
    out_dir: str = "results"
    workers: int = 1
    record_timing: bool = False

    def __post_init__(self):
        for name in ("models", "components", "ranks", "layers", "seeds"):
            setattr(self, name, tuple(getattr(self, name)))
        bad = set(self.models) - set(MODELS)
        if bad:
            raise InvalidInputError(f"unknown models {sorted(bad)}")
        if not self.models or not self.components or not self.seeds:
            raise InvalidInputError("models, components and seeds must be non-empty")
        if "tn" in self.models and not self.ranks:
            raise InvalidInputError("TN sweep needs at least one rank")
        if "vqc" in self.models and not self.layers:
            raise InvalidInputError("VQC sweep needs at least one layer count")
        if any(k < 1 or k > ALL_FEATURES for k in self.components):
            raise InvalidInputError(f"components must be in 1..{ALL_FEATURES}")
        if self.vqc_grad not in ("shift", "adjoint", "auto"):
            raise InvalidInputError(f"unknown vqc_grad {self.vqc_grad!r}")

    def cells(self) -> list[tuple[str, int, int, int]]:
        out = []
        for model in sorted(self.models):
            sweep = self.ranks if model == "tn" else self.layers
            for k in sorted(self.components):
                for v in sorted(sweep):
                    for seed in sorted(self.seeds):
                        out.append((model, k, v, seed))
        return out


AUTO_SHIFT_QUBITS = 5


@dataclass
class ResultRecord:
    model: str
    components: int
    sweep: int
    param_count: int
    seed: int
    train_acc: float = float("nan")
    val_acc: float = float("nan")
    train_f1: float = float("nan")
    val_f1: float = float("nan")
    epochs: int = 0
    seconds: float = float("nan")
    final_loss: float = float("nan")
    status: str = "ok"
    stored_param_count: int = 0
    best_epoch: int = -1
    best_val_acc: float = float("nan")
    history: dict = field(default_factory=dict)

    def csv_row(self, with_time: bool) -> list[str]:
        row = []
        for col in RESULT_COLUMNS:
            v = getattr(self, col)
            if col == "seconds" and not with_time:
                row.append("")
            elif isinstance(v, float):
                row.append(format(v, ".17g"))
            else:
                row.append(str(v))
        return row


@lru_cache(maxsize=4)
def _dataset(path: str | None) -> data.LabeledDataset:
    return data.load_car_dataset(path)


def param_count(model: str, components: int, sweep: int) -> int:
    if model == "tn":
        return expmachine.count_params(components, sweep)
    return vqc.count_params(components, sweep)


def _grad_method(cfg: ExperimentConfig, qubits: int) -> str:
    if cfg.vqc_grad != "auto":
        return cfg.vqc_grad
    return "shift" if qubits <= AUTO_SHIFT_QUBITS else "adjoint"


def run_cell(cfg: ExperimentConfig, model: str, components: int, sweep: int, seed: int) -> ResultRecord:
    return train_cell(cfg, model, components, sweep, seed)[0]


def train_cell(cfg: ExperimentConfig, model: str, components: int, sweep: int, seed: int):
    """Run one cell; returns ``(record, fitted model or None)``."""
    ds = _dataset(cfg.data_path)
    k = None if components >= ds.num_features else components
    scale = model == "vqc" or cfg.tn_scale
    opts = data.PrepareOptions(k, seed, cfg.train_fraction, scale, cfg.pca_fit_on)
    train, val = data.prepare(ds, opts)
    rec = ResultRecord(model, components, sweep, param_count(model, components, sweep), seed)
    t0 = time.perf_counter()
    try:
        if model == "tn":
            tcfg = expmachine.TnTrainConfig(
                rank=sweep, epochs=cfg.tn_epochs, lr=cfg.tn_lr, lam=cfg.tn_lambda,
                seed=seed, loss_kind=cfg.tn_loss,
            )
            fitted = expmachine.fit(train, tcfg, val)
            rec.epochs = cfg.tn_epochs
        else:
            vcfg = vqc.VqcTrainConfig(
                layers=sweep, epochs=cfg.vqc_epochs, batch_size=cfg.batch_size, lr0=cfg.vqc_lr,
                decay=cfg.vqc_decay, seed=seed, threshold=cfg.threshold,
                grad_method=_grad_method(cfg, components),
            )
            fitted = vqc.fit(train, vcfg, val)
            rec.epochs = cfg.vqc_epochs
    except TrainingDivergedError as exc:
        rec.status = f"diverged@{exc.epoch}"
        rec.seconds = time.perf_counter() - t0
        return rec, None
    rec.seconds = time.perf_counter() - t0
    rec.stored_param_count = fitted.stored_param_count
    tr_pred = fitted.predict_labels(train.features)
    va_pred = fitted.predict_labels(val.features)
    rec.train_acc = accuracy(tr_pred, train.labels)
    rec.val_acc = accuracy(va_pred, val.labels)
    rec.train_f1 = f1_score(tr_pred, train.labels)
    rec.val_f1 = f1_score(va_pred, val.labels)
    rec.final_loss = fitted.loss(train)
    hist = {key: [float(v) for v in vals] for key, vals in fitted.history.items() if key != "angles"}
    rec.history = hist
    if hist.get("val_acc"):
        rec.best_epoch = int(np.argmax(hist["val_acc"]))
        rec.best_val_acc = float(hist["val_acc"][rec.best_epoch])
    return rec, fitted


def _run_cell_args(args):
    return run_cell(*args)


def run_grid(cfg: ExperimentConfig, write: bool = True) -> list[ResultRecord]:
    cells = cfg.cells()
    log.info("running %d cells with %d worker(s)", len(cells), cfg.workers)
    jobs = [(cfg,) + c for c in cells]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            records = list(pool.map(_run_cell_args, jobs))
    else:
        records = []
        for job in jobs:
            rec = _run_cell_args(job)
            log.info("%s k=%d sweep=%d seed=%d val_acc=%.4f (%.1fs)", rec.model, rec.components,
                     rec.sweep, rec.seed, rec.val_acc, rec.seconds)
            records.append(rec)
    records.sort(key=lambda r: (r.model, r.components, r.sweep, r.seed))
    if write:
        write_results(records, cfg)
    return records


def results_csv(records: list[ResultRecord], with_time: bool = False) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for rec in records:
        w.writerow(rec.csv_row(with_time))
    return buf.getvalue()


def _jsonable(v):
    if isinstance(v, float) and not np.isfinite(v):
        return None
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def write_results(records: list[ResultRecord], cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.csv").write_text(results_csv(records, cfg.record_timing))
    payload = {"config": _jsonable(asdict(cfg)), "records": [_jsonable(asdict(r)) for r in records]}
    (out / "results.json").write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")
    if not cfg.record_timing:
        timing = io.StringIO()
        w = csv.writer(timing, lineterminator="\n")
        w.writerow(["model", "components", "sweep", "seed", "seconds"])
        for r in records:
            w.writerow([r.model, r.components, r.sweep, r.seed, f"{r.seconds:.3f}"])
        (out / "timings.csv").write_text(timing.getvalue())
    write_report(records, out)
    return out


def load_results(path) -> list[ResultRecord]:
    payload = json.loads(Path(path).read_text())
    names = {f.name for f in fields(ResultRecord)}
    records = []
    for raw in payload["records"]:
        kw = {k: (float("nan") if v is None and k not in ("status", "history") else v)
              for k, v in raw.items() if k in names}
        records.append(ResultRecord(**kw))
    return records


# -- aggregation and report ---------------------------------------------------

def aggregate(records: list[ResultRecord]) -> list[dict]:
    """Per (model, components, sweep): mean/min/max validation accuracy over seeds."""
    groups: dict[tuple, list[ResultRecord]] = {}
    for r in records:
        groups.setdefault((r.model, r.components, r.sweep), []).append(r)
    rows = []
    for (model, k, v), recs in sorted(groups.items()):
        accs = np.array([r.val_acc for r in recs if r.status == "ok"])
        f1s = np.array([r.val_f1 for r in recs if r.status == "ok"])
        rows.append({
            "model": model, "components": k, "sweep": v,
            "param_count": recs[0].param_count, "n_ok": int(accs.size), "n": len(recs),
            "val_acc_mean": float(accs.mean()) if accs.size else float("nan"),
            "val_acc_min": float(accs.min()) if accs.size else float("nan"),
            "val_acc_max": float(accs.max()) if accs.size else float("nan"),
            "val_f1_mean": float(f1s.mean()) if f1s.size else float("nan"),
        })
    return rows


def best_of_seeds(records, model: str, components: int, sweeps=None) -> float:
    accs = [r.val_acc for r in records if r.model == model and r.components == components
            and r.status == "ok" and (sweeps is None or r.sweep in sweeps)]
    return max(accs) if accs else float("nan")


def trend_check(records: list[ResultRecord]) -> list[dict]:
    """VQC should lead at low component counts and TN at high ones.

    Compares the best cell (seed-mean validation accuracy) of each model.
    Violations are flagged, not raised.
    """
    agg = aggregate(records)
    expect = {2: "vqc", 5: "vqc", 16: "tn"}
    out = []
    for k, leader in expect.items():
        best = {}
        for model in MODELS:
            vals = [a["val_acc_mean"] for a in agg if a["model"] == model and a["components"] == k]
            vals = [v for v in vals if np.isfinite(v)]
            best[model] = max(vals) if vals else float("nan")
        if not all(np.isfinite(v) for v in best.values()):
            status = "missing"
        else:
            other = "tn" if leader == "vqc" else "vqc"
            status = "ok" if best[leader] >= best[other] else "flagged"
        out.append({"components": k, "expected_leader": leader, "best_tn": best["tn"],
                    "best_vqc": best["vqc"], "status": status})
    return out


def _fmt(v) -> str:
    return format(v, ".17g") if isinstance(v, float) else str(v)


def _csv(rows: list[dict], columns) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    return buf.getvalue()


def write_report(records: list[ResultRecord], out_dir) -> dict:
    """Plot data (accuracy vs sweep, accuracy vs parameter count), SVG charts
    and the trend check, all regenerated from ``records``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    agg = aggregate(records)
    cols = ["model", "components", "sweep", "param_count", "n_ok", "n",
            "val_acc_mean", "val_acc_min", "val_acc_max", "val_f1_mean"]
    (out / "accuracy_vs_sweep.csv").write_text(_csv(agg, cols))
    by_params = sorted(agg, key=lambda a: (a["components"], a["model"], a["param_count"]))
    pcols = ["components", "model", "param_count", "sweep", "val_acc_mean", "val_acc_min", "val_acc_max"]
    (out / "accuracy_vs_params.csv").write_text(_csv(by_params, pcols))

    for model, xlabel in (("tn", "TT-rank"), ("vqc", "variational layers")):
        series = {}
        for a in agg:
            if a["model"] == model:
                series.setdefault(f"{a['components']} comps", []).append((a["sweep"], a["val_acc_mean"]))
        if series:
            svg = svg_line_chart(series, f"{model.upper()} validation accuracy", xlabel, "validation accuracy")
            (out / f"accuracy_vs_sweep_{model}.svg").write_text(svg)
    for k in sorted({a["components"] for a in agg}):
        series = {}
        for a in agg:
            if a["components"] == k:
                series.setdefault(a["model"].upper(), []).append((a["param_count"], a["val_acc_mean"]))
        svg = svg_line_chart(series, f"{k} components", "trainable parameters", "validation accuracy")
        (out / f"accuracy_vs_params_{k}.svg").write_text(svg)

    trend = trend_check(records)
    lines = ["components,expected_leader,best_tn,best_vqc,status"]
    for t in trend:
        lines.append(",".join(_fmt(t[c]) for c in ("components", "expected_leader", "best_tn", "best_vqc", "status")))
    (out / "trend.csv").write_text("\n".join(lines) + "\n")
    for t in trend:
        if t["status"] == "flagged":
            log.warning("trend flagged at %d components: TN %.4f vs VQC %.4f",
                        t["components"], t["best_tn"], t["best_vqc"])
    return {"aggregate": agg, "trend": trend}


def emit_scree(dataset_path, max_components: int, out_path) -> list[tuple[int, float]]:
    """Explained-variance ratios of the one-hot car data, one CSV row per component."""
    try:
        ds = data.load_car_dataset(dataset_path)
    except OSError as exc:
        raise OSError(f"scree: cannot load dataset {dataset_path}: {exc}") from exc
    k = min(max_components, ds.num_features)
    rows = data.scree(data.pca_fit(ds.features, k))
    out = Path(out_path)
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(data.scree_csv(rows))
    except OSError as exc:
        raise OSError(f"scree: cannot write {out}: {exc}") from exc
    return rows
