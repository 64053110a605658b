"""Command line: prepare | scree | train | grid | report.

Every option can also come from ``--config FILE`` (``key = value`` per line,
keys are the long flag names without dashes; ``#`` starts a comment).
Flags given on the command line override the file.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from . import bench, data, expmachine, vqc
from .errors import InvalidInputError

log = logging.getLogger("tnvqc")


def _ints(text: str) -> tuple[int, ...]:
    """``"2,5,10"`` or ``"1-6"`` or a mix."""
    out = []
    for part in str(text).replace(" ", "").split(","):
        if not part:
            continue
        if "-" in part:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError(f"empty integer list {text!r}")
    return tuple(out)


def _models(text: str) -> tuple[str, ...]:
    vals = tuple(v for v in str(text).replace(" ", "").split(",") if v)
    if not vals or set(vals) - set(bench.MODELS):
        raise argparse.ArgumentTypeError(f"models must be among {bench.MODELS}, got {text!r}")
    return vals


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


# name -> (type, help); shared by all training subcommands
TRAIN_OPTIONS = {
    "model": (_models, "tn, vqc or a comma list (grid only)"),
    "components": (_ints, "principal components, e.g. 2,5,10,16 (21 = raw one-hot)"),
    "layers": (_ints, "VQC layer counts, e.g. 1-6"),
    "rank": (_ints, "TT ranks, e.g. 1-8"),
    "seed": (_ints, "seeds, e.g. 0,1,2"),
    "epochs": (int, "epochs for every selected model"),
    "lr": (float, "learning rate (TN step size, VQC initial Adam rate)"),
    "lambda": (float, "TN regularization strength"),
    "batch-size": (int, "VQC mini-batch size"),
    "decay": (float, "VQC per-epoch learning-rate decay"),
    "grad": (str, "VQC gradient: shift, adjoint or auto"),
    "tn-epochs": (int, "TN iterations"),
    "vqc-epochs": (int, "VQC epochs"),
    "tn-lr": (float, "TN step size"),
    "vqc-lr": (float, "VQC initial learning rate"),
    "tn-scale": (_bool, "min-max scale TN inputs too"),
    "data": (str, "car.data path (default: bundled copy)"),
    "workers": (int, "parallel cells"),
    "record-timing": (_bool, "write wall-clock seconds into results.csv"),
    "out": (str, "output directory"),
}


def read_config(path) -> dict[str, str]:
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidInputError(f"{path}:{n}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("_", "-")
        if key not in TRAIN_OPTIONS:
            raise InvalidInputError(f"{path}:{n}: unknown key {key!r}")
        out[key] = value
    return out


def _merged(args) -> dict:
    """CLI values over config-file values; both converted by the option's type."""
    merged = {}
    if getattr(args, "config", None):
        for key, value in read_config(args.config).items():
            try:
                merged[key] = TRAIN_OPTIONS[key][0](value)
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise InvalidInputError(f"{args.config}: bad value for {key}: {exc}") from exc
    for key in TRAIN_OPTIONS:
        v = getattr(args, key.replace("-", "_"), None)
        if v is not None:
            merged[key] = v
    return merged


def experiment_config(opts: dict, default_out: str = "results") -> bench.ExperimentConfig:
    kw = {}
    simple = {
        "model": "models", "components": "components", "layers": "layers", "rank": "ranks",
        "seed": "seeds", "lambda": "tn_lambda", "batch-size": "batch_size", "decay": "vqc_decay",
        "grad": "vqc_grad", "tn-epochs": "tn_epochs", "vqc-epochs": "vqc_epochs", "tn-lr": "tn_lr",
        "vqc-lr": "vqc_lr", "tn-scale": "tn_scale", "data": "data_path", "workers": "workers",
        "record-timing": "record_timing", "out": "out_dir",
    }
    if "epochs" in opts:
        kw["tn_epochs"] = kw["vqc_epochs"] = opts["epochs"]
    if "lr" in opts:
        kw["tn_lr"] = kw["vqc_lr"] = opts["lr"]
    for key, field_name in simple.items():
        if key in opts:
            kw[field_name] = opts[key]
    kw.setdefault("out_dir", default_out)
    return bench.ExperimentConfig(**kw)


def _add_train_flags(p: argparse.ArgumentParser):
    for key, (typ, help_) in TRAIN_OPTIONS.items():
        p.add_argument(f"--{key}", type=typ, default=None, help=help_)
    p.add_argument("--config", help="key=value file; command-line flags win")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tnvqc", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="verify the dataset and write processed CSVs")
    p.add_argument("--data", default=None)
    p.add_argument("--components", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scale", action="store_true")
    p.add_argument("--out", default="prepared")

    p = sub.add_parser("scree", help="explained-variance ratios")
    p.add_argument("--data", default=None)
    p.add_argument("--max-components", type=int, default=20)
    p.add_argument("--out", default="scree.csv")

    p = sub.add_parser("train", help="one cell: one model, component count, sweep value and seed")
    _add_train_flags(p)

    p = sub.add_parser("grid", help="full sweep")
    _add_train_flags(p)

    p = sub.add_parser("report", help="regenerate plot data and trend check from results.json")
    p.add_argument("--results", default="results/results.json")
    p.add_argument("--out", default=None, help="default: alongside results.json")
    return ap


def cmd_prepare(args) -> int:
    path = args.data or data.CAR_DATA_PATH
    records = data.load_car_records(args.data)
    digest = data.file_sha256(path)
    print(f"{path}: {len(records)} records, sha256 {digest}")
    ds = data.one_hot(records)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data.write_dataset_csv(ds, out / "onehot.csv")
    opts = data.PrepareOptions(args.components, args.seed, scale=args.scale)
    train, val = data.prepare(ds, opts)
    data.write_dataset_csv(train, out / "train.csv")
    data.write_dataset_csv(val, out / "val.csv")
    pos = float((ds.labels == 1).mean())
    print(f"features {ds.num_features}, positive fraction {pos:.4f}, split {len(train)}/{len(val)} -> {out}")
    return 0


def cmd_scree(args) -> int:
    rows = bench.emit_scree(args.data, args.max_components, args.out)
    for j, r in rows:
        print(f"{j:4d} {r:.6f}")
    return 0


def cmd_train(args) -> int:
    opts = _merged(args)
    opts.setdefault("seed", (0,))
    cfg = experiment_config(opts, default_out="run")
    single = {"models": cfg.models, "components": cfg.components, "seeds": cfg.seeds}
    sweep = cfg.ranks if cfg.models == ("tn",) else cfg.layers
    if any(len(v) != 1 for v in single.values()) or ("layers" not in opts and "rank" not in opts) or len(sweep) != 1:
        raise InvalidInputError("train needs exactly one --model, --components, --seed and --layers/--rank")
    model, k, seed = cfg.models[0], cfg.components[0], cfg.seeds[0]
    rec, fitted = bench.train_cell(cfg, model, k, sweep[0], seed)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.csv").write_text(bench.results_csv([rec], cfg.record_timing))
    (out / "results.json").write_text(json.dumps(
        {"config": bench._jsonable(asdict(cfg)), "records": [bench._jsonable(asdict(rec))]},
        indent=1, sort_keys=True) + "\n")
    if fitted is not None:
        if model == "tn":
            expmachine.save_model(fitted, out / "model.tn")
        else:
            vqc.save_params(fitted.params, out / "model.vqc", fitted.threshold)
    print(f"{model} k={k} sweep={sweep[0]} seed={seed} params={rec.param_count} "
          f"train_acc={rec.train_acc:.4f} val_acc={rec.val_acc:.4f} val_f1={rec.val_f1:.4f} "
          f"status={rec.status} ({rec.seconds:.1f}s)")
    return 0 if rec.status == "ok" else 2


def _print_summary(agg, trend):
    print(f"{'model':5} {'comps':>5} {'sweep':>5} {'params':>6} {'mean':>7} {'min':>7} {'max':>7}")
    for a in agg:
        print(f"{a['model']:5} {a['components']:5d} {a['sweep']:5d} {a['param_count']:6d} "
              f"{a['val_acc_mean']:7.4f} {a['val_acc_min']:7.4f} {a['val_acc_max']:7.4f}")
    for t in trend:
        print(f"trend @ {t['components']} components: expected leader {t['expected_leader']}, "
              f"TN {t['best_tn']:.4f} VQC {t['best_vqc']:.4f} -> {t['status']}")


def cmd_grid(args) -> int:
    cfg = experiment_config(_merged(args))
    records = bench.run_grid(cfg)  # also writes the report files
    _print_summary(bench.aggregate(records), bench.trend_check(records))
    bad = [r for r in records if r.status != "ok"]
    if bad:
        print(f"{len(bad)} cell(s) did not finish cleanly; see status column")
    print(f"wrote {cfg.out_dir}/results.csv")
    return 0


def cmd_report(args) -> int:
    path = Path(args.results)
    records = bench.load_results(path)
    rep = bench.write_report(records, args.out or path.parent)
    _print_summary(rep["aggregate"], rep["trend"])
    return 0


COMMANDS = {"prepare": cmd_prepare, "scree": cmd_scree, "train": cmd_train, "grid": cmd_grid, "report": cmd_report}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (InvalidInputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
