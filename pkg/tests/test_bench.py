import csv
import json

import numpy as np
import pytest

from tnvqc import bench, cli, expmachine
from tnvqc.errors import InvalidInputError, TrainingDivergedError


def small_cfg(tmp_path, **kw):
    base = dict(models=("tn", "vqc"), components=(2,), ranks=(1, 2), layers=(1,), seeds=(0,),
                tn_epochs=5, vqc_epochs=1, out_dir=str(tmp_path))
    base.update(kw)
    return bench.ExperimentConfig(**base)


# -- metrics ------------------------------------------------------------------

def test_accuracy_examples():
    assert bench.accuracy([1, -1, 1], [1, -1, 1]) == 1.0
    assert bench.accuracy([1, -1, 1], [1, 1, 1]) == pytest.approx(2 / 3)
    assert bench.accuracy([1, 1], [-1, -1]) == 0.0
    with pytest.raises(InvalidInputError):
        bench.accuracy([1], [1, 1])
    with pytest.raises(InvalidInputError):
        bench.accuracy([], [])


def test_f1_examples():
    assert bench.f1_score([1, -1, 1], [1, -1, 1]) == 1.0
    assert bench.f1_score([-1, -1, -1], [1, -1, 1]) == 0.0
    assert bench.f1_score([1, 1, -1, -1], [1, -1, 1, -1]) == pytest.approx(0.5)
    with pytest.raises(InvalidInputError):
        bench.f1_score([1, 1], [1])


def test_f1_matches_confusion_counts(rng):
    p, y = rng.choice([-1, 1], 200), rng.choice([-1, 1], 200)
    tp = np.sum((p == 1) & (y == 1))
    ref = 2 * tp / (np.sum(p == 1) + np.sum(y == 1))
    assert bench.f1_score(p, y) == pytest.approx(ref)


# -- config -------------------------------------------------------------------

def test_config_validation(tmp_path):
    with pytest.raises(InvalidInputError):
        small_cfg(tmp_path, models=("svm",))
    with pytest.raises(InvalidInputError):
        small_cfg(tmp_path, seeds=())
    with pytest.raises(InvalidInputError):
        small_cfg(tmp_path, models=("tn",), ranks=())
    with pytest.raises(InvalidInputError):
        small_cfg(tmp_path, components=(22,))


def test_cells_sorted(tmp_path):
    cfg = small_cfg(tmp_path, components=(5, 2), seeds=(1, 0))
    cells = cfg.cells()
    assert cells == sorted(cells)
    assert len(cells) == 2 * (2 + 1) * 2


@pytest.mark.parametrize("model,k,sweep,count", [("vqc", 5, 2, 25), ("tn", 10, 4, 320)])
def test_param_count_field(tmp_path, model, k, sweep, count):
    cfg = small_cfg(tmp_path)
    rec = bench.run_cell(cfg, model, k, sweep, 0)
    assert rec.param_count == count
    assert rec.status == "ok"
    for v in (rec.train_acc, rec.val_acc, rec.train_f1, rec.val_f1):
        assert 0.0 <= v <= 1.0


# -- grid ---------------------------------------------------------------------

def test_single_cell_grid(tmp_path):
    cfg = small_cfg(tmp_path, models=("tn",), ranks=(2,))
    recs = bench.run_grid(cfg)
    assert len(recs) == 1
    rows = list(csv.reader((tmp_path / "results.csv").open()))
    assert tuple(rows[0]) == bench.RESULT_COLUMNS
    assert len(rows) == 2 and rows[1][10] == ""  # seconds blank unless requested
    payload = json.loads((tmp_path / "results.json").read_text())
    assert payload["records"][0]["best_epoch"] >= 0
    for name in ("accuracy_vs_sweep.csv", "accuracy_vs_params.csv", "trend.csv", "timings.csv",
                 "accuracy_vs_sweep_tn.svg", "accuracy_vs_params_2.svg"):
        assert (tmp_path / name).exists()


def test_record_timing(tmp_path):
    cfg = small_cfg(tmp_path, models=("tn",), ranks=(1,), record_timing=True)
    bench.run_grid(cfg)
    row = list(csv.reader((tmp_path / "results.csv").open()))[1]
    assert float(row[10]) > 0


def test_grid_deterministic(tmp_path):
    a = bench.run_grid(small_cfg(tmp_path / "a"))
    b = bench.run_grid(small_cfg(tmp_path / "b"))
    assert (tmp_path / "a" / "results.csv").read_bytes() == (tmp_path / "b" / "results.csv").read_bytes()
    assert [r.val_acc for r in a] == [r.val_acc for r in b]


def test_parallel_matches_serial(tmp_path):
    bench.run_grid(small_cfg(tmp_path / "s"))
    bench.run_grid(small_cfg(tmp_path / "p", workers=2))
    assert (tmp_path / "s" / "results.csv").read_bytes() == (tmp_path / "p" / "results.csv").read_bytes()


def test_divergence_recorded_not_raised(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise TrainingDivergedError(3, float("nan"))

    monkeypatch.setattr(expmachine, "fit", boom)
    recs = bench.run_grid(small_cfg(tmp_path))
    tn = [r for r in recs if r.model == "tn"]
    assert all(r.status == "diverged@3" and np.isnan(r.val_acc) for r in tn)
    assert all(r.status == "ok" for r in recs if r.model == "vqc")
    row = next(csv.reader((tmp_path / "results.csv").open().readlines()[1:]))
    assert row[-1] == "diverged@3" and row[6] == "nan"
    # report still works with holes
    assert bench.load_results(tmp_path / "results.json")[0].status == "diverged@3"


def test_results_json_roundtrip(tmp_path):
    recs = bench.run_grid(small_cfg(tmp_path))
    back = bench.load_results(tmp_path / "results.json")
    assert bench.results_csv(back) == bench.results_csv(recs)


def test_trend_check_flags():
    def rec(model, k, acc):
        return bench.ResultRecord(model, k, 1, 1, 0, val_acc=acc)

    recs = [rec("tn", 2, 0.7), rec("vqc", 2, 0.8), rec("tn", 5, 0.9), rec("vqc", 5, 0.85),
            rec("tn", 16, 1.0), rec("vqc", 16, 0.9)]
    status = {t["components"]: t["status"] for t in bench.trend_check(recs)}
    assert status == {2: "ok", 5: "flagged", 16: "ok"}


def test_emit_scree(tmp_path):
    rows = bench.emit_scree(None, 20, tmp_path / "s.csv")
    assert len(rows) == 20
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert len(lines) == 21 and lines[1].startswith("0.0,") and lines[-1].startswith("19.0,")
    vals = [r for _, r in rows]
    assert all(b <= a + 1e-15 for a, b in zip(vals, vals[1:])) and sum(vals) <= 1 + 1e-12


def test_emit_scree_bad_path(tmp_path):
    with pytest.raises(OSError, match="missing.data"):
        bench.emit_scree(tmp_path / "missing.data", 20, tmp_path / "s.csv")


def test_svg_writer_handles_nan():
    from tnvqc.plots import svg_line_chart
    svg = svg_line_chart({"a": [(1, 0.5), (2, float("nan")), (3, 0.7)], "b & c": [(1, 0.6)]}, "t", "x", "y")
    assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>") and "b &amp; c" in svg


# -- CLI ----------------------------------------------------------------------

def test_cli_prepare_and_scree(tmp_path, capsys):
    assert cli.main(["prepare", "--out", str(tmp_path / "p"), "--components", "5", "--scale"]) == 0
    out = capsys.readouterr().out
    assert "1728 records" in out and "1382/346" in out
    assert (tmp_path / "p" / "train.csv").read_text().splitlines()[0] == "pc0,pc1,pc2,pc3,pc4,label"
    assert cli.main(["scree", "--out", str(tmp_path / "scree.csv")]) == 0
    assert len((tmp_path / "scree.csv").read_text().splitlines()) == 21


def test_cli_train_writes_model(tmp_path, capsys):
    out = tmp_path / "t"
    assert cli.main(["train", "--model", "tn", "--components", "5", "--rank", "2", "--epochs", "10",
                     "--seed", "0", "--out", str(out)]) == 0
    assert (out / "model.tn").exists()
    m = expmachine.load_model(out / "model.tn")
    assert m.num_features == 5 and m.rank == 2
    assert cli.main(["train", "--model", "vqc", "--components", "3", "--layers", "1", "--epochs", "1",
                     "--out", str(tmp_path / "v")]) == 0
    assert (tmp_path / "v" / "model.vqc").exists()


def test_cli_train_needs_single_cell(tmp_path, capsys):
    assert cli.main(["train", "--model", "tn", "--components", "2,5", "--rank", "2", "--out", str(tmp_path)]) == 1
    assert "exactly one" in capsys.readouterr().err


def test_cli_config_file_and_override(tmp_path, capsys):
    conf = tmp_path / "grid.conf"
    conf.write_text("# small grid\nmodel = tn\ncomponents = 2\nrank = 1-2\nseed = 0\n"
                    "epochs = 3\nlr = 0.5\nout = %s\n" % (tmp_path / "from_file"))
    assert cli.main(["grid", "--config", str(conf), "--rank", "3", "--out", str(tmp_path / "g")]) == 0
    rows = list(csv.reader((tmp_path / "g" / "results.csv").open()))
    assert [r[2] for r in rows[1:]] == ["3"]
    assert rows[1][9] == "3"
    assert not (tmp_path / "from_file").exists()
    payload = json.loads((tmp_path / "g" / "results.json").read_text())
    assert payload["config"]["tn_lr"] == 0.5


def test_cli_config_errors(tmp_path, capsys):
    bad = tmp_path / "bad.conf"
    bad.write_text("colour = blue\n")
    assert cli.main(["grid", "--config", str(bad)]) == 1
    assert "unknown key" in capsys.readouterr().err


def test_cli_report(tmp_path, capsys):
    bench.run_grid(small_cfg(tmp_path))
    (tmp_path / "accuracy_vs_sweep.csv").unlink()
    assert cli.main(["report", "--results", str(tmp_path / "results.json")]) == 0
    assert (tmp_path / "accuracy_vs_sweep.csv").exists()
    assert "trend @ 16 components" in capsys.readouterr().out


def test_int_list_parsing():
    assert cli._ints("2,5,10") == (2, 5, 10)
    assert cli._ints("1-3,7") == (1, 2, 3, 7)
