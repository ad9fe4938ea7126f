"""Command-line surface: exit codes, file formats, determinism."""

import csv
import json

import numpy as np
import pytest

from corefine.cli import main
from corefine.corpus import load_documents, write_documents
from corefine.synth import SyntheticSpec, generate_synthetic

from conftest import make_doc


def synth_file(tmp_path, name, seed, n_docs=6, **kw):
    spec = SyntheticSpec(
        n_docs=n_docs,
        entities=3,
        mentions_per_entity=3,
        attr_alphabet=2,
        ambiguity_rate=0.0,
        vocab_size=24,
        sent_len_min=4,
        sent_len_max=6,
        genre_count=2,
        seed=seed,
        **kw,
    )
    path = tmp_path / name
    write_documents(generate_synthetic(spec), path)
    return path


TRAIN_SETS = [
    "--set", "token_dim=5", "--set", "hidden_dim=4", "--set", "width_dim=3",
    "--set", "ffnn_hidden=8", "--set", "feature_dim=3", "--set", "genre_count=2",
    "--set", "max_span_width=3", "--set", "spans_per_token=1.2",
    "--set", "max_antecedents=20", "--set", "seed=0",
]


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    tmp_path = tmp_path_factory.mktemp("cli")
    train_path = synth_file(tmp_path, "train.jsonl", seed=1, n_docs=8)
    dev_path = synth_file(tmp_path, "dev.jsonl", seed=2, n_docs=4)
    ckpt = tmp_path / "model.ckpt"
    code = main(
        ["train", "--train", str(train_path), "--dev", str(dev_path),
         "--checkpoint", str(ckpt), "--set", "epochs=2", *TRAIN_SETS]
    )
    assert code == 0 and ckpt.exists()
    return tmp_path, train_path, dev_path, ckpt


def test_missing_corpus_exits_2(tmp_path, capsys):
    code = main(["train", "--train", str(tmp_path / "nope.jsonl"),
                 "--checkpoint", str(tmp_path / "m.ckpt")])
    assert code == 2
    assert "nope.jsonl" in capsys.readouterr().err


def test_unknown_setting_exits_2(tmp_path):
    train_path = synth_file(tmp_path, "t.jsonl", seed=3)
    code = main(["train", "--train", str(train_path), "--checkpoint",
                 str(tmp_path / "m.ckpt"), "--set", "bogus_key=1"])
    assert code == 2


def test_bad_setting_type_exits_2(tmp_path):
    train_path = synth_file(tmp_path, "t.jsonl", seed=3)
    code = main(["train", "--train", str(train_path), "--checkpoint",
                 str(tmp_path / "m.ckpt"), "--set", "epochs=abc"])
    assert code == 2


def test_zero_epochs_writes_init_checkpoint(tmp_path):
    train_path = synth_file(tmp_path, "t.jsonl", seed=4)
    ckpt = tmp_path / "init.ckpt"
    code = main(["train", "--train", str(train_path), "--checkpoint", str(ckpt),
                 "--set", "epochs=0", *TRAIN_SETS])
    assert code == 0 and ckpt.exists()


def test_config_file_and_cli_precedence(tmp_path):
    train_path = synth_file(tmp_path, "t.jsonl", seed=5)
    cfg = tmp_path / "run.cfg"
    cfg.write_text("epochs = 0\ntoken_dim = 5\nhidden_dim = 4\n# comment\n")
    ckpt = tmp_path / "m.ckpt"
    code = main(["train", "--train", str(train_path), "--checkpoint", str(ckpt),
                 "--config", str(cfg), "--set", "hidden_dim=6"])
    assert code == 0
    from corefine.params import ParamStore

    _, meta = ParamStore.load(ckpt)
    assert meta["model"]["token_dim"] == 5  # from file
    assert meta["model"]["hidden_dim"] == 6  # CLI override wins


def test_synth_command_deterministic(tmp_path):
    out1, out2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    for out in (out1, out2):
        assert main(["synth", "--preset", "basic", "--out", str(out),
                     "--set", "n_docs=4", "--set", "seed=9"]) == 0
    assert out1.read_bytes() == out2.read_bytes()
    assert len(load_documents(out1)) == 4


def test_predict_outputs_and_cost_report(trained):
    tmp_path, _, dev_path, ckpt = trained
    out = tmp_path / "pred.jsonl"
    report = tmp_path / "costs.json"
    code = main(["predict", "--checkpoint", str(ckpt), "--input", str(dev_path),
                 "--output", str(out), "--cost-report", str(report)])
    assert code == 0
    lines = [json.loads(l) for l in out.read_text().splitlines()]
    assert len(lines) == 4
    for rec in lines:
        assert "predicted_clusters" in rec
    cost = json.loads(report.read_text())
    assert set(cost) == {"sa_evals", "sc_pairs", "wall_ms"}
    assert cost["sa_evals"] > 0 and cost["sc_pairs"] > 0


def test_predict_is_byte_deterministic(trained):
    tmp_path, _, dev_path, ckpt = trained
    outs = []
    for name in ("p1.jsonl", "p2.jsonl"):
        out = tmp_path / name
        assert main(["predict", "--checkpoint", str(ckpt), "--input", str(dev_path),
                     "--output", str(out)]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_predict_empty_input(trained, tmp_path):
    _, _, _, ckpt = trained
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    out = tmp_path / "pred.jsonl"
    assert main(["predict", "--checkpoint", str(ckpt), "--input", str(empty),
                 "--output", str(out)]) == 0
    assert out.read_text() == ""


def test_predict_missing_checkpoint_exits_3(trained, tmp_path):
    _, _, dev_path, _ = trained
    code = main(["predict", "--checkpoint", str(tmp_path / "nope.ckpt"),
                 "--input", str(dev_path), "--output", str(tmp_path / "o.jsonl")])
    assert code == 3


def test_predict_dim_mismatch_exits_3(trained, tmp_path):
    _, _, dev_path, ckpt = trained
    code = main(["predict", "--checkpoint", str(ckpt), "--input", str(dev_path),
                 "--output", str(tmp_path / "o.jsonl"), "--set", "hidden_dim=16"])
    assert code == 3


def test_predict_cost_counters_match_formula(trained, tmp_path):
    _, _, dev_path, ckpt = trained
    out = tmp_path / "pred.jsonl"
    report = tmp_path / "c.json"
    k = 4
    assert main(["predict", "--checkpoint", str(ckpt), "--input", str(dev_path),
                 "--output", str(out), "--cost-report", str(report),
                 "--set", f"max_antecedents={k}", "--set", "n_iters=2"]) == 0
    cost = json.loads(report.read_text())

    from corefine.inference import InferenceConfig, run_inference
    from corefine.params import ParamStore
    from corefine.model import ModelConfig

    store, meta = ParamStore.load(ckpt)
    mcfg = ModelConfig.from_dict(meta["model"])
    icfg = InferenceConfig(**{**meta["inference"], "max_antecedents": k, "n_iters": 2})
    vidx = {w: i for i, w in enumerate(meta["vocab"])}
    expected = 0
    for doc in load_documents(dev_path):
        result = run_inference(doc, store, mcfg, icfg, vidx)
        m = result.beam.size
        expected += 2 * sum(min(k, i) for i in range(m))
    assert cost["sa_evals"] == expected


def test_evaluate_gold_equals_pred_is_one(trained, tmp_path):
    _, _, dev_path, _ = trained
    docs = load_documents(dev_path)
    pred = tmp_path / "perfect.jsonl"
    from corefine.corpus import document_to_record

    with open(pred, "w") as f:
        for doc in docs:
            f.write(json.dumps(document_to_record(doc, predicted=doc.gold_clusters)) + "\n")
    out = tmp_path / "report.json"
    code = main(["evaluate", "--gold", str(dev_path), "--pred", str(pred), "--out", str(out)])
    assert code == 0
    report = json.loads(out.read_text())
    assert report["avg_f1"] == pytest.approx(1.0)


def test_evaluate_empty_predictions_zero(trained, tmp_path):
    _, _, dev_path, _ = trained
    docs = load_documents(dev_path)
    pred = tmp_path / "empty_pred.jsonl"
    from corefine.corpus import document_to_record

    with open(pred, "w") as f:
        for doc in docs:
            f.write(json.dumps(document_to_record(doc, predicted=[])) + "\n")
    out = tmp_path / "report.json"
    assert main(["evaluate", "--gold", str(dev_path), "--pred", str(pred), "--out", str(out)]) == 0
    assert json.loads(out.read_text())["avg_f1"] == 0.0


def test_evaluate_doc_key_mismatch_exits_4(trained, tmp_path, capsys):
    _, _, dev_path, _ = trained
    pred = tmp_path / "bad_pred.jsonl"
    pred.write_text(json.dumps({"doc_key": "other", "predicted_clusters": []}) + "\n")
    code = main(["evaluate", "--gold", str(dev_path), "--pred", str(pred)])
    assert code == 4
    err = capsys.readouterr().err
    assert "other" in err


def test_evaluate_two_doc_hand_aggregation(tmp_path):
    # doc1: gold {a,b,c} pred {a,b}; doc2: exact match
    doc1 = make_doc([["a", "b", "c", "x"]], clusters=(((0, 0), (1, 1), (2, 2)),), doc_key="d1")
    doc2 = make_doc([["p", "q", "x"]], clusters=(((0, 0), (1, 1)),), doc_key="d2")
    gold = tmp_path / "gold.jsonl"
    write_documents([doc1, doc2], gold)
    from corefine.corpus import Span, document_to_record

    pred_clusters = {
        "d1": [[Span(0, 0), Span(1, 1)]],
        "d2": [[Span(0, 0), Span(1, 1)]],
    }
    pred = tmp_path / "pred.jsonl"
    with open(pred, "w") as f:
        for doc in (doc1, doc2):
            f.write(
                json.dumps(document_to_record(doc, predicted=pred_clusters[doc.doc_key])) + "\n"
            )
    out = tmp_path / "report.json"
    assert main(["evaluate", "--gold", str(gold), "--pred", str(pred), "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    # MUC corpus-level: R = (1+1)/(2+1), P = (1+1)/(1+1)
    assert report["muc"]["r"] == pytest.approx(2 / 3)
    assert report["muc"]["p"] == pytest.approx(1.0)


def test_bench_pruning_csv_schema(trained, tmp_path):
    tmp, _, dev_path, ckpt = trained
    csv_path = tmp_path / "pruning.csv"
    plot_path = tmp_path / "pruning.svg"
    code = main(["bench-pruning", "--checkpoint-heuristic", str(ckpt),
                 "--checkpoint-coarse", str(ckpt), "--dev", str(dev_path),
                 "--k-values", "2,4", "--csv", str(csv_path), "--plot", str(plot_path)])
    assert code == 0
    with open(csv_path) as f:
        rows = list(csv.DictReader(f))
    assert [set(r) for r in rows] == [{"mode", "K", "avg_f1"}] * 4
    assert {(r["mode"], r["K"]) for r in rows} == {
        ("heuristic", "2"), ("heuristic", "4"), ("coarse_to_fine", "2"), ("coarse_to_fine", "4"),
    }
    for r in rows:
        assert 0.0 <= float(r["avg_f1"]) <= 1.0
    assert plot_path.exists() and plot_path.stat().st_size > 0


def test_bench_compute_report(trained, tmp_path):
    _, _, dev_path, ckpt = trained
    out = tmp_path / "costs.json"
    code = main(["bench-compute", "--checkpoint", str(ckpt), "--dev", str(dev_path),
                 "--k-fine", "2", "--k-heuristic", "10", "--out", str(out)])
    report = json.loads(out.read_text())
    assert set(report) >= {"heuristic", "coarse_to_fine", "k_ratio", "sa_ratio", "ratio_ok"}
    assert report["k_ratio"] == pytest.approx(0.2)
    if report["ratio_ok"]:
        assert code == 0
        assert report["sa_ratio"] <= report["k_ratio"] + report["slack"]


def test_bench_compute_same_k_same_evals(trained, tmp_path):
    _, _, dev_path, ckpt = trained
    out = tmp_path / "costs_eq.json"
    main(["bench-compute", "--checkpoint", str(ckpt), "--dev", str(dev_path),
          "--k-fine", "3", "--k-heuristic", "3", "--out", str(out)])
    report = json.loads(out.read_text())
    assert report["heuristic"]["sa_evals"] == report["coarse_to_fine"]["sa_evals"]
