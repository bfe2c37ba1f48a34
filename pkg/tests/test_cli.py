import json

import numpy as np
import pytest

from zsaction import io
from zsaction.cli import run
from zsaction.config import RunConfig, config_as_json, load_config
from zsaction.embeddings import EmbeddingTable, save_embeddings, tokenize_label
from zsaction.encoding import EncoderConfig, PcaTransform, encode_all, fit_pca, object_word_matrix
from zsaction.engine import ScorePipeline, TubeProposal, classify, top_detections
from zsaction.errors import InputError
from zsaction.evaluation import GroundTruthTube, auc_vs_threshold, average_class_accuracy
from zsaction.gmm import GmmModel, fit_gmm
from zsaction.synthetic import planted_dataset
from zsaction.translation import AffinityMatrix, ObjectScores, build_affinity, sparsify_action


def write_lines(path, lines):
    path.write_text("".join(l + "\n" for l in lines))
    return str(path)


@pytest.fixture
def toy(tmp_path):
    """20 objects, 5 two-word actions, dim 10."""
    rng = np.random.default_rng(0)
    objects = [f"obj{i}" for i in range(20)]
    action_words = [f"act{i}" for i in range(10)]
    table = EmbeddingTable(objects + action_words, rng.normal(size=(30, 10)))
    emb = tmp_path / "emb.txt"
    save_embeddings(table, emb)
    actions = [f"act{2 * i} act{2 * i + 1}" for i in range(5)]
    return {
        "dir": tmp_path,
        "table": table,
        "objects": objects,
        "actions": actions,
        "emb": str(emb),
        "obj": write_lines(tmp_path / "objects.txt", objects),
        "act": write_lines(tmp_path / "actions.txt", actions),
    }


def fit(toy, *extra):
    out = toy["dir"] / "model.json"
    assert run(["fit-gmm", "--embeddings", toy["emb"], "--object-labels", toy["obj"], "-o", str(out), *extra]) == 0
    return out


def translate(toy, model, name="aff.json", *extra):
    out = toy["dir"] / name
    code = run(["translate", "--embeddings", toy["emb"], "--object-labels", toy["obj"],
                "--action-labels", toy["act"], "--model", str(model), "-o", str(out), *extra])
    assert code == 0
    return out


# fit-gmm

def test_fit_gmm_dimensions(tmp_path):
    rng = np.random.default_rng(1)
    words = [f"w{i}" for i in range(15)]
    save_embeddings(EmbeddingTable(words, rng.normal(size=(15, 10))), tmp_path / "e.txt")
    write_lines(tmp_path / "o.txt", words)
    out = tmp_path / "m.json"
    assert run(["fit-gmm", "--embeddings", str(tmp_path / "e.txt"), "--object-labels", str(tmp_path / "o.txt"),
                "-o", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["gmm"]["k"] == 2 and doc["gmm"]["dim"] == 5
    assert doc["pca"]["output_dim"] == 5 and doc["pca"]["input_dim"] == 10
    assert doc["config_hash"] == RunConfig().config_hash()


def test_fit_gmm_k_too_large(tmp_path):
    save_embeddings(EmbeddingTable(["a", "b"], np.eye(2)), tmp_path / "e.txt")
    write_lines(tmp_path / "o.txt", ["a", "b", "a b"])
    out = tmp_path / "m.json"
    assert run(["fit-gmm", "--embeddings", str(tmp_path / "e.txt"), "--object-labels", str(tmp_path / "o.txt"),
                "--k", "3", "-o", str(out)]) == 1
    assert not out.exists()


def test_fit_gmm_rerun_byte_identical(toy):
    first = fit(toy).read_bytes()
    assert fit(toy).read_bytes() == first


def test_fit_gmm_matches_library(toy):
    doc = json.loads(fit(toy).read_text())
    labels = [tokenize_label(o, toy["table"]) for o in toy["objects"]]
    X = object_word_matrix(labels, toy["table"])
    pca = fit_pca(X, 5)
    gmm = fit_gmm(pca.transform(X), 2, seed=0)
    assert doc["gmm"] == json.loads(json.dumps(gmm.to_dict()))


# translate

def test_translate_full_t_equals_dense(toy):
    model = fit(toy)
    dense = json.loads(translate(toy, model, "dense.json", "--t-z", "0").read_text())
    full = json.loads(translate(toy, model, "full.json", "--t-z", "20").read_text())
    assert dense["values"] == full["values"]
    assert dense["sparsity"] == "dense" and full["t_z"] == 20


def test_translate_composition_oracle(toy):
    model = fit(toy)
    got = AffinityMatrix.from_dict(json.loads(translate(toy, model).read_text()))
    doc = json.loads(model.read_text())
    cfg = EncoderConfig("fwv", pca=PcaTransform.from_dict(doc["pca"]), gmm=GmmModel.from_dict(doc["gmm"]))
    t = toy["table"]
    O = encode_all([tokenize_label(o, t) for o in toy["objects"]], t, cfg)
    A = encode_all([tokenize_label(a, t) for a in toy["actions"]], t, cfg)
    expected = sparsify_action(build_affinity(O, A, toy["objects"], toy["actions"]), 10)
    assert got.values.tobytes() == expected.values.tobytes()
    assert np.array_equal(got.mask, expected.mask)
    assert got.objects == toy["objects"] and got.actions == toy["actions"]


def test_translate_one_by_one(tmp_path):
    save_embeddings(EmbeddingTable(["cup", "drink"], [[3.0, 4.0], [1.0, 0.0]]), tmp_path / "e.txt")
    out = tmp_path / "a.json"
    assert run(["translate", "--embeddings", str(tmp_path / "e.txt"), "--encoder", "awv",
                "--object-labels", write_lines(tmp_path / "o.txt", ["cup"]),
                "--action-labels", write_lines(tmp_path / "a.txt", ["drink"]), "-o", str(out)]) == 0
    assert json.loads(out.read_text())["values"] == [[0.6]]


def test_translate_unencodable_named(toy, caplog):
    model = fit(toy)
    write_lines(toy["dir"] / "actions.txt", toy["actions"] + ["zzz qqq"])
    out = toy["dir"] / "bad.json"
    code = run(["translate", "--embeddings", toy["emb"], "--object-labels", toy["obj"],
                "--action-labels", toy["act"], "--model", str(model), "-o", str(out)])
    assert code == 1 and not out.exists()
    assert "zzz qqq" in caplog.text


# classify / retrieve / localize

def identity_affinity(tmp_path, n=3):
    g = AffinityMatrix([f"o{i}" for i in range(n)], [f"a{i}" for i in range(n)], np.eye(n))
    path = tmp_path / "aff.json"
    path.write_text(io.dump_json(g.to_dict()))
    return g, str(path)


def test_classify_identity_one_hot(tmp_path):
    g, aff = identity_affinity(tmp_path)
    videos = [ObjectScores(np.eye(3)[i], id=f"v{i}") for i in (2, 0, 1)]
    (tmp_path / "s.tsv").write_text(io.format_scores(g.objects, videos))
    out = tmp_path / "p.tsv"
    assert run(["classify", "--affinity", aff, "--scores", str(tmp_path / "s.tsv"), "-o", str(out)]) == 0
    assert io.read_predictions(out) == {"v2": "a2", "v0": "a0", "v1": "a1"}


def test_classify_empty_video_list(tmp_path, caplog):
    g, aff = identity_affinity(tmp_path)
    (tmp_path / "s.tsv").write_text(io.format_scores(g.objects, []))
    out = tmp_path / "p.tsv"
    assert run(["classify", "--affinity", aff, "--scores", str(tmp_path / "s.tsv"), "-o", str(out)]) == 0
    assert io.read_predictions(out) == {}
    assert "no videos" in caplog.text


def test_classify_object_mismatch(tmp_path):
    _, aff = identity_affinity(tmp_path)
    (tmp_path / "s.tsv").write_text(io.format_scores(["o0", "o2", "o1"], [ObjectScores([1, 0, 0], id="v")]))
    assert run(["classify", "--affinity", aff, "--scores", str(tmp_path / "s.tsv"), "-o",
                str(tmp_path / "p.tsv")]) == 1


def test_classify_reports_id_mismatch(tmp_path, caplog):
    g, aff = identity_affinity(tmp_path)
    (tmp_path / "s.tsv").write_text(io.format_scores(g.objects, [ObjectScores([1, 0, 0], id="v1")]))
    (tmp_path / "gt.tsv").write_text(io.format_ground_truth({"v2": "a0", "v3": "a1"}))
    assert run(["classify", "--affinity", aff, "--scores", str(tmp_path / "s.tsv"),
                "--ground-truth", str(tmp_path / "gt.tsv"), "-o", str(tmp_path / "p.tsv")]) == 0
    assert "1 scored video(s) without ground truth, 2 ground-truth video(s) without scores" in caplog.text


def planted_files(tmp_path, seed=0):
    ds = planted_dataset(seed)
    save_embeddings(ds.table, tmp_path / "emb.txt")
    write_lines(tmp_path / "objects.txt", ds.objects)
    write_lines(tmp_path / "actions.txt", ds.actions)
    (tmp_path / "scores.tsv").write_text(io.format_scores(ds.objects, ds.videos))
    (tmp_path / "gt.tsv").write_text(io.format_ground_truth(ds.truth))
    return ds


def test_planted_cli_matches_library(tmp_path):
    ds = planted_files(tmp_path)
    d = str(tmp_path)
    assert run(["fit-gmm", "--embeddings", f"{d}/emb.txt", "--object-labels", f"{d}/objects.txt",
                "-o", f"{d}/model.json"]) == 0
    assert run(["translate", "--embeddings", f"{d}/emb.txt", "--object-labels", f"{d}/objects.txt",
                "--action-labels", f"{d}/actions.txt", "--model", f"{d}/model.json", "-o", f"{d}/aff.json"]) == 0
    assert run(["classify", "--affinity", f"{d}/aff.json", "--scores", f"{d}/scores.tsv",
                "-o", f"{d}/pred.tsv"]) == 0
    assert run(["eval", "--metric", "accuracy", "--predictions", f"{d}/pred.tsv",
                "--ground-truth", f"{d}/gt.tsv", "-o", f"{d}/report.json"]) == 0
    cli_acc = json.loads((tmp_path / "report.json").read_text())["value"]

    labels = [tokenize_label(o, ds.table) for o in ds.objects]
    X = object_word_matrix(labels, ds.table)
    pca = fit_pca(X, ds.table.dim // 2)
    cfg = EncoderConfig("fwv", pca=pca, gmm=fit_gmm(pca.transform(X), 2, seed=0))
    acts = [tokenize_label(a, ds.table) for a in ds.actions]
    g = sparsify_action(build_affinity(encode_all(labels, ds.table, cfg), encode_all(acts, ds.table, cfg),
                                       ds.objects, ds.actions), 10)
    preds = [classify(v, g, ScorePipeline()) for v in ds.videos]
    assert cli_acc == average_class_accuracy(preds, ds.truth).value
    assert cli_acc >= 0.95


def test_retrieve_and_map(tmp_path):
    g, aff = identity_affinity(tmp_path, 2)
    videos = [ObjectScores([0.9, 0.1], id="x"), ObjectScores([0.2, 0.8], id="y")]
    (tmp_path / "s.tsv").write_text(io.format_scores(g.objects, videos))
    (tmp_path / "gt.tsv").write_text(io.format_ground_truth({"x": "a0", "y": "a1"}))
    out = tmp_path / "r.tsv"
    assert run(["retrieve", "--affinity", aff, "--scores", str(tmp_path / "s.tsv"), "-o", str(out)]) == 0
    rankings = io.read_rankings(out)
    assert [v for v, _ in rankings["a0"]] == ["x", "y"]
    rep = tmp_path / "map.json"
    assert run(["eval", "--metric", "map", "--rankings", str(out), "--ground-truth", str(tmp_path / "gt.tsv"),
                "-o", str(rep)]) == 0
    assert json.loads(rep.read_text())["value"] == 1.0


def test_eval_ap_half(tmp_path):
    # one action, two videos; the single positive is ranked second
    (tmp_path / "r.tsv").write_text(io.format_rankings({"a": [("n", 0.9), ("p", 0.1)]}))
    (tmp_path / "gt.tsv").write_text(io.format_ground_truth({"p": "a", "n": "b"}))
    rep = tmp_path / "rep.json"
    assert run(["eval", "--metric", "map", "--rankings", str(tmp_path / "r.tsv"),
                "--ground-truth", str(tmp_path / "gt.tsv"), "-o", str(rep)]) == 0
    assert json.loads(rep.read_text())["per_class"] == {"a": 0.5}


def test_eval_accuracy_perfect(tmp_path):
    truth = {"v1": "a", "v2": "b"}
    (tmp_path / "gt.tsv").write_text(io.format_ground_truth(truth))
    (tmp_path / "p.tsv").write_text("video\trank\taction\tscore\nv1\t1\ta\t1.0\nv2\t1\tb\t1.0\n")
    rep = tmp_path / "rep.tsv"
    assert run(["eval", "--metric", "accuracy", "--predictions", str(tmp_path / "p.tsv"),
                "--ground-truth", str(tmp_path / "gt.tsv"), "-o", str(rep)]) == 0
    meta, rows = io.read_tsv(rep)
    assert rows[1][1] == ["value", "", "1.0"]
    assert meta["metric"] == "average_class_accuracy"


def test_eval_malformed_line(tmp_path, caplog):
    (tmp_path / "gt.tsv").write_text("v1\ta\nv2\n")
    (tmp_path / "p.tsv").write_text("video\trank\taction\tscore\nv1\t1\ta\t1.0\n")
    assert run(["eval", "--metric", "accuracy", "--predictions", str(tmp_path / "p.tsv"),
                "--ground-truth", str(tmp_path / "gt.tsv"), "-o", str(tmp_path / "r.tsv")]) == 1
    assert "gt.tsv:2:" in caplog.text


def localization_files(tmp_path, seed=0):
    rng = np.random.default_rng(seed)
    g, aff = identity_affinity(tmp_path, 3)
    tubes, truths = {}, {}
    for i in range(6):
        vid = f"v{i}"
        action = i % 3
        truths[vid] = [GroundTruthTube(vid, f"a{action}", tuple((f, (10.0, 10.0, 20.0, 20.0)) for f in range(10)))]
        ts = []
        for u in range(4):
            shift = float(rng.uniform(0, 15))
            start = int(rng.integers(0, 5))
            p = rng.random(3)
            p[action] += float(rng.uniform(0, 1))
            ts.append(TubeProposal(vid, f"t{u}", [(f, (10.0 + shift, 10.0, 20.0, 20.0)) for f in range(start, start + 8)],
                                   ObjectScores(p, id=vid, source="tube")))
        tubes[vid] = ts
    (tmp_path / "tubes.json").write_text(io.dump_json(io.tubes_document(g.objects, tubes)))
    (tmp_path / "gt.json").write_text(io.dump_json(io.gt_tubes_document(truths)))
    return g, aff, tubes, truths


def test_localize_and_auc_curve_matches_module(tmp_path):
    g, aff, tubes, truths = localization_files(tmp_path)
    d = str(tmp_path)
    assert run(["localize", "--affinity", aff, "--tubes", f"{d}/tubes.json", "-o", f"{d}/det.tsv"]) == 0
    assert run(["plot-data", "--detections", f"{d}/det.tsv", "--tubes", f"{d}/tubes.json",
                "--gt-tubes", f"{d}/gt.json", "-o", f"{d}/curve.tsv"]) == 0
    _, rows = io.read_tsv(tmp_path / "curve.tsv")
    cli_curve = [(float(t), float(v)) for _, (t, v) in rows[1:]]

    dets = [d for ts in tubes.values() for d in top_detections(ts, g, 5, 0.3, ScorePipeline())]
    module = auc_vs_threshold(dets, truths, [0.1, 0.2, 0.3, 0.4, 0.5, 0.6])
    assert cli_curve == module.curve
    assert any(v > 0 for _, v in cli_curve)


# config

def test_default_config_snapshot():
    cfg = RunConfig()
    assert cfg.settings() == {
        "encoder": "fwv", "k": 2, "pca_factor": 2, "fwv_blocks": "mean", "normalize_labels": True, "seed": 0,
        "t_z": 10, "t_v": 100, "alpha": 0.5, "normalize_videos": True, "pipeline_order": "normalize-first",
        "nms": 0.3, "detection_limit": 5, "thresholds": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6], "max_fpr": 1.0,
    }
    assert json.loads(config_as_json(cfg))["t_v"] == 100


def test_config_file_and_overrides(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"k": 3, "t_z": 5}))
    cfg = load_config(str(path), {"t_z": 7})
    assert (cfg.k, cfg.t_z) == (3, 7)
    assert cfg.config_hash() != RunConfig().config_hash()
    path.write_text(json.dumps({"bogus": 1}))
    with pytest.raises(InputError, match="bogus"):
        load_config(str(path))


def test_config_hash_ignores_paths():
    assert RunConfig(scores="a.tsv").config_hash() == RunConfig(scores="b.tsv").config_hash()


# exit codes

def test_exit_codes(tmp_path):
    assert run(["classify", "--affinity", str(tmp_path / "missing.json"), "--scores", "x", "-o",
                str(tmp_path / "o")]) == 1
    assert run(["classify", "-o", str(tmp_path / "o")]) == 1
    assert run(["bogus-command"]) == 1
    assert run(["classify", "--t-v", "-3", "--affinity", "a", "--scores", "s", "-o", "o"]) == 1


def test_numerical_failure_exit_two(tmp_path):
    g, aff = identity_affinity(tmp_path)
    (tmp_path / "s.tsv").write_text(io.format_scores(g.objects, [ObjectScores([0.0, 0.0, 0.0], id="v")]))
    out = tmp_path / "p.tsv"
    assert run(["classify", "--affinity", aff, "--scores", str(tmp_path / "s.tsv"), "-o", str(out)]) == 2
    assert not out.exists()
