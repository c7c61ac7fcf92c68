import json
import math
import pathlib
import random
import subprocess

import numpy as np
import pytest

import rolefuse

ROLES = ["hero", "villain", "victim", "other"]
SCHEMA = pathlib.Path(__file__).resolve().parents[2] / "docs" / "eval_report.schema.json"


def test_tokenize_and_bio():
    assert rolefuse.tokenize("Who did this?") == ["Who", "did", "this", "?"]
    record = {"id": "m", "text": "Joe Biden wins", "hero": ["joe biden"], "other": ["CNN"]}
    tokens, tags = rolefuse.to_bio(record)
    assert tokens == ["Joe", "Biden", "wins", "CNN"]
    assert tags == ["B-HERO", "I-HERO", "O", "B-OTHER"]
    assert rolefuse.from_bio(tokens, tags) == [(["Joe", "Biden"], "hero"), (["CNN"], "other")]


def test_dataset_round_trip(tmp_path):
    path = tmp_path / "d.jsonl"
    path.write_text(json.dumps({"id": "a", "image": "a.png", "text": "x y", "villain": ["x"]}) + "\n")
    records = rolefuse.load_dataset(path)
    instances = rolefuse.flatten_to_instances(records)
    assert instances[0]["role"] == "villain"
    assert rolefuse.class_distribution(instances) == {"hero": 0, "villain": 1, "victim": 0, "other": 0}
    with pytest.raises(rolefuse.DataError):
        rolefuse.load_dataset(tmp_path / "missing.jsonl")


def test_evaluate_matches_sklearn():
    metrics = pytest.importorskip("sklearn.metrics")
    rng = random.Random(3)
    for _ in range(10):
        gold = [rng.choice(ROLES) for _ in range(50)]
        pred = [rng.choice(ROLES) for _ in range(50)]
        report = rolefuse.evaluate(gold, pred)
        p, r, f, _ = metrics.precision_recall_fscore_support(
            gold, pred, labels=ROLES, average="macro", zero_division=0)
        assert report["accuracy"] == pytest.approx(metrics.accuracy_score(gold, pred))
        assert report["macro"]["precision"] == pytest.approx(p)
        assert report["macro"]["recall"] == pytest.approx(r)
        assert report["macro"]["f1"] == pytest.approx(f)
        assert report["confusion"] == metrics.confusion_matrix(gold, pred, labels=ROLES).tolist()


def test_report_schema():
    jsonschema = pytest.importorskip("jsonschema")
    schema = json.loads(SCHEMA.read_text())
    jsonschema.validate(rolefuse.evaluate(["hero", "other"], ["other", "other"]), schema)
    jsonschema.validate(rolefuse.sequence_evaluate([["B-HERO", "O"]], [["O", "O"]]), schema)


def test_majority_baseline():
    assert rolefuse.majority_baseline({"hero": 475, "villain": 2427, "victim": 910, "other": 13702}) == "other"
    assert rolefuse.majority_baseline({"hero": 1, "villain": 1, "victim": 1, "other": 1}) == "hero"


def test_bilinear_against_einsum():
    rng = np.random.default_rng(0)
    t = rng.normal(size=(3, 4, 2))
    x, z = rng.normal(size=3), rng.normal(size=4)
    assert np.allclose(rolefuse.bilinear_contract(t, x.tolist(), z.tolist()), np.einsum("ijk,i,j->k", t, x, z))


def test_fusion_model_and_decomposition():
    block = {"hidden": 4, "blocks": 2, "rank1": 2, "rank2": 2, "rank3": 2, "output": 3}
    model = rolefuse.FusionModel.create(block, 3, 5, seed=1)
    probs = rolefuse.block_fusion_forward(model, np.ones(3), np.ones(5))
    assert probs == pytest.approx([0.25] * 4)
    t = rolefuse.assemble_full_tensor(model)
    e, c = np.arange(4.0), np.linspace(-1, 1, 4)
    assert np.allclose(model.fuse(e, c), np.einsum("ijk,i,j->k", t, e, c), atol=1e-12)
    assert set(model.parameters()) >= {"proj1", "proj2", "core.0", "core.1", "out_proj"}


def test_train_fusion_learns_clusters(tmp_path):
    rng = np.random.default_rng(5)
    labels = [ROLES[i % 4] for i in range(80)]
    centers = np.eye(8)[:4] * 3
    entities = np.stack([centers[i % 4] + 0.2 * rng.normal(size=8) for i in range(80)])
    contexts = np.stack([centers[(i + 1) % 4] + 0.2 * rng.normal(size=8) for i in range(80)])
    config = {"learning_rate": 0.05, "epochs": 20, "seed": 3,
              "block": {"hidden": 16, "blocks": 2, "rank1": 4, "rank2": 4, "rank3": 4, "output": 8}}
    model, trace = rolefuse.train_fusion(entities, contexts, labels, config)
    assert trace[0] == pytest.approx(math.log(4))
    assert trace[-1] < trace[0]
    accuracy = np.mean([p == g for p, g in zip(model.predict(entities, contexts), labels)])
    assert accuracy > 0.9
    model.save(tmp_path / "m.bin")
    again = rolefuse.FusionModel.load(tmp_path / "m.bin")
    assert again.predict(entities, contexts) == model.predict(entities, contexts)
    _, trace2 = rolefuse.train_fusion(entities, contexts, labels, config)
    assert trace == trace2


def test_crf_bindings():
    em = np.zeros((3, 9))
    tr = np.zeros((9, 9))
    assert rolefuse.crf_log_partition(em, tr) == pytest.approx(3 * math.log(9))
    assert rolefuse.crf_viterbi(em, tr) == [0, 0, 0]
    data = [(["Joe", "Biden", "wins"], ["B-HERO", "I-HERO", "O"])]
    model, trace = rolefuse.train_crf(data, l2=0.1)
    assert model.tag(["Joe", "Biden", "wins"]) == ["B-HERO", "I-HERO", "O"]
    assert all(b >= a for a, b in zip(trace, trace[1:]))


def test_augmentation():
    assert rolefuse.substitute("bad man", "man", {"bad": ["evil"]}, p=1.0) == "evil man"
    assert rolefuse.substitute("bad man", "man", {}, p=1.0) == "bad man"
    inst = [{"meme_id": "m", "entity": "man", "text": "bad man", "role": "hero"}]
    out = rolefuse.balance(inst, copies=[6, 2, 3, 0])
    assert len(out) == 7
    assert out[1]["meme_id"] == "m#e0#aug1" and out[1]["augmented"]


def test_embedding_tables(tmp_path):
    path = tmp_path / "t.emb"
    rolefuse.write_table(path, 2, {"a": [1.0, 2.0]})
    assert path.stat().st_size == 33
    dim, table = rolefuse.read_table(path)
    assert dim == 2 and table["a"].tolist() == [1.0, 2.0]
    path.write_bytes(b"EMB2" + path.read_bytes()[4:])
    with pytest.raises(rolefuse.DataError, match="magic"):
        rolefuse.read_table(path)
