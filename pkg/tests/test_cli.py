import json
import os

import numpy as np
import pytest

from vaerec.cli import main, read_config_file


@pytest.fixture()
def ratings_file(tmp_path):
    """A small log whose users walk a 12-item cycle, all ratings 5."""
    rng = np.random.default_rng(0)
    path = tmp_path / "ratings.csv"
    rows = []
    for u in range(50):
        start = int(rng.integers(12))
        for t in range(8):
            rows.append(f"u{u},i{(start + t) % 12},5,{1000 + t}")
    path.write_text("\n".join(rows) + "\n")
    return path


def run_cli(*argv):
    return main([str(a) for a in argv])


def prepare(tmp_path, ratings_file, name="split", seed=3):
    out = tmp_path / name
    code = run_cli("prepare", ratings_file, "--out", out, "--seed", seed)
    assert code == 0
    return out


def train_tiny(tmp_path, split_dir, name="run", model="svae", epochs=1, seed=5):
    out = tmp_path / name
    code = run_cli(
        "train", split_dir, "--model", model, "--out", out,
        "--epochs", epochs, "--seed", seed,
        "--config", make_tiny_config(tmp_path),
    )
    assert code == 0
    return out


def make_tiny_config(tmp_path):
    path = tmp_path / "tiny.cfg"
    if not path.exists():
        path.write_text(
            "latent_dim=3\n"
            "item_embedding_dim=4\n"
            "gru_hidden=4\n"
            "encoder_widths=4\n"
            "decoder_widths=4\n"
            "rvae_embedding_dim=4\n"
            "rvae_encoder_widths=4\n"
            "k_horizon=2\n"
            "learning_rate=0.01\n"
            "batch_size=16\n"
        )
    return path


def test_config_file_parsing(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("a=1\n# comment\nb = two  # trailing\n\n")
    assert read_config_file(p) == {"a": "1", "b": "two"}


def test_prepare_prints_stats_and_writes_split(tmp_path, ratings_file, capsys):
    out = prepare(tmp_path, ratings_file)
    printed = capsys.readouterr().out
    for key in ("users:", "items:", "interactions:", "average length:",
                "heldout validation users:", "heldout test users:"):
        assert key in printed
    for name in ("train.tsv", "validation.tsv", "test.tsv", "vocabulary.tsv", "manifest.json"):
        assert (out / name).exists()


def test_prepare_empty_after_binarization(tmp_path, capsys):
    ratings = tmp_path / "low.csv"
    ratings.write_text("u1,i1,2,10\nu1,i2,1,11\n")
    code = run_cli("prepare", ratings, "--out", tmp_path / "s")
    assert code == 1
    assert "no interactions after binarization" in capsys.readouterr().err


def test_prepare_deterministic(tmp_path, ratings_file):
    a = prepare(tmp_path, ratings_file, name="a", seed=9)
    b = prepare(tmp_path, ratings_file, name="b", seed=9)
    for name in sorted(os.listdir(a)):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_train_writes_curve_and_checkpoint(tmp_path, ratings_file):
    split = prepare(tmp_path, ratings_file)
    run = train_tiny(tmp_path, split, epochs=2)
    curve = (run / "curve.csv").read_text().strip().splitlines()
    assert curve[0] == "epoch,train_loss,val_ndcg100,seconds"
    assert len(curve) == 3
    assert (run / "checkpoint.json").exists()
    assert (run / "checkpoint.params").exists()
    manifest = json.loads((run / "checkpoint.json").read_text())
    assert manifest["model"] == "svae"
    assert not any(name.endswith(".tmp") for name in os.listdir(run))


def test_train_zero_epochs(tmp_path, ratings_file):
    split = prepare(tmp_path, ratings_file)
    run = train_tiny(tmp_path, split, name="zero", epochs=0)
    curve = (run / "curve.csv").read_text().strip().splitlines()
    assert curve == ["epoch,train_loss,val_ndcg100,seconds"]
    assert (run / "checkpoint.json").exists()


def test_eval_checkpoint_and_pop(tmp_path, ratings_file, capsys):
    split = prepare(tmp_path, ratings_file)
    run = train_tiny(tmp_path, split)
    capsys.readouterr()
    code = run_cli(
        "eval", "--checkpoint", run / "checkpoint", "--split-dir", split,
        "--split", "test", "--out", tmp_path / "report",
    )
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert set(payload["metrics"]) == {
        "NDCG@10", "NDCG@100", "Precision@10", "Precision@100",
        "Recall@10", "Recall@100",
    }
    assert (tmp_path / "report" / "report.json").exists()

    code = run_cli("eval", "--pop", "--split-dir", split)
    assert code == 0
    pop_payload = json.loads(capsys.readouterr().out)
    assert pop_payload["model"] == "pop"


def test_eval_by_history_length(tmp_path, ratings_file, capsys):
    split = prepare(tmp_path, ratings_file)
    csv_path = tmp_path / "buckets.csv"
    code = run_cli(
        "eval", "--pop", "--split-dir", split, "--by-history-length", csv_path
    )
    assert code == 0
    lines = csv_path.read_text().strip().splitlines()
    assert lines[0] == "low,high,users,ndcg100"
    assert len(lines) == 6  # header + one row per bucket


def test_eval_catalog_mismatch(tmp_path, ratings_file, capsys):
    split = prepare(tmp_path, ratings_file)
    run = train_tiny(tmp_path, split)
    other = tmp_path / "other.csv"
    rng = np.random.default_rng(1)
    rows = []
    for u in range(40):
        for t in range(7):
            rows.append(f"x{u},j{int(rng.integers(30))},5,{t}")
    other.write_text("\n".join(rows) + "\n")
    other_split = tmp_path / "other_split"
    assert run_cli("prepare", other, "--out", other_split) == 0
    capsys.readouterr()
    code = run_cli(
        "eval", "--checkpoint", run / "checkpoint", "--split-dir", other_split
    )
    assert code == 1
    assert "mismatch" in capsys.readouterr().err


def test_recommend(tmp_path, ratings_file, capsys):
    split = prepare(tmp_path, ratings_file)
    run = train_tiny(tmp_path, split)
    capsys.readouterr()
    code = run_cli(
        "recommend", "--checkpoint", run / "checkpoint",
        "--history", "i0,i1", "--top-n", 3,
    )
    assert code == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 3
    recommended = [line.split("\t")[0] for line in lines]
    assert "i0" not in recommended and "i1" not in recommended

    code = run_cli(
        "recommend", "--checkpoint", run / "checkpoint",
        "--history", "i0,zzz", "--top-n", 1,
    )
    assert code == 1
    assert "zzz" in capsys.readouterr().err


def test_recommend_whole_catalog_excluded(tmp_path, ratings_file, capsys):
    split = prepare(tmp_path, ratings_file)
    run = train_tiny(tmp_path, split)
    manifest = json.loads((run / "checkpoint.json").read_text())
    whole = ",".join(manifest["vocabulary"])
    capsys.readouterr()
    code = run_cli(
        "recommend", "--checkpoint", run / "checkpoint", "--history", whole
    )
    assert code == 0
    assert capsys.readouterr().out.strip() == ""


def test_recommend_top1_single_line(tmp_path, ratings_file, capsys):
    split = prepare(tmp_path, ratings_file)
    run = train_tiny(tmp_path, split)
    capsys.readouterr()
    code = run_cli(
        "recommend", "--checkpoint", run / "checkpoint",
        "--history", "i3", "--top-n", 1,
    )
    assert code == 0
    assert len(capsys.readouterr().out.strip().splitlines()) == 1
