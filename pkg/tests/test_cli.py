import numpy as np
import pytest

from nedstats.cli import default_name_groups, derive_seed, parse_theta, run
from nedstats.corpus import load_corpus
from nedstats.local import disambiguate_local, idf_table, load_weights
from nedstats.ratio import read_theta


@pytest.fixture()
def paths(fixtures_dir):
    return {
        "kb": str(fixtures_dir / "kb_small"),
        "jaguar": str(fixtures_dir / "kb_jaguar"),
        "corpus": str(fixtures_dir / "corpus5.jsonl"),
        "groups": str(fixtures_dir / "groups.tsv"),
    }


def test_usage_errors(capsys):
    assert run([]) == 1
    assert run(["frobnicate"]) == 1
    assert run(["tag", "--no-such-flag"]) == 1


def test_missing_kb_path_is_data_error(tmp_path, capsys):
    assert run(["ingest", "--out", str(tmp_path)]) == 2
    assert "kb_path" in capsys.readouterr().err


def test_bad_field_value_names_field(tmp_path, paths, capsys):
    assert run(["synth", "--kb", paths["jaguar"], "--theta", "1:1", "--n-spots", "zero", "--out", str(tmp_path)]) == 2
    assert "n_spots" in capsys.readouterr().err
    assert run(["stats", "--corpus", paths["corpus"], "--damping", "1.5", "--out", str(tmp_path)]) == 2
    assert "damping" in capsys.readouterr().err


def test_corrupt_kb_is_data_error(tmp_path, capsys):
    (tmp_path / "entities.jsonl").write_text('{"id": 1, "title": "a"}\n')
    (tmp_path / "links.tsv").write_text("1\t5\n")
    (tmp_path / "mentions.tsv").write_text("")
    assert run(["ingest", "--kb", str(tmp_path), "--out", str(tmp_path / "o")]) == 2
    assert "links.tsv:1" in capsys.readouterr().err


def test_ingest(tmp_path, paths, capsys):
    assert run(["ingest", "--kb", paths["kb"], "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "entities\t10" in out
    assert (tmp_path / "kb_summary.tsv").read_text() == out


def test_config_file_and_flag_precedence(tmp_path, paths):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"# comment\nkb_path={paths['jaguar']}\ntheta=1:0.5,2:0.5\nn_spots=40\nseed=3\n")
    assert run(["synth", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    assert len(load_corpus(tmp_path / "a" / "corpus.jsonl").spots) == 40
    assert run(["synth", "--config", str(cfg), "--n-spots", "7", "--out", str(tmp_path / "b")]) == 0
    assert len(load_corpus(tmp_path / "b" / "corpus.jsonl").spots) == 7


def test_config_unknown_key(tmp_path, paths, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("colour=blue\n")
    assert run(["ingest", "--config", str(cfg)]) == 2
    assert "colour" in capsys.readouterr().err


def test_train_and_tag_local_matches_library(tmp_path, paths, kb_small, corpus5):
    assert run(["train", "--kb", paths["kb"], "--corpus", paths["corpus"], "--epochs", "5", "--out", str(tmp_path)]) == 0
    w = load_weights(tmp_path / "weights.txt")
    assert run(
        ["tag", "--kb", paths["kb"], "--corpus", paths["corpus"], "--weights", str(tmp_path / "weights.txt"),
         "--solver", "local", "--out", str(tmp_path)]
    ) == 0
    tagged = load_corpus(tmp_path / "tagged.jsonl")
    idf = idf_table(kb_small)
    expected = [s for doc, spots in corpus5.items() for s in disambiguate_local(kb_small, w, doc, spots, 25, idf)]
    assert list(tagged.spots) == expected


@pytest.mark.parametrize("solver", ["hillclimb", "lp"])
def test_tag_collective(tmp_path, paths, solver):
    assert run(["train", "--kb", paths["kb"], "--corpus", paths["corpus"], "--out", str(tmp_path)]) == 0
    assert run(
        ["tag", "--kb", paths["kb"], "--corpus", paths["corpus"], "--weights", str(tmp_path / "weights.txt"),
         "--solver", solver, "--out", str(tmp_path)]
    ) == 0
    assert all(s.predicted is not None for s in load_corpus(tmp_path / "tagged.jsonl").spots)


def test_tag_respot(tmp_path, paths):
    assert run(["train", "--kb", paths["kb"], "--corpus", paths["corpus"], "--out", str(tmp_path)]) == 0
    assert run(
        ["tag", "--kb", paths["kb"], "--corpus", paths["corpus"], "--weights", str(tmp_path / "weights.txt"),
         "--respot", "--out", str(tmp_path)]
    ) == 0
    tagged = load_corpus(tmp_path / "tagged.jsonl")
    assert len(tagged.spots) == 16
    assert all(s.gold is None for s in tagged.spots)


def test_stats_outputs(tmp_path, paths, fixtures_dir):
    args = ["stats", "--corpus", paths["corpus"], "--groups", paths["groups"], "--center", "7", "--eps", "0", "--out", str(tmp_path)]
    assert run(args) == 0
    golden = fixtures_dir / "golden"
    assert (tmp_path / "sense_priors.tsv").read_bytes() == (golden / "sense_priors.tsv").read_bytes()
    assert (tmp_path / "bigrams.tsv").read_bytes() == (golden / "bigrams.tsv").read_bytes()
    related = (tmp_path / "related.tsv").read_text().splitlines()
    # P(8|7) = 1, P(3|7) = 0.5, so 8 is attached with the heavier edge
    assert [line.split("\t")[1] for line in related] == ["8", "3"]


def test_stats_default_groups_from_titles(tmp_path, paths, kb_small):
    groups = default_name_groups(kb_small)
    assert groups["michael jordan"] == [1, 2, 3]
    assert groups["gingerbread"] == [9, 10]
    assert run(["stats", "--kb", paths["kb"], "--corpus", paths["corpus"], "--out", str(tmp_path)]) == 0
    assert (tmp_path / "related.tsv").exists()


def test_estimate(tmp_path, paths):
    assert run(["synth", "--kb", paths["jaguar"], "--theta", "1:0.34,2:0.33,3:0.33", "--n-spots", "600", "--seed", "1", "--out", str(tmp_path / "tr")]) == 0
    assert run(["synth", "--kb", paths["jaguar"], "--theta", "1:0.6,2:0.3,3:0.1", "--n-spots", "600", "--seed", "2", "--out", str(tmp_path / "te")]) == 0
    assert run(
        ["estimate", "--kb", paths["jaguar"], "--train", str(tmp_path / "tr" / "corpus.jsonl"),
         "--corpus", str(tmp_path / "te" / "corpus.jsonl"), "--out", str(tmp_path)]
    ) == 0
    theta = read_theta(tmp_path / "theta.tsv")
    assert theta.classes == (1, 2, 3)
    assert theta[1] > theta[3]


def test_compare_on_shifted_synthetic(tmp_path, paths):
    jag = paths["jaguar"]
    assert run(["synth", "--kb", jag, "--theta", "1:0.6,2:0.3,3:0.1", "--n-spots", "4000", "--seed", "10", "--out", str(tmp_path / "tr")]) == 0
    assert run(["synth", "--kb", jag, "--theta", "1:0.1,2:0.3,3:0.6", "--n-spots", "4000", "--seed", "11", "--out", str(tmp_path / "te")]) == 0
    assert run(
        ["compare", "--kb", jag, "--train", str(tmp_path / "tr" / "corpus.jsonl"),
         "--corpus", str(tmp_path / "te" / "corpus.jsonl"), "--epochs", "5", "--out", str(tmp_path)]
    ) == 0
    report = dict(
        line.split("\t") for line in (tmp_path / "report.tsv").read_text().splitlines() if line.startswith("l1_")
    )
    l1_mmd, l1_base = float(report["l1_mmd"]), float(report["l1_baseline"])
    assert l1_mmd <= l1_base + 0.02
    for name in ("theta_mmd.tsv", "theta_baseline.tsv", "theta_true.tsv"):
        assert (tmp_path / name).exists()


def test_parse_theta_and_seeds():
    assert parse_theta("1:0.6, 2=0.4") == {1: 0.6, 2: 0.4}
    assert derive_seed(0, "synth") == derive_seed(0, "synth")
    assert derive_seed(0, "synth") != derive_seed(0, "train")
    assert derive_seed(0, "synth") != derive_seed(1, "synth")
