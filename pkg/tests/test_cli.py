"""End-to-end command-line checks, run in process through cli.main."""

import csv
from pathlib import Path

import pytest

from sigver import cli


def run(*argv) -> int:
    return cli.main([str(a) for a in argv])


def tree_bytes(root: Path) -> dict:
    return {
        p.relative_to(root): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    # 5 users, short signatures: 3 development + 2 evaluation users downstream
    root = tmp_path_factory.mktemp("clidata") / "corpus"
    assert run("generate", "--users", 5, "--max-duration", 1.8,
               "--out", root) == 0
    return root


@pytest.fixture(scope="session")
def model_dir(corpus, tmp_path_factory):
    out = tmp_path_factory.mktemp("clitrain")
    assert run("train", "--data", corpus, "--iterations", 2, "--out", out) == 0
    return out


@pytest.fixture(scope="session")
def eval_dir(corpus, model_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("clieval")
    assert run("evaluate", "--data", corpus, "--model", model_dir / "model.npz",
               "--baseline", "--columns", "1,2,5", "--out", out) == 0
    return out


class TestGenerate:
    def test_reports_counts_and_writes_config(self, tmp_path, capsys):
        out = tmp_path / "c"
        assert run("generate", "--users", 2, "--max-duration", 1.6,
                   "--out", out) == 0
        text = capsys.readouterr().out
        assert f"generated 2 users, 56 signature files under {out}" in text
        assert (out / "synth.cfg").is_file()
        assert (out / "u000").is_dir() and (out / "u001").is_dir()

    def test_rerun_is_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert run("generate", "--users", 2, "--max-duration", 1.6,
                       "--out", out) == 0
        assert tree_bytes(a) == tree_bytes(b)

    def test_rejects_zero_users(self, tmp_path, capsys):
        assert run("generate", "--users", 0, "--out", tmp_path / "c") == 2
        assert "usage error" in capsys.readouterr().err


class TestConfigFile:
    def test_supplies_defaults(self, tmp_path, capsys):
        cfg = tmp_path / "gen.cfg"
        cfg.write_text("users = 2\nmax-duration = 1.6  # keep it quick\n")
        assert run("generate", "--config", cfg, "--out", tmp_path / "c") == 0
        assert "generated 2 users" in capsys.readouterr().out

    def test_explicit_flag_wins(self, tmp_path, capsys):
        cfg = tmp_path / "gen.cfg"
        cfg.write_text("users = 2\nmax_duration = 1.6\n")
        assert run("generate", "--config", cfg, "--users", 3,
                   "--out", tmp_path / "c") == 0
        assert "generated 3 users" in capsys.readouterr().out

    def test_unknown_key(self, tmp_path, capsys):
        cfg = tmp_path / "gen.cfg"
        cfg.write_text("wobble = 9\n")
        assert run("generate", "--config", cfg, "--out", tmp_path / "c") == 2
        assert "unknown option 'wobble'" in capsys.readouterr().err

    def test_bad_line(self, tmp_path, capsys):
        cfg = tmp_path / "gen.cfg"
        cfg.write_text("users = 2\njust words\n")
        assert run("generate", "--config", cfg, "--out", tmp_path / "c") == 2
        assert f"{cfg}:2: expected 'key = value'" in capsys.readouterr().err


class TestExtract:
    def test_writes_per_record_csvs(self, corpus, tmp_path, capsys):
        out = tmp_path / "feats"
        assert run("extract", "--data", corpus, "--out", out) == 0
        assert "wrote 140 feature files" in capsys.readouterr().out
        sample = out / "u000" / "genuine_1_00.csv"
        assert sample.is_file()
        header = sample.read_text().splitlines()[0]
        assert header.startswith("1:x,2:y,3:p")
        assert (out / "u004" / "forgery_4_02.csv").is_file()
        assert sum(1 for _ in out.rglob("*.csv")) == 140


class TestTrain:
    def test_writes_model_and_log(self, corpus, model_dir, capsys):
        # model_dir fixture already ran the command; check its artifacts
        assert (model_dir / "model.npz").is_file()
        rows = list(csv.DictReader(open(model_dir / "training_log.csv")))
        assert len(rows) == 2
        assert rows[0]["iteration"] == "1"
        assert float(rows[1]["cost"]) > 0
        assert rows[0]["dev_eer_1vs1"] == ""  # --dev-eval was off

    def test_stdout_summary(self, corpus, tmp_path, capsys):
        assert run("train", "--data", corpus, "--iterations", 1,
                   "--out", tmp_path) == 0
        text = capsys.readouterr().out
        assert "development users: 3, pairs: 288" in text
        assert "trained 1 iterations, final cost" in text
        assert "dev EER 1vs1:" in text and "dev EER 4vs1:" in text
        assert f"model written to {tmp_path / 'model.npz'}" in text

    def test_zero_iterations_saves_initialization(self, corpus, tmp_path,
                                                  capsys):
        assert run("train", "--data", corpus, "--iterations", 0,
                   "--out", tmp_path) == 0
        assert "trained 0 iterations, saved the initialization" \
            in capsys.readouterr().out
        log = (tmp_path / "training_log.csv").read_text().splitlines()
        assert log == ["iteration,cost,dev_eer_1vs1,dev_eer_4vs1,seconds"]
        assert (tmp_path / "model.npz").is_file()

    def test_rerun_same_seed_byte_identical(self, corpus, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert run("train", "--data", corpus, "--iterations", 2,
                       "--out", out) == 0
        assert (a / "model.npz").read_bytes() == (b / "model.npz").read_bytes()

    def test_dev_eval_fills_log_columns(self, corpus, tmp_path):
        assert run("train", "--data", corpus, "--iterations", 2, "--dev-eval",
                   "--out", tmp_path) == 0
        rows = list(csv.DictReader(open(tmp_path / "training_log.csv")))
        for row in rows:
            assert 0.0 <= float(row["dev_eer_1vs1"]) <= 100.0
            assert 0.0 <= float(row["dev_eer_4vs1"]) <= 100.0

    def test_needs_two_development_users(self, corpus, tmp_path, capsys):
        assert run("train", "--data", corpus, "--dev-users", 1,
                   "--out", tmp_path) == 2
        assert "at least 2 development users" in capsys.readouterr().err

    def test_missing_data_root(self, tmp_path, capsys):
        assert run("train", "--data", tmp_path / "nowhere",
                   "--out", tmp_path / "m") == 1
        assert capsys.readouterr().err.startswith("error:")


class TestEvaluate:
    def test_echoes_protocol_counts(self, corpus, model_dir, tmp_path, capsys):
        assert run("evaluate", "--data", corpus,
                   "--model", model_dir / "model.npz",
                   "--out", tmp_path) == 0
        text = capsys.readouterr().out
        assert "evaluation users: 2" in text
        assert "1vs1 genuine scores: 96, impostor scores: 96" in text
        assert "4vs1 genuine scores: 24, impostor scores: 24" in text
        assert "proposed 1vs1 EER:" in text
        assert "proposed 4vs1 EER:" in text

    def test_results_and_det_files(self, eval_dir):
        rows = list(csv.DictReader(open(eval_dir / "results.csv")))
        assert [(r["system"], r["protocol"]) for r in rows] == [
            ("proposed", "1vs1"), ("proposed", "4vs1"),
            ("baseline", "1vs1"), ("baseline", "4vs1"),
        ]
        for row in rows:
            assert 0.0 <= float(row["eer_percent"]) <= 100.0
            assert row["n_genuine"] in ("96", "24")
        det = list(csv.DictReader(open(eval_dir / "det.csv")))
        assert {r["system"] for r in det} == {"proposed", "baseline"}
        assert all(0.0 <= float(r["far"]) <= 1.0 for r in det)

    def test_rerun_byte_identical(self, corpus, model_dir, eval_dir, tmp_path):
        assert run("evaluate", "--data", corpus,
                   "--model", model_dir / "model.npz",
                   "--baseline", "--columns", "1,2,5",
                   "--out", tmp_path) == 0
        for name in ("results.csv", "det.csv"):
            assert (tmp_path / name).read_bytes() \
                == (eval_dir / name).read_bytes()

    def test_requires_a_system(self, corpus, tmp_path, capsys):
        assert run("evaluate", "--data", corpus, "--out", tmp_path) == 2
        assert "needs --model and/or --baseline" in capsys.readouterr().err

    def test_sffs_requires_baseline(self, corpus, model_dir, tmp_path, capsys):
        assert run("evaluate", "--data", corpus,
                   "--model", model_dir / "model.npz", "--sffs",
                   "--out", tmp_path) == 2
        assert "--sffs applies to the --baseline scorer" \
            in capsys.readouterr().err

    def test_sffs_writes_report(self, corpus, tmp_path, capsys):
        assert run("evaluate", "--data", corpus, "--baseline", "--sffs",
                   "--sffs-k", 1, "--sffs-pairs", 24,
                   "--out", tmp_path) == 0
        assert "selected columns:" in capsys.readouterr().out
        report = (tmp_path / "sffs_report.txt").read_text()
        assert report.startswith("step\taction\tcolumn")
        assert "selected\t" in report

    def test_missing_model_file(self, corpus, tmp_path, capsys):
        assert run("evaluate", "--data", corpus,
                   "--model", tmp_path / "no.npz", "--out", tmp_path) == 1
        assert capsys.readouterr().err.startswith("error:")


class TestReport:
    def test_prints_table(self, eval_dir, tmp_path, capsys):
        out = tmp_path / "report.txt"
        assert run("report", eval_dir / "results.csv", "--out", out) == 0
        text = capsys.readouterr().out
        lines = text.splitlines()
        assert lines[0].split() == ["system", "protocol", "eer_percent",
                                    "reference_eer_percent"]
        assert sum(1 for ln in lines if ln.startswith("baseline")) == 2
        assert sum(1 for ln in lines if ln.startswith("proposed")) == 2
        assert out.read_text().splitlines()[0] == lines[0]

    def test_empty_results(self, tmp_path, capsys):
        empty = tmp_path / "results.csv"
        empty.write_text("system,protocol,eer_percent\n")
        assert run("report", empty) == 2
        assert "no result rows found" in capsys.readouterr().err
