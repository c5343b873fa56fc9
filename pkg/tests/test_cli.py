import json
import os

import numpy as np
import pytest

from megcf.cli import main


def run(argv):
    return main(argv)


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("data") / "synthetic"
    code = run(["synth", "--out", str(out), "--users", "50", "--items",
                "150", "--entities", "6", "--seed", "7", "--density", "0.1"])
    assert code == 0
    return out


FAST = ["--epochs", "3", "--dim", "8", "--layers", "1",
        "--batch-size", "256", "--patience", "0"]


class TestParsing:
    def test_help_exits_zero(self, capsys):
        with pytest.raises(SystemExit) as exc:
            run(["--help"])
        assert exc.value.code == 0

    def test_unknown_flag_exits_one(self):
        with pytest.raises(SystemExit) as exc:
            run(["synth", "--frobnicate"])
        assert exc.value.code == 1

    def test_missing_required_flag_exits_one(self):
        with pytest.raises(SystemExit) as exc:
            run(["synth", "--users", "10"])
        assert exc.value.code == 1

    def test_missing_subcommand_exits_one(self):
        with pytest.raises(SystemExit) as exc:
            run([])
        assert exc.value.code == 1


class TestSynth:
    def test_writes_files_and_manifest(self, dataset):
        for name in ("interactions.tsv", "entities.tsv", "sentiments.tsv",
                     "manifest.json"):
            assert (dataset / name).exists()
        manifest = json.loads((dataset / "manifest.json").read_text())
        assert manifest["seed"] == 7
        assert manifest["users"] == 50

    def test_deterministic(self, tmp_path):
        args = ["--users", "20", "--items", "40", "--entities", "4",
                "--seed", "3"]
        run(["synth", "--out", str(tmp_path / "a")] + args)
        run(["synth", "--out", str(tmp_path / "b")] + args)
        a = (tmp_path / "a" / "interactions.tsv").read_bytes()
        b = (tmp_path / "b" / "interactions.tsv").read_bytes()
        assert a == b

    def test_infeasible_spec_exits_two(self, tmp_path):
        code = run(["synth", "--out", str(tmp_path / "x"), "--users", "3",
                    "--items", "50", "--entities", "0"])
        assert code == 2


class TestTrainEval:
    def test_train_then_eval(self, dataset, tmp_path, capsys):
        ckpt = tmp_path / "model.ckpt"
        code = run(["train", "--data", str(dataset), "--out", str(ckpt),
                    "--seed", "1"] + FAST)
        assert code == 0
        assert ckpt.exists()
        assert (tmp_path / "model.ckpt.log.jsonl").exists()
        manifest = json.loads(
            (tmp_path / "model.ckpt.manifest.json").read_text())
        assert manifest["effective_config"]["layers"] == 1

        capsys.readouterr()
        out_path = tmp_path / "metrics.jsonl"
        code = run(["eval", "--checkpoint", str(ckpt), "--out",
                    str(out_path)])
        assert code == 0
        table = capsys.readouterr().out
        assert "hr@10" in table
        records = [json.loads(line) for line in out_path.read_text().splitlines()]
        assert {r["metric"] for r in records} == {
            "hr@5", "hr@10", "hr@20", "ndcg@5", "ndcg@10", "ndcg@20"}

    def test_eval_reproducible(self, dataset, tmp_path, capsys):
        ckpt = tmp_path / "model.ckpt"
        run(["train", "--data", str(dataset), "--out", str(ckpt),
             "--seed", "2"] + FAST)
        capsys.readouterr()
        run(["eval", "--checkpoint", str(ckpt)])
        first = capsys.readouterr().out
        run(["eval", "--checkpoint", str(ckpt)])
        second = capsys.readouterr().out
        assert first == second

    def test_train_missing_data_exits_two(self, tmp_path):
        code = run(["train", "--data", str(tmp_path / "nope"), "--out",
                    str(tmp_path / "m.ckpt")] + FAST)
        assert code == 2

    def test_ablation_flags_accepted(self, dataset, tmp_path):
        ckpt = tmp_path / "ablation.ckpt"
        code = run(["train", "--data", str(dataset), "--out", str(ckpt),
                    "--no-sentiment", "--no-entities", "--alpha", "0",
                    "--seed", "1"] + FAST)
        assert code == 0
        code = run(["train", "--data", str(dataset), "--out", str(ckpt),
                    "--model", "bprmf", "--seed", "1"] + FAST)
        assert code == 0

    def test_conflicting_flags_exit_two(self, dataset, tmp_path):
        code = run(["train", "--data", str(dataset), "--out",
                    str(tmp_path / "x.ckpt"), "--no-l1", "--no-l2"] + FAST)
        assert code == 2

    def test_non_finite_checkpoint_exits_three(self, dataset, tmp_path):
        from megcf.ingestion import load_checkpoint, save_checkpoint
        ckpt = tmp_path / "poisoned.ckpt"
        assert run(["train", "--data", str(dataset), "--out", str(ckpt),
                    "--seed", "4"] + FAST) == 0
        loaded = load_checkpoint(ckpt)
        loaded.table.data[0, 0] = np.nan
        save_checkpoint(ckpt, loaded.config, loaded.table, loaded.split,
                        loaded.mapped)
        assert run(["eval", "--checkpoint", str(ckpt)]) == 3


class TestConfigFile:
    def test_file_sets_defaults_flags_override(self, dataset, tmp_path,
                                               capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("[train]\nepochs = 2\ndim = 8\nlayers = 1\n"
                       "batch-size = 128\nno-sentiment = true\n"
                       "patience = 0\n")
        ckpt = tmp_path / "cfg.ckpt"
        code = run(["--config", str(cfg), "train", "--data", str(dataset),
                    "--out", str(ckpt), "--dim", "4"])
        assert code == 0
        manifest = json.loads((tmp_path / "cfg.ckpt.manifest.json")
                              .read_text())
        eff = manifest["effective_config"]
        assert eff["epochs"] == 2  # from file
        assert eff["dim"] == 4  # flag wins
        assert eff["use_sentiment"] is False

    def test_unknown_config_key_exits_two(self, dataset, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("[train]\nwibble = 1\n")
        code = run(["--config", str(cfg), "train", "--data", str(dataset),
                    "--out", str(tmp_path / "y.ckpt")] + FAST)
        assert code == 2


class TestAblate:
    def test_two_variants_single_seed(self, dataset, tmp_path, capsys):
        out = tmp_path / "report"
        code = run(["ablate", "--data", str(dataset), "--out", str(out),
                    "--variants", "full,wo-vt", "--seeds", "5"] + FAST)
        assert code == 0
        table = (out / "ablation.txt").read_text()
        assert "full" in table and "wo-vt" in table
        assert "±" not in table  # single seed: no stdev column
        records = [json.loads(line)
                   for line in (out / "ablation.jsonl").read_text().splitlines()]
        assert {r["variant"] for r in records} == {"full", "wo-vt"}

    def test_multi_seed_reports_stdev(self, dataset, tmp_path, capsys):
        out = tmp_path / "report2"
        code = run(["ablate", "--data", str(dataset), "--out", str(out),
                    "--variants", "wo-g2", "--seeds", "1,2"] + FAST)
        assert code == 0
        assert "±" in (out / "ablation.txt").read_text()

    def test_parallel_matches_sequential(self, dataset, tmp_path):
        seq = tmp_path / "seq"
        par = tmp_path / "par"
        args = ["--data", str(dataset), "--variants", "wo-g2", "--seeds",
                "1,2"] + FAST
        assert run(["ablate", "--out", str(seq)] + args) == 0
        assert run(["ablate", "--out", str(par), "--parallel", "2"] + args) == 0
        a = sorted((seq / "ablation.jsonl").read_text().splitlines())
        b = sorted((par / "ablation.jsonl").read_text().splitlines())
        assert a == b

    def test_unknown_variant_exits_two(self, dataset, tmp_path):
        code = run(["ablate", "--data", str(dataset), "--out",
                    str(tmp_path / "r"), "--variants", "bogus"] + FAST)
        assert code == 2


class TestReport:
    def test_renders_records(self, tmp_path, capsys):
        path = tmp_path / "records.jsonl"
        with open(path, "w") as fh:
            fh.write(json.dumps({"variant": "full", "seed": 0,
                                 "metric": "hr@10", "value": 0.5}) + "\n")
            fh.write(json.dumps({"variant": "full", "seed": 0,
                                 "metric": "ndcg@10", "value": 0.25}) + "\n")
        assert run(["report", "--records", str(path)]) == 0
        out = capsys.readouterr().out
        assert "hr@10" in out and "0.5000" in out
