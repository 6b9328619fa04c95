import json

import pytest

from protoclf.cli import main
from protoclf.store import write_dataset
from protoclf.synthetic import planted_token_dataset, two_cluster_dataset


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    dataset = two_cluster_dataset(n_train=80, n_val=0, n_test=0, seed=6)
    write_dataset(dataset, root)
    return root


TRAIN_ARGS = ["--m", "4", "--epochs", "12", "--batch-size", "32", "--seed", "7"]


def run(argv):
    return main([str(a) for a in argv])


class TestTrainCli:
    def test_train_twice_byte_identical(self, data_dir, tmp_path):
        ck1, ck2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        r1, r2 = tmp_path / "a.json", tmp_path / "b.json"
        assert run(["train", "--data", data_dir, "--out", ck1, "--report", r1] + TRAIN_ARGS) == 0
        assert run(["train", "--data", data_dir, "--out", ck2, "--report", r2] + TRAIN_ARGS) == 0
        assert ck1.read_bytes() == ck2.read_bytes()
        assert r1.read_text() == r2.read_text()

    def test_train_prints_metrics(self, data_dir, tmp_path, capsys):
        ck = tmp_path / "m.ckpt"
        assert run(["train", "--data", data_dir, "--out", ck] + TRAIN_ARGS) == 0
        out = capsys.readouterr().out
        assert "balanced accuracy" in out
        assert ck.exists()

    def test_config_file_with_flag_override(self, data_dir, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(
            "epochs = 12\nm = 4\nseed = 3  # comment\nbatch_size = 32\nlambda_clst = 0.5\n"
        )
        ck1 = tmp_path / "c1.ckpt"
        ck2 = tmp_path / "c2.ckpt"
        assert run(["train", "--data", data_dir, "--config", cfg, "--out", ck1]) == 0
        # --seed overrides the config file value
        assert run(["train", "--data", data_dir, "--config", cfg, "--seed", "3", "--out", ck2]) == 0
        assert ck1.read_bytes() == ck2.read_bytes()

    def test_bad_config_key_fails(self, data_dir, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("bogus_key = 1\n")
        assert run(["train", "--data", data_dir, "--config", cfg, "--out", tmp_path / "x.ckpt"]) == 1
        assert "ConfigInvalid" in capsys.readouterr().err

    def test_missing_data_dir_fails(self, tmp_path, capsys):
        rc = run(["train", "--data", tmp_path / "nope", "--out", tmp_path / "x.ckpt"])
        assert rc == 1
        assert "FileNotFound" in capsys.readouterr().err


@pytest.fixture(scope="module")
def trained_checkpoint(data_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("ck") / "model.ckpt"
    assert run(["train", "--data", data_dir, "--out", out] + TRAIN_ARGS) == 0
    return out


class TestEvalExplainCli:
    def test_eval_prints_accuracy(self, data_dir, trained_checkpoint, capsys):
        assert run([
            "eval", "--data", data_dir, "--checkpoint", trained_checkpoint, "--seed", "7",
        ]) == 0
        out = capsys.readouterr().out
        assert "balanced accuracy (test" in out

    def test_explain_table(self, data_dir, trained_checkpoint, capsys):
        assert run([
            "explain", "--data", data_dir, "--checkpoint", trained_checkpoint,
            "--id", "e1", "--top", "2", "--seed", "7",
        ]) == 0
        out = capsys.readouterr().out
        assert "importance = sim·weight" in out
        rows = [l for l in out.splitlines() if l.strip().startswith(("1", "2"))]
        assert len(rows) == 2

    def test_explain_importances_non_increasing(self, data_dir, trained_checkpoint, capsys):
        assert run([
            "explain", "--data", data_dir, "--checkpoint", trained_checkpoint,
            "--id", "e2", "--top", "2", "--seed", "7",
        ]) == 0
        out = capsys.readouterr().out
        values = [
            float(line.split("=")[1].split()[0])
            for line in out.splitlines()
            if "·" in line and "=" in line and line.strip()[0].isdigit()
        ]
        assert values == sorted(values, reverse=True)

    def test_export_prototypes(self, trained_checkpoint, tmp_path, capsys):
        out_file = tmp_path / "protos.json"
        assert run(["export-prototypes", "--checkpoint", trained_checkpoint, "--out", out_file]) == 0
        payload = json.loads(out_file.read_text())
        assert payload["m"] == 4
        assert len(payload["prototypes"]) == 4


class TestInteractCli:
    def test_soft_replace_full_certainty_prints_new_text(
        self, data_dir, trained_checkpoint, tmp_path, capsys
    ):
        out_ck = tmp_path / "edited.ckpt"
        assert run([
            "interact", "--data", data_dir, "--checkpoint", trained_checkpoint,
            "--op", "soft_replace", "--proto", "1", "--example-id", "e42",
            "--certainty", "1.0", "--out", out_ck, "--seed", "7",
        ]) == 0
        out = capsys.readouterr().out
        assert "accepted: True" in out
        assert "synthetic cluster sample 42" in out  # example e42's text
        assert out_ck.exists()

    def test_remove_prints_accuracy_delta(
        self, data_dir, trained_checkpoint, tmp_path, capsys
    ):
        assert run([
            "interact", "--data", data_dir, "--checkpoint", trained_checkpoint,
            "--op", "remove", "--proto", "0", "--out", tmp_path / "r.ckpt", "--seed", "7",
        ]) == 0
        out = capsys.readouterr().out
        assert "val balanced accuracy" in out

    def test_unknown_prototype_errors(self, data_dir, trained_checkpoint, tmp_path, capsys):
        rc = run([
            "interact", "--data", data_dir, "--checkpoint", trained_checkpoint,
            "--op", "remove", "--proto", "99", "--out", tmp_path / "x.ckpt", "--seed", "7",
        ])
        assert rc == 1
        assert "UnknownPrototype" in capsys.readouterr().err


class TestFaithfulnessCli:
    def test_report(self, tmp_path, capsys):
        dataset, _, rationales = planted_token_dataset(n_train=60, n_val=20, n_test=20, seed=2)
        data = tmp_path / "planted"
        write_dataset(dataset, data)
        rat_file = tmp_path / "rationales.jsonl"
        with open(rat_file, "w") as fh:
            for ex_id, mask in rationales.items():
                fh.write(json.dumps({"id": ex_id, "mask": [int(v) for v in mask]}) + "\n")
        ck = tmp_path / "p.ckpt"
        assert run([
            "train", "--data", data, "--out", ck, "--m", "2", "--epochs", "20",
            "--batch-size", "16", "--seed", "2", "--lr", "0.02",
        ]) == 0
        capsys.readouterr()
        assert run([
            "faithfulness", "--data", data, "--checkpoint", ck,
            "--rationales", rat_file, "--provider", "toy:2", "--seed", "2",
        ]) == 0
        out = capsys.readouterr().out
        assert "comprehensiveness" in out
        assert "prototype removal" in out


class TestUsage:
    def test_no_subcommand_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 2

    def test_unknown_subcommand(self):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2
