"""End-to-end CLI: synth -> train -> eval -> analyze -> selftest on a tiny
world, plus exit codes and report-file integrity."""

import json
from pathlib import Path

import pytest

from gatdst.cli import main
from gatdst.metrics import read_csv


def tiny_config(root: Path, graph_type="DSVGraph") -> Path:
    graph = (
        {"graph_type": "DSVGraph", "layers": 1, "heads": 1, "hops": 2, "seed": 0}
        if graph_type == "DSVGraph"
        else {"graph_type": "NoGraph", "layers": 0, "heads": 0, "hops": 0, "seed": 0}
    )
    tag = graph_type.lower()
    obj = {
        "model": {
            "layers": 1,
            "heads": 2,
            "hidden_size": 16,
            "context_length": 160,
            "seed": 0,
        },
        "graph": graph,
        "training": {
            "regime": "last_turn",
            "epochs": 2,
            "batch_size": 4,
            "lr_lm": 0.002,
            "lr_gat": 0.002,
            "seed": 0,
        },
        "split": {"train_fraction": 0.6, "val_fraction": 0.2, "seed": 9},
        "synth": {
            "num_dialogues": 20,
            "num_domains": 2,
            "slots_per_domain": 2,
            "rho": 0.9,
            "min_turns": 2,
            "max_turns": 3,
            "seed": 5,
        },
        "paths": {
            "ontology": str(root / "ontology.json"),
            "corpus": str(root / "corpus.jsonl"),
            "checkpoint": str(root / f"{tag}.ckpt.json"),
            "report_dir": str(root / f"reports_{tag}"),
        },
    }
    path = root / f"config_{tag}.json"
    path.write_text(json.dumps(obj, indent=2))
    return path


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cliworld")
    config = tiny_config(root)
    assert main(["synth", "--config", str(config)]) == 0
    return root, config


class TestSynth:
    def test_writes_files_and_ratio(self, workspace, capsys):
        root, config = workspace
        assert (root / "ontology.json").exists()
        assert (root / "corpus.jsonl").exists()
        assert main(["synth", "--config", str(config)]) == 0
        out = capsys.readouterr().out
        lines = dict(
            line.split(" ", 1) for line in out.strip().splitlines() if " " in line
        )
        dialogues = int(lines["dialogues"])
        turns = int(lines["turns"])
        assert lines["last_turn_ratio"] == f"{dialogues / turns:.4f}"
        assert int(lines["last_turn_samples"]) == dialogues

    def test_same_seed_identical_files(self, workspace, tmp_path):
        root, config = workspace
        other = tmp_path / "again"
        other.mkdir()
        obj = json.loads(Path(config).read_text())
        obj["paths"]["ontology"] = str(other / "ontology.json")
        obj["paths"]["corpus"] = str(other / "corpus.jsonl")
        config2 = tmp_path / "config2.json"
        config2.write_text(json.dumps(obj))
        assert main(["synth", "--config", str(config2)]) == 0
        assert (other / "corpus.jsonl").read_bytes() == (root / "corpus.jsonl").read_bytes()

    def test_invalid_rho_is_config_error(self, workspace):
        _, config = workspace
        assert main(["synth", "--config", str(config), "--set", "synth.rho=1.5"]) == 1


@pytest.fixture(scope="module")
def trained(workspace):
    root, config = workspace
    assert main(["train", "--config", str(config)]) == 0
    config_ng = tiny_config(root, "NoGraph")
    assert main(["synth", "--config", str(config_ng)]) == 0  # same files, idempotent
    assert main(["train", "--config", str(config_ng)]) == 0
    return root, config, config_ng


class TestTrainEvalAnalyze:
    def test_checkpoints_written(self, trained):
        root, _, _ = trained
        assert (root / "dsvgraph.ckpt.json").exists()
        assert (root / "nograph.ckpt.json").exists()
        log = read_csv(root / "reports_dsvgraph" / "training_log.csv")
        assert len(log) == 2
        assert (root / "reports_dsvgraph" / "training_loss.png").exists()

    def test_eval_outputs(self, trained, capsys):
        root, config, config_ng = trained
        assert main(["eval", "--config", str(config), "--tag", "dsv"]) == 0
        assert main(["eval", "--config", str(config_ng), "--tag", "ng"]) == 0
        out = capsys.readouterr().out
        assert "joint_accuracy" in out and "slot_accuracy" in out
        report = root / "reports_dsvgraph"
        for name in (
            "dsv_predictions.jsonl",
            "dsv_summary.csv",
            "dsv_per_slot_accuracy.csv",
            "dsv_progress_curve.csv",
            "dsv_per_slot_accuracy.png",
            "dsv_progress_curve.png",
        ):
            assert (report / name).exists(), name
        rows = read_csv(report / "dsv_summary.csv")
        assert {r["metric"] for r in rows} == {"joint_accuracy", "slot_accuracy"}
        n_preds = len(
            (report / "dsv_predictions.jsonl").read_text().strip().splitlines()
        )
        assert int(rows[0]["n"]) == n_preds

    def test_eval_rejects_mismatched_ontology(self, trained, tmp_path):
        root, config, _ = trained
        obj = json.loads(Path(config).read_text())
        ontology = json.loads((root / "ontology.json").read_text())
        ontology["slots"] = ontology["slots"][::-1]
        other = tmp_path / "reordered.json"
        other.write_text(json.dumps(ontology))
        obj["paths"]["ontology"] = str(other)
        bad = tmp_path / "bad_config.json"
        bad.write_text(json.dumps(obj))
        assert main(["eval", "--config", str(bad)]) == 1

    def test_analyze_outputs(self, trained, capsys):
        root, config, _ = trained
        model_dump = root / "reports_dsvgraph" / "dsv_predictions.jsonl"
        base_dump = root / "reports_nograph" / "ng_predictions.jsonl"
        out_dir = root / "analysis"
        assert (
            main(
                [
                    "analyze",
                    "--config",
                    str(config),
                    "--predictions",
                    str(model_dump),
                    "--baseline",
                    str(base_dump),
                    "--out",
                    str(out_dir),
                ]
            )
            == 0
        )
        for name in ("jaccard_scores.csv", "pair_deltas.csv", "windowed_delta.csv", "windowed_delta.png"):
            assert (out_dir / name).exists(), name

    def test_analyze_baseline_vs_itself_all_deltas_zero(self, trained):
        root, config, _ = trained
        dump = root / "reports_nograph" / "ng_predictions.jsonl"
        out_dir = root / "self_analysis"
        assert (
            main(
                [
                    "analyze",
                    "--config",
                    str(config),
                    "--predictions",
                    str(dump),
                    "--baseline",
                    str(dump),
                    "--out",
                    str(out_dir),
                ]
            )
            == 0
        )
        for row in read_csv(out_dir / "windowed_delta.csv"):
            assert float(row["mean_delta"]) == 0.0

    def test_analyze_rejects_mismatched_turn_sets(self, trained, tmp_path):
        root, config, _ = trained
        dump = root / "reports_dsvgraph" / "dsv_predictions.jsonl"
        partial = tmp_path / "partial.jsonl"
        partial.write_text("".join(dump.read_text().splitlines(keepends=True)[:-1]))
        assert (
            main(
                [
                    "analyze",
                    "--config",
                    str(config),
                    "--predictions",
                    str(dump),
                    "--baseline",
                    str(partial),
                ]
            )
            == 1
        )


class TestExitCodes:
    def test_missing_config_file(self):
        assert main(["train", "--config", "/nonexistent/config.json"]) == 1

    def test_unknown_config_key(self, workspace):
        _, config = workspace
        assert main(["synth", "--config", str(config), "--set", "synth.bogus=1"]) == 1

    def test_selftest_passes(self):
        assert main(["selftest"]) == 0


class TestDeterminism:
    def test_train_rerun_bit_exact(self, workspace, tmp_path):
        root, config = workspace
        obj = json.loads(Path(config).read_text())
        results = []
        for name in ("run_a", "run_b"):
            run_obj = json.loads(json.dumps(obj))
            run_obj["paths"]["checkpoint"] = str(tmp_path / f"{name}.ckpt.json")
            run_obj["paths"]["report_dir"] = str(tmp_path / name)
            run_config = tmp_path / f"{name}.json"
            run_config.write_text(json.dumps(run_obj))
            assert main(["train", "--config", str(run_config)]) == 0
            results.append(read_csv(tmp_path / name / "training_log.csv"))
        assert results[0] == results[1]
