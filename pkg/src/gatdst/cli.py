"""Command-line entry point: synth, train, eval, analyze, selftest.

One JSON config drives a run; --set section.key=value overrides single keys
and --seed pins every RNG in the run. Exit codes: 0 success, 1 config or
data error, 2 internal invariant failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, load_config
from .corpus import last_turn_filter, load_corpus, save_corpus, split_corpus, turn_samples
from .errors import ConfigError, DataError, InvariantError
from .gat import init_gat_stack, stack_graph_type
from .metrics import (
    TurnPrediction,
    jaccard_scores,
    joint_accuracy,
    load_predictions,
    pair_accuracy,
    progress_curve,
    save_predictions,
    slot_accuracy,
    windowed_pair_delta,
    write_csv,
    write_jaccard_csv,
    write_per_slot_csv,
    write_progress_csv,
    write_summary_csv,
    write_windowed_csv,
)
from .model import init_model, predict_state
from .ontology import load_ontology, save_ontology
from .plots import (
    plot_per_slot_accuracy,
    plot_progress_curve,
    plot_training_log,
    plot_windowed_delta,
)
from .selftest import run_selftest
from .serialization import serialize_history, slot_prompt_string
from .synth import generate_synthetic_corpus
from .tokenizer import build_vocab
from .topology import build_ds_graph, build_dsv_graph
from .training import train

logger = logging.getLogger(__name__)


def _load_run_config(args) -> RunConfig:
    overrides = list(args.set or [])
    if args.seed is not None:
        overrides += [
            f"training.seed={args.seed}",
            f"synth.seed={args.seed}",
            f"model.seed={args.seed}",
            f"graph.seed={args.seed}",
        ]
    return load_config(args.config, overrides)


def _report_dir(config: RunConfig, args) -> Path:
    out = Path(args.out) if args.out else Path(config.paths.report_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _build_topology(graph_type: str, ontology):
    if graph_type == "NoGraph":
        return None
    if graph_type == "DSGraph":
        return build_ds_graph(ontology)
    return build_dsv_graph(ontology)


def cmd_synth(args) -> int:
    config = _load_run_config(args)
    dialogues, ontology = generate_synthetic_corpus(config.synth)
    ontology_path = Path(config.paths.ontology)
    corpus_path = Path(config.paths.corpus)
    ontology_path.parent.mkdir(parents=True, exist_ok=True)
    corpus_path.parent.mkdir(parents=True, exist_ok=True)
    save_ontology(ontology, ontology_path)
    save_corpus(dialogues, ontology, corpus_path)
    turns = sum(d.turn_count for d in dialogues)
    last = len(last_turn_filter(dialogues))
    print(f"ontology {ontology_path} slots {ontology.slot_count} values {len(ontology.values)}")
    print(f"corpus {corpus_path}")
    print(f"dialogues {len(dialogues)}")
    print(f"turns {turns}")
    print(f"last_turn_samples {last}")
    print(f"last_turn_ratio {last / turns:.4f}")
    return 0


def cmd_train(args) -> int:
    config = _load_run_config(args)
    ontology = load_ontology(config.paths.ontology)
    dialogues = load_corpus(config.paths.corpus, ontology)
    train_d, val_d, _ = split_corpus(
        dialogues,
        config.split.train_fraction,
        config.split.val_fraction,
        config.split.seed,
    )
    if not train_d:
        raise DataError("empty training split")
    tokenizer = build_vocab(train_d, ontology)
    model = init_model(config.model, tokenizer)
    graph = config.graph
    stack = init_gat_stack(
        graph.graph_type,
        graph.layers,
        graph.heads,
        graph.hops,
        feature_dim=config.model.hidden_size,
        seed=graph.seed,
        activation=graph.activation,
        activation_slope=graph.activation_slope,
        leaky_slope=graph.leaky_slope,
    )
    topology = _build_topology(graph.graph_type, ontology)
    print(f"config {graph.name} regime {config.training.regime}")
    result = train(
        model,
        stack,
        topology,
        ontology,
        train_d,
        val_d,
        regime=config.training.regime,
        epochs=config.training.epochs,
        batch_size=config.training.batch_size,
        lr_lm=config.training.lr_lm,
        lr_gat=config.training.lr_gat,
        weight_decay=config.training.weight_decay,
        seed=config.training.seed,
    )
    for entry in result.log:
        print(f"epoch {entry.epoch} train_loss {entry.train_loss:.6f} val_loss {entry.val_loss:.6f}")
    print(f"best_epoch {result.best_epoch} best_val_loss {result.best_val_loss:.6f}")
    checkpoint_path = Path(config.paths.checkpoint)
    checkpoint_path.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(checkpoint_path, model, stack, ontology.slot_keys)
    print(f"checkpoint {checkpoint_path}")
    report_dir = _report_dir(config, args)
    write_csv(
        report_dir / "training_log.csv",
        ["epoch", "train_loss", "val_loss"],
        [[e.epoch, f"{e.train_loss:.6f}", f"{e.val_loss:.6f}"] for e in result.log],
    )
    plot_training_log(result.log, report_dir / "training_loss.png")
    return 0


def _predict_split(config: RunConfig, checkpoint_path: str, split: str):
    model, stack, slot_keys = load_checkpoint(checkpoint_path)
    ontology = load_ontology(config.paths.ontology)
    if tuple(slot_keys) != ontology.slot_keys:
        raise DataError(
            "checkpoint slot order does not match the ontology: "
            f"{slot_keys} vs {ontology.slot_keys}"
        )
    dialogues = load_corpus(config.paths.corpus, ontology)
    parts = dict(
        zip(
            ("train", "val", "test"),
            split_corpus(
                dialogues,
                config.split.train_fraction,
                config.split.val_fraction,
                config.split.seed,
            ),
        )
    )
    if split not in parts:
        raise ConfigError(f"split must be one of train/val/test, got {split!r}")
    selected = parts[split]
    if not selected:
        raise DataError(f"{split} split is empty")
    topology = _build_topology(stack_graph_type(stack), ontology)
    prompt = slot_prompt_string(ontology, model.tokenizer)
    predictions = []
    for sample in turn_samples(selected):
        history = serialize_history(sample.dialogue, sample.turn, model.tokenizer)
        state, _ = predict_state(
            model,
            stack,
            topology,
            ontology,
            prompt,
            history,
            max_value_tokens=config.training.max_value_tokens,
        )
        predictions.append(
            TurnPrediction(
                dialogue_id=sample.dialogue.id,
                turn=sample.turn,
                total_turns=sample.dialogue.turn_count,
                predicted=state,
                gold=sample.gold,
            )
        )
    return predictions, ontology, stack


def cmd_eval(args) -> int:
    config = _load_run_config(args)
    checkpoint_path = args.checkpoint or config.paths.checkpoint
    predictions, ontology, stack = _predict_split(config, checkpoint_path, args.split)
    report_dir = _report_dir(config, args)
    tag = f"{args.tag}_" if args.tag else ""
    save_predictions(report_dir / f"{tag}predictions.jsonl", predictions, ontology)
    write_summary_csv(report_dir / f"{tag}summary.csv", predictions)
    baseline_accuracies = None
    if args.baseline:
        baseline_preds = load_predictions(args.baseline, ontology)
        from .metrics import per_slot_accuracy

        baseline_accuracies = per_slot_accuracy(baseline_preds, ontology)
    accuracies = write_per_slot_csv(
        report_dir / f"{tag}per_slot_accuracy.csv", predictions, ontology, baseline_accuracies
    )
    write_progress_csv(report_dir / f"{tag}progress_curve.csv", predictions, args.buckets)
    plot_per_slot_accuracy(
        ontology.slot_keys,
        accuracies,
        report_dir / f"{tag}per_slot_accuracy.png",
        baseline_accuracies,
    )
    plot_progress_curve(
        progress_curve(predictions, args.buckets), report_dir / f"{tag}progress_curve.png"
    )
    print(f"model {stack.config_name} split {args.split} turns {len(predictions)}")
    print(f"joint_accuracy {joint_accuracy(predictions):.6f}")
    print(f"slot_accuracy {slot_accuracy(predictions):.6f}")
    print(f"reports {report_dir}")
    return 0


def cmd_analyze(args) -> int:
    config = _load_run_config(args)
    ontology = load_ontology(config.paths.ontology)
    corpus = {d.id: d for d in load_corpus(config.paths.corpus, ontology)}
    model_preds = load_predictions(args.predictions, ontology)
    base_preds = load_predictions(args.baseline, ontology)
    model_keys = {(p.dialogue_id, p.turn) for p in model_preds}
    base_keys = {(p.dialogue_id, p.turn) for p in base_preds}
    if model_keys != base_keys:
        raise DataError(
            f"prediction dumps cover different turns: "
            f"{len(model_keys - base_keys)} only in model, "
            f"{len(base_keys - model_keys)} only in baseline"
        )
    for p in model_preds:
        dialogue = corpus.get(p.dialogue_id)
        if dialogue is None or p.turn > dialogue.turn_count:
            raise DataError(f"dump references unknown turn {p.dialogue_id}:{p.turn}")
        if dialogue.turns[p.turn - 1].state != p.gold:
            raise DataError(f"dump gold diverges from corpus at {p.dialogue_id}:{p.turn}")

    gold_states = [p.gold for p in model_preds]
    entries = jaccard_scores(gold_states, ontology)
    report_dir = _report_dir(config, args)
    write_jaccard_csv(report_dir / "jaccard_scores.csv", entries)

    pair_rows = []
    points = []
    for e in entries:
        acc_model = pair_accuracy(model_preds, ontology, e.slot1, e.value1, e.slot2, e.value2)
        acc_base = pair_accuracy(base_preds, ontology, e.slot1, e.value1, e.slot2, e.value2)
        if acc_model is None or acc_base is None:
            continue
        delta = acc_model - acc_base
        points.append((e.score, delta))
        pair_rows.append(
            [
                e.slot1, e.value1, e.slot2, e.value2,
                f"{e.score:.6f}", e.support,
                f"{acc_model:.6f}", f"{acc_base:.6f}", f"{delta:.6f}",
            ]
        )
    write_csv(
        report_dir / "pair_deltas.csv",
        ["slot1", "value1", "slot2", "value2", "jaccard", "support",
         "model_accuracy", "baseline_accuracy", "delta"],
        pair_rows,
    )
    if not points:
        raise DataError("no value pair is supported by both prediction dumps")
    curve = windowed_pair_delta(points, window=args.window)
    write_windowed_csv(report_dir / "windowed_delta.csv", curve)
    plot_windowed_delta({"model - baseline": curve}, report_dir / "windowed_delta.png", args.window)
    high = [p.mean_delta for p in curve if p.jaccard >= 0.8]
    low = [p.mean_delta for p in curve if p.jaccard <= 0.2]
    print(f"pairs {len(points)} windowed_points {len(curve)} window {args.window}")
    if high:
        print(f"mean_delta_at_high_jaccard {sum(high) / len(high):.6f}")
    if low:
        print(f"mean_delta_at_low_jaccard {sum(low) / len(low):.6f}")
    print(f"reports {report_dir}")
    return 0


def cmd_selftest(args) -> int:
    return 0 if run_selftest() else 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gatdst",
        description="Graph-attention-enhanced causal LM for dialogue state tracking",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        p.add_argument("--config", required=needs_config, help="run config JSON")
        p.add_argument("--seed", type=int, default=None, help="override every seed")
        p.add_argument("--out", default=None, help="output directory for reports")
        p.add_argument(
            "--set",
            action="append",
            metavar="SECTION.KEY=VALUE",
            help="override one config key (repeatable)",
        )

    p_synth = sub.add_parser("synth", help="generate a synthetic ontology and corpus")
    common(p_synth)
    p_synth.set_defaults(func=cmd_synth)

    p_train = sub.add_parser("train", help="train a tracker and write a checkpoint")
    common(p_train)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="predict a split and write metric reports")
    common(p_eval)
    p_eval.add_argument("--checkpoint", default=None, help="checkpoint path override")
    p_eval.add_argument("--split", default="test", help="train, val, or test")
    p_eval.add_argument("--tag", default="", help="prefix for report files")
    p_eval.add_argument("--buckets", type=int, default=5, help="progress-curve buckets")
    p_eval.add_argument(
        "--baseline", default=None, help="baseline predictions.jsonl for per-slot deltas"
    )
    p_eval.set_defaults(func=cmd_eval)

    p_an = sub.add_parser("analyze", help="value-pair dependency analysis of two dumps")
    common(p_an)
    p_an.add_argument("--predictions", required=True, help="model predictions.jsonl")
    p_an.add_argument("--baseline", required=True, help="baseline predictions.jsonl")
    p_an.add_argument("--window", type=float, default=0.1, help="moving-window width")
    p_an.set_defaults(func=cmd_analyze)

    p_self = sub.add_parser("selftest", help="run the built-in verification suites")
    common(p_self, needs_config=False)
    p_self.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (InvariantError, AssertionError) as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
