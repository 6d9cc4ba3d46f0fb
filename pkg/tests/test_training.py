"""Training loop: loss behavior, regimes, determinism, and checkpoints."""


import numpy as np
import pytest

from gatdst.checkpoint import load_checkpoint, parse_config_name, save_checkpoint
from gatdst.corpus import split_corpus
from gatdst.errors import DataError
from gatdst.gat import init_gat_stack
from gatdst.model import LmConfig, causal_forward, init_model
from gatdst.synth import SynthConfig, generate_synthetic_corpus
from gatdst.tokenizer import build_vocab
from gatdst.topology import build_ds_graph
from gatdst.training import Trainer, regime_samples, train


@pytest.fixture(scope="module")
def world():
    config = SynthConfig(num_dialogues=12, num_domains=2, slots_per_domain=2, seed=21)
    dialogues, ontology = generate_synthetic_corpus(config)
    tokenizer = build_vocab(dialogues, ontology)
    return dialogues, ontology, tokenizer


def small_model(tokenizer, seed=0):
    return init_model(
        LmConfig(layers=1, heads=2, hidden_size=16, context_length=192, seed=seed),
        tokenizer,
    )


class TestRegimes:
    def test_sample_counts(self, world):
        dialogues, _, _ = world
        total_turns = sum(d.turn_count for d in dialogues)
        assert len(regime_samples(dialogues, "full")) == total_turns
        assert len(regime_samples(dialogues, "last_turn")) == len(dialogues)

    def test_unknown_regime(self, world):
        dialogues, _, _ = world
        with pytest.raises(Exception):
            regime_samples(dialogues, "sometimes")


class TestTrainer:
    def test_untrained_loss_positive(self, world):
        dialogues, ontology, tokenizer = world
        model = small_model(tokenizer)
        stack = init_gat_stack("NoGraph", 0, 0, 0, 16)
        trainer = Trainer(model=model, stack=stack, topology=None, ontology=ontology)
        loss = trainer.batch_loss(regime_samples(dialogues[:4], "last_turn"))
        assert loss > 0

    def test_loss_decreases_over_steps(self, world):
        dialogues, ontology, tokenizer = world
        model = small_model(tokenizer)
        topo = build_ds_graph(ontology)
        stack = init_gat_stack("DSGraph", 1, 1, 2, 16, seed=1)
        trainer = Trainer(
            model=model,
            stack=stack,
            topology=topo,
            ontology=ontology,
            lr_lm=3e-3,
            lr_gat=3e-3,
            weight_decay=0.0,
            total_steps=10_000,
        )
        batch = regime_samples(dialogues[:4], "last_turn")
        first = trainer.train_step(batch)
        for _ in range(14):
            last = trainer.train_step(batch)
        assert last < first

    def test_two_parameter_groups(self, world):
        dialogues, ontology, tokenizer = world
        model = small_model(tokenizer)
        stack = init_gat_stack("DSGraph", 1, 1, 2, 16, seed=1)
        trainer = Trainer(
            model=model, stack=stack, topology=build_ds_graph(ontology), ontology=ontology
        )
        assert [g.name for g in trainer.groups] == ["lm", "gat"]
        assert trainer.groups[0].learning_rate == pytest.approx(6.25e-5)
        assert trainer.groups[1].learning_rate == pytest.approx(8e-5)
        # Every trainable parameter belongs to exactly one group.
        ids_lm = {id(p) for p in trainer.groups[0].parameters}
        ids_gat = {id(p) for p in trainer.groups[1].parameters}
        assert not ids_lm & ids_gat
        assert len(ids_lm | ids_gat) == len(model.parameters()) + len(stack.parameters())

    def test_nograph_has_single_group(self, world):
        _, ontology, tokenizer = world
        model = small_model(tokenizer)
        stack = init_gat_stack("NoGraph", 0, 0, 0, 16)
        trainer = Trainer(model=model, stack=stack, topology=None, ontology=ontology)
        assert [g.name for g in trainer.groups] == ["lm"]

    def test_scheduled_lr_decays_linearly(self, world):
        _, ontology, tokenizer = world
        model = small_model(tokenizer)
        stack = init_gat_stack("NoGraph", 0, 0, 0, 16)
        trainer = Trainer(
            model=model, stack=stack, topology=None, ontology=ontology, total_steps=100
        )
        trainer.global_step = 50
        assert trainer.scheduled_lr("lm") == pytest.approx(6.25e-5 / 2)


class TestTrain:
    @pytest.mark.parametrize("seed", [3, 4, 5])
    def test_epoch_log_and_improvement(self, world, seed):
        """Smoke run: end-of-training loss beats the first epoch's, per seed."""
        dialogues, ontology, tokenizer = world
        train_d, val_d, _ = split_corpus(dialogues, 0.7, 0.15, seed=2)
        model = small_model(tokenizer, seed=seed)
        stack = init_gat_stack("NoGraph", 0, 0, 0, 16)
        result = train(
            model,
            stack,
            None,
            ontology,
            train_d,
            val_d,
            regime="last_turn",
            epochs=3,
            batch_size=4,
            lr_lm=3e-3,
            weight_decay=0.0,
            seed=seed,
        )
        assert len(result.log) == 3
        assert result.log[-1].train_loss < result.log[0].train_loss
        assert result.best_epoch >= 1

    def test_deterministic_given_seed(self, world):
        dialogues, ontology, tokenizer = world
        train_d, val_d, _ = split_corpus(dialogues, 0.7, 0.15, seed=2)

        def run():
            model = small_model(tokenizer, seed=5)
            stack = init_gat_stack("NoGraph", 0, 0, 0, 16)
            result = train(
                model,
                stack,
                None,
                ontology,
                train_d,
                val_d,
                regime="last_turn",
                epochs=2,
                batch_size=4,
                lr_lm=1e-3,
                seed=7,
            )
            return result, model

        r1, m1 = run()
        r2, m2 = run()
        assert r1.log[-1].train_loss == r2.log[-1].train_loss  # bit-exact
        for (n1, p1), (n2, p2) in zip(m1.named_parameters(), m2.named_parameters()):
            np.testing.assert_array_equal(p1.data, p2.data)

    def test_last_turn_uses_one_sample_per_dialogue(self, world):
        dialogues, _, _ = world
        samples = regime_samples(dialogues, "last_turn")
        assert len(samples) == len(dialogues)
        assert all(s.turn == s.dialogue.turn_count for s in samples)


class TestCheckpoint:
    def test_round_trip_preserves_everything(self, world, tmp_path):
        _, ontology, tokenizer = world
        model = small_model(tokenizer, seed=11)
        stack = init_gat_stack("DSGraph", 1, 2, 2, 16, seed=12)
        path = tmp_path / "model.ckpt.json"
        save_checkpoint(path, model, stack, ontology.slot_keys)
        model2, stack2, slot_keys = load_checkpoint(path)
        assert slot_keys == ontology.slot_keys
        assert stack2.config_name == "L1P2K2-DSGraph"
        assert model2.tokenizer.vocabulary == tokenizer.vocabulary
        for (n1, p1), (n2, p2) in zip(model.named_parameters(), model2.named_parameters()):
            assert n1 == n2
            np.testing.assert_array_equal(p1.data, p2.data)
        for p1, p2 in zip(stack.parameters(), stack2.parameters()):
            np.testing.assert_array_equal(p1.data, p2.data)
        # Forward passes agree bit-for-bit.
        ids = np.arange(5)
        np.testing.assert_array_equal(
            causal_forward(model, ids).data, causal_forward(model2, ids).data
        )

    def test_shape_mismatch_rejected(self, world, tmp_path):
        import json

        _, ontology, tokenizer = world
        model = small_model(tokenizer)
        stack = init_gat_stack("NoGraph", 0, 0, 0, 16)
        path = tmp_path / "model.ckpt.json"
        save_checkpoint(path, model, stack, ontology.slot_keys)
        obj = json.loads(path.read_text())
        obj["parameters"][0]["shape"] = [1, 1]
        obj["parameters"][0]["values"] = [0.0]
        path.write_text(json.dumps(obj))
        with pytest.raises(DataError, match="shape"):
            load_checkpoint(path)

    def test_bad_version_rejected(self, world, tmp_path):
        import json

        _, ontology, tokenizer = world
        model = small_model(tokenizer)
        stack = init_gat_stack("NoGraph", 0, 0, 0, 16)
        path = tmp_path / "model.ckpt.json"
        save_checkpoint(path, model, stack, ontology.slot_keys)
        obj = json.loads(path.read_text())
        obj["format_version"] = 99
        path.write_text(json.dumps(obj))
        with pytest.raises(DataError, match="version"):
            load_checkpoint(path)

    def test_config_name_parsing(self):
        assert parse_config_name("L4P4K2-DSGraph") == (4, 4, 2, "DSGraph")
        with pytest.raises(DataError):
            parse_config_name("L4-Whatever")
