"""Built-in verification suite behind the `selftest` command.

Runs the gradient-check, oracle-equivalence, round-trip, and metric-oracle
suites in-process, plus a deliberate-fault fixture that flips the sign of
the attention score to prove the oracle comparison actually detects a
broken implementation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .gat import (
    GatHeadParams,
    attention_matrix,
    head_aggregate,
    init_gat_stack,
    message_passing_oracle,
)
from .metrics import TurnPrediction, joint_accuracy, slot_accuracy
from .ontology import BeliefState, ontology_from_obj
from .optim import AdamWState, ParameterGroup, adamw_step, linear_decay_lr
from .serialization import parse_state, serialize_state
from .tokenizer import build_vocab
from .topology import GraphTopology, build_dsv_graph
from .corpus import Dialogue, Turn


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


def _random_adjacency(rng, n):
    s = np.triu((rng.random((n, n)) < 0.6).astype(float), k=1)
    return s + s.T


def _check_op_gradients() -> CheckResult:
    rng = np.random.default_rng(100)
    x = ad.parameter(rng.normal(size=(4, 4)), "x")
    mask = _random_adjacency(rng, 4)
    w = rng.normal(size=(4, 4))

    def f():
        soft = ad.masked_row_softmax(ad.leaky_relu(ad.matmul(x, ad.transpose(x)), 0.2), mask)
        return ad.sum_all(ad.mul(soft, ad.constant(w)))

    report = ad.gradient_check(f, [x], step=1e-5, tol=1e-4)
    return CheckResult("op-gradients", report.passed, report.summary())


def _check_gat_gradients() -> CheckResult:
    rng = np.random.default_rng(101)
    stack = init_gat_stack("DSGraph", 1, 2, 2, feature_dim=3, seed=5, init_scale=0.4)
    s = _random_adjacency(rng, 5)
    x = ad.constant(rng.normal(size=(5, 3)))
    w = rng.normal(size=(5, 3))

    def f():
        from .gat import gat_stack_forward

        return ad.sum_all(ad.mul(gat_stack_forward(x, s, stack), ad.constant(w)))

    report = ad.gradient_check(f, stack.parameters(), step=1e-5, tol=1e-4)
    return CheckResult("gat-gradients", report.passed, report.summary())


def _check_oracle_equivalence() -> CheckResult:
    rng = np.random.default_rng(102)
    worst = 0.0
    for _ in range(20):
        n = int(rng.integers(2, 7))
        k = int(rng.integers(1, 4))
        s = _random_adjacency(rng, n)
        x = rng.normal(size=(n, 3))
        head = GatHeadParams(
            [ad.parameter(rng.normal(size=(3, 3)), f"a{i}") for i in range(k)],
            ad.parameter(rng.normal(size=(3, 3)), "q"),
        )
        e = attention_matrix(ad.constant(x), s, head)
        got = head_aggregate(ad.constant(x), s, e, head).data
        expected = np.zeros_like(got)
        for hop in range(k):
            expected += message_passing_oracle(x, s, e, hop) @ head.hop_transforms[hop].data
        worst = max(worst, float(np.abs(got - expected).max()))
    return CheckResult("oracle-equivalence", worst < 1e-10, f"max deviation {worst:.2e}")


def _check_mutation_detected() -> CheckResult:
    """A sign flip in the attention score must trip the oracle comparison."""
    rng = np.random.default_rng(103)
    n = 5
    s = _random_adjacency(rng, n)
    if s.sum() == 0:
        s[0, 1] = s[1, 0] = 1.0
    x = rng.normal(size=(n, 3))
    q = rng.normal(size=(3, 3))
    head = GatHeadParams([ad.parameter(np.eye(3), "a0")], ad.parameter(q, "q"))
    correct = attention_matrix(ad.constant(x), s, head).data

    # Deliberate fault: e_ij computed with flipped sign.
    flipped_scores = ad.constant(-(x @ q @ x.T))
    faulty = ad.masked_row_softmax(ad.leaky_relu(flipped_scores, 0.2), s).data

    deviation = float(np.abs(correct - faulty).max())
    return CheckResult(
        "mutation-detected", deviation > 1e-6, f"fault deviation {deviation:.2e}"
    )


def _check_serialization_round_trip() -> CheckResult:
    ontology = ontology_from_obj(
        {
            "domains": ["hotel", "taxi"],
            "slots": [
                {"domain": "hotel", "slot": "name", "description": "hotel name",
                 "candidates": ["demo hotel", "royal inn"]},
                {"domain": "taxi", "slot": "departure", "description": "taxi departure",
                 "candidates": ["18 : 00", "09 : 15"]},
            ],
            "values": ["demo hotel", "royal inn", "18 : 00", "09 : 15"],
        }
    )
    corpus = [
        Dialogue("d", (Turn("hello there", "hi", BeliefState.empty(2)),))
    ]
    tokenizer = build_vocab(corpus, ontology)
    rng = np.random.default_rng(104)
    pool = ["demo hotel", "royal inn", "18 : 00", "09 : 15", "none"]
    for _ in range(100):
        state = BeliefState([pool[i] for i in rng.integers(0, len(pool), size=2)])
        y = serialize_state(state, ontology, tokenizer)
        parsed, warnings = parse_state(list(y.ids), ontology, tokenizer)
        if warnings or parsed != state:
            return CheckResult("serialize-round-trip", False, f"failed on {state!r}")
    return CheckResult("serialize-round-trip", True, "100 random states")


def _check_topology_round_trip() -> CheckResult:
    ontology = ontology_from_obj(
        {
            "domains": ["d"],
            "slots": [
                {"domain": "d", "slot": "a", "candidates": ["x", "y"]},
                {"domain": "d", "slot": "b", "candidates": ["y"]},
            ],
            "values": ["x", "y"],
        }
    )
    topo = build_dsv_graph(ontology)
    restored = GraphTopology.from_text(topo.to_text())
    ok = (
        restored.node_kinds == topo.node_kinds
        and restored.node_labels == topo.node_labels
        and np.array_equal(restored.adjacency, topo.adjacency)
    )
    return CheckResult("topology-round-trip", ok)


def _check_metric_oracle() -> CheckResult:
    rng = np.random.default_rng(105)
    values = ["a", "b", "none"]
    for _ in range(50):
        n_slots = int(rng.integers(1, 4))
        preds = []
        for t in range(int(rng.integers(1, 7))):
            gold = BeliefState([values[i] for i in rng.integers(0, 3, size=n_slots)])
            hyp = BeliefState([values[i] for i in rng.integers(0, 3, size=n_slots)])
            preds.append(TurnPrediction("d", t + 1, 8, hyp, gold))
        joint_hits = sum(1 for p in preds if p.predicted.values == p.gold.values)
        slot_hits = sum(
            sum(a == b for a, b in zip(p.predicted.values, p.gold.values)) for p in preds
        )
        if abs(joint_accuracy(preds) - joint_hits / len(preds)) > 1e-12:
            return CheckResult("metric-oracle", False, "joint accuracy mismatch")
        if abs(slot_accuracy(preds) - slot_hits / (len(preds) * n_slots)) > 1e-12:
            return CheckResult("metric-oracle", False, "slot accuracy mismatch")
        if slot_accuracy(preds) < joint_accuracy(preds) - 1e-12:
            return CheckResult("metric-oracle", False, "dominance violated")
    return CheckResult("metric-oracle", True, "50 random prediction sets")


def _check_optimizer() -> CheckResult:
    p = ad.parameter([[1.0]], "p")
    group = ParameterGroup("g", [p], learning_rate=0.1)
    state = AdamWState(weight_decay=0.0)
    adamw_step(group, state, [np.array([[1.0]])])
    ok = abs((1.0 - p.data[0, 0]) - 0.1) < 1e-7
    ok = ok and linear_decay_lr(1.0, 50, 100) == 0.5 and linear_decay_lr(1.0, 200, 100) == 0.0
    return CheckResult("optimizer", ok)


def run_selftest(verbose_print=print) -> bool:
    checks = [
        _check_op_gradients,
        _check_gat_gradients,
        _check_oracle_equivalence,
        _check_mutation_detected,
        _check_serialization_round_trip,
        _check_topology_round_trip,
        _check_metric_oracle,
        _check_optimizer,
    ]
    all_ok = True
    for check in checks:
        result = check()
        all_ok = all_ok and result.passed
        status = "PASS" if result.passed else "FAIL"
        detail = f" ({result.detail})" if result.detail else ""
        verbose_print(f"{status} {result.name}{detail}")
    return all_ok
