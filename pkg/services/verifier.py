"""
Verifier: the property suites behind `app.py verify`.

Suites
------
  gradients     central finite differences vs tape gradients for every layer
                kind, the encoder block and a K=1 / d=4 model (rel. error)
  reduction     zeroed differential encoders reproduce the plain layers
                and the plain model
  equivariance  node permutations commute with layers and the model
  attention     masked softmax rows sum to 1; other graphs stay bit-identical
  metrics       library metrics vs brute-force enumeration on fixed fixtures
  optimizer     AdamW scalar trace and schedule endpoints

Each suite returns the largest error it saw and whether it stayed within its
tolerance.  `mutate=True` flips the sign of the gradient flowing into every
differential encoder, which the gradients suite must catch.

Usage
-----
    from services.verifier import cmd_verify

    report = cmd_verify()
    print("\\n".join(report.lines()))
"""

from __future__ import annotations

import contextlib
import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from engine.gradcheck import grad_check
from engine.tensor import Tape, Tensor, backward, fault_injection, parameter, tsum
from errors import UsageError
from graphs.containers import Graph, batch_graphs
from graphs.synthetic import random_graph
from layers.attention import MultiHeadAttention, segment_mask
from layers.block import EncoderBlock
from layers.ffn import DIFF_ENC_OP
from layers.module import BatchNorm, Module
from layers.mpnn import build_mpnn
from model.model_config import MPNN_KINDS, ModelConfig
from model.network import GraphModel
from training.losses import loss as task_loss
from training.metrics import (
    accuracy,
    average_precision,
    macro_f1,
    pessimistic_rank,
    ranking_metrics,
)
from training.optim import AdamW, OptimizerConfig
from training.schedule import lr_at

logger = logging.getLogger(__name__)

SUITES = ("gradients", "reduction", "equivariance", "attention", "metrics", "optimizer")
LAYER_KINDS = ("gcn", "gat", "gatedgcn", "mha")


@dataclass
class SuiteResult:
    name: str
    max_error: float
    tolerance: float
    checks: int
    detail: str = ""
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return math.isfinite(self.max_error) and self.max_error <= self.tolerance


@dataclass
class VerifyReport:
    suites: list[SuiteResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(s.passed for s in self.suites)

    def lines(self) -> list[str]:
        out = []
        for s in self.suites:
            status = "PASS" if s.passed else "FAIL"
            line = (f"{s.name:<13} max_error {s.max_error:.3e}  tol {s.tolerance:.0e}  "
                    f"{status} ({s.checks} checks, {s.seconds:.2f}s)")
            if s.detail and not s.passed:
                line += f"  worst: {s.detail}"
            out.append(line)
        return out


# ── shared builders ───────────────────────────────────────────────────────────

def build_layer(kind: str, d: int, rng: np.random.Generator, use_diff: bool = True) -> Module:
    if kind == "mha":
        return MultiHeadAttention(d, 2 if d % 2 == 0 else 1, rng, use_diff)
    return build_mpnn(kind, d, rng, use_diff)


def layer_inputs(kind: str, g: Graph) -> Tensor | None:
    """Edge embeddings for GatedGCN (per stored directed edge), None otherwise."""
    if kind != "gatedgcn":
        return None
    return Tensor(g.directed_edge_attr())


def run_layer(kind: str, layer: Module, g: Graph, H: Tensor, E: Tensor | None = None,
              use_diff: bool | None = None) -> Tensor:
    if kind == "mha":
        return layer(H, np.zeros(g.num_nodes, dtype=np.int64), use_diff=use_diff)
    out, _ = layer(g, H, E=E, use_diff=use_diff)
    return out


def zero_diff_encoders(module: Module) -> None:
    for m in module.modules():
        enc = getattr(m, "diff_enc", None)
        if enc is not None:
            enc.zero_()


def _named(module: Module, prefix: str) -> list[Tensor]:
    params = []
    for name, p in module.named_parameters():
        p.name = f"{prefix}.{name}"
        params.append(p)
    return params


def _labelled(g: Graph, label: int) -> Graph:
    return Graph(g.num_nodes, g.edge_pairs, g.x, g.edge_attr, "graph", label)


# ── gradients ─────────────────────────────────────────────────────────────────

def gradient_cases(seed: int = 0, d: int = 4) -> list[tuple[str, Callable[..., Tensor], list[Tensor]]]:
    """
    (name, scalar function, inputs) for every layer kind, a block and a small model.

    Layers, block and model run in eval mode: train-mode batchnorm removes
    column shifts, which leaves some bias gradients at exactly zero where the
    relative error is dominated by rounding.  Train-mode batchnorm gets its own
    case.
    """
    rng = np.random.default_rng(seed)
    cases = []

    bn = BatchNorm(d)
    bn.gamma.data[...] = rng.uniform(0.5, 1.5, d)
    bn.beta.data[...] = rng.standard_normal(d)
    X = parameter(rng.standard_normal((6, d)), name="batchnorm.X")
    R_bn = rng.standard_normal((6, d))
    cases.append(("batchnorm", lambda *_: tsum(bn(X) * R_bn), [X] + _named(bn, "batchnorm")))

    for kind in LAYER_KINDS:
        g = random_graph(rng, 5, 0.5, d, edge_dim=d if kind == "gatedgcn" else 0)
        layer = build_layer(kind, d, rng, use_diff=True).eval()
        H = parameter(g.x, name=f"{kind}.H")
        E = layer_inputs(kind, g)
        R = rng.standard_normal((g.num_nodes, d))
        inputs = [H] + _named(layer, kind)
        if E is not None:
            E.name = f"{kind}.E"
            inputs.append(E)
        cases.append((
            kind,
            lambda *_, kind=kind, layer=layer, g=g, H=H, E=E, R=R: tsum(run_layer(kind, layer, g, H, E) * R),
            inputs,
        ))

    g = random_graph(rng, 6, 0.5, d)
    block = EncoderBlock(d, rng, build_mpnn("gcn", d, rng, True), MultiHeadAttention(d, 2, rng, True)).eval()
    H = parameter(g.x, name="block.H")
    R = rng.standard_normal((g.num_nodes, d))
    cases.append(("block", lambda *_: tsum(block(g, H)[0] * R), [H] + _named(block, "block")))

    cfg = ModelConfig(num_layers=1, hidden=d, input_dim=3, heads=2, mpnn_kind="gatedgcn",
                      task="graph-class", num_classes=3, seed=seed)
    model = GraphModel(cfg).eval()
    batch = batch_graphs([_labelled(random_graph(rng, 5, 0.5, 3), i % 3) for i in range(3)])

    def model_loss(*_):
        preds = model(batch)
        return task_loss(cfg.task, preds.logits, batch.y)

    cases.append(("model", model_loss, _named(model, "model")))
    return cases


def suite_gradients(seed: int = 0) -> SuiteResult:
    worst, worst_name, checks = 0.0, "", 0
    for name, f, inputs in gradient_cases(seed):
        report = grad_check(f, inputs)
        checks += len(inputs)
        if report.max_error >= worst:
            worst, worst_name = report.max_error, report.worst()
        logger.debug("gradients/%s max error %.3e", name, report.max_error)
    return SuiteResult("gradients", worst, 1e-4, checks, worst_name)


# ── reduction ─────────────────────────────────────────────────────────────────

def reduction_error(kind: str, seed: int) -> float:
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 9))
    n = int(rng.integers(1, 9))
    g = random_graph(rng, n, 0.4, d, edge_dim=d if kind == "gatedgcn" else 0)
    layer = build_layer(kind, d, rng, use_diff=True)
    zero_diff_encoders(layer)
    H, E = Tensor(g.x), layer_inputs(kind, g)
    with_diff = run_layer(kind, layer, g, H, E, use_diff=True)
    plain = run_layer(kind, layer, g, H, E, use_diff=False)
    return float(np.max(np.abs(with_diff.data - plain.data), initial=0.0))


def base_and_zeroed_diff_models(cfg: ModelConfig) -> tuple[GraphModel, GraphModel]:
    """
    A model without differential encoders and a diff-enc model that shares all
    of its parameters, every diff_enc zeroed.  Both are in eval mode.
    """
    base = GraphModel(replace(cfg, use_diff_local=False, use_diff_global=False)).eval()
    diff = GraphModel(replace(cfg, use_diff_local=True, use_diff_global=True)).eval()
    shared = dict(base.named_parameters())
    for name, p in diff.named_parameters():
        if name in shared:
            p.data[...] = shared.pop(name).data
    if shared:
        raise UsageError(f"parameters missing from the diff-enc model: {sorted(shared)}")
    zero_diff_encoders(diff)
    return base, diff


def model_reduction_error(mpnn_kind: str, seed: int) -> float:
    rng = np.random.default_rng(seed)
    d = 4
    n = int(rng.integers(1, 13))
    g = random_graph(rng, n, 0.4, 3, edge_dim=2 if mpnn_kind == "gatedgcn" else 0)
    cfg = ModelConfig(num_layers=2, hidden=d, heads=2, input_dim=3, mpnn_kind=mpnn_kind,
                      gat_heads=2 if mpnn_kind == "gat" else 1,
                      edge_dim=2 if mpnn_kind == "gatedgcn" else 0,
                      task="graph-class", num_classes=3, seed=seed)
    base, diff = base_and_zeroed_diff_models(cfg)
    a, b = base(g), diff(g)
    node_err = np.max(np.abs(a.node_embeddings.data - b.node_embeddings.data), initial=0.0)
    return float(max(node_err, np.max(np.abs(a.logits.data - b.logits.data))))


def suite_reduction(seeds: int = 100) -> SuiteResult:
    worst, detail, checks = 0.0, "", 0
    for kind in LAYER_KINDS:
        for seed in range(seeds):
            err = reduction_error(kind, seed)
            checks += 1
            if err > worst:
                worst, detail = err, f"{kind} seed {seed}"
    for mpnn_kind in MPNN_KINDS:
        for seed in range(max(seeds // 10, 1)):
            err = model_reduction_error(mpnn_kind, seed)
            checks += 1
            if err > worst:
                worst, detail = err, f"model/{mpnn_kind} seed {seed}"
    return SuiteResult("reduction", worst, 1e-12, checks, detail)


# ── equivariance ──────────────────────────────────────────────────────────────

def equivariance_error(kind: str, seed: int) -> float:
    rng = np.random.default_rng(seed)
    d = 4
    n = int(rng.integers(2, 17))
    g = random_graph(rng, n, 0.3, d, edge_dim=d if kind == "gatedgcn" else 0)
    perm = rng.permutation(n)
    gp = g.permuted(perm)

    if kind == "model":
        cfg = ModelConfig(num_layers=2, hidden=d, input_dim=d, heads=2, task="graph-class",
                          num_classes=2, seed=seed)
        model = GraphModel(cfg).eval()
        a, b = model(g), model(gp)
        node_err = np.max(np.abs(b.node_embeddings.data[perm] - a.node_embeddings.data))
        return float(max(node_err, np.max(np.abs(b.logits.data - a.logits.data))))

    layer = build_layer(kind, d, rng, use_diff=True)
    out = run_layer(kind, layer, g, Tensor(g.x), layer_inputs(kind, g))
    out_p = run_layer(kind, layer, gp, Tensor(gp.x), layer_inputs(kind, gp))
    return float(np.max(np.abs(out_p.data[perm] - out.data)))


def suite_equivariance(graphs: int = 50) -> SuiteResult:
    worst, detail, checks = 0.0, "", 0
    for kind in LAYER_KINDS + ("model",):
        for seed in range(graphs):
            err = equivariance_error(kind, seed)
            checks += 1
            if err > worst:
                worst, detail = err, f"{kind} seed {seed}"
    return SuiteResult("equivariance", worst, 1e-9, checks, detail)


# ── attention ─────────────────────────────────────────────────────────────────

def attention_errors(seed: int) -> tuple[float, bool, bool]:
    """(max row-sum error, other graph bit-identical, finite at norm 1e3)."""
    rng = np.random.default_rng(seed)
    d = 4
    batch = batch_graphs([random_graph(rng, 5, 0.4, d), random_graph(rng, 4, 0.4, d)])
    mha = MultiHeadAttention(d, 2, rng, use_diff=True)
    H = Tensor(batch.graph.x)
    mask = segment_mask(batch.graph_index)

    row_err = 0.0
    for head in mha.heads:
        A, _ = head.weights(H, mask)
        row_err = max(row_err, float(np.max(np.abs(A.data.sum(axis=1) - 1.0))))

    before = mha(H, batch.graph_index).data
    shaken = batch.graph.x.copy()
    shaken[:5] += rng.standard_normal((5, d))
    after = mha(Tensor(shaken), batch.graph_index).data
    isolated = bool(np.array_equal(before[5:], after[5:]))

    big = batch.graph.x / np.linalg.norm(batch.graph.x) * 1e3
    finite = bool(np.all(np.isfinite(mha(Tensor(big), batch.graph_index).data)))
    return row_err, isolated, finite


def suite_attention(seeds: int = 20) -> SuiteResult:
    worst, detail = 0.0, ""
    for seed in range(seeds):
        row_err, isolated, finite = attention_errors(seed)
        if not isolated or not finite:
            return SuiteResult("attention", math.inf, 1e-12, seed + 1,
                               f"seed {seed}: isolated={isolated} finite={finite}")
        if row_err > worst:
            worst, detail = row_err, f"seed {seed}"
    return SuiteResult("attention", worst, 1e-12, seeds, detail)


# ── metrics ───────────────────────────────────────────────────────────────────

def brute_force_rank(positive: float, candidates) -> int:
    """Place the positive after every candidate it ties with, then count."""
    ordered = sorted([(-float(c), 0) for c in candidates] + [(-positive, 1)])
    return ordered.index((-positive, 1)) + 1


def brute_force_ap(scores, targets) -> float:
    total_pos = sum(targets)
    ap, prev_recall = 0.0, 0.0
    for threshold in sorted(set(scores), reverse=True):
        chosen = [t for s, t in zip(scores, targets) if s >= threshold]
        tp = sum(chosen)
        recall = tp / total_pos
        ap += (recall - prev_recall) * (tp / len(chosen))
        prev_recall = recall
    return ap


def brute_force_macro_f1(pred, truth, num_classes: int) -> float:
    scores = []
    for c in range(num_classes):
        tp = sum(1 for p, t in zip(pred, truth) if p == c and t == c)
        fp = sum(1 for p, t in zip(pred, truth) if p == c and t != c)
        fn = sum(1 for p, t in zip(pred, truth) if p != c and t == c)
        scores.append(0.0 if tp == 0 else 2 * tp / (2 * tp + fp + fn))
    return sum(scores) / num_classes


LINK_FIXTURE = [
    # (positive score, candidate scores); the second and third queries tie
    (0.9, [0.1, 0.5, 0.95]),
    (0.4, [0.4, 0.2]),
    (0.7, [0.7, 0.7, 0.1, 0.8]),
    (0.3, [0.1]),
    (0.6, [0.2, 0.3]),
    (0.5, [0.9, 0.8, 0.7, 0.6]),
    (0.2, [0.1, 0.1, 0.1]),
    (0.8, [0.85, 0.9]),
    (0.1, [0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99, 0.05]),
    (0.55, [0.55]),
]


def suite_metrics() -> SuiteResult:
    errors = []
    errors.append(abs(ranking_metrics([1, 2, 4])["mrr"] - (1 + 0.5 + 0.25) / 3))

    ranks = [pessimistic_rank(p, np.array(c)) for p, c in LINK_FIXTURE]
    oracle = [brute_force_rank(p, c) for p, c in LINK_FIXTURE]
    errors.append(float(max(abs(a - b) for a, b in zip(ranks, oracle))))
    got = ranking_metrics(ranks)
    errors.append(abs(got["mrr"] - sum(1.0 / r for r in oracle) / len(oracle)))
    for k in (1, 3, 10):
        errors.append(abs(got[f"hits@{k}"] - sum(r <= k for r in oracle) / len(oracle)))

    logits = np.array([[2.0, 1.0, 0.0], [0.0, 0.0, 0.0], [0.1, 3.0, 0.2],
                       [1.0, 1.0, 2.0], [0.5, 0.4, 0.3], [0.0, 2.0, 1.0]])
    truth = np.array([0, 1, 1, 2, 2, 0])
    pred = [int(np.argmax(row)) for row in logits]
    errors.append(abs(accuracy(logits, truth) - sum(p == t for p, t in zip(pred, truth)) / len(truth)))
    errors.append(abs(macro_f1(logits, truth, 4) - brute_force_macro_f1(pred, truth, 4)))

    scores = np.array([[0.9, 0.2], [0.8, 0.7], [0.3, 0.6], [0.1, 0.4], [0.5, 0.05]])
    targets = np.array([[1, 0], [0, 1], [1, 0], [0, 1], [1, 0]])
    per_label = [brute_force_ap(list(scores[:, j]), list(targets[:, j])) for j in range(2)]
    errors.append(abs(average_precision(scores, targets) - sum(per_label) / 2))
    return SuiteResult("metrics", max(errors), 1e-12, len(errors))


# ── optimizer ─────────────────────────────────────────────────────────────────

def adamw_reference_trace(x0: float = 1.0, lr: float = 0.1, steps: int = 3,
                          b1: float = 0.9, b2: float = 0.999, eps: float = 1e-8) -> list[float]:
    """Scalar AdamW on f(x) = x², written out step by step."""
    x, m, v, trace = x0, 0.0, 0.0, []
    for t in range(1, steps + 1):
        g = 2.0 * x
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        x = x - lr * (m_hat / (math.sqrt(v_hat) + eps))
        trace.append(x)
    return trace


def adamw_engine_trace(x0: float = 1.0, lr: float = 0.1, steps: int = 3) -> list[float]:
    x = parameter(np.array([x0]), name="x")
    opt = AdamW([("x", x)], OptimizerConfig(base_lr=lr, weight_decay=0.0))
    trace = []
    for _ in range(steps):
        x.grad = None
        with Tape():
            value = tsum(x * x)
        backward(value)
        opt.step(lr)
        trace.append(float(x.data[0]))
    return trace


def suite_optimizer() -> SuiteResult:
    ref, got = adamw_reference_trace(), adamw_engine_trace()
    errors = [max(abs(a - b) for a, b in zip(ref, got))]
    cfg = OptimizerConfig(base_lr=1e-3, warmup_steps=10, total_steps=110)
    errors.append(abs(lr_at(0, cfg) - 0.0))
    errors.append(abs(lr_at(10, cfg) - 1e-3))
    errors.append(abs(lr_at(110, cfg) - 0.0))
    errors.append(abs(lr_at(60, cfg) - 5e-4))
    return SuiteResult("optimizer", max(errors), 1e-12, len(errors))


# ── entry point ───────────────────────────────────────────────────────────────

_RUNNERS: dict[str, Callable[[], SuiteResult]] = {
    "gradients": suite_gradients,
    "reduction": suite_reduction,
    "equivariance": suite_equivariance,
    "attention": suite_attention,
    "metrics": suite_metrics,
    "optimizer": suite_optimizer,
}


def cmd_verify(suites: list[str] | None = None, mutate: bool = False) -> VerifyReport:
    names = list(suites) if suites else list(SUITES)
    unknown = [s for s in names if s not in _RUNNERS]
    if unknown:
        raise UsageError(f"unknown suite(s) {unknown}; valid suites: {', '.join(SUITES)}")

    hook = fault_injection(DIFF_ENC_OP, lambda g: -g) if mutate else contextlib.nullcontext()
    report = VerifyReport()
    with hook:
        for name in names:
            start = time.perf_counter()
            result = _RUNNERS[name]()
            result.seconds = time.perf_counter() - start
            report.suites.append(result)
            log = logger.info if result.passed else logger.error
            log("verify %s: max error %.3e (tol %.0e)", name, result.max_error, result.tolerance)
    return report
