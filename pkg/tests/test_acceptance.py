"""Acceptance criteria, one test per criterion, one [PASS]/[FAIL] line each.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines live.
CLI-level criteria shell out to the real command with the repo's sources on
PYTHONPATH, so they hold for a fresh checkout without installation.
"""

import json
import os
import re
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from op_checks import OP_CASES, worst_error
from test_features import graph_of, oracle_pagerank, random_digraph
from test_kg import DATA as KG_DATA
from test_kg import EXPECTED as KG_EXPECTED

from claimgraph.features import pagerank, reverse_graph, reverse_pagerank
from claimgraph.ingest import load_conllu_file
from claimgraph.kg import KnowledgeGraph, build_graph, graph_to_json
from claimgraph.model import (
    ForwardDiagnostics,
    ModelConfig,
    count_parameters,
    init_params,
    score_pair,
    forward_pair,
)
from claimgraph.synthetic import synthetic_dataset
from claimgraph.training import TrainConfig, run_ablation, train, featurize_samples

ROOT = Path(__file__).resolve().parents[1]
PARAM_COUNT_REFERENCE = 10_724_391


def report(name: str, ok: bool, detail: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


def run_cli(args, env_extra=None, timeout=900):
    env = dict(os.environ)
    env["PYTHONPATH"] = str(ROOT / "src")
    if env_extra:
        env.update(env_extra)
    return subprocess.run(
        [sys.executable, "-m", "claimgraph.cli", *args],
        capture_output=True,
        text=True,
        env=env,
        timeout=timeout,
        cwd=ROOT,
    )


def test_gradient_integrity_full_model():
    """gradcheck on the full default model: error < 1e-4, < 60 s on one core."""
    single_core = {
        "OMP_NUM_THREADS": "1",
        "OPENBLAS_NUM_THREADS": "1",
        "MKL_NUM_THREADS": "1",
        "NUMEXPR_NUM_THREADS": "1",
    }
    proc = run_cli(["gradcheck", "--seed", "0"], env_extra=single_core)
    match = re.search(r"max_rel_error=(\S+) .*seconds=(\S+)", proc.stdout)
    ok = proc.returncode == 0 and match is not None
    err = float(match.group(1)) if match else float("nan")
    secs = float(match.group(2)) if match else float("nan")
    ok = ok and err < 1e-4 and secs < 60.0
    report(
        "gradient-integrity",
        ok,
        f"max_rel_error={err:.3e} (< 1e-4), runtime={secs:.1f}s (< 60), exit={proc.returncode}",
    )


def test_autodiff_unit_suite():
    """Every op passes isolated finite-difference checks < 1e-6, 25 reps."""
    worst = {}
    for name, build in sorted(OP_CASES.items()):
        worst[name] = worst_error(build, reps=25)
    peak = max(worst.values())
    ok = peak < 1e-6
    worst_op = max(worst, key=worst.get)
    report(
        "autodiff-unit-suite",
        ok,
        f"{len(worst)} ops x 25 reps, worst {worst_op}={peak:.3e} (< 1e-6)",
    )


def test_pagerank_properties():
    """50 random digraphs: sums, oracle agreement, exact reverse identity."""
    rng = np.random.default_rng(2024)
    max_sum_err = 0.0
    max_oracle_err = 0.0
    for _ in range(50):
        n, pairs = random_digraph(rng, max_nodes=30)
        g = graph_of(n, pairs)
        pr = pagerank(g)
        max_sum_err = max(max_sum_err, abs(float(pr.sum()) - 1.0))
        max_oracle_err = max(
            max_oracle_err, float(np.abs(pr - oracle_pagerank(n, pairs)).max())
        )
        assert reverse_pagerank(g).tobytes() == pagerank(reverse_graph(g)).tobytes()
    ok = max_sum_err < 1e-9 and max_oracle_err < 1e-8
    report(
        "pagerank-properties",
        ok,
        f"50 graphs: |sum-1|<= {max_sum_err:.2e} (< 1e-9), "
        f"oracle gap <= {max_oracle_err:.2e} (< 1e-8), reverse identity exact",
    )


def test_graph_construction_fixtures():
    """Hand-annotated corpus reproduces the hand-traced graphs byte-for-byte."""
    assert len(KG_EXPECTED) >= 12
    mismatches = []
    for name, (exp_nodes, exp_edges) in sorted(KG_EXPECTED.items()):
        path = KG_DATA / f"{name}.conllu"
        graph = build_graph(load_conllu_file(path))
        nodes = [(n.node_id, n.label, n.type.value) for n in graph.nodes]
        edges = [(e.src, e.dst, e.type.value, e.rule) for e in graph.edges]
        if nodes != exp_nodes or edges != exp_edges:
            mismatches.append(name)
        if graph_to_json(build_graph(load_conllu_file(path))).encode() != graph_to_json(
            graph
        ).encode():
            mismatches.append(name + " (rerun bytes)")
    ok = not mismatches
    report(
        "graph-construction-fixtures",
        ok,
        f"{len(KG_EXPECTED)} hand-traced sentences, byte-identical reruns"
        + (f"; mismatches: {mismatches}" if mismatches else ""),
    )


def test_attention_normalization_and_permutation():
    """Softmax rows sum to 1 +- 1e-6 in all variants; node order is irrelevant."""
    config_seed = 99
    samples = synthetic_dataset(40, seed=31)[:20]
    worst_row = 0.0
    worst_perm = 0.0
    rng = np.random.default_rng(5)
    for variant in ("gat", "gatv2", "transformer"):
        cfg = ModelConfig(text_dim=768, conv_variant=variant, dtype="float64")
        params = init_params(cfg, seed=config_seed, zero_head=False)
        tc = TrainConfig(seed=0, embedding_dim=768, dtype="float64")
        featured, _ = featurize_samples(samples, tc)
        for fs in featured:
            diag = ForwardDiagnostics()
            base = float(forward_pair(fs.evidence, fs.claim, params, diag).data.reshape(-1)[0])
            for _, sums in diag.softmax_group_sums:
                worst_row = max(worst_row, float(np.abs(sums - 1.0).max()))
            # permute both graphs' node order consistently
            for fg in (fs.evidence, fs.claim):
                perm = rng.permutation(fg.n_nodes)
                fg.graph = KnowledgeGraph(
                    nodes=tuple(fg.graph.nodes[p] for p in perm), edges=fg.graph.edges
                )
                fg.label_embeddings = fg.label_embeddings[perm]
                fg.struct = fg.struct[perm]
            permuted = score_pair(fs.evidence, fs.claim, params)
            worst_perm = max(worst_perm, abs(permuted - base))
    ok = worst_row < 1e-6 and worst_perm < 1e-6
    report(
        "attention-normalization",
        ok,
        f"20 samples x 3 variants + cross: row-sum dev {worst_row:.2e} (< 1e-6), "
        f"permutation dev {worst_perm:.2e} (< 1e-6)",
    )


def test_training_smoke():
    """Synthetic separable dataset: >= 95% train and >= 90% test in <= 50 epochs."""
    samples = synthetic_dataset(200, seed=7)
    config = TrainConfig(seed=4, epochs=50)
    assert config.learning_rate == 3e-4 and config.batch_size == 64
    start = time.perf_counter()
    result = train(config, samples)
    elapsed = time.perf_counter() - start
    train_acc = result.train_accuracy
    test_acc = result.best_metrics.accuracy
    ok = train_acc >= 0.95 and test_acc >= 0.90 and elapsed < 600.0
    report(
        "training-smoke",
        ok,
        f"train_acc={train_acc:.3f} (>= 0.95), test_acc={test_acc:.3f} (>= 0.90), "
        f"epochs<=50, runtime={elapsed:.0f}s (< 600)",
    )


def test_ablation_harness(tmp_path):
    """ablate emits all configurations; the full row equals a standalone run."""
    samples = synthetic_dataset(60, seed=4)
    base = TrainConfig(seed=4, epochs=2)
    rows = run_ablation(samples, base)
    names = [r.name for r in rows]
    standalone = train(base, samples)
    exact = (
        rows[0].accuracy == standalone.best_metrics.accuracy
        and rows[0].f1 == standalone.best_metrics.f1
    )

    out = tmp_path / "ab"
    proc = run_cli(
        ["ablate", "--synthetic", "60", "--seed", "4", "--epochs", "2", "--out", str(out)]
    )
    csv_lines = (out / "ablation.csv").read_text().splitlines() if proc.returncode == 0 else []
    expected_names = [
        "full",
        "edge_features",
        "unweighted_node_embeddings",
        "embeddings_384",
        "conv_gat",
        "conv_gatv2",
        "conv_transformer",
    ]
    csv_names = [line.split(",")[0] for line in csv_lines[1:]]
    ok = names == expected_names and exact and proc.returncode == 0 and csv_names == expected_names
    report(
        "ablation-harness",
        ok,
        f"rows={names}, full row == standalone: {exact}, CLI CSV rows: {csv_names}",
    )


def test_hyperparameter_conformance():
    """Defaults match the published configuration; count delta is reported."""
    config = ModelConfig()
    tc = TrainConfig(seed=0)
    params = init_params(config, seed=0)
    count = count_parameters(params)
    delta = count - PARAM_COUNT_REFERENCE
    conv_layers = 2  # conv1 and conv2 in the forward stack
    ok = (
        conv_layers == 2
        and config.hidden_dim == 1024
        and config.heads == (4, 2)
        and tc.learning_rate == 3e-4
        and tc.batch_size == 64
        and config.text_dim == 768
    )
    report(
        "hyperparameter-conformance",
        ok,
        f"2 conv layers, hidden 1024, heads (4, 2), lr 3e-4, batch 64; "
        f"parameters={count} vs reference {PARAM_COUNT_REFERENCE} (delta {delta:+d})",
    )


def test_train_determinism(tmp_path):
    """Identical config and seed give byte-identical logs and checkpoints."""
    args = ["train", "--synthetic", "60", "--seed", "13", "--epochs", "3", "--batch-size", "32"]
    runs = []
    for sub in ("a", "b"):
        out = tmp_path / sub
        proc = run_cli([*args, "--out", str(out)])
        assert proc.returncode == 0, proc.stderr
        runs.append(out)
    same_metrics = (runs[0] / "metrics.jsonl").read_bytes() == (runs[1] / "metrics.jsonl").read_bytes()
    same_blob = (runs[0] / "model.bin").read_bytes() == (runs[1] / "model.bin").read_bytes()
    same_manifest = (runs[0] / "model.json").read_bytes() == (runs[1] / "model.json").read_bytes()
    ok = same_metrics and same_blob and same_manifest
    report(
        "train-determinism",
        ok,
        f"metrics.jsonl identical: {same_metrics}, model.bin identical: {same_blob}, "
        f"model.json identical: {same_manifest}",
    )
