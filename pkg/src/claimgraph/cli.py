"""Command-line entry point.

Subcommands: ingest, rank, build-graphs, features, train, eval, predict,
ablate, gradcheck. Exit codes: 0 success, 2 configuration error, 3 data
error, 4 numeric error. Every command echoes its resolved configuration
(seed included) before doing work, and all randomness flows from --seed.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .autodiff import NonFiniteError, grad_check
from .features import featurize, save_featured
from .ingest import (
    ConlluError,
    EmbeddingFormatError,
    EmbeddingTable,
    ManifestError,
    fallback_embed,
    load_conllu_file,
    load_embedding_table,
    load_manifest,
)
from .kg import build_graph, graph_from_json, graph_to_json
from .model import (
    EmptyGraphError,
    ModelConfig,
    StagedPairScorer,
    count_parameters,
    forward_pair,
    init_params,
    load_checkpoint,
)
from .ranking import EvidenceCandidate, concatenate_evidence, rank_evidence
from .synthetic import gradcheck_pair, synthetic_dataset
from .training import (
    Sample,
    TrainConfig,
    ablation_csv,
    ablation_table,
    evaluate,
    run_ablation,
    train,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

CONFIG_KEYS = {
    "manifest", "graphs", "ranking", "out", "table", "image_table",
    "table_384", "table_768", "k", "dim", "epochs", "batch_size",
    "learning_rate", "conv_variant", "edge_features", "unweighted",
    "seed", "jobs", "synthetic", "threshold", "checkpoint", "claim",
    "evidence", "text_dim", "h", "max_coords",
}


class ConfigError(ValueError):
    pass


class DataError(ValueError):
    pass


def _load_config_file(path: str) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        obj = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: config must be one flat JSON object")
    unknown = sorted(set(obj) - CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"{path}: unknown config keys: {', '.join(unknown)}")
    return obj


def _resolve(args: argparse.Namespace) -> dict:
    """Config file values first, command-line flags win."""
    merged = {}
    if getattr(args, "config", None):
        merged.update(_load_config_file(args.config))
    for key, value in vars(args).items():
        if key in ("command", "config", "func"):
            continue
        if value is not None:
            merged[key] = value
    return merged


def _echo(command: str, cfg: dict) -> None:
    shown = {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(cfg.items())}
    print(f"[{command}] config: {json.dumps(shown)}")
    print(f"[{command}] seed={cfg.get('seed', 0)}")


def _require(cfg: dict, key: str) -> object:
    if cfg.get(key) is None:
        raise ConfigError(f"missing required option --{key.replace('_', '-')}")
    return cfg[key]


def _check_path(value: str, what: str) -> Path:
    p = Path(value)
    if not p.exists():
        raise DataError(f"{what} not found: {value}")
    return p


def _doc_embedding(doc, table: EmbeddingTable | None, key: str, dim: int) -> np.ndarray:
    if table is not None:
        vec = table.get(key)
        if vec is not None:
            return np.asarray(vec, dtype=np.float64)
    return fallback_embed(doc.text() if doc is not None else key, dim)


def _load_samples(cfg: dict) -> list[Sample]:
    if cfg.get("synthetic"):
        return synthetic_dataset(int(cfg["synthetic"]), seed=int(cfg.get("seed", 0)))
    manifest = load_manifest(_check_path(str(_require(cfg, "manifest")), "manifest"))
    graphs_dir = _check_path(str(_require(cfg, "graphs")), "graphs directory")
    samples = []
    missing = []
    for rec in manifest.records:
        claim_p = graphs_dir / f"{rec.sample_id}.claim.json"
        ev_p = graphs_dir / f"{rec.sample_id}.evidence.json"
        if not claim_p.is_file() or not ev_p.is_file():
            missing.append(rec.sample_id)
            continue
        samples.append(
            Sample(
                sample_id=rec.sample_id,
                evidence=graph_from_json(ev_p.read_text(encoding="utf-8")),
                claim=graph_from_json(claim_p.read_text(encoding="utf-8")),
                label=rec.label,
            )
        )
    if missing:
        raise DataError(f"graph files missing for samples: {', '.join(missing)}")
    if not samples:
        raise DataError("no samples to work with")
    return samples


def _train_config(cfg: dict) -> TrainConfig:
    return TrainConfig(
        seed=int(cfg.get("seed", 0)),
        learning_rate=float(cfg.get("learning_rate", 3e-4)),
        batch_size=int(cfg.get("batch_size", 64)),
        epochs=int(cfg.get("epochs", 30)),
        conv_variant=str(cfg.get("conv_variant", "transformer")),
        embedding_dim=int(cfg.get("dim", 768)),
        use_edge_features=bool(cfg.get("edge_features", False)),
        weighted_node_embeddings=not bool(cfg.get("unweighted", False)),
    )


def _label_table(cfg: dict) -> EmbeddingTable | None:
    if cfg.get("table"):
        return load_embedding_table(_check_path(str(cfg["table"]), "embedding table"))
    return None


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_ingest(cfg: dict) -> int:
    manifest = load_manifest(_check_path(str(_require(cfg, "manifest")), "manifest"))
    paths = []
    for rec in manifest.records:
        paths.append(manifest.resolve(rec.claim_doc))
        paths.extend(manifest.resolve(e) for e in rec.evidence_docs)
    jobs = max(1, int(cfg.get("jobs", 1)))
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        docs = list(pool.map(load_conllu_file, paths))
    sentences = sum(len(d.sentences) for d in docs)
    tokens = sum(d.n_tokens() for d in docs)
    spans = sum(len(d.entity_spans) for d in docs)
    print(
        f"[ingest] samples={len(manifest.records)} documents={len(docs)} "
        f"sentences={sentences} tokens={tokens} entity_spans={spans}"
    )
    return EXIT_OK


def cmd_rank(cfg: dict) -> int:
    manifest = load_manifest(_check_path(str(_require(cfg, "manifest")), "manifest"))
    out_path = Path(str(_require(cfg, "out")))
    k = int(cfg.get("k", 7))
    dim = int(cfg.get("dim", 768))
    text_table = _label_table(cfg)
    image_table = None
    if cfg.get("image_table"):
        image_table = load_embedding_table(_check_path(str(cfg["image_table"]), "image table"))
    lines = []
    for rec in manifest.records:
        claim_doc = load_conllu_file(manifest.resolve(rec.claim_doc))
        if image_table is not None and rec.image_key and rec.image_key in image_table:
            image_emb = np.asarray(image_table.get(rec.image_key), dtype=np.float64)
        else:
            # no image embedding available: anchor ranking on the claim text
            image_emb = fallback_embed(claim_doc.text(), dim)
        candidates = []
        for ref in rec.evidence_docs:
            doc = load_conllu_file(manifest.resolve(ref))
            emb = _doc_embedding(doc, text_table, ref, image_emb.shape[0] if image_table else dim)
            candidates.append(EvidenceCandidate(doc_id=ref, embedding=emb))
        ranked = rank_evidence(image_emb, candidates, k=k)
        lines.append(
            json.dumps(
                {
                    "id": rec.sample_id,
                    "doc_ids": list(ranked.doc_ids),
                    "similarities": [round(s, 10) for s in ranked.similarities],
                }
            )
        )
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"[rank] samples={len(manifest.records)} k={k} out={out_path}")
    return EXIT_OK


def cmd_build_graphs(cfg: dict) -> int:
    manifest = load_manifest(_check_path(str(_require(cfg, "manifest")), "manifest"))
    out_dir = Path(str(_require(cfg, "out")))
    out_dir.mkdir(parents=True, exist_ok=True)
    ranking: dict[str, list[str]] = {}
    if cfg.get("ranking"):
        for line in _check_path(str(cfg["ranking"]), "ranking file").read_text().splitlines():
            if line.strip():
                obj = json.loads(line)
                ranking[str(obj["id"])] = list(obj["doc_ids"])
    jobs = max(1, int(cfg.get("jobs", 1)))

    def build_one(rec):
        claim_doc = load_conllu_file(manifest.resolve(rec.claim_doc))
        order = ranking.get(rec.sample_id, list(rec.evidence_docs))
        ev_docs = [load_conllu_file(manifest.resolve(ref)) for ref in order]
        claim_graph = build_graph(claim_doc)
        evidence_graph = build_graph(concatenate_evidence(ev_docs))
        return rec.sample_id, claim_graph, evidence_graph

    with ThreadPoolExecutor(max_workers=jobs) as pool:
        built = list(pool.map(build_one, manifest.records))
    nodes = edges = skipped = 0
    for sample_id, claim_graph, evidence_graph in built:
        if claim_graph.is_empty() or evidence_graph.is_empty():
            skipped += 1
        (out_dir / f"{sample_id}.claim.json").write_text(graph_to_json(claim_graph), "utf-8")
        (out_dir / f"{sample_id}.evidence.json").write_text(graph_to_json(evidence_graph), "utf-8")
        nodes += len(claim_graph.nodes) + len(evidence_graph.nodes)
        edges += len(claim_graph.edges) + len(evidence_graph.edges)
    print(f"[build-graphs] samples={len(built)} skipped={skipped} nodes={nodes} edges={edges}")
    return EXIT_OK


def cmd_features(cfg: dict) -> int:
    graphs_dir = _check_path(str(_require(cfg, "graphs")), "graphs directory")
    out_dir = Path(str(_require(cfg, "out")))
    dim = int(cfg.get("dim", 768))
    table = _label_table(cfg)
    with_edges = bool(cfg.get("edge_features", False))
    graph_files = sorted(graphs_dir.glob("*.json"))
    if not graph_files:
        raise DataError(f"no graph JSON files under {graphs_dir}")
    done = skipped = 0
    for gf in graph_files:
        graph = graph_from_json(gf.read_text(encoding="utf-8"))
        if graph.is_empty():
            skipped += 1
            continue
        fg = featurize(graph, dim, table, with_edges)
        save_featured(fg, out_dir / gf.name.replace(".json", ""))
        done += 1
    print(f"[features] graphs={done} skipped={skipped} dim={dim} edge_features={with_edges}")
    return EXIT_OK


def cmd_train(cfg: dict) -> int:
    out_dir = Path(str(_require(cfg, "out")))
    samples = _load_samples(cfg)
    config = _train_config(cfg)
    result = train(config, samples, table=_label_table(cfg), out_dir=out_dir, verbose=True)
    best = result.best_metrics
    print(
        f"[train] epochs={config.epochs} skipped={result.skipped} "
        f"best_epoch={result.best_epoch} "
        f"best_test_acc={best.accuracy if best else None} "
        f"train_acc={result.train_accuracy:.4f} "
        f"params={count_parameters(result.params)} out={out_dir}"
    )
    return EXIT_OK


def cmd_eval(cfg: dict) -> int:
    stem = str(_require(cfg, "checkpoint"))
    _check_path(stem + ".json", "checkpoint manifest")
    params, _ = load_checkpoint(stem)
    samples = _load_samples(cfg)
    try:
        metrics = evaluate(
            params, samples, table=_label_table(cfg), threshold=float(cfg.get("threshold", 0.5))
        )
    except ValueError as exc:
        raise DataError(str(exc)) from None
    print(json.dumps(metrics.to_dict()))
    return EXIT_OK


def cmd_predict(cfg: dict) -> int:
    stem = str(_require(cfg, "checkpoint"))
    _check_path(stem + ".json", "checkpoint manifest")
    params, _ = load_checkpoint(stem)
    claim_graph = graph_from_json(_check_path(str(_require(cfg, "claim")), "claim graph").read_text())
    ev_graph = graph_from_json(
        _check_path(str(_require(cfg, "evidence")), "evidence graph").read_text()
    )
    if claim_graph.is_empty() or ev_graph.is_empty():
        raise DataError("cannot score a sample with an empty graph")
    table = _label_table(cfg)
    dim = params.config.text_dim
    use_ef = params.config.use_edge_features
    score = forward_pair(
        featurize(ev_graph, dim, table, use_ef),
        featurize(claim_graph, dim, table, use_ef),
        params,
    )
    print(f"{float(score.data.reshape(-1)[0]):.6f}")
    return EXIT_OK


def cmd_ablate(cfg: dict) -> int:
    out_dir = Path(str(_require(cfg, "out")))
    out_dir.mkdir(parents=True, exist_ok=True)
    samples = _load_samples(cfg)
    config = _train_config(cfg)
    tables = {}
    for key, dim in (("table_384", 384), ("table_768", 768)):
        if cfg.get(key):
            tables[dim] = load_embedding_table(_check_path(str(cfg[key]), f"{dim}-dim table"))
    rows = run_ablation(samples, config, tables=tables or None, verbose=True)
    (out_dir / "ablation.csv").write_text(ablation_csv(rows), encoding="utf-8")
    (out_dir / "ablation.txt").write_text(ablation_table(rows), encoding="utf-8")
    print(ablation_table(rows), end="")
    print(f"[ablate] configurations={len(rows)} out={out_dir}")
    return EXIT_OK


def cmd_gradcheck(cfg: dict) -> int:
    seed = int(cfg.get("seed", 0))
    text_dim = int(cfg.get("text_dim", 768))
    threshold = float(cfg.get("threshold", 1e-4))
    # step sized for the float64 noise floor of a ~100-op forward: small enough
    # that truncation stays orders below the threshold, large enough that
    # roundoff in the loss does not swamp near-zero gradient coordinates
    h = float(cfg.get("h", 2e-4))
    max_coords = int(cfg.get("max_coords", 2000))
    config = ModelConfig(text_dim=text_dim, dtype="float64")
    params = init_params(config, seed=seed, zero_head=False)
    evidence_fg, claim_fg = gradcheck_pair(text_dim)

    def loss_fn(_params):
        return forward_pair(evidence_fg, claim_fg, params)

    staged = StagedPairScorer(evidence_fg, claim_fg, params)
    direct = float(loss_fn(None).data.reshape(-1)[0])
    if abs(staged.refresh() - direct) > 1e-12:
        raise NonFiniteError("staged evaluator disagrees with the direct forward")
    stage_of = staged.stage_of()

    start = time.perf_counter()
    err = grad_check(
        loss_fn,
        params.trainable(),
        h=h,
        max_coords=max_coords,
        seed=seed,
        probe_eval=lambda i: staged.eval_from(stage_of[i]),
    )
    elapsed = time.perf_counter() - start
    print(
        f"[gradcheck] max_rel_error={err:.3e} threshold={threshold:.0e} h={h:g} "
        f"params={count_parameters(params)} seconds={elapsed:.1f}"
    )
    if err >= threshold:
        print("[gradcheck] FAILED", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="claimgraph",
        description="Evidence/claim graph pipeline: parse, rank, graph, train, score.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="flat JSON config file; flags override it")
        p.add_argument("--seed", type=int, help="seed for everything random (default 0)")
        p.add_argument("--jobs", type=int, help="worker threads for file-level parallelism")

    p = sub.add_parser("ingest", help="parse and validate every document in a manifest")
    common(p)
    p.add_argument("--manifest")

    p = sub.add_parser("rank", help="rank evidence documents against the claim image")
    common(p)
    p.add_argument("--manifest")
    p.add_argument("--out")
    p.add_argument("--table", help="text-embedding table (EGTB) keyed by doc path")
    p.add_argument("--image-table", dest="image_table", help="image-embedding table (EGTB)")
    p.add_argument("--k", type=int, help="evidence documents to keep (default 7)")
    p.add_argument("--dim", type=int, help="fallback embedding dim (default 768)")

    p = sub.add_parser("build-graphs", help="construct claim and evidence graphs per sample")
    common(p)
    p.add_argument("--manifest")
    p.add_argument("--ranking", help="JSONL from `rank`; fixes evidence order/subset")
    p.add_argument("--out")

    p = sub.add_parser("features", help="attach embeddings and structural features to graphs")
    common(p)
    p.add_argument("--graphs")
    p.add_argument("--out")
    p.add_argument("--dim", type=int)
    p.add_argument("--table")
    p.add_argument("--edge-features", dest="edge_features", action="store_const", const=True)

    def train_like(p: argparse.ArgumentParser) -> None:
        common(p)
        p.add_argument("--manifest")
        p.add_argument("--graphs")
        p.add_argument("--synthetic", type=int, help="use N generated samples instead of files")
        p.add_argument("--table")
        p.add_argument("--epochs", type=int)
        p.add_argument("--batch-size", dest="batch_size", type=int)
        p.add_argument("--learning-rate", dest="learning_rate", type=float)
        p.add_argument("--conv", dest="conv_variant", choices=["gat", "gatv2", "transformer"])
        p.add_argument("--dim", type=int, choices=[384, 768])
        p.add_argument("--edge-features", dest="edge_features", action="store_const", const=True)
        p.add_argument("--unweighted", action="store_const", const=True)

    p = sub.add_parser("train", help="train the classifier")
    train_like(p)
    p.add_argument("--out")

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--manifest")
    p.add_argument("--graphs")
    p.add_argument("--synthetic", type=int)
    p.add_argument("--table")
    p.add_argument("--threshold", type=float)

    p = sub.add_parser("predict", help="score one claim/evidence graph pair")
    common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--claim")
    p.add_argument("--evidence")
    p.add_argument("--table")

    p = sub.add_parser("ablate", help="run the ablation and convolution sweeps")
    train_like(p)
    p.add_argument("--out")
    p.add_argument("--table-384", dest="table_384")
    p.add_argument("--table-768", dest="table_768")

    p = sub.add_parser("gradcheck", help="finite-difference check of the full model")
    common(p)
    p.add_argument("--text-dim", dest="text_dim", type=int, choices=[384, 768])
    p.add_argument("--threshold", type=float)
    p.add_argument("--h", type=float, help="finite-difference step (default 2e-4)")
    p.add_argument("--max-coords", dest="max_coords", type=int,
                   help="cap on sampled coordinates (default 2000)")

    return parser


COMMANDS = {
    "ingest": cmd_ingest,
    "rank": cmd_rank,
    "build-graphs": cmd_build_graphs,
    "features": cmd_features,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "ablate": cmd_ablate,
    "gradcheck": cmd_gradcheck,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _resolve(args)
        _echo(args.command, cfg)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, ManifestError, ConlluError, EmbeddingFormatError, EmptyGraphError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NonFiniteError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        # contract violations surfaced by the modules (bad dims, empty sets, ...)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
