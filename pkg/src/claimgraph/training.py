"""Dataset splitting, Adam training, metrics, and ablation sweeps.

Everything downstream of a (config, seed, dataset) triple is deterministic:
splits, initialization, batch order, and therefore every logged number.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .autodiff import Tape, backward, bce_loss
from .features import FeaturedGraph, featurize
from .ingest import EmbeddingTable
from .kg import KnowledgeGraph
from .model import (
    ModelConfig,
    ModelParams,
    count_parameters,
    forward_batch,
    init_params,
    make_batch,
    save_checkpoint,
)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class Sample:
    sample_id: str
    evidence: KnowledgeGraph
    claim: KnowledgeGraph
    label: int


@dataclass
class TrainConfig:
    seed: int
    learning_rate: float = 3e-4
    batch_size: int = 64
    epochs: int = 30
    conv_variant: str = "transformer"
    embedding_dim: int = 768
    use_edge_features: bool = False
    weighted_node_embeddings: bool = True
    split_ratio: tuple[int, int] = (85, 15)
    dtype: str = "float32"

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            text_dim=self.embedding_dim,
            conv_variant=self.conv_variant,
            use_edge_features=self.use_edge_features,
            weighted_embeddings=self.weighted_node_embeddings,
            dtype=self.dtype,
        )

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "conv_variant": self.conv_variant,
            "embedding_dim": self.embedding_dim,
            "use_edge_features": self.use_edge_features,
            "weighted_node_embeddings": self.weighted_node_embeddings,
            "split_ratio": list(self.split_ratio),
            "dtype": self.dtype,
        }


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    f1: float
    tp: int
    fp: int
    tn: int
    fn: int
    n: int

    @staticmethod
    def from_counts(tp: int, fp: int, tn: int, fn: int) -> "Metrics":
        n = tp + fp + tn + fn
        if n == 0:
            raise ValueError("metrics over zero samples")
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        return Metrics(accuracy=(tp + tn) / n, f1=f1, tp=tp, fp=fp, tn=tn, fn=fn, n=n)

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "f1": self.f1,
            "tp": self.tp,
            "fp": self.fp,
            "tn": self.tn,
            "fn": self.fn,
            "n": self.n,
        }


def split_dataset(
    samples: list[Sample], ratio: tuple[int, int] = (85, 15), seed: int = 0
) -> tuple[list[Sample], list[Sample]]:
    """Deterministic, label-stratified split.

    Test counts per class follow largest-remainder apportionment of the exact
    quota, so each split preserves class balance within one sample.
    """
    if len(samples) < 2:
        raise ValueError("need at least 2 samples to split")
    r_train, r_test = ratio
    if r_train <= 0 or r_test <= 0:
        raise ValueError(f"both split parts must be positive, got {ratio}")
    by_label: dict[int, list[Sample]] = {0: [], 1: []}
    for s in samples:
        by_label[s.label].append(s)
    if not by_label[0] or not by_label[1]:
        missing = 0 if not by_label[0] else 1
        raise ValueError(f"cannot stratify: class {missing} has zero samples")

    n = len(samples)
    test_total = int(round(n * r_test / (r_train + r_test)))
    test_total = min(max(test_total, 1), n - 1)
    quotas = {lab: len(g) * test_total / n for lab, g in by_label.items()}
    counts = {lab: int(q) for lab, q in quotas.items()}
    leftover = test_total - sum(counts.values())
    for lab in sorted(quotas, key=lambda L: (-(quotas[L] - counts[L]), L)):
        if leftover <= 0:
            break
        counts[lab] += 1
        leftover -= 1

    rng = np.random.default_rng(seed)
    train: list[Sample] = []
    test: list[Sample] = []
    for lab in sorted(by_label):
        group = by_label[lab]
        order = rng.permutation(len(group))
        take = counts[lab]
        test.extend(group[i] for i in order[:take])
        train.extend(group[i] for i in order[take:])
    return train, test


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------


class Adam:
    def __init__(self, tensors, lr: float):
        self.tensors = list(tensors)
        self.lr = lr
        self.m = [np.zeros_like(t.data) for t in self.tensors]
        self.v = [np.zeros_like(t.data) for t in self.tensors]
        self.t = 0

    def zero_grad(self) -> None:
        for t in self.tensors:
            t.grad = None

    def step(self) -> None:
        self.t += 1
        bc1 = 1.0 - ADAM_BETA1**self.t
        bc2 = 1.0 - ADAM_BETA2**self.t
        for i, t in enumerate(self.tensors):
            if t.grad is None:
                continue
            g = t.grad
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * g
            self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * g * g
            m_hat = self.m[i] / bc1
            v_hat = self.v[i] / bc2
            t.data = t.data - (self.lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)).astype(t.data.dtype)


# ---------------------------------------------------------------------------
# Featurization and evaluation over samples
# ---------------------------------------------------------------------------


@dataclass
class FeaturedSample:
    sample_id: str
    evidence: FeaturedGraph
    claim: FeaturedGraph
    label: int


def featurize_samples(
    samples: list[Sample],
    config: TrainConfig,
    table: EmbeddingTable | None = None,
) -> tuple[list[FeaturedSample], int]:
    """Featurize every sample; empty-graph samples are skipped and counted."""
    out: list[FeaturedSample] = []
    skipped = 0
    for s in samples:
        if s.evidence.is_empty() or s.claim.is_empty():
            skipped += 1
            continue
        out.append(
            FeaturedSample(
                sample_id=s.sample_id,
                evidence=featurize(
                    s.evidence, config.embedding_dim, table, config.use_edge_features
                ),
                claim=featurize(s.claim, config.embedding_dim, table, config.use_edge_features),
                label=s.label,
            )
        )
    return out, skipped


def _predict_featured(
    params: ModelParams, featured: list[FeaturedSample], batch_size: int
) -> np.ndarray:
    dtype = params.config.np_dtype()
    preds = []
    for start in range(0, len(featured), batch_size):
        chunk = featured[start : start + batch_size]
        ev = make_batch([c.evidence for c in chunk], dtype=dtype)
        cl = make_batch([c.claim for c in chunk], dtype=dtype)
        preds.append(forward_batch(ev, cl, params).data.reshape(-1))
    return np.concatenate(preds)


def evaluate_featured(
    params: ModelParams,
    featured: list[FeaturedSample],
    threshold: float = 0.5,
    batch_size: int = 64,
) -> Metrics:
    if not featured:
        raise ValueError("evaluation over an empty sample set")
    scores = _predict_featured(params, featured, batch_size)
    labels = np.array([s.label for s in featured])
    pred = scores >= threshold
    tp = int(np.sum(pred & (labels == 1)))
    fp = int(np.sum(pred & (labels == 0)))
    tn = int(np.sum(~pred & (labels == 0)))
    fn = int(np.sum(~pred & (labels == 1)))
    return Metrics.from_counts(tp, fp, tn, fn)


def evaluate(
    params: ModelParams,
    samples: list[Sample],
    table: EmbeddingTable | None = None,
    threshold: float = 0.5,
) -> Metrics:
    """Threshold the support score at ``threshold``; F1 is over the positive class."""
    config = TrainConfig(
        seed=0,
        embedding_dim=params.config.text_dim,
        conv_variant=params.config.conv_variant,
        use_edge_features=params.config.use_edge_features,
        weighted_node_embeddings=params.config.weighted_embeddings,
        dtype=params.config.dtype,
    )
    featured, _ = featurize_samples(samples, config, table)
    return evaluate_featured(params, featured, threshold)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


@dataclass
class TrainResult:
    params: ModelParams
    history: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_metrics: Metrics | None = None
    skipped: int = 0
    train_accuracy: float = 0.0

    def history_jsonl(self) -> str:
        return "".join(json.dumps(rec) + "\n" for rec in self.history)


def train(
    config: TrainConfig,
    samples: list[Sample],
    table: EmbeddingTable | None = None,
    out_dir: str | Path | None = None,
    verbose: bool = False,
) -> TrainResult:
    """Adam on mean batch BCE; keeps the best-test-accuracy parameters.

    Samples with an empty claim or evidence graph are skipped and counted.
    With ``out_dir`` set, writes ``metrics.jsonl`` and a ``model`` checkpoint.
    """
    rng = np.random.default_rng(config.seed)
    train_s, test_s = split_dataset(samples, config.split_ratio, config.seed)
    feat_train, skip_a = featurize_samples(train_s, config, table)
    feat_test, skip_b = featurize_samples(test_s, config, table)
    skipped = skip_a + skip_b
    if not feat_train:
        raise ValueError("every training sample was skipped (empty graphs)")

    params = init_params(config.model_config(), config.seed)
    opt = Adam(params.trainable(), config.learning_rate)
    dtype = params.config.np_dtype()

    def snapshot() -> list[np.ndarray]:
        return [t.data.copy() for _, t in params.tensors()]

    best_state = snapshot()
    best_acc = -1.0
    best_epoch = 0
    best_metrics: Metrics | None = None
    history: list[dict] = []

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(feat_train))
        loss_sum = 0.0
        for start in range(0, len(order), config.batch_size):
            chunk = [feat_train[i] for i in order[start : start + config.batch_size]]
            ev = make_batch([c.evidence for c in chunk], dtype=dtype)
            cl = make_batch([c.claim for c in chunk], dtype=dtype)
            labels = np.array([c.label for c in chunk], dtype=np.float64)
            opt.zero_grad()
            with Tape() as tape:
                preds = forward_batch(ev, cl, params)
                loss = bce_loss(preds, labels)
                backward(loss, tape)
            opt.step()
            loss_sum += float(loss.data) * len(chunk)
        train_loss = loss_sum / len(feat_train)

        record: dict = {"epoch": epoch, "train_loss": train_loss}
        if feat_test:
            m = evaluate_featured(params, feat_test, batch_size=config.batch_size)
            record["test_acc"] = m.accuracy
            record["test_f1"] = m.f1
            # ties go to the later epoch: same held-out accuracy, more training
            if m.accuracy >= best_acc:
                best_acc = m.accuracy
                best_epoch = epoch
                best_metrics = m
                best_state = snapshot()
        else:
            record["test_acc"] = None
            record["test_f1"] = None
            best_state = snapshot()
        record["skipped"] = skipped
        history.append(record)
        if verbose:
            print(json.dumps(record))

    for (name, t), data in zip(params.tensors(), best_state):
        t.data = data

    train_metrics = evaluate_featured(params, feat_train, batch_size=config.batch_size)
    result = TrainResult(
        params=params,
        history=history,
        best_epoch=best_epoch,
        best_metrics=best_metrics,
        skipped=skipped,
        train_accuracy=train_metrics.accuracy,
    )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.jsonl").write_text(result.history_jsonl(), encoding="utf-8")
        save_checkpoint(params, out / "model", seed=config.seed)
    return result


# ---------------------------------------------------------------------------
# Ablation sweeps
# ---------------------------------------------------------------------------

ABLATION_CONFIGS = (
    "full",
    "edge_features",
    "unweighted_node_embeddings",
    "embeddings_384",
    "conv_gat",
    "conv_gatv2",
    "conv_transformer",
)


@dataclass(frozen=True)
class AblationRow:
    name: str
    accuracy: float
    f1: float
    params: int
    seed: int


def _ablation_config(base: TrainConfig, name: str) -> TrainConfig:
    if name == "full":
        return base
    if name == "edge_features":
        return replace(base, use_edge_features=True)
    if name == "unweighted_node_embeddings":
        return replace(base, weighted_node_embeddings=False)
    if name == "embeddings_384":
        return replace(base, embedding_dim=384)
    if name.startswith("conv_"):
        return replace(base, conv_variant=name[len("conv_") :])
    raise ValueError(f"unknown ablation {name!r}")


def run_ablation(
    samples: list[Sample],
    base_config: TrainConfig,
    tables: dict[int, EmbeddingTable] | None = None,
    verbose: bool = False,
) -> list[AblationRow]:
    """Train and evaluate every ablation configuration at the base seed."""
    rows = []
    for name in ABLATION_CONFIGS:
        cfg = _ablation_config(base_config, name)
        table = (tables or {}).get(cfg.embedding_dim)
        result = train(cfg, samples, table=table)
        metrics = result.best_metrics
        if metrics is None:
            raise ValueError(f"ablation {name!r} produced no test metrics")
        rows.append(
            AblationRow(
                name=name,
                accuracy=metrics.accuracy,
                f1=metrics.f1,
                params=count_parameters(result.params),
                seed=cfg.seed,
            )
        )
        if verbose:
            print(f"{name}: accuracy={metrics.accuracy:.4f} f1={metrics.f1:.4f}")
    return rows


def ablation_csv(rows: list[AblationRow]) -> str:
    lines = ["config,accuracy,f1,params,seed"]
    for r in rows:
        lines.append(f"{r.name},{r.accuracy:.6f},{r.f1:.6f},{r.params},{r.seed}")
    return "\n".join(lines) + "\n"


def ablation_table(rows: list[AblationRow]) -> str:
    name_w = max(len("config"), max(len(r.name) for r in rows))
    header = f"{'config':<{name_w}}  {'accuracy':>8}  {'f1':>8}  {'params':>10}  seed"
    lines = [header, "-" * len(header)]
    for r in rows:
        lines.append(
            f"{r.name:<{name_w}}  {r.accuracy:>8.4f}  {r.f1:>8.4f}  {r.params:>10d}  {r.seed}"
        )
    return "\n".join(lines) + "\n"
