"""Metrics and the model-comparison / ablation harnesses.

AUC conventions (pinned so the brute-force oracles in the test suite can
match them exactly):

* Thresholds are the distinct scores, swept in descending order; a pair is
  predicted positive iff score >= threshold.
* PR-AUC: trapezoidal integration over the (recall, precision) points in
  sweep order, prepending the zero-recall anchor (0, precision at the
  highest threshold). No interpolation beyond the trapezoids.
* ROC-AUC: the Mann-Whitney U statistic; tied scores count 1/2.

Both raise on single-class label vectors, where the curves are undefined.
"""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .core import EmbeddingSet, HcfError, InteractionMatrix, sample_unobserved
from .rng import make_rng

log = logging.getLogger(__name__)


def build_eval_pairs(test: InteractionMatrix, full: InteractionMatrix,
                     neg_ratio: int, seed: int, label: str = "eval-pairs",
                     all_negatives: bool = False):
    """Test positives plus neg_ratio distinct negatives per positive.

    Negatives are drawn uniformly from pairs unobserved anywhere in the
    full matrix, so no sampled negative is a positive of any split. With
    ``all_negatives`` every unobserved pair becomes a negative (full
    cross-product evaluation; only sensible for small matrices).
    Returns (u, i, y) index/label arrays.
    """
    pos_u, pos_i = test.pair_arrays()
    if len(pos_u) == 0:
        raise HcfError("no positives to evaluate")
    if all_negatives:
        observed = full.pairs
        neg = [(u, i) for u in range(full.m) for i in range(full.n)
               if (u, i) not in observed]
        neg_u = np.array([p[0] for p in neg], dtype=np.int64)
        neg_i = np.array([p[1] for p in neg], dtype=np.int64)
    else:
        if neg_ratio < 1:
            raise HcfError("neg_ratio must be >= 1")
        rng = make_rng(seed, label)
        neg_u, neg_i = sample_unobserved(full, len(pos_u) * neg_ratio, rng,
                                         distinct=True)
        if len(neg_u) < len(pos_u) * neg_ratio:
            log.warning("negative pool smaller than requested: %d < %d",
                        len(neg_u), len(pos_u) * neg_ratio)
    u = np.concatenate([pos_u, neg_u])
    i = np.concatenate([pos_i, neg_i])
    y = np.concatenate([np.ones(len(pos_u)), np.zeros(len(neg_u))])
    return u, i, y


@dataclass(frozen=True)
class Confusion:
    tp: int
    fp: int
    tn: int
    fn: int
    precision: float
    recall: float
    precision_defined: bool

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn,
                "precision": self.precision, "recall": self.recall,
                "precision_defined": self.precision_defined}


def confusion_at(scores, labels, threshold: float) -> Confusion:
    """Counts and precision/recall at a fixed threshold (positive iff >=)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pred = scores >= threshold
    pos = labels == 1
    tp = int(np.sum(pred & pos))
    fp = int(np.sum(pred & ~pos))
    fn = int(np.sum(~pred & pos))
    tn = int(np.sum(~pred & ~pos))
    precision_defined = (tp + fp) > 0
    precision = tp / (tp + fp) if precision_defined else 0.0
    recall = tp / (tp + fn) if (tp + fn) > 0 else 0.0
    return Confusion(tp, fp, tn, fn, precision, recall, precision_defined)


def _check_two_classes(labels) -> tuple:
    labels = np.asarray(labels)
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos == 0 or n_neg == 0:
        raise HcfError("AUC undefined: labels contain a single class")
    return n_pos, n_neg


def pr_auc(scores, labels) -> float:
    """Area under the precision-recall sweep, per the module convention."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    n_pos, _ = _check_two_classes(labels)

    order = np.argsort(-scores, kind="mergesort")
    s_sorted = scores[order]
    y_sorted = (labels[order] == 1).astype(np.int64)
    tp_cum = np.cumsum(y_sorted)
    pred_cum = np.arange(1, len(scores) + 1)
    # last index of each distinct-score run = confusion at that threshold
    last = np.flatnonzero(np.diff(s_sorted, append=np.nan) != 0)
    tp = tp_cum[last]
    pred = pred_cum[last]

    area = 0.0
    prev_r = 0.0
    prev_p = tp[0] / pred[0]  # zero-recall anchor
    for k in range(len(last)):
        p = tp[k] / pred[k]
        r = tp[k] / n_pos
        area += (r - prev_r) * (p + prev_p) / 2.0
        prev_r, prev_p = r, p
    return float(area)


def roc_auc(scores, labels) -> float:
    """Mann-Whitney U / (n_pos * n_neg), ties counted 1/2."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    n_pos, n_neg = _check_two_classes(labels)

    order = np.argsort(scores, kind="mergesort")
    s_sorted = scores[order]
    ranks = np.empty(len(scores), dtype=np.float64)
    k = 0
    while k < len(s_sorted):
        j = k
        while j + 1 < len(s_sorted) and s_sorted[j + 1] == s_sorted[k]:
            j += 1
        ranks[k:j + 1] = (k + j) / 2.0 + 1.0  # average 1-based rank of the tie run
        k = j + 1
    rank_by_index = np.empty(len(scores), dtype=np.float64)
    rank_by_index[order] = ranks
    rank_sum = float(np.sum(rank_by_index[np.asarray(labels) == 1]))
    u_stat = rank_sum - n_pos * (n_pos + 1) / 2.0
    return u_stat / (n_pos * n_neg)


def select_threshold(scores, labels, policy: str = "max_f1",
                     fixed_value: float = 0.5) -> float:
    """Operating threshold: 'fixed' returns fixed_value; 'max_f1' sweeps the
    distinct scores and returns the lowest threshold attaining the best F1."""
    if policy == "fixed":
        return fixed_value
    if policy != "max_f1":
        raise HcfError(f"unknown threshold policy {policy!r}")
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    best_f1, best_t = -1.0, 0.5
    for t in sorted(set(scores.tolist())):
        c = confusion_at(scores, labels, t)
        f1 = (2 * c.precision * c.recall / (c.precision + c.recall)
              if (c.precision + c.recall) > 0 else 0.0)
        if f1 > best_f1 or (f1 == best_f1 and t < best_t):
            best_f1, best_t = f1, t
    return float(best_t)


@dataclass
class EvalReport:
    model: str
    threshold: float
    precision: float
    recall: float
    pr_auc: float
    roc_auc: float
    counts: Confusion
    seed: int
    config_hash: str
    threshold_policy: str = "max_f1"

    def to_dict(self) -> dict:
        return {"model": self.model, "precision": self.precision,
                "recall": self.recall, "pr_auc": self.pr_auc,
                "roc_auc": self.roc_auc, "threshold": self.threshold,
                "threshold_policy": self.threshold_policy,
                "counts": self.counts.to_dict(),
                "seed": self.seed, "config_hash": self.config_hash}

    def check(self) -> "EvalReport":
        c = self.counts
        total = c.tp + c.fp + c.tn + c.fn
        if c.precision_defined and abs(self.precision - c.tp / (c.tp + c.fp)) > 1e-12:
            raise HcfError("inconsistent precision in report")
        if (c.tp + c.fn) > 0 and abs(self.recall - c.tp / (c.tp + c.fn)) > 1e-12:
            raise HcfError("inconsistent recall in report")
        if total <= 0:
            raise HcfError("empty confusion counts")
        return self


@dataclass(frozen=True)
class Dataset:
    """Filtered matrix plus its splits and optional stage-1 embeddings."""

    full: InteractionMatrix
    train: InteractionMatrix
    val: InteractionMatrix
    test: InteractionMatrix
    stage1: EmbeddingSet | None = None


MODEL_KINDS = ("bpdm", "memcf", "stage1", "stage2", "hcf")
MODEL_LABELS = {"bpdm": "BPDM", "memcf": "Mem.CF", "stage1": "Independent Stage 1",
                "stage2": "Independent Stage 2", "hcf": "HCF"}


@dataclass(frozen=True)
class HarnessConfig:
    """Everything run_comparison / run_ablation need beyond the dataset."""

    hcf: "object" = None          # dcf.HcfConfig
    bpdm: "object" = None         # baselines.BpdmConfig
    eval_neg_ratio: int = 4
    threshold_policy: str = "max_f1"
    memcf_k_neighbors: int = 0
    embed_dim: int = 256
    full_negatives: bool = False
    fixed_threshold: float = 0.5
    seed: int = 0

    def config_hash(self) -> str:
        from .dcf import _config_dict
        doc = {"eval_neg_ratio": self.eval_neg_ratio,
               "threshold_policy": self.threshold_policy,
               "memcf_k_neighbors": self.memcf_k_neighbors,
               "embed_dim": self.embed_dim,
               "full_negatives": self.full_negatives,
               "fixed_threshold": self.fixed_threshold,
               "seed": self.seed,
               "hcf": _config_dict(self.hcf) if self.hcf is not None else None,
               "bpdm": None}
        if self.bpdm is not None:
            b = self.bpdm
            doc["bpdm"] = {"k": b.k, "lr": b.lr, "reg": b.reg, "epochs": b.epochs,
                           "batch_size": b.batch_size, "seed": b.seed}
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]


def fit_scorer(kind: str, dataset: Dataset, hc: HarnessConfig):
    """Train/fit one model kind; returns score(u, i) over index arrays."""
    from . import baselines, dcf

    if kind == "memcf":
        sims = baselines.memcf_fit(dataset.train)
        matrix = baselines.memcf_score_matrix(sims, dataset.train,
                                              hc.memcf_k_neighbors)
        return lambda u, i: matrix[np.asarray(u), np.asarray(i)]
    if kind == "bpdm":
        model = baselines.bpdm_fit(dataset.train, hc.bpdm)
        return lambda u, i: baselines.bpdm_score(model, u, i)
    if kind == "stage1":
        if dataset.stage1 is None:
            raise HcfError("stage1 model requires stage-1 embeddings")
        model = baselines.stage1_only_fit(dataset.stage1, dataset.train, hc.bpdm)
        return lambda u, i: baselines.bpdm_score(model, u, i)
    if kind in ("stage2", "hcf"):
        init_mode = "random" if kind == "stage2" else "pretrained"
        cfg = replace(hc.hcf, init_mode=init_mode)
        stage1 = dataset.stage1 if kind == "hcf" else None
        if kind == "hcf" and stage1 is None:
            raise HcfError("hcf model requires stage-1 embeddings")
        model = dcf.init_model(cfg, dataset.full.entity_ids,
                               dataset.full.item_ids, stage1)
        model, _ = dcf.train(model, dataset.train, dataset.val, dataset.full)
        return lambda u, i: dcf.score_pairs(model, u, i)
    raise HcfError(f"unknown model kind {kind!r}")


def evaluate_scorer(score_fn, dataset: Dataset, hc: HarnessConfig,
                    name: str, kind_seed: int | None = None) -> EvalReport:
    """Score the shared val/test pairs, pick the operating threshold on
    validation, and report test metrics."""
    seed = hc.seed if kind_seed is None else kind_seed
    vu, vi, vy = build_eval_pairs(dataset.val, dataset.full, hc.eval_neg_ratio,
                                  hc.seed, label="val-pairs",
                                  all_negatives=hc.full_negatives)
    tu, ti, ty = build_eval_pairs(dataset.test, dataset.full, hc.eval_neg_ratio,
                                  hc.seed, label="test-pairs",
                                  all_negatives=hc.full_negatives)
    threshold = select_threshold(score_fn(vu, vi), vy, hc.threshold_policy,
                                 hc.fixed_threshold)
    t_scores = score_fn(tu, ti)
    conf = confusion_at(t_scores, ty, threshold)
    report = EvalReport(model=name, threshold=float(threshold),
                        precision=conf.precision, recall=conf.recall,
                        pr_auc=pr_auc(t_scores, ty), roc_auc=roc_auc(t_scores, ty),
                        counts=conf, seed=seed, config_hash=hc.config_hash(),
                        threshold_policy=hc.threshold_policy)
    return report.check()


def run_comparison(dataset: Dataset, models, hc: HarnessConfig) -> list:
    """Fit every requested model kind on identical splits and report each."""
    reports = []
    for kind in models:
        if kind not in MODEL_KINDS:
            raise HcfError(f"unknown model kind {kind!r}")
        score_fn = fit_scorer(kind, dataset, hc)
        reports.append(evaluate_scorer(score_fn, dataset, hc, MODEL_LABELS[kind]))
    return reports


def comparison_text(reports) -> str:
    """Aligned-column rendering of a comparison run."""
    headers = ("Model", "Precision", "Recall", "PR-AUC", "ROC-AUC", "Threshold")
    rows = [(r.model, f"{r.precision:.4f}", f"{r.recall:.4f}",
             f"{r.pr_auc:.4f}", f"{r.roc_auc:.4f}", f"{r.threshold:.4f}")
            for r in reports]
    widths = [max(len(h), *(len(row[c]) for row in rows)) if rows else len(h)
              for c, h in enumerate(headers)]
    def fmt(row):
        return "  ".join(str(v).ljust(widths[c]) for c, v in enumerate(row))
    lines = [fmt(headers), fmt(tuple("-" * w for w in widths))]
    lines.extend(fmt(row) for row in rows)
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class AblationSpec:
    """Grid of feature sets x item caps x model kinds, run per seed."""

    features: tuple = ("cc", "cc_tech")
    caps: tuple = (50, 100, 200)
    models: tuple = ("stage2", "hcf")
    seeds: tuple = (0, 1, 2)

    def __post_init__(self):
        for f in self.features:
            if f not in ("cc", "cc_tech"):
                raise HcfError(f"unknown feature set {f!r}")
        for mk in self.models:
            if mk not in MODEL_KINDS:
                raise HcfError(f"unknown model kind {mk!r}")
        if not self.caps or any(c < 1 for c in self.caps):
            raise HcfError("caps must be positive")


@dataclass(frozen=True)
class AblationInputs:
    """Post-filter matrix plus the raw text needed to build feature variants."""

    matrix: InteractionMatrix
    corpus: tuple               # CorpusRecords, one per entity
    item_texts: dict            # item id -> description text
    split_fracs: tuple = (0.7, 0.15, 0.15)


def cap_items(matrix: InteractionMatrix, cap: int) -> InteractionMatrix:
    """Keep the `cap` most frequent items (ties by item order), re-densified."""
    if cap >= matrix.n:
        if cap > matrix.n:
            log.warning("item cap %d exceeds available %d; using all", cap, matrix.n)
        return matrix
    counts = matrix.item_counts()
    keep_old = sorted(np.argsort(-counts, kind="stable")[:cap].tolist())
    remap = {old: new for new, old in enumerate(keep_old)}
    pairs = frozenset((u, remap[i]) for u, i in matrix.pairs if i in remap)
    return InteractionMatrix(matrix.entity_ids,
                             tuple(matrix.item_ids[k] for k in keep_old), pairs)


def _ablation_cell(inputs: AblationInputs, feature: str, cap: int, kind: str,
                   seed: int, hc: HarnessConfig) -> dict:
    from .core import SplitSpec, split_interactions
    from .ingest import CorpusRecord
    from .textembed import HashedBagOfWords, embed_corpus

    capped = cap_items(inputs.matrix, cap)
    tr, va, te = split_interactions(capped, SplitSpec(*inputs.split_fracs, seed=seed))

    if feature == "cc":
        corpus = list(inputs.corpus)
    else:
        held = tr.entity_items()
        corpus = []
        for idx, rec in enumerate(inputs.corpus):
            extra = " ".join(inputs.item_texts.get(capped.item_ids[i], "")
                             for i in held[idx])
            corpus.append(CorpusRecord(rec.entity_id, (rec.text + " " + extra).strip()))

    stage1 = embed_corpus(corpus, HashedBagOfWords(dim=hc.embed_dim, seed=seed))
    cell_hc = HarnessConfig(
        hcf=replace(hc.hcf, seed=seed) if hc.hcf is not None else None,
        bpdm=replace(hc.bpdm, seed=seed) if hc.bpdm is not None else None,
        eval_neg_ratio=hc.eval_neg_ratio, threshold_policy=hc.threshold_policy,
        memcf_k_neighbors=hc.memcf_k_neighbors, embed_dim=hc.embed_dim,
        full_negatives=hc.full_negatives, seed=seed)
    dataset = Dataset(capped, tr, va, te, stage1)
    report = evaluate_scorer(fit_scorer(kind, dataset, cell_hc), dataset,
                             cell_hc, MODEL_LABELS[kind], kind_seed=seed)
    return {"model": MODEL_LABELS[kind], "kind": kind, "features": feature,
            "cap": cap, "cap_used": capped.n, "seed": seed,
            "precision": report.precision, "recall": report.recall,
            "pr_auc": report.pr_auc, "roc_auc": report.roc_auc}


def run_ablation(spec: AblationSpec, inputs: AblationInputs,
                 hc: HarnessConfig, jobs: int = 1) -> dict:
    """Execute the ablation grid; returns {'cells': rows, 'means': aggregates}."""
    tasks = [(feature, cap, kind, seed)
             for feature in spec.features
             for cap in spec.caps
             for kind in spec.models
             for seed in spec.seeds]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            cells = list(pool.map(
                lambda t: _ablation_cell(inputs, t[0], t[1], t[2], t[3], hc), tasks))
    else:
        cells = [_ablation_cell(inputs, *t, hc) for t in tasks]
    cells.sort(key=lambda c: (c["features"], c["cap"], c["kind"], c["seed"]))

    means = []
    for feature in spec.features:
        for cap in spec.caps:
            for kind in spec.models:
                vals = [c for c in cells
                        if (c["features"], c["cap"], c["kind"]) == (feature, cap, kind)]
                means.append({
                    "model": MODEL_LABELS[kind], "kind": kind,
                    "features": feature, "cap": cap,
                    "precision": float(np.mean([c["precision"] for c in vals])),
                    "recall": float(np.mean([c["recall"] for c in vals])),
                    "pr_auc": float(np.mean([c["pr_auc"] for c in vals])),
                    "roc_auc": float(np.mean([c["roc_auc"] for c in vals])),
                    "n_seeds": len(vals)})
    return {"cells": cells, "means": means}


def ablation_text(table: dict) -> str:
    headers = ("Model", "Features", "Cap", "Precision", "Recall", "PR-AUC", "ROC-AUC")
    rows = [(r["model"], r["features"], str(r["cap"]), f"{r['precision']:.4f}",
             f"{r['recall']:.4f}", f"{r['pr_auc']:.4f}", f"{r['roc_auc']:.4f}")
            for r in table["means"]]
    widths = [max(len(h), *(len(row[c]) for row in rows)) if rows else len(h)
              for c, h in enumerate(headers)]
    def fmt(row):
        return "  ".join(str(v).ljust(widths[c]) for c, v in enumerate(row))
    lines = [fmt(headers), fmt(tuple("-" * w for w in widths))]
    lines.extend(fmt(row) for row in rows)
    return "\n".join(lines) + "\n"
