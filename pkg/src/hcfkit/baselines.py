"""Comparison models: memory-based item-item CF and Bayesian pairwise ranking.

Mem.CF scores are weighted averages of item-item cosine similarities over
the entity's training items, normalized by the target item's total
similarity mass (the classic item-based convention), so they stay graded
in [0, 1] and comparable with sigmoid outputs.

The pairwise-ranking model fits entity/item factors plus item biases by
stochastic ascent on ln sigmoid(x_pos - x_neg) with L2 shrinkage; the
"stage-1 only" variant freezes the entity factors to a projection of the
text embeddings and trains item parameters only.
"""

from __future__ import annotations

import base64
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import EmbeddingSet, HcfError, InteractionMatrix
from .dcf import sigmoid
from .rng import make_rng

log = logging.getLogger(__name__)

BASELINE_CHECKPOINT_FORMAT = "hcf-baseline-checkpoint"
BASELINE_CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ItemSimilarityMatrix:
    """Symmetric item-item cosine similarities over binary usage columns."""

    item_ids: tuple
    sim: np.ndarray  # (n, n), zero diagonal handled by scorer

    @property
    def n(self) -> int:
        return len(self.item_ids)


def memcf_fit(train: InteractionMatrix) -> ItemSimilarityMatrix:
    """sim(i, j) = |U_i & U_j| / sqrt(|U_i| |U_j|); zero-usage items get zero rows."""
    if not train.pairs:
        raise HcfError("cannot fit Mem.CF on an empty train split")
    dense = train.to_dense()
    co = dense.T @ dense
    counts = np.diag(co).copy()
    denom = np.sqrt(np.outer(counts, counts))
    with np.errstate(divide="ignore", invalid="ignore"):
        sim = np.where(denom > 0, co / denom, 0.0)
    return ItemSimilarityMatrix(train.item_ids, sim)


def _neighbor_sim(sims: ItemSimilarityMatrix, k_neighbors: int) -> np.ndarray:
    """Similarity matrix with self-similarity removed and, when k_neighbors > 0,
    each target item's neighborhood truncated to its k most similar items."""
    s = sims.sim.copy()
    np.fill_diagonal(s, 0.0)
    if k_neighbors and k_neighbors < sims.n - 1:
        # keep the k largest entries per column (target item), ties by lower index
        order = np.argsort(-s, axis=0, kind="stable")
        keep = np.zeros_like(s, dtype=bool)
        cols = np.arange(s.shape[1])
        keep[order[:k_neighbors], cols] = True
        s = np.where(keep, s, 0.0)
    return s


def memcf_score_matrix(sims: ItemSimilarityMatrix, train: InteractionMatrix,
                       k_neighbors: int = 0) -> np.ndarray:
    """Dense (m, n) score matrix.

    score(u, i) = sum_{j in items(u)} sim(i, j) / sum_j |sim(i, j)|, with the
    denominator over the whole (possibly truncated) neighborhood of i; 0 when
    the entity holds nothing or the neighborhood mass is zero.
    """
    s = _neighbor_sim(sims, k_neighbors)
    dense = train.to_dense()
    num = dense @ s
    den = np.sum(np.abs(s), axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        scores = np.where(den > 0, num / den, 0.0)
    scores[~dense.any(axis=1)] = 0.0
    return scores


def memcf_score(sims: ItemSimilarityMatrix, train: InteractionMatrix,
                u: int, i: int, k_neighbors: int = 0) -> float:
    return float(memcf_score_matrix(sims, train, k_neighbors)[u, i])


@dataclass(frozen=True)
class BpdmConfig:
    k: int = 32
    lr: float = 0.05
    reg: float = 0.002
    epochs: int = 30
    batch_size: int = 512
    seed: int = 0

    def __post_init__(self):
        if self.k < 1 or self.epochs < 0 or self.batch_size < 1:
            raise HcfError("k and batch_size must be positive, epochs >= 0")
        if self.lr <= 0 or self.reg < 0:
            raise HcfError("require lr > 0 and reg >= 0")


@dataclass
class BpdmModel:
    config: BpdmConfig
    entity_ids: tuple
    item_ids: tuple
    entity_factors: np.ndarray  # (m, k)
    item_factors: np.ndarray    # (n, k)
    item_bias: np.ndarray       # (n,)
    objective_history: list = field(default_factory=list)

    def raw(self, u, i) -> np.ndarray:
        u = np.asarray(u, dtype=np.int64)
        i = np.asarray(i, dtype=np.int64)
        return (np.einsum("bk,bk->b", self.entity_factors[u], self.item_factors[i])
                + self.item_bias[i])


def bpdm_fit(train: InteractionMatrix, cfg: BpdmConfig,
             entity_init: np.ndarray | None = None,
             freeze_entities: bool = False) -> BpdmModel:
    """Pairwise-ranking fit on (u, i_pos, i_neg) triples.

    i_pos is drawn from the entity's training items, i_neg uniformly from
    the items the entity does not hold in train. Updates ascend the
    per-triple objective ln sigmoid(x_pos - x_neg) - reg * ||params||^2,
    applied per minibatch.
    """
    if not train.pairs:
        raise HcfError("cannot fit pairwise model on an empty train split")
    m, n = train.m, train.n
    rng = make_rng(cfg.seed, "bpdm-init")
    if entity_init is not None:
        if entity_init.shape != (m, cfg.k):
            raise HcfError(f"entity_init shape {entity_init.shape} != ({m}, {cfg.k})")
        P = entity_init.astype(np.float64).copy()
    else:
        P = rng.normal(0.0, 0.1, size=(m, cfg.k))
    Q = rng.normal(0.0, 0.1, size=(n, cfg.k))
    b = np.zeros(n)

    pos_u, pos_i = train.pair_arrays()
    degree = np.bincount(pos_u, minlength=m)
    if np.any(degree[np.unique(pos_u)] >= n):
        raise HcfError("an entity holds every item; no negatives to rank against")
    observed = np.fromiter((u * n + i for u, i in zip(pos_u, pos_i)),
                           dtype=np.int64, count=len(pos_u))
    observed.sort()

    model = BpdmModel(cfg, train.entity_ids, train.item_ids, P, Q, b)
    for epoch in range(cfg.epochs):
        erng = make_rng(cfg.seed, "bpdm-epoch", epoch)
        order = erng.permutation(len(pos_u))
        u_ep, ip_ep = pos_u[order], pos_i[order]
        in_ep = _sample_negative_items(u_ep, observed, n, erng)
        for lo in range(0, len(u_ep), cfg.batch_size):
            sl = slice(lo, min(lo + cfg.batch_size, len(u_ep)))
            u, ip, ineg = u_ep[sl], ip_ep[sl], in_ep[sl]
            pu, qp, qn = P[u], Q[ip], Q[ineg]
            diff = np.einsum("bk,bk->b", pu, qp - qn) + b[ip] - b[ineg]
            e = sigmoid(-diff)  # d/d(diff) of ln sigmoid(diff)
            scale = cfg.lr  # per-triple step, applied batched
            if not freeze_entities:
                gP = e[:, None] * (qp - qn) - 2.0 * cfg.reg * pu
                np.add.at(P, u, scale * gP)
            np.add.at(Q, ip, scale * (e[:, None] * pu - 2.0 * cfg.reg * qp))
            np.add.at(Q, ineg, scale * (-e[:, None] * pu - 2.0 * cfg.reg * qn))
            np.add.at(b, ip, scale * (e - 2.0 * cfg.reg * b[ip]))
            np.add.at(b, ineg, scale * (-e - 2.0 * cfg.reg * b[ineg]))
            with np.errstate(divide="ignore"):
                model.objective_history.append(float(np.mean(np.log(sigmoid(diff)))))
        if not (np.all(np.isfinite(P)) and np.all(np.isfinite(Q)) and np.all(np.isfinite(b))):
            raise HcfError(f"pairwise fit diverged at epoch {epoch}: non-finite parameters")
    return model


def _sample_negative_items(u_arr: np.ndarray, observed_codes: np.ndarray,
                           n: int, rng) -> np.ndarray:
    """Per positive, one item the entity does not hold in train."""
    out = np.empty(len(u_arr), dtype=np.int64)
    pending = np.arange(len(u_arr))
    while len(pending):
        draw = rng.integers(0, n, size=len(pending))
        codes = u_arr[pending] * n + draw
        pos = np.searchsorted(observed_codes, codes)
        hit = (pos < len(observed_codes)) & (observed_codes[np.minimum(pos, len(observed_codes) - 1)] == codes)
        ok = ~hit
        out[pending[ok]] = draw[ok]
        pending = pending[~ok]
    return out


def bpdm_score(model: BpdmModel, u, i) -> np.ndarray:
    """sigmoid of the raw pairwise-model score; vectorized over index arrays."""
    return sigmoid(model.raw(u, i))


def stage1_only_fit(stage1: EmbeddingSet, train: InteractionMatrix,
                    cfg: BpdmConfig) -> BpdmModel:
    """Pairwise model whose entity factors are frozen to a projection of the
    stage-1 embeddings (identity when dims match); item side trains as usual."""
    source = stage1.matrix(train.entity_ids)
    if stage1.dim == cfg.k:
        init = source.copy()
    else:
        proj = make_rng(cfg.seed, "stage1-proj").normal(
            0.0, 1.0 / np.sqrt(cfg.k), size=(stage1.dim, cfg.k))
        init = source @ proj
    return bpdm_fit(train, cfg, entity_init=init, freeze_entities=True)


def _pack(a):
    arr = np.asarray(a, dtype="<f4")
    return {"shape": list(arr.shape),
            "data": base64.b64encode(arr.tobytes()).decode("ascii")}


def _unpack(entry):
    arr = np.frombuffer(base64.b64decode(entry["data"]), dtype="<f4")
    return arr.reshape(entry["shape"]).astype(np.float64)


def save_baseline(model, path) -> None:
    """Serialize a baseline in the shared checkpoint container family."""
    if isinstance(model, BpdmModel):
        doc = {
            "format": BASELINE_CHECKPOINT_FORMAT,
            "version": BASELINE_CHECKPOINT_VERSION,
            "kind": "bpdm",
            "config": {"k": model.config.k, "lr": model.config.lr,
                       "reg": model.config.reg, "epochs": model.config.epochs,
                       "batch_size": model.config.batch_size,
                       "seed": model.config.seed},
            "entity_ids": list(model.entity_ids),
            "item_ids": list(model.item_ids),
            "tensors": {"entity_factors": _pack(model.entity_factors),
                        "item_factors": _pack(model.item_factors),
                        "item_bias": _pack(model.item_bias)},
        }
    elif isinstance(model, ItemSimilarityMatrix):
        doc = {
            "format": BASELINE_CHECKPOINT_FORMAT,
            "version": BASELINE_CHECKPOINT_VERSION,
            "kind": "memcf",
            "item_ids": list(model.item_ids),
            "tensors": {"sim": _pack(model.sim)},
        }
    else:
        raise HcfError(f"cannot serialize {type(model).__name__}")
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_baseline(path):
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != BASELINE_CHECKPOINT_FORMAT:
        raise HcfError(f"{path}: not a baseline checkpoint")
    if doc.get("version") != BASELINE_CHECKPOINT_VERSION:
        raise HcfError(f"{path}: unsupported version {doc.get('version')}")
    if doc["kind"] == "memcf":
        return ItemSimilarityMatrix(tuple(doc["item_ids"]), _unpack(doc["tensors"]["sim"]))
    if doc["kind"] == "bpdm":
        c = doc["config"]
        return BpdmModel(BpdmConfig(k=c["k"], lr=c["lr"], reg=c["reg"],
                                    epochs=c["epochs"], batch_size=c["batch_size"],
                                    seed=c["seed"]),
                         tuple(doc["entity_ids"]), tuple(doc["item_ids"]),
                         _unpack(doc["tensors"]["entity_factors"]),
                         _unpack(doc["tensors"]["item_factors"]),
                         _unpack(doc["tensors"]["item_bias"]))
    raise HcfError(f"{path}: unknown baseline kind {doc['kind']!r}")
