"""Stage-2 model: trainable entity/item embeddings scored through a
dot-product path plus an MLP refinement head.

The raw score for a pair (u, i) is

    raw = w_out . z_L + b_out + entity_emb[u] . item_emb[i]

where z_0 is the concatenation of the two embedding rows and each hidden
layer applies ReLU(W z + b) followed by inverted dropout during training.
With all MLP parameters at zero the model reduces exactly to the plain
matrix-factorization dot product. Training minimizes Huber loss between
sigmoid(raw) and the 0/1 label, plus an L2 penalty on the embedding rows
touched by the batch, optimized with Adam. Forward/backward passes are
written out by hand; gradients are validated against finite differences
in the test suite.
"""

from __future__ import annotations

import base64
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import EmbeddingSet, HcfError, InteractionMatrix, sample_unobserved
from .rng import make_rng

log = logging.getLogger(__name__)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

CHECKPOINT_FORMAT = "hcf-checkpoint"
CHECKPOINT_VERSION = 1


class NonFiniteError(HcfError):
    """A gradient or parameter stopped being finite."""


@dataclass(frozen=True)
class HcfConfig:
    d: int = 64
    hidden: tuple = (512, 256, 128, 70, 30)
    dropout: tuple = (0.3, 0.3, 0.2, 0.2)
    delta: float = 1.0
    l2: float = 1e-4
    lr: float = 0.018
    batch_size: int = 1024
    epochs: int = 20
    neg_ratio: int = 4
    patience: int = 5
    seed: int = 0
    init_mode: str = "random"  # "random" | "pretrained"
    project_pretrained: bool = True

    def __post_init__(self):
        if self.d < 1 or any(h < 1 for h in self.hidden) or not self.hidden:
            raise HcfError("embedding dim and hidden widths must be positive")
        if len(self.dropout) > len(self.hidden):
            raise HcfError("more dropout rates than hidden layers")
        if any(not (0.0 <= p < 1.0) for p in self.dropout):
            raise HcfError("dropout rates must be in [0, 1)")
        if self.batch_size < 1 or self.epochs < 1:
            raise HcfError("batch_size and epochs must be positive")
        if self.lr <= 0 or self.delta <= 0 or self.l2 < 0:
            raise HcfError("require lr > 0, delta > 0, l2 >= 0")
        if self.neg_ratio < 1:
            raise HcfError("neg_ratio must be >= 1 (the model would otherwise "
                           "only ever see label 1)")
        if self.init_mode not in ("random", "pretrained"):
            raise HcfError(f"unknown init_mode {self.init_mode!r}")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        object.__setattr__(self, "dropout", tuple(float(p) for p in self.dropout))


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: dict = field(default_factory=dict)


@dataclass
class HcfModel:
    config: HcfConfig
    entity_ids: tuple
    item_ids: tuple
    entity_emb: np.ndarray  # (m, d)
    item_emb: np.ndarray    # (n, d)
    weights: list           # W_k, first (2d, h1), then (h_{k-1}, h_k)
    biases: list            # b_k, (h_k,)
    out_w: np.ndarray       # (h_last,)
    out_b: np.ndarray       # scalar, shape ()
    adam: AdamState = field(default_factory=AdamState)

    @property
    def m(self) -> int:
        return self.entity_emb.shape[0]

    @property
    def n(self) -> int:
        return self.item_emb.shape[0]

    def mlp_params(self):
        """(name, array) pairs for the dense (non-embedding) parameters."""
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            yield f"W{k}", w
            yield f"b{k}", b
        yield "out_w", self.out_w
        yield "out_b", self.out_b

    def snapshot(self) -> "HcfModel":
        """Deep copy of the parameters; Adam state is not carried over."""
        return HcfModel(
            config=self.config,
            entity_ids=self.entity_ids,
            item_ids=self.item_ids,
            entity_emb=self.entity_emb.copy(),
            item_emb=self.item_emb.copy(),
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            out_w=self.out_w.copy(),
            out_b=self.out_b.copy(),
        )

    def all_finite(self) -> bool:
        arrays = [self.entity_emb, self.item_emb, self.out_w, self.out_b,
                  *self.weights, *self.biases]
        return all(np.all(np.isfinite(a)) for a in arrays)


@dataclass
class TrainingBatch:
    """Index/label arrays plus the dropout masks fixed for this batch."""

    u: np.ndarray
    i: np.ndarray
    y: np.ndarray
    masks: list | None = None  # one entry per dropout rate; None = identity

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=np.int64)
        self.i = np.asarray(self.i, dtype=np.int64)
        self.y = np.asarray(self.y, dtype=np.float64)
        if self.y.size and not np.all((self.y == 0.0) | (self.y == 1.0)):
            raise HcfError("labels must be 0 or 1")

    def __len__(self) -> int:
        return len(self.u)


def make_batch(u, i, y, cfg: HcfConfig, train_mode: bool, rng=None) -> TrainingBatch:
    """Assemble a batch; in train mode, sample inverted-scaling dropout masks."""
    masks = None
    if train_mode and cfg.dropout:
        if rng is None:
            raise HcfError("train-mode batches need an rng for dropout masks")
        masks = []
        for k, rate in enumerate(cfg.dropout):
            if rate == 0.0:
                masks.append(None)
            else:
                keep = rng.random((len(u), cfg.hidden[k])) >= rate
                masks.append(keep.astype(np.float64) / (1.0 - rate))
    return TrainingBatch(u, i, y, masks)


def sigmoid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def init_model(cfg: HcfConfig, entity_ids, item_ids,
               stage1: EmbeddingSet | None = None) -> HcfModel:
    """Fresh model; pretrained mode copies (or projects) stage-1 vectors
    into the entity table and re-initializes any all-zero rows."""
    entity_ids, item_ids = tuple(entity_ids), tuple(item_ids)
    m, n = len(entity_ids), len(item_ids)
    rng = make_rng(cfg.seed, "init")
    if cfg.init_mode == "pretrained":
        if stage1 is None:
            raise HcfError("init_mode='pretrained' requires stage-1 embeddings")
        source = stage1.matrix(entity_ids)  # errors on missing ids
        if stage1.dim == cfg.d:
            entity_emb = source.copy()
        elif cfg.project_pretrained:
            proj = make_rng(cfg.seed, "proj").normal(
                0.0, 1.0 / np.sqrt(cfg.d), size=(stage1.dim, cfg.d))
            entity_emb = source @ proj
        else:
            raise HcfError(f"stage-1 dim {stage1.dim} != model dim {cfg.d} "
                           "and projection is disabled")
        zero_rows = np.flatnonzero(~source.any(axis=1))
        for r in zero_rows:
            entity_emb[r] = rng.normal(0.0, 0.01, size=cfg.d)
    else:
        entity_emb = rng.normal(0.0, 0.01, size=(m, cfg.d))

    item_emb = rng.normal(0.0, 0.01, size=(n, cfg.d))
    weights, biases = [], []
    fan_in = 2 * cfg.d
    for h in cfg.hidden:
        weights.append(rng.normal(0.0, 0.01, size=(fan_in, h)))
        biases.append(np.zeros(h))
        fan_in = h
    out_w = rng.normal(0.0, 0.01, size=(cfg.hidden[-1],))
    out_b = np.zeros(())
    return HcfModel(cfg, entity_ids, item_ids, entity_emb, item_emb,
                    weights, biases, out_w, out_b)


def forward(model: HcfModel, batch: TrainingBatch, train_mode: bool = False):
    """Per-pair probability scores plus the cache backward() needs."""
    cfg = model.config
    ec = model.entity_emb[batch.u]
    ei = model.item_emb[batch.i]
    z = np.concatenate([ec, ei], axis=1)
    zs = [z]          # post-activation (and post-mask) outputs, z_0 .. z_L
    preacts = []      # W z + b per hidden layer
    for k, (w, b) in enumerate(zip(model.weights, model.biases)):
        a = z @ w + b
        preacts.append(a)
        z = np.maximum(a, 0.0)
        if train_mode and batch.masks is not None and k < len(cfg.dropout):
            mask = batch.masks[k]
            if mask is not None:
                z = z * mask
        zs.append(z)
    dot = np.einsum("bd,bd->b", ec, ei)
    raw = z @ model.out_w + model.out_b + dot
    scores = sigmoid(raw)
    cache = {"zs": zs, "preacts": preacts, "dot": dot, "raw": raw,
             "scores": scores, "ec": ec, "ei": ei, "train_mode": train_mode}
    return scores, cache


def huber_loss(y, p, delta: float):
    """Quadratic under delta, linear beyond; elementwise."""
    if delta <= 0:
        raise HcfError("delta must be positive")
    r = np.asarray(y, dtype=np.float64) - np.asarray(p, dtype=np.float64)
    a = np.abs(r)
    return np.where(a <= delta, 0.5 * r * r, delta * (a - 0.5 * delta))


def _reg_term(model: HcfModel, batch: TrainingBatch) -> float:
    """Mean over examples of the squared norms of the touched rows."""
    ec = model.entity_emb[batch.u]
    ei = model.item_emb[batch.i]
    return float(np.mean(np.sum(ec * ec, axis=1) + np.sum(ei * ei, axis=1)))


def batch_loss(model: HcfModel, batch: TrainingBatch, train_mode=None) -> float:
    """Mean Huber loss plus the l2 penalty on touched embedding rows."""
    if len(batch) == 0:
        raise HcfError("empty batch")
    if train_mode is None:
        train_mode = batch.masks is not None
    scores, _ = forward(model, batch, train_mode=train_mode)
    loss = float(np.mean(huber_loss(batch.y, scores, model.config.delta)))
    if model.config.l2 > 0:
        loss += model.config.l2 * _reg_term(model, batch)
    return loss


@dataclass
class Gradients:
    weights: list
    biases: list
    out_w: np.ndarray
    out_b: np.ndarray
    entity_rows: tuple  # (row indices, (k, d) gradients)
    item_rows: tuple

    def named(self):
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            yield f"W{k}", w
            yield f"b{k}", b
        yield "out_w", self.out_w
        yield "out_b", self.out_b


def backward(model: HcfModel, batch: TrainingBatch, cache) -> Gradients:
    """Gradients of batch_loss w.r.t. every parameter tensor.

    The Huber gradient w.r.t. the score is (p - y) clipped to +-delta,
    chained through the sigmoid; embedding rows receive contributions from
    the concat path, the dot-product skip path, and the touched-row l2 term.
    """
    cfg = model.config
    B = len(batch)
    scores = cache["scores"]
    dloss_dp = np.clip(scores - batch.y, -cfg.delta, cfg.delta) / B
    draw = dloss_dp * scores * (1.0 - scores)

    zs, preacts = cache["zs"], cache["preacts"]
    d_out_w = zs[-1].T @ draw
    d_out_b = np.asarray(np.sum(draw))
    dz = np.outer(draw, model.out_w)

    d_weights = [None] * len(model.weights)
    d_biases = [None] * len(model.biases)
    for k in range(len(model.weights) - 1, -1, -1):
        if cache["train_mode"] and batch.masks is not None and k < len(cfg.dropout):
            mask = batch.masks[k]
            if mask is not None:
                dz = dz * mask
        da = dz * (preacts[k] > 0)
        d_weights[k] = zs[k].T @ da
        d_biases[k] = np.sum(da, axis=0)
        dz = da @ model.weights[k].T

    ec, ei = cache["ec"], cache["ei"]
    d = cfg.d
    dec = dz[:, :d] + draw[:, None] * ei
    dei = dz[:, d:] + draw[:, None] * ec
    if cfg.l2 > 0:
        dec = dec + (2.0 * cfg.l2 / B) * ec
        dei = dei + (2.0 * cfg.l2 / B) * ei

    u_rows, u_inv = np.unique(batch.u, return_inverse=True)
    g_ec = np.zeros((len(u_rows), d))
    np.add.at(g_ec, u_inv, dec)
    i_rows, i_inv = np.unique(batch.i, return_inverse=True)
    g_ei = np.zeros((len(i_rows), d))
    np.add.at(g_ei, i_inv, dei)

    return Gradients(d_weights, d_biases, d_out_w, d_out_b,
                     (u_rows, g_ec), (i_rows, g_ei))


def adam_update(param, grad, m, v, t: int, lr: float):
    """One bias-corrected Adam step, in place on (param, m, v)."""
    m *= ADAM_BETA1
    m += (1.0 - ADAM_BETA1) * grad
    v *= ADAM_BETA2
    v += (1.0 - ADAM_BETA2) * grad * grad
    m_hat = m / (1.0 - ADAM_BETA1 ** t)
    v_hat = v / (1.0 - ADAM_BETA2 ** t)
    param -= lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)


def adam_step(model: HcfModel, grads: Gradients, lr: float | None = None) -> HcfModel:
    """Apply Adam to the MLP tensors and only the touched embedding rows."""
    lr = model.config.lr if lr is None else lr
    state = model.adam
    for name, grad in grads.named():
        if not np.all(np.isfinite(grad)):
            raise NonFiniteError(f"non-finite gradient for {name}")
    for (rows, grad) in (grads.entity_rows, grads.item_rows):
        if not np.all(np.isfinite(grad)):
            raise NonFiniteError(f"non-finite gradient for embedding rows {rows[:5]}")

    params = dict(model.mlp_params())
    for name, grad in grads.named():
        if name not in state.m:
            state.m[name] = np.zeros_like(params[name])
            state.v[name] = np.zeros_like(params[name])
            state.step[name] = 0
        state.step[name] += 1
        adam_update(params[name], grad, state.m[name], state.v[name],
                    state.step[name], lr)

    for name, table, (rows, grad) in (("entity_emb", model.entity_emb, grads.entity_rows),
                                      ("item_emb", model.item_emb, grads.item_rows)):
        if name not in state.m:
            state.m[name] = np.zeros_like(table)
            state.v[name] = np.zeros_like(table)
            state.step[name] = 0
        if len(rows) == 0:
            continue
        state.step[name] += 1
        # fancy indexing copies, so update slices and write them back
        p_rows = table[rows]
        m_rows = state.m[name][rows]
        v_rows = state.v[name][rows]
        adam_update(p_rows, grad, m_rows, v_rows, state.step[name], lr)
        table[rows] = p_rows
        state.m[name][rows] = m_rows
        state.v[name][rows] = v_rows
    return model


def score_pairs(model: HcfModel, u, i) -> np.ndarray:
    """Eval-mode scores for index arrays u, i."""
    u = np.asarray(u, dtype=np.int64)
    out = np.empty(len(u))
    chunk = 65536
    for lo in range(0, len(u), chunk):
        batch = TrainingBatch(u[lo:lo + chunk], np.asarray(i)[lo:lo + chunk],
                              np.zeros(min(chunk, len(u) - lo)))
        out[lo:lo + chunk], _ = forward(model, batch, train_mode=False)
    return out


def score_all(model: HcfModel, entity_indices=None, item_indices=None) -> np.ndarray:
    """Dense eval-mode score matrix over the index cross product."""
    ents = np.arange(model.m) if entity_indices is None else np.asarray(entity_indices)
    items = np.arange(model.n) if item_indices is None else np.asarray(item_indices)
    out = np.empty((len(ents), len(items)))
    for r, u in enumerate(ents):
        out[r] = score_pairs(model, np.full(len(items), u), items)
    return out


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_pr_auc: float | None
    note: str = ""

    def to_dict(self) -> dict:
        return {"epoch": self.epoch, "train_loss": self.train_loss,
                "val_pr_auc": self.val_pr_auc, "note": self.note}


def train(model: HcfModel, train_matrix: InteractionMatrix,
          val_matrix: InteractionMatrix, full_matrix: InteractionMatrix,
          cfg: HcfConfig | None = None):
    """Fit on the train split; returns (best-validation snapshot, history).

    Each epoch reshuffles the positives, resamples neg_ratio uniform
    negatives per positive from pairs unobserved anywhere in the full
    matrix, and runs batched forward/backward/Adam. Training stops early
    after `patience` epochs without validation PR-AUC improvement. A
    non-finite loss aborts and returns the last finite snapshot.
    """
    from .evaluation import build_eval_pairs, pr_auc  # metric layer; no cycle at import time

    cfg = model.config if cfg is None else cfg
    pos_u, pos_i = train_matrix.pair_arrays()
    if len(pos_u) == 0:
        raise HcfError("train split has no positive pairs")

    val_pairs = None
    if val_matrix.pairs:
        vu, vi, vy = build_eval_pairs(val_matrix, full_matrix, cfg.neg_ratio,
                                      seed=cfg.seed, label="val-pairs")
        val_pairs = (vu, vi, vy)

    def validate(mdl):
        if val_pairs is None:
            return None
        scores = score_pairs(mdl, val_pairs[0], val_pairs[1])
        return pr_auc(scores, val_pairs[2])

    history = []
    best = model.snapshot()
    best_auc = -np.inf
    stale = 0
    n_pos = len(pos_u)
    for epoch in range(cfg.epochs):
        rng = make_rng(cfg.seed, "train-epoch", epoch)
        neg_u, neg_i = sample_unobserved(full_matrix, n_pos * cfg.neg_ratio, rng)
        u_all = np.concatenate([pos_u, neg_u])
        i_all = np.concatenate([pos_i, neg_i])
        y_all = np.concatenate([np.ones(n_pos), np.zeros(len(neg_u))])
        perm = rng.permutation(len(u_all))
        u_all, i_all, y_all = u_all[perm], i_all[perm], y_all[perm]

        total_loss, total_count = 0.0, 0
        aborted = False
        for lo in range(0, len(u_all), cfg.batch_size):
            hi = min(lo + cfg.batch_size, len(u_all))
            batch = make_batch(u_all[lo:hi], i_all[lo:hi], y_all[lo:hi],
                               cfg, train_mode=True, rng=rng)
            scores, cache = forward(model, batch, train_mode=True)
            loss = float(np.mean(huber_loss(batch.y, scores, cfg.delta)))
            if cfg.l2 > 0:
                loss += cfg.l2 * _reg_term(model, batch)
            if not np.isfinite(loss):
                aborted = True
                break
            total_loss += loss * len(batch)
            total_count += len(batch)
            grads = backward(model, batch, cache)
            try:
                adam_step(model, grads)
            except NonFiniteError:
                aborted = True
                break
            if not model.all_finite():
                aborted = True
                break
        if aborted:
            log.warning("training aborted at epoch %d: non-finite loss/params", epoch)
            history.append(EpochRecord(epoch, float("nan"), None, note="aborted"))
            break

        epoch_loss = total_loss / total_count
        val_auc = validate(model)
        history.append(EpochRecord(epoch, epoch_loss, val_auc))
        log.debug("epoch %d: train_loss=%.6f val_pr_auc=%s", epoch, epoch_loss, val_auc)

        metric = val_auc if val_auc is not None else -epoch_loss
        if metric > best_auc:
            best_auc = metric
            best = model.snapshot()
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    return best, history


def save_checkpoint(model: HcfModel, path, include_adam: bool = False) -> None:
    """Versioned JSON container; tensors stored as little-endian float32."""
    def pack(a):
        arr = np.asarray(a, dtype="<f4")
        return {"shape": list(arr.shape),
                "data": base64.b64encode(arr.tobytes()).decode("ascii")}

    tensors = {"entity_emb": pack(model.entity_emb), "item_emb": pack(model.item_emb)}
    for name, arr in model.mlp_params():
        tensors[name] = pack(arr)
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": _config_dict(model.config),
        "entity_ids": list(model.entity_ids),
        "item_ids": list(model.item_ids),
        "tensors": tensors,
    }
    if include_adam:
        doc["adam"] = {
            "step": dict(model.adam.step),
            "m": {k: pack(v) for k, v in model.adam.m.items()},
            "v": {k: pack(v) for k, v in model.adam.v.items()},
        }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def _config_dict(cfg: HcfConfig) -> dict:
    return {"d": cfg.d, "hidden": list(cfg.hidden), "dropout": list(cfg.dropout),
            "delta": cfg.delta, "l2": cfg.l2, "lr": cfg.lr,
            "batch_size": cfg.batch_size, "epochs": cfg.epochs,
            "neg_ratio": cfg.neg_ratio, "patience": cfg.patience,
            "seed": cfg.seed, "init_mode": cfg.init_mode,
            "project_pretrained": cfg.project_pretrained}


def load_checkpoint(path) -> HcfModel:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise HcfError(f"{path}: not a model checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise HcfError(f"{path}: unsupported checkpoint version {doc.get('version')}")

    def unpack(entry):
        arr = np.frombuffer(base64.b64decode(entry["data"]), dtype="<f4")
        return arr.reshape(entry["shape"]).astype(np.float64)

    c = doc["config"]
    cfg = HcfConfig(d=c["d"], hidden=tuple(c["hidden"]), dropout=tuple(c["dropout"]),
                    delta=c["delta"], l2=c["l2"], lr=c["lr"],
                    batch_size=c["batch_size"], epochs=c["epochs"],
                    neg_ratio=c["neg_ratio"], patience=c["patience"], seed=c["seed"],
                    init_mode=c["init_mode"],
                    project_pretrained=c["project_pretrained"])
    t = doc["tensors"]
    n_layers = len(cfg.hidden)
    model = HcfModel(
        config=cfg,
        entity_ids=tuple(doc["entity_ids"]),
        item_ids=tuple(doc["item_ids"]),
        entity_emb=unpack(t["entity_emb"]),
        item_emb=unpack(t["item_emb"]),
        weights=[unpack(t[f"W{k}"]) for k in range(n_layers)],
        biases=[unpack(t[f"b{k}"]) for k in range(n_layers)],
        out_w=unpack(t["out_w"]),
        out_b=unpack(t["out_b"]).reshape(()),
    )
    if "adam" in doc:
        model.adam = AdamState(
            m={k: unpack(v) for k, v in doc["adam"]["m"].items()},
            v={k: unpack(v) for k, v in doc["adam"]["v"].items()},
            step={k: int(v) for k, v in doc["adam"]["step"].items()},
        )
    return model


def export_entity_embeddings(model: HcfModel) -> EmbeddingSet:
    """Fine-tuned entity table as an EmbeddingSet (HCFE-exportable)."""
    rows = {eid: model.entity_emb[k].copy() for k, eid in enumerate(model.entity_ids)}
    return EmbeddingSet(model.config.d, rows)
