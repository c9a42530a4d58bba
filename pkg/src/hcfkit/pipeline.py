"""Command execution: each operator command resolves its inputs from the
run config, recomputes its (seeded, deterministic) pipeline prefix, and
writes artifacts under ``out/<run-name>/``:

    out/<run-name>/
      manifest.json     command log: config hash, input digests, versions, timings
      data/             synthesized inputs and stage-1 embeddings
      reports/          JSON + text reports (floats fixed to 6 significant digits)
      checkpoints/      model checkpoint and fine-tuned embedding export
      graphs/           community graph exports (JSON + DOT)

Reports are byte-identical across runs with identical config and seed.
"""

from __future__ import annotations

import hashlib
import json
import logging
import platform
import time
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import BpdmConfig
from .community import (AbsoluteThreshold, PercentileThreshold, build_graph,
                        community_top_items, girvan_newman, graph_to_dot,
                        graph_to_json, top_neighbors)
from .config import RunConfig
from .core import EmbeddingSet, HcfError, SplitSpec, split_interactions
from .dcf import (HcfConfig, export_entity_embeddings, init_model,
                  load_checkpoint, save_checkpoint, score_pairs, train)
from .evaluation import (MODEL_KINDS, MODEL_LABELS, AblationInputs,
                         AblationSpec, Dataset, HarnessConfig, ablation_text,
                         comparison_text, evaluate_scorer, fit_scorer,
                         run_ablation)
from .ingest import (DensityFilterConfig, align_corpus, filter_items,
                     load_corpus, load_interactions)
from .rng import make_rng
from .synth import SynthSpec, generate, write_dataset
from .textembed import (ExternalFile, HashedBagOfWords, embed_corpus,
                        load_embedding_file, write_embedding_file)

log = logging.getLogger(__name__)


class MissingInputError(HcfError):
    """A required input file or trained model is absent (CLI exit code 2)."""


def round_floats(obj, sig: int = 6):
    """Recursively fix floats to ``sig`` significant digits for stable output."""
    if isinstance(obj, float):
        return float(f"{obj:.{sig}g}") if np.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: round_floats(v, sig) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round_floats(v, sig) for v in obj]
    return obj


def write_json_report(path, obj) -> None:
    text = json.dumps(round_floats(obj), sort_keys=True, indent=2, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


class RunDir:
    def __init__(self, out: str, run_name: str):
        self.root = Path(out) / run_name
        self.data = self.root / "data"
        self.reports = self.root / "reports"
        self.checkpoints = self.root / "checkpoints"
        self.graphs = self.root / "graphs"
        for p in (self.root, self.data, self.reports, self.checkpoints, self.graphs):
            p.mkdir(parents=True, exist_ok=True)

    def rel(self, path) -> str:
        return str(Path(path).relative_to(self.root))


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _append_manifest(run: RunDir, command: str, cfg: RunConfig,
                     inputs: dict, outputs: list, seconds: float) -> dict:
    entry = {
        "command": command,
        "config_hash": cfg.config_hash(),
        "config": cfg.model_dump(mode="json"),
        "inputs": {str(p): _sha256(p) for p in inputs.values() if p and Path(p).exists()},
        "outputs": sorted(run.rel(p) for p in outputs),
        "versions": {"hcfkit": __version__, "python": platform.python_version(),
                     "numpy": np.__version__},
        "timing_seconds": round(seconds, 3),
    }
    manifest_path = run.root / "manifest.json"
    doc = {"runs": []}
    if manifest_path.exists():
        doc = json.loads(manifest_path.read_text(encoding="utf-8"))
    doc["runs"].append(entry)
    manifest_path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return entry


def _resolve(cfg_path, default: Path, kind: str) -> Path:
    path = Path(cfg_path) if cfg_path else default
    if not path.exists():
        raise MissingInputError(f"{kind} not found: {path}")
    return path


def _interactions_path(cfg: RunConfig, run: RunDir) -> Path:
    return _resolve(cfg.paths.interactions, run.data / "interactions.txt",
                    "interactions file")


def _corpus_path(cfg: RunConfig, run: RunDir) -> Path:
    return _resolve(cfg.paths.corpus, run.data / "corpus.jsonl", "corpus file")


def _filtered_matrix(cfg: RunConfig, run: RunDir):
    path = _interactions_path(cfg, run)
    matrix, load_report = load_interactions(path)
    fcfg = DensityFilterConfig(cfg.filter.rho_min, cfg.filter.rho_max)
    filtered, filter_report = filter_items(matrix, fcfg)
    return path, matrix, filtered, load_report, filter_report


def _stage1_embeddings(cfg: RunConfig, run: RunDir, filtered):
    """Stage-1 embedding set aligned to the matrix entities, plus reports."""
    if cfg.embed.provider == "external":
        path = _resolve(cfg.paths.embeddings, run.data / "stage1.hcfe",
                        "embeddings file")
        corpus_file = _corpus_path(cfg, run)
        records, _ = load_corpus(corpus_file)
        aligned, coverage = align_corpus(records, filtered)
        embeddings = embed_corpus(aligned, ExternalFile(str(path)))
        return embeddings, coverage, {"provider": "external", "path": str(path)}
    if cfg.embed.provider != "hashed_bow":
        raise HcfError(f"unknown embedding provider {cfg.embed.provider!r}")
    corpus_file = _corpus_path(cfg, run)
    records, _ = load_corpus(corpus_file)
    aligned, coverage = align_corpus(records, filtered)
    embeddings = embed_corpus(aligned, HashedBagOfWords(cfg.embed.dim, cfg.seed))
    return embeddings, coverage, {"provider": "hashed_bow", "dim": cfg.embed.dim}


def _split(cfg: RunConfig, filtered):
    spec = SplitSpec(cfg.split.train, cfg.split.val, cfg.split.test, seed=cfg.seed)
    return split_interactions(filtered, spec)


def _hcf_config(cfg: RunConfig, init_mode: str | None = None) -> HcfConfig:
    d = cfg.dcf
    return HcfConfig(d=d.d, hidden=tuple(d.hidden), dropout=tuple(d.dropout),
                     delta=d.delta, l2=d.l2, lr=d.lr, batch_size=d.batch_size,
                     epochs=d.epochs, neg_ratio=d.neg_ratio, patience=d.patience,
                     seed=cfg.seed,
                     init_mode=init_mode if init_mode else d.init_mode)


def _bpdm_config(cfg: RunConfig) -> BpdmConfig:
    b = cfg.bpdm
    return BpdmConfig(k=b.k, lr=b.lr, reg=b.reg, epochs=b.epochs,
                      batch_size=b.batch_size, seed=cfg.seed)


def _harness(cfg: RunConfig) -> HarnessConfig:
    return HarnessConfig(hcf=_hcf_config(cfg), bpdm=_bpdm_config(cfg),
                         eval_neg_ratio=cfg.eval.neg_ratio,
                         threshold_policy=cfg.eval.threshold_policy,
                         memcf_k_neighbors=cfg.memcf.k_neighbors,
                         embed_dim=cfg.embed.dim,
                         full_negatives=cfg.eval.full_negatives,
                         fixed_threshold=cfg.eval.fixed_threshold, seed=cfg.seed)


def run_synth(cfg: RunConfig, out: str) -> dict:
    t0 = time.perf_counter()
    run = RunDir(out, cfg.run_name)
    s = cfg.synth
    spec = SynthSpec(m=s.m, n=s.n, k_topics=s.k_topics,
                     vocab_per_topic=s.vocab_per_topic, doc_len=s.doc_len,
                     item_doc_len=s.item_doc_len, sharpness=s.sharpness,
                     offset=s.offset, noise=s.noise, alpha_entity=s.alpha_entity,
                     alpha_item=s.alpha_item, seed=cfg.seed)
    data = generate(spec)
    paths = [run.data / "interactions.txt", run.data / "corpus.jsonl",
             run.data / "items.jsonl", run.data / "ground_truth.json"]
    summary = write_dataset(data, *paths)
    _append_manifest(run, "synth", cfg, {}, paths, time.perf_counter() - t0)
    return {"summary": summary, "outputs": [run.rel(p) for p in paths],
            "config_hash": cfg.config_hash()}


def run_filter(cfg: RunConfig, out: str) -> dict:
    t0 = time.perf_counter()
    run = RunDir(out, cfg.run_name)
    path, matrix, filtered, load_report, filter_report = _filtered_matrix(cfg, run)
    report_path = run.reports / "filter_report.json"
    write_json_report(report_path, filter_report.to_dict())
    _append_manifest(run, "filter", cfg, {"interactions": path}, [report_path],
                     time.perf_counter() - t0)
    return {"summary": {"kept": filtered.n, "dropped": len(filter_report.dropped),
                        "positives": len(filtered.pairs),
                        "input_items": matrix.n,
                        "duplicates_collapsed": load_report.duplicates},
            "outputs": [run.rel(report_path)], "config_hash": cfg.config_hash()}


def run_embed(cfg: RunConfig, out: str) -> dict:
    t0 = time.perf_counter()
    run = RunDir(out, cfg.run_name)
    path, _, filtered, _, _ = _filtered_matrix(cfg, run)
    embeddings, coverage, meta = _stage1_embeddings(cfg, run, filtered)
    hcfe_path = run.data / "stage1.hcfe"
    write_embedding_file(embeddings, hcfe_path)
    report_path = run.reports / "embed_report.json"
    write_json_report(report_path, {
        "provider": meta, "dim": embeddings.dim, "rows": len(embeddings.rows),
        "zero_vector_ids": embeddings.zero_ids(),
        "coverage": coverage.to_dict(),
    })
    _append_manifest(run, "embed", cfg,
                     {"interactions": path, "corpus": _corpus_path(cfg, run)},
                     [hcfe_path, report_path], time.perf_counter() - t0)
    return {"summary": {"dim": embeddings.dim, "rows": len(embeddings.rows),
                        "zero_vectors": len(embeddings.zero_ids())},
            "outputs": [run.rel(hcfe_path), run.rel(report_path)],
            "config_hash": cfg.config_hash()}


def run_train(cfg: RunConfig, out: str) -> dict:
    t0 = time.perf_counter()
    run = RunDir(out, cfg.run_name)
    path, _, filtered, _, _ = _filtered_matrix(cfg, run)
    tr, va, te = _split(cfg, filtered)
    hcf_cfg = _hcf_config(cfg)
    stage1 = None
    if hcf_cfg.init_mode == "pretrained":
        stage1, _, _ = _stage1_embeddings(cfg, run, filtered)
    model = init_model(hcf_cfg, filtered.entity_ids, filtered.item_ids, stage1)
    model, history = train(model, tr, va, filtered)

    ckpt_path = run.checkpoints / "hcf-model.json"
    save_checkpoint(model, ckpt_path)
    emb_path = run.checkpoints / "entity_embeddings.hcfe"
    write_embedding_file(export_entity_embeddings(model), emb_path)
    history_path = run.reports / "train_history.json"
    best_auc = max((h.val_pr_auc for h in history if h.val_pr_auc is not None),
                   default=None)
    write_json_report(history_path, {
        "epochs_run": len(history),
        "best_val_pr_auc": best_auc,
        "history": [h.to_dict() for h in history],
        "splits": {"train": len(tr.pairs), "val": len(va.pairs), "test": len(te.pairs)},
    })
    outputs = [ckpt_path, emb_path, history_path]
    _append_manifest(run, "train", cfg, {"interactions": path}, outputs,
                     time.perf_counter() - t0)
    return {"summary": {"epochs_run": len(history), "best_val_pr_auc": best_auc,
                        "checkpoint": run.rel(ckpt_path)},
            "outputs": [run.rel(p) for p in outputs],
            "config_hash": cfg.config_hash()}


def run_eval(cfg: RunConfig, out: str) -> dict:
    t0 = time.perf_counter()
    run = RunDir(out, cfg.run_name)
    path, _, filtered, _, _ = _filtered_matrix(cfg, run)
    tr, va, te = _split(cfg, filtered)
    stage1 = None
    if any(k in cfg.eval.models for k in ("stage1", "hcf")):
        stage1, _, _ = _stage1_embeddings(cfg, run, filtered)
    dataset = Dataset(filtered, tr, va, te, stage1)
    hc = _harness(cfg)

    reports = []
    for kind in cfg.eval.models:
        if kind not in MODEL_KINDS:
            raise HcfError(f"unknown model kind {kind!r}")
        if kind == "hcf":
            ckpt = Path(cfg.paths.checkpoint) if cfg.paths.checkpoint \
                else run.checkpoints / "hcf-model.json"
            if not ckpt.exists():
                raise MissingInputError(f"model not found: {ckpt} (run `train` first)")
            model = load_checkpoint(ckpt)
            if (model.entity_ids != filtered.entity_ids
                    or model.item_ids != filtered.item_ids):
                raise HcfError(f"checkpoint {ckpt} was trained on different "
                               "entities/items than this config produces; "
                               "re-run `train`")
            score_fn = (lambda mdl: lambda u, i: score_pairs(mdl, u, i))(model)
        else:
            score_fn = fit_scorer(kind, dataset, hc)
        reports.append(evaluate_scorer(score_fn, dataset, hc, MODEL_LABELS[kind]))

    json_path = run.reports / "comparison.json"
    write_json_report(json_path, {"reports": [r.to_dict() for r in reports]})
    text_path = run.reports / "comparison.txt"
    text_path.write_text(comparison_text(reports), encoding="utf-8")
    outputs = [json_path, text_path]
    _append_manifest(run, "eval", cfg, {"interactions": path}, outputs,
                     time.perf_counter() - t0)
    return {"summary": {r.model: {"pr_auc": round(r.pr_auc, 6),
                                  "roc_auc": round(r.roc_auc, 6)} for r in reports},
            "outputs": [run.rel(p) for p in outputs],
            "config_hash": cfg.config_hash()}


def run_ablate(cfg: RunConfig, out: str, jobs: int = 1) -> dict:
    t0 = time.perf_counter()
    run = RunDir(out, cfg.run_name)
    path, _, filtered, _, _ = _filtered_matrix(cfg, run)
    corpus_file = _corpus_path(cfg, run)
    records, _ = load_corpus(corpus_file)
    aligned, _ = align_corpus(records, filtered)
    items_file = Path(cfg.paths.items) if cfg.paths.items else run.data / "items.jsonl"
    item_texts = {}
    if items_file.exists():
        item_records, _ = load_corpus(items_file)
        item_texts = {r.entity_id: r.text for r in item_records}
    elif "cc_tech" in cfg.ablate.features:
        raise MissingInputError(f"item descriptions not found: {items_file} "
                                "(needed for the cc_tech feature set)")

    spec = AblationSpec(features=tuple(cfg.ablate.features),
                        caps=tuple(cfg.ablate.caps),
                        models=tuple(cfg.ablate.models),
                        seeds=tuple(cfg.ablate.seeds))
    inputs = AblationInputs(filtered, tuple(aligned), item_texts,
                            (cfg.split.train, cfg.split.val, cfg.split.test))
    table = run_ablation(spec, inputs, _harness(cfg), jobs=jobs)

    json_path = run.reports / "ablation.json"
    write_json_report(json_path, table)
    text_path = run.reports / "ablation.txt"
    text_path.write_text(ablation_text(table), encoding="utf-8")
    outputs = [json_path, text_path]
    _append_manifest(run, "ablate", cfg, {"interactions": path, "corpus": corpus_file},
                     outputs, time.perf_counter() - t0)
    return {"summary": {"cells": len(table["cells"])},
            "outputs": [run.rel(p) for p in outputs],
            "config_hash": cfg.config_hash()}


def _load_model(cfg: RunConfig, run: RunDir):
    ckpt = Path(cfg.paths.checkpoint) if cfg.paths.checkpoint \
        else run.checkpoints / "hcf-model.json"
    if not ckpt.exists():
        raise MissingInputError(f"model not found: {ckpt} (run `train` first)")
    return load_checkpoint(ckpt), ckpt


def run_communities(cfg: RunConfig, out: str) -> dict:
    t0 = time.perf_counter()
    run = RunDir(out, cfg.run_name)
    model, ckpt = _load_model(cfg, run)
    embeddings = export_entity_embeddings(model)
    if cfg.community.max_nodes and 0 < cfg.community.max_nodes < len(embeddings.rows):
        rng = make_rng(cfg.seed, "community-sample")
        ids = list(embeddings.rows)
        chosen = sorted(rng.choice(len(ids), size=cfg.community.max_nodes,
                                   replace=False).tolist())
        embeddings = EmbeddingSet(embeddings.dim,
                                  {ids[k]: embeddings.rows[ids[k]] for k in chosen})
    if cfg.community.threshold_kind == "percentile":
        threshold = PercentileThreshold(cfg.community.threshold_value)
    elif cfg.community.threshold_kind == "absolute":
        threshold = AbsoluteThreshold(cfg.community.threshold_value)
    else:
        raise HcfError(f"unknown threshold kind {cfg.community.threshold_kind!r}")

    graph = build_graph(embeddings, threshold)
    if graph.n_edges() == 0:
        raise HcfError("similarity graph has no edges; lower the threshold")
    result = girvan_newman(graph)
    top_items = community_top_items(result.best, model, cfg.community.top_items)

    graph_json = run.graphs / "graph.json"
    write_json_report(graph_json, graph_to_json(graph, result.best))
    dot_path = run.graphs / "graph.dot"
    dot_path.write_text(graph_to_dot(graph, result.best), encoding="utf-8")
    report_path = run.reports / "communities.json"
    write_json_report(report_path, {
        "n_nodes": len(graph.nodes), "n_edges": graph.n_edges(),
        "n_communities": len(result.best.communities),
        "modularity": result.best.modularity,
        "communities": [list(c) for c in result.best.communities],
        "top_items": {str(k): [{"item": iid, "score": s} for iid, s in v]
                      for k, v in top_items.items()},
        "removals": [list(e) for e in result.removals],
    })
    outputs = [graph_json, dot_path, report_path]
    _append_manifest(run, "communities", cfg, {"checkpoint": ckpt}, outputs,
                     time.perf_counter() - t0)
    return {"summary": {"n_communities": len(result.best.communities),
                        "modularity": round(result.best.modularity, 6)},
            "outputs": [run.rel(p) for p in outputs],
            "config_hash": cfg.config_hash()}


def run_neighbors(cfg: RunConfig, out: str, entity_id: str,
                  k: int | None = None) -> dict:
    t0 = time.perf_counter()
    run = RunDir(out, cfg.run_name)
    if cfg.paths.embeddings:
        source = Path(cfg.paths.embeddings)
        if not source.exists():
            raise MissingInputError(f"embeddings file not found: {source}")
        embeddings = load_embedding_file(source)
    else:
        model, source = _load_model(cfg, run)
        embeddings = export_entity_embeddings(model)
    k = cfg.community.neighbors_k if k is None else k
    ranked = top_neighbors(embeddings, entity_id, k)
    report_path = run.reports / f"neighbors_{entity_id}.json"
    write_json_report(report_path, {
        "entity": entity_id, "k": k,
        "neighbors": [{"id": nid, "similarity": s} for nid, s in ranked],
    })
    _append_manifest(run, "neighbors", cfg, {"source": source}, [report_path],
                     time.perf_counter() - t0)
    return {"summary": {"entity": entity_id,
                        "neighbors": [{"id": nid, "similarity": round(s, 6)}
                                      for nid, s in ranked]},
            "outputs": [run.rel(report_path)], "config_hash": cfg.config_hash()}
