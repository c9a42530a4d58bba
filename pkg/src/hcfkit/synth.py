"""Synthetic dataset generator with planted latent-topic structure.

Entities get a topic mixture theta and items a topic affinity phi (both
seeded Dirichlet draws); an interaction fires with probability
sigmoid(sharpness * (theta . phi - offset)), then labels flip at the
noise rate. Entity and item texts draw their tokens from per-topic
vocabularies in proportion to the same mixtures, so the text carries the
same latent signal as the interactions. Ground truth (mixtures and block
labels) is written alongside for validation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import HcfError, InteractionMatrix
from .dcf import sigmoid
from .rng import make_rng


@dataclass(frozen=True)
class SynthSpec:
    m: int = 200
    n: int = 100
    k_topics: int = 6
    vocab_per_topic: int = 40
    doc_len: int = 60
    item_doc_len: int = 30
    sharpness: float = 10.0
    offset: float = 0.3
    noise: float = 0.05
    alpha_entity: float = 0.35
    alpha_item: float = 0.25
    seed: int = 0

    def __post_init__(self):
        if min(self.m, self.n, self.k_topics, self.vocab_per_topic,
               self.doc_len, self.item_doc_len) < 1:
            raise HcfError("sizes must be positive")
        if not (0.0 <= self.noise < 1.0):
            raise HcfError("noise rate must be in [0, 1)")
        if self.sharpness <= 0 or self.alpha_entity <= 0 or self.alpha_item <= 0:
            raise HcfError("sharpness and Dirichlet alphas must be positive")


@dataclass
class SynthData:
    spec: SynthSpec
    matrix: InteractionMatrix
    entity_texts: dict   # id -> text
    item_texts: dict     # id -> text
    theta: np.ndarray    # (m, k)
    phi: np.ndarray      # (n, k)
    entity_blocks: np.ndarray
    item_topics: np.ndarray


def _topic_word(topic: int, word: int) -> str:
    return f"t{topic:02d}w{word:03d}"


def _sample_text(mixture: np.ndarray, vocab_per_topic: int, length: int, rng) -> str:
    counts = rng.multinomial(length, mixture / mixture.sum())
    tokens = []
    for topic, c in enumerate(counts):
        if c:
            words = rng.integers(0, vocab_per_topic, size=c)
            tokens.extend(_topic_word(topic, w) for w in words)
    order = rng.permutation(len(tokens))
    return " ".join(tokens[k] for k in order)


def generate(spec: SynthSpec) -> SynthData:
    k = spec.k_topics
    theta = make_rng(spec.seed, "theta").dirichlet(
        np.full(k, spec.alpha_entity), size=spec.m)
    phi = make_rng(spec.seed, "phi").dirichlet(
        np.full(k, spec.alpha_item), size=spec.n)
    probs = sigmoid(spec.sharpness * (theta @ phi.T - spec.offset))
    base = make_rng(spec.seed, "draw").random((spec.m, spec.n)) < probs
    flips = make_rng(spec.seed, "noise").random((spec.m, spec.n)) < spec.noise
    observed = base ^ flips

    entity_ids = tuple(f"c{u:05d}" for u in range(spec.m))
    item_ids = tuple(f"p{i:05d}" for i in range(spec.n))
    pairs = frozenset((int(u), int(i)) for u, i in zip(*np.nonzero(observed)))
    matrix = InteractionMatrix(entity_ids, item_ids, pairs)

    trng = make_rng(spec.seed, "entity-text")
    entity_texts = {entity_ids[u]: _sample_text(theta[u], spec.vocab_per_topic,
                                                spec.doc_len, trng)
                    for u in range(spec.m)}
    irng = make_rng(spec.seed, "item-text")
    item_texts = {item_ids[i]: _sample_text(phi[i], spec.vocab_per_topic,
                                            spec.item_doc_len, irng)
                  for i in range(spec.n)}
    return SynthData(spec, matrix, entity_texts, item_texts, theta, phi,
                     theta.argmax(axis=1), phi.argmax(axis=1))


def expected_density(spec: SynthSpec, samples: int = 200_000, seed: int = 987) -> float:
    """Monte-Carlo estimate of the mean interaction probability under the
    sampler, including the noise flips. Independent of generate()."""
    rng = make_rng(seed, "density-oracle")
    th = rng.dirichlet(np.full(spec.k_topics, spec.alpha_entity), size=samples)
    ph = rng.dirichlet(np.full(spec.k_topics, spec.alpha_item), size=samples)
    p = sigmoid(spec.sharpness * (np.einsum("sk,sk->s", th, ph) - spec.offset))
    return float(np.mean(p * (1 - spec.noise) + (1 - p) * spec.noise))


def write_dataset(data: SynthData, interactions_path, corpus_path,
                  items_path, truth_path) -> dict:
    """Write the four artifact files; returns summary stats."""
    lines = [f"{data.matrix.entity_ids[u]},{data.matrix.item_ids[i]}"
             for u, i in data.matrix.pairs_sorted()]
    Path(interactions_path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    with open(corpus_path, "w", encoding="utf-8") as fh:
        for eid in data.matrix.entity_ids:
            fh.write(json.dumps({"id": eid, "text": data.entity_texts[eid]}) + "\n")
    with open(items_path, "w", encoding="utf-8") as fh:
        for iid in data.matrix.item_ids:
            fh.write(json.dumps({"id": iid, "text": data.item_texts[iid]}) + "\n")

    truth = {
        "entities": [{"id": eid, "theta": [round(float(x), 6) for x in data.theta[u]],
                      "block": int(data.entity_blocks[u])}
                     for u, eid in enumerate(data.matrix.entity_ids)],
        "items": [{"id": iid, "phi": [round(float(x), 6) for x in data.phi[i]],
                   "topic": int(data.item_topics[i])}
                  for i, iid in enumerate(data.matrix.item_ids)],
    }
    Path(truth_path).write_text(json.dumps(truth, sort_keys=True), encoding="utf-8")

    density = len(data.matrix.pairs) / (data.matrix.m * data.matrix.n)
    return {"m": data.matrix.m, "n": data.matrix.n,
            "positives": len(data.matrix.pairs), "density": density}
