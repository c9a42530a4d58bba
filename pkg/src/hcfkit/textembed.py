"""Stage-1 entity embeddings from text.

Two providers: an external HCFE file (typically the output of a
transformer-encoder exporter) joined on entity id, or a built-in hashed
bag-of-words baseline that is deterministic and vocabulary-free.

HCFE file format (bit-exact contract with the exporter):
  line 1:  ``HCFE <version:int> <dim:int>``
  rest:    ``<id>\\t<f_1> <f_2> ... <f_dim>`` with decimal float literals
UTF-8, LF line endings.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import EmbeddingSet, HcfError
from .rng import stable_bucket

log = logging.getLogger(__name__)

HCFE_VERSION = 1

_TOKEN_SPLIT = re.compile(r"[^0-9a-z]+")


@dataclass(frozen=True)
class HashedBagOfWords:
    """Built-in provider: seeded feature hashing with log-TF weights."""

    dim: int = 256
    seed: int = 0

    def __post_init__(self):
        if self.dim < 2:
            raise HcfError("hashed bag-of-words dim must be >= 2")


@dataclass(frozen=True)
class ExternalFile:
    """Provider backed by an HCFE file; joins on entity id."""

    path: str


def tokenize(text: str) -> list:
    """Lowercased tokens, split on non-alphanumeric; `#` comment lines dropped."""
    kept_lines = [ln for ln in text.splitlines() if not ln.lstrip().startswith("#")]
    return [t for t in _TOKEN_SPLIT.split("\n".join(kept_lines).lower()) if t]


def embed_corpus(corpus, kind) -> EmbeddingSet:
    """One vector per corpus record, keyed by entity id.

    Hashed mode: tokens hash to buckets, bucket counts pass through
    log(1+tf), nonzero vectors are L2-normalized. Empty texts yield zero
    vectors (flagged via warning); they are re-initialized downstream.
    External mode: every corpus id must be present in the file.
    """
    if not corpus:
        raise HcfError("corpus is empty")
    if isinstance(kind, ExternalFile):
        ext = load_embedding_file(kind.path)
        missing = [r.entity_id for r in corpus if r.entity_id not in ext.rows]
        if missing:
            shown = ", ".join(repr(e) for e in missing[:10])
            raise HcfError(f"embedding file {kind.path} is missing "
                           f"{len(missing)} corpus ids: {shown}")
        rows = {r.entity_id: ext.rows[r.entity_id] for r in corpus}
        return EmbeddingSet(ext.dim, rows)
    if not isinstance(kind, HashedBagOfWords):
        raise HcfError(f"unknown embedding provider {kind!r}")

    rows = {}
    empty = 0
    for rec in corpus:
        vec = np.zeros(kind.dim, dtype=np.float64)
        counts = {}
        for tok in tokenize(rec.text):
            b = stable_bucket(tok, kind.dim, kind.seed)
            counts[b] = counts.get(b, 0) + 1
        for b, tf in counts.items():
            vec[b] = np.log1p(tf)
        norm = np.linalg.norm(vec)
        if norm > 0:
            vec /= norm
        else:
            empty += 1
        rows[rec.entity_id] = vec
    if empty:
        log.warning("%d of %d corpus records produced zero vectors (empty text)",
                    empty, len(corpus))
    return EmbeddingSet(kind.dim, rows)


def load_embedding_file(path) -> EmbeddingSet:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise HcfError(f"{path}: empty embedding file")
    header = lines[0].split()
    if len(header) != 3 or header[0] != "HCFE":
        raise HcfError(f"{path}:1: expected header 'HCFE <version> <dim>', got {lines[0]!r}")
    try:
        version, dim = int(header[1]), int(header[2])
    except ValueError as exc:
        raise HcfError(f"{path}:1: non-integer version/dim in header") from exc
    if version != HCFE_VERSION:
        raise HcfError(f"{path}: unsupported HCFE version {version}")
    if dim < 1:
        raise HcfError(f"{path}: dim must be positive, got {dim}")
    rows = {}
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        if "\t" not in raw:
            raise HcfError(f"{path}:{lineno}: expected '<id>\\t<floats>'")
        eid, _, rest = raw.partition("\t")
        values = rest.split()
        if len(values) != dim:
            raise HcfError(f"{path}:{lineno}: expected {dim} values, got {len(values)}")
        try:
            vec = np.array([float(v) for v in values], dtype=np.float64)
        except ValueError as exc:
            raise HcfError(f"{path}:{lineno}: bad float literal") from exc
        if not np.all(np.isfinite(vec)):
            raise HcfError(f"{path}:{lineno}: non-finite value for id {eid!r}")
        if eid in rows:
            raise HcfError(f"{path}:{lineno}: duplicate id {eid!r}")
        rows[eid] = vec
    if not rows:
        raise HcfError(f"{path}: no vectors found")
    return EmbeddingSet(dim, rows)


def write_embedding_file(embeddings: EmbeddingSet, path) -> None:
    """Write HCFE v1. Values are stored at float32 precision."""
    out = [f"HCFE {HCFE_VERSION} {embeddings.dim}"]
    for eid, vec in embeddings.rows.items():
        vals = " ".join(_format_value(v) for v in vec)
        out.append(f"{eid}\t{vals}")
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8", newline="\n")


def _format_value(v: float) -> str:
    return np.format_float_positional(np.float32(v), unique=True, trim="0")
