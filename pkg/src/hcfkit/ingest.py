"""File ingestion and the occurrence-density item filter.

Interactions come as UTF-8 text, one ``entity_id,item_id`` pair per line
(`#` comments and blank lines ignored, no header). Corpus files are
JSON-lines with string fields ``id`` and ``text``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .core import HcfError, InteractionMatrix


@dataclass(frozen=True)
class DensityFilterConfig:
    """Inclusive bounds on the fraction of entities that hold an item."""

    rho_min: float = 0.1
    rho_max: float = 0.85

    def __post_init__(self):
        if not (0.0 <= self.rho_min < self.rho_max <= 1.0):
            raise HcfError("density bounds must satisfy 0 <= rho_min < rho_max <= 1")


@dataclass(frozen=True)
class CorpusRecord:
    entity_id: str
    text: str


@dataclass
class LoadReport:
    """Bookkeeping from a parse: duplicate collapses and coverage notes."""

    duplicates: int = 0
    empty_text_ids: list = field(default_factory=list)
    missing_text_ids: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"duplicates": self.duplicates,
                "empty_text_ids": list(self.empty_text_ids),
                "missing_text_ids": list(self.missing_text_ids)}


@dataclass
class FilterReport:
    kept: list
    dropped: list  # [{"id": ..., "rho": ..., "reason": "too_rare"|"too_common"}]

    def to_dict(self) -> dict:
        return {"kept": list(self.kept), "dropped": [dict(d) for d in self.dropped]}


def load_interactions(path) -> tuple:
    """Parse an interactions file into a matrix plus a LoadReport.

    Ids are mapped to dense indices in file order; duplicate pairs are
    collapsed and counted in the report.
    """
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    entity_ids, item_ids = [], []
    e_index, i_index = {}, {}
    pairs = set()
    duplicates = 0
    seen_data = False
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = [f.strip() for f in line.split(",")]
        if len(fields) != 2 or not fields[0] or not fields[1]:
            raise HcfError(f"{path}:{lineno}: expected 'entity_id,item_id', got {raw!r}")
        seen_data = True
        e, i = fields
        if e not in e_index:
            e_index[e] = len(entity_ids)
            entity_ids.append(e)
        if i not in i_index:
            i_index[i] = len(item_ids)
            item_ids.append(i)
        pair = (e_index[e], i_index[i])
        if pair in pairs:
            duplicates += 1
        else:
            pairs.add(pair)
    if not seen_data:
        raise HcfError(f"{path}: no interaction pairs found")
    matrix = InteractionMatrix(tuple(entity_ids), tuple(item_ids), frozenset(pairs))
    return matrix, LoadReport(duplicates=duplicates)


def load_corpus(path) -> tuple:
    """Parse a JSON-lines corpus into records plus a LoadReport."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    records = []
    seen = set()
    report = LoadReport()
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise HcfError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
        if not isinstance(obj, dict) or "id" not in obj or "text" not in obj:
            raise HcfError(f"{path}:{lineno}: expected object with 'id' and 'text'")
        eid, text = str(obj["id"]), str(obj["text"])
        if eid in seen:
            raise HcfError(f"{path}:{lineno}: duplicate corpus id {eid!r}")
        seen.add(eid)
        if not text.strip():
            report.empty_text_ids.append(eid)
        records.append(CorpusRecord(eid, text))
    if not records:
        raise HcfError(f"{path}: corpus is empty")
    return records, report


def align_corpus(records, matrix: InteractionMatrix) -> tuple:
    """One record per matrix entity, in matrix order.

    Entities absent from the corpus get empty descriptions and are listed
    in the report; corpus-only records are dropped.
    """
    by_id = {r.entity_id: r for r in records}
    report = LoadReport()
    aligned = []
    for eid in matrix.entity_ids:
        rec = by_id.get(eid)
        if rec is None:
            report.missing_text_ids.append(eid)
            rec = CorpusRecord(eid, "")
        if not rec.text.strip():
            report.empty_text_ids.append(eid)
        aligned.append(rec)
    return aligned, report


def occurrence_density(matrix: InteractionMatrix, item_id: str) -> float:
    """Fraction of entities holding ``item_id``, in [0, 1]."""
    idx = matrix.item_index.get(item_id)
    if idx is None:
        raise HcfError(f"unknown item {item_id!r}")
    count = sum(1 for _, i in matrix.pairs if i == idx)
    return count / matrix.m


def filter_items(matrix: InteractionMatrix, cfg: DensityFilterConfig) -> tuple:
    """Keep exactly the items with rho_min <= density <= rho_max.

    Both bounds are inclusive. Kept item indices are re-densified in the
    original item order; entities are always retained, even when the
    filter leaves them with zero items. Applied before any split.
    """
    counts = matrix.item_counts()
    rho = counts / matrix.m
    kept, dropped = [], []
    keep_old = []
    for idx, item_id in enumerate(matrix.item_ids):
        r = float(rho[idx])
        if cfg.rho_min <= r <= cfg.rho_max:
            kept.append(item_id)
            keep_old.append(idx)
        else:
            reason = "too_rare" if r < cfg.rho_min else "too_common"
            dropped.append({"id": item_id, "rho": r, "reason": reason})
    if not kept:
        raise HcfError("empty matrix after density filter")
    remap = {old: new for new, old in enumerate(keep_old)}
    pairs = frozenset((u, remap[i]) for u, i in matrix.pairs if i in remap)
    out = InteractionMatrix(matrix.entity_ids, tuple(kept), pairs)
    return out, FilterReport(kept=kept, dropped=dropped)
